//! Classical fourth-order Runge–Kutta for autonomous linear complex ODEs
//! `y' = f(y)`, sampled on an arbitrary increasing set of times.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ZERO};

/// Integrates from `times[0]` and returns `y` at every entry of `times`.
///
/// Each interval between consecutive samples is split into the smallest
/// number of equal steps not exceeding `dt_max`, so samples land exactly on
/// the requested times. `rhs(y, out)` must overwrite `out` with `f(y)`.
pub fn rk4_sampled<F>(y0: &[C64], times: &[f64], dt_max: f64, mut rhs: F) -> Result<Vec<Vec<C64>>>
where
    F: FnMut(&[C64], &mut [C64]),
{
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(Error::Validation(format!("time step must be positive, got {dt_max}")));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Validation("sample times must be non-decreasing".into()));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![ZERO; n];
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];

    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    out.push(y.clone());
    for w in times.windows(2) {
        let span = w[1] - w[0];
        if span > 0.0 {
            let steps = ((span / dt_max) - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                rhs(&y, &mut k1);
                axpy_into(&mut tmp, &y, &k1, 0.5 * h);
                rhs(&tmp, &mut k2);
                axpy_into(&mut tmp, &y, &k2, 0.5 * h);
                rhs(&tmp, &mut k3);
                axpy_into(&mut tmp, &y, &k3, h);
                rhs(&tmp, &mut k4);
                let w6 = h / 6.0;
                for i in 0..n {
                    y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w6;
                }
            }
        }
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("integration diverged before t = {}", w[1])));
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn axpy_into(dst: &mut [C64], y: &[C64], k: &[C64], a: f64) {
    for ((d, &yi), &ki) in dst.iter_mut().zip(y).zip(k) {
        *d = yi + ki * a;
    }
}

/// Sparse view of a matrix for repeated matrix–vector products.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn from_dense(m: &ComplexMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let z = m[(i, j)];
                if z != ZERO {
                    entries.push((i, j, z));
                }
            }
        }
        Self { dim: m.rows(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// out = scale · A · v
    pub fn apply_scaled(&self, v: &[C64], scale: C64, out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for &(i, j, a) in &self.entries {
            out[i] += a * v[j];
        }
        if scale != C64::new(1.0, 0.0) {
            out.iter_mut().for_each(|z| *z *= scale);
        }
    }
}

/// Propagates `i dψ/dt = H ψ` (H in fs⁻¹, possibly non-Hermitian) and
/// returns ψ at each sample time.
pub fn propagate_state(h: &ComplexMatrix, psi0: &[C64], times: &[f64], dt_max: f64) -> Result<Vec<Vec<C64>>> {
    if !h.is_square() || h.rows() != psi0.len() {
        return Err(Error::Shape(format!(
            "{}x{} Hamiltonian with state of length {}",
            h.rows(),
            h.cols(),
            psi0.len()
        )));
    }
    let op = SparseOperator::from_dense(h);
    let minus_i = C64::new(0.0, -1.0);
    rk4_sampled(psi0, times, dt_max, |y, out| op.apply_scaled(y, minus_i, out))
}
