//! Quantum Fisher information: symmetric logarithmic derivative, mixed- and
//! pure-state QFI, parameter derivatives of the three-level state, F(t)
//! series and the optimal measurement window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, inner, span_basis, ComplexMatrix, C64, HERMITIAN_TOL};
use crate::lindblad::{
    analytic_drho_dg, analytic_rho, build_hamiltonian, evolve_gksl_at, jump_operator,
    DensityMatrix, Parameter, ThreeLevelParams, TimeGrid, DEFAULT_DT_FS, F,
};

/// Eigenvalue pairs with λ_a + λ_b at or below this fraction of tr ρ are
/// excluded from the SLD and QFI sums.
pub const EIGEN_CUTOFF: f64 = 1e-12;

/// Relative central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Fraction of the peak QFI that delimits the default measurement window.
pub const DEFAULT_WINDOW_THRESHOLD: f64 = 0.7;

/// Tolerance on the normalisation of a pure state.
pub const PURE_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    Analytic,
    CentralDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDerivativeSpec {
    pub method: DerivativeMethod,
    /// Relative step for central differences.
    pub step: f64,
}

impl Default for ParamDerivativeSpec {
    fn default() -> Self {
        Self { method: DerivativeMethod::Analytic, step: DEFAULT_FD_STEP }
    }
}

impl ParamDerivativeSpec {
    pub fn central(step: f64) -> Result<Self> {
        let spec = Self { method: DerivativeMethod::CentralDifference, step };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.method == DerivativeMethod::CentralDifference && !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Validation(format!("finite-difference step must be positive, got {}", self.step)));
        }
        Ok(())
    }
}

/// Where ρ(t) comes from when differentiating.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSource {
    /// Closed-form resonant solution (probe starts in |f⟩, Δ = 0).
    Analytic,
    /// RK4 integration of the master equation from `rho0` with step `dt`.
    Integrator { rho0: DensityMatrix, dt: f64 },
}

/// F(t) on a time grid with its peak and measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub parameter: Parameter,
    pub peak_time: f64,
    pub peak_value: f64,
    pub window: (f64, f64),
}

impl QfiSeries {
    /// Builds a series and fills in the peak and the default window.
    pub fn from_values(times: Vec<f64>, values: Vec<f64>, parameter: Parameter) -> Result<Self> {
        Self::with_threshold(times, values, parameter, DEFAULT_WINDOW_THRESHOLD)
    }

    pub fn with_threshold(times: Vec<f64>, values: Vec<f64>, parameter: Parameter, threshold: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Shape(format!("{} times for {} values", times.len(), values.len())));
        }
        if times.is_empty() {
            return Err(Error::Validation("empty QFI series".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite QFI value {v}")));
        }
        let (peak_time, peak_value) = refine_peak(&times, &values);
        let mut series = Self { times, values, parameter, peak_time, peak_value, window: (peak_time, peak_time) };
        series.window = find_optimal_window(&series, threshold)?;
        Ok(series)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Grid maximum and the vertex of the parabola through it and its neighbours.
fn refine_peak(times: &[f64], values: &[f64]) -> (f64, f64) {
    let k = argmax(values);
    let peak_value = values[k];
    if k == 0 || k + 1 == values.len() {
        return (times[k], peak_value);
    }
    let (x0, x1, x2) = (times[k - 1], times[k], times[k + 1]);
    let (y0, y1, y2) = (values[k - 1], values[k], values[k + 1]);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) {
        return (x1, peak_value);
    }
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    (vertex.clamp(x0, x2), peak_value)
}

/// The maximal contiguous run of grid points around the maximum with
/// `F ≥ threshold · peak_value`, widened by one cell if the refined peak
/// falls just outside it.
pub fn find_optimal_window(series: &QfiSeries, threshold_fraction: f64) -> Result<(f64, f64)> {
    if series.times.is_empty() {
        return Err(Error::Validation("empty QFI series".into()));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::Validation(format!("threshold must lie in (0, 1), got {threshold_fraction}")));
    }
    let v = &series.values;
    let t = &series.times;
    let k = argmax(v);
    let level = threshold_fraction * series.peak_value;
    let mut lo = k;
    while lo > 0 && v[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < v.len() && v[hi + 1] >= level {
        hi += 1;
    }
    if series.peak_time < t[lo] && lo > 0 {
        lo -= 1;
    }
    if series.peak_time > t[hi] && hi + 1 < v.len() {
        hi += 1;
    }
    Ok((t[lo], t[hi]))
}

fn check_pair(rho: &ComplexMatrix, drho: &ComplexMatrix) -> Result<()> {
    if !rho.is_square() || drho.rows() != rho.rows() || drho.cols() != rho.cols() {
        return Err(Error::Shape(format!(
            "state is {}x{}, derivative is {}x{}",
            rho.rows(),
            rho.cols(),
            drho.rows(),
            drho.cols()
        )));
    }
    let defect = drho.hermiticity_defect();
    if defect > 1e-9 * drho.max_abs().max(1.0) {
        return Err(Error::Validation(format!("state derivative is not Hermitian (defect {defect:e})")));
    }
    Ok(())
}

/// ⟨λ_a|∂ρ|λ_b⟩ in the eigenbasis of ρ, plus the eigenvalues and the
/// absolute pair cutoff.
fn eigen_frame(rho: &ComplexMatrix, drho: &ComplexMatrix, tol: f64) -> Result<(Vec<f64>, ComplexMatrix, ComplexMatrix, f64)> {
    let eig = hermitian_eigen(&rho.hermitian_part(), HERMITIAN_TOL)?;
    let v = &eig.eigenvectors;
    let rotated = v.adjoint().matmul(&drho.hermitian_part())?.matmul(v)?;
    let cutoff = tol * rho.trace().re.abs();
    Ok((eig.eigenvalues, eig.eigenvectors, rotated, cutoff))
}

/// Symmetric logarithmic derivative L solving ∂ρ = ½(ρL + Lρ) on the
/// support of ρ; pairs with λ_a + λ_b ≤ tol·tr ρ are set to zero.
pub fn sld(rho: &DensityMatrix, drho: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    check_pair(rho.matrix(), drho)?;
    let (lambda, v, d, cutoff) = eigen_frame(rho.matrix(), drho, tol)?;
    let n = lambda.len();
    let mut l = ComplexMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let s = lambda[a] + lambda[b];
            if s > cutoff {
                l[(a, b)] = d[(a, b)] * (2.0 / s);
            }
        }
    }
    Ok(v.matmul(&l)?.matmul(&v.adjoint())?.hermitian_part())
}

/// F = Σ 2|⟨λ_a|∂ρ|λ_b⟩|² / (λ_a + λ_b) over pairs above the cutoff.
pub fn qfi_mixed(rho: &DensityMatrix, drho: &ComplexMatrix, tol: f64) -> Result<f64> {
    qfi_mixed_matrix(rho.matrix(), drho, tol)
}

/// [`qfi_mixed`] for a bare Hermitian, positive matrix that need not be
/// normalised; the cutoff scales with its trace.
pub fn qfi_mixed_matrix(rho: &ComplexMatrix, drho: &ComplexMatrix, tol: f64) -> Result<f64> {
    check_pair(rho, drho)?;
    let (lambda, _, d, cutoff) = eigen_frame(rho, drho, tol)?;
    let n = lambda.len();
    let mut f = 0.0;
    for a in 0..n {
        for b in 0..n {
            let s = lambda[a] + lambda[b];
            if s > cutoff {
                f += 2.0 * d[(a, b)].norm_sqr() / s;
            }
        }
    }
    Ok(f)
}

/// F = 4(⟨∂ψ|∂ψ⟩ − |⟨ψ|∂ψ⟩|²) for a normalised pure state.
pub fn qfi_pure(psi: &[C64], dpsi: &[C64]) -> Result<f64> {
    let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if (n2 - 1.0).abs() > PURE_NORM_TOL {
        return Err(Error::Validation(format!(
            "pure-state QFI needs a normalised state, got norm² = {n2}; use the mixed-state QFI for lossy states"
        )));
    }
    qfi_pure_unchecked(psi, dpsi)
}

/// The pure-state formula without the normalisation guard.
pub fn qfi_pure_unchecked(psi: &[C64], dpsi: &[C64]) -> Result<f64> {
    if psi.len() != dpsi.len() {
        return Err(Error::Shape(format!("state of length {} with derivative of length {}", psi.len(), dpsi.len())));
    }
    let dd = inner(dpsi, dpsi).re;
    let overlap = inner(psi, dpsi);
    Ok(4.0 * (dd - overlap.norm_sqr()))
}

/// Mixed-state QFI of `|ψ⟩⟨ψ| ⊕ (1 − ⟨ψ|ψ⟩)`, a decaying pure block plus a
/// sink level, with derivative built from `∂ψ`.
///
/// The state and its derivative both live in span{ψ, ∂ψ} ⊕ sink, so the
/// eigenproblem is solved there (at most 3×3) whatever the length of ψ.
pub fn qfi_lifted(psi: &[C64], dpsi: &[C64]) -> Result<f64> {
    if psi.len() != dpsi.len() {
        return Err(Error::Shape(format!("state of length {} with derivative of length {}", psi.len(), dpsi.len())));
    }
    let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if n2 > 1.0 + 1e-9 {
        return Err(Error::Validation(format!("state norm² {n2} exceeds 1")));
    }
    let basis = span_basis(&[psi, dpsi], 1e-14);
    let k = basis.len();
    let a: Vec<C64> = basis.iter().map(|q| inner(q, psi)).collect();
    let b: Vec<C64> = basis.iter().map(|q| inner(q, dpsi)).collect();
    let mut rho = ComplexMatrix::zeros(k + 1, k + 1);
    let mut drho = ComplexMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..k {
            rho[(i, j)] = a[i] * a[j].conj();
            drho[(i, j)] = b[i] * a[j].conj() + a[i] * b[j].conj();
        }
    }
    rho[(k, k)] = C64::new((1.0 - n2).max(0.0), 0.0);
    drho[(k, k)] = C64::new(-2.0 * inner(psi, dpsi).re, 0.0);
    qfi_mixed_matrix(&rho, &drho, EIGEN_CUTOFF)
}

/// Finite-difference displacement for parameter value `x`: relative when
/// `x ≠ 0`, otherwise relative to the model's characteristic rate.
pub(crate) fn fd_displacement(p: &ThreeLevelParams, x: f64, step: f64) -> f64 {
    if x != 0.0 {
        step * x.abs()
    } else {
        step * p.rate_scale()
    }
}

fn is_excited_f(rho0: &DensityMatrix) -> bool {
    rho0.dim() == 3 && *rho0 == DensityMatrix::excited_f()
}

/// ∂ρ(t)/∂x for the three-level model.
pub fn d_rho(p: &ThreeLevelParams, t: f64, wrt: Parameter, spec: ParamDerivativeSpec, source: &RhoSource) -> Result<ComplexMatrix> {
    spec.validate()?;
    let x = p.get(wrt);
    match (spec.method, source) {
        (DerivativeMethod::Analytic, RhoSource::Analytic) => {
            if wrt != Parameter::G {
                return Err(Error::Unsupported("no closed-form derivative with respect to delta".into()));
            }
            analytic_drho_dg(p, t)
        }
        (DerivativeMethod::Analytic, RhoSource::Integrator { .. }) => {
            Err(Error::Unsupported("analytic derivatives need the closed-form source".into()))
        }
        (DerivativeMethod::CentralDifference, RhoSource::Analytic) => {
            if wrt != Parameter::G {
                return Err(Error::Unsupported(
                    "the closed form holds only at zero detuning, so delta cannot be varied; use the integrator".into(),
                ));
            }
            let h = fd_displacement(p, x, spec.step);
            let plus = analytic_rho(&p.with(wrt, x + h), t)?;
            let minus = analytic_rho(&p.with(wrt, x - h), t)?;
            Ok((plus.matrix() - minus.matrix()).scale_real(0.5 / h).hermitian_part())
        }
        (DerivativeMethod::CentralDifference, RhoSource::Integrator { rho0, dt }) => {
            let h = fd_displacement(p, x, spec.step);
            let times = [0.0, t];
            let end = |q: &ThreeLevelParams| -> Result<ComplexMatrix> {
                let traj = evolve_gksl_at(&build_hamiltonian(q), &[jump_operator(q)?], rho0, &times, *dt)?;
                Ok(traj[1].matrix().clone())
            };
            let plus = end(&p.with(wrt, x + h))?;
            let minus = end(&p.with(wrt, x - h))?;
            Ok((&plus - &minus).scale_real(0.5 / h).hermitian_part())
        }
    }
}

/// F(t) with respect to `wrt` on `grid`, starting from `rho0`.
///
/// Uses the closed form when the probe starts in |f⟩ on resonance and the
/// parameter is g; otherwise integrates the master equation (step
/// min(0.01 fs, grid spacing)) at x and x(1 ± h) and differences the
/// trajectories. An analytic request that cannot be honoured falls back to
/// central differences with `spec.step`.
pub fn qfi_series(
    p: &ThreeLevelParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    wrt: Parameter,
    spec: ParamDerivativeSpec,
) -> Result<QfiSeries> {
    let dt = DEFAULT_DT_FS.min(grid.spacing());
    qfi_series_with_dt(p, rho0, grid, wrt, spec, dt)
}

pub fn qfi_series_with_dt(
    p: &ThreeLevelParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    wrt: Parameter,
    spec: ParamDerivativeSpec,
    dt: f64,
) -> Result<QfiSeries> {
    spec.validate()?;
    let times = grid.times();
    let closed_form = p.delta == 0.0 && wrt == Parameter::G && is_excited_f(rho0);
    let values: Vec<f64> = if closed_form {
        times
            .par_iter()
            .map(|&t| {
                let rho = analytic_rho(p, t)?;
                let drho = d_rho(p, t, wrt, spec, &RhoSource::Analytic)?;
                qfi_mixed(&rho, &drho, EIGEN_CUTOFF)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let step = if spec.method == DerivativeMethod::Analytic { DEFAULT_FD_STEP } else { spec.step };
        let x = p.get(wrt);
        let h = fd_displacement(p, x, step);
        let params = [*p, p.with(wrt, x + h), p.with(wrt, x - h)];
        let trajectories = params
            .par_iter()
            .map(|q| evolve_gksl_at(&build_hamiltonian(q), &[jump_operator(q)?], rho0, &times, dt))
            .collect::<Result<Vec<_>>>()?;
        (0..times.len())
            .into_par_iter()
            .map(|k| {
                let drho = (trajectories[1][k].matrix() - trajectories[2][k].matrix()).scale_real(0.5 / h);
                qfi_mixed(&trajectories[0][k], &drho.hermitian_part(), EIGEN_CUTOFF)
            })
            .collect::<Result<Vec<_>>>()?
    };
    QfiSeries::from_values(times, values, wrt)
}

/// Resonant QFI for g at a single time, straight from the closed form.
pub fn qfi_g_resonant(p: &ThreeLevelParams, t: f64) -> Result<f64> {
    let rho = analytic_rho(p, t)?;
    qfi_mixed(&rho, &analytic_drho_dg(p, t)?, EIGEN_CUTOFF)
}

/// |∂ρ_ff/∂g| from the closed form, the readout sensitivity of the |f⟩
/// population.
pub fn dff_dg_resonant(p: &ThreeLevelParams, t: f64) -> Result<f64> {
    Ok(analytic_drho_dg(p, t)?[(F, F)].re.abs())
}
