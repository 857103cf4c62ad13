//! Effective non-Hermitian description of the lossy probe and its N-probe
//! generalisation in the single-excitation manifold.
//!
//! States evolve under `i dψ/dt = H_eff ψ`; the population lost from the
//! manifold is booked in a sink level appended after it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, ComplexMatrix, C64, I, ONE, ZERO};
use crate::lindblad::{DensityMatrix, Parameter, ThreeLevelParams, TimeGrid, DEFAULT_DT_FS};
use crate::ode::propagate_state;
use crate::qfi::{
    fd_displacement, qfi_lifted, qfi_mixed, qfi_mixed_matrix, qfi_pure_unchecked, QfiSeries,
    EIGEN_CUTOFF,
};

/// Below this |α|, as a fraction of max(4|g|, γ_e), the eigenbasis
/// formulas are replaced by direct propagation. Near the exceptional point
/// they cancel terms of size g/|α|, and the finite-difference derivatives
/// in g magnify that round-off by 1/h.
pub const DEGENERACY_THRESHOLD: f64 = 0.05;

/// 2×2 effective Hamiltonian over (e, f): `[[Δ − iγ_e/2, g], [g, Δ]]`.
pub fn build_heff(p: &ThreeLevelParams) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(2, 2);
    h[(0, 0)] = C64::new(p.delta, -0.5 * p.gamma_e);
    h[(0, 1)] = C64::new(p.g, 0.0);
    h[(1, 0)] = C64::new(p.g, 0.0);
    h[(1, 1)] = C64::new(p.delta, 0.0);
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonHermitianEigensystem {
    pub alpha: C64,
    pub lambda1: C64,
    pub lambda2: C64,
    pub psi1: [C64; 2],
    pub psi2: [C64; 2],
    /// Weight of the second mode in the state started from |f⟩.
    pub b: C64,
}

/// Closed-form eigenpairs of [`build_heff`], eigenvectors normalised as
/// `(1/√2)((−iγ_e ∓ α)/4g, 1)`.
pub fn eigensystem(p: &ThreeLevelParams) -> Result<NonHermitianEigensystem> {
    if p.g == 0.0 {
        return Err(Error::Validation("the eigenvectors are undefined at g = 0".into()));
    }
    let alpha = p.alpha();
    let ig = C64::new(0.0, p.gamma_e);
    let delta = C64::new(p.delta, 0.0);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = p.g;
    let b = (alpha * alpha - 8.0 * g * g + ig * alpha) / (8.0 * g * g);
    Ok(NonHermitianEigensystem {
        alpha,
        lambda1: delta + (-ig - alpha) / 4.0,
        lambda2: delta + (-ig + alpha) / 4.0,
        psi1: [s * (-ig - alpha) / (4.0 * g), C64::new(s, 0.0)],
        psi2: [s * (-ig + alpha) / (4.0 * g), C64::new(s, 0.0)],
        b,
    })
}

fn propagate_2x2(p: &ThreeLevelParams, psi0: [C64; 2], t: f64) -> Result<[C64; 2]> {
    if t == 0.0 {
        return Ok(psi0);
    }
    let out = propagate_state(&build_heff(p), &psi0, &[0.0, t], DEFAULT_DT_FS)?;
    Ok([out[1][0], out[1][1]])
}

fn near_degenerate(p: &ThreeLevelParams) -> bool {
    p.g == 0.0 || p.alpha().norm() < DEGENERACY_THRESHOLD * (4.0 * p.g.abs()).max(p.gamma_e)
}

/// State started in |e⟩.
pub fn psi_e(p: &ThreeLevelParams, t: f64) -> Result<[C64; 2]> {
    if t == 0.0 {
        return Ok([ONE, ZERO]);
    }
    if near_degenerate(p) {
        return propagate_2x2(p, [ONE, ZERO], t);
    }
    let es = eigensystem(p)?;
    let e1 = (-I * es.lambda1 * t).exp();
    let e2 = (-I * es.lambda2 * t).exp();
    let pre = -2.0 * std::f64::consts::SQRT_2 * p.g / es.alpha;
    Ok([
        pre * (e1 * es.psi1[0] - e2 * es.psi2[0]),
        pre * (e1 * es.psi1[1] - e2 * es.psi2[1]),
    ])
}

/// State started in |f⟩.
pub fn psi_f(p: &ThreeLevelParams, t: f64) -> Result<[C64; 2]> {
    if t == 0.0 {
        return Ok([ZERO, ONE]);
    }
    if near_degenerate(p) {
        return propagate_2x2(p, [ZERO, ONE], t);
    }
    let es = eigensystem(p)?;
    let e1 = (-I * es.lambda1 * t).exp();
    let e2 = (-I * es.lambda2 * t).exp() * es.b;
    let g = p.g;
    let pre = 8.0 * std::f64::consts::SQRT_2 * g * g / (es.alpha * es.alpha + C64::new(0.0, p.gamma_e) * es.alpha);
    Ok([
        pre * (e1 * es.psi1[0] + e2 * es.psi2[0]),
        pre * (e1 * es.psi1[1] + e2 * es.psi2[1]),
    ])
}

/// `|ψ⟩⟨ψ| ⊕ (1 − ⟨ψ|ψ⟩)` over (e, f, s).
pub fn lift_to_3x3(psi: &[C64; 2]) -> Result<DensityMatrix> {
    DensityMatrix::from_block_and_sink(psi, crate::lindblad::three_level_labels())
}

/// Relative step of the five-point stencil used for ∂/∂g of the
/// non-Hermitian states. The sink population of a lifted state is a small
/// difference of O(1) numbers, so rounding in the difference quotient
/// dominates unless the step is wide; the fourth-order stencil keeps the
/// truncation error below 1e-12 at this width.
pub const NH_FD_STEP: f64 = 1e-3;

/// Five-point derivative in g of a matrix-valued function of the parameters.
fn stencil_dg<F>(p: &ThreeLevelParams, f: F) -> Result<ComplexMatrix>
where
    F: Fn(&ThreeLevelParams) -> Result<ComplexMatrix>,
{
    let h = fd_displacement(p, p.g, NH_FD_STEP);
    let at = |k: f64| f(&p.with(Parameter::G, p.g + k * h));
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let d = &(&(&p1 - &m1).scale_real(8.0) - &p2) + &m2;
    Ok(d.scale_real(1.0 / (12.0 * h)))
}

fn psi_column(p: &ThreeLevelParams, t: f64) -> Result<ComplexMatrix> {
    let psi = psi_f(p, t)?;
    ComplexMatrix::new(2, 1, psi.to_vec())
}

fn psi_f_and_derivative(p: &ThreeLevelParams, t: f64) -> Result<([C64; 2], [C64; 2])> {
    let psi = psi_f(p, t)?;
    let d = stencil_dg(p, |q| psi_column(q, t))?;
    Ok((psi, [d[(0, 0)], d[(1, 0)]]))
}

/// Pure-state formula applied to the decaying 2-vector, with no
/// normalisation guard. Wrong whenever γ_e > 0; kept for comparison.
pub fn qfi_nh_pure(p: &ThreeLevelParams, t: f64) -> Result<f64> {
    let (psi, dpsi) = psi_f_and_derivative(p, t)?;
    qfi_pure_unchecked(&psi, &dpsi)
}

/// Mixed-state formula on the unnormalised 2×2 block |ψ⟩⟨ψ|.
pub fn qfi_nh_mixed2(p: &ThreeLevelParams, t: f64) -> Result<f64> {
    let block = |q: &ThreeLevelParams| psi_f(q, t).map(|psi| ComplexMatrix::outer(&psi, &psi));
    let drho = stencil_dg(p, block)?;
    qfi_mixed_matrix(&block(p)?, &drho.hermitian_part(), EIGEN_CUTOFF)
}

/// Mixed-state formula on the 3×3 lift including the sink.
pub fn qfi_nh_mixed3(p: &ThreeLevelParams, t: f64) -> Result<f64> {
    let lifted = |q: &ThreeLevelParams| -> Result<ComplexMatrix> { Ok(lift_to_3x3(&psi_f(q, t)?)?.matrix().clone()) };
    let drho = stencil_dg(p, lifted)?;
    let rho = lift_to_3x3(&psi_f(p, t)?)?;
    qfi_mixed(&rho, &drho.hermitian_part(), EIGEN_CUTOFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhVariant {
    Pure2,
    Mixed2,
    Mixed3,
}

/// One of the non-Hermitian QFI variants over a time grid.
pub fn qfi_nh_series(p: &ThreeLevelParams, grid: &TimeGrid, variant: NhVariant) -> Result<QfiSeries> {
    let times = grid.times();
    let f = match variant {
        NhVariant::Pure2 => qfi_nh_pure,
        NhVariant::Mixed2 => qfi_nh_mixed2,
        NhVariant::Mixed3 => qfi_nh_mixed3,
    };
    let values = times.par_iter().map(|&t| f(p, t)).collect::<Result<Vec<_>>>()?;
    QfiSeries::from_values(times, values, Parameter::G)
}

/// Initial states of the N-probe study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Only the first probe excited.
    F1,
    /// Symmetric superposition `(1/√N) Σ |f_i⟩`.
    Chi1,
    /// `(|e⟩ + Σ |f_i⟩)/√(N+1)`.
    EPlusChi1,
}

impl InitialState {
    pub fn name(self) -> &'static str {
        match self {
            InitialState::F1 => "f1",
            InitialState::Chi1 => "chi1",
            InitialState::EPlusChi1 => "e_plus_chi1",
        }
    }
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f1" => Ok(InitialState::F1),
            "chi1" => Ok(InitialState::Chi1),
            "e_plus_chi1" => Ok(InitialState::EPlusChi1),
            other => Err(Error::Config(format!("unknown initial state '{other}' (expected f1, chi1 or e_plus_chi1)"))),
        }
    }
}

/// N identical probes sharing one lossy level `e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NProbeModel {
    pub n_probes: usize,
    pub g: f64,
    pub gamma_e: f64,
    pub initial: InitialState,
}

impl NProbeModel {
    pub fn new(n_probes: usize, g: f64, gamma_e: f64, initial: InitialState) -> Result<Self> {
        if n_probes == 0 {
            return Err(Error::Validation("need at least one probe".into()));
        }
        if !(gamma_e >= 0.0) || !gamma_e.is_finite() || !g.is_finite() {
            return Err(Error::Validation(format!("invalid rates g = {g}, gamma_e = {gamma_e}")));
        }
        Ok(Self { n_probes, g, gamma_e, initial })
    }

    pub fn with_n(&self, n_probes: usize) -> Self {
        Self { n_probes, ..*self }
    }

    fn with_g(&self, g: f64) -> Self {
        Self { g, ..*self }
    }

    /// Manifold amplitudes over (e, f_1, …, f_N) at t = 0.
    pub fn initial_amplitudes(&self) -> Vec<C64> {
        let n = self.n_probes;
        let mut psi = vec![ZERO; n + 1];
        match self.initial {
            InitialState::F1 => psi[1] = ONE,
            InitialState::Chi1 => {
                let a = 1.0 / (n as f64).sqrt();
                psi[1..].iter_mut().for_each(|z| *z = C64::new(a, 0.0));
            }
            InitialState::EPlusChi1 => {
                let a = 1.0 / ((n + 1) as f64).sqrt();
                psi.iter_mut().for_each(|z| *z = C64::new(a, 0.0));
            }
        }
        psi
    }

    /// (a_e, a_1): overlaps of the initial state with |e⟩ and |χ₁⟩.
    pub fn block_amplitudes(&self) -> (f64, f64) {
        let n = self.n_probes as f64;
        match self.initial {
            InitialState::F1 => (0.0, 1.0 / n.sqrt()),
            InitialState::Chi1 => (0.0, 1.0),
            InitialState::EPlusChi1 => (1.0 / (n + 1.0).sqrt(), (n / (n + 1.0)).sqrt()),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels = vec!["e".to_string()];
        labels.extend((1..=self.n_probes).map(|i| format!("f{i}")));
        labels.push("s".into());
        labels
    }
}

/// (N+1)×(N+1) star Hamiltonian over (e, f_1, …, f_N) with the loss on e.
pub fn build_nprobe_hamiltonian(m: &NProbeModel) -> ComplexMatrix {
    let n = m.n_probes;
    let mut h = ComplexMatrix::zeros(n + 1, n + 1);
    h[(0, 0)] = C64::new(0.0, -0.5 * m.gamma_e);
    for i in 1..=n {
        h[(0, i)] = C64::new(m.g, 0.0);
        h[(i, 0)] = C64::new(m.g, 0.0);
    }
    h
}

/// Unitary whose columns are e, χ₁ and an orthonormal completion χ₂…χ_N.
pub fn chi_basis(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::Validation("need at least one probe".into()));
    }
    let dim = n + 1;
    let unit = |k: usize| {
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        v
    };
    let a = 1.0 / (n as f64).sqrt();
    let mut chi1 = vec![C64::new(a, 0.0); dim];
    chi1[0] = ZERO;
    let mut seeds = vec![unit(0), chi1];
    seeds.extend((2..=n).map(unit));
    gram_schmidt(&seeds)
}

/// Propagates the manifold state on `grid` with step `dt` and returns the
/// amplitudes at each sample.
fn propagate_nprobe(m: &NProbeModel, times: &[f64], dt: f64) -> Result<Vec<Vec<C64>>> {
    let traj = propagate_state(&build_nprobe_hamiltonian(m), &m.initial_amplitudes(), times, dt)?;
    for (t, psi) in times.iter().zip(&traj) {
        let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if n2 > 1.0 + 1e-9 {
            return Err(Error::Numerical(format!("manifold norm² {n2} exceeds 1 at t = {t} fs")));
        }
    }
    Ok(traj)
}

fn nprobe_dt(grid: &TimeGrid) -> f64 {
    DEFAULT_DT_FS.min(grid.spacing())
}

/// (N+2)-level density matrices: the manifold block followed by the sink.
pub fn evolve_nprobe(m: &NProbeModel, grid: &TimeGrid) -> Result<Vec<DensityMatrix>> {
    let labels = m.labels();
    propagate_nprobe(m, &grid.times(), nprobe_dt(grid))?
        .iter()
        .map(|psi| DensityMatrix::from_block_and_sink(psi, labels.clone()))
        .collect()
}

/// F(t) for g with N probes, from a five-point stencil in g over
/// propagated manifold states.
pub fn qfi_nprobe(m: &NProbeModel, grid: &TimeGrid) -> Result<QfiSeries> {
    let times = grid.times();
    let dt = nprobe_dt(grid);
    let p = ThreeLevelParams::new(m.g, 0.0, m.gamma_e)?;
    let h = fd_displacement(&p, m.g, NH_FD_STEP);
    let offsets = [0.0, -2.0, -1.0, 1.0, 2.0];
    let traj = offsets
        .par_iter()
        .map(|k| propagate_nprobe(&m.with_g(m.g + k * h), &times, dt))
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / (12.0 * h);
    let values = (0..times.len())
        .into_par_iter()
        .map(|k| {
            let dpsi: Vec<C64> = (0..traj[0][k].len())
                .map(|i| (traj[1][k][i] - traj[4][k][i] + (traj[3][k][i] - traj[2][k][i]) * 8.0) * scale)
                .collect();
            qfi_lifted(&traj[0][k], &dpsi)
        })
        .collect::<Result<Vec<_>>>()?;
    QfiSeries::from_values(times, values, Parameter::G)
}

/// Peak QFI against N with a log–log least-squares power law.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub n_values: Vec<usize>,
    pub max_qfi: Vec<f64>,
    pub exponent: f64,
    pub exponent_stderr: f64,
}

impl ScalingFit {
    /// Power-law fit through given peak values.
    pub fn from_points(n_values: Vec<usize>, max_qfi: Vec<f64>) -> Result<Self> {
        if n_values.len() < 4 {
            return Err(Error::Validation(format!("need at least 4 values of N, got {}", n_values.len())));
        }
        if n_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("values of N must be strictly increasing".into()));
        }
        if max_qfi.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::Numerical("peak QFI must be positive for a log-log fit".into()));
        }
        let x: Vec<f64> = n_values.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = max_qfi.iter().map(|f| f.ln()).collect();
        let (exponent, exponent_stderr) = ols_slope(&x, &y);
        Ok(Self { n_values, max_qfi, exponent, exponent_stderr })
    }

    /// Refit on the points with `lo ≤ N ≤ hi`.
    pub fn subrange(&self, lo: usize, hi: usize) -> Result<Self> {
        let (n, f): (Vec<usize>, Vec<f64>) = self
            .n_values
            .iter()
            .zip(&self.max_qfi)
            .filter(|(&n, _)| n >= lo && n <= hi)
            .map(|(&n, &f)| (n, f))
            .unzip();
        Self::from_points(n, f)
    }
}

/// Least-squares slope of y on x and its standard error.
pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)).sum();
    let stderr = if x.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, stderr)
}

/// Peak F for every N in `ns` and the power-law exponent over all of them.
pub fn max_qfi_scaling(ns: &[usize], template: &NProbeModel, grid: &TimeGrid) -> Result<ScalingFit> {
    if ns.len() < 4 {
        return Err(Error::Validation(format!("need at least 4 values of N, got {}", ns.len())));
    }
    let peaks = ns
        .par_iter()
        .map(|&n| qfi_nprobe(&template.with_n(n), grid).map(|s| s.peak_value))
        .collect::<Result<Vec<_>>>()?;
    ScalingFit::from_points(ns.to_vec(), peaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{analytic_rho, ev_to_ifs, linspace};
    use crate::linalg::{hermitian_eigen, norm};
    use crate::qfi::{qfi_series, ParamDerivativeSpec};
    use approx::assert_abs_diff_eq;

    fn gamma() -> f64 {
        ev_to_ifs(0.150)
    }

    fn at_ratio(r: f64) -> ThreeLevelParams {
        ThreeLevelParams::new(r * gamma(), 0.0, gamma()).unwrap()
    }

    #[test]
    fn heff_examples() {
        let p = ThreeLevelParams::new(0.1, 0.03, 0.0).unwrap();
        let h = build_heff(&p);
        assert_eq!(h.hermiticity_defect(), 0.0);
        let p = ThreeLevelParams::new(0.1, 0.03, 0.2).unwrap();
        assert_abs_diff_eq!(build_heff(&p).trace().re, 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(build_heff(&p).trace().im, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn heff_matches_hamiltonian_block_on_resonance() {
        let p = at_ratio(0.3);
        let h3 = crate::lindblad::build_hamiltonian(&p);
        let mut shifted = h3.block(0, 0, 2, 2);
        shifted[(0, 0)] -= C64::new(0.0, 0.5 * p.gamma_e);
        assert!(shifted.max_abs_diff(&build_heff(&p)).unwrap() < 1e-15);
    }

    #[test]
    fn eigensystem_examples() {
        let g = 0.07;
        let es = eigensystem(&ThreeLevelParams::new(g, 0.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(es.lambda1.re, -g, epsilon = 1e-15);
        assert_abs_diff_eq!(es.lambda2.re, g, epsilon = 1e-15);
        let p = at_ratio(0.25);
        let es = eigensystem(&p).unwrap();
        assert_eq!(es.lambda1, es.lambda2);
        assert_abs_diff_eq!(es.lambda1.im, -p.gamma_e / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(es.b.re, -1.0, epsilon = 1e-14);
        assert!(eigensystem(&ThreeLevelParams::new(0.0, 0.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn eigen_residuals_and_trace() {
        for &r in &[0.05, 0.2, 0.3, 1.0] {
            let p = ThreeLevelParams::new(r * gamma(), 0.013, gamma()).unwrap();
            let h = build_heff(&p);
            let es = eigensystem(&p).unwrap();
            let scale = h.frobenius_norm();
            for (lambda, v) in [(es.lambda1, es.psi1), (es.lambda2, es.psi2)] {
                let hv = h.matvec(&v).unwrap();
                let res = (hv[0] - lambda * v[0]).norm().max((hv[1] - lambda * v[1]).norm());
                assert!(res <= 1e-10 * scale);
            }
            let tr = es.lambda1 + es.lambda2;
            assert!((tr - C64::new(2.0 * p.delta, -0.5 * p.gamma_e)).norm() < 1e-12);
        }
    }

    #[test]
    fn states_start_in_basis_vectors() {
        for &r in &[0.1, 0.25, 0.4] {
            let p = at_ratio(r);
            let e = psi_e(&p, 0.0).unwrap();
            let f = psi_f(&p, 0.0).unwrap();
            assert!((e[0] - ONE).norm() < 1e-12 && e[1].norm() < 1e-12, "ratio {r}");
            assert!((f[1] - ONE).norm() < 1e-12 && f[0].norm() < 1e-12, "ratio {r}");
        }
    }

    #[test]
    fn closed_forms_match_propagation() {
        for &r in &[0.1, 0.4] {
            let p = at_ratio(r);
            for &t in &[3.0, 40.0] {
                let e = psi_e(&p, t).unwrap();
                let e_ref = propagate_2x2(&p, [ONE, ZERO], t).unwrap();
                let f = psi_f(&p, t).unwrap();
                let f_ref = propagate_2x2(&p, [ZERO, ONE], t).unwrap();
                for k in 0..2 {
                    assert!((e[k] - e_ref[k]).norm() < 1e-9);
                    assert!((f[k] - f_ref[k]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn lossless_norm_is_one() {
        let p = ThreeLevelParams::new(0.08, 0.0, 0.0).unwrap();
        for t in linspace(0.0, 100.0, 11) {
            assert_abs_diff_eq!(norm(&psi_f(&p, t).unwrap()), 1.0, epsilon = 1e-12);
            assert_eq!(lift_to_3x3(&psi_f(&p, t).unwrap()).unwrap().population(2), 0.0f64.max(
                1.0 - psi_f(&p, t).unwrap().iter().map(|z| z.norm_sqr()).sum::<f64>()
            ));
        }
    }

    #[test]
    fn lift_matches_master_equation() {
        for &r in &[0.1, 0.25, 0.4] {
            let p = at_ratio(r);
            for t in linspace(0.0, 100.0, 21) {
                let lifted = lift_to_3x3(&psi_f(&p, t).unwrap()).unwrap();
                let exact = analytic_rho(&p, t).unwrap();
                assert!(lifted.matrix().max_abs_diff(exact.matrix()).unwrap() < 1e-8, "ratio {r}, t {t}");
            }
        }
        let d = lift_to_3x3(&psi_f(&at_ratio(0.3), 0.0).unwrap()).unwrap();
        assert_eq!(d.matrix().diagonal(), vec![ZERO, ONE, ZERO]);
        assert!(lift_to_3x3(&[C64::new(1.0, 0.0), C64::new(0.1, 0.0)]).is_err());
    }

    #[test]
    fn lossless_variants_agree() {
        let p = ThreeLevelParams::new(0.08, 0.0, 0.0).unwrap();
        for &t in &[5.0, 30.0, 80.0] {
            let a = qfi_nh_pure(&p, t).unwrap();
            let b = qfi_nh_mixed2(&p, t).unwrap();
            let c = qfi_nh_mixed3(&p, t).unwrap();
            assert!((a - b).abs() < 1e-7 * a.max(1.0) && (a - c).abs() < 1e-7 * a.max(1.0), "{a} {b} {c}");
        }
    }

    #[test]
    fn mixed3_equals_master_equation_qfi_at_exceptional_point() {
        let p = at_ratio(0.25);
        let grid = TimeGrid::new(0.0, 100.0, 101).unwrap();
        let gksl = qfi_series(&p, &DensityMatrix::excited_f(), &grid, Parameter::G, ParamDerivativeSpec::default()).unwrap();
        let nh = qfi_nh_series(&p, &grid, NhVariant::Mixed3).unwrap();
        for (a, b) in gksl.values.iter().zip(&nh.values) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()), "{a} vs {b}");
        }
        let pure = qfi_nh_series(&p, &grid, NhVariant::Pure2).unwrap();
        let mixed2 = qfi_nh_series(&p, &grid, NhVariant::Mixed2).unwrap();
        assert!(pure.values.iter().zip(&mixed2.values).any(|(a, b)| (a - b).abs() > 1e-3 * a.max(*b)));
    }

    #[test]
    fn nprobe_hamiltonian_examples() {
        let m = NProbeModel::new(1, 0.1, 0.2, InitialState::F1).unwrap();
        let p = ThreeLevelParams::new(0.1, 0.0, 0.2).unwrap();
        assert_eq!(build_nprobe_hamiltonian(&m), build_heff(&p));
        let m = NProbeModel::new(4, 0.1, 0.2, InitialState::F1).unwrap();
        let h = build_nprobe_hamiltonian(&m);
        assert_eq!((1..5).filter(|&i| h[(0, i)].re == 0.1).count(), 4);
    }

    #[test]
    fn star_spectrum() {
        let n = 6;
        let g = 0.05;
        let h = build_nprobe_hamiltonian(&NProbeModel::new(n, g, 0.0, InitialState::F1).unwrap());
        let eig = hermitian_eigen(&h, 1e-12).unwrap();
        let r = (n as f64).sqrt() * g;
        assert_abs_diff_eq!(eig.eigenvalues[0], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[n], r, epsilon = 1e-12);
        for &l in &eig.eigenvalues[1..n] {
            assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chi_basis_block_structure() {
        for &n in &[1usize, 2, 4, 17, 50] {
            let g = 0.05;
            let gm = 0.2;
            let v = chi_basis(n).unwrap();
            let vv = &v.adjoint() * &v;
            assert!(vv.max_abs_diff(&ComplexMatrix::identity(n + 1)).unwrap() < 1e-12);
            let h = build_nprobe_hamiltonian(&NProbeModel::new(n, g, gm, InitialState::F1).unwrap());
            let t = &(&v.adjoint() * &h) * &v;
            let coupling = (n as f64).sqrt() * g;
            assert!((t[(0, 1)].re - coupling).abs() < 1e-12);
            assert!((t[(0, 0)] - C64::new(0.0, -gm / 2.0)).norm() < 1e-12);
            let scale = h.frobenius_norm();
            for i in 0..=n {
                for j in 0..=n {
                    if i < 2 && j < 2 {
                        continue;
                    }
                    assert!(t[(i, j)].norm() <= 1e-12 * scale, "N = {n}: ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn nprobe_single_matches_three_level() {
        let p = at_ratio(0.3);
        let m = NProbeModel::new(1, p.g, p.gamma_e, InitialState::F1).unwrap();
        let grid = TimeGrid::new(0.0, 50.0, 26).unwrap();
        let traj = evolve_nprobe(&m, &grid).unwrap();
        for (t, rho) in grid.times().iter().zip(&traj) {
            assert_eq!(rho.dim(), 3);
            let lifted = lift_to_3x3(&psi_f(&p, *t).unwrap()).unwrap();
            assert!(rho.matrix().max_abs_diff(lifted.matrix()).unwrap() < 1e-10);
            assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lossless_chi1_rabi() {
        let n = 9;
        let g = 0.03;
        let m = NProbeModel::new(n, g, 0.0, InitialState::Chi1).unwrap();
        let grid = TimeGrid::new(0.0, 40.0, 9).unwrap();
        let traj = evolve_nprobe(&m, &grid).unwrap();
        for (t, rho) in grid.times().iter().zip(&traj) {
            assert_abs_diff_eq!(rho.population(0), (3.0 * g * t).sin().powi(2), epsilon = 1e-9);
        }
    }

    #[test]
    fn decoupled_chi_amplitudes_are_constant() {
        let n = 5;
        let m = NProbeModel::new(n, 0.05, 0.2, InitialState::F1).unwrap();
        let v = chi_basis(n).unwrap();
        let times = linspace(0.0, 60.0, 7);
        let traj = propagate_nprobe(&m, &times, 0.01).unwrap();
        let first = v.adjoint().matvec(&traj[0]).unwrap();
        for psi in &traj {
            let c = v.adjoint().matvec(psi).unwrap();
            for k in 2..=n {
                assert!((c[k] - first[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_identities() {
        let g = gamma() / 4.0;
        let grid = TimeGrid::new(0.0, 100.0, 101).unwrap();
        for &n in &[2usize, 5] {
            let root = (n as f64).sqrt();
            let chi = qfi_nprobe(&NProbeModel::new(n, g, gamma(), InitialState::Chi1).unwrap(), &grid).unwrap();
            let chi_ref = qfi_nprobe(&NProbeModel::new(1, root * g, gamma(), InitialState::Chi1).unwrap(), &grid).unwrap();
            let f1 = qfi_nprobe(&NProbeModel::new(n, g, gamma(), InitialState::F1).unwrap(), &grid).unwrap();
            for k in 1..grid.n_points {
                let a = chi.values[k];
                let b = n as f64 * chi_ref.values[k];
                assert!((a - b).abs() <= 1e-6 * b, "chi1 N = {n}");
                let c = f1.values[k];
                let d = chi_ref.values[k];
                assert!((c - d).abs() <= 1e-6 * d, "f1 N = {n}");
            }
        }
    }

    #[test]
    fn single_probe_matches_master_equation_qfi() {
        let p = at_ratio(0.25);
        let grid = TimeGrid::new(0.0, 100.0, 101).unwrap();
        let nprobe = qfi_nprobe(&NProbeModel::new(1, p.g, p.gamma_e, InitialState::F1).unwrap(), &grid).unwrap();
        let gksl = qfi_series(&p, &DensityMatrix::excited_f(), &grid, Parameter::G, ParamDerivativeSpec::default()).unwrap();
        for (a, b) in nprobe.values.iter().zip(&gksl.values) {
            assert!((a - b).abs() <= 1e-6 * b.max(1e-12));
        }
    }

    #[test]
    fn initial_amplitudes_are_normalised() {
        for init in [InitialState::F1, InitialState::Chi1, InitialState::EPlusChi1] {
            let m = NProbeModel::new(7, 0.1, 0.2, init).unwrap();
            assert_abs_diff_eq!(norm(&m.initial_amplitudes()), 1.0, epsilon = 1e-14);
            let (ae, a1) = m.block_amplitudes();
            let v = chi_basis(7).unwrap();
            let c = v.adjoint().matvec(&m.initial_amplitudes()).unwrap();
            assert_abs_diff_eq!(c[0].re, ae, epsilon = 1e-14);
            assert_abs_diff_eq!(c[1].re, a1, epsilon = 1e-14);
        }
    }

    #[test]
    fn scaling_fit_needs_four_points() {
        let m = NProbeModel::new(1, 0.05, 0.2, InitialState::Chi1).unwrap();
        let grid = TimeGrid::new(0.0, 10.0, 11).unwrap();
        assert!(max_qfi_scaling(&[1, 2, 3], &m, &grid).is_err());
        assert!(max_qfi_scaling(&[1, 3, 2, 4], &m, &grid).is_err());
    }

    #[test]
    fn ols_recovers_power_law() {
        let x: Vec<f64> = (1..10).map(|k| (k as f64).ln()).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.3 - 1.7 * x).collect();
        let (slope, err) = ols_slope(&x, &y);
        assert_abs_diff_eq!(slope, -1.7, epsilon = 1e-12);
        assert!(err < 1e-12);
    }
}
