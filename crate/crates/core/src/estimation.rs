//! Parameter estimation from |f⟩-population readout: propagation of error,
//! binomial shot noise, least-squares fits of g, and the two-stage
//! coarse-then-windowed protocol.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{
    build_hamiltonian, evolve_gksl_at, jump_operator, linspace, resonant_elements, DensityMatrix, Parameter,
    ThreeLevelParams, TimeGrid, DEFAULT_DT_FS, E, F, S,
};
use crate::nonhermitian::ols_slope;
use crate::qfi::{fd_displacement, find_optimal_window, qfi_series, ParamDerivativeSpec, DEFAULT_FD_STEP};
use crate::rng::{binomial, experiment_stream};

/// Points in the coarse scan that seeds the golden-section search.
pub const FIT_SCAN_POINTS: usize = 200;

/// Golden-section termination, as a fraction of γ_e.
pub const FIT_REL_TOL: f64 = 1e-9;

/// δx(t) for the readout Π_f = |f⟩⟨f| alongside the bound 1/√F(t).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorPropagationSeries {
    pub times: Vec<f64>,
    /// +∞ where the readout is insensitive to the parameter.
    pub delta_param: Vec<f64>,
    /// +∞ where F = 0.
    pub inv_sqrt_f: Vec<f64>,
    pub parameter: Parameter,
}

impl ErrorPropagationSeries {
    /// Index of the smallest finite δx.
    pub fn argmin(&self) -> Option<usize> {
        self.delta_param
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    }

    /// Index of the smallest finite 1/√F, i.e. the QFI maximum.
    pub fn argmax_qfi(&self) -> Option<usize> {
        self.inv_sqrt_f
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    }
}

fn propagated_error(pf: f64, one_minus_pf: f64, dpf: f64) -> f64 {
    let spread = (pf * one_minus_pf).max(0.0).sqrt();
    if dpf == 0.0 {
        f64::INFINITY
    } else {
        spread / dpf.abs()
    }
}

fn inv_sqrt(f: f64) -> f64 {
    if f > 0.0 {
        1.0 / f.sqrt()
    } else {
        f64::INFINITY
    }
}

/// δx(t) = √(ρ_ff(1 − ρ_ff)) / |∂ρ_ff/∂x| for the probe started in |f⟩.
///
/// Resonant g uses the closed form and its exact derivative; anything else
/// integrates the master equation at x and x(1 ± h).
pub fn error_propagation(p: &ThreeLevelParams, grid: &TimeGrid, wrt: Parameter) -> Result<ErrorPropagationSeries> {
    let rho0 = DensityMatrix::excited_f();
    let series = qfi_series(p, &rho0, grid, wrt, ParamDerivativeSpec::default())?;
    let times = grid.times();
    let delta_param = if p.delta == 0.0 && wrt == Parameter::G {
        times
            .iter()
            .map(|&t| {
                let r = resonant_elements(p.g, p.gamma_e, t);
                propagated_error(r.ff, r.one_minus_ff, r.dff)
            })
            .collect()
    } else {
        let x = p.get(wrt);
        let h = fd_displacement(p, x, DEFAULT_FD_STEP);
        let dt = DEFAULT_DT_FS.min(grid.spacing());
        let params = [*p, p.with(wrt, x + h), p.with(wrt, x - h)];
        let traj = params
            .par_iter()
            .map(|q| evolve_gksl_at(&build_hamiltonian(q), &[jump_operator(q)?], &rho0, &times, dt))
            .collect::<Result<Vec<_>>>()?;
        (0..times.len())
            .map(|k| {
                let rho = &traj[0][k];
                let dpf = (traj[1][k].population(F) - traj[2][k].population(F)) * (0.5 / h);
                propagated_error(rho.population(F), rho.population(E) + rho.population(S), dpf)
            })
            .collect()
    };
    Ok(ErrorPropagationSeries {
        times,
        delta_param,
        inv_sqrt_f: series.values.iter().map(|&f| inv_sqrt(f)).collect(),
        parameter: wrt,
    })
}

/// δg at the exceptional point g = γ_e/4, from the same readout pipeline
/// as [`error_propagation`]; +∞ for t ≤ 0.
///
/// With u = γ_e t this equals
/// `(δg)² = 36(4+u)²(16e^{u/2} − (4+u)²) / (γ_e² t⁴ (48 + 16u + u²)²)`.
/// A variant of this expression that adds γ_e²t⁴ to (12 + γ_e t)² mixes
/// dimensions and does not agree with the pipeline; it is not used.
pub fn closed_form_delta_g_ep(gamma_e: f64, t: f64) -> f64 {
    if !(t > 0.0) {
        return f64::INFINITY;
    }
    let r = resonant_elements(0.25 * gamma_e, gamma_e, t);
    propagated_error(r.ff, r.one_minus_ff, r.dff)
}

/// |f⟩ population of the resonant probe.
pub fn population_f(g: f64, gamma_e: f64, t: f64) -> f64 {
    resonant_elements(g, gamma_e, t).ff
}

/// One binomial count of |f⟩ outcomes per time, with P_f from the closed
/// form.
pub fn simulate_counts<R: Rng + ?Sized>(p: &ThreeLevelParams, times: &[f64], n_shot: u64, rng: &mut R) -> Result<Vec<u64>> {
    if p.delta != 0.0 {
        return Err(Error::Unsupported("count simulation uses the resonant closed form; delta must be 0".into()));
    }
    Ok(times.iter().map(|&t| binomial(rng, n_shot, population_f(p.g, p.gamma_e, t))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub g_hat: f64,
    pub sse: f64,
    /// False when the minimiser sits on a bound.
    pub converged: bool,
}

fn sse(times: &[f64], freqs: &[f64], g: f64, gamma_e: f64) -> f64 {
    times
        .iter()
        .zip(freqs)
        .map(|(&t, &y)| {
            let d = y - population_f(g, gamma_e, t);
            d * d
        })
        .sum()
}

/// Least-squares estimate of g from measured |f⟩ frequencies.
///
/// A uniform scan over `bounds` picks the best cell, golden-section search
/// shrinks it below `1e-9·γ_e`, and a final parabola through the bracket
/// polishes the minimiser.
pub fn fit_g(times: &[f64], freqs: &[f64], gamma_e: f64, bounds: (f64, f64)) -> Result<FitResult> {
    if times.is_empty() {
        return Err(Error::Validation("no sample times to fit".into()));
    }
    if times.len() != freqs.len() {
        return Err(Error::Shape(format!("{} times for {} frequencies", times.len(), freqs.len())));
    }
    if let Some(f) = freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Validation(format!("frequency {f} outside [0, 1]")));
    }
    let (lo, hi) = bounds;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Validation(format!("fit bounds must satisfy lo < hi, got ({lo}, {hi})")));
    }
    let tol = FIT_REL_TOL * if gamma_e > 0.0 { gamma_e } else { hi - lo };
    let cost = |g: f64| -> Result<f64> {
        let v = sse(times, freqs, g, gamma_e);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Fit(format!("non-finite residual at g = {g}")))
        }
    };

    let grid = linspace(lo, hi, FIT_SCAN_POINTS);
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (k, &g) in grid.iter().enumerate() {
        let v = cost(g)?;
        if v < best_val {
            best = k;
            best_val = v;
        }
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(FIT_SCAN_POINTS - 1)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = cost(c)?;
    let mut fd = cost(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d)?;
        }
    }
    let (mut g_hat, mut val) = if fc < fd { (c, fc) } else { (d, fd) };
    if best_val < val {
        g_hat = grid[best];
        val = best_val;
    }

    // parabola through the final bracket
    let (fa, fb) = (cost(a)?, cost(b)?);
    let m = 0.5 * (a + b);
    let fm = cost(m)?;
    let denom = fa - 2.0 * fm + fb;
    if denom > 0.0 {
        let x = m + 0.5 * (b - a) * 0.5 * (fa - fb) / denom;
        if x >= a && x <= b {
            let fx = cost(x)?;
            if fx <= val {
                g_hat = x;
                val = fx;
            }
        }
    }
    for (x, fx) in [(a, fa), (b, fb), (m, fm)] {
        if fx < val {
            g_hat = x;
            val = fx;
        }
    }
    let converged = g_hat - lo > tol && hi - g_hat > tol;
    Ok(FitResult { g_hat, sse: val, converged })
}

/// How the sample times are chosen inside a measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSampling {
    /// The same number of evenly spaced times, spread across the window.
    Resample,
    /// Only the full-range times that fall inside the window.
    Subset,
}

impl std::str::FromStr for WindowSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "resample" => Ok(WindowSampling::Resample),
            "subset" => Ok(WindowSampling::Subset),
            other => Err(Error::Config(format!("unknown window sampling '{other}' (expected resample or subset)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub true_g: f64,
    pub gamma_e: f64,
    pub times: Vec<f64>,
    pub n_shot: u64,
    pub n_experiments: usize,
    pub seed: u64,
    pub fit_bounds: (f64, f64),
    pub window: Option<(f64, f64)>,
    pub sampling: WindowSampling,
    /// Use the exact populations instead of binomial counts.
    pub noiseless: bool,
}

impl EstimationConfig {
    /// 50 times on [0, 100] fs, M = 100, 1000 shots, bounds [0.01γ_e, 2γ_e].
    pub fn new(true_g: f64, gamma_e: f64) -> Self {
        Self {
            true_g,
            gamma_e,
            times: linspace(0.0, 100.0, 50),
            n_shot: 1000,
            n_experiments: 100,
            seed: 0,
            fit_bounds: (0.01 * gamma_e, 2.0 * gamma_e),
            window: None,
            sampling: WindowSampling::Resample,
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shot == 0 {
            return Err(Error::Validation("n_shot must be at least 1".into()));
        }
        if self.n_experiments == 0 {
            return Err(Error::Validation("need at least one experiment".into()));
        }
        let (lo, hi) = self.fit_bounds;
        if !(lo < hi) || !(lo <= self.true_g && self.true_g <= hi) {
            return Err(Error::Validation(format!(
                "fit bounds ({lo}, {hi}) must be ordered and contain the true coupling {}",
                self.true_g
            )));
        }
        if !(self.gamma_e >= 0.0) {
            return Err(Error::Validation(format!("decay rate must be non-negative, got {}", self.gamma_e)));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Validation("sample times must be finite and non-negative".into()));
        }
        if let Some((a, b)) = self.window {
            if !(a < b) {
                return Err(Error::Validation(format!("window ({a}, {b}) is empty")));
            }
        }
        Ok(())
    }

    /// The times actually measured, after applying the window.
    pub fn effective_times(&self) -> Result<Vec<f64>> {
        let Some((lo, hi)) = self.window else {
            return Ok(self.times.clone());
        };
        let times = match self.sampling {
            WindowSampling::Resample => linspace(lo, hi, self.times.len()),
            WindowSampling::Subset => {
                let eps = 1e-9 * (hi - lo);
                self.times.iter().copied().filter(|&t| t >= lo - eps && t <= hi + eps).collect()
            }
        };
        if times.is_empty() {
            return Err(Error::Validation(format!("no sample times inside the window ({lo}, {hi})")));
        }
        Ok(times)
    }

    fn params(&self) -> Result<ThreeLevelParams> {
        ThreeLevelParams::new(self.true_g, 0.0, self.gamma_e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub g_hats: Vec<f64>,
    pub rmse: f64,
    pub converged: Vec<bool>,
}

fn rmse(estimates: &[f64], truth: f64) -> f64 {
    (estimates.iter().map(|g| (g - truth).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

fn measure_and_fit(
    p: &ThreeLevelParams,
    times: &[f64],
    n_shot: u64,
    noiseless: bool,
    bounds: (f64, f64),
    rng: &mut impl Rng,
) -> Result<FitResult> {
    let freqs: Vec<f64> = if noiseless {
        times.iter().map(|&t| population_f(p.g, p.gamma_e, t).clamp(0.0, 1.0)).collect()
    } else {
        simulate_counts(p, times, n_shot, rng)?.iter().map(|&k| k as f64 / n_shot as f64).collect()
    };
    fit_g(times, &freqs, p.gamma_e, bounds)
}

/// M independent measure-and-fit experiments; experiment i draws from the
/// stream seeded with `seed + i`.
pub fn run_experiments(cfg: &EstimationConfig) -> Result<EstimationResult> {
    cfg.validate()?;
    let p = cfg.params()?;
    let times = cfg.effective_times()?;
    let fits = (0..cfg.n_experiments)
        .into_par_iter()
        .map(|i| {
            let mut rng = experiment_stream(cfg.seed, i as u64);
            measure_and_fit(&p, &times, cfg.n_shot, cfg.noiseless, cfg.fit_bounds, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let g_hats: Vec<f64> = fits.iter().map(|f| f.g_hat).collect();
    Ok(EstimationResult {
        rmse: rmse(&g_hats, cfg.true_g),
        converged: fits.iter().map(|f| f.converged).collect(),
        g_hats,
    })
}

/// rmse against shot count with power-law fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotStudy {
    pub n_shots: Vec<u64>,
    pub rmse: Vec<f64>,
    /// b in rmse ≈ a·n^b from a log–log least-squares fit.
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// a in rmse ≈ a·n^b.
    pub prefactor: f64,
    /// a in rmse ≈ a/√n, least squares on the linear scale.
    pub sqrt_prefactor: f64,
}

pub fn run_shot_study(cfg: &EstimationConfig, n_shot_list: &[u64]) -> Result<ShotStudy> {
    if n_shot_list.len() < 2 {
        return Err(Error::Validation("need at least two shot counts".into()));
    }
    let mut rmse = Vec::with_capacity(n_shot_list.len());
    for &n in n_shot_list {
        let run = run_experiments(&EstimationConfig { n_shot: n, ..cfg.clone() })?;
        rmse.push(run.rmse);
    }
    if rmse.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Fit("zero rmse; cannot fit a power law".into()));
    }
    let x: Vec<f64> = n_shot_list.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = rmse.iter().map(|r| r.ln()).collect();
    let (exponent, exponent_stderr) = ols_slope(&x, &y);
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let prefactor = (my - exponent * mx).exp();
    let num: f64 = n_shot_list.iter().zip(&rmse).map(|(&n, r)| r / (n as f64).sqrt()).sum();
    let den: f64 = n_shot_list.iter().map(|&n| 1.0 / n as f64).sum();
    Ok(ShotStudy {
        n_shots: n_shot_list.to_vec(),
        rmse,
        exponent,
        exponent_stderr,
        prefactor,
        sqrt_prefactor: num / den,
    })
}

/// Shots the first study needs per shot of the second for equal rmse,
/// assuming both follow a/√n.
pub fn resource_ratio(costly: &ShotStudy, efficient: &ShotStudy) -> f64 {
    (costly.sqrt_prefactor / efficient.sqrt_prefactor).powi(2)
}

/// Result of one run of the two-stage protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub g0: f64,
    pub g_hat: f64,
    pub window: (f64, f64),
    pub peak_time: f64,
    pub stage2_converged: bool,
    pub total_shots: u64,
}

/// Points in the QFI grid used to place the stage-2 window.
pub const PROTOCOL_QFI_POINTS: usize = 1001;

const STAGE2_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Coarse full-range fit, then a fit restricted to the QFI window computed
/// at the coarse estimate. Experiment `index` uses stream `seed + index` in
/// stage 1 and an independent stream in stage 2.
pub fn two_stage_protocol(
    cfg: &EstimationConfig,
    coarse_shots: u64,
    fine_shots: u64,
    threshold_fraction: f64,
    index: u64,
) -> Result<ProtocolReport> {
    let full = EstimationConfig { window: None, ..cfg.clone() };
    full.validate()?;
    if coarse_shots == 0 || fine_shots == 0 {
        return Err(Error::Validation("shot counts must be positive".into()));
    }
    let p = full.params()?;
    let stage1_times = full.times.clone();
    let mut rng1 = experiment_stream(cfg.seed, index);
    let stage1 = measure_and_fit(&p, &stage1_times, coarse_shots, cfg.noiseless, cfg.fit_bounds, &mut rng1)?;
    if !stage1.converged {
        return Err(Error::Fit(format!(
            "stage-1 estimate {} sits on the fit bound ({}, {}); widen the bounds or add shots",
            stage1.g_hat, cfg.fit_bounds.0, cfg.fit_bounds.1
        )));
    }

    let t_lo = stage1_times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = stage1_times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = TimeGrid::new(t_lo, t_hi, PROTOCOL_QFI_POINTS)?;
    let guess = ThreeLevelParams::new(stage1.g_hat, 0.0, cfg.gamma_e)?;
    let series = qfi_series(&guess, &DensityMatrix::excited_f(), &grid, Parameter::G, ParamDerivativeSpec::default())?;
    let window = find_optimal_window(&series, threshold_fraction)?;

    let fine = EstimationConfig { window: Some(window), ..cfg.clone() };
    let stage2_times = fine.effective_times()?;
    let mut rng2 = experiment_stream(cfg.seed ^ STAGE2_SEED_MIX, index);
    let stage2 = measure_and_fit(&p, &stage2_times, fine_shots, cfg.noiseless, cfg.fit_bounds, &mut rng2)?;
    Ok(ProtocolReport {
        g0: stage1.g_hat,
        g_hat: stage2.g_hat,
        window,
        peak_time: series.peak_time,
        stage2_converged: stage2.converged,
        total_shots: coarse_shots * stage1_times.len() as u64 + fine_shots * stage2_times.len() as u64,
    })
}

/// [`two_stage_protocol`] repeated `cfg.n_experiments` times.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolStudy {
    pub reports: Vec<ProtocolReport>,
    pub rmse_stage1: f64,
    pub rmse_stage2: f64,
}

pub fn run_protocol_study(
    cfg: &EstimationConfig,
    coarse_shots: u64,
    fine_shots: u64,
    threshold_fraction: f64,
) -> Result<ProtocolStudy> {
    cfg.validate()?;
    let reports = (0..cfg.n_experiments as u64)
        .into_par_iter()
        .map(|i| two_stage_protocol(cfg, coarse_shots, fine_shots, threshold_fraction, i))
        .collect::<Result<Vec<_>>>()?;
    let g0: Vec<f64> = reports.iter().map(|r| r.g0).collect();
    let g1: Vec<f64> = reports.iter().map(|r| r.g_hat).collect();
    Ok(ProtocolStudy { rmse_stage1: rmse(&g0, cfg.true_g), rmse_stage2: rmse(&g1, cfg.true_g), reports })
}
