//! Property checks shared by the proptest suite and the acceptance run.

#![allow(dead_code)]

use optsense::linalg::{hermitian_eigen, ComplexMatrix, C64};
use optsense::lindblad::{
    analytic_drho_dg, analytic_rho, ev_to_ifs, evolve_gksl, linspace, DensityMatrix, ThreeLevelParams, TimeGrid, F,
};
use optsense::nonhermitian::{evolve_nprobe, lift_to_3x3, psi_f, qfi_nh_mixed3, InitialState, NProbeModel};
use optsense::qfi::{qfi_g_resonant, qfi_mixed, sld, EIGEN_CUTOFF};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub type PropResult = Result<(), TestCaseError>;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("b{k}")).collect()
}

pub fn resonant(ratio: f64, gamma_ev: f64) -> ThreeLevelParams {
    let gamma = ev_to_ifs(gamma_ev);
    ThreeLevelParams::new(ratio * gamma, 0.0, gamma).unwrap()
}

/// Full-rank density matrix `(AA† + εI)/tr` and a traceless Hermitian
/// direction from flat real parts.
pub fn random_pair(n: usize, a: &[f64], b: &[f64], eps: f64) -> (DensityMatrix, ComplexMatrix) {
    let mk = |v: &[f64]| {
        let data: Vec<C64> = (0..n * n).map(|k| C64::new(v[2 * k], v[2 * k + 1])).collect();
        ComplexMatrix::new(n, n, data).unwrap()
    };
    let am = mk(a);
    let mut rho = &am * &am.adjoint();
    for k in 0..n {
        rho[(k, k)] += C64::new(eps, 0.0);
    }
    let rho = rho.scale_real(1.0 / rho.trace().re).hermitian_part();
    let bm = mk(b);
    let mut d = (&bm + &bm.adjoint()).scale_real(0.5);
    let shift = d.trace().re / n as f64;
    for k in 0..n {
        d[(k, k)] -= C64::new(shift, 0.0);
    }
    (DensityMatrix::new(rho, labels(n)).unwrap(), d)
}

pub fn matrix_strategy(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (
        prop::collection::vec(-1.0f64..1.0, 2 * n * n),
        prop::collection::vec(-1.0f64..1.0, 2 * n * n),
        1e-3f64..0.5,
    )
}

fn check_density(rho: &DensityMatrix, trace_tol: f64) -> PropResult {
    prop_assert!((rho.trace() - 1.0).abs() <= trace_tol, "trace {}", rho.trace());
    prop_assert!(rho.matrix().hermiticity_defect() <= 1e-10);
    let eig = hermitian_eigen(rho.matrix(), 1e-10).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(eig.eigenvalues[0] >= -1e-9, "eigenvalue {}", eig.eigenvalues[0]);
    Ok(())
}

/// Closed-form states are valid density matrices.
pub fn density_invariants_closed_form(ratio: f64, gamma_ev: f64, t: f64) -> PropResult {
    let rho = analytic_rho(&resonant(ratio, gamma_ev), t).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check_density(&rho, 1e-10)
}

/// Integrated states (any detuning) stay valid density matrices.
pub fn density_invariants_integrated(ratio: f64, gamma_ev: f64, delta_ev: f64) -> PropResult {
    let gamma = ev_to_ifs(gamma_ev);
    let p = ThreeLevelParams::new(ratio * gamma, ev_to_ifs(delta_ev), gamma).unwrap();
    let grid = TimeGrid::new(0.0, 30.0, 31).unwrap();
    let traj = evolve_gksl(&p, &DensityMatrix::excited_f(), &grid, 0.01).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for rho in &traj {
        check_density(rho, 1e-8)?;
    }
    Ok(())
}

fn sld_residual(rho: &DensityMatrix, d: &ComplexMatrix) -> Result<f64, TestCaseError> {
    let l = sld(rho, d, EIGEN_CUTOFF).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let r = rho.matrix();
    let resid = d - &(&(r * &l) + &(&l * r)).scale_real(0.5);
    let eig = hermitian_eigen(r, 1e-10).unwrap();
    let v = &eig.eigenvectors;
    let rot = &(&v.adjoint() * &resid) * v;
    let cutoff = EIGEN_CUTOFF * r.trace().re;
    let mut worst: f64 = 0.0;
    for a in 0..rho.dim() {
        for b in 0..rho.dim() {
            if eig.eigenvalues[a] + eig.eigenvalues[b] > cutoff {
                worst = worst.max(rot[(a, b)].norm());
            }
        }
    }
    Ok(worst)
}

/// ∂ρ = ½(ρL + Lρ) on the support of a random full-rank state.
pub fn sld_residual_random(n: usize, a: &[f64], b: &[f64], eps: f64) -> PropResult {
    let (rho, d) = random_pair(n, a, b, eps);
    let worst = sld_residual(&rho, &d)?;
    prop_assert!(worst <= 1e-9, "residual {worst:e}");
    Ok(())
}

/// The same relation for the rank-deficient states of the lossy probe.
pub fn sld_residual_probe(ratio: f64, gamma_ev: f64, t: f64) -> PropResult {
    let p = resonant(ratio, gamma_ev);
    let rho = analytic_rho(&p, t).unwrap();
    let d = analytic_drho_dg(&p, t).unwrap();
    let worst = sld_residual(&rho, &d)?;
    prop_assert!(worst <= 1e-9 * (1.0 + d.max_abs()), "residual {worst:e}");
    Ok(())
}

/// F ≥ 0 for random states and along probe trajectories.
pub fn qfi_non_negative(n: usize, a: &[f64], b: &[f64], eps: f64, ratio: f64, gamma_ev: f64, t: f64) -> PropResult {
    let (rho, d) = random_pair(n, a, b, eps);
    let f = qfi_mixed(&rho, &d, EIGEN_CUTOFF).unwrap();
    prop_assert!(f >= -1e-9, "F = {f}");
    let f = qfi_g_resonant(&resonant(ratio, gamma_ev), t).unwrap();
    prop_assert!(f >= -1e-9, "F = {f}");
    Ok(())
}

/// The manifold norm never grows under loss, for one or many probes.
pub fn norm_monotone(ratio: f64, gamma_ev: f64, n_probes: usize, init: u8) -> PropResult {
    let p = resonant(ratio, gamma_ev);
    let times = linspace(0.0, 100.0, 41);
    let mut prev = f64::INFINITY;
    for &t in &times {
        let psi = psi_f(&p, t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!(n2 <= prev + 1e-10, "norm grew at t = {t}");
        prev = n2;
    }
    let initial = [InitialState::F1, InitialState::Chi1, InitialState::EPlusChi1][init as usize % 3];
    let m = NProbeModel::new(n_probes, p.g, p.gamma_e, initial).unwrap();
    let grid = TimeGrid::new(0.0, 100.0, 41).unwrap();
    let traj = evolve_nprobe(&m, &grid).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let mut prev = f64::INFINITY;
    for rho in &traj {
        let block = 1.0 - rho.population(rho.dim() - 1);
        prop_assert!(block <= prev + 1e-10);
        prev = block;
    }
    Ok(())
}

fn delta_g(p: &ThreeLevelParams, t: f64) -> f64 {
    let rho = analytic_rho(p, t).unwrap();
    let d = analytic_drho_dg(p, t).unwrap();
    let pf = rho.population(F);
    (pf * (1.0 - pf)).max(0.0).sqrt() / d[(F, F)].re.abs()
}

/// Scalar closed forms and the lifted non-Hermitian state pass through
/// the exceptional point g = γ_e/4 without jumps.
pub fn ep_continuity(gamma_ev: f64, log_eps: f64, above: bool, t: f64) -> PropResult {
    let ep = resonant(0.25, gamma_ev);
    let eps = 10f64.powf(log_eps) * if above { 1.0 } else { -1.0 };
    let near = ep.with(optsense::Parameter::G, ep.g * (1.0 + eps));

    let lifted = lift_to_3x3(&psi_f(&near, t).unwrap()).unwrap();
    let exact = analytic_rho(&near, t).unwrap();
    let gap = lifted.matrix().max_abs_diff(exact.matrix()).unwrap();
    prop_assert!(gap <= 1e-8, "lift vs closed form differ by {gap:e}");

    let probe = |f: &dyn Fn(&ThreeLevelParams) -> f64| -> PropResult {
        let at = f(&ep);
        let wide = 1e-2;
        let slope = (f(&ep.with(optsense::Parameter::G, ep.g * (1.0 + wide)))
            - f(&ep.with(optsense::Parameter::G, ep.g * (1.0 - wide))))
        .abs()
            / (2.0 * wide);
        let jump = (f(&near) - at).abs();
        let allowed = 2.0 * slope * eps.abs() + 1e4 * eps * eps * (1.0 + at.abs()) + 1e-9 * (1.0 + at.abs());
        prop_assert!(jump <= allowed, "jump {jump:e} exceeds {allowed:e}");
        Ok(())
    };
    probe(&|p| analytic_rho(p, t).unwrap().population(F))?;
    probe(&|p| analytic_rho(p, t).unwrap().element(F, 0).im)?;
    probe(&|p| qfi_g_resonant(p, t).unwrap())?;
    probe(&|p| qfi_nh_mixed3(p, t).unwrap())?;
    probe(&|p| delta_g(p, t))?;
    Ok(())
}
