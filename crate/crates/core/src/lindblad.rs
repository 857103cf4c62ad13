//! Three-level lossy probe: levels `e`, `f` and a sink `s`, coupled by
//! `H/ħ = g(|e⟩⟨f| + |f⟩⟨e|) + Δ(|f⟩⟨f| − |e⟩⟨e|)` and drained by the jump
//! operator `L_e = √γ_e |s⟩⟨e|`.
//!
//! Internally every time is in fs and every rate or energy-over-ħ is in fs⁻¹.
//! Conversions from eV happen once, at the boundary, via [`ev_to_ifs`].

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, ComplexMatrix, C64, I, ONE, ZERO};
use crate::ode::rk4_sampled;

/// Reduced Planck constant in eV·fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

/// Default RK4 step in fs.
pub const DEFAULT_DT_FS: f64 = 0.01;

/// Basis indices of the three-level model.
pub const E: usize = 0;
pub const F: usize = 1;
pub const S: usize = 2;

/// Energy in eV to angular frequency in fs⁻¹.
pub fn ev_to_ifs(ev: f64) -> f64 {
    ev / HBAR_EV_FS
}

pub fn ifs_to_ev(rate: f64) -> f64 {
    rate * HBAR_EV_FS
}

/// Which physical parameter a derivative or estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameter {
    /// Coupling g.
    G,
    /// Detuning Δ.
    Delta,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::G => "g",
            Parameter::Delta => "delta",
        }
    }
}

impl std::str::FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g" => Ok(Parameter::G),
            "delta" | "d" => Ok(Parameter::Delta),
            other => Err(Error::Config(format!("unknown parameter '{other}' (expected g or delta)"))),
        }
    }
}

/// Physical constants of the three-level model, all in fs⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelParams {
    pub g: f64,
    pub delta: f64,
    pub gamma_e: f64,
}

impl ThreeLevelParams {
    pub fn new(g: f64, delta: f64, gamma_e: f64) -> Result<Self> {
        if !g.is_finite() || !delta.is_finite() || !gamma_e.is_finite() {
            return Err(Error::Validation("parameters must be finite".into()));
        }
        if gamma_e < 0.0 {
            return Err(Error::Validation(format!("decay rate must be non-negative, got {gamma_e}")));
        }
        Ok(Self { g, delta, gamma_e })
    }

    /// Parameters given as energies ħg, ħΔ, ħγ_e in eV.
    pub fn from_ev(g_ev: f64, delta_ev: f64, gamma_e_ev: f64) -> Result<Self> {
        Self::new(ev_to_ifs(g_ev), ev_to_ifs(delta_ev), ev_to_ifs(gamma_e_ev))
    }

    /// α² = 16g² − γ_e².
    pub fn alpha_squared(&self) -> f64 {
        16.0 * self.g * self.g - self.gamma_e * self.gamma_e
    }

    /// α = √(16g² − γ_e²); purely imaginary (positive imaginary part) below
    /// the exceptional point.
    pub fn alpha(&self) -> C64 {
        let a2 = self.alpha_squared();
        if a2 >= 0.0 {
            C64::new(a2.sqrt(), 0.0)
        } else {
            C64::new(0.0, (-a2).sqrt())
        }
    }

    pub fn get(&self, which: Parameter) -> f64 {
        match which {
            Parameter::G => self.g,
            Parameter::Delta => self.delta,
        }
    }

    pub fn with(&self, which: Parameter, value: f64) -> Self {
        let mut p = *self;
        match which {
            Parameter::G => p.g = value,
            Parameter::Delta => p.delta = value,
        }
        p
    }

    /// Typical rate of the model; used to scale finite-difference steps for
    /// parameters whose nominal value is zero.
    pub fn rate_scale(&self) -> f64 {
        self.g.abs().max(self.delta.abs()).max(self.gamma_e).max(f64::MIN_POSITIVE)
    }
}

/// Tolerances applied when validating a density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTolerances {
    pub hermitian: f64,
    pub trace: f64,
    /// Most negative eigenvalue accepted (as a positive number).
    pub positivity: f64,
}

impl Default for DensityTolerances {
    fn default() -> Self {
        Self { hermitian: 1e-10, trace: 1e-10, positivity: 1e-9 }
    }
}

impl DensityTolerances {
    /// Looser tolerances for numerically integrated trajectories.
    pub fn trajectory() -> Self {
        Self { hermitian: 1e-10, trace: 1e-8, positivity: 1e-8 }
    }
}

/// A validated density matrix with labelled basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    labels: Vec<String>,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix, labels: Vec<String>) -> Result<Self> {
        Self::with_tolerances(mat, labels, DensityTolerances::default())
    }

    pub fn with_tolerances(mat: ComplexMatrix, labels: Vec<String>, tol: DensityTolerances) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Shape(format!("density matrix must be square, got {}x{}", mat.rows(), mat.cols())));
        }
        if labels.len() != mat.rows() {
            return Err(Error::Shape(format!("{} labels for dimension {}", labels.len(), mat.rows())));
        }
        let defect = mat.hermiticity_defect();
        if defect > tol.hermitian {
            return Err(Error::Validation(format!("density matrix not Hermitian (defect {defect:e})")));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(Error::Validation(format!("density matrix trace is {tr}, expected 1")));
        }
        let eig = hermitian_eigen(&mat, tol.hermitian)?;
        if eig.eigenvalues[0] < -tol.positivity {
            return Err(Error::Validation(format!(
                "density matrix has negative eigenvalue {:e}",
                eig.eigenvalues[0]
            )));
        }
        Ok(Self { mat: mat.hermitian_part(), labels })
    }

    /// Builds `|ψ⟩⟨ψ| ⊕ (1 − ⟨ψ|ψ⟩)`: a sub-normalised pure block plus one
    /// sink level holding the missing population.
    ///
    /// Positivity holds by construction, so only the norm is checked.
    pub fn from_block_and_sink(psi: &[C64], labels: Vec<String>) -> Result<Self> {
        let n = psi.len();
        if labels.len() != n + 1 {
            return Err(Error::Shape(format!("{} labels for dimension {}", labels.len(), n + 1)));
        }
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 > 1.0 + 1e-9 || !norm2.is_finite() {
            return Err(Error::Validation(format!("state norm² {norm2} exceeds 1")));
        }
        let mut mat = ComplexMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        mat[(n, n)] = C64::new((1.0 - norm2).max(0.0), 0.0);
        Ok(Self { mat, labels })
    }

    /// |k⟩⟨k| in a basis of the given labels.
    pub fn basis_state(k: usize, labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if k >= n {
            return Err(Error::Validation(format!("basis index {k} out of range for dimension {n}")));
        }
        let mut mat = ComplexMatrix::zeros(n, n);
        mat[(k, k)] = ONE;
        Ok(Self { mat, labels })
    }

    /// The three-level state |f⟩⟨f|.
    pub fn excited_f() -> Self {
        Self::basis_state(F, three_level_labels()).expect("f is a valid basis index")
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn element(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn population(&self, k: usize) -> f64 {
        self.mat[(k, k)].re
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }
}

pub fn three_level_labels() -> Vec<String> {
    vec!["e".into(), "f".into(), "s".into()]
}

/// Uniformly spaced sample times, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if !t_start.is_finite() || !t_end.is_finite() || t_end <= t_start {
            return Err(Error::Validation(format!("time grid needs t_end > t_start, got [{t_start}, {t_end}]")));
        }
        if n_points < 2 {
            return Err(Error::Validation(format!("time grid needs at least 2 points, got {n_points}")));
        }
        Ok(Self { t_start, t_end, n_points })
    }

    pub fn spacing(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        linspace(self.t_start, self.t_end, self.n_points)
    }
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n).map(|k| if k == n - 1 { b } else { a + h * k as f64 }).collect()
        }
    }
}

/// H/ħ over the basis (e, f, s), in fs⁻¹.
pub fn build_hamiltonian(p: &ThreeLevelParams) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(3, 3);
    h[(E, F)] = C64::new(p.g, 0.0);
    h[(F, E)] = C64::new(p.g, 0.0);
    h[(F, F)] = C64::new(p.delta, 0.0);
    h[(E, E)] = C64::new(-p.delta, 0.0);
    h
}

/// L_e = √γ_e |s⟩⟨e|.
pub fn jump_operator(p: &ThreeLevelParams) -> Result<ComplexMatrix> {
    if !(p.gamma_e >= 0.0) {
        return Err(Error::Validation(format!("decay rate must be non-negative, got {}", p.gamma_e)));
    }
    let mut l = ComplexMatrix::zeros(3, 3);
    l[(S, E)] = C64::new(p.gamma_e.sqrt(), 0.0);
    Ok(l)
}

/// Pre-assembled GKSL generator
/// `ρ̇ = −i(H_nh ρ − ρ H_nh†) + Σ_k L_k ρ L_k†` with `H_nh = H − (i/2) Σ L_k†L_k`.
#[derive(Debug, Clone)]
pub struct GkslGenerator {
    dim: usize,
    h_nh: ComplexMatrix,
    jumps: Vec<ComplexMatrix>,
    jumps_dag: Vec<ComplexMatrix>,
}

impl GkslGenerator {
    pub fn new(h: &ComplexMatrix, jumps: &[ComplexMatrix]) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Shape("Hamiltonian must be square".into()));
        }
        let n = h.rows();
        let mut h_nh = h.clone();
        for l in jumps {
            if l.rows() != n || l.cols() != n {
                return Err(Error::Shape(format!(
                    "jump operator is {}x{}, Hamiltonian is {n}x{n}",
                    l.rows(),
                    l.cols()
                )));
            }
            let ldl = &l.adjoint() * l;
            h_nh = &h_nh - &ldl.scale(C64::new(0.0, 0.5));
        }
        Ok(Self {
            dim: n,
            h_nh,
            jumps: jumps.to_vec(),
            jumps_dag: jumps.iter().map(ComplexMatrix::adjoint).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes ρ̇ for row-major `rho` into `out`.
    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let h = self.h_nh.as_slice();
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    // H ρ − ρ H†
                    acc += h[i * n + k] * rho[k * n + j] - rho[i * n + k] * h[j * n + k].conj();
                }
                out[i * n + j] = C64::new(acc.im, -acc.re); // −i·acc
            }
        }
        for (l, ld) in self.jumps.iter().zip(&self.jumps_dag) {
            let l = l.as_slice();
            let ld = ld.as_slice();
            for i in 0..n {
                for j in 0..n {
                    let mut acc = ZERO;
                    for a in 0..n {
                        let lia = l[i * n + a];
                        if lia == ZERO {
                            continue;
                        }
                        for b in 0..n {
                            acc += lia * rho[a * n + b] * ld[b * n + j];
                        }
                    }
                    out[i * n + j] += acc;
                }
            }
        }
    }
}

/// GKSL right-hand side for a single density matrix.
pub fn gksl_rhs(rho: &DensityMatrix, h: &ComplexMatrix, jumps: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    if h.rows() != rho.dim() || h.cols() != rho.dim() {
        return Err(Error::Shape(format!(
            "{}x{} Hamiltonian with {}-level state",
            h.rows(),
            h.cols(),
            rho.dim()
        )));
    }
    let gen = GkslGenerator::new(h, jumps)?;
    let n = rho.dim();
    let mut out = vec![ZERO; n * n];
    gen.apply(rho.matrix().as_slice(), &mut out);
    ComplexMatrix::new(n, n, out)
}

/// Integrates the GKSL equation with fixed-step RK4 and returns the state at
/// each sample time. Trajectory samples are validated with
/// [`DensityTolerances::trajectory`].
pub fn evolve_gksl_at(
    h: &ComplexMatrix,
    jumps: &[ComplexMatrix],
    rho0: &DensityMatrix,
    times: &[f64],
    dt: f64,
) -> Result<Vec<DensityMatrix>> {
    let gen = GkslGenerator::new(h, jumps)?;
    if gen.dim() != rho0.dim() {
        return Err(Error::Shape(format!("{}-level generator with {}-level state", gen.dim(), rho0.dim())));
    }
    let n = rho0.dim();
    let raw = rk4_sampled(rho0.matrix().as_slice(), times, dt, |y, out| gen.apply(y, out))?;
    let labels = rho0.labels().to_vec();
    let mut out = Vec::with_capacity(raw.len());
    for (t, entries) in times.iter().zip(raw) {
        let mat = ComplexMatrix::new(n, n, entries)?.hermitian_part();
        let drift = (mat.trace().re - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::Numerical(format!("trace drifted by {drift:e} at t = {t} fs")));
        }
        let rho = DensityMatrix::with_tolerances(mat, labels.clone(), DensityTolerances::trajectory())
            .map_err(|e| Error::Numerical(format!("invalid state at t = {t} fs: {e}")))?;
        out.push(rho);
    }
    Ok(out)
}

/// RK4 trajectory of the three-level model sampled on `grid`.
pub fn evolve_gksl(p: &ThreeLevelParams, rho0: &DensityMatrix, grid: &TimeGrid, dt: f64) -> Result<Vec<DensityMatrix>> {
    if dt > grid.spacing() * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "time step {dt} fs exceeds grid spacing {} fs",
            grid.spacing()
        )));
    }
    let h = build_hamiltonian(p);
    let l = jump_operator(p)?;
    evolve_gksl_at(&h, &[l], rho0, &grid.times(), dt)
}

// Closed-form resonant solution, written in the entire functions
//   c0(u) = cos√u,  s1(u) = sin√u/√u,  k2(u) = (1 − cos√u)/u,
// with u = α²t²/4 real on both sides of the exceptional point, each
// pre-multiplied by the decay envelope exp(−γ_e t/2).

const SERIES_RADIUS: f64 = 0.5;
const SERIES_TERMS: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Kernel {
    c0: f64,
    s1: f64,
    k2: f64,
    dc0: f64,
    ds1: f64,
    dk2: f64,
}

fn kernel(u: f64, decay_arg: f64) -> Kernel {
    let env = (-decay_arg).exp();
    if u.abs() < SERIES_RADIUS {
        // Σ (−u)^k / (2k+m)! for m = 0, 1, 2 and their u-derivatives
        let mut c0 = 0.0;
        let mut s1 = 0.0;
        let mut k2 = 0.0;
        let mut ds1 = 0.0;
        let mut dk2 = 0.0;
        let mut pow = 1.0; // (−u)^k
        let mut pow_prev = 0.0; // (−u)^(k−1) · (−1)
        let mut fact = 1.0; // (2k)!
        for k in 0..SERIES_TERMS {
            let kf = k as f64;
            let f1 = fact * (2.0 * kf + 1.0);
            let f2 = f1 * (2.0 * kf + 2.0);
            c0 += pow / fact;
            s1 += pow / f1;
            k2 += pow / f2;
            if k > 0 {
                ds1 += kf * pow_prev / f1;
                dk2 += kf * pow_prev / f2;
            }
            pow_prev = -pow;
            pow *= -u;
            fact = f2;
        }
        return Kernel {
            c0: env * c0,
            s1: env * s1,
            k2: env * k2,
            dc0: -0.5 * env * s1,
            ds1: env * ds1,
            dk2: env * dk2,
        };
    }
    let (c0, s1) = if u > 0.0 {
        let r = u.sqrt();
        (env * r.cos(), env * r.sin() / r)
    } else {
        // env·cosh r and env·sinh r without overflow; r ≤ decay_arg
        let r = (-u).sqrt();
        let plus = (r - decay_arg).exp();
        let minus = (-r - decay_arg).exp();
        (0.5 * (plus + minus), 0.5 * (plus - minus) / r)
    };
    let k2 = (env - c0) / u;
    Kernel { c0, s1, k2, dc0: -0.5 * s1, ds1: (c0 - s1) / (2.0 * u), dk2: (0.5 * s1 - k2) / u }
}

/// Resonant (Δ = 0) populations, coherence and their g-derivatives for the
/// probe started in |f⟩.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ResonantElements {
    pub ff: f64,
    pub ee: f64,
    pub ss: f64,
    /// ρ_fe = ⟨f|ρ|e⟩ (purely imaginary).
    pub fe: C64,
    pub dff: f64,
    pub dee: f64,
    pub dss: f64,
    pub dfe: C64,
    /// 1 − ρ_ff evaluated without cancellation against 1.
    pub one_minus_ff: f64,
}

pub(crate) fn resonant_elements(g: f64, gamma: f64, t: f64) -> ResonantElements {
    let a2 = 16.0 * g * g - gamma * gamma;
    let u = 0.25 * a2 * t * t;
    let k = kernel(u, 0.5 * gamma * t);
    let env = (-0.5 * gamma * t).exp();
    let t2 = t * t;
    let du_dg = 8.0 * g * t2;

    let ff = 0.5 * (env + k.c0) + 0.125 * gamma * gamma * t2 * k.k2 + 0.5 * gamma * t * k.s1;
    let ee = 2.0 * g * g * t2 * k.k2;
    let q = 0.25 * gamma * t2 * k.k2 + 0.5 * t * k.s1;
    let fe = 2.0 * g * q * I;

    let dff = (0.5 * k.dc0 + 0.125 * gamma * gamma * t2 * k.dk2 + 0.5 * gamma * t * k.ds1) * du_dg;
    let dee = 4.0 * g * t2 * k.k2 + 2.0 * g * g * t2 * k.dk2 * du_dg;
    let dq = (0.25 * gamma * t2 * k.dk2 + 0.5 * t * k.ds1) * du_dg;
    let dfe = 2.0 * (q + g * dq) * I;

    let ss = 1.0 - ff - ee;
    ResonantElements {
        ff,
        ee,
        ss,
        fe,
        dff,
        dee,
        dss: -dff - dee,
        dfe,
        one_minus_ff: ee + ss,
    }
}

fn resonant_matrix(ff: f64, ee: f64, ss: f64, fe: C64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(3, 3);
    m[(E, E)] = C64::new(ee, 0.0);
    m[(F, F)] = C64::new(ff, 0.0);
    m[(S, S)] = C64::new(ss, 0.0);
    m[(F, E)] = fe;
    m[(E, F)] = fe.conj();
    m
}

fn require_resonant(p: &ThreeLevelParams) -> Result<()> {
    if p.delta != 0.0 {
        return Err(Error::Unsupported(format!(
            "the closed-form solution holds only at zero detuning (delta = {}); use the RK4 integrator",
            p.delta
        )));
    }
    Ok(())
}

/// Closed-form density matrix at time `t` for the resonant probe started in
/// |f⟩. Valid on both sides of, and at, the exceptional point g = γ_e/4.
pub fn analytic_rho(p: &ThreeLevelParams, t: f64) -> Result<DensityMatrix> {
    require_resonant(p)?;
    let r = resonant_elements(p.g, p.gamma_e, t);
    DensityMatrix::new(resonant_matrix(r.ff, r.ee, r.ss, r.fe), three_level_labels())
}

/// ∂ρ/∂g of [`analytic_rho`], differentiated in closed form.
pub fn analytic_drho_dg(p: &ThreeLevelParams, t: f64) -> Result<ComplexMatrix> {
    require_resonant(p)?;
    let r = resonant_elements(p.g, p.gamma_e, t);
    Ok(resonant_matrix(r.dff, r.dee, r.dss, r.dfe))
}
