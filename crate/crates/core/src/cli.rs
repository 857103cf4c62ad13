//! Command-line front end: run configuration, subcommands and CSV tables.
//!
//! A run is configured by an optional flat `key = value` file plus
//! `--set key=value` overrides. Rates take a unit suffix, `_ev` or `_ifs`.
//! Every key a command reads is echoed, defaults included, in a `#` block
//! above the CSV header, and keys the command does not read are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::estimation::{
    error_propagation, resource_ratio, run_protocol_study, run_shot_study, EstimationConfig, WindowSampling,
};
use crate::lindblad::{
    analytic_rho, ev_to_ifs, evolve_gksl, linspace, DensityMatrix, Parameter, ThreeLevelParams, TimeGrid,
    DEFAULT_DT_FS, E, F, S,
};
use crate::nonhermitian::{qfi_nh_series, qfi_nprobe, InitialState, NProbeModel, NhVariant, ScalingFit};
use crate::qfi::{qfi_series_with_dt, ParamDerivativeSpec, QfiSeries, DEFAULT_FD_STEP, DEFAULT_WINDOW_THRESHOLD};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "optsense", version, about = "Time-resolved quantum Fisher information for lossy probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Set one configuration key, overriding the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Write the CSV table to this file instead of standard output.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Density-matrix elements of the three-level probe started in |f⟩.
    Evolve {
        /// Closed form (resonant only) or RK4 integration of the master equation.
        #[arg(long)]
        method: Option<Method>,
    },
    /// F(t) with its peak and measurement window.
    Qfi,
    /// Peak F against the number of probes, with a power-law fit.
    Nprobe,
    /// Propagated error of the |f⟩ population readout next to 1/√F.
    Errorprop,
    /// Monte Carlo rmse of the fitted coupling against shots per time.
    Estimate,
    /// Coarse full-range fit, then a fit inside the QFI window.
    Protocol,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evolve { .. } => "evolve",
            Command::Qfi => "qfi",
            Command::Nprobe => "nprobe",
            Command::Errorprop => "errorprop",
            Command::Estimate => "estimate",
            Command::Protocol => "protocol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    Rk4,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(Method::Analytic),
            "rk4" => Ok(Method::Rk4),
            other => Err(Error::Config(format!("unknown method '{other}' (expected analytic or rk4)"))),
        }
    }
}

impl Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Rk4 => "rk4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    Gksl,
    NhPure,
    NhMixed2,
    NhMixed3,
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gksl" => Ok(Route::Gksl),
            "nh_pure" => Ok(Route::NhPure),
            "nh_mixed2" => Ok(Route::NhMixed2),
            "nh_mixed3" => Ok(Route::NhMixed3),
            other => Err(Error::Config(format!(
                "unknown route '{other}' (expected gksl, nh_pure, nh_mixed2 or nh_mixed3)"
            ))),
        }
    }
}

/// Flat key/value run configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped and a key may appear only once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", k + 1)))?;
            if cfg.values.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: key '{key}' given twice", k + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment).map_err(Error::Config)?;
        self.values.insert(key, value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

fn split_assignment(s: &str) -> std::result::Result<(String, String), String> {
    let (key, value) = s.split_once('=').ok_or_else(|| format!("expected key = value, got '{s}'"))?;
    let key = key.trim();
    if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("invalid key '{key}'"));
    }
    Ok((key.to_string(), value.trim().to_string()))
}

/// Reads keys for one command, remembering what was read and the value used.
struct Reader<'a> {
    cfg: &'a RunConfig,
    used: BTreeSet<String>,
    echo: Vec<(String, String)>,
}

impl<'a> Reader<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, used: BTreeSet::new(), echo: Vec::new() }
    }

    fn record(&mut self, key: &str, value: String) {
        self.used.insert(key.to_string());
        self.echo.push((key.to_string(), value));
    }

    fn value<T>(&mut self, key: &str, default: impl Display) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.cfg.get(key).map(str::to_string).unwrap_or_else(|| default.to_string());
        let parsed = raw.parse::<T>().map_err(|e| Error::Config(format!("{key} = {raw}: {e}")))?;
        self.record(key, raw);
        Ok(parsed)
    }

    /// A rate given as `<name>_ev` or `<name>_ifs`, returned in fs⁻¹.
    fn rate(&mut self, name: &str, default_ev: f64) -> Result<f64> {
        if self.cfg.get(name).is_some() {
            return Err(Error::Config(format!("key '{name}' needs a unit suffix: {name}_ev or {name}_ifs")));
        }
        let ev = format!("{name}_ev");
        let ifs = format!("{name}_ifs");
        match (self.cfg.get(&ev).is_some(), self.cfg.get(&ifs).is_some()) {
            (true, true) => Err(Error::Config(format!("give only one of {ev} and {ifs}"))),
            (false, true) => self.value(&ifs, ""),
            (_, false) => self.value::<f64>(&ev, default_ev).map(ev_to_ifs),
        }
    }

    /// g from `g_ev`, `g_ifs` or `g_over_gamma` (default 0.25).
    fn coupling(&mut self, gamma_e: f64) -> Result<f64> {
        let explicit = self.cfg.get("g_ev").is_some() || self.cfg.get("g_ifs").is_some() || self.cfg.get("g").is_some();
        if explicit {
            if self.cfg.get("g_over_gamma").is_some() {
                return Err(Error::Config("give the coupling either in absolute units or as g_over_gamma".into()));
            }
            return self.rate("g", 0.0);
        }
        Ok(self.value::<f64>("g_over_gamma", 0.25)? * gamma_e)
    }

    fn params(&mut self, with_detuning: bool) -> Result<ThreeLevelParams> {
        let gamma_e = self.rate("gamma_e", 0.150)?;
        let g = self.coupling(gamma_e)?;
        let delta = if with_detuning { self.rate("delta", 0.0)? } else { 0.0 };
        ThreeLevelParams::new(g, delta, gamma_e)
    }

    fn grid(&mut self, default_points: usize) -> Result<TimeGrid> {
        let t0 = self.value("t_start_fs", 0.0)?;
        let t1 = self.value("t_end_fs", 100.0)?;
        let n = self.value("n_points", default_points)?;
        TimeGrid::new(t0, t1, n)
    }

    /// Integration step; the default never exceeds the grid spacing.
    fn dt(&mut self, grid: &TimeGrid) -> Result<f64> {
        self.value("dt_fs", DEFAULT_DT_FS.min(grid.spacing()))
    }

    /// Fails on any configured key this command did not read.
    fn seal(&self, command: &str) -> Result<()> {
        let unknown: Vec<&str> =
            self.cfg.values.keys().filter(|k| !self.used.contains(*k)).map(String::as_str).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown key(s) for {command}: {}", unknown.join(", "))))
        }
    }
}

/// Rectangular table of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| format_number(x)).collect());
    }
}

/// 17 significant digits, `inf`/`-inf`/`nan` for non-finite values.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// CSV text and the summary lines meant for standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub csv: String,
    pub summary: Vec<String>,
}

fn render(command: &str, echo: &[(String, String)], table: &CsvTable) -> String {
    let mut out = format!("# optsense {command}\n");
    for (k, v) in echo {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str(&table.header.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Builds the configuration from the command line and runs the command.
pub fn run(cli: &Cli) -> Result<Output> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.set(s)?;
    }
    execute(&cli.command, &cfg)
}

pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Output> {
    let mut r = Reader::new(cfg);
    let name = command.name();
    let (table, summary) = match command {
        Command::Evolve { method } => cmd_evolve(&mut r, *method)?,
        Command::Qfi => cmd_qfi(&mut r)?,
        Command::Nprobe => cmd_nprobe(&mut r)?,
        Command::Errorprop => cmd_errorprop(&mut r)?,
        Command::Estimate => cmd_estimate(&mut r)?,
        Command::Protocol => cmd_protocol(&mut r)?,
    };
    Ok(Output { csv: render(name, &r.echo, &table), summary })
}

type Produced = (CsvTable, Vec<String>);

fn cmd_evolve(r: &mut Reader, flag: Option<Method>) -> Result<Produced> {
    let p = r.params(true)?;
    let grid = r.grid(1001)?;
    let method = match flag {
        Some(m) => {
            r.record("method", m.to_string());
            m
        }
        None => r.value("method", Method::Analytic)?,
    };
    let dt = r.dt(&grid)?;
    r.seal("evolve")?;

    let times = grid.times();
    let states: Vec<DensityMatrix> = match method {
        Method::Analytic => times.par_iter().map(|&t| analytic_rho(&p, t)).collect::<Result<_>>()?,
        Method::Rk4 => evolve_gksl(&p, &DensityMatrix::excited_f(), &grid, dt)?,
    };
    let mut table = CsvTable::new(&["t_fs", "rho_ee", "rho_ff", "rho_ss", "re_rho_fe", "im_rho_fe"]);
    for (t, rho) in times.iter().zip(&states) {
        let fe = rho.element(F, E);
        table.push_numbers(&[*t, rho.population(E), rho.population(F), rho.population(S), fe.re, fe.im]);
    }
    let last = states.last().expect("grid has at least two points");
    let summary = vec![format!(
        "evolve ({method}): {} samples, final populations e {:.6e}, f {:.6e}, s {:.6e}",
        states.len(),
        last.population(E),
        last.population(F),
        last.population(S)
    )];
    Ok((table, summary))
}

fn cmd_qfi(r: &mut Reader) -> Result<Produced> {
    let p = r.params(true)?;
    let grid = r.grid(1001)?;
    let wrt: Parameter = r.value("wrt", "g")?;
    let route: Route = r.value("route", "gksl")?;
    let threshold: f64 = r.value("threshold", DEFAULT_WINDOW_THRESHOLD)?;
    let series = if route == Route::Gksl {
        let derivative: String = r.value("derivative", "analytic")?;
        let step: f64 = r.value("fd_step", DEFAULT_FD_STEP)?;
        let spec = match derivative.as_str() {
            "analytic" => ParamDerivativeSpec { step, ..ParamDerivativeSpec::default() },
            "central" => ParamDerivativeSpec::central(step)?,
            other => return Err(Error::Config(format!("unknown derivative '{other}' (expected analytic or central)"))),
        };
        let dt = r.dt(&grid)?;
        r.seal("qfi")?;
        qfi_series_with_dt(&p, &DensityMatrix::excited_f(), &grid, wrt, spec, dt)?
    } else {
        if wrt != Parameter::G {
            return Err(Error::Config("the non-Hermitian routes differentiate in g only".into()));
        }
        r.seal("qfi")?;
        let variant = match route {
            Route::NhPure => NhVariant::Pure2,
            Route::NhMixed2 => NhVariant::Mixed2,
            _ => NhVariant::Mixed3,
        };
        qfi_nh_series(&p, &grid, variant)?
    };
    let series = QfiSeries::with_threshold(series.times, series.values, wrt, threshold)?;

    let mut table = CsvTable::new(&["t_fs", "F", "inv_sqrt_F"]);
    for (t, f) in series.times.iter().zip(&series.values) {
        let inv = if *f > 0.0 { 1.0 / f.sqrt() } else { f64::INFINITY };
        table.push_numbers(&[*t, *f, inv]);
    }
    let summary = vec![format!(
        "qfi wrt {}: peak_time = {:.6} fs, peak_F = {:.10e}, window = ({:.6}, {:.6}) fs",
        wrt.name(),
        series.peak_time,
        series.peak_value,
        series.window.0,
        series.window.1
    )];
    Ok((table, summary))
}

fn cmd_nprobe(r: &mut Reader) -> Result<Produced> {
    let p = r.params(false)?;
    let grid = r.grid(1001)?;
    let initial: InitialState = r.value("initial", "f1")?;
    let n_min: usize = r.value("n_min", 1)?;
    let n_max: usize = r.value("n_max", 25)?;
    let n_step: usize = r.value("n_step", 1)?;
    let fit_min: usize = r.value("fit_n_min", n_min)?;
    let fit_max: usize = r.value("fit_n_max", n_max)?;
    r.seal("nprobe")?;
    if n_min == 0 || n_step == 0 || n_max < n_min {
        return Err(Error::Config(format!("need 1 ≤ n_min ≤ n_max and n_step ≥ 1, got {n_min}..{n_max} by {n_step}")));
    }

    let template = NProbeModel::new(1, p.g, p.gamma_e, initial)?;
    let ns: Vec<usize> = (n_min..=n_max).step_by(n_step).collect();
    let peaks = ns
        .par_iter()
        .map(|&n| qfi_nprobe(&template.with_n(n), &grid).map(|s| (s.peak_value, s.peak_time)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = CsvTable::new(&["N", "max_F", "t_peak"]);
    for (n, (f, t)) in ns.iter().zip(&peaks) {
        table.push(vec![n.to_string(), format_number(*f), format_number(*t)]);
    }
    let mut summary = Vec::new();
    match ScalingFit::from_points(ns.clone(), peaks.iter().map(|x| x.0).collect()).and_then(|f| f.subrange(fit_min, fit_max)) {
        Ok(fit) => summary.push(format!(
            "nprobe ({}): max F ∝ N^b with b = {:.4} ± {:.4} over N in [{fit_min}, {fit_max}]",
            initial.name(),
            fit.exponent,
            fit.exponent_stderr
        )),
        Err(e) => summary.push(format!("nprobe ({}): no power-law fit: {e}", initial.name())),
    }
    Ok((table, summary))
}

fn cmd_errorprop(r: &mut Reader) -> Result<Produced> {
    let p = r.params(true)?;
    let grid = r.grid(500)?;
    let wrt: Parameter = r.value("wrt", "g")?;
    r.seal("errorprop")?;

    let ep = error_propagation(&p, &grid, wrt)?;
    let mut table = CsvTable::new(&["t_fs", "delta_param", "inv_sqrt_F"]);
    for k in 0..ep.times.len() {
        table.push_numbers(&[ep.times[k], ep.delta_param[k], ep.inv_sqrt_f[k]]);
    }
    let mut summary = Vec::new();
    if let (Some(kd), Some(kf)) = (ep.argmin(), ep.argmax_qfi()) {
        summary.push(format!(
            "errorprop wrt {}: min delta at {:.6} fs, max F at {:.6} fs (spacing {:.6} fs)",
            wrt.name(),
            ep.times[kd],
            ep.times[kf],
            grid.spacing()
        ));
    }
    Ok((table, summary))
}

fn parse_list(raw: &str) -> Result<Vec<u64>> {
    raw.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| Error::Config(format!("n_shots entry '{s}': {e}"))))
        .collect()
}

fn estimation_config(r: &mut Reader) -> Result<EstimationConfig> {
    let p = r.params(false)?;
    let t0: f64 = r.value("t_start_fs", 0.0)?;
    let t1: f64 = r.value("t_end_fs", 100.0)?;
    let n_times: usize = r.value("n_times", 50)?;
    let mut cfg = EstimationConfig::new(p.g, p.gamma_e);
    cfg.times = linspace(t0, t1, n_times);
    cfg.n_experiments = r.value("n_experiments", cfg.n_experiments)?;
    cfg.seed = r.value("seed", cfg.seed)?;
    let lo: f64 = r.value("fit_lo_over_gamma", 0.01)?;
    let hi: f64 = r.value("fit_hi_over_gamma", 2.0)?;
    cfg.fit_bounds = (lo * p.gamma_e, hi * p.gamma_e);
    let sampling: WindowSampling = r.value("sampling", "resample")?;
    cfg.sampling = sampling;
    cfg.noiseless = r.value("noiseless", false)?;
    Ok(cfg)
}

fn cmd_estimate(r: &mut Reader) -> Result<Produced> {
    let base = estimation_config(r)?;
    let shots_raw: String = r.value("n_shots", "50,100,200,500,1000,2000,5000")?;
    let lo: f64 = r.value("window_lo_fs", 20.0)?;
    let hi: f64 = r.value("window_hi_fs", 60.0)?;
    r.seal("estimate")?;
    let shots = parse_list(&shots_raw)?;

    let full = run_shot_study(&base, &shots)?;
    let windowed = run_shot_study(&EstimationConfig { window: Some((lo, hi)), ..base }, &shots)?;
    let mut table = CsvTable::new(&["n_shot", "rmse_full", "rmse_window"]);
    for (n, (a, b)) in shots.iter().zip(full.rmse.iter().zip(&windowed.rmse)) {
        table.push(vec![n.to_string(), format_number(*a), format_number(*b)]);
    }
    let line = |name: &str, s: &crate::estimation::ShotStudy| {
        format!(
            "{name}: rmse ≈ a·n^b with a = {:.6e}, b = {:.4} ± {:.4}; a/√n fit a = {:.6e}",
            s.prefactor, s.exponent, s.exponent_stderr, s.sqrt_prefactor
        )
    };
    let summary = vec![
        line("full range", &full),
        line(&format!("window ({lo}, {hi}) fs"), &windowed),
        format!("shots for equal rmse, full over window: {:.4}", resource_ratio(&full, &windowed)),
    ];
    Ok((table, summary))
}

fn cmd_protocol(r: &mut Reader) -> Result<Produced> {
    let cfg = estimation_config(r)?;
    let coarse: u64 = r.value("coarse_shots", 100)?;
    let fine: u64 = r.value("fine_shots", 1000)?;
    let threshold: f64 = r.value("threshold", DEFAULT_WINDOW_THRESHOLD)?;
    r.seal("protocol")?;

    let study = run_protocol_study(&cfg, coarse, fine, threshold)?;
    let mut table = CsvTable::new(&[
        "experiment",
        "g_coarse_ifs",
        "g_fine_ifs",
        "window_lo_fs",
        "window_hi_fs",
        "peak_time_fs",
        "fine_converged",
        "total_shots",
    ]);
    for (k, rep) in study.reports.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            format_number(rep.g0),
            format_number(rep.g_hat),
            format_number(rep.window.0),
            format_number(rep.window.1),
            format_number(rep.peak_time),
            u8::from(rep.stage2_converged).to_string(),
            rep.total_shots.to_string(),
        ]);
    }
    let summary = vec![
        format!("protocol: true g = {:.10e} fs⁻¹, {} experiments", cfg.true_g, study.reports.len()),
        format!("stage 1 (full range, {coarse} shots per time): rmse {:.6e}", study.rmse_stage1),
        format!("stage 2 (QFI window, {fine} shots per time): rmse {:.6e}", study.rmse_stage2),
    ];
    Ok((table, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let cfg = RunConfig::parse("# comment\n gamma_e_ev = 0.1  # trailing\n\nseed=4\n").unwrap();
        assert_eq!(cfg.get("gamma_e_ev"), Some("0.1"));
        assert_eq!(cfg.get("seed"), Some("4"));
        assert!(RunConfig::parse("a = 1\na = 2").is_err());
        assert!(RunConfig::parse("no equals sign").is_err());
        assert!(RunConfig::parse("bad key = 1").is_err());
    }

    #[test]
    fn rates_need_exactly_one_unit() {
        let mut cfg = RunConfig::default();
        cfg.set("gamma_e = 0.1").unwrap();
        assert!(Reader::new(&cfg).rate("gamma_e", 0.15).is_err());
        let mut cfg = RunConfig::default();
        cfg.set("gamma_e_ev=0.1").unwrap();
        cfg.set("gamma_e_ifs=0.1").unwrap();
        assert!(Reader::new(&cfg).rate("gamma_e", 0.15).is_err());
        let mut cfg = RunConfig::default();
        cfg.set("gamma_e_ifs=0.25").unwrap();
        assert_eq!(Reader::new(&cfg).rate("gamma_e", 0.15).unwrap(), 0.25);
        let cfg = RunConfig::default();
        assert_eq!(Reader::new(&cfg).rate("gamma_e", 0.15).unwrap(), ev_to_ifs(0.15));
    }

    #[test]
    fn coupling_sources_conflict() {
        let mut cfg = RunConfig::default();
        cfg.set("g_ifs=0.05").unwrap();
        cfg.set("g_over_gamma=0.3").unwrap();
        assert!(Reader::new(&cfg).coupling(0.2).is_err());
        let mut cfg = RunConfig::default();
        cfg.set("g_over_gamma=0.3").unwrap();
        assert!((Reader::new(&cfg).coupling(0.2).unwrap() - 0.06).abs() < 1e-15);
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.0, 1.0, -2.5e-300, std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23] {
            assert_eq!(format_number(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(format_number(f64::INFINITY), "inf");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.set("n_points=11").unwrap();
        cfg.set("typo_key=1").unwrap();
        let err = execute(&Command::Qfi, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("typo_key")), "{err}");
    }

    #[test]
    fn echo_lists_defaults() {
        let mut cfg = RunConfig::default();
        cfg.set("n_points=11").unwrap();
        let out = execute(&Command::Qfi, &cfg).unwrap();
        assert!(out.csv.starts_with("# optsense qfi\n"));
        assert!(out.csv.contains("# gamma_e_ev = 0.15\n"));
        assert!(out.csv.contains("# n_points = 11\n"));
        assert!(out.csv.contains("\nt_fs,F,inv_sqrt_F\n"));
        let rows = out.csv.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 12);
    }
}
