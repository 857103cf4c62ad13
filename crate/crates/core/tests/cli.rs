use std::process::{Command, Output};

use optsense::lindblad::{ev_to_ifs, DensityMatrix, Parameter, ThreeLevelParams, TimeGrid};
use optsense::qfi::{qfi_series, ParamDerivativeSpec};

fn optsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optsense")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn table(csv: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect()).collect();
    (header, rows)
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let (header, rows) = table(csv);
    let k = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[k]).collect()
}

#[test]
fn evolve_methods_agree() {
    let a = stdout(&optsense(&["evolve", "--method", "analytic", "--set", "n_points=101"]));
    let b = stdout(&optsense(&["evolve", "--method", "rk4", "--set", "n_points=101"]));
    let (header, ra) = table(&a);
    let (_, rb) = table(&b);
    assert_eq!(header, ["t_fs", "rho_ee", "rho_ff", "rho_ss", "re_rho_fe", "im_rho_fe"]);
    assert_eq!(ra[0][2], 1.0);
    assert_eq!(ra.len(), 101);
    for (x, y) in ra.iter().zip(&rb) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() < 1e-7);
        }
    }
}

#[test]
fn analytic_evolution_rejects_detuning() {
    let out = optsense(&["evolve", "--set", "delta_ev=0.02"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero detuning"));
    let out = optsense(&["evolve", "--method", "rk4", "--set", "delta_ev=0.02", "--set", "n_points=11"]);
    assert!(out.status.success());
}

#[test]
fn lossless_qfi_column_is_4t2() {
    let csv = stdout(&optsense(&["qfi", "--set", "gamma_e_ev=0", "--set", "g_ifs=0.05", "--set", "n_points=201"]));
    for (t, f) in column(&csv, "t_fs").iter().zip(column(&csv, "F")) {
        let exact = 4.0 * t * t;
        assert!((f - exact).abs() <= 1e-6 * exact);
    }
}

#[test]
fn qfi_summary_and_round_trip() {
    let out = optsense(&["qfi"]);
    let csv = stdout(&out);
    let summary = String::from_utf8_lossy(&out.stderr).to_string();
    let peak: f64 = summary.split("peak_time = ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!((peak - 40.0).abs() < 5.0, "{summary}");

    let f = column(&csv, "F");
    assert!(f.iter().all(|&x| x >= 0.0));
    let gamma = ev_to_ifs(0.15);
    let p = ThreeLevelParams::new(0.25 * gamma, 0.0, gamma).unwrap();
    let grid = TimeGrid::new(0.0, 100.0, 1001).unwrap();
    let lib = qfi_series(&p, &DensityMatrix::excited_f(), &grid, Parameter::G, ParamDerivativeSpec::default()).unwrap();
    for (a, b) in f.iter().zip(&lib.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn nh_routes_track_the_master_equation() {
    let base = ["qfi", "--set", "n_points=101"];
    let gksl = column(&stdout(&optsense(&base)), "F");
    let mixed3 = column(&stdout(&optsense(&[&base[..], &["--set", "route=nh_mixed3"]].concat())), "F");
    for (a, b) in mixed3.iter().zip(&gksl) {
        assert!((a - b).abs() <= 1e-6 * b.abs());
    }
    let out = optsense(&["qfi", "--set", "route=nh_pure", "--set", "wrt=delta"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_probe_row_matches_qfi_peak() {
    let q = optsense(&["qfi"]);
    let summary = String::from_utf8_lossy(&q.stderr).to_string();
    let peak_f: f64 = summary.split("peak_F = ").nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    let csv = stdout(&optsense(&["nprobe", "--set", "n_max=4"]));
    let (header, rows) = table(&csv);
    assert_eq!(header, ["N", "max_F", "t_peak"]);
    assert_eq!(rows.len(), 4);
    assert!((rows[0][1] - peak_f).abs() <= 1e-6 * peak_f);
}

#[test]
fn errorprop_rows() {
    let csv = stdout(&optsense(&["errorprop", "--set", "n_points=50"]));
    assert!(csv.lines().any(|l| l == "0.0000000000000000e0,inf,inf"));
    for (d, s) in column(&csv, "delta_param").iter().zip(column(&csv, "inv_sqrt_F")) {
        if d.is_finite() && s.is_finite() {
            assert!(*d >= s * (1.0 - 1e-9));
        }
    }
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# shot study\nn_experiments = 8\nseed = 3\nn_shots = 100, 400\ng_over_gamma = 0.25 # resonant\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let out = optsense(&["estimate", "--config", cfg, "--output", first.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    assert!(optsense(&["estimate", "--config", cfg, "-o", second.to_str().unwrap()]).status.success());
    let a = std::fs::read(&first).unwrap();
    assert_eq!(a, std::fs::read(&second).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("# seed = 3\n"));
    assert!(text.contains("\nn_shot,rmse_full,rmse_window\n"));

    let other = stdout(&optsense(&["estimate", "--config", cfg, "--set", "seed=4"]));
    assert!(other.contains("# seed = 4\n"));
    assert_ne!(other, text);
}

#[test]
fn protocol_reports_each_experiment() {
    let out = optsense(&["protocol", "--set", "n_experiments=4"]);
    let csv = stdout(&out);
    assert_eq!(table(&csv).1.len(), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage 2"));
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        &["qfi", "--set", "bogus=1"][..],
        &["qfi", "--set", "gamma_e=0.1"],
        &["qfi", "--set", "g_ev=0.01", "--set", "g_ifs=0.01"],
        &["qfi", "--set", "n_points=many"],
        &["qfi", "--config", "/nonexistent/run.cfg"],
        &["nprobe", "--set", "initial=ghz"],
    ] {
        let out = optsense(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn fit_failures_exit_1() {
    let out = optsense(&["estimate", "--set", "noiseless=true", "--set", "n_experiments=2", "--set", "n_shots=10,20"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
