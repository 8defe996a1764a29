use std::path::Path;
use std::process::{Command, Output};

use photon_readout::sweep::{metadata_path, run_point, PointConfig, SweepConfig, SweepTable, SWEEP_CSV_HEADER};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photon-readout")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("{key} missing in\n{text}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

const SYMMETRIC: &str = r#"
mode = "detune-opt"

[fixed]
kappa_MHz = 9.0
gamma_MHz = 3.0
C = 100.0
tau_ns = 150.0

[grid]
Delta_MHz = { min = -100.0, max = 100.0, steps = 2 }
Omega_MHz = { min = 40.0, max = 40.0, steps = 2 }
"#;

fn sweep(dir: &Path, config: &str, name: &str, jobs: &str) -> (Output, SweepTable) {
    let cfg = dir.join(format!("{name}.toml"));
    let csv = dir.join(format!("{name}.csv"));
    std::fs::write(&cfg, config).unwrap();
    let out = cli(&["sweep", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap(), "--jobs", jobs]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(SWEEP_CSV_HEADER));
    (out, SweepTable::read_csv(&text).unwrap())
}

#[test]
fn point_reports_plateau_efficiency() {
    let out = cli(&["point", "--C", "100", "--Omega", "80", "--no-detune-opt"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((field(&text, "eta") - 0.99).abs() < 0.01);
    assert!((field(&text, "chi ") - 1.0).abs() < 1e-3);
    assert!(field(&text, "eta") <= field(&text, "bound") + 1e-6);
}

#[test]
fn zero_drive_is_reported_not_failed() {
    let out = cli(&["point", "--C", "100", "--Omega", "0"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("ZeroField"), "{text}");
    assert_eq!(field(&text, "eta"), 0.0);
}

#[test]
fn validation_errors_exit_with_one() {
    assert_eq!(cli(&["point", "--Omega", "40"]).status.code(), Some(1));
    assert_eq!(cli(&["point", "--C", "100", "--w", "46.5", "--Omega", "40"]).status.code(), Some(1));
    assert_eq!(cli(&["point", "--C", "100", "--Omega", "40", "--kappa", "-1"]).status.code(), Some(1));
    assert_eq!(cli(&["point", "--bogus"]).status.code(), Some(1));
    assert_eq!(cli(&["sweep", "--config", "/nonexistent/sweep.toml"]).status.code(), Some(1));
}

#[test]
fn loose_tolerance_fails_the_invariant_suite() {
    let out = cli(&["check", "--suite", "invariants", "--rel-tol", "1e-4"]);
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn default_invariant_suite_passes() {
    let out = cli(&["check", "--suite", "invariants"]);
    assert!(out.status.success(), "{}", stdout(&out));
}

#[test]
fn mirrored_sweep_is_symmetric_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (out, a) = sweep(dir.path(), SYMMETRIC, "a", "2");
    assert!(out.status.success());
    assert_eq!(a.rows.len(), 4);
    assert_eq!(a.failures(), 0);
    let (neg, pos) = (&a.rows[0], &a.rows[2]);
    assert_eq!((neg.delta_big_mhz, pos.delta_big_mhz), (-100.0, 100.0));
    assert!((neg.eta - pos.eta).abs() < 1e-4);
    assert!((neg.nu_opt_mhz + pos.nu_opt_mhz).abs() < 1e-3);
    assert!((neg.delta_opt_mhz + pos.delta_opt_mhz).abs() < 0.02);

    assert!(metadata_path(&dir.path().join("a.csv")).exists());
    let meta = std::fs::read_to_string(metadata_path(&dir.path().join("a.csv"))).unwrap();
    assert!(meta.contains("rows = 4"), "{meta}");

    let (_, b) = sweep(dir.path(), SYMMETRIC, "b", "1");
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let strip = |r: &photon_readout::sweep::SweepRow| photon_readout::sweep::SweepRow { wall_ms: 0, ..r.clone() };
        assert_eq!(strip(x), strip(y));
    }
}

#[test]
fn single_point_sweep_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = SYMMETRIC
        .replace("min = -100.0, max = 100.0, steps = 2", "min = 120.0, max = 120.0, steps = 1")
        .replace("min = 40.0, max = 40.0, steps = 2", "min = 13.0, max = 13.0, steps = 1");
    let (out, table) = sweep(dir.path(), &config, "one", "1");
    assert!(out.status.success());
    let point: PointConfig = SweepConfig::from_toml(&config).unwrap().points().unwrap()[0];
    let r = run_point(&point).unwrap();
    let row = &table.rows[0];
    assert_eq!(row.eta, r.eta);
    assert_eq!(row.delta_opt_mhz, r.delta_opt_mhz);
    assert_eq!(row.chi_eta, r.chi_eta);
}

#[test]
fn dump_trajectory_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let phase = dir.path().join("p.csv");
    let out = cli(&[
        "dump-trajectory", "--C", "100", "--Delta", "120", "--Omega", "13", "--delta", "15",
        "--out", traj.to_str().unwrap(), "--phase", phase.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let t = std::fs::read_to_string(traj).unwrap();
    assert_eq!(t.lines().next(), Some("t_ns,Re_E,Im_E,Re_P,Im_P,Re_S,Im_S,Omega"));
    assert!(t.lines().count() > 100);
    let p = std::fs::read_to_string(phase).unwrap();
    assert_eq!(p.lines().next(), Some("t_ns,theta_E_rad,theta_LO_rad,abs_E"));
}
