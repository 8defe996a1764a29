//! Single-point runs and (Δ, Ω) grid sweeps with CSV output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{simulate, SimulationError};
use crate::efficiency::{efficiency_bound, retrieval_efficiency, EfficiencyError};
use crate::homodyne::{optimize_lo_frequency, HomodyneError};
use crate::model::{rad_per_ns_to_mhz, ModelError, PhysicalParams, Pulse, TimeGrid, DEFAULT_TOLERANCE};
use crate::optimize::{optimize_point, DeltaSearch, Objective, OptimizeError};

pub const SWEEP_CSV_HEADER: &str =
    "Delta_MHz,Omega_MHz,delta_opt_MHz,nu_opt_MHz,eta,chi,chi_eta,evaluations,wall_ms,error";

/// Largest allowed relative disagreement between a given C and w²/(κγ).
pub const COUPLING_CONSISTENCY: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Error)]
pub enum PointError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Efficiency(#[from] EfficiencyError),
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// How the atom–cavity coupling is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// w derived from C = w²/(κγ).
    Cooperativity(f64),
    /// w/2π in MHz.
    W(f64),
}

impl Coupling {
    /// Accepts C, w or both; both must agree within 1 %.
    pub fn resolve(kappa_mhz: f64, gamma_mhz: f64, c: Option<f64>, w_mhz: Option<f64>) -> Result<Self, ConfigError> {
        match (c, w_mhz) {
            (None, None) => Err(invalid("C", "one of C or w_MHz is required")),
            (Some(c), None) => Ok(Coupling::Cooperativity(c)),
            (None, Some(w)) => Ok(Coupling::W(w)),
            (Some(c), Some(w)) => {
                let derived = w * w / (kappa_mhz * gamma_mhz);
                if ((derived - c) / c).abs() > COUPLING_CONSISTENCY {
                    Err(invalid(
                        "w_MHz",
                        format!("w = {w} MHz gives C = {derived:.4}, inconsistent with C = {c}"),
                    ))
                } else {
                    Ok(Coupling::W(w))
                }
            }
        }
    }

    pub fn w_mhz(&self, kappa_mhz: f64, gamma_mhz: f64) -> f64 {
        match *self {
            Coupling::Cooperativity(c) => (c * kappa_mhz * gamma_mhz).sqrt(),
            Coupling::W(w) => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// δ = 0, only the LO frequency is optimised.
    NoDetuneOpt,
    #[default]
    DetuneOpt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeName {
    #[default]
    Gaussian,
}

/// Everything needed to evaluate one (Δ, Ω) point, MHz/ns conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointConfig {
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub coupling: Coupling,
    pub tau_ns: f64,
    pub delta_big_mhz: f64,
    pub omega_mhz: f64,
    /// Cavity detuning used when δ is not optimised.
    pub delta_mhz: f64,
    pub mode: SweepMode,
    pub objective: Objective,
    pub rel_tol: f64,
}

impl PointConfig {
    pub fn params(&self) -> Result<PhysicalParams, ModelError> {
        PhysicalParams::from_mhz(
            self.kappa_mhz,
            self.gamma_mhz,
            self.coupling.w_mhz(self.kappa_mhz, self.gamma_mhz),
            self.delta_big_mhz,
            self.delta_mhz,
        )
    }

    pub fn pulse(&self) -> Result<Pulse, ModelError> {
        Pulse::gaussian_mhz(self.omega_mhz, self.tau_ns, 0.0)
    }

    pub fn search(&self) -> DeltaSearch {
        DeltaSearch {
            rel_tol: self.rel_tol,
            ..DeltaSearch::default()
        }
    }
}

/// Outcome of one point, MHz convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointReport {
    pub delta_opt_mhz: f64,
    /// ω_opt/2π; NaN when nothing was emitted.
    pub nu_opt_mhz: f64,
    pub eta: f64,
    /// NaN when nothing was emitted.
    pub chi: f64,
    pub chi_eta: f64,
    pub evaluations: usize,
    pub at_boundary: bool,
    pub bound: f64,
}

pub fn run_point(config: &PointConfig) -> Result<PointReport, PointError> {
    let params = config.params()?;
    let pulse = config.pulse()?;
    let bound = efficiency_bound(&params);
    match config.mode {
        SweepMode::DetuneOpt if pulse.omega0 > 0.0 => {
            let r = optimize_point(&params, &pulse, config.objective, &config.search())?;
            Ok(PointReport {
                delta_opt_mhz: rad_per_ns_to_mhz(r.delta_opt),
                nu_opt_mhz: rad_per_ns_to_mhz(r.omega_opt),
                eta: r.eta,
                chi: r.chi,
                chi_eta: r.chi_eta,
                evaluations: r.evaluations,
                at_boundary: r.at_boundary,
                bound,
            })
        }
        _ => {
            let delta = if config.mode == SweepMode::DetuneOpt { 0.0 } else { params.cavity_detuning };
            let params = params.with_cavity_detuning(delta);
            let grid = TimeGrid::for_pulse(&params, &pulse).with_tolerance(config.rel_tol);
            let (traj, _) = simulate(&params, &pulse, &grid)?;
            let eta = retrieval_efficiency(&traj)?;
            let (nu, chi, chi_eta) = match optimize_lo_frequency(&traj) {
                Ok(h) => (rad_per_ns_to_mhz(h.omega_opt), h.chi, h.chi_eta()),
                Err(HomodyneError::ZeroField) => (f64::NAN, f64::NAN, 0.0),
                Err(e) => return Err(e.into()),
            };
            Ok(PointReport {
                delta_opt_mhz: rad_per_ns_to_mhz(delta),
                nu_opt_mhz: nu,
                eta,
                chi,
                chi_eta,
                evaluations: 1,
                at_boundary: false,
                bound,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    fn validate(&self, field: &'static str) -> Result<(), ConfigError> {
        if self.steps < 1 {
            return Err(invalid(field, "steps must be >= 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(invalid(field, format!("need finite min <= max, got {} > {}", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    #[serde(rename = "kappa_MHz")]
    pub kappa_mhz: f64,
    #[serde(rename = "gamma_MHz")]
    pub gamma_mhz: f64,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub cooperativity: Option<f64>,
    #[serde(rename = "w_MHz", default, skip_serializing_if = "Option::is_none")]
    pub w_mhz: Option<f64>,
    pub tau_ns: f64,
    #[serde(default)]
    pub shape: ShapeName,
    #[serde(default = "default_tolerance")]
    pub rel_tol: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "Delta_MHz")]
    pub delta_big_mhz: Axis,
    #[serde(rename = "Omega_MHz")]
    pub omega_mhz: Axis,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Defaults to the CSV path with `.meta.toml` appended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default)]
    pub objective: Objective,
    pub fixed: FixedParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub outputs: Outputs,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: SweepConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.fixed;
        for (field, v) in [("kappa_MHz", f.kappa_mhz), ("gamma_MHz", f.gamma_mhz), ("tau_ns", f.tau_ns), ("rel_tol", f.rel_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be a positive number, got {v}")));
            }
        }
        if let Some(c) = f.cooperativity {
            if !(c.is_finite() && c >= 0.0) {
                return Err(invalid("C", format!("must be >= 0, got {c}")));
            }
        }
        if let Some(w) = f.w_mhz {
            if !(w.is_finite() && w >= 0.0) {
                return Err(invalid("w_MHz", format!("must be >= 0, got {w}")));
            }
        }
        self.coupling()?;
        self.grid.delta_big_mhz.validate("Delta_MHz")?;
        self.grid.omega_mhz.validate("Omega_MHz")?;
        if self.grid.omega_mhz.min < 0.0 {
            return Err(invalid("Omega_MHz", "Rabi frequencies must be >= 0"));
        }
        Ok(())
    }

    pub fn coupling(&self) -> Result<Coupling, ConfigError> {
        Coupling::resolve(self.fixed.kappa_mhz, self.fixed.gamma_mhz, self.fixed.cooperativity, self.fixed.w_mhz)
    }

    /// Point configurations in row-major (Δ outer, Ω inner) order.
    pub fn points(&self) -> Result<Vec<PointConfig>, ConfigError> {
        let coupling = self.coupling()?;
        let omegas = self.grid.omega_mhz.values();
        Ok(self
            .grid
            .delta_big_mhz
            .values()
            .into_iter()
            .flat_map(|d| omegas.iter().map(move |&o| (d, o)))
            .map(|(d, o)| PointConfig {
                kappa_mhz: self.fixed.kappa_mhz,
                gamma_mhz: self.fixed.gamma_mhz,
                coupling,
                tau_ns: self.fixed.tau_ns,
                delta_big_mhz: d,
                omega_mhz: o,
                delta_mhz: 0.0,
                mode: self.mode,
                objective: self.objective,
                rel_tol: self.fixed.rel_tol,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta_big_mhz: f64,
    pub omega_mhz: f64,
    pub delta_opt_mhz: f64,
    pub nu_opt_mhz: f64,
    pub eta: f64,
    pub chi: f64,
    pub chi_eta: f64,
    pub evaluations: usize,
    pub wall_ms: u64,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_point(config: &PointConfig) -> Self {
        let start = Instant::now();
        let outcome = run_point(config);
        let wall_ms = start.elapsed().as_millis() as u64;
        let base = SweepRow {
            delta_big_mhz: config.delta_big_mhz,
            omega_mhz: config.omega_mhz,
            delta_opt_mhz: f64::NAN,
            nu_opt_mhz: f64::NAN,
            eta: f64::NAN,
            chi: f64::NAN,
            chi_eta: f64::NAN,
            evaluations: 0,
            wall_ms,
            error: None,
        };
        match outcome {
            Ok(r) => SweepRow {
                delta_opt_mhz: r.delta_opt_mhz,
                nu_opt_mhz: r.nu_opt_mhz,
                eta: r.eta,
                chi: r.chi,
                chi_eta: r.chi_eta,
                evaluations: r.evaluations,
                ..base
            },
            Err(e) => SweepRow {
                error: Some(e.to_string()),
                ..base
            },
        }
    }

    fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let error = self
            .error
            .as_deref()
            .map(|e| e.replace([',', '\n', '\r'], " "))
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.delta_big_mhz,
            self.omega_mhz,
            self.delta_opt_mhz,
            self.nu_opt_mhz,
            self.eta,
            self.chi,
            self.chi_eta,
            self.evaluations,
            self.wall_ms,
            error
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for row in &self.rows {
            row.write_csv(&mut out)?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`SweepTable::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(SWEEP_CSV_HEADER) {
            return Err("unexpected header".into());
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let cols: Vec<&str> = line.splitn(10, ',').collect();
                if cols.len() != 10 {
                    return Err(format!("line {}: expected 10 columns", i + 2));
                }
                let num = |j: usize| cols[j].parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
                let int = |j: usize| cols[j].parse::<u64>().map_err(|e| format!("line {}: {e}", i + 2));
                Ok(SweepRow {
                    delta_big_mhz: num(0)?,
                    omega_mhz: num(1)?,
                    delta_opt_mhz: num(2)?,
                    nu_opt_mhz: num(3)?,
                    eta: num(4)?,
                    chi: num(5)?,
                    chi_eta: num(6)?,
                    evaluations: int(7)? as usize,
                    wall_ms: int(8)?,
                    error: (!cols[9].is_empty()).then(|| cols[9].to_string()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SweepTable { rows })
    }
}

/// Evaluates every grid point on a pool of `jobs` workers (0 = one per
/// available processor). Rows come back in row-major order.
pub fn run_sweep(config: &SweepConfig, jobs: usize) -> Result<SweepTable, SweepError> {
    config.validate()?;
    let points = config.points()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let rows = pool.install(|| points.par_iter().map(SweepRow::from_point).collect());
    Ok(SweepTable { rows })
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    started: String,
    finished: String,
    jobs: usize,
    rows: usize,
    failures: usize,
    #[serde(rename = "w_MHz")]
    w_mhz: f64,
    #[serde(rename = "C")]
    cooperativity: f64,
    config: &'a SweepConfig,
}

/// Default sidecar path: `<csv>.meta.toml`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.toml");
    PathBuf::from(name)
}

/// Runs the sweep and writes the CSV and metadata sidecar.
pub fn run_sweep_to_files(config: &SweepConfig, csv: &Path, jobs: usize) -> Result<SweepTable, SweepError> {
    let started = chrono::Utc::now();
    let table = run_sweep(config, jobs)?;
    let finished = chrono::Utc::now();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SweepError::Io { path, source }
    };
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(io_err(csv))?;
    fs::write(csv, buf).map_err(io_err(csv))?;

    let coupling = config.coupling()?;
    let w = coupling.w_mhz(config.fixed.kappa_mhz, config.fixed.gamma_mhz);
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started: started.to_rfc3339(),
        finished: finished.to_rfc3339(),
        jobs: if jobs == 0 { rayon::current_num_threads() } else { jobs },
        rows: table.rows.len(),
        failures: table.failures(),
        w_mhz: w,
        cooperativity: w * w / (config.fixed.kappa_mhz * config.fixed.gamma_mhz),
        config,
    };
    let meta_path = config.outputs.metadata.clone().unwrap_or_else(|| metadata_path(csv));
    let text = toml::to_string(&meta).expect("metadata is always serialisable");
    fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
mode = "no-detune-opt"

[fixed]
kappa_MHz = 9.0
gamma_MHz = 3.0
C = 100.0
tau_ns = 150.0

[grid]
Delta_MHz = { min = -100.0, max = 100.0, steps = 2 }
Omega_MHz = { min = 40.0, max = 40.0, steps = 2 }
"#;

    #[test]
    fn parses_and_orders_points() {
        let config = SweepConfig::from_toml(CONFIG).unwrap();
        let pts = config.points().unwrap();
        let order: Vec<(f64, f64)> = pts.iter().map(|p| (p.delta_big_mhz, p.omega_mhz)).collect();
        assert_eq!(order, vec![(-100.0, 40.0), (-100.0, 40.0), (100.0, 40.0), (100.0, 40.0)]);
        assert_eq!(config.mode, SweepMode::NoDetuneOpt);
        assert_eq!(config.objective, Objective::Eta);
        assert_eq!(config.fixed.rel_tol, DEFAULT_TOLERANCE);
    }

    #[test]
    fn coupling_resolution() {
        assert_eq!(Coupling::resolve(9.0, 3.0, Some(100.0), None).unwrap(), Coupling::Cooperativity(100.0));
        assert_eq!(Coupling::resolve(9.0, 3.0, None, Some(46.5)).unwrap(), Coupling::W(46.5));
        assert!(Coupling::resolve(9.0, 3.0, Some(100.0), Some(51.9)).is_ok());
        assert!(matches!(
            Coupling::resolve(9.0, 3.0, Some(100.0), Some(46.5)),
            Err(ConfigError::Invalid { field: "w_MHz", .. })
        ));
        assert!(Coupling::resolve(9.0, 3.0, None, None).is_err());
        let w = Coupling::Cooperativity(100.0).w_mhz(9.0, 3.0);
        assert!((w - 2700f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_axes_and_unknown_keys() {
        let bad = CONFIG.replace("steps = 2 }\nOmega", "steps = 0 }\nOmega");
        assert!(matches!(
            SweepConfig::from_toml(&bad),
            Err(ConfigError::Invalid { field: "Delta_MHz", .. })
        ));
        let reversed = CONFIG.replace("min = -100.0, max = 100.0", "min = 100.0, max = -100.0");
        assert!(SweepConfig::from_toml(&reversed).is_err());
        let unknown = CONFIG.replace("tau_ns = 150.0", "tau_ns = 150.0\nfoo = 1");
        let err = SweepConfig::from_toml(&unknown).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let table = SweepTable {
            rows: vec![
                SweepRow {
                    delta_big_mhz: -100.0,
                    omega_mhz: 40.0,
                    delta_opt_mhz: 0.0,
                    nu_opt_mhz: -1.25,
                    eta: 0.95,
                    chi: 0.99,
                    chi_eta: 0.9405,
                    evaluations: 1,
                    wall_ms: 12,
                    error: None,
                },
                SweepRow {
                    delta_big_mhz: 100.0,
                    omega_mhz: 40.0,
                    delta_opt_mhz: f64::NAN,
                    nu_opt_mhz: f64::NAN,
                    eta: f64::NAN,
                    chi: f64::NAN,
                    chi_eta: f64::NAN,
                    evaluations: 0,
                    wall_ms: 3,
                    error: Some("failed, badly".into()),
                },
            ],
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("{SWEEP_CSV_HEADER}\n")));
        let back = SweepTable::read_csv(&text).unwrap();
        assert_eq!(back.rows[0], table.rows[0]);
        assert_eq!(back.rows[1].error.as_deref(), Some("failed  badly"));
        assert_eq!(back.failures(), 1);
    }

    #[test]
    fn zero_drive_point() {
        let config = SweepConfig::from_toml(CONFIG).unwrap();
        let mut p = config.points().unwrap()[0];
        p.omega_mhz = 0.0;
        let r = run_point(&p).unwrap();
        assert_eq!(r.eta, 0.0);
        assert!(r.nu_opt_mhz.is_nan());
        p.mode = SweepMode::DetuneOpt;
        let r = run_point(&p).unwrap();
        assert_eq!(r.delta_opt_mhz, 0.0);
        assert_eq!(r.chi_eta, 0.0);
    }
}
