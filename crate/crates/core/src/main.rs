use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use photon_readout::check::{self, Suite};
use photon_readout::dynamics::write_trajectory_csv;
use photon_readout::homodyne::{optimize_lo_frequency, phase_profile, write_phase_csv};
use photon_readout::optimize::{joint_refine, optimize_point, Objective};
use photon_readout::sweep::{run_point, run_sweep_to_files, Coupling, PointConfig, SweepConfig, SweepMode};
use photon_readout::{mhz_to_rad_per_ns, rad_per_ns_to_mhz, simulate, TimeGrid, Trajectory};

const EXIT_VALIDATION: u8 = 1;
const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_PARTIAL_SWEEP: u8 = 3;

#[derive(Parser)]
#[command(name = "photon-readout", version, about = "Cavity polariton retrieval: efficiency, homodyne overlap and detuning optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one (Delta, Omega) point.
    Point(PointArgs),
    /// Optimise one point along both paths and refine jointly.
    Optimize(PointArgs),
    /// Run a (Delta, Omega) grid from a TOML config.
    Sweep(SweepArgs),
    /// Run the invariant and regression suites.
    Check(CheckArgs),
    /// Write the E, P, S trajectory of one point as CSV.
    DumpTrajectory(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Eta,
    ChiEta,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Eta => Objective::Eta,
            ObjectiveArg::ChiEta => Objective::ChiEta,
        }
    }
}

#[derive(Args, Clone)]
struct PhysicsArgs {
    /// Cavity decay κ/2π (MHz).
    #[arg(long, default_value_t = 9.0)]
    kappa: f64,
    /// Polarization decay γ/2π (MHz).
    #[arg(long, default_value_t = 3.0)]
    gamma: f64,
    /// Cooperativity w²/(κγ).
    #[arg(long = "C")]
    cooperativity: Option<f64>,
    /// Coupling w/2π (MHz).
    #[arg(long = "w")]
    w: Option<f64>,
    /// One-photon detuning Δ/2π (MHz).
    #[arg(long = "Delta", default_value_t = 0.0, allow_negative_numbers = true)]
    delta_big: f64,
    /// Peak Rabi frequency Ω₀/2π (MHz).
    #[arg(long = "Omega")]
    omega: f64,
    /// Cavity detuning δ/2π (MHz), used when δ is not optimised.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta: f64,
    /// Pulse FWHM (ns).
    #[arg(long, default_value_t = 150.0)]
    tau: f64,
    /// Solver relative and absolute tolerance.
    #[arg(long = "rel-tol", default_value_t = 1e-10)]
    rel_tol: f64,
}

#[derive(Args)]
struct PointArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Eta)]
    objective: ObjectiveArg,
    /// Keep δ fixed (at --delta) instead of optimising it.
    #[arg(long = "no-detune-opt")]
    no_detune_opt: bool,
    /// Write the trajectory at δ_opt to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "C")]
    cooperativity: Option<f64>,
    #[arg(long = "w")]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[arg(long = "no-detune-opt")]
    no_detune_opt: bool,
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
    /// Output CSV (overrides `outputs.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available processor.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Invariants,
    PaperRegression,
    All,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    suite: SuiteArg,
    #[arg(long = "rel-tol", default_value_t = 1e-10)]
    rel_tol: f64,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the E-phase profile against the optimal LO.
    #[arg(long)]
    phase: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Check,
    PartialSweep(usize),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn point_config(p: &PhysicsArgs, mode: SweepMode, objective: Objective) -> Result<PointConfig, Failure> {
    Ok(PointConfig {
        kappa_mhz: p.kappa,
        gamma_mhz: p.gamma,
        coupling: Coupling::resolve(p.kappa, p.gamma, p.cooperativity, p.w)?,
        tau_ns: p.tau,
        delta_big_mhz: p.delta_big,
        omega_mhz: p.omega,
        delta_mhz: p.delta,
        mode,
        objective,
        rel_tol: p.rel_tol,
    })
}

/// Formats with four significant digits.
fn sig4(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let decimals = (3 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.decimals$}")
}

fn trajectory_at(config: &PointConfig, delta_mhz: f64) -> Result<Trajectory, Failure> {
    let params = config.params()?.with_cavity_detuning(mhz_to_rad_per_ns(delta_mhz));
    let pulse = config.pulse()?;
    let grid = TimeGrid::for_pulse(&params, &pulse).with_tolerance(config.rel_tol);
    Ok(simulate(&params, &pulse, &grid)?.0)
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_point(args: &PointArgs) -> Result<(), Failure> {
    let mode = if args.no_detune_opt { SweepMode::NoDetuneOpt } else { SweepMode::DetuneOpt };
    let config = point_config(&args.physics, mode, args.objective.into())?;
    let r = run_point(&config)?;
    println!("eta            {}", sig4(r.eta));
    println!("chi            {}", sig4(r.chi));
    println!("chi_eta        {}", sig4(r.chi_eta));
    println!("delta_opt_MHz  {}", sig4(r.delta_opt_mhz));
    println!("nu_opt_MHz     {}", sig4(r.nu_opt_mhz));
    println!("bound          {}", sig4(r.bound));
    println!("evaluations    {}", r.evaluations);
    if r.chi.is_nan() {
        println!("note: ZeroField, nothing was emitted so chi and nu_opt are undefined");
    }
    if r.at_boundary {
        println!("warning: NoInteriorMaximum, delta_opt sits on the edge of the search interval");
    }
    if let Some(out) = &args.out {
        let traj = trajectory_at(&config, r.delta_opt_mhz)?;
        write_trajectory_csv(&traj, writer(Some(out))?)?;
    }
    Ok(())
}

fn cmd_optimize(args: &PointArgs) -> Result<(), Failure> {
    let config = point_config(&args.physics, SweepMode::DetuneOpt, args.objective.into())?;
    let params = config.params()?;
    let pulse = config.pulse()?;
    let search = config.search();
    println!("{:<12} {:>14} {:>12} {:>8} {:>8} {:>8} {:>6}", "stage", "delta_opt_MHz", "nu_opt_MHz", "eta", "chi", "chi_eta", "solves");
    let show = |r: &photon_readout::optimize::OptimizationResult| {
        println!(
            "{:<12} {:>14} {:>12} {:>8} {:>8} {:>8} {:>6}{}",
            format!("{:?}", r.stage),
            sig4(rad_per_ns_to_mhz(r.delta_opt)),
            sig4(rad_per_ns_to_mhz(r.omega_opt)),
            sig4(r.eta),
            sig4(r.chi),
            sig4(r.chi_eta),
            r.evaluations,
            if r.at_boundary { "  (boundary)" } else { "" }
        )
    };
    let eta_path = optimize_point(&params, &pulse, Objective::Eta, &search)?;
    show(&eta_path);
    let chi_eta_path = optimize_point(&params, &pulse, Objective::ChiEta, &search)?;
    show(&chi_eta_path);
    let joint = joint_refine(&params, &pulse, &eta_path, &search)?;
    show(&joint);
    if let Some(out) = &args.out {
        let best = match config.objective {
            Objective::Eta => &eta_path,
            Objective::ChiEta => &chi_eta_path,
        };
        let traj = trajectory_at(&config, rad_per_ns_to_mhz(best.delta_opt))?;
        write_trajectory_csv(&traj, writer(Some(out))?)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut config = SweepConfig::load(&args.config)?;
    let f = &mut config.fixed;
    if let Some(v) = args.kappa {
        f.kappa_mhz = v;
    }
    if let Some(v) = args.gamma {
        f.gamma_mhz = v;
    }
    if args.cooperativity.is_some() || args.w.is_some() {
        f.cooperativity = args.cooperativity;
        f.w_mhz = args.w;
    }
    if let Some(v) = args.tau {
        f.tau_ns = v;
    }
    if let Some(v) = args.rel_tol {
        f.rel_tol = v;
    }
    if let Some(o) = args.objective {
        config.objective = o.into();
    }
    if args.no_detune_opt {
        config.mode = SweepMode::NoDetuneOpt;
    }
    if let Some(out) = &args.out {
        config.outputs.csv = Some(out.clone());
    }
    config.validate()?;
    let csv = config
        .outputs
        .csv
        .clone()
        .ok_or_else(|| Failure::Validation("no output path: set `outputs.csv` or pass --out".into()))?;
    let table = run_sweep_to_files(&config, &csv, args.jobs)?;
    let failures = table.failures();
    eprintln!("{} points written to {} ({} failed)", table.rows.len(), csv.display(), failures);
    if failures > 0 {
        return Err(Failure::PartialSweep(failures));
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let suite = match args.suite {
        SuiteArg::Invariants => Suite::Invariants,
        SuiteArg::PaperRegression => Suite::PaperRegression,
        SuiteArg::All => Suite::All,
    };
    let results = check::run(suite, args.rel_tol);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", results.len(), failed);
    if failed > 0 {
        return Err(Failure::Check);
    }
    Ok(())
}

fn cmd_dump(args: &DumpArgs) -> Result<(), Failure> {
    let config = point_config(&args.physics, SweepMode::NoDetuneOpt, Objective::Eta)?;
    let traj = trajectory_at(&config, args.physics.delta)?;
    write_trajectory_csv(&traj, writer(args.out.as_ref())?)?;
    if let Some(path) = &args.phase {
        let lo = optimize_lo_frequency(&traj)?;
        let profile = phase_profile(&traj, lo.omega_opt)?;
        write_phase_csv(&profile, writer(Some(path))?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Point(a) => cmd_point(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Check(a) => cmd_check(a),
        Command::DumpTrajectory(a) => cmd_dump(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::PartialSweep(n)) => {
            eprintln!("error: {n} sweep points failed");
            ExitCode::from(EXIT_PARTIAL_SWEEP)
        }
    }
}
