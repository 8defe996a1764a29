//! Cavity-detuning and LO-frequency optimisation.
//!
//! Every objective evaluation is a full solve on a sampling grid that is
//! fixed for the whole search (sized for the largest |δ| in the interval),
//! so the objective is a deterministic function of δ alone.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{simulate, SimulationError};
use crate::efficiency::{retrieval_efficiency, EfficiencyError};
use crate::homodyne::{homodyne_signal, matched_filter, optimize_lo_frequency, HomodyneError, HomodyneResult};
use crate::model::{mhz_to_rad_per_ns, PhysicalParams, Pulse, TimeGrid, Trajectory, DEFAULT_TOLERANCE};
use crate::search::{golden_max, scan_then_golden};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Efficiency(#[from] EfficiencyError),
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Eta,
    ChiEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// δ maximises η, then ω₀ maximises χ at that δ.
    EtaThenChi,
    /// δ maximises χη directly (ω₀ re-optimised at every δ).
    ChiEtaScan,
    /// Coordinate-descent refinement of χη over (δ, ω₀).
    JointRefined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationResult {
    /// rad/ns.
    pub delta_opt: f64,
    /// rad/ns.
    pub omega_opt: f64,
    pub eta: f64,
    pub chi: f64,
    pub chi_eta: f64,
    pub stage: Stage,
    /// Number of ODE solves.
    pub evaluations: usize,
    /// The δ scan peaked on the edge of the search interval.
    pub at_boundary: bool,
}

/// Search settings for δ, MHz convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSearch {
    pub span_mhz: f64,
    pub step_mhz: f64,
    pub tol_mhz: f64,
    pub rel_tol: f64,
}

impl Default for DeltaSearch {
    fn default() -> Self {
        Self {
            span_mhz: 40.0,
            step_mhz: 0.5,
            tol_mhz: 0.01,
            rel_tol: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaOptimum {
    /// rad/ns.
    pub delta_opt: f64,
    pub value: f64,
    pub evaluations: usize,
    pub at_boundary: bool,
}

/// Solves the model at arbitrary δ on a shared grid and counts the solves.
pub struct Evaluator {
    params: PhysicalParams,
    pulse: Pulse,
    grid: TimeGrid,
    solves: AtomicUsize,
}

impl Evaluator {
    /// `params.cavity_detuning` is ignored; the grid resolves every
    /// |δ| ≤ `search.span_mhz`.
    pub fn new(params: &PhysicalParams, pulse: &Pulse, search: &DeltaSearch) -> Self {
        let span = mhz_to_rad_per_ns(search.span_mhz);
        let rate = params
            .with_cavity_detuning(span)
            .fastest_rate()
            .max(params.cavity_detuning.abs())
            .max(pulse.omega0);
        Self {
            params: *params,
            pulse: *pulse,
            grid: TimeGrid::for_pulse_with_rate(pulse, rate).with_tolerance(search.rel_tol),
            solves: AtomicUsize::new(0),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn trajectory(&self, delta: f64) -> Result<Trajectory, OptimizeError> {
        self.solves.fetch_add(1, Ordering::Relaxed);
        let params = self.params.with_cavity_detuning(delta);
        Ok(simulate(&params, &self.pulse, &self.grid)?.0)
    }

    pub fn eta(&self, delta: f64) -> Result<f64, OptimizeError> {
        Ok(retrieval_efficiency(&self.trajectory(delta)?)?)
    }

    /// η and the LO-optimised homodyne result at δ. With no emitted field
    /// the homodyne part is `None`.
    pub fn homodyne(&self, delta: f64) -> Result<(f64, Option<HomodyneResult>), OptimizeError> {
        let traj = self.trajectory(delta)?;
        let eta = retrieval_efficiency(&traj)?;
        match optimize_lo_frequency(&traj) {
            Ok(h) => Ok((eta, Some(h))),
            Err(HomodyneError::ZeroField) => Ok((eta, None)),
            Err(e) => Err(e.into()),
        }
    }

    pub fn objective(&self, delta: f64, objective: Objective) -> Result<f64, OptimizeError> {
        match objective {
            Objective::Eta => self.eta(delta),
            Objective::ChiEta => Ok(self.homodyne(delta)?.1.map_or(0.0, |h| h.chi_eta())),
        }
    }

    /// χη = I₀(ω₀) at fixed LO frequency.
    fn signal_at(&self, delta: f64, omega0: f64) -> Result<f64, OptimizeError> {
        let traj = self.trajectory(delta)?;
        match matched_filter(&traj) {
            Ok(f) => Ok(homodyne_signal(&traj, &f, omega0)?),
            Err(HomodyneError::ZeroField) => Ok(0.0),
            Err(e) => Err(e.into()),
        }
    }
}

/// Runs `f` inside a search, remembering the first error and scoring failed
/// points as −∞.
struct Guarded<'a, F> {
    f: F,
    error: &'a Mutex<Option<OptimizeError>>,
}

impl<F: Fn(f64) -> Result<f64, OptimizeError>> Guarded<'_, F> {
    fn call(&self, x: f64) -> f64 {
        match (self.f)(x) {
            Ok(v) => v,
            Err(e) => {
                self.error.lock().unwrap().get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    }
}

/// Coarse δ scan over ±span followed by golden-section refinement.
///
/// A boundary maximum is reported through `at_boundary`, not as an error. If
/// the objective is zero everywhere (nothing is emitted), δ_opt = 0.
pub fn optimize_delta(evaluator: &Evaluator, objective: Objective, search: &DeltaSearch) -> Result<DeltaOptimum, OptimizeError> {
    let error = Mutex::new(None);
    let guarded = Guarded {
        f: |d| evaluator.objective(d, objective),
        error: &error,
    };
    let span = mhz_to_rad_per_ns(search.span_mhz);
    let before = evaluator.solves();
    let best = scan_then_golden(
        |d| guarded.call(d),
        -span,
        span,
        mhz_to_rad_per_ns(search.step_mhz),
        mhz_to_rad_per_ns(search.tol_mhz),
    );
    if let Some(e) = error.into_inner().unwrap() {
        return Err(e);
    }
    let evaluations = evaluator.solves() - before;
    if best.value <= 0.0 {
        return Ok(DeltaOptimum {
            delta_opt: 0.0,
            value: 0.0,
            evaluations,
            at_boundary: false,
        });
    }
    Ok(DeltaOptimum {
        delta_opt: best.x,
        value: best.value,
        evaluations,
        at_boundary: best.at_boundary,
    })
}

fn finish(
    evaluator: &Evaluator,
    delta: f64,
    stage: Stage,
    at_boundary: bool,
) -> Result<OptimizationResult, OptimizeError> {
    let (eta, h) = evaluator.homodyne(delta)?;
    let h = h.ok_or(HomodyneError::ZeroField)?;
    Ok(OptimizationResult {
        delta_opt: delta,
        omega_opt: h.omega_opt,
        eta,
        chi: h.chi,
        chi_eta: h.chi_eta(),
        stage,
        evaluations: evaluator.solves(),
        at_boundary,
    })
}

/// δ maximising η, then ω₀ maximising χ at that δ.
pub fn two_stage(params: &PhysicalParams, pulse: &Pulse, search: &DeltaSearch) -> Result<OptimizationResult, OptimizeError> {
    let evaluator = Evaluator::new(params, pulse, search);
    let d = optimize_delta(&evaluator, Objective::Eta, search)?;
    finish(&evaluator, d.delta_opt, Stage::EtaThenChi, d.at_boundary)
}

/// Optimises δ for the given objective and reports η, χ, χη at δ_opt.
pub fn optimize_point(
    params: &PhysicalParams,
    pulse: &Pulse,
    objective: Objective,
    search: &DeltaSearch,
) -> Result<OptimizationResult, OptimizeError> {
    match objective {
        Objective::Eta => two_stage(params, pulse, search),
        Objective::ChiEta => {
            let evaluator = Evaluator::new(params, pulse, search);
            let d = optimize_delta(&evaluator, Objective::ChiEta, search)?;
            finish(&evaluator, d.delta_opt, Stage::ChiEtaScan, d.at_boundary)
        }
    }
}

/// Bracket half-width for the δ pass of [`joint_refine`], MHz.
pub const JOINT_DELTA_HALF_WIDTH_MHZ: f64 = 2.5;
pub const JOINT_MAX_ROUNDS: usize = 10;
pub const JOINT_MIN_GAIN: f64 = 1e-6;

/// Alternates a golden-section pass over δ at fixed ω₀ with a full LO
/// optimisation at fixed δ. Moves are accepted only if χη increases, so the
/// result never scores below the input.
pub fn joint_refine(
    params: &PhysicalParams,
    pulse: &Pulse,
    start: &OptimizationResult,
    search: &DeltaSearch,
) -> Result<OptimizationResult, OptimizeError> {
    let evaluator = Evaluator::new(params, pulse, search);
    let mut best = OptimizationResult {
        stage: Stage::JointRefined,
        ..*start
    };
    let half = mhz_to_rad_per_ns(JOINT_DELTA_HALF_WIDTH_MHZ);
    let tol = mhz_to_rad_per_ns(search.tol_mhz);
    for _ in 0..JOINT_MAX_ROUNDS {
        let before = best.chi_eta;
        let error = Mutex::new(None);
        let omega0 = best.omega_opt;
        let guarded = Guarded {
            f: |d| evaluator.signal_at(d, omega0),
            error: &error,
        };
        let m = golden_max(|d| guarded.call(d), best.delta_opt - half, best.delta_opt + half, tol);
        if let Some(e) = error.into_inner().unwrap() {
            return Err(e);
        }
        if m.value > best.chi_eta {
            let (eta, h) = evaluator.homodyne(m.x)?;
            if let Some(h) = h.filter(|h| h.chi_eta() > best.chi_eta) {
                best = OptimizationResult {
                    delta_opt: m.x,
                    omega_opt: h.omega_opt,
                    eta,
                    chi: h.chi,
                    chi_eta: h.chi_eta(),
                    ..best
                };
            }
        }
        if best.chi_eta - before < JOINT_MIN_GAIN {
            break;
        }
    }
    best.evaluations = start.evaluations + evaluator.solves();
    Ok(best)
}
