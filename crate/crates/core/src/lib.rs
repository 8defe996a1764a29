//! Single-photon retrieval from a stored cavity polariton.
//!
//! The crate integrates the c-number cavity equations for a three-level
//! ensemble read out by a Gaussian control pulse, computes the retrieval
//! efficiency η and the homodyne overlap χ of the emitted wave-packet with a
//! frequency-shifted local oscillator, and optimizes the cavity detuning and
//! LO frequency over (Δ, Ω) parameter grids.

pub mod analytic;
pub mod check;
pub mod dynamics;
pub mod efficiency;
pub mod homodyne;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod search;
pub mod sweep;

pub use dynamics::{simulate, SimulationError, SolverReport};
pub use model::{
    evaluate_pulse, mhz_to_rad_per_ns, output_field, rad_per_ns_to_mhz, PhysicalParams, Pulse,
    PulseShape, TimeGrid, Trajectory,
};
