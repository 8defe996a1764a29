//! Parameter space, read pulses, time grids and trajectory containers shared
//! by every solver in the crate.
//!
//! Internally all angular frequencies are in rad/ns and times in ns. Values
//! that cross the user boundary (config files, CLI flags, reports) are quoted
//! as ordinary frequencies in MHz, i.e. divided by 2π.

use std::f64::consts::{LN_2, TAU};

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Converts a frequency quoted in MHz (ν = ω/2π) to an angular frequency in rad/ns.
pub fn mhz_to_rad_per_ns(mhz: f64) -> f64 {
    mhz * TAU * 1e-3
}

/// Inverse of [`mhz_to_rad_per_ns`].
pub fn rad_per_ns_to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e-3)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("trajectory sequences have mismatched lengths (times {times}, E {e}, P {p}, S {s})")]
    LengthMismatch {
        times: usize,
        e: usize,
        p: usize,
        s: usize,
    },
    #[error("trajectory times must be strictly increasing")]
    NonMonotonicTimes,
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}

/// Rates and detunings of the three-level ensemble in the cavity, all in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Cavity field decay rate κ.
    pub kappa: f64,
    /// Optical polarization decay rate γ.
    pub gamma: f64,
    /// Collective coupling w = g√N.
    pub w: f64,
    /// Detuning Δ between the read laser and the atomic transition.
    pub detuning: f64,
    /// Detuning δ between the Raman light and the cavity.
    pub cavity_detuning: f64,
}

impl PhysicalParams {
    pub fn new(
        kappa: f64,
        gamma: f64,
        w: f64,
        detuning: f64,
        cavity_detuning: f64,
    ) -> Result<Self, ModelError> {
        check("kappa", kappa, kappa > 0.0, "must be > 0")?;
        check("gamma", gamma, gamma > 0.0, "must be > 0")?;
        check("w", w, w >= 0.0, "must be >= 0")?;
        check("Delta", detuning, true, "must be finite")?;
        check("delta", cavity_detuning, true, "must be finite")?;
        Ok(Self {
            kappa,
            gamma,
            w,
            detuning,
            cavity_detuning,
        })
    }

    /// Builds parameters from MHz-convention values.
    pub fn from_mhz(
        kappa: f64,
        gamma: f64,
        w: f64,
        detuning: f64,
        cavity_detuning: f64,
    ) -> Result<Self, ModelError> {
        Self::new(
            mhz_to_rad_per_ns(kappa),
            mhz_to_rad_per_ns(gamma),
            mhz_to_rad_per_ns(w),
            mhz_to_rad_per_ns(detuning),
            mhz_to_rad_per_ns(cavity_detuning),
        )
    }

    /// Builds parameters from MHz-convention rates with w derived from the
    /// cooperativity, C = w²/(κγ).
    pub fn from_cooperativity_mhz(
        kappa: f64,
        gamma: f64,
        cooperativity: f64,
        detuning: f64,
        cavity_detuning: f64,
    ) -> Result<Self, ModelError> {
        check("C", cooperativity, cooperativity >= 0.0, "must be >= 0")?;
        let w = (cooperativity * kappa * gamma).sqrt();
        Self::from_mhz(kappa, gamma, w, detuning, cavity_detuning)
    }

    pub fn cooperativity(&self) -> f64 {
        self.w * self.w / (self.kappa * self.gamma)
    }

    /// Complex cavity rate k = κ + iδ.
    pub fn k(&self) -> C64 {
        C64::new(self.kappa, self.cavity_detuning)
    }

    /// Complex polarization rate γ + iΔ.
    pub fn g(&self) -> C64 {
        C64::new(self.gamma, self.detuning)
    }

    pub fn with_cavity_detuning(self, cavity_detuning: f64) -> Self {
        Self {
            cavity_detuning,
            ..self
        }
    }

    /// The (−Δ, −δ) partner point.
    pub fn mirrored(self) -> Self {
        Self {
            detuning: -self.detuning,
            cavity_detuning: -self.cavity_detuning,
            ..self
        }
    }

    /// Largest rate of the free system, used to size sampling intervals.
    pub fn fastest_rate(&self) -> f64 {
        [
            self.kappa,
            self.gamma,
            self.w,
            self.detuning.abs(),
            self.cavity_detuning.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseShape {
    #[default]
    Gaussian,
}

/// Classical read field Ω(t). Real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub shape: PulseShape,
    /// Peak Rabi frequency Ω₀ (rad/ns).
    pub omega0: f64,
    /// Full width at half maximum of Ω(t) (ns).
    pub fwhm: f64,
    /// Time of the pulse peak (ns).
    pub t_center: f64,
}

impl Pulse {
    pub fn gaussian(omega0: f64, fwhm: f64, t_center: f64) -> Result<Self, ModelError> {
        check("Omega0", omega0, omega0 >= 0.0, "must be >= 0")?;
        check("tau", fwhm, fwhm > 0.0, "must be > 0")?;
        check("t_center", t_center, true, "must be finite")?;
        Ok(Self {
            shape: PulseShape::Gaussian,
            omega0,
            fwhm,
            t_center,
        })
    }

    /// Gaussian pulse with peak quoted in MHz.
    pub fn gaussian_mhz(omega0_mhz: f64, fwhm: f64, t_center: f64) -> Result<Self, ModelError> {
        Self::gaussian(mhz_to_rad_per_ns(omega0_mhz), fwhm, t_center)
    }

    /// Ω(t) normalised to the peak.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Gaussian => {
                let x = (t - self.t_center) / self.fwhm;
                (-4.0 * LN_2 * x * x).exp()
            }
        }
    }

    pub fn rabi(&self, t: f64) -> f64 {
        self.omega0 * self.envelope(t)
    }

    /// dΩ/dt in closed form.
    pub fn rabi_derivative(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Gaussian => {
                let s = t - self.t_center;
                -8.0 * LN_2 * s / (self.fwhm * self.fwhm) * self.rabi(t)
            }
        }
    }
}

/// Ω(t) for a pulse. Total function.
pub fn evaluate_pulse(pulse: &Pulse, t: f64) -> f64 {
    pulse.rabi(t)
}

/// Integration window, output sampling and solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub dt_out: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Default solver tolerance (relative and absolute).
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Start and nominal end of the window, in pulse widths from the peak.
pub const WINDOW_HALF_WIDTHS: f64 = 2.5;
const MAX_DT_OUT: f64 = 0.05;

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt_out: f64, rel_tol: f64, abs_tol: f64) -> Result<Self, ModelError> {
        check("t_end", t_end, t_end > t0, "must exceed t0")?;
        check("dt_out", dt_out, dt_out > 0.0, "must be > 0")?;
        check("rel_tol", rel_tol, rel_tol > 0.0, "must be > 0")?;
        check("abs_tol", abs_tol, abs_tol > 0.0, "must be > 0")?;
        Ok(Self {
            t0,
            t_end,
            dt_out,
            rel_tol,
            abs_tol,
        })
    }

    /// Window t_center ± 2.5τ sampled at min(0.05 ns, 1/(20·fastest rate)).
    pub fn for_pulse(params: &PhysicalParams, pulse: &Pulse) -> Self {
        let rate = params.fastest_rate().max(pulse.omega0);
        Self::for_pulse_with_rate(pulse, rate)
    }

    /// Same as [`TimeGrid::for_pulse`] with an explicit fastest rate, so that
    /// a family of runs (e.g. a detuning scan) shares one sampling grid.
    pub fn for_pulse_with_rate(pulse: &Pulse, fastest_rate: f64) -> Self {
        let half = WINDOW_HALF_WIDTHS * pulse.fwhm;
        let dt_out = if fastest_rate > 0.0 {
            MAX_DT_OUT.min(1.0 / (20.0 * fastest_rate))
        } else {
            MAX_DT_OUT
        };
        Self {
            t0: pulse.t_center - half,
            t_end: pulse.t_center + half,
            dt_out,
            rel_tol: DEFAULT_TOLERANCE,
            abs_tol: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_tolerance(self, tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..self
        }
    }

    pub fn with_dt_out(self, dt_out: f64) -> Self {
        Self { dt_out, ..self }
    }
}

/// Time-sampled amplitudes E, P, S of a retrieval run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub e: Vec<C64>,
    pub p: Vec<C64>,
    pub s: Vec<C64>,
    pub params: PhysicalParams,
    pub pulse: Pulse,
    /// False when integration hit the hard time cap before the emission
    /// tail had died out.
    pub emission_complete: bool,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        e: Vec<C64>,
        p: Vec<C64>,
        s: Vec<C64>,
        params: PhysicalParams,
        pulse: Pulse,
    ) -> Result<Self, ModelError> {
        let n = times.len();
        if e.len() != n || p.len() != n || s.len() != n {
            return Err(ModelError::LengthMismatch {
                times: n,
                e: e.len(),
                p: p.len(),
                s: s.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::NonMonotonicTimes);
        }
        Ok(Self {
            times,
            e,
            p,
            s,
            params,
            pulse,
            emission_complete: true,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// |E|² + |P|² + |S|² at each sample.
    pub fn norm(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.e[i].norm_sqr() + self.p[i].norm_sqr() + self.s[i].norm_sqr())
            .collect()
    }

    /// Sampling interval if the grid is uniform to relative 1e-9.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64;
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        uniform.then_some(dt)
    }

    pub fn rabi(&self) -> Vec<f64> {
        self.times.iter().map(|&t| self.pulse.rabi(t)).collect()
    }
}

/// E_out(t) = √(2κ)·E(t).
pub fn output_field(traj: &Trajectory) -> Vec<C64> {
    let scale = (2.0 * traj.params.kappa).sqrt();
    traj.e.iter().map(|&e| e * scale).collect()
}
