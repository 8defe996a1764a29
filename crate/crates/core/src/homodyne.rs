//! Homodyne detection of the emitted photon against a monochromatic local
//! oscillator with linear phase φ₀ + ω₀t, filtered by the matched temporal
//! mode f(t) = |E_out(t)|/√η.

use std::io::{self, Write};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::efficiency::{retrieval_efficiency, EfficiencyError};
use crate::model::{mhz_to_rad_per_ns, output_field, Trajectory};
use crate::quadrature::simpson_weights;
use crate::search::golden_max;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomodyneError {
    #[error("no field was emitted (eta = 0)")]
    ZeroField,
    #[error("field amplitude is below threshold everywhere")]
    AmplitudeTooSmall,
    #[error(transparent)]
    Efficiency(#[from] EfficiencyError),
}

/// Half-width of the LO frequency search, MHz.
pub const LO_SEARCH_SPAN_MHZ: f64 = 50.0;
/// Upper bound on the coarse LO grid spacing, MHz.
pub const LO_GRID_SPACING_MHZ: f64 = 0.1;
/// Golden-section stopping width for the LO frequency, MHz.
pub const LO_REFINE_TOL_MHZ: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneResult {
    /// LO frequency shift ω_opt maximising I₀ (rad/ns).
    pub omega_opt: f64,
    pub i0_max: f64,
    /// I₀_max/η.
    pub chi: f64,
    /// Quadrature variance in vacuum units, 1 + 2·I₀_max. The constant LO
    /// phase φ₀ drops out of every quantity here.
    pub variance: f64,
    pub eta: f64,
}

impl HomodyneResult {
    pub fn chi_eta(&self) -> f64 {
        self.chi * self.eta
    }
}

/// Real, unit-norm temporal filter matched to |E_out|.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    pub values: Vec<f64>,
    pub eta: f64,
}

pub fn matched_filter(traj: &Trajectory) -> Result<MatchedFilter, HomodyneError> {
    let eta = retrieval_efficiency(traj)?;
    if eta <= 0.0 {
        return Err(HomodyneError::ZeroField);
    }
    let norm = eta.sqrt();
    let values = output_field(traj).iter().map(|x| x.norm() / norm).collect();
    Ok(MatchedFilter { values, eta })
}

/// V = 1 + 2·I₀.
pub fn variance(i0: f64) -> f64 {
    1.0 + 2.0 * i0
}

/// Quadrature-weighted product w_n·f_n·E_out,n, reused across ω₀ evaluations.
struct Overlap {
    dt: f64,
    t_ref: f64,
    times: Vec<f64>,
    g: Vec<C64>,
}

impl Overlap {
    fn new(traj: &Trajectory, filter: &MatchedFilter) -> Result<Self, HomodyneError> {
        let dt = traj.uniform_step().ok_or(EfficiencyError::NonUniformGrid)?;
        let weights = simpson_weights(traj.len(), dt);
        let g = output_field(traj)
            .iter()
            .zip(&filter.values)
            .zip(&weights)
            .map(|((e, f), w)| e * (f * w))
            .collect();
        Ok(Self {
            dt,
            t_ref: traj.times[0],
            times: traj.times.clone(),
            g,
        })
    }

    /// |Σ w f E_out e^{−iω₀t}|². Times are taken relative to the first
    /// sample; the shift is a global phase and drops out.
    fn signal(&self, omega0: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.g)
            .map(|(&t, g)| g * C64::from_polar(1.0, -omega0 * (t - self.t_ref)))
            .sum::<C64>()
            .norm_sqr()
    }

    /// I₀ on the FFT frequency grid restricted to |ω₀| ≤ span, sorted by ω₀.
    fn coarse_scan(&self, span: f64, max_spacing: f64) -> Vec<(f64, f64)> {
        let n = self.g.len();
        let needed = (std::f64::consts::TAU / (max_spacing * self.dt)).ceil() as usize;
        let m = n.max(needed).next_power_of_two();
        let mut buf = vec![C64::new(0.0, 0.0); m];
        buf[..n].copy_from_slice(&self.g);
        FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
        let d_omega = std::f64::consts::TAU / (m as f64 * self.dt);
        let k_max = (span / d_omega).floor() as i64;
        (-k_max..=k_max)
            .map(|k| {
                let idx = k.rem_euclid(m as i64) as usize;
                (k as f64 * d_omega, buf[idx].norm_sqr())
            })
            .collect()
    }
}

/// I₀(ω₀) = |∫ f(t)·E_out(t)·e^{−iω₀t} dt|².
pub fn homodyne_signal(traj: &Trajectory, filter: &MatchedFilter, omega0: f64) -> Result<f64, HomodyneError> {
    let overlap = Overlap::new(traj, filter)?;
    Ok(overlap.signal(omega0))
}

/// Finds ω_opt maximising I₀ over ±50 MHz: FFT scan at ≤ 0.1 MHz spacing,
/// then golden-section refinement to 1e-4 MHz.
pub fn optimize_lo_frequency(traj: &Trajectory) -> Result<HomodyneResult, HomodyneError> {
    let filter = matched_filter(traj)?;
    let overlap = Overlap::new(traj, &filter)?;
    let span = mhz_to_rad_per_ns(LO_SEARCH_SPAN_MHZ);
    let scan = overlap.coarse_scan(span, mhz_to_rad_per_ns(LO_GRID_SPACING_MHZ));
    let best = scan
        .iter()
        .enumerate()
        .fold(0usize, |b, (i, &(_, v))| if v > scan[b].1 { i } else { b });
    let lo = scan[best.saturating_sub(1)].0;
    let hi = scan[(best + 1).min(scan.len() - 1)].0;
    let refined = golden_max(|w| overlap.signal(w), lo, hi, mhz_to_rad_per_ns(LO_REFINE_TOL_MHZ));
    let centre = overlap.signal(scan[best].0);
    let (omega_opt, i0_max) = if refined.value >= centre {
        (refined.x, refined.value)
    } else {
        (scan[best].0, centre)
    };
    Ok(result_at(omega_opt, i0_max, filter.eta))
}

/// Evaluates I₀ at a given ω₀ and packages it as a result (no search).
pub fn evaluate_lo_frequency(traj: &Trajectory, omega0: f64) -> Result<HomodyneResult, HomodyneError> {
    let filter = matched_filter(traj)?;
    let overlap = Overlap::new(traj, &filter)?;
    Ok(result_at(omega0, overlap.signal(omega0), filter.eta))
}

/// Golden-section refinement of ω₀ inside `[lo, hi]`.
pub fn refine_lo_frequency(traj: &Trajectory, lo: f64, hi: f64) -> Result<HomodyneResult, HomodyneError> {
    let filter = matched_filter(traj)?;
    let overlap = Overlap::new(traj, &filter)?;
    let m = golden_max(|w| overlap.signal(w), lo, hi, mhz_to_rad_per_ns(LO_REFINE_TOL_MHZ));
    Ok(result_at(m.x, m.value, filter.eta))
}

fn result_at(omega_opt: f64, i0_max: f64, eta: f64) -> HomodyneResult {
    HomodyneResult {
        omega_opt,
        i0_max,
        chi: i0_max / eta,
        variance: variance(i0_max),
        eta,
    }
}

/// Unwrapped phase of E(t) against the linear LO phase φ₀ + ω₀t.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub times: Vec<f64>,
    pub theta_e: Vec<f64>,
    pub theta_lo: Vec<f64>,
    pub abs_e: Vec<f64>,
    pub phi0: f64,
    pub omega0: f64,
    /// f²-weighted RMS of the wrapped difference θ_E − θ_LO (radians).
    pub rms_misfit: f64,
}

/// Samples with |E| below this fraction of the peak are bridged linearly.
pub const PHASE_AMPLITUDE_THRESHOLD: f64 = 1e-6;

fn wrap(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    x - TAU * ((x + PI) / TAU).floor()
}

pub fn phase_profile(traj: &Trajectory, omega0: f64) -> Result<PhaseProfile, HomodyneError> {
    let abs: Vec<f64> = traj.e.iter().map(|x| x.norm()).collect();
    let peak = abs.iter().copied().fold(0.0, f64::max);
    let threshold = PHASE_AMPLITUDE_THRESHOLD * peak;
    let first = abs.iter().position(|&a| a > threshold && a > 0.0);
    let last = abs.iter().rposition(|&a| a > threshold && a > 0.0);
    let (Some(first), Some(last)) = (first, last) else {
        return Err(HomodyneError::AmplitudeTooSmall);
    };
    let range = first..=last;
    let times: Vec<f64> = traj.times[range.clone()].to_vec();
    let abs_e: Vec<f64> = abs[range.clone()].to_vec();
    let raw: Vec<Option<f64>> = traj.e[range]
        .iter()
        .zip(&abs_e)
        .map(|(e, &a)| (a > threshold).then(|| e.arg()))
        .collect();

    // Continue by the nearest multiple of 2π across valid samples.
    let mut theta_e = vec![0.0; raw.len()];
    let mut prev: Option<(usize, f64)> = None;
    for (i, r) in raw.iter().enumerate() {
        let Some(phase) = *r else { continue };
        let value = match prev {
            None => phase,
            Some((_, p)) => p + wrap(phase - p),
        };
        if let Some((j, p)) = prev {
            for (k, slot) in theta_e.iter_mut().enumerate().take(i).skip(j + 1) {
                let s = (k - j) as f64 / (i - j) as f64;
                *slot = p + s * (value - p);
            }
        }
        theta_e[i] = value;
        prev = Some((i, value));
    }

    // φ₀ minimising Σ|E|²(1 − cos(θ_E − φ₀ − ω₀t)).
    let t_ref = traj.times[0];
    let weights: Vec<f64> = abs_e.iter().map(|a| a * a).collect();
    let phasor: C64 = theta_e
        .iter()
        .zip(&times)
        .zip(&weights)
        .map(|((&th, &t), &w)| C64::from_polar(w, th - omega0 * (t - t_ref)))
        .sum();
    let phi0 = phasor.arg() - omega0 * t_ref;
    let theta_lo: Vec<f64> = times.iter().map(|&t| phi0 + omega0 * t).collect();
    let (sum_w, sum_d2) = theta_e
        .iter()
        .zip(&theta_lo)
        .zip(&weights)
        .fold((0.0, 0.0), |(sw, sd), ((&a, &b), &w)| {
            let d = wrap(a - b);
            (sw + w, sd + w * d * d)
        });
    Ok(PhaseProfile {
        times,
        theta_e,
        theta_lo,
        abs_e,
        phi0,
        omega0,
        rms_misfit: (sum_d2 / sum_w).sqrt(),
    })
}

pub const PHASE_CSV_HEADER: &str = "t_ns,theta_E_rad,theta_LO_rad,abs_E";

pub fn write_phase_csv<W: Write>(profile: &PhaseProfile, mut out: W) -> io::Result<()> {
    writeln!(out, "{PHASE_CSV_HEADER}")?;
    for i in 0..profile.times.len() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            profile.times[i], profile.theta_e[i], profile.theta_lo[i], profile.abs_e[i]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::model::{PhysicalParams, Pulse, TimeGrid};
    use crate::quadrature::simpson;

    fn run(delta_mhz: f64, omega_mhz: f64, cav_mhz: f64) -> Trajectory {
        let params = PhysicalParams::from_cooperativity_mhz(9.0, 3.0, 100.0, delta_mhz, cav_mhz).unwrap();
        let pulse = Pulse::gaussian_mhz(omega_mhz, 150.0, 0.0).unwrap();
        simulate(&params, &pulse, &TimeGrid::for_pulse(&params, &pulse)).unwrap().0
    }

    fn synthetic(omega1: f64) -> Trajectory {
        let params = PhysicalParams::from_cooperativity_mhz(9.0, 3.0, 100.0, 0.0, 0.0).unwrap();
        let pulse = Pulse::gaussian(0.0, 100.0, 0.0).unwrap();
        let dt = 0.05;
        let times: Vec<f64> = (0..8000).map(|i| -200.0 + i as f64 * dt).collect();
        let e: Vec<C64> = times
            .iter()
            .map(|&t| C64::from_polar(0.3 * (-(t / 40.0).powi(2)).exp(), omega1 * t + 0.4))
            .collect();
        let zeros = vec![C64::new(0.0, 0.0); times.len()];
        Trajectory::new(times, e, zeros.clone(), zeros, params, pulse).unwrap()
    }

    #[test]
    fn variance_values() {
        assert_eq!(variance(0.0), 1.0);
        assert_eq!(variance(1.0), 3.0);
        assert_eq!(variance(0.5), 2.0);
    }

    #[test]
    fn filter_is_normalised() {
        let traj = run(120.0, 13.0, 15.5);
        let f = matched_filter(&traj).unwrap();
        let f2: Vec<f64> = f.values.iter().map(|x| x * x).collect();
        assert!((simpson(&f2, traj.uniform_step().unwrap()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn resonant_emission_needs_no_lo_shift() {
        let traj = run(0.0, 80.0, 0.0);
        let res = optimize_lo_frequency(&traj).unwrap();
        assert!(res.omega_opt.abs() < mhz_to_rad_per_ns(0.05));
        assert!((res.chi - 1.0).abs() < 1e-4);
        assert!((res.variance - (1.0 + 2.0 * res.i0_max)).abs() < 1e-15);
        let f = matched_filter(&traj).unwrap();
        let i0 = homodyne_signal(&traj, &f, 0.0).unwrap();
        assert!((i0 - f.eta).abs() < 1e-6);
    }

    #[test]
    fn far_lo_shift_kills_signal() {
        let traj = run(0.0, 80.0, 0.0);
        let f = matched_filter(&traj).unwrap();
        assert!(homodyne_signal(&traj, &f, 50.0).unwrap() < 1e-6 * f.eta);
    }

    #[test]
    fn planted_linear_phase_is_recovered() {
        let omega1 = 0.05;
        let traj = synthetic(omega1);
        let res = optimize_lo_frequency(&traj).unwrap();
        assert!((res.omega_opt - omega1).abs() < 1e-6, "{}", res.omega_opt);
        assert!((res.chi - 1.0).abs() < 1e-9);
        let prof = phase_profile(&traj, res.omega_opt).unwrap();
        assert!(prof.rms_misfit < 1e-4);
    }

    #[test]
    fn zero_field_is_an_error() {
        let traj = run(0.0, 0.0, 0.0);
        assert_eq!(matched_filter(&traj), Err(HomodyneError::ZeroField));
        assert_eq!(optimize_lo_frequency(&traj), Err(HomodyneError::ZeroField));
        assert_eq!(phase_profile(&traj, 0.0), Err(HomodyneError::AmplitudeTooSmall));
    }

    #[test]
    fn resonant_phase_is_flat_at_pi() {
        let traj = run(0.0, 80.0, 0.0);
        let prof = phase_profile(&traj, 0.0).unwrap();
        let mid = prof.theta_e[prof.theta_e.len() / 2];
        assert!((wrap(mid - std::f64::consts::PI)).abs() < 1e-6);
        assert!(prof.rms_misfit < 1e-6);
    }

    #[test]
    fn phase_csv_header() {
        let traj = synthetic(0.01);
        let prof = phase_profile(&traj, 0.01).unwrap();
        let mut buf = Vec::new();
        write_phase_csv(&prof, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(PHASE_CSV_HEADER));
        assert_eq!(text.lines().count(), prof.times.len() + 1);
    }
}
