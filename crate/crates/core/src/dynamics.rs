//! Integration of the c-number cavity equations
//!
//! ```text
//! dE/dt = -(κ + iδ) E + i w P
//! dP/dt = -(γ + iΔ) P + i w E + i Ω(t) S
//! dS/dt = i Ω(t) P
//! ```
//!
//! with an embedded Dormand–Prince 5(4) pair, PI step-size control and cubic
//! Hermite dense output onto the uniform sampling grid.

use std::io::{self, Write};

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::model::{output_field, PhysicalParams, Pulse, TimeGrid, Trajectory};
use crate::quadrature::{hermite, simpson};

/// Ω(t)/Ω₀ must be below this at the start of integration.
pub const START_PULSE_THRESHOLD: f64 = 1e-6;
/// Emission is complete once Ω/Ω₀ drops below this …
pub const STOP_PULSE_THRESHOLD: f64 = 1e-6;
/// … and |E|² + |P|² drops below this.
pub const STOP_AMPLITUDE_THRESHOLD: f64 = 1e-10;
/// Hard cap on integration time, in pulse widths past the peak.
pub const MAX_WIDTHS_AFTER_PEAK: f64 = 20.0;

const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("read pulse is not negligible at t0 (Omega(t0)/Omega0 = {ratio:.3e}, needs < {START_PULSE_THRESHOLD:e})")]
    PulseNotNegligibleAtStart { ratio: f64 },
    #[error("step size underflow at t = {t} ns (h = {h:e} ns); tolerance cannot be met")]
    ToleranceNotMet { t: f64, h: f64 },
    #[error("at least 3 samples are needed, got {0}")]
    InsufficientSampling(usize),
}

/// Bookkeeping from one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// |E|² + |P|² + |S|² at the last sample.
    pub final_norm: f64,
    /// Emitted flux ∫2κ|E|² over the last pulse width of the trajectory.
    pub flux_tail: f64,
    pub emission_complete: bool,
}

type State = [C64; 3];

#[inline]
fn rhs(params: &PhysicalParams, pulse: &Pulse, t: f64, y: &State) -> State {
    let omega = pulse.rabi(t);
    let i = C64::i();
    let [e, p, s] = *y;
    [
        -params.k() * e + i * params.w * p,
        -params.g() * p + i * params.w * e + i * omega * s,
        i * omega * p,
    ]
}

#[inline]
fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for j in 0..3 {
            out[j] += k[j] * (h * c);
        }
    }
    out
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI controller constants (Hairer & Wanner, DOPRI5).
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Stepper<'a> {
    params: &'a PhysicalParams,
    pulse: &'a Pulse,
    rel_tol: f64,
    abs_tol: f64,
}

struct StepResult {
    y_new: State,
    f_new: State,
    err: f64,
}

impl Stepper<'_> {
    fn f(&self, t: f64, y: &State) -> State {
        rhs(self.params, self.pulse, t, y)
    }

    fn step(&self, t: f64, y: &State, k1: &State, h: f64) -> StepResult {
        let k2 = self.f(t + C2 * h, &axpy(y, h, &[(A21, k1)]));
        let k3 = self.f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
        let k4 = self.f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
        let k5 = self.f(
            t + C5 * h,
            &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = self.f(
            t + h,
            &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = self.f(t + h, &y_new);
        let mut sum = 0.0;
        for j in 0..3 {
            let e = (k1[j] * E1 + k3[j] * E3 + k4[j] * E4 + k5[j] * E5 + k6[j] * E6 + k7[j] * E7) * h;
            let sc_re = self.abs_tol + self.rel_tol * y[j].re.abs().max(y_new[j].re.abs());
            let sc_im = self.abs_tol + self.rel_tol * y[j].im.abs().max(y_new[j].im.abs());
            sum += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
        }
        StepResult {
            y_new,
            f_new: k7,
            err: (sum / 6.0).sqrt(),
        }
    }
}

/// Integrates from E = P = 0, S = 1 at `grid.t0`.
pub fn simulate(
    params: &PhysicalParams,
    pulse: &Pulse,
    grid: &TimeGrid,
) -> Result<(Trajectory, SolverReport), SimulationError> {
    let zero = C64::new(0.0, 0.0);
    simulate_from(params, pulse, grid, [zero, zero, C64::new(1.0, 0.0)])
}

/// Integrates from an arbitrary initial state (E, P, S) at `grid.t0`.
///
/// Output is sampled every `grid.dt_out`. Integration runs at least to
/// `grid.t_end` and then continues until Ω/Ω₀ < 1e-6 and |E|² + |P|² < 1e-10,
/// or until 20 pulse widths after the pulse peak, whichever comes first.
pub fn simulate_from(
    params: &PhysicalParams,
    pulse: &Pulse,
    grid: &TimeGrid,
    initial: [C64; 3],
) -> Result<(Trajectory, SolverReport), SimulationError> {
    if pulse.omega0 > 0.0 {
        let ratio = pulse.envelope(grid.t0);
        if ratio >= START_PULSE_THRESHOLD {
            return Err(SimulationError::PulseNotNegligibleAtStart { ratio });
        }
    }
    let stepper = Stepper {
        params,
        pulse,
        rel_tol: grid.rel_tol,
        abs_tol: grid.abs_tol,
    };
    let t_cap = (pulse.t_center + MAX_WIDTHS_AFTER_PEAK * pulse.fwhm).max(grid.t_end);
    let finished = |t: f64, y: &State| {
        let pulse_off = pulse.omega0 == 0.0 || pulse.envelope(t) < STOP_PULSE_THRESHOLD;
        pulse_off && y[0].norm_sqr() + y[1].norm_sqr() < STOP_AMPLITUDE_THRESHOLD
    };

    let mut times = vec![grid.t0];
    let mut ys: Vec<State> = vec![initial];
    let mut t = grid.t0;
    let mut y = initial;
    let mut f0 = stepper.f(t, &y);
    let rate = params.fastest_rate().max(pulse.omega0).max(1.0 / pulse.fwhm);
    let mut h = grid.dt_out.min(0.01 / rate);
    let mut err_old: f64 = 1e-4;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut next_k = 1usize;
    let mut complete = false;
    let mut last_rejected = false;

    'outer: loop {
        if accepted + rejected > MAX_STEPS || h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(SimulationError::ToleranceNotMet { t, h });
        }
        let step = stepper.step(t, &y, &f0, h);
        if !step.err.is_finite() {
            rejected += 1;
            h *= FAC_MIN;
            continue;
        }
        if step.err <= 1.0 {
            let t_new = t + h;
            loop {
                let tk = grid.t0 + next_k as f64 * grid.dt_out;
                if tk > t_new {
                    break;
                }
                let yk = [0, 1, 2].map(|j| hermite(t, t_new, y[j], step.y_new[j], f0[j], step.f_new[j], tk));
                times.push(tk);
                ys.push(yk);
                next_k += 1;
                if tk >= grid.t_end && finished(tk, &yk) {
                    complete = true;
                    break 'outer;
                }
                if tk >= t_cap {
                    break 'outer;
                }
            }
            accepted += 1;
            t = t_new;
            y = step.y_new;
            f0 = step.f_new;
            let fac11 = step.err.max(1e-16).powf(EXPO);
            let mut fac = fac11 / err_old.powf(BETA) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            err_old = step.err.max(1e-4);
            last_rejected = false;
            h = h_new;
        } else {
            rejected += 1;
            last_rejected = true;
            let fac11 = step.err.powf(EXPO);
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }

    let n = times.len();
    let mut e = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for [ei, pi, si] in ys {
        e.push(ei);
        p.push(pi);
        s.push(si);
    }
    let traj = Trajectory {
        times,
        e,
        p,
        s,
        params: *params,
        pulse: *pulse,
        emission_complete: complete,
    };
    let report = SolverReport {
        steps_accepted: accepted,
        steps_rejected: rejected,
        final_norm: traj.norm().last().copied().unwrap_or(1.0),
        flux_tail: tail_flux(&traj),
        emission_complete: complete,
    };
    Ok((traj, report))
}

fn tail_flux(traj: &Trajectory) -> f64 {
    let Some(dt) = traj.uniform_step() else {
        return 0.0;
    };
    let window = (traj.pulse.fwhm / dt).ceil() as usize + 1;
    let start = traj.len().saturating_sub(window);
    let flux: Vec<f64> = output_field(traj)[start..].iter().map(|x| x.norm_sqr()).collect();
    simpson(&flux, dt)
}

/// r(t) = d/dt(|E|² + |P|² + |S|²) + 2γ|P|² + 2κ|E|², with the derivative
/// taken by finite differences on the samples. Ideally zero.
pub fn conservation_residual(traj: &Trajectory) -> Result<Vec<f64>, SimulationError> {
    let n = traj.len();
    if n < 3 {
        return Err(SimulationError::InsufficientSampling(n));
    }
    let norm = traj.norm();
    let t = &traj.times;
    let (kappa, gamma) = (traj.params.kappa, traj.params.gamma);
    Ok((0..n)
        .map(|i| {
            let dn = if i == 0 {
                let h = t[1] - t[0];
                (-3.0 * norm[0] + 4.0 * norm[1] - norm[2]) / (2.0 * h)
            } else if i == n - 1 {
                let h = t[n - 1] - t[n - 2];
                (3.0 * norm[n - 1] - 4.0 * norm[n - 2] + norm[n - 3]) / (2.0 * h)
            } else {
                (norm[i + 1] - norm[i - 1]) / (t[i + 1] - t[i - 1])
            };
            dn + 2.0 * gamma * traj.p[i].norm_sqr() + 2.0 * kappa * traj.e[i].norm_sqr()
        })
        .collect())
}

pub const TRAJECTORY_CSV_HEADER: &str = "t_ns,Re_E,Im_E,Re_P,Im_P,Re_S,Im_S,Omega";

/// Writes the trajectory as CSV, one row per sample, 17 significant digits.
/// The `Omega` column is the Rabi frequency in MHz.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for i in 0..traj.len() {
        let t = traj.times[i];
        let omega = crate::model::rad_per_ns_to_mhz(traj.pulse.rabi(t));
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t, traj.e[i].re, traj.e[i].im, traj.p[i].re, traj.p[i].im, traj.s[i].re, traj.s[i].im, omega
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::mhz_to_rad_per_ns;

    fn c200_point(delta_mhz: f64) -> (PhysicalParams, Pulse, TimeGrid) {
        let params = PhysicalParams::from_cooperativity_mhz(9.0, 3.0, 200.0, delta_mhz, 0.0).unwrap();
        let pulse = Pulse::gaussian_mhz(80.0, 200.0, 0.0).unwrap();
        let grid = TimeGrid::for_pulse(&params, &pulse);
        (params, pulse, grid)
    }

    #[test]
    fn no_drive_is_stationary() {
        let (params, _, _) = c200_point(0.0);
        let pulse = Pulse::gaussian(0.0, 150.0, 0.0).unwrap();
        let grid = TimeGrid::for_pulse(&params, &pulse);
        let (traj, report) = simulate(&params, &pulse, &grid).unwrap();
        assert!(traj.e.iter().all(|x| x.norm() == 0.0));
        assert!(traj.p.iter().all(|x| x.norm() == 0.0));
        assert!(traj.s.iter().all(|x| *x == C64::new(1.0, 0.0)));
        assert!(report.emission_complete);
        let r = conservation_residual(&traj).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resonant_solution_has_fixed_quadratures() {
        let (params, pulse, grid) = c200_point(0.0);
        let (traj, _) = simulate(&params, &pulse, &grid).unwrap();
        let max_im_e = traj.e.iter().map(|x| x.im.abs()).fold(0.0, f64::max);
        let max_re_p = traj.p.iter().map(|x| x.re.abs()).fold(0.0, f64::max);
        assert!(max_im_e < 1e-9 && max_re_p < 1e-9, "{max_im_e:e} {max_re_p:e}");
        assert!(traj.s.iter().all(|x| x.im.abs() < 1e-9));
    }

    #[test]
    fn initial_conditions_and_norm_bound() {
        let (params, pulse, grid) = c200_point(100.0);
        let (traj, report) = simulate(&params, &pulse, &grid).unwrap();
        assert_eq!(traj.e[0], C64::new(0.0, 0.0));
        assert_eq!(traj.s[0], C64::new(1.0, 0.0));
        assert!(traj.norm().iter().all(|&n| n <= 1.0 + 1e-9));
        assert!(report.emission_complete);
        assert!(report.final_norm < 1.0);
        let norm = traj.norm();
        assert!(norm.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn conservation_residual_small_on_resonance() {
        let (params, pulse, grid) = c200_point(0.0);
        let (traj, _) = simulate(&params, &pulse, &grid).unwrap();
        let r = conservation_residual(&traj).unwrap();
        let max = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(max < 1e-5, "max residual {max:e}");
    }

    #[test]
    fn conservation_residual_detects_scaled_field() {
        let (params, pulse, grid) = c200_point(0.0);
        let (mut traj, _) = simulate(&params, &pulse, &grid).unwrap();
        for e in traj.e.iter_mut() {
            *e *= 2.0;
        }
        let r = conservation_residual(&traj).unwrap();
        let max = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(max > 1e-3, "max residual {max:e}");
    }

    #[test]
    fn insufficient_sampling() {
        let (params, pulse, _) = c200_point(0.0);
        let traj = Trajectory::new(
            vec![0.0, 1.0],
            vec![C64::default(); 2],
            vec![C64::default(); 2],
            vec![C64::new(1.0, 0.0); 2],
            params,
            pulse,
        )
        .unwrap();
        assert_eq!(
            conservation_residual(&traj),
            Err(SimulationError::InsufficientSampling(2))
        );
    }

    #[test]
    fn rejects_early_start() {
        let (params, pulse, grid) = c200_point(0.0);
        let grid = TimeGrid { t0: -200.0, ..grid };
        assert!(matches!(
            simulate(&params, &pulse, &grid),
            Err(SimulationError::PulseNotNegligibleAtStart { .. })
        ));
    }

    #[test]
    fn initial_phase_propagates_linearly() {
        let (params, pulse, grid) = c200_point(150.0);
        let (a, _) = simulate(&params, &pulse, &grid).unwrap();
        let phase = C64::from_polar(1.0, 0.7);
        let zero = C64::new(0.0, 0.0);
        let (b, _) = simulate_from(&params, &pulse, &grid, [zero, zero, phase]).unwrap();
        let n = a.len().min(b.len());
        for i in (0..n).step_by(97) {
            assert!((a.e[i] * phase - b.e[i]).norm() < 1e-8);
            assert!((a.p[i] * phase - b.p[i]).norm() < 1e-8);
            assert!((a.s[i] * phase - b.s[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn output_samples_are_uniform() {
        let (params, pulse, grid) = c200_point(50.0);
        let (traj, _) = simulate(&params, &pulse, &grid).unwrap();
        let dt = traj.uniform_step().unwrap();
        assert!((dt - grid.dt_out).abs() < 1e-12);
        assert!(*traj.times.last().unwrap() >= grid.t_end);
        assert!(params.detuning == mhz_to_rad_per_ns(50.0));
    }

    #[test]
    fn csv_dump_header_and_rows() {
        let (params, pulse, grid) = c200_point(0.0);
        let grid = TimeGrid {
            dt_out: 5.0,
            ..grid
        };
        let (traj, _) = simulate(&params, &pulse, &grid).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRAJECTORY_CSV_HEADER));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), traj.len());
        let fields: Vec<f64> = rows[0].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[0], traj.times[0]);
        assert_eq!(fields[5], 1.0);
    }
}
