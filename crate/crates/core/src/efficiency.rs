//! Retrieval efficiency, the cooperativity bound and the energy-balance and
//! Fourier-domain consistency checks.

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::model::{output_field, PhysicalParams, Trajectory};
use crate::quadrature::simpson;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EfficiencyError {
    #[error("trajectory stops before the emission tail has decayed")]
    EmissionIncomplete,
    #[error("trajectory is not uniformly sampled")]
    NonUniformGrid,
    #[error("trajectory needs at least 2 samples")]
    TooFewSamples,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub eta: f64,
    /// C/(1+C).
    pub bound: f64,
    /// |1 − η − 2γ∫|P|² − (|E|²+|P|²+|S|²)(t_end)|.
    pub balance_residual: f64,
    /// 2γ∫|P|² dt.
    pub polarization_loss: f64,
    pub spectral_residual: Option<f64>,
}

fn step(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    if traj.len() < 2 {
        return Err(EfficiencyError::TooFewSamples);
    }
    traj.uniform_step().ok_or(EfficiencyError::NonUniformGrid)
}

/// η = ∫|E_out|² dt by composite Simpson on the sampling grid.
pub fn retrieval_efficiency(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    if !traj.emission_complete {
        return Err(EfficiencyError::EmissionIncomplete);
    }
    let dt = step(traj)?;
    let flux: Vec<f64> = output_field(traj).iter().map(|x| x.norm_sqr()).collect();
    Ok(simpson(&flux, dt))
}

/// C/(1+C).
pub fn efficiency_bound(params: &PhysicalParams) -> f64 {
    let c = params.cooperativity();
    c / (1.0 + c)
}

/// 2γ∫|P|² dt by composite Simpson.
pub fn polarization_loss(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    let dt = step(traj)?;
    let p2: Vec<f64> = traj.p.iter().map(|x| x.norm_sqr()).collect();
    Ok(2.0 * traj.params.gamma * simpson(&p2, dt))
}

/// η together with the generalized energy balance
/// 1 = η + 2γ∫|P|² + |E(t_end)|² + |P(t_end)|² + |S(t_end)|².
pub fn efficiency_report(traj: &Trajectory) -> Result<EfficiencyReport, EfficiencyError> {
    let eta = retrieval_efficiency(traj)?;
    let loss = polarization_loss(traj)?;
    let end_norm = traj.norm().last().copied().unwrap_or(1.0);
    Ok(EfficiencyReport {
        eta,
        bound: efficiency_bound(&traj.params),
        balance_residual: (1.0 - eta - loss - end_norm).abs(),
        polarization_loss: loss,
        spectral_residual: None,
    })
}

/// Fourier transforms of E and P with the e^{+iωt} convention, sampled at the
/// FFT frequencies of a zero-padded grid.
pub struct Spectra {
    pub omega: Vec<f64>,
    pub e: Vec<C64>,
    pub p: Vec<C64>,
    pub dt: f64,
}

/// Minimum zero-padding factor applied before transforming.
pub const PAD_FACTOR: usize = 4;

pub fn spectra(traj: &Trajectory) -> Result<Spectra, EfficiencyError> {
    let dt = step(traj)?;
    let n = traj.len();
    let m = (PAD_FACTOR * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    // Σ x_n e^{+iω_k t_n} is the inverse (unnormalised) DFT.
    let fft = planner.plan_fft_inverse(m);
    let transform = |x: &[C64]| {
        let mut buf = vec![C64::new(0.0, 0.0); m];
        buf[..n].copy_from_slice(x);
        fft.process(&mut buf);
        buf
    };
    let mut e = transform(&traj.e);
    let mut p = transform(&traj.p);
    let t0 = traj.times[0];
    let omega: Vec<f64> = (0..m)
        .map(|k| {
            let kk = if k < m / 2 { k as f64 } else { k as f64 - m as f64 };
            std::f64::consts::TAU * kk / (m as f64 * dt)
        })
        .collect();
    for k in 0..m {
        let phase = C64::from_polar(dt, omega[k] * t0);
        e[k] *= phase;
        p[k] *= phase;
    }
    Ok(Spectra { omega, e, p, dt })
}

/// Relative L2 misfit of P̃(ω) = ((δ − ω − iκ)/w)·Ẽ(ω) over the band where
/// |Ẽ| exceeds 1e-6 of its maximum.
pub fn spectral_check(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    let sp = spectra(traj)?;
    let params = &traj.params;
    let e_max = sp.e.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if e_max == 0.0 || params.w == 0.0 {
        return Ok(0.0);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..sp.omega.len() {
        if sp.e[k].norm() <= 1e-6 * e_max {
            continue;
        }
        let factor = C64::new(params.cavity_detuning - sp.omega[k], -params.kappa) / params.w;
        num += (sp.p[k] - factor * sp.e[k]).norm_sqr();
        den += sp.p[k].norm_sqr();
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
}

/// RMS angular bandwidth of E(ω) about its mean frequency (rad/ns).
pub fn rms_bandwidth(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    let sp = spectra(traj)?;
    let weights: Vec<f64> = sp.e.iter().map(|x| x.norm_sqr()).collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mean = sp.omega.iter().zip(&weights).map(|(w, p)| w * p).sum::<f64>() / total;
    let var = sp.omega.iter().zip(&weights).map(|(w, p)| (w - mean).powi(2) * p).sum::<f64>() / total;
    Ok(var.sqrt())
}

/// 2γ·(κ²/w²)∫[1 + (ω−δ)²/κ²]|Ẽ(ω)|² dω/2π, the frequency-domain form of
/// the polarization loss.
pub fn polarization_loss_from_spectrum(traj: &Trajectory) -> Result<f64, EfficiencyError> {
    let sp = spectra(traj)?;
    let params = &traj.params;
    let d_omega = sp.omega[1] - sp.omega[0];
    let sum: f64 = sp
        .omega
        .iter()
        .zip(&sp.e)
        .map(|(&om, e)| {
            let x = (om - params.cavity_detuning) / params.kappa;
            (1.0 + x * x) * e.norm_sqr()
        })
        .sum();
    let k2w2 = params.kappa * params.kappa / (params.w * params.w);
    Ok(2.0 * params.gamma * k2w2 * sum * d_omega / std::f64::consts::TAU)
}
