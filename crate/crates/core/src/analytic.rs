//! Closed-form large-coupling solution of the retrieval problem.
//!
//! The fast combination Q = E + pP decays at rate λ; eliminating it
//! adiabatically leaves E = −(w/β²)·Ω·S, which integrates to closed forms for
//! E, S and P. Two conventions for β² exist: one built from a single (λ, p)
//! branch and one combining both branches. Also hosts the constant-delay
//! diagnostic relating E(t) to iwP(t − δt)/κ.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::model::{ModelError, PhysicalParams, Pulse, TimeGrid, Trajectory};
use crate::quadrature::{integrate_adaptive, UniformHermite};
use crate::search::scan_then_golden;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("branches are degenerate (|λ+ − λ−|/|λ+| = {0:.3e}); the dual-branch β² is undefined")]
    DegenerateBranches(f64),
    #[error("the closed-form solution needs w > 0")]
    ZeroCoupling,
    #[error("trajectory spans {span:.3} ns but the delay fit needs at least 10/κ = {needed:.3} ns")]
    WindowTooShort { span: f64, needed: f64 },
    #[error("trajectory is not uniformly sampled")]
    NonUniformGrid,
    #[error("no emitted field to fit")]
    ZeroField,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// The two (λ, p) pairs for which Q = E + pP obeys dQ/dt = λQ + ipΩS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub lambda_plus: C64,
    pub lambda_minus: C64,
    pub p_plus: C64,
    pub p_minus: C64,
    /// κ + iδ.
    pub k: C64,
}

impl BranchPair {
    pub fn get(&self, branch: Branch) -> (C64, C64) {
        match branch {
            Branch::Plus => (self.lambda_plus, self.p_plus),
            Branch::Minus => (self.lambda_minus, self.p_minus),
        }
    }

    /// Branch with the larger decay rate |λ|; ties go to `Plus`.
    pub fn fast_branch(&self) -> Branch {
        if self.lambda_minus.norm() > self.lambda_plus.norm() {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }
}

/// λ± = −½[γ + iΔ + k ± i√(4w² − (γ + iΔ − k)²)],
/// p± = (i/2w)[γ + iΔ − k ± i√(4w² − (γ + iΔ − k)²)], principal root.
pub fn branch_pair(params: &PhysicalParams) -> BranchPair {
    let i = C64::i();
    let k = params.k();
    let g = params.g();
    let a = g - k;
    let root = (C64::new(4.0 * params.w * params.w, 0.0) - a * a).sqrt();
    let half_inv_w = if params.w > 0.0 {
        i / (2.0 * params.w)
    } else {
        C64::new(f64::INFINITY, f64::INFINITY)
    };
    BranchPair {
        lambda_plus: -(g + k + i * root) * 0.5,
        lambda_minus: -(g + k - i * root) * 0.5,
        p_plus: half_inv_w * (a + i * root),
        p_minus: half_inv_w * (a - i * root),
        k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaVariant {
    /// β² = −iwλ/p from a single branch.
    SingleBranch,
    /// β² = −iw·λ₊λ₋/(λ₊ − λ₋)·(p₊ − p₋)/(p₊p₋).
    DualBranch,
}

/// Pulse width (ns) from which the dual-branch convention is the default.
pub const DUAL_BRANCH_MIN_FWHM: f64 = 500.0;

impl BetaVariant {
    pub fn default_for(pulse: &Pulse) -> Self {
        if pulse.fwhm >= DUAL_BRANCH_MIN_FWHM {
            BetaVariant::DualBranch
        } else {
            BetaVariant::SingleBranch
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaConvention {
    pub variant: BetaVariant,
    /// Branch used by `SingleBranch`; `None` for `DualBranch`.
    pub branch: Option<Branch>,
    pub beta_sq: C64,
}

/// β² with the single-branch convention on the fast branch.
pub fn beta_squared(params: &PhysicalParams, variant: BetaVariant) -> Result<BetaConvention, AnalyticError> {
    match variant {
        BetaVariant::SingleBranch => {
            let pair = branch_pair(params);
            beta_squared_single(params, pair.fast_branch())
        }
        BetaVariant::DualBranch => beta_squared_dual(params),
    }
}

/// β² = −iwλ/p on an explicitly chosen branch.
pub fn beta_squared_single(params: &PhysicalParams, branch: Branch) -> Result<BetaConvention, AnalyticError> {
    if params.w <= 0.0 {
        return Err(AnalyticError::ZeroCoupling);
    }
    let (lambda, p) = branch_pair(params).get(branch);
    Ok(BetaConvention {
        variant: BetaVariant::SingleBranch,
        branch: Some(branch),
        beta_sq: -C64::i() * params.w * lambda / p,
    })
}

fn beta_squared_dual(params: &PhysicalParams) -> Result<BetaConvention, AnalyticError> {
    if params.w <= 0.0 {
        return Err(AnalyticError::ZeroCoupling);
    }
    let b = branch_pair(params);
    let split = (b.lambda_plus - b.lambda_minus).norm() / b.lambda_plus.norm();
    if split < 1e-9 {
        return Err(AnalyticError::DegenerateBranches(split));
    }
    let beta_sq = -C64::i() * params.w * (b.lambda_plus * b.lambda_minus / (b.lambda_plus - b.lambda_minus))
        * ((b.p_plus - b.p_minus) / (b.p_plus * b.p_minus));
    Ok(BetaConvention {
        variant: BetaVariant::DualBranch,
        branch: None,
        beta_sq,
    })
}

/// Closed-form E, S, P on the uniform grid t0, t0 + dt_out, … ≤ t_end.
///
/// The exponent ∫Ω²/(β² + Ω²)dt′ is accumulated interval by interval with
/// adaptive Gauss–Kronrod quadrature.
pub fn analytic_trajectory(
    params: &PhysicalParams,
    pulse: &Pulse,
    grid: &TimeGrid,
    convention: &BetaConvention,
) -> Result<Trajectory, AnalyticError> {
    let n = ((grid.t_end - grid.t0) / grid.dt_out).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|j| grid.t0 + j as f64 * grid.dt_out).collect();
    analytic_at_times(params, pulse, times, convention)
}

/// Closed-form E, S, P at arbitrary increasing sample times, e.g. those of a
/// numerical trajectory. The exponent integral starts at `times[0]`.
pub fn analytic_at_times(
    params: &PhysicalParams,
    pulse: &Pulse,
    times: Vec<f64>,
    convention: &BetaConvention,
) -> Result<Trajectory, AnalyticError> {
    if params.w <= 0.0 {
        return Err(AnalyticError::ZeroCoupling);
    }
    let beta_sq = convention.beta_sq;
    let beta = beta_sq.sqrt();
    let k = params.k();
    let i = C64::i();
    let n = times.len();

    let integrand = |t: f64| {
        let om2 = pulse.rabi(t).powi(2);
        C64::new(om2, 0.0) / (beta_sq + om2)
    };
    let mut exponent = C64::new(0.0, 0.0);
    let mut e = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (j, &t) in times.iter().enumerate() {
        if j > 0 {
            exponent += integrate_adaptive(&integrand, times[j - 1], t, 1e-10, 1e-16);
        }
        let omega = pulse.rabi(t);
        let d_omega = pulse.rabi_derivative(t);
        let denom = beta_sq + omega * omega;
        let root = denom.sqrt();
        let decay = (-k * exponent).exp();
        e.push(-(params.w / beta) * (omega / root) * decay);
        s.push(beta / root * decay);
        p.push(i * beta * (k * omega + d_omega) / (denom * root) * decay);
    }
    Ok(Trajectory::new(times, e, p, s, *params, *pulse)?)
}

/// ‖|a| − |b|‖₂ / ‖|a|‖₂ over the common leading samples.
pub fn magnitude_l2_distance(reference: &[C64], other: &[C64]) -> f64 {
    let n = reference.len().min(other.len());
    let (num, den) = (0..n).fold((0.0, 0.0), |(num, den), j| {
        let a = reference[j].norm();
        let b = other[j].norm();
        (num + (a - b).powi(2), den + a * a)
    });
    (num / den).sqrt()
}

/// Best constant delay δt between E(t) and iwP(t − δt)/κ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayFit {
    /// δt* (ns).
    pub delay: f64,
    /// ‖E(t) − iwP(t − δt*)/κ‖₂ / ‖E‖₂.
    pub residual: f64,
}

/// Fits δt ∈ [0, 5/κ] minimising the relative misfit between E(t) and
/// iwP(t − δt)/κ, with P shifted by cubic Hermite interpolation.
pub fn delay_fit(traj: &Trajectory) -> Result<DelayFit, AnalyticError> {
    let kappa = traj.params.kappa;
    let span = traj.times.last().copied().unwrap_or(0.0) - traj.times.first().copied().unwrap_or(0.0);
    let needed = 10.0 / kappa;
    if span < needed {
        return Err(AnalyticError::WindowTooShort { span, needed });
    }
    let dt = traj.uniform_step().ok_or(AnalyticError::NonUniformGrid)?;
    let e_norm = traj.e.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if e_norm == 0.0 {
        return Err(AnalyticError::ZeroField);
    }
    let interp = UniformHermite::new(traj.times[0], dt, &traj.p);
    let scale = C64::i() * traj.params.w / kappa;
    let residual = |delay: f64| {
        let zero = C64::new(0.0, 0.0);
        let sq: f64 = traj
            .times
            .iter()
            .zip(&traj.e)
            .map(|(&t, &e)| (e - scale * interp.eval_or(t - delay, zero)).norm_sqr())
            .sum();
        sq.sqrt() / e_norm
    };
    let hi = 5.0 / kappa;
    let best = scan_then_golden(|d| -residual(d), 0.0, hi, hi / 200.0, 1e-9);
    Ok(DelayFit {
        delay: best.x,
        residual: -best.value,
    })
}

/// max_t |κ|E(t)| − w|P(t − δt)|| / max_t κ|E(t)|.
pub fn magnitude_relation_misfit(traj: &Trajectory, delay: f64) -> Result<f64, AnalyticError> {
    let dt = traj.uniform_step().ok_or(AnalyticError::NonUniformGrid)?;
    let interp = UniformHermite::new(traj.times[0], dt, &traj.p);
    let (kappa, w) = (traj.params.kappa, traj.params.w);
    let zero = C64::new(0.0, 0.0);
    let (worst, peak) = traj
        .times
        .iter()
        .zip(&traj.e)
        .fold((0.0f64, 0.0f64), |(worst, peak), (&t, e)| {
            let lhs = kappa * e.norm();
            let rhs = w * interp.eval_or(t - delay, zero).norm();
            (worst.max((lhs - rhs).abs()), peak.max(lhs))
        });
    Ok(worst / peak)
}
