//! C ABI over `photon-readout`.
//!
//! Every entry point returns a [`PrStatus`]; on failure a message is
//! available from [`pr_last_error`] on the same thread. Trajectories are
//! opaque handles released with [`pr_trajectory_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use photon_readout::efficiency::retrieval_efficiency;
use photon_readout::homodyne::{optimize_lo_frequency, HomodyneError};
use photon_readout::optimize::{optimize_point, DeltaSearch, Objective, OptimizeError};
use photon_readout::{rad_per_ns_to_mhz, simulate, PhysicalParams, Pulse, TimeGrid, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    SimulationFailed = 3,
    NoField = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrObjective {
    Eta = 0,
    ChiEta = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrField {
    E = 0,
    P = 1,
    S = 2,
}

/// Model parameters, all rates as ν/2π in MHz.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrParams {
    pub kappa_mhz: f64,
    pub gamma_mhz: f64,
    pub w_mhz: f64,
    pub delta_big_mhz: f64,
    pub delta_mhz: f64,
}

/// Gaussian control pulse.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PrPulse {
    pub omega_mhz: f64,
    pub fwhm_ns: f64,
    pub t_center_ns: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PrResult {
    pub eta: f64,
    pub chi: f64,
    pub chi_eta: f64,
    pub nu_opt_mhz: f64,
    pub delta_opt_mhz: f64,
    pub evaluations: usize,
    /// Nonzero when δ_opt lies on the edge of the search interval.
    pub at_boundary: i32,
}

/// Opaque trajectory handle.
pub struct PrTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl ToString) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn guarded<F: FnOnce() -> Result<(), (PrStatus, String)>>(f: F) -> PrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrStatus::Panic
        }
    }
}

fn fail<E: ToString>(status: PrStatus) -> impl Fn(E) -> (PrStatus, String) {
    move |e| (status, e.to_string())
}

fn null(what: &str) -> (PrStatus, String) {
    (PrStatus::NullPointer, format!("{what} is null"))
}

fn convert(params: &PrParams, pulse: &PrPulse) -> Result<(PhysicalParams, Pulse), (PrStatus, String)> {
    let p = PhysicalParams::from_mhz(
        params.kappa_mhz,
        params.gamma_mhz,
        params.w_mhz,
        params.delta_big_mhz,
        params.delta_mhz,
    )
    .map_err(fail(PrStatus::InvalidArgument))?;
    let q = Pulse::gaussian_mhz(pulse.omega_mhz, pulse.fwhm_ns, pulse.t_center_ns).map_err(fail(PrStatus::InvalidArgument))?;
    Ok((p, q))
}

/// Message describing the last failure on this thread, or NULL. The string
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Integrates the model on the default grid for the pulse. `rel_tol <= 0`
/// selects the default tolerance.
///
/// # Safety
/// `params`, `pulse` and `out` must be valid pointers or NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_simulate(
    params: *const PrParams,
    pulse: *const PrPulse,
    rel_tol: f64,
    out: *mut *mut PrTrajectory,
) -> PrStatus {
    guarded(|| {
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let pulse = pulse.as_ref().ok_or_else(|| null("pulse"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let (p, q) = convert(params, pulse)?;
        let mut grid = TimeGrid::for_pulse(&p, &q);
        if rel_tol > 0.0 {
            grid = grid.with_tolerance(rel_tol);
        }
        let (traj, _) = simulate(&p, &q, &grid).map_err(fail(PrStatus::SimulationFailed))?;
        *out = Box::into_raw(Box::new(PrTrajectory { inner: traj }));
        Ok(())
    })
}

/// # Safety
/// `traj` must come from [`pr_simulate`] and not have been freed, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_trajectory_free(traj: *mut PrTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of samples, or 0 for a NULL handle.
///
/// # Safety
/// `traj` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_trajectory_len(traj: *const PrTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the sample times (ns) into `out`, which holds `capacity` doubles.
///
/// # Safety
/// `traj` must be a live handle; `out` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_trajectory_times(traj: *const PrTrajectory, out: *mut f64, capacity: usize) -> PrStatus {
    guarded(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = t.inner.len();
        if capacity < n {
            return Err((PrStatus::BufferTooSmall, format!("need {n} samples, got {capacity}")));
        }
        ptr::copy_nonoverlapping(t.inner.times.as_ptr(), out, n);
        Ok(())
    })
}

/// Copies the real and imaginary parts of one amplitude.
///
/// # Safety
/// `traj` must be a live handle; `re` and `im` must each point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pr_trajectory_field(
    traj: *const PrTrajectory,
    field: PrField,
    re: *mut f64,
    im: *mut f64,
    capacity: usize,
) -> PrStatus {
    guarded(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let values = match field {
            PrField::E => &t.inner.e,
            PrField::P => &t.inner.p,
            PrField::S => &t.inner.s,
        };
        if capacity < values.len() {
            return Err((PrStatus::BufferTooSmall, format!("need {} samples, got {capacity}", values.len())));
        }
        for (j, v) in values.iter().enumerate() {
            *re.add(j) = v.re;
            *im.add(j) = v.im;
        }
        Ok(())
    })
}

/// Retrieval efficiency of a trajectory.
///
/// # Safety
/// `traj` must be a live handle; `eta` a writable double or NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_efficiency(traj: *const PrTrajectory, eta: *mut f64) -> PrStatus {
    guarded(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        let eta = eta.as_mut().ok_or_else(|| null("eta"))?;
        *eta = retrieval_efficiency(&t.inner).map_err(fail(PrStatus::SimulationFailed))?;
        Ok(())
    })
}

/// η, χ, χη and ν_opt of a trajectory at its own δ.
///
/// # Safety
/// `traj` must be a live handle; `out` a writable result or NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_homodyne(traj: *const PrTrajectory, out: *mut PrResult) -> PrStatus {
    guarded(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let h = optimize_lo_frequency(&t.inner).map_err(|e| match e {
            HomodyneError::ZeroField => (PrStatus::NoField, e.to_string()),
            e => (PrStatus::SimulationFailed, e.to_string()),
        })?;
        *out = PrResult {
            eta: h.eta,
            chi: h.chi,
            chi_eta: h.chi_eta(),
            nu_opt_mhz: rad_per_ns_to_mhz(h.omega_opt),
            delta_opt_mhz: rad_per_ns_to_mhz(t.inner.params.cavity_detuning),
            evaluations: 1,
            at_boundary: 0,
        };
        Ok(())
    })
}

/// Optimises δ over ±40 MHz for the objective, then the LO frequency.
/// `params.delta_mhz` is ignored. `rel_tol <= 0` selects the default.
///
/// # Safety
/// `params`, `pulse` and `out` must be valid pointers or NULL.
#[no_mangle]
pub unsafe extern "C" fn pr_optimize(
    params: *const PrParams,
    pulse: *const PrPulse,
    objective: PrObjective,
    rel_tol: f64,
    out: *mut PrResult,
) -> PrStatus {
    guarded(|| {
        let params = params.as_ref().ok_or_else(|| null("params"))?;
        let pulse = pulse.as_ref().ok_or_else(|| null("pulse"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (p, q) = convert(params, pulse)?;
        let mut search = DeltaSearch::default();
        if rel_tol > 0.0 {
            search.rel_tol = rel_tol;
        }
        let objective = match objective {
            PrObjective::Eta => Objective::Eta,
            PrObjective::ChiEta => Objective::ChiEta,
        };
        let r = optimize_point(&p, &q, objective, &search).map_err(|e| match e {
            OptimizeError::Homodyne(HomodyneError::ZeroField) => (PrStatus::NoField, e.to_string()),
            e => (PrStatus::SimulationFailed, e.to_string()),
        })?;
        *out = PrResult {
            eta: r.eta,
            chi: r.chi,
            chi_eta: r.chi_eta,
            nu_opt_mhz: rad_per_ns_to_mhz(r.omega_opt),
            delta_opt_mhz: rad_per_ns_to_mhz(r.delta_opt),
            evaluations: r.evaluations,
            at_boundary: r.at_boundary as i32,
        };
        Ok(())
    })
}
