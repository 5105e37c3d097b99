//! C ABI for the dqcalib extrinsic calibration library.
//!
//! Objects are opaque handles created by `*_new` functions and released by
//! the matching `*_free`. Every fallible function returns a [`DqcStatus`];
//! the message of a failure is available from [`dqc_last_error_message`]
//! on the calling thread. Dual quaternions are passed
//! as 8 doubles `(w, x, y, z)` real part then dual part.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dqcalib::io::load_pairs;
use dqcalib::planar::plane_alignment_dq;
use dqcalib::{
    calib_error, certify, solve_fast, solve_global, CalibSolution, CertifyOptions, ConstraintMode,
    CostAccumulator, DualQuat, DualSolveOptions, Error, GroundPlane, LocalSolveOptions, MotionPair,
    OnlineCalibrator, OnlineConfig, Provenance, Vec8,
};
use nalgebra::Vector3;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Input is not a unit dual quaternion.
    NotUnit = 3,
    Parse = 4,
    Io = 5,
    EmptyData = 6,
    /// Iteration limit, degenerate start or infeasible subproblem.
    SolverFailed = 7,
    /// The data does not determine a unique calibration.
    NonUnique = 8,
    /// The candidate violates the constraints.
    Infeasible = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqcMode {
    Full3d = 0,
    Planar = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DqcProvenance {
    Local = 0,
    Global = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqcSolution {
    /// Calibration from sensor B to sensor A.
    pub q: [f64; 8],
    pub cost: f64,
    pub gap: f64,
    pub is_global: bool,
    pub provenance: DqcProvenance,
    pub null_dim: usize,
    /// Seconds.
    pub solve_time: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqcCertificate {
    pub gap: f64,
    pub residual: f64,
    pub min_eig: f64,
    pub cost: f64,
    pub dual_bound: f64,
    pub is_global: bool,
    pub unique: bool,
    pub null_dim: usize,
}

/// Accumulated motion pairs of one calibration problem.
pub struct DqcAccumulator(CostAccumulator);

/// Incremental calibrator fed one motion pair at a time.
pub struct DqcOnline(OnlineCalibrator);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DqcStatus {
    match e {
        Error::NonUnitAxis(_) | Error::NotUnit(_) | Error::NotUnitAt { .. } => DqcStatus::NotUnit,
        Error::Parse { .. }
        | Error::NonOrthogonalRotation { .. }
        | Error::NonMonotonicTime { .. } => DqcStatus::Parse,
        Error::Io(_) => DqcStatus::Io,
        Error::EmptyData => DqcStatus::EmptyData,
        Error::NonUniqueSolution { .. } | Error::DegenerateInput(_) => DqcStatus::NonUnique,
        Error::InfeasiblePoint(_) => DqcStatus::Infeasible,
        Error::InvalidWeight(_)
        | Error::Config(_)
        | Error::NoOverlap
        | Error::DegeneratePath(_) => DqcStatus::InvalidArgument,
        Error::MaxIterExceeded { .. }
        | Error::DegenerateInit
        | Error::Infeasible(_)
        | Error::NoNullSpace { .. } => DqcStatus::SolverFailed,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (DqcStatus, String)>) -> DqcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            DqcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DqcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (DqcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(name: &str) -> (DqcStatus, String) {
    (DqcStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn read8(p: *const f64, name: &str) -> Result<[f64; 8], (DqcStatus, String)> {
    if p.is_null() {
        return Err(null_err(name));
    }
    let mut out = [0.0; 8];
    out.copy_from_slice(std::slice::from_raw_parts(p, 8));
    Ok(out)
}

unsafe fn read_dq(p: *const f64, name: &str) -> Result<DualQuat, (DqcStatus, String)> {
    let v = read8(p, name)?;
    DualQuat::from_vec_checked(&Vec8::from(v)).map_err(lib_err)
}

unsafe fn read_plane(p: *const f64, name: &str) -> Result<GroundPlane, (DqcStatus, String)> {
    if p.is_null() {
        return Err(null_err(name));
    }
    let v = std::slice::from_raw_parts(p, 4);
    GroundPlane::new(Vector3::new(v[0], v[1], v[2]), v[3]).map_err(lib_err)
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (DqcStatus, String)> {
    p.as_ref().ok_or_else(|| null_err(name))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, (DqcStatus, String)> {
    p.as_mut().ok_or_else(|| null_err(name))
}

fn mode_of(m: DqcMode) -> ConstraintMode {
    match m {
        DqcMode::Full3d => ConstraintMode::Full3D,
        DqcMode::Planar => ConstraintMode::Planar,
    }
}

fn solution_of(s: &CalibSolution) -> DqcSolution {
    DqcSolution {
        q: s.q_hat.canonicalize().to_vec().into(),
        cost: s.primal_cost,
        gap: s.gap,
        is_global: s.is_global,
        provenance: match s.provenance {
            Provenance::Local => DqcProvenance::Local,
            Provenance::Global => DqcProvenance::Global,
        },
        null_dim: s.null_dim,
        solve_time: s.solve_time,
    }
}

fn check_threshold(gap_threshold: f64) -> Result<(), (DqcStatus, String)> {
    if gap_threshold > 0.0 {
        Ok(())
    } else {
        Err((
            DqcStatus::InvalidArgument,
            format!("gap threshold {gap_threshold} must be positive"),
        ))
    }
}

/// Error message of the most recent call on this thread; empty when that
/// call succeeded. Valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn dqc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn dqc_status_string(status: DqcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DqcStatus::Ok => c"ok",
        DqcStatus::NullPointer => c"null pointer",
        DqcStatus::InvalidArgument => c"invalid argument",
        DqcStatus::NotUnit => c"not a unit dual quaternion",
        DqcStatus::Parse => c"parse error",
        DqcStatus::Io => c"i/o error",
        DqcStatus::EmptyData => c"no motion pairs",
        DqcStatus::SolverFailed => c"solver failed",
        DqcStatus::NonUnique => c"calibration not unique",
        DqcStatus::Infeasible => c"infeasible candidate",
        DqcStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dqc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty accumulator.
#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_new(
    mode: DqcMode,
    out: *mut *mut DqcAccumulator,
) -> DqcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(DqcAccumulator(CostAccumulator::new(mode_of(
            mode,
        )))));
        Ok(())
    })
}

/// Creates an empty planar accumulator whose pairs are expressed in the
/// frames aligned with the given ground planes (`nx, ny, nz, d` each).
#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_new_planar(
    plane_a: *const f64,
    plane_b: *const f64,
    out: *mut *mut DqcAccumulator,
) -> DqcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let a = read_plane(plane_a, "plane_a")?;
        let b = read_plane(plane_b, "plane_b")?;
        let acc =
            CostAccumulator::planar_with_alignment(plane_alignment_dq(&a), plane_alignment_dq(&b));
        *out = Box::into_raw(Box::new(DqcAccumulator(acc)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_free(acc: *mut DqcAccumulator) {
    if !acc.is_null() {
        drop(Box::from_raw(acc));
    }
}

/// Adds one motion pair. `weights` (8 doubles) may be null for unit
/// weights; `eta` is the pair's confidence (1 for the default).
#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_add(
    acc: *mut DqcAccumulator,
    q_a: *const f64,
    q_b: *const f64,
    timestamp: f64,
    weights: *const f64,
    eta: f64,
) -> DqcStatus {
    guard(|| {
        let acc = deref_mut(acc, "acc")?;
        let mut pair =
            MotionPair::new(read_dq(q_a, "q_a")?, read_dq(q_b, "q_b")?, timestamp).with_eta(eta);
        if !weights.is_null() {
            pair = pair.with_weights(read8(weights, "weights")?);
        }
        acc.0.add(&pair).map_err(lib_err)
    })
}

/// Adds every pair of a JSON-lines file.
#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_load_pairs(
    acc: *mut DqcAccumulator,
    path: *const c_char,
) -> DqcStatus {
    guard(|| {
        let acc = deref_mut(acc, "acc")?;
        if path.is_null() {
            return Err(null_err("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| {
            (
                DqcStatus::InvalidArgument,
                format!("path is not UTF-8: {e}"),
            )
        })?;
        for p in load_pairs(Path::new(path)).map_err(lib_err)? {
            acc.0.add(&p).map_err(lib_err)?;
        }
        Ok(())
    })
}

/// Number of pairs added so far; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn dqc_accumulator_len(acc: *const DqcAccumulator) -> usize {
    acc.as_ref().map_or(0, |a| a.0.len())
}

/// Certifiably global solve.
#[no_mangle]
pub unsafe extern "C" fn dqc_solve_global(
    acc: *const DqcAccumulator,
    gap_threshold: f64,
    out: *mut DqcSolution,
) -> DqcStatus {
    guard(|| {
        let acc = deref(acc, "acc")?;
        let out = deref_mut(out, "out")?;
        check_threshold(gap_threshold)?;
        let opts = DualSolveOptions {
            gap_threshold,
            ..Default::default()
        };
        *out = solution_of(&solve_global(&acc.0, &opts).map_err(lib_err)?);
        Ok(())
    })
}

/// Fast local solve from `init` (8 doubles, or null for the default start),
/// certified afterwards.
#[no_mangle]
pub unsafe extern "C" fn dqc_solve_fast(
    acc: *const DqcAccumulator,
    init: *const f64,
    gap_threshold: f64,
    out: *mut DqcSolution,
) -> DqcStatus {
    guard(|| {
        let acc = deref(acc, "acc")?;
        let out = deref_mut(out, "out")?;
        check_threshold(gap_threshold)?;
        let init = if init.is_null() {
            None
        } else {
            Some(read_dq(init, "init")?)
        };
        let opts = CertifyOptions {
            gap_threshold,
            ..Default::default()
        };
        *out = solution_of(
            &solve_fast(&acc.0, init, &LocalSolveOptions::default(), &opts).map_err(lib_err)?,
        );
        Ok(())
    })
}

/// Certifies a candidate calibration against the accumulated pairs.
#[no_mangle]
pub unsafe extern "C" fn dqc_certify(
    acc: *const DqcAccumulator,
    candidate: *const f64,
    gap_threshold: f64,
    out: *mut DqcCertificate,
) -> DqcStatus {
    guard(|| {
        let acc = deref(acc, "acc")?;
        let out = deref_mut(out, "out")?;
        check_threshold(gap_threshold)?;
        let cand = read_dq(candidate, "candidate")?;
        let x = match acc.0.alignment() {
            Some((g_a, g_b)) => dqcalib::planar::project_calibration(cand, g_a, g_b),
            None => cand,
        };
        let opts = CertifyOptions {
            gap_threshold,
            ..Default::default()
        };
        let c =
            certify(&acc.0.normalized_q(), &x.to_vec(), acc.0.mode(), &opts).map_err(lib_err)?;
        *out = DqcCertificate {
            gap: c.gap,
            residual: c.residual,
            min_eig: c.min_eig,
            cost: c.primal_cost,
            dual_bound: c.dual_bound,
            is_global: c.is_global,
            unique: c.unique,
            null_dim: c.null_dim,
        };
        Ok(())
    })
}

fn online_new(
    cfg: OnlineConfig,
    gap_threshold: f64,
    out: &mut *mut DqcOnline,
) -> Result<(), (DqcStatus, String)> {
    check_threshold(gap_threshold)?;
    let cal = OnlineCalibrator::new(cfg.with_gap_threshold(gap_threshold)).map_err(lib_err)?;
    *out = Box::into_raw(Box::new(DqcOnline(cal)));
    Ok(())
}

/// Creates an online calibrator. `t_no_fail` is the number of seconds of
/// certified fast solutions after which the global solver is skipped.
#[no_mangle]
pub unsafe extern "C" fn dqc_online_new(
    mode: DqcMode,
    t_no_fail: f64,
    gap_threshold: f64,
    out: *mut *mut DqcOnline,
) -> DqcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let cfg = OnlineConfig {
            mode: mode_of(mode),
            t_no_fail,
            ..Default::default()
        };
        online_new(cfg, gap_threshold, out)
    })
}

/// Planar online calibrator with ground planes `nx, ny, nz, d`.
#[no_mangle]
pub unsafe extern "C" fn dqc_online_new_planar(
    plane_a: *const f64,
    plane_b: *const f64,
    t_no_fail: f64,
    gap_threshold: f64,
    out: *mut *mut DqcOnline,
) -> DqcStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let cfg = OnlineConfig {
            mode: ConstraintMode::Planar,
            t_no_fail,
            planes: Some((
                read_plane(plane_a, "plane_a")?,
                read_plane(plane_b, "plane_b")?,
            )),
            ..Default::default()
        };
        online_new(cfg, gap_threshold, out)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dqc_online_free(cal: *mut DqcOnline) {
    if !cal.is_null() {
        drop(Box::from_raw(cal));
    }
}

/// Adds a pair and returns the updated calibration.
#[no_mangle]
pub unsafe extern "C" fn dqc_online_update(
    cal: *mut DqcOnline,
    q_a: *const f64,
    q_b: *const f64,
    timestamp: f64,
    out: *mut DqcSolution,
) -> DqcStatus {
    guard(|| {
        let cal = deref_mut(cal, "cal")?;
        let out = deref_mut(out, "out")?;
        let pair = MotionPair::new(read_dq(q_a, "q_a")?, read_dq(q_b, "q_b")?, timestamp);
        *out = solution_of(&cal.0.update(&pair).map_err(lib_err)?);
        Ok(())
    })
}

/// Rotation error in degrees and translation error between two
/// calibrations.
#[no_mangle]
pub unsafe extern "C" fn dqc_calib_error(
    q_hat: *const f64,
    q_true: *const f64,
    eps_r_deg: *mut f64,
    eps_t: *mut f64,
) -> DqcStatus {
    guard(|| {
        let r = deref_mut(eps_r_deg, "eps_r_deg")?;
        let t = deref_mut(eps_t, "eps_t")?;
        let e =
            calib_error(&read_dq(q_hat, "q_hat")?, &read_dq(q_true, "q_true")?).map_err(lib_err)?;
        *r = e.eps_r_deg();
        *t = e.eps_t;
        Ok(())
    })
}
