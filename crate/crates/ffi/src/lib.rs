//! C ABI for the multigrid solver, the architecture builder and the
//! segmentation metrics.
//!
//! Every fallible function returns an [`MgStatus`]. On failure a message is
//! stored per thread and can be read with [`mg_last_error`] until the next
//! failing call on the same thread. Objects cross the boundary as opaque
//! handles created by `*_new`/`*_solve` functions and released with the
//! matching `*_free`. Strings returned by the library are released with
//! [`mg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use mgnets::cyclegraph::{
    build_graph, count_parameters_with, emit_dot, schedule, ArchGraph, ArchSpec, ChannelPolicy, CountConvention, Family,
};
use mgnets::mgsolve::{solve, CycleKind, Grid, PoissonProblem, SmootherConfig, SolveOutcome};
use mgnets::segmetrics::{asd, dice, hd95, BinaryMask};
use mgnets::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Unsupported = 3,
    Structural = 4,
    /// The metric has no value for these inputs (an empty mask).
    Undefined = 5,
    BufferTooSmall = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgCycle {
    V = 0,
    W = 1,
    Fmg = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgFamily {
    Unet = 0,
    Fmgnet = 1,
    Wnet = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgPolicy {
    /// Doubling for U-Net, pocket for FMG-Net and W-Net.
    Default = 0,
    Doubling = 1,
    Pocket = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgConvention {
    Trainable = 0,
    Published = 1,
}

/// Residual history and solution of one Poisson solve.
pub struct MgHistory {
    outcome: SolveOutcome,
}

/// An architecture graph with skip connections applied.
pub struct MgArch {
    graph: ArchGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: MgStatus, msg: impl Into<String>) -> MgStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> MgStatus {
    let status = match &err {
        Error::InvalidArgument(_) => MgStatus::InvalidArgument,
        Error::Unsupported(_) => MgStatus::Unsupported,
        Error::Structural(_) => MgStatus::Structural,
        _ => MgStatus::Internal,
    };
    fail(status, err.to_string())
}

fn guard(f: impl FnOnce() -> MgStatus) -> MgStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MgStatus::Panic, "internal panic"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(MgStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return from_error(err),
        }
    };
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves the sine-source Poisson problem on `n^dim` interior points with
/// Gauss-Seidel smoothing and writes a new history handle to `out`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_poisson_solve(
    dim: u32,
    n: u32,
    cycle: MgCycle,
    pre_sweeps: u32,
    post_sweeps: u32,
    tol: f64,
    max_cycles: u32,
    out: *mut *mut MgHistory,
) -> MgStatus {
    non_null!(out);
    guard(|| {
        let grid = tri!(Grid::new(dim as usize, n as usize));
        let kind = match cycle {
            MgCycle::V => CycleKind::V,
            MgCycle::W => CycleKind::W,
            MgCycle::Fmg => CycleKind::Fmg,
        };
        let config = SmootherConfig::gauss_seidel(pre_sweeps as usize, post_sweeps as usize);
        let outcome = tri!(solve(&PoissonProblem::sine(grid), kind, &config, tol, max_cycles as usize));
        *out = Box::into_raw(Box::new(MgHistory { outcome }));
        MgStatus::Ok
    })
}

/// Number of history entries, including the initial guess. Zero for null.
///
/// # Safety
/// `h` must be null or a live history handle.
#[no_mangle]
pub unsafe extern "C" fn mg_history_len(h: *const MgHistory) -> usize {
    h.as_ref().map_or(0, |h| h.outcome.history.len())
}

/// Residual L2 norm and cumulative work units after cycle `i`.
///
/// # Safety
/// `h` must be a live history handle; `residual` and `work` must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_history_entry(
    h: *const MgHistory,
    i: usize,
    residual: *mut f64,
    work: *mut f64,
) -> MgStatus {
    non_null!(h, residual, work);
    let Some(entry) = (*h).outcome.history.entries().get(i) else {
        return fail(MgStatus::InvalidArgument, format!("entry {i} is out of range"));
    };
    *residual = entry.residual_l2;
    *work = entry.work_units;
    MgStatus::Ok
}

/// Whether the solve reached its tolerance (1) or stopped at the cycle
/// limit (0). Zero for null.
///
/// # Safety
/// `h` must be null or a live history handle.
#[no_mangle]
pub unsafe extern "C" fn mg_history_converged(h: *const MgHistory) -> i32 {
    h.as_ref().map_or(0, |h| i32::from(h.outcome.converged))
}

/// # Safety
/// `h` must be null or a history handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_history_free(h: *mut MgHistory) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Builds the graph for `family` with `grids` resolution levels.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_arch_new(
    family: MgFamily,
    grids: u32,
    dims: u32,
    in_channels: u32,
    out_channels: u32,
    base_features: u32,
    policy: MgPolicy,
    out: *mut *mut MgArch,
) -> MgStatus {
    non_null!(out);
    guard(|| {
        let family = match family {
            MgFamily::Unet => Family::Unet,
            MgFamily::Fmgnet => Family::Fmgnet,
            MgFamily::Wnet => Family::Wnet,
        };
        let mut spec = ArchSpec::new(family, grids as usize)
            .with_dims(dims as usize)
            .with_channels(in_channels as usize, out_channels as usize)
            .with_base(base_features as usize);
        match policy {
            MgPolicy::Default => {}
            MgPolicy::Doubling => spec = spec.with_policy(ChannelPolicy::Doubling),
            MgPolicy::Pocket => spec = spec.with_policy(ChannelPolicy::Pocket),
        }
        let graph = tri!(build_graph(&spec));
        *out = Box::into_raw(Box::new(MgArch { graph }));
        MgStatus::Ok
    })
}

/// Parameter count. Under the published convention batch norm also counts
/// its running statistics.
///
/// # Safety
/// `a` must be a live architecture handle; `count` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_arch_param_count(a: *const MgArch, convention: MgConvention, count: *mut u64) -> MgStatus {
    non_null!(a, count);
    let convention = match convention {
        MgConvention::Trainable => CountConvention::Trainable,
        MgConvention::Published => CountConvention::Published,
    };
    *count = count_parameters_with(&(*a).graph, convention);
    MgStatus::Ok
}

/// Number of nodes in the graph. Zero for null.
///
/// # Safety
/// `a` must be null or a live architecture handle.
#[no_mangle]
pub unsafe extern "C" fn mg_arch_node_count(a: *const MgArch) -> usize {
    a.as_ref().map_or(0, |a| a.graph.len())
}

/// Copies the visited level sequence into `levels`. `len` receives the full
/// length even when `capacity` is too small, so a first call with
/// `capacity = 0` sizes the buffer.
///
/// # Safety
/// `a` must be a live handle, `len` valid for writes, and `levels` valid for
/// `capacity` writes (it may be null when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn mg_arch_schedule(
    a: *const MgArch,
    levels: *mut u32,
    capacity: usize,
    len: *mut usize,
) -> MgStatus {
    non_null!(a, len);
    let spec = (*a).graph.spec();
    let sched = tri!(schedule(spec.family, spec.depth));
    *len = sched.levels().len();
    if capacity < *len {
        return fail(MgStatus::BufferTooSmall, format!("schedule has {} levels, buffer holds {capacity}", *len));
    }
    non_null!(levels);
    let dst = slice::from_raw_parts_mut(levels, *len);
    for (d, &l) in dst.iter_mut().zip(sched.levels()) {
        *d = l as u32;
    }
    MgStatus::Ok
}

/// Graphviz rendering of the graph. Release with [`mg_string_free`].
///
/// # Safety
/// `a` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_arch_dot(a: *const MgArch, out: *mut *mut c_char) -> MgStatus {
    non_null!(a, out);
    match CString::new(emit_dot(&(*a).graph)) {
        Ok(s) => {
            *out = s.into_raw();
            MgStatus::Ok
        }
        Err(e) => fail(MgStatus::Internal, e.to_string()),
    }
}

/// # Safety
/// `a` must be null or an architecture handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mg_arch_free(a: *mut MgArch) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

unsafe fn masks(
    shape: *const usize,
    ndim: usize,
    pred: *const u8,
    truth: *const u8,
) -> Result<(BinaryMask, BinaryMask), MgStatus> {
    if shape.is_null() || pred.is_null() || truth.is_null() {
        return Err(fail(MgStatus::NullPointer, "shape or mask pointer is null"));
    }
    let shape = slice::from_raw_parts(shape, ndim);
    let len = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let Some(len) = len else {
        return Err(fail(MgStatus::InvalidArgument, "mask size overflows"));
    };
    let read = |p: *const u8| slice::from_raw_parts(p, len).iter().map(|&v| v != 0).collect();
    let a = BinaryMask::new(shape, read(pred)).map_err(from_error)?;
    let b = BinaryMask::new(shape, read(truth)).map_err(from_error)?;
    Ok((a, b))
}

/// Dice coefficient of two row-major masks (nonzero bytes are foreground).
///
/// # Safety
/// `shape` must hold `ndim` entries and both masks `prod(shape)` bytes;
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mg_dice(
    shape: *const usize,
    ndim: usize,
    pred: *const u8,
    truth: *const u8,
    out: *mut f64,
) -> MgStatus {
    non_null!(out);
    guard(|| {
        let (a, b) = match masks(shape, ndim, pred, truth) {
            Ok(m) => m,
            Err(s) => return s,
        };
        *out = tri!(dice(&a, &b));
        MgStatus::Ok
    })
}

type SurfaceMetric = fn(&BinaryMask, &BinaryMask, &[f64]) -> mgnets::Result<Option<f64>>;

unsafe fn surface_metric(
    metric: SurfaceMetric,
    shape: *const usize,
    ndim: usize,
    spacing: *const f64,
    pred: *const u8,
    truth: *const u8,
    out: *mut f64,
) -> MgStatus {
    non_null!(spacing, out);
    guard(|| {
        let (a, b) = match masks(shape, ndim, pred, truth) {
            Ok(m) => m,
            Err(s) => return s,
        };
        match tri!(metric(&a, &b, slice::from_raw_parts(spacing, ndim))) {
            Some(v) => {
                *out = v;
                MgStatus::Ok
            }
            None => fail(MgStatus::Undefined, "a mask is empty"),
        }
    })
}

/// 95th-percentile Hausdorff distance in spacing units. Returns
/// `Undefined` when either mask is empty.
///
/// # Safety
/// As [`mg_dice`], plus `spacing` must hold `ndim` entries.
#[no_mangle]
pub unsafe extern "C" fn mg_hd95(
    shape: *const usize,
    ndim: usize,
    spacing: *const f64,
    pred: *const u8,
    truth: *const u8,
    out: *mut f64,
) -> MgStatus {
    surface_metric(hd95, shape, ndim, spacing, pred, truth, out)
}

/// Average symmetric surface distance. Returns `Undefined` when either mask
/// is empty.
///
/// # Safety
/// As [`mg_hd95`].
#[no_mangle]
pub unsafe extern "C" fn mg_asd(
    shape: *const usize,
    ndim: usize,
    spacing: *const f64,
    pred: *const u8,
    truth: *const u8,
    out: *mut f64,
) -> MgStatus {
    surface_metric(asd, shape, ndim, spacing, pred, truth, out)
}

/// Copies the message of the last failure into `buf` (NUL-terminated,
/// truncated to fit). Returns the full message length, or 0 when there is
/// none.
///
/// # Safety
/// `buf` must be valid for `capacity` writes or null with `capacity` 0.
#[no_mangle]
pub unsafe extern "C" fn mg_last_error_copy(buf: *mut c_char, capacity: usize) -> usize {
    let msg = mg_last_error();
    if msg.is_null() {
        return 0;
    }
    let bytes = CStr::from_ptr(msg).to_bytes();
    if !buf.is_null() && capacity > 0 {
        let n = bytes.len().min(capacity - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len()
}
