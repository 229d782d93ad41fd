//! C ABI for the mxsim simulator.
//!
//! Every function returns an [`MxsimStatus`]. On failure the message is kept
//! per thread and can be read with [`mxsim_last_error`]. Objects are handed
//! out as opaque pointers and must be released with the matching `_free`
//! function. Strings returned by the library are released with
//! [`mxsim_string_free`].
//!
//! Precisions are passed as their element width in bits (2, 4 or 8); stages
//! as their number 0..=3.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mxsim_core::bitserial;
use mxsim_core::mask::{self, BinaryMask, DilationEntry, Stage, StageMap};
use mxsim_core::schedule::PrecisionSchedule;
use mxsim_core::sim::{self, HardwareConfig, RunOptions, SimReport};
use mxsim_core::workload::LayerGraph;
use mxsim_core::{Error, MxBlock, Precision, BLOCK_SIZE};

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MxsimStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    NullOrInvalidArgument = 1,
    InvalidValue = 2,
    Shape = 3,
    Config = 4,
    Range = 5,
    Parse = 6,
    Invariant = 7,
    Io = 8,
    /// The library panicked; this is a bug.
    Internal = 9,
}

/// Stage map produced by [`mxsim_stage_map_build`].
pub struct MxsimStageMap {
    inner: StageMap,
}

/// Precision schedule.
pub struct MxsimSchedule {
    inner: PrecisionSchedule,
}

/// Result of [`mxsim_simulate_json`].
pub struct MxsimReport {
    inner: SimReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> MxsimStatus {
    match err {
        Error::InvalidValue(_) => MxsimStatus::InvalidValue,
        Error::Shape(_) => MxsimStatus::Shape,
        Error::Config { .. } => MxsimStatus::Config,
        Error::Range { .. } => MxsimStatus::Range,
        Error::Parse(_) => MxsimStatus::Parse,
        Error::Invariant(_) => MxsimStatus::Invariant,
        Error::Io { .. } => MxsimStatus::Io,
    }
}

enum Failure {
    Arg(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MxsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MxsimStatus::Ok
        }
        Ok(Err(Failure::Arg(what))) => {
            set_error(format!("invalid argument: {what}"));
            MxsimStatus::NullOrInvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            MxsimStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Arg(what))
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg(what))
}

fn precision(bits: u8) -> Result<Precision, Failure> {
    match bits {
        2 => Ok(Precision::Mxint2),
        4 => Ok(Precision::Mxint4),
        8 => Ok(Precision::Mxint8),
        _ => Err(Failure::Core(Error::Range {
            what: "precision bits",
            value: bits as i64,
            range: "{2, 4, 8}".into(),
        })),
    }
}

fn bool_mask(height: usize, width: usize, bits: &[u8]) -> Result<BinaryMask, Failure> {
    Ok(BinaryMask::from_bits(height, width, bits.iter().map(|&b| b != 0).collect())?)
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn mxsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mxsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Quantizes 32 doubles into one block.
///
/// # Safety
/// `values` must point to 32 doubles and `out_elements` to 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn mxsim_quantize_block(
    values: *const f64,
    precision_bits: u8,
    out_elements: *mut i8,
    out_shared_exp: *mut u8,
) -> MxsimStatus {
    guard(|| {
        let values = slice(values, BLOCK_SIZE, "values")?;
        let elements = slice_mut(out_elements, BLOCK_SIZE, "out_elements")?;
        let exp = out(out_shared_exp, "out_shared_exp")?;
        let block = mxsim_core::mx::quantize_block(values, precision(precision_bits)?)?;
        elements.copy_from_slice(block.elements());
        *exp = block.shared_exp();
        Ok(())
    })
}

/// Decodes one block into 32 doubles.
///
/// # Safety
/// `elements` must point to 32 bytes and `out_values` to 32 doubles.
#[no_mangle]
pub unsafe extern "C" fn mxsim_dequantize_block(
    elements: *const i8,
    shared_exp: u8,
    precision_bits: u8,
    out_values: *mut f64,
) -> MxsimStatus {
    guard(|| {
        let block = make_block(elements, shared_exp, precision_bits, "elements")?;
        let values = slice_mut(out_values, BLOCK_SIZE, "out_values")?;
        values.copy_from_slice(&mxsim_core::mx::dequantize_block(&block));
        Ok(())
    })
}

unsafe fn make_block(elements: *const i8, exp: u8, bits: u8, what: &'static str) -> Result<MxBlock, Failure> {
    let elements: [i8; BLOCK_SIZE] = slice(elements, BLOCK_SIZE, what)?.try_into().expect("32 elements");
    Ok(MxBlock::new(elements, exp, precision(bits)?)?)
}

/// Bit-serial product of an activation block with an MXINT8 weight block.
/// The bfloat16 result is widened to float exactly.
///
/// # Safety
/// `act` and `wgt` must point to 32 bytes each.
#[no_mangle]
pub unsafe extern "C" fn mxsim_block_dot(
    act: *const i8,
    act_exp: u8,
    act_bits: u8,
    wgt: *const i8,
    wgt_exp: u8,
    out_value: *mut f32,
    out_cycles: *mut u32,
) -> MxsimStatus {
    guard(|| {
        let a = make_block(act, act_exp, act_bits, "act")?;
        let w = make_block(wgt, wgt_exp, 8, "wgt")?;
        let value = out(out_value, "out_value")?;
        let cycles = out(out_cycles, "out_cycles")?;
        let dot = bitserial::block_dot(&a, &w)?;
        *value = dot.value.to_f32();
        *cycles = dot.cycles;
        Ok(())
    })
}

/// Builds a stage map from a row-major 0/1 mask.
///
/// # Safety
/// `mask` must point to `height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn mxsim_stage_map_build(
    mask: *const u8,
    height: usize,
    width: usize,
    conv_count: usize,
    stage1_extra: usize,
    out_map: *mut *mut MxsimStageMap,
) -> MxsimStatus {
    guard(|| {
        let slot = out(out_map, "out_map")?;
        let n = height.checked_mul(width).ok_or(Failure::Arg("height * width overflows"))?;
        let main = bool_mask(height, width, slice(mask, n, "mask")?)?;
        let inner = mask::build_stage_map(&main, DilationEntry { conv_count, stage1_extra });
        *slot = Box::into_raw(Box::new(MxsimStageMap { inner }));
        Ok(())
    })
}

/// # Safety
/// `map` must come from [`mxsim_stage_map_build`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mxsim_stage_map_free(map: *mut MxsimStageMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// `map` must be a live stage map.
#[no_mangle]
pub unsafe extern "C" fn mxsim_stage_map_dims(
    map: *const MxsimStageMap,
    out_height: *mut usize,
    out_width: *mut usize,
) -> MxsimStatus {
    guard(|| {
        let map = map.as_ref().ok_or(Failure::Arg("map"))?;
        *out(out_height, "out_height")? = map.inner.height();
        *out(out_width, "out_width")? = map.inner.width();
        Ok(())
    })
}

/// Copies the stage numbers, row-major, into `out_codes` of length `len`,
/// which must equal height * width.
///
/// # Safety
/// `map` must be a live stage map; `out_codes` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mxsim_stage_map_codes(
    map: *const MxsimStageMap,
    out_codes: *mut u8,
    len: usize,
) -> MxsimStatus {
    guard(|| {
        let map = map.as_ref().ok_or(Failure::Arg("map"))?;
        if len != map.inner.len() {
            return Err(Error::Shape(format!("buffer holds {len} codes, map has {}", map.inner.len())).into());
        }
        let codes = slice_mut(out_codes, len, "out_codes")?;
        for (c, s) in codes.iter_mut().zip(map.inner.stages()) {
            *c = s.code();
        }
        Ok(())
    })
}

/// Lifts Stage 0 tokens flagged in the 0/1 `promote` mask to Stage 1, in place.
///
/// # Safety
/// `map` must be a live stage map; `promote` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn mxsim_stage_map_update_semantic(
    map: *mut MxsimStageMap,
    promote: *const u8,
    len: usize,
) -> MxsimStatus {
    guard(|| {
        let map = map.as_mut().ok_or(Failure::Arg("map"))?;
        if len != map.inner.len() {
            return Err(Error::Shape(format!("promote mask has {len} bits, map has {}", map.inner.len())).into());
        }
        let p = bool_mask(map.inner.height(), map.inner.width(), slice(promote, len, "promote")?)?;
        map.inner = mask::update_semantic(&map.inner, &p)?;
        Ok(())
    })
}

/// The 50-step schedule with downgrades at timesteps 9 and 18.
///
/// # Safety
/// `out_schedule` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mxsim_schedule_default(out_schedule: *mut *mut MxsimSchedule) -> MxsimStatus {
    guard(|| {
        *out(out_schedule, "out_schedule")? = Box::into_raw(Box::new(MxsimSchedule {
            inner: PrecisionSchedule::default(),
        }));
        Ok(())
    })
}

/// Parses and validates a schedule; absent fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_schedule` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mxsim_schedule_from_json(
    json: *const c_char,
    out_schedule: *mut *mut MxsimSchedule,
) -> MxsimStatus {
    guard(|| {
        let slot = out(out_schedule, "out_schedule")?;
        let inner = PrecisionSchedule::from_json(string(json, "json")?)?;
        *slot = Box::into_raw(Box::new(MxsimSchedule { inner }));
        Ok(())
    })
}

/// # Safety
/// `schedule` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mxsim_schedule_free(schedule: *mut MxsimSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Element width in bits for `stage` at `timestep`.
///
/// # Safety
/// `schedule` must be a live schedule; `out_bits` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mxsim_schedule_precision_at(
    schedule: *const MxsimSchedule,
    timestep: u32,
    stage: u8,
    out_bits: *mut u8,
) -> MxsimStatus {
    guard(|| {
        let s = schedule.as_ref().ok_or(Failure::Arg("schedule"))?;
        let p = s.inner.precision_at(timestep, Stage::from_code(stage)?)?;
        *out(out_bits, "out_bits")? = p.bits() as u8;
        Ok(())
    })
}

/// Runs a full simulation. `mask` is PBM text or a JSON array of 0/1 rows;
/// `hardware_json` and `schedule` may be null for the defaults.
///
/// # Safety
/// String arguments must be NUL-terminated; `schedule`, when non-null, a live
/// schedule; `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mxsim_simulate_json(
    graph_json: *const c_char,
    mask: *const c_char,
    hardware_json: *const c_char,
    schedule: *const MxsimSchedule,
    out_report: *mut *mut MxsimReport,
) -> MxsimStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        let graph = LayerGraph::from_json(string(graph_json, "graph_json")?)?;
        let main = mask::parse_mask(string(mask, "mask")?)?;
        let hw = if hardware_json.is_null() {
            HardwareConfig::edge()
        } else {
            HardwareConfig::from_json(string(hardware_json, "hardware_json")?)?
        };
        let schedule = schedule.as_ref().map(|s| s.inner.clone()).unwrap_or_default();
        let inner = sim::simulate_run(&graph, &main, &schedule, &hw, &RunOptions::default())?;
        inner.check_invariants()?;
        *slot = Box::into_raw(Box::new(MxsimReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn mxsim_report_free(report: *mut MxsimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Latency and matrix-unit speedups over the uniform-MXINT8 baseline.
///
/// # Safety
/// `report` must be a live report; outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mxsim_report_speedup(
    report: *const MxsimReport,
    out_latency_speedup: *mut f64,
    out_compute_speedup: *mut f64,
) -> MxsimStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Failure::Arg("report"))?;
        *out(out_latency_speedup, "out_latency_speedup")? = r.inner.summary.speedup_vs_mxint8;
        *out(out_compute_speedup, "out_compute_speedup")? = r.inner.summary.compute_speedup_vs_mxint8;
        Ok(())
    })
}

/// Serializes the report as JSON; free the string with [`mxsim_string_free`].
///
/// # Safety
/// `report` must be a live report; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mxsim_report_to_json(report: *const MxsimReport, out_json: *mut *mut c_char) -> MxsimStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Failure::Arg("report"))?;
        let slot = out(out_json, "out_json")?;
        let text = CString::new(r.inner.to_json()).expect("JSON has no NUL");
        *slot = text.into_raw();
        Ok(())
    })
}
