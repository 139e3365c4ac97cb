//! C interface to the event pipeline.
//!
//! Streams and networks are opaque handles created by `nd_*_read` /
//! `nd_*_load` style constructors and released with the matching `_free`.
//! Every fallible function returns an [`NdStatus`]; on failure the message is
//! available from [`nd_last_error`] until the next failing call on the same
//! thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use neurododge::deploy::{decode_action, encode_address, quantize_value, DEFAULT_ALPHA};
use neurododge::event::{read_stream, write_stream, Event, EventStream, Polarity};
use neurododge::kep::{self, KepConfig};
use neurododge::snn::{read_network, Network};
use neurododge::train::LossSpec;
use neurododge::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// One event. `p` is 1 for ON and 0 for OFF.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NdEvent {
    pub t_us: u32,
    pub x: u16,
    pub y: u16,
    pub p: u8,
}

/// Key-event filter settings; start from [`nd_kep_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdKepConfig {
    pub radius: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub trials: usize,
    pub cells: usize,
    pub seed: u64,
}

/// Decoded avoidance command.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdAction {
    /// Channel with the most output spikes: 0 approach from the left, 1 from the right.
    pub approach: u32,
    pub speed: f64,
}

/// Opaque event stream.
pub struct NdEventStream(EventStream);

/// Opaque network checkpoint.
pub struct NdNetwork(Network);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> NdStatus {
    match err {
        Error::Io(_) => NdStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => NdStatus::Parse,
        Error::Shape(_) => NdStatus::Shape,
        Error::Numeric(_) | Error::MissingTraces => NdStatus::Numeric,
        _ => NdStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (NdStatus, String)>) -> NdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NdStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NdStatus::Panic
        }
    }
}

fn lib<T>(r: Result<T, Error>) -> Result<T, (NdStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (NdStatus, String) {
    (NdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (NdStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (NdStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn boxed<T>(value: T, out: *mut *mut T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the most recent failure on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Reads an EVS1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_read(path: *const c_char, out: *mut *mut NdEventStream) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        boxed(NdEventStream(lib(read_stream(path))?), out);
        Ok(())
    })
}

/// Writes a stream as EVS1.
///
/// # Safety
/// `stream` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_write(stream: *const NdEventStream, path: *const c_char) -> NdStatus {
    guard(|| {
        let stream = stream.as_ref().ok_or_else(|| null("stream"))?;
        let path = path_arg(path)?;
        lib(write_stream(&stream.0, path))
    })
}

/// Builds a stream from `len` events, validating bounds.
///
/// # Safety
/// `events` must point to `len` readable events (it may be null when `len`
/// is 0) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_from_events(
    events: *const NdEvent,
    len: usize,
    width: u16,
    height: u16,
    window_us: u32,
    out: *mut *mut NdEventStream,
) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let raw = if len == 0 {
            &[][..]
        } else if events.is_null() {
            return Err(null("events"));
        } else {
            std::slice::from_raw_parts(events, len)
        };
        let mut list = Vec::with_capacity(len);
        for (i, e) in raw.iter().enumerate() {
            let p = Polarity::from_bit(e.p)
                .ok_or_else(|| (NdStatus::InvalidArgument, format!("event {i}: polarity {} is not 0 or 1", e.p)))?;
            list.push(Event::new(e.t_us, e.x, e.y, p));
        }
        boxed(NdEventStream(lib(EventStream::from_events(list, width, height, window_us))?), out);
        Ok(())
    })
}

/// Number of events; 0 for a null handle.
///
/// # Safety
/// `stream` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_len(stream: *const NdEventStream) -> usize {
    stream.as_ref().map_or(0, |s| s.0.len())
}

/// Copies the events into `buf`, which must hold at least
/// [`nd_stream_len`] entries.
///
/// # Safety
/// `buf` must point to `capacity` writable events.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_events(
    stream: *const NdEventStream,
    buf: *mut NdEvent,
    capacity: usize,
) -> NdStatus {
    guard(|| {
        let stream = stream.as_ref().ok_or_else(|| null("stream"))?;
        let events = stream.0.events();
        if events.len() > capacity {
            return Err((
                NdStatus::BufferTooSmall,
                format!("stream has {} events, buffer holds {capacity}", events.len()),
            ));
        }
        if events.is_empty() {
            return Ok(());
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let dst = std::slice::from_raw_parts_mut(buf, events.len());
        for (d, e) in dst.iter_mut().zip(events) {
            *d = NdEvent { t_us: e.t, x: e.x, y: e.y, p: e.p.bit() };
        }
        Ok(())
    })
}

/// Releases a stream. Null is ignored.
///
/// # Safety
/// `stream` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nd_stream_free(stream: *mut NdEventStream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}

#[no_mangle]
pub extern "C" fn nd_kep_config_default() -> NdKepConfig {
    let c = KepConfig::default();
    NdKepConfig {
        radius: c.radius,
        lambda1: c.lambda1,
        lambda2: c.lambda2,
        trials: c.trials,
        cells: c.cells,
        seed: c.seed,
    }
}

/// Runs the key-event filter and returns the key stream as a new handle.
///
/// # Safety
/// Pointers must be valid; `config` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn nd_kep_filter(
    stream: *const NdEventStream,
    config: *const NdKepConfig,
    out: *mut *mut NdEventStream,
) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let stream = stream.as_ref().ok_or_else(|| null("stream"))?;
        let c = config.as_ref().copied().unwrap_or_else(|| nd_kep_config_default());
        let cfg = KepConfig {
            radius: c.radius,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            trials: c.trials,
            cells: c.cells,
            seed: c.seed,
        };
        let key = lib(kep::run(&stream.0, &cfg))?.key;
        boxed(NdEventStream(key), out);
        Ok(())
    })
}

/// Loads an SNN1 checkpoint.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nd_network_load(path: *const c_char, out: *mut *mut NdNetwork) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        boxed(NdNetwork(lib(read_network(path))?), out);
        Ok(())
    })
}

/// Time steps the network runs; 0 for a null handle.
///
/// # Safety
/// `net` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn nd_network_steps(net: *const NdNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.steps)
}

/// Output channels of the network; 0 for a null handle.
///
/// # Safety
/// `net` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn nd_network_outputs(net: *const NdNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.0.output_channels())
}

/// Releases a network. Null is ignored.
///
/// # Safety
/// `net` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn nd_network_free(net: *mut NdNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Event-driven inference. Writes per-channel spike counts to `counts`
/// (which must hold [`nd_network_outputs`] entries) and the decoded action.
/// Either output may be null.
///
/// # Safety
/// Handles must come from this library; `counts` must point to `capacity`
/// writable values.
#[no_mangle]
pub unsafe extern "C" fn nd_network_infer(
    net: *const NdNetwork,
    stream: *const NdEventStream,
    counts: *mut u32,
    capacity: usize,
    action: *mut NdAction,
) -> NdStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("network"))?;
        let stream = stream.as_ref().ok_or_else(|| null("stream"))?;
        let record = lib(net.0.forward_async(&stream.0))?;
        if !counts.is_null() {
            if capacity < record.counts.len() {
                return Err((
                    NdStatus::BufferTooSmall,
                    format!("network has {} outputs, buffer holds {capacity}", record.counts.len()),
                ));
            }
            std::slice::from_raw_parts_mut(counts, record.counts.len()).copy_from_slice(&record.counts);
        }
        if !action.is_null() {
            let n_dt = lib(LossSpec::for_steps(net.0.steps as u32))?.target_true as f64;
            let a = lib(decode_action(&record.counts, n_dt, DEFAULT_ALPHA))?;
            *action = NdAction { approach: a.approach as u32, speed: a.speed };
        }
        Ok(())
    })
}

/// Address of pixel `(x, y)` with polarity `p` on a `width` x `height` sensor.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nd_encode_address(x: u16, y: u16, p: u8, width: u16, height: u16, out: *mut u32) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let polarity = Polarity::from_bit(p).ok_or_else(|| (NdStatus::InvalidArgument, format!("polarity {p}")))?;
        *out = lib(encode_address(&Event::new(0, x, y, polarity), width, height))?;
        Ok(())
    })
}

/// Snaps an integer-domain weight to the grid of interval `sigma`. Sets
/// `clamped` (if non-null) when the value fell outside the 8-bit range.
///
/// # Safety
/// `out` must be valid; `clamped` may be null.
#[no_mangle]
pub unsafe extern "C" fn nd_quantize(weight: f64, sigma: f64, out: *mut f64, clamped: *mut bool) -> NdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(sigma.is_finite() && sigma > 0.0) || !weight.is_finite() {
            return Err((NdStatus::InvalidArgument, format!("cannot quantize {weight} with interval {sigma}")));
        }
        let (q, c) = quantize_value(weight, sigma);
        *out = q;
        if !clamped.is_null() {
            *clamped = c;
        }
        Ok(())
    })
}
