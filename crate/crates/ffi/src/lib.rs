//! C ABI over `qrng-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`-style
//! constructors and released with the matching `*_free`. Every function
//! returns a [`QrngStatus`]; on failure the message is kept per thread and
//! can be read with [`qrng_last_error_message`]. Strings are written into
//! caller buffers: when the buffer is too small the call fails with
//! `QRNG_STATUS_BUFFER_TOO_SMALL` and `written` holds the size needed,
//! terminating NUL included.

#![allow(clippy::missing_safety_doc)]

use qrng_core::certify::{chsh_from_rho, min_entropy};
use qrng_core::extract::BitStream;
use qrng_core::pipeline::{self, PipelineConfig, Preset};
use qrng_core::qmath::{Mat4, TwoQubitState, C64};
use qrng_core::statsuite::{run_suite, SuiteReport, TestName};
use qrng_core::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QrngStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    TooShort = 3,
    NotConverged = 4,
    FitFailed = 5,
    NoCoincidences = 6,
    Io = 7,
    Json = 8,
    InvalidUtf8 = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Pipeline configuration.
pub struct QrngConfig(PipelineConfig);

/// Packed bit stream with provenance.
pub struct QrngBits(BitStream);

/// Statistical suite results.
pub struct QrngSuiteReport(SuiteReport);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> QrngStatus {
    match e {
        Error::Validation(_) => QrngStatus::Validation,
        Error::TooShort { .. } => QrngStatus::TooShort,
        Error::NotConverged { .. } => QrngStatus::NotConverged,
        Error::FitFailed { .. } => QrngStatus::FitFailed,
        Error::NoCoincidences => QrngStatus::NoCoincidences,
        Error::Io(_) => QrngStatus::Io,
        Error::Json(_) => QrngStatus::Json,
    }
}

impl From<Error> for QrngStatus {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        status_of(&e)
    }
}

fn fail(status: QrngStatus, msg: &str) -> QrngStatus {
    set_error(msg);
    status
}

/// Run `f`, turning panics into `QRNG_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> Result<(), QrngStatus>) -> QrngStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QrngStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QrngStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, QrngStatus> {
    if p.is_null() {
        return Err(fail(QrngStatus::NullPointer, "string argument is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(QrngStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn href<'a, T>(p: *const T) -> Result<&'a T, QrngStatus> {
    p.as_ref().ok_or_else(|| fail(QrngStatus::NullPointer, "handle is NULL"))
}

unsafe fn hmut<'a, T>(p: *mut T) -> Result<&'a mut T, QrngStatus> {
    p.as_mut().ok_or_else(|| fail(QrngStatus::NullPointer, "handle is NULL"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), QrngStatus> {
    if out.is_null() {
        return Err(fail(QrngStatus::NullPointer, "output pointer is NULL"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), QrngStatus> {
    if out.is_null() {
        return Err(fail(QrngStatus::NullPointer, "output pointer is NULL"));
    }
    *out = value;
    Ok(())
}

unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, written: *mut usize) -> Result<(), QrngStatus> {
    let need = s.len() + 1;
    if !written.is_null() {
        *written = need;
    }
    if buf.is_null() || cap < need {
        return Err(fail(QrngStatus::BufferTooSmall, &format!("buffer needs {need} bytes")));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Copy the calling thread's last error message into `buf`.
#[no_mangle]
pub unsafe extern "C" fn qrng_last_error_message(buf: *mut c_char, cap: usize, written: *mut usize) -> QrngStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match write_str(&msg, buf, cap, written) {
        Ok(()) => QrngStatus::Ok,
        Err(s) => s,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qrng_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub unsafe extern "C" fn qrng_config_default(out: *mut *mut QrngConfig) -> QrngStatus {
    guard(|| put(out, QrngConfig(PipelineConfig::default())))
}

/// `name` is one of `dataset_A`, `dataset_B`, `classical_source`.
#[no_mangle]
pub unsafe extern "C" fn qrng_config_preset(name: *const c_char, out: *mut *mut QrngConfig) -> QrngStatus {
    guard(|| {
        let p: Preset = cstr(name)?.parse()?;
        put(out, QrngConfig(p.config()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_config_from_json(json: *const c_char, out: *mut *mut QrngConfig) -> QrngStatus {
    guard(|| {
        let cfg = PipelineConfig::from_json(cstr(json)?)?;
        put(out, QrngConfig(cfg))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_config_to_json(
    cfg: *const QrngConfig,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> QrngStatus {
    guard(|| write_str(&href(cfg)?.0.to_json(), buf, cap, written))
}

#[no_mangle]
pub unsafe extern "C" fn qrng_config_set_seed(cfg: *mut QrngConfig, seed: u64) -> QrngStatus {
    guard(|| {
        hmut(cfg)?.0.global_seed = seed;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_config_free(cfg: *mut QrngConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Fit the simulated HOM dip of `cfg`.
#[no_mangle]
pub unsafe extern "C" fn qrng_simulate_hom(cfg: *const QrngConfig, visibility: *mut f64, stderr: *mut f64) -> QrngStatus {
    guard(|| {
        let (_, fit) = pipeline::simulate_hom(&href(cfg)?.0)?;
        write_out(visibility, fit.visibility)?;
        if !stderr.is_null() {
            *stderr = fit.visibility_err;
        }
        Ok(())
    })
}

/// Generate `n_bits` raw heralded bits.
#[no_mangle]
pub unsafe extern "C" fn qrng_generate(cfg: *const QrngConfig, n_bits: usize, out: *mut *mut QrngBits) -> QrngStatus {
    guard(|| {
        let ev = pipeline::generate(&href(cfg)?.0, n_bits)?;
        put(out, QrngBits(ev.bits))
    })
}

/// Wrap `ceil(n_bits/8)` little-endian packed bytes as a raw stream.
#[no_mangle]
pub unsafe extern "C" fn qrng_bits_from_bytes(bytes: *const u8, n_bits: usize, out: *mut *mut QrngBits) -> QrngStatus {
    guard(|| {
        let len = n_bits.div_ceil(8);
        if bytes.is_null() && len > 0 {
            return Err(fail(QrngStatus::NullPointer, "bytes is NULL"));
        }
        let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
        put(out, QrngBits(BitStream::from_bytes_le(slice, n_bits)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_bits_len(bits: *const QrngBits, len: *mut usize) -> QrngStatus {
    guard(|| write_out(len, href(bits)?.0.len()))
}

/// Copy the packed bytes into `buf`, which must hold `ceil(len/8)` bytes.
#[no_mangle]
pub unsafe extern "C" fn qrng_bits_copy_bytes(bits: *const QrngBits, buf: *mut u8, cap: usize) -> QrngStatus {
    guard(|| {
        let bytes = href(bits)?.0.to_bytes_le();
        if buf.is_null() || cap < bytes.len() {
            return Err(fail(QrngStatus::BufferTooSmall, &format!("buffer needs {} bytes", bytes.len())));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_bits_min_entropy(bits: *const QrngBits, h_inf: *mut f64) -> QrngStatus {
    guard(|| write_out(h_inf, min_entropy(&href(bits)?.0)?.h_inf))
}

#[no_mangle]
pub unsafe extern "C" fn qrng_bits_free(bits: *mut QrngBits) {
    if !bits.is_null() {
        drop(Box::from_raw(bits));
    }
}

/// Toeplitz-extract a raw stream with the extractor of `cfg`.
#[no_mangle]
pub unsafe extern "C" fn qrng_extract(cfg: *const QrngConfig, raw: *const QrngBits, out: *mut *mut QrngBits) -> QrngStatus {
    guard(|| {
        let e = pipeline::extract(&href(cfg)?.0, &href(raw)?.0)?;
        put(out, QrngBits(e))
    })
}

/// Certification report of `cfg` as JSON; `raw` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn qrng_certify_json(
    cfg: *const QrngConfig,
    raw: *const QrngBits,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> QrngStatus {
    guard(|| {
        let raw = raw.as_ref().map(|b| &b.0);
        let r = pipeline::certify(&href(cfg)?.0, raw)?;
        let json = serde_json::to_string(&r).map_err(Error::from)?;
        write_str(&json, buf, cap, written)
    })
}

/// Horodecki CHSH bound of the density matrix given as row-major real and
/// imaginary parts (16 values each).
#[no_mangle]
pub unsafe extern "C" fn qrng_chsh_from_rho(re: *const f64, im: *const f64, s: *mut f64) -> QrngStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(fail(QrngStatus::NullPointer, "matrix pointer is NULL"));
        }
        let re = std::slice::from_raw_parts(re, 16);
        let im = std::slice::from_raw_parts(im, 16);
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = C64::new(re[4 * i + j], im[4 * i + j]);
            }
        }
        let rho = TwoQubitState::new(m)?;
        write_out(s, chsh_from_rho(&rho)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_suite_run(bits: *const QrngBits, threshold: f64, out: *mut *mut QrngSuiteReport) -> QrngStatus {
    guard(|| {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(fail(QrngStatus::Validation, "threshold must lie in (0, 1)"));
        }
        put(out, QrngSuiteReport(run_suite(&href(bits)?.0, threshold)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_suite_all_passed(report: *const QrngSuiteReport, passed: *mut bool) -> QrngStatus {
    guard(|| write_out(passed, href(report)?.0.all_passed))
}

/// The value compared with the threshold for test `name`. Fails with
/// `QRNG_STATUS_VALIDATION` when the test was not applicable.
#[no_mangle]
pub unsafe extern "C" fn qrng_suite_p_value(
    report: *const QrngSuiteReport,
    name: *const c_char,
    p: *mut f64,
    passed: *mut bool,
) -> QrngStatus {
    guard(|| {
        let name: TestName = cstr(name)?.parse()?;
        let r = href(report)?
            .0
            .get(name)
            .ok_or_else(|| fail(QrngStatus::Validation, "test missing from report"))?;
        if !passed.is_null() {
            *passed = r.passed;
        }
        let value = r
            .p_value
            .ok_or_else(|| fail(QrngStatus::Validation, &format!("{name} was not applicable")))?;
        write_out(p, value)
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_suite_to_json(
    report: *const QrngSuiteReport,
    buf: *mut c_char,
    cap: usize,
    written: *mut usize,
) -> QrngStatus {
    guard(|| {
        let json = serde_json::to_string(&href(report)?.0).map_err(Error::from)?;
        write_str(&json, buf, cap, written)
    })
}

#[no_mangle]
pub unsafe extern "C" fn qrng_suite_free(report: *mut QrngSuiteReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
