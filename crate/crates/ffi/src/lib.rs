//! C interface to the semnoma quantizer, modem pair, SIC baseline and
//! accuracy model.
//!
//! Objects are handed out as opaque pointers and released with the matching
//! `*_free`. Every fallible call returns an [`SnStatus`]; the message of the
//! last failure on the calling thread is available from
//! [`sn_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use num_complex::Complex64;
use semnoma::link::{superpose, SuperpositionRule};
use semnoma::modem::{load_pair, ModemPair};
use semnoma::quant::{fit_quantizer, QuantizerParams};
use semnoma::sic::{sic_detect, QamMap};
use semnoma::srate::AccuracyModel;
use semnoma::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    BufferTooSmall = 4,
    Io = 5,
    ModelFormat = 6,
    Infeasible = 7,
    Internal = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnRole {
    Near = 0,
    Far = 1,
}

pub struct SnQuantizer(QuantizerParams);
pub struct SnModemPair(ModemPair);
pub struct SnAccuracyModel(AccuracyModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SnStatus {
    match e {
        Error::ValueOutOfRange { .. } | Error::IndexOutOfRange { .. } => SnStatus::OutOfRange,
        Error::Io(_) => SnStatus::Io,
        Error::ModelFormat(_) | Error::Json(_) | Error::Csv { .. } => SnStatus::ModelFormat,
        Error::InfeasibleTarget { .. } => SnStatus::Infeasible,
        Error::Divergence { .. } => SnStatus::Internal,
        _ => SnStatus::InvalidArgument,
    }
}

struct Fail(SnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SnStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SnStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SnStatus::Internal
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SnStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sn_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fits an `m`-bit quantizer for features in `[-s + d, s + d]`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_new(m: u32, s: f64, d: f64, out: *mut *mut SnQuantizer) -> SnStatus {
    guard(|| {
        let q = fit_quantizer(m, s, d)?;
        put(out, Box::into_raw(Box::new(SnQuantizer(q))), "out")
    })
}

/// # Safety
/// `q` must be null or a handle from [`sn_quantizer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_free(q: *mut SnQuantizer) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Number of levels, or 0 for a null handle.
///
/// # Safety
/// `q` must be null or a live quantizer handle.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_levels(q: *const SnQuantizer) -> usize {
    q.as_ref().map_or(0, |q| q.0.levels())
}

/// Constellation spacing `1 / f_s`, or NaN for a null handle.
///
/// # Safety
/// `q` must be null or a live quantizer handle.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_step(q: *const SnQuantizer) -> f64 {
    q.as_ref().map_or(f64::NAN, |q| q.0.step())
}

/// Writes the constellation (ascending) into `out`, which must hold at
/// least `sn_quantizer_levels(q)` values.
///
/// # Safety
/// `q` must be a live handle and `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_constellation(q: *const SnQuantizer, out: *mut f64, cap: usize) -> SnStatus {
    guard(|| {
        let q = &handle(q, "quantizer")?.0;
        let c = q.constellation();
        if cap < c.len() {
            return Err(Fail(SnStatus::BufferTooSmall, format!("need {} values, got {cap}", c.len())));
        }
        output(out, c.len(), "out")?.copy_from_slice(c);
        Ok(())
    })
}

/// # Safety
/// `values` must point to `n` doubles and `indices` to `n` writable u32.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_quantize(
    q: *const SnQuantizer,
    values: *const f64,
    n: usize,
    indices: *mut u32,
) -> SnStatus {
    guard(|| {
        let q = &handle(q, "quantizer")?.0;
        let idx = q.quantize(input(values, n, "values")?)?;
        output(indices, n, "indices")?.copy_from_slice(&idx);
        Ok(())
    })
}

/// # Safety
/// `indices` must point to `n` u32 and `values` to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sn_quantizer_dequantize(
    q: *const SnQuantizer,
    indices: *const u32,
    n: usize,
    values: *mut f64,
) -> SnStatus {
    guard(|| {
        let q = &handle(q, "quantizer")?.0;
        let v = q.dequantize(input(indices, n, "indices")?)?;
        output(values, n, "values")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Loads a trained near/far model pair from the JSON files written by
/// `semnoma train-modem`.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_modem_load(
    near_path: *const c_char,
    far_path: *const c_char,
    out: *mut *mut SnModemPair,
) -> SnStatus {
    guard(|| {
        let pair = load_pair(path_arg(near_path, "near_path")?, path_arg(far_path, "far_path")?)?;
        put(out, Box::into_raw(Box::new(SnModemPair(pair))), "out")
    })
}

/// # Safety
/// `p` must be null or a handle from [`sn_modem_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_modem_free(p: *mut SnModemPair) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Modulates dequantized features of both users and superposes them with
/// amplitudes `sqrt(rho)`. The composite is written as separate real and
/// imaginary arrays of length `n`.
///
/// # Safety
/// Inputs must point to `n` doubles each and outputs to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sn_modem_transmit(
    p: *const SnModemPair,
    v_near: *const f64,
    v_far: *const f64,
    n: usize,
    rho_near: f64,
    rho_far: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> SnStatus {
    guard(|| {
        let pair = &handle(p, "pair")?.0;
        let sn = pair.near.transmit_symbols(input(v_near, n, "v_near")?);
        let sf = pair.far.transmit_symbols(input(v_far, n, "v_far")?);
        let x = superpose(&sn, &sf, rho_near, rho_far, SuperpositionRule::Amplitude)?;
        let (re, im) = (output(out_re, n, "out_re")?, output(out_im, n, "out_im")?);
        for (k, z) in x.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// Runs one user's demodulator on equalized symbols. The near role fills
/// both `out_near` and `out_far`; the far role fills only `out_far` and
/// `out_near` may be null.
///
/// # Safety
/// `re`/`im` must point to `n` doubles; non-null outputs to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sn_modem_demodulate(
    p: *const SnModemPair,
    role: SnRole,
    re: *const f64,
    im: *const f64,
    n: usize,
    out_near: *mut f64,
    out_far: *mut f64,
) -> SnStatus {
    guard(|| {
        let pair = &handle(p, "pair")?.0;
        let (re, im) = (input(re, n, "re")?, input(im, n, "im")?);
        let y: Vec<Complex64> = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let model = match role {
            SnRole::Near => &pair.near,
            SnRole::Far => &pair.far,
        };
        let est = model.demodulate(&y);
        if let Some(near) = est.near {
            output(out_near, n, "out_near")?.copy_from_slice(&near);
        }
        output(out_far, n, "out_far")?.copy_from_slice(&est.far);
        Ok(())
    })
}

/// Multiply-accumulates per symbol for one user's modulator plus
/// demodulator, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live pair handle.
#[no_mangle]
pub unsafe extern "C" fn sn_modem_macs(p: *const SnModemPair, role: SnRole) -> usize {
    p.as_ref().map_or(0, |p| match role {
        SnRole::Near => p.0.near.count_macs(),
        SnRole::Far => p.0.far.count_macs(),
    })
}

/// Hard-decision SIC on unit-power Gray QAM with `bits_near`/`bits_far`
/// bits per symbol. Detected indices go to `out_near` and `out_far`.
///
/// # Safety
/// `re`/`im` must point to `n` doubles and outputs to `n` writable u32.
#[no_mangle]
pub unsafe extern "C" fn sn_sic_detect(
    re: *const f64,
    im: *const f64,
    n: usize,
    bits_near: u32,
    bits_far: u32,
    rho_near: f64,
    rho_far: f64,
    out_near: *mut u32,
    out_far: *mut u32,
) -> SnStatus {
    guard(|| {
        let (re, im) = (input(re, n, "re")?, input(im, n, "im")?);
        let mn = QamMap::new(bits_near)?;
        let mf = QamMap::new(bits_far)?;
        semnoma::link::check_power_split(rho_near, rho_far)?;
        let y: Vec<Complex64> = re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let (hn, hf) = sic_detect(&y, &mn, &mf, rho_near, rho_far);
        output(out_near, n, "out_near")?.copy_from_slice(&hn);
        output(out_far, n, "out_far")?.copy_from_slice(&hf);
        Ok(())
    })
}

/// Generalized logistic accuracy curve over linear SNR, with asymptotes
/// `a1 < a2` and exponent `-(c1 * gamma + c2)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_accuracy_new(
    a1: f64,
    a2: f64,
    c1: f64,
    c2: f64,
    out: *mut *mut SnAccuracyModel,
) -> SnStatus {
    guard(|| {
        let m = AccuracyModel::new(a1, a2, c1, c2)?;
        put(out, Box::into_raw(Box::new(SnAccuracyModel(m))), "out")
    })
}

/// # Safety
/// `m` must be null or a handle from [`sn_accuracy_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sn_accuracy_free(m: *mut SnAccuracyModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Accuracy at linear SNR `gamma`, or NaN for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sn_accuracy_eval(m: *const SnAccuracyModel, gamma: f64) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.eval(gamma))
}

/// Linear SNR at which the curve reaches `target`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sn_accuracy_inverse(m: *const SnAccuracyModel, target: f64, out: *mut f64) -> SnStatus {
    guard(|| {
        let g = handle(m, "model")?.0.inverse(target)?;
        put(out, g, "out")
    })
}

/// Closed-form post-SIC SINR of both users (linear) for power split
/// `rho` and linear channel gains.
///
/// # Safety
/// Outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sn_effective_snr(
    rho_near: f64,
    rho_far: f64,
    gain_near: f64,
    gain_far: f64,
    out_near: *mut f64,
    out_far: *mut f64,
) -> SnStatus {
    guard(|| {
        semnoma::link::check_power_split(rho_near, rho_far)?;
        let (a, b) = semnoma::link::effective_snr(rho_near, rho_far, gain_near, gain_far);
        put(out_near, a, "out_near")?;
        put(out_far, b, "out_far")
    })
}
