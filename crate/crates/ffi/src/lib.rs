//! C ABI over conformal-kit.
//!
//! Every function returns a [`CkStatus`]. On failure the message is kept per
//! thread and can be copied out with [`ck_last_error_message`]. Objects are
//! opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use conformal_kit::calibrate::Calibration;
use conformal_kit::conditional::{mondrian_fit_with, MondrianCalibration};
use conformal_kit::martingale::{mixture_wealth, Betting, CalibrationMode, MartingaleState, Monitor};
use conformal_kit::special::reg_inc_beta;
use conformal_kit::synthlab::beta_coverage_band;
use conformal_kit::{empirical_quantile, Error, SeededRng};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericError = 4,
    Panic = 5,
}

impl From<&Error> for CkStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => CkStatus::InvalidArgument,
            4 => CkStatus::NumericError,
            _ => match e {
                Error::InvalidLevel(_) | Error::InvalidArgument(_) | Error::NonFinite { .. } => CkStatus::InvalidArgument,
                _ => CkStatus::DataError,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CkStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(CkStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CkStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CkStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            CkStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for a write.
unsafe fn output<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(value);
    Ok(())
}

/// # Safety
/// `handle` must be null or come from the matching constructor.
unsafe fn borrow<'a, T>(handle: *const T, what: &str) -> Result<&'a T, Failure> {
    handle.as_ref().ok_or_else(|| null(what))
}

/// Copies the last error of this thread into `buf` (nul-terminated,
/// truncated to `len`). Returns the full message length without the nul, or
/// 0 when there is no error.
///
/// # Safety
/// `buf` must be null or writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ck_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Order statistic at rank `ceil(n * level)` of `values`.
///
/// # Safety
/// `values` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_empirical_quantile(values: *const f64, n: usize, level: f64, out: *mut f64) -> CkStatus {
    guard(|| {
        let v = empirical_quantile(input(values, n, "values")?, level)?;
        output(out, v, "out")
    })
}

/// Regularized incomplete beta function.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_reg_inc_beta(x: f64, a: f64, b: f64, out: *mut f64) -> CkStatus {
    guard(|| output(out, reg_inc_beta(x, a, b)?, "out"))
}

/// Central `band` interval of the coverage attained given a calibration set
/// of size `n`.
///
/// # Safety
/// `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_beta_coverage_band(n: usize, alpha: f64, band: f64, lo: *mut f64, hi: *mut f64) -> CkStatus {
    guard(|| {
        let (l, h) = beta_coverage_band(n, alpha, band)?;
        output(lo, l, "lo")?;
        output(hi, h, "hi")
    })
}

/// Mixture betting wealth after the p-values `p[0..n]`.
///
/// # Safety
/// `p` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_mixture_wealth(p: *const f64, n: usize, out: *mut f64) -> CkStatus {
    guard(|| output(out, mixture_wealth(input(p, n, "p")?)?, "out"))
}

/// Opaque split-conformal calibration.
pub struct CkCalibration(Calibration);

/// # Safety
/// `scores` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ck_calibration_new(
    scores: *const f64,
    n: usize,
    alpha: f64,
    strict: bool,
    out: *mut *mut CkCalibration,
) -> CkStatus {
    guard(|| {
        let cal = Calibration::new(input(scores, n, "scores")?.to_vec(), alpha)?.with_strict(strict);
        output(out, Box::into_raw(Box::new(CkCalibration(cal))), "out")
    })
}

/// Critical score; `+inf` when the set is too small in strict mode.
///
/// # Safety
/// `handle` from [`ck_calibration_new`]; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_calibration_critical_score(handle: *const CkCalibration, out: *mut f64) -> CkStatus {
    guard(|| output(out, borrow(handle, "handle")?.0.critical_score()?, "out"))
}

/// # Safety
/// `handle` from [`ck_calibration_new`]; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_calibration_p_value(handle: *const CkCalibration, score: f64, out: *mut f64) -> CkStatus {
    guard(|| output(out, borrow(handle, "handle")?.0.p_value(score)?, "out"))
}

/// # Safety
/// `handle` must be null or from [`ck_calibration_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ck_calibration_free(handle: *mut CkCalibration) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Opaque per-class (Mondrian) calibration.
pub struct CkMondrian(MondrianCalibration);

/// `classes` are 0-based and below `n_classes`.
///
/// # Safety
/// `scores` and `classes` must hold `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_mondrian_new(
    scores: *const f64,
    classes: *const usize,
    n: usize,
    n_classes: usize,
    alpha: f64,
    strict: bool,
    out: *mut *mut CkMondrian,
) -> CkStatus {
    guard(|| {
        let m = mondrian_fit_with(input(scores, n, "scores")?, input(classes, n, "classes")?, n_classes, alpha, strict)?;
        output(out, Box::into_raw(Box::new(CkMondrian(m))), "out")
    })
}

/// # Safety
/// `handle` from [`ck_mondrian_new`]; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_mondrian_critical_score(handle: *const CkMondrian, class: usize, out: *mut f64) -> CkStatus {
    guard(|| output(out, borrow(handle, "handle")?.0.critical_score(class)?, "out"))
}

/// # Safety
/// `handle` must be null or from [`ck_mondrian_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ck_mondrian_free(handle: *mut CkMondrian) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Betting function of a monitor.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CkBetting {
    Mixture = 0,
    Power = 1,
}

/// Opaque exchangeability monitor.
pub struct CkMonitor(Monitor);

/// `epsilon` is read only for power betting. With `online` set, each
/// observed score joins the calibration set.
///
/// # Safety
/// `cal_scores` must hold `n` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ck_monitor_new(
    cal_scores: *const f64,
    n: usize,
    betting: CkBetting,
    epsilon: f64,
    threshold: f64,
    online: bool,
    seed: u64,
    out: *mut *mut CkMonitor,
) -> CkStatus {
    guard(|| {
        let betting = match betting {
            CkBetting::Mixture => Betting::Mixture,
            CkBetting::Power => Betting::power(epsilon)?,
        };
        // alpha is unused by p-values; any valid level works
        let cal = Calibration::new(input(cal_scores, n, "cal_scores")?.to_vec(), 0.1)?;
        let mode = if online {
            CalibrationMode::OnlineAppend
        } else {
            CalibrationMode::Fixed
        };
        let m = Monitor::new(
            cal,
            MartingaleState::new(betting, threshold)?,
            mode,
            SeededRng::new(seed).substream("smoothing"),
        )?;
        output(out, Box::into_raw(Box::new(CkMonitor(m))), "out")
    })
}

/// Feeds one score. Any of the output pointers may be null.
///
/// # Safety
/// `handle` from [`ck_monitor_new`]; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ck_monitor_observe(
    handle: *mut CkMonitor,
    score: f64,
    p_value: *mut f64,
    wealth: *mut f64,
    alert: *mut bool,
) -> CkStatus {
    guard(|| {
        let m = handle.as_mut().ok_or_else(|| null("handle"))?;
        let ev = m.0.observe(score)?;
        if !p_value.is_null() {
            p_value.write(ev.p_value);
        }
        if !wealth.is_null() {
            wealth.write(ev.wealth);
        }
        if !alert.is_null() {
            alert.write(ev.alert);
        }
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or from [`ck_monitor_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ck_monitor_free(handle: *mut CkMonitor) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message() -> String {
        let mut buf = vec![0 as c_char; 256];
        let n = unsafe { ck_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
        String::from_utf8(bytes).unwrap()
    }

    #[test]
    fn error_message_roundtrip() {
        let mut out = 0.0;
        let st = unsafe { ck_empirical_quantile(ptr::null(), 3, 0.5, &mut out) };
        assert_eq!(st, CkStatus::NullPointer);
        assert!(message().contains("values"));
        let v = [1.0, 2.0];
        assert_eq!(unsafe { ck_empirical_quantile(v.as_ptr(), 2, 0.5, &mut out) }, CkStatus::Ok);
        assert_eq!(unsafe { ck_last_error_message(ptr::null_mut(), 0) }, 0);
    }

    #[test]
    fn truncates_long_messages() {
        let mut out = 0.0;
        unsafe { ck_empirical_quantile(ptr::null(), 3, 0.5, &mut out) };
        let mut buf = [0 as c_char; 4];
        let full = unsafe { ck_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert!(full > 3);
        assert_eq!(buf[3], 0);
    }
}
