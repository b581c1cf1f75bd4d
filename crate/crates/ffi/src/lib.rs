//! C ABI over the `rgbdtrack` tracker and benchmark metrics.
//!
//! Every fallible function returns an [`RgbdStatus`]; on failure the
//! message is kept per thread and can be fetched with
//! [`rgbd_last_error_message`]. Trackers are opaque handles created by
//! [`rgbd_tracker_new`] and released with [`rgbd_tracker_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rgbdtrack::config::TrackerConfig;
use rgbdtrack::eval;
use rgbdtrack::tracker::Tracker;
use rgbdtrack::{BoundingBox, DepthMap, Error, Frame, MaybeBox, TrackMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgbdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InitFailed = 4,
    FrameMismatch = 5,
    Panic = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgbdMode {
    Rgb = 0,
    Rgbd = 1,
    RgbOcc = 2,
    RgbdOcc = 3,
}

impl From<RgbdMode> for TrackMode {
    fn from(m: RgbdMode) -> Self {
        match m {
            RgbdMode::Rgb => TrackMode::Rgb,
            RgbdMode::Rgbd => TrackMode::Rgbd,
            RgbdMode::RgbOcc => TrackMode::RgbOcc,
            RgbdMode::RgbdOcc => TrackMode::RgbdOcc,
        }
    }
}

/// A box that may be absent (`present == 0`), in which case the
/// coordinates are meaningless.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RgbdBox {
    pub present: u8,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl RgbdBox {
    const ABSENT: RgbdBox = RgbdBox {
        present: 0,
        x: 0.0,
        y: 0.0,
        w: 0.0,
        h: 0.0,
    };

    fn to_maybe(self) -> Result<MaybeBox, RgbdStatus> {
        if self.present == 0 {
            return Ok(None);
        }
        BoundingBox::new(self.x, self.y, self.w, self.h)
            .map(Some)
            .map_err(|e| fail(RgbdStatus::InvalidArgument, e))
    }
}

impl From<MaybeBox> for RgbdBox {
    fn from(b: MaybeBox) -> Self {
        match b {
            Some(b) => RgbdBox {
                present: 1,
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
            },
            None => RgbdBox::ABSENT,
        }
    }
}

/// Per-frame tracker output.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RgbdFrameResult {
    pub bbox: RgbdBox,
    /// 1 while the target is considered occluded.
    pub occluded: u8,
    /// 1 when the appearance and depth models were updated.
    pub updated: u8,
}

/// Opaque tracker handle.
pub struct RgbdTracker {
    inner: Tracker,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl ToString) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

fn fail(status: RgbdStatus, msg: impl ToString) -> RgbdStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> RgbdStatus {
    match e {
        Error::Init(_) | Error::SingleClass { .. } => RgbdStatus::InitFailed,
        Error::FrameSizeMismatch { .. } | Error::FrameOrder { .. } => RgbdStatus::FrameMismatch,
        Error::Config { .. } => RgbdStatus::InvalidConfig,
        Error::InvalidBox { .. }
        | Error::InvalidParameter(_)
        | Error::ImageTooSmall { .. }
        | Error::Empty(_)
        | Error::LengthMismatch { .. } => RgbdStatus::InvalidArgument,
        _ => RgbdStatus::Internal,
    }
}

fn from_error(e: Error) -> RgbdStatus {
    fail(status_of(&e), e)
}

/// Runs `f`, turning a panic into [`RgbdStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), RgbdStatus>) -> RgbdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgbdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(RgbdStatus::Panic, "internal panic"),
    }
}

/// Copies caller-owned interleaved RGB8 and millimeter depth buffers into
/// a frame.
///
/// # Safety
/// `rgb` must point to `3 * width * height` bytes and `depth` to
/// `width * height` values.
unsafe fn frame_from_raw(
    index: u64,
    width: u32,
    height: u32,
    rgb: *const u8,
    depth: *const u16,
) -> Result<Frame, RgbdStatus> {
    if rgb.is_null() || depth.is_null() {
        return Err(fail(RgbdStatus::NullPointer, "null image buffer"));
    }
    if width == 0 || height == 0 {
        return Err(fail(RgbdStatus::InvalidArgument, "image dimensions must be positive"));
    }
    let n = width as usize * height as usize;
    let rgb = std::slice::from_raw_parts(rgb, 3 * n).to_vec();
    let depth = std::slice::from_raw_parts(depth, n).to_vec();
    let rgb = image::RgbImage::from_raw(width, height, rgb).ok_or(RgbdStatus::Internal)?;
    let depth = DepthMap::from_raw(width, height, depth).ok_or(RgbdStatus::Internal)?;
    Frame::new(index, rgb, depth).map_err(from_error)
}

/// Writes the last error message of the calling thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length in bytes (excluding the terminator).
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rgbd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a tracker from the first frame and the target box.
///
/// `config` is a NUL-terminated `key = value` text, or null for defaults.
/// On success `*out` owns a tracker to be released with
/// [`rgbd_tracker_free`].
///
/// # Safety
/// Image buffers as in [`rgbd_tracker_step`]; `config` null or a valid C
/// string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_new(
    width: u32,
    height: u32,
    rgb: *const u8,
    depth: *const u16,
    index: u64,
    init: RgbdBox,
    mode: RgbdMode,
    config: *const c_char,
    out: *mut *mut RgbdTracker,
) -> RgbdStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(RgbdStatus::NullPointer, "null output pointer"));
        }
        *out = ptr::null_mut();
        let config = if config.is_null() {
            TrackerConfig::default()
        } else {
            let text = CStr::from_ptr(config)
                .to_str()
                .map_err(|_| fail(RgbdStatus::InvalidConfig, "config is not valid UTF-8"))?;
            TrackerConfig::parse(text, "<ffi>").map_err(from_error)?
        };
        let init = init
            .to_maybe()?
            .ok_or_else(|| fail(RgbdStatus::InvalidArgument, "initial box must be present"))?;
        let frame = frame_from_raw(index, width, height, rgb, depth)?;
        let inner = Tracker::new(&frame, init, mode.into(), config).map_err(from_error)?;
        *out = Box::into_raw(Box::new(RgbdTracker { inner }));
        Ok(())
    })
}

/// Processes the next frame, whose `index` must follow the previous one.
///
/// # Safety
/// `tracker` from [`rgbd_tracker_new`]; `rgb` points to `3 * width *
/// height` bytes of interleaved RGB; `depth` to `width * height`
/// millimeter values (0 = invalid); `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_step(
    tracker: *mut RgbdTracker,
    width: u32,
    height: u32,
    rgb: *const u8,
    depth: *const u16,
    index: u64,
    out: *mut RgbdFrameResult,
) -> RgbdStatus {
    guard(|| {
        if tracker.is_null() || out.is_null() {
            return Err(fail(RgbdStatus::NullPointer, "null tracker or output pointer"));
        }
        let frame = frame_from_raw(index, width, height, rgb, depth)?;
        let r = (*tracker).inner.step(&frame).map_err(from_error)?;
        *out = RgbdFrameResult {
            bbox: r.bbox.into(),
            occluded: u8::from(r.phase == rgbdtrack::tracker::Phase::Occluded),
            updated: u8::from(r.updated),
        };
        Ok(())
    })
}

/// Releases a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must come from [`rgbd_tracker_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn rgbd_tracker_free(tracker: *mut RgbdTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Overlap ratio of a tracker box and a ground-truth box: intersection
/// over union when both are present, 1 when both are absent, -1 otherwise.
/// Writes the ratio to `*out`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rgbd_overlap(tracked: RgbdBox, truth: RgbdBox, out: *mut f64) -> RgbdStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(RgbdStatus::NullPointer, "null output pointer"));
        }
        *out = eval::overlap(&tracked.to_maybe()?, &truth.to_maybe()?);
        Ok(())
    })
}

/// Fraction of the `n` overlap ratios strictly above `r_t`.
///
/// # Safety
/// `ratios` must point to `n` values; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rgbd_success_rate(ratios: *const f64, n: usize, r_t: f64, out: *mut f64) -> RgbdStatus {
    guard(|| {
        if ratios.is_null() || out.is_null() {
            return Err(fail(RgbdStatus::NullPointer, "null pointer argument"));
        }
        let rs = std::slice::from_raw_parts(ratios, n);
        *out = eval::success_rate(rs, r_t).map_err(from_error)?;
        Ok(())
    })
}

/// Failure-type fractions of a tracked stream against ground truth.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RgbdErrorRates {
    pub type_i: f64,
    pub type_ii: f64,
    pub type_iii: f64,
}

/// Classifies `n` frames into failure types at threshold `r_t`.
///
/// # Safety
/// `tracked` and `truth` must point to `n` boxes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rgbd_error_rates(
    tracked: *const RgbdBox,
    truth: *const RgbdBox,
    n: usize,
    r_t: f64,
    out: *mut RgbdErrorRates,
) -> RgbdStatus {
    guard(|| {
        if tracked.is_null() || truth.is_null() || out.is_null() {
            return Err(fail(RgbdStatus::NullPointer, "null pointer argument"));
        }
        let convert = |p: *const RgbdBox| -> Result<Vec<MaybeBox>, RgbdStatus> {
            std::slice::from_raw_parts(p, n).iter().map(|b| b.to_maybe()).collect()
        };
        let (t, g) = (convert(tracked)?, convert(truth)?);
        let (_, r) = eval::classify_errors(&t, &g, r_t).map_err(from_error)?;
        *out = RgbdErrorRates {
            type_i: r.type_i,
            type_ii: r.type_ii,
            type_iii: r.type_iii,
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_conversion_round_trips() {
        let b = BoundingBox::new(1.0, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(RgbdBox::from(Some(b)).to_maybe().unwrap(), Some(b));
        assert_eq!(RgbdBox::from(None), RgbdBox::ABSENT);
        assert_eq!(RgbdBox::ABSENT.to_maybe().unwrap(), None);
        let bad = RgbdBox { present: 1, w: 0.0, ..RgbdBox::ABSENT };
        assert_eq!(bad.to_maybe(), Err(RgbdStatus::InvalidArgument));
    }

    #[test]
    fn errors_map_to_statuses() {
        assert_eq!(status_of(&Error::FrameOrder { last: 1, got: 3 }), RgbdStatus::FrameMismatch);
        assert_eq!(status_of(&Error::Init("x".into())), RgbdStatus::InitFailed);
        assert_eq!(status_of(&Error::Empty("ratios")), RgbdStatus::InvalidArgument);
        assert_eq!(status_of(&Error::EmptyHistogram), RgbdStatus::Internal);
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), RgbdStatus::Panic);
        assert_eq!(guard(|| Ok(())), RgbdStatus::Ok);
    }
}
