//! C ABI over the featureless library.
//!
//! Models and datasets are opaque handles created by `*_load` and released
//! with the matching `*_free`. Every fallible call returns an `FtlStatus`;
//! on failure `ftl_last_error` describes what went wrong on this thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use featureless::dataset::{read_dataset, DatasetFile};
use featureless::dissect::{dissect, L3Kind};
use featureless::nn::{load_weights, Model};
use featureless::train::predict;
use featureless::views::{strip_headers, HeaderCategory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A loaded checkpoint.
pub struct FtlModel {
    model: Model,
    best_epoch: u32,
}

/// A loaded dataset file.
pub struct FtlDataset {
    inner: DatasetFile,
}

/// Header offsets of one frame; absent layers are -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FtlDissection {
    pub cap_len: i64,
    pub eth_end: i64,
    pub ip_start: i64,
    pub ip_end: i64,
    pub transport_start: i64,
    pub payload_start: i64,
    /// 4, 6, or 0 for non-IP.
    pub ip_version: u8,
    /// IP protocol number, or -1.
    pub proto: i16,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: FtlStatus, msg: impl Into<String>) -> FtlStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> FtlStatus) -> FtlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(FtlStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, FtlStatus> {
    if path.is_null() {
        return Err(fail(FtlStatus::NullPointer, "path is null"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(FtlStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

unsafe fn bytes_arg<'a>(data: *const u8, len: usize) -> Result<&'a [u8], FtlStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(fail(FtlStatus::NullPointer, "data is null"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ftl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ftl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_load(path: *const c_char, out: *mut *mut FtlModel) -> FtlStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtlStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_weights(&path) {
            Ok(ck) => {
                *out = Box::into_raw(Box::new(FtlModel { model: ck.model, best_epoch: ck.best_epoch }));
                FtlStatus::Ok
            }
            Err(featureless::nn::NnError::Io(e)) => fail(FtlStatus::Io, format!("{}: {e}", path.display())),
            Err(e) => fail(FtlStatus::Format, format!("{}: {e}", path.display())),
        }
    })
}

/// # Safety
/// `model` must come from `ftl_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_free(model: *mut FtlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sample length the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_input_len(model: *const FtlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.input_len())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_class_count(model: *const FtlModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.class_count())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_best_epoch(model: *const FtlModel) -> u32 {
    model.as_ref().map_or(0, |m| m.best_epoch)
}

/// Classifies one raw sample of exactly `ftl_model_input_len` bytes.
/// `probs` may be null; otherwise it receives `min(probs_len, classes)`
/// output values.
///
/// # Safety
/// Pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn ftl_model_predict(
    model: *const FtlModel,
    sample: *const u8,
    sample_len: usize,
    out_class: *mut u32,
    probs: *mut f32,
    probs_len: usize,
) -> FtlStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return fail(FtlStatus::NullPointer, "model is null") };
        if out_class.is_null() {
            return fail(FtlStatus::NullPointer, "out_class is null");
        }
        let bytes = match bytes_arg(sample, sample_len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        match predict(&m.model, bytes) {
            Ok((class, p)) => {
                *out_class = class as u32;
                if !probs.is_null() {
                    let n = probs_len.min(p.len());
                    ptr::copy_nonoverlapping(p.as_ptr(), probs, n);
                }
                FtlStatus::Ok
            }
            Err(e) => fail(FtlStatus::Shape, e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_load(path: *const c_char, out: *mut *mut FtlDataset) -> FtlStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtlStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_dataset(&path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(FtlDataset { inner: ds }));
                FtlStatus::Ok
            }
            Err(featureless::dataset::DatasetError::Io(e)) => fail(FtlStatus::Io, format!("{}: {e}", path.display())),
            Err(e) => fail(FtlStatus::Format, format!("{}: {e}", path.display())),
        }
    })
}

/// # Safety
/// `ds` must come from `ftl_dataset_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_free(ds: *mut FtlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_len(ds: *const FtlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_sample_len(ds: *const FtlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.sample_len)
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_class_count(ds: *const FtlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.class_count())
}

/// Copies sample `index` into `out` (capacity `cap`, at least the sample
/// length) and its label into `out_label`.
///
/// # Safety
/// Pointers must be valid; `out` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_sample(
    ds: *const FtlDataset,
    index: usize,
    out_label: *mut u16,
    out: *mut u8,
    cap: usize,
) -> FtlStatus {
    guard(|| {
        let Some(d) = ds.as_ref() else { return fail(FtlStatus::NullPointer, "dataset is null") };
        if out_label.is_null() || out.is_null() {
            return fail(FtlStatus::NullPointer, "output pointer is null");
        }
        let Some(s) = d.inner.samples.get(index) else {
            return fail(FtlStatus::InvalidArgument, format!("index {index} out of range for {} samples", d.inner.len()));
        };
        if cap < s.bytes.len() {
            return fail(FtlStatus::BufferTooSmall, format!("need {} bytes, got {cap}", s.bytes.len()));
        }
        ptr::copy_nonoverlapping(s.bytes.as_ptr(), out, s.bytes.len());
        *out_label = s.label;
        FtlStatus::Ok
    })
}

/// Class name `class` copied as a NUL-terminated string into `out`.
///
/// # Safety
/// `out` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ftl_dataset_class_name(ds: *const FtlDataset, class: usize, out: *mut c_char, cap: usize) -> FtlStatus {
    guard(|| {
        let Some(d) = ds.as_ref() else { return fail(FtlStatus::NullPointer, "dataset is null") };
        if out.is_null() {
            return fail(FtlStatus::NullPointer, "out is null");
        }
        let Some(name) = d.inner.class_names.get(class) else {
            return fail(FtlStatus::InvalidArgument, format!("class {class} out of range"));
        };
        if cap < name.len() + 1 {
            return fail(FtlStatus::BufferTooSmall, format!("need {} bytes, got {cap}", name.len() + 1));
        }
        ptr::copy_nonoverlapping(name.as_ptr().cast(), out, name.len());
        *out.add(name.len()) = 0;
        FtlStatus::Ok
    })
}

fn offset(v: Option<usize>) -> i64 {
    v.map_or(-1, |x| x as i64)
}

/// # Safety
/// `data` must hold `len` bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ftl_dissect(data: *const u8, len: usize, out: *mut FtlDissection) -> FtlStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtlStatus::NullPointer, "out is null");
        }
        let bytes = match bytes_arg(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let d = dissect(bytes);
        *out = FtlDissection {
            cap_len: d.cap_len as i64,
            eth_end: d.eth_end as i64,
            ip_start: offset(d.ip_start),
            ip_end: offset(d.ip_end),
            transport_start: offset(d.transport_start),
            payload_start: offset(d.payload_start),
            ip_version: match d.l3_kind {
                L3Kind::Ipv4 => 4,
                L3Kind::Ipv6 => 6,
                L3Kind::NonIp => 0,
            },
            proto: d.proto.map_or(-1, i16::from),
        };
        FtlStatus::Ok
    })
}

/// Frame bytes left after applying header category `category`
/// (0 all headers, 1 only Ethernet, 2 without Ethernet, 3 no headers).
/// `out_len` always receives the required length; a short buffer returns
/// `BufferTooSmall` without writing.
///
/// # Safety
/// `data` must hold `len` bytes and `out` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn ftl_strip_headers(
    data: *const u8,
    len: usize,
    category: u8,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> FtlStatus {
    guard(|| {
        if out_len.is_null() {
            return fail(FtlStatus::NullPointer, "out_len is null");
        }
        let Some(cat) = HeaderCategory::from_code(category) else {
            return fail(FtlStatus::InvalidArgument, format!("unknown header category {category}"));
        };
        let bytes = match bytes_arg(data, len) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let kept = strip_headers(bytes, &dissect(bytes), cat);
        *out_len = kept.len();
        if kept.is_empty() {
            return FtlStatus::Ok;
        }
        if out.is_null() || cap < kept.len() {
            return fail(FtlStatus::BufferTooSmall, format!("need {} bytes, got {cap}", kept.len()));
        }
        ptr::copy_nonoverlapping(kept.as_ptr(), out, kept.len());
        FtlStatus::Ok
    })
}
