//! C ABI for the eegbench engine: opaque handles, integer status codes,
//! and a thread-local last-error message. All pointers returned by this
//! library are owned by it and must be released with the matching `_free`
//! function; strings passed in must be valid NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use eegbench::config::{config_hash, RunConfig};
use eegbench::{synth, EpochSet};

/// Operation status. Matches the CLI exit-code convention where one
/// exists (config 2, audit 3, io 4).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbStatus {
    Ok = 0,
    Error = 1,
    Config = 2,
    Audit = 3,
    Io = 4,
    NullPointer = 5,
    InvalidUtf8 = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitised: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitised).unwrap_or_default();
    });
}

fn status_of(err: &eegbench::Error) -> EbStatus {
    match err.exit_code() {
        2 => EbStatus::Config,
        3 => EbStatus::Audit,
        4 => EbStatus::Io,
        _ => EbStatus::Error,
    }
}

/// Opaque epoch-set handle.
pub struct EbEpochs {
    inner: EpochSet,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, EbStatus> {
    if ptr.is_null() {
        set_error("null pointer argument");
        return Err(EbStatus::NullPointer);
    }
    match unsafe { CStr::from_ptr(ptr) }.to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error("argument is not valid UTF-8");
            Err(EbStatus::InvalidUtf8)
        }
    }
}

/// Crate version as a static string.
#[no_mangle]
pub extern "C" fn eb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Generate a synthetic epoch set from the `[synth]` section of a TOML
/// config document. On success writes a handle into `out`.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn eb_synth_generate(
    config_toml: *const c_char,
    out: *mut *mut EbEpochs,
) -> EbStatus {
    if out.is_null() {
        set_error("null output pointer");
        return EbStatus::NullPointer;
    }
    let text = match unsafe { cstr_arg(config_toml) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let config = match RunConfig::from_toml(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    match synth::generate(&config.synth) {
        Ok((epochs, _)) => {
            unsafe { *out = Box::into_raw(Box::new(EbEpochs { inner: epochs })) };
            EbStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Load an epoch archive written by the engine (`<prefix>.json` +
/// `<prefix>.f32`).
///
/// # Safety
/// Pointer contracts as in [`eb_synth_generate`].
#[no_mangle]
pub unsafe extern "C" fn eb_epochs_load(
    prefix: *const c_char,
    out: *mut *mut EbEpochs,
) -> EbStatus {
    if out.is_null() {
        set_error("null output pointer");
        return EbStatus::NullPointer;
    }
    let prefix = match unsafe { cstr_arg(prefix) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    match eegbench::ingest::read_archive(Path::new(prefix)) {
        Ok((epochs, _manifest)) => {
            unsafe { *out = Box::into_raw(Box::new(EbEpochs { inner: epochs })) };
            EbStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Save an epoch set as an archive under `prefix`.
///
/// # Safety
/// `handle` must come from this library; `prefix` must be a valid string.
#[no_mangle]
pub unsafe extern "C" fn eb_epochs_save(
    handle: *const EbEpochs,
    prefix: *const c_char,
) -> EbStatus {
    let Some(epochs) = (unsafe { handle.as_ref() }) else {
        set_error("null epochs handle");
        return EbStatus::NullPointer;
    };
    let prefix = match unsafe { cstr_arg(prefix) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    match eegbench::ingest::write_archive(&epochs.inner, "capi", Path::new(prefix)) {
        Ok(()) => EbStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Trial count of a handle (0 for null).
#[no_mangle]
pub extern "C" fn eb_epochs_trials(handle: *const EbEpochs) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |e| e.inner.n_trials())
}

/// Channel count of a handle (0 for null).
#[no_mangle]
pub extern "C" fn eb_epochs_channels(handle: *const EbEpochs) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |e| e.inner.n_channels())
}

/// Samples per epoch of a handle (0 for null).
#[no_mangle]
pub extern "C" fn eb_epochs_samples(handle: *const EbEpochs) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |e| e.inner.n_samples())
}

/// Copy one trial's samples (row-major channel × sample) into `buffer`.
/// `len` must be at least channels × samples.
///
/// # Safety
/// `buffer` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn eb_epochs_copy_trial(
    handle: *const EbEpochs,
    trial: usize,
    buffer: *mut f64,
    len: usize,
) -> EbStatus {
    let Some(epochs) = (unsafe { handle.as_ref() }) else {
        set_error("null epochs handle");
        return EbStatus::NullPointer;
    };
    if buffer.is_null() {
        set_error("null buffer");
        return EbStatus::NullPointer;
    }
    let (t, c, s) = (
        epochs.inner.n_trials(),
        epochs.inner.n_channels(),
        epochs.inner.n_samples(),
    );
    if trial >= t {
        set_error("trial index out of range");
        return EbStatus::Error;
    }
    if len < c * s {
        set_error("buffer too small");
        return EbStatus::Error;
    }
    let out = unsafe { std::slice::from_raw_parts_mut(buffer, c * s) };
    for ch in 0..c {
        for k in 0..s {
            out[ch * s + k] = epochs.inner.data[[trial, ch, k]];
        }
    }
    EbStatus::Ok
}

/// Class label of one trial; returns usize::MAX on error.
#[no_mangle]
pub extern "C" fn eb_epochs_label(handle: *const EbEpochs, trial: usize) -> usize {
    unsafe { handle.as_ref() }
        .and_then(|e| e.inner.labels.get(trial).copied())
        .unwrap_or(usize::MAX)
}

/// Release a handle obtained from this library. Null is a no-op.
///
/// # Safety
/// `handle` must be a pointer previously returned by this library and not
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn eb_epochs_free(handle: *mut EbEpochs) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Run the full benchmark described by a TOML config document, writing
/// result files under `out_dir`. Blocking; returns when the run is done.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn eb_run(config_toml: *const c_char, out_dir: *const c_char) -> EbStatus {
    let text = match unsafe { cstr_arg(config_toml) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let out_dir = match unsafe { cstr_arg(out_dir) } {
        Ok(s) => s,
        Err(status) => return status,
    };
    let config = match RunConfig::from_toml(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    let hash = config_hash(text);
    match eegbench::cli::run_to_dir(&config, &hash, Path::new(out_dir)) {
        Ok(()) => EbStatus::Ok,
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    const CONFIG: &str = r#"
[model]
kind = "lda_shrinkage"

[synth]
subjects = 2
trials_per_class = 2
channels = 3
"#;

    #[test]
    fn synth_handle_lifecycle() {
        let config = CString::new(CONFIG).unwrap();
        let mut handle: *mut EbEpochs = std::ptr::null_mut();
        let status = unsafe { eb_synth_generate(config.as_ptr(), &mut handle) };
        assert_eq!(status, EbStatus::Ok);
        assert!(!handle.is_null());
        assert_eq!(eb_epochs_trials(handle), 20);
        assert_eq!(eb_epochs_channels(handle), 3);
        assert_eq!(eb_epochs_samples(handle), 307);
        assert!(eb_epochs_label(handle, 0) < 5);

        let mut buf = vec![0.0f64; 3 * 307];
        let status =
            unsafe { eb_epochs_copy_trial(handle, 0, buf.as_mut_ptr(), buf.len()) };
        assert_eq!(status, EbStatus::Ok);
        assert!(buf.iter().any(|&v| v != 0.0));

        unsafe { eb_epochs_free(handle) };
    }

    #[test]
    fn archive_roundtrip_through_abi() {
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("epochs");
        let prefix_c = CString::new(prefix.to_str().unwrap()).unwrap();
        let config = CString::new(CONFIG).unwrap();

        let mut handle: *mut EbEpochs = std::ptr::null_mut();
        assert_eq!(
            unsafe { eb_synth_generate(config.as_ptr(), &mut handle) },
            EbStatus::Ok
        );
        assert_eq!(unsafe { eb_epochs_save(handle, prefix_c.as_ptr()) }, EbStatus::Ok);

        let mut loaded: *mut EbEpochs = std::ptr::null_mut();
        assert_eq!(
            unsafe { eb_epochs_load(prefix_c.as_ptr(), &mut loaded) },
            EbStatus::Ok
        );
        assert_eq!(eb_epochs_trials(loaded), eb_epochs_trials(handle));
        unsafe { eb_epochs_free(handle) };
        unsafe { eb_epochs_free(loaded) };
    }

    #[test]
    fn run_writes_results() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let config = CString::new(CONFIG).unwrap();
        let out_c = CString::new(out.to_str().unwrap()).unwrap();
        let status = unsafe { eb_run(config.as_ptr(), out_c.as_ptr()) };
        assert_eq!(status, EbStatus::Ok);
        assert!(out.join("results.csv").exists());
        assert!(out.join("audit.json").exists());
    }

    #[test]
    fn errors_set_message_and_status() {
        let mut handle: *mut EbEpochs = std::ptr::null_mut();
        let status = unsafe { eb_synth_generate(std::ptr::null(), &mut handle) };
        assert_eq!(status, EbStatus::NullPointer);

        let bad = CString::new("mystery = true").unwrap();
        let status = unsafe { eb_synth_generate(bad.as_ptr(), &mut handle) };
        assert_eq!(status, EbStatus::Config);
        let msg = unsafe { CStr::from_ptr(eb_last_error()) };
        assert!(!msg.to_bytes().is_empty());

        assert_eq!(eb_epochs_trials(std::ptr::null()), 0);
        assert_eq!(eb_epochs_label(std::ptr::null(), 0), usize::MAX);
        unsafe { eb_epochs_free(std::ptr::null_mut()) };
    }
}
