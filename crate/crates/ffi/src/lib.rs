//! C ABI for the `colearn` library.
//!
//! Every fallible function returns a [`ColearnStatus`]; on failure the
//! message is kept per thread and read with [`colearn_last_error_message`].
//! Datasets and models are opaque handles created by `colearn_*` functions
//! and released with the matching `*_free`. Panics never cross the
//! boundary: they surface as `COLEARN_STATUS_PANIC`.
//!
//! The C header `include/colearn.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use colearn::augment::Normalization;
use colearn::data::{build_symmetric, corrupt_labels, generate_synthetic, load_cifar10_binary, ImageDataset};
use colearn::eval::{accuracy, predict_labels};
use colearn::harness::{load_config, run_experiment, RunOptions};
use colearn::model::ModelParams;
use colearn::train::{normalization_for, run_training, Method, TrainConfig};
use colearn::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColearnStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Out-of-range value, invalid UTF-8 or unknown name.
    InvalidArgument = 2,
    /// Shapes or lengths that do not fit together.
    Dimension = 3,
    /// Malformed file contents.
    Format = 4,
    Io = 5,
    /// Invalid experiment config; the message names the offending key.
    Config = 6,
    /// Training diverged or produced non-finite values.
    Training = 7,
    /// A Rust panic was caught at the boundary (a bug).
    Panic = 8,
}

/// Opaque image dataset with clean and (possibly) noisy labels.
pub struct ColearnDataset {
    inner: ImageDataset,
}

/// Opaque trained network together with its input normalization.
pub struct ColearnModel {
    params: ModelParams,
    norm: Normalization,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> ColearnStatus {
    match e {
        Error::Dimension(_) => ColearnStatus::Dimension,
        Error::Domain(_) | Error::Contract(_) | Error::Parameter(_) => ColearnStatus::InvalidArgument,
        Error::Format(_) => ColearnStatus::Format,
        Error::Io { .. } => ColearnStatus::Io,
        Error::Config { .. } => ColearnStatus::Config,
        Error::Training(_) | Error::NonFinite(_) | Error::Degenerate(_) => ColearnStatus::Training,
    }
}

/// Boundary failures that do not come from the library itself.
enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, records any failure and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ColearnStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ColearnStatus::Ok,
        Ok(Err(Fail::Null(name))) => {
            set_last_error(format!("`{name}` must not be NULL"));
            ColearnStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_last_error(msg);
            ColearnStatus::InvalidArgument
        }
        Ok(Err(Fail::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            ColearnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(name))
}

fn out_arg<T>(p: *mut *mut T, name: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Null(name))
    } else {
        Ok(())
    }
}

unsafe fn write_labels(labels: &[usize], out: *mut u32, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    if len != labels.len() {
        return Err(Fail::Lib(Error::Dimension(format!("buffer holds {len} labels, dataset has {}", labels.len()))));
    }
    let out = std::slice::from_raw_parts_mut(out, len);
    for (o, &l) in out.iter_mut().zip(labels) {
        *o = l as u32;
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn colearn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. The pointer stays valid until the next `colearn_*` call
/// on the same thread.
#[no_mangle]
pub extern "C" fn colearn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generates the class-balanced synthetic train and test splits.
///
/// # Safety
/// `out_train` and `out_test` must be valid pointers to writable handles.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_synthetic(
    num_classes: usize,
    n_train: usize,
    n_test: usize,
    side: usize,
    seed: u64,
    out_train: *mut *mut ColearnDataset,
    out_test: *mut *mut ColearnDataset,
) -> ColearnStatus {
    guard(|| {
        out_arg(out_train, "out_train")?;
        out_arg(out_test, "out_test")?;
        let (train, test) = generate_synthetic(num_classes, n_train, n_test, side, seed)?;
        *out_train = Box::into_raw(Box::new(ColearnDataset { inner: train }));
        *out_test = Box::into_raw(Box::new(ColearnDataset { inner: test }));
        Ok(())
    })
}

/// Loads and concatenates CIFAR-10 binary batch files.
///
/// # Safety
/// `paths` must point to `n_paths` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_load_cifar10(
    paths: *const *const c_char,
    n_paths: usize,
    out: *mut *mut ColearnDataset,
) -> ColearnStatus {
    guard(|| {
        out_arg(out, "out")?;
        if paths.is_null() {
            return Err(Fail::Null("paths"));
        }
        let files = std::slice::from_raw_parts(paths, n_paths)
            .iter()
            .map(|&p| str_arg(p, "paths[i]").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        let ds = load_cifar10_binary(&files)?;
        *out = Box::into_raw(Box::new(ColearnDataset { inner: ds }));
        Ok(())
    })
}

/// Reads a dataset stored in the CLDS format.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_load(path: *const c_char, out: *mut *mut ColearnDataset) -> ColearnStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let ds = ImageDataset::load_clds(path.as_ref())?;
        *out = Box::into_raw(Box::new(ColearnDataset { inner: ds }));
        Ok(())
    })
}

/// Writes a dataset (pixels, clean and noisy labels) in the CLDS format.
///
/// # Safety
/// `ds` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_save(ds: *const ColearnDataset, path: *const c_char) -> ColearnStatus {
    guard(|| {
        let ds = ref_arg(ds, "ds")?;
        let path = str_arg(path, "path")?;
        ds.inner.save_clds(path.as_ref())?;
        Ok(())
    })
}

/// Number of images, or 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_len(ds: *const ColearnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Number of classes, or 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_num_classes(ds: *const ColearnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_classes())
}

/// Bytes per image (height × width × channels), or 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_image_len(ds: *const ColearnDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.shape().len())
}

/// Copies the clean (`noisy == false`) or observed noisy labels into `out`,
/// which must hold exactly `colearn_dataset_len(ds)` entries.
///
/// # Safety
/// `ds` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_labels(ds: *const ColearnDataset, noisy: bool, out: *mut u32, len: usize) -> ColearnStatus {
    guard(|| {
        let ds = ref_arg(ds, "ds")?;
        let labels = if noisy { ds.inner.noisy_labels() } else { ds.inner.clean_labels() };
        write_labels(labels, out, len)
    })
}

/// Fraction of samples whose noisy label differs from the clean one.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_noise_fraction(ds: *const ColearnDataset, out: *mut f64) -> ColearnStatus {
    guard(|| {
        let ds = ref_arg(ds, "ds")?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        *out = ds.inner.noise_fraction();
        Ok(())
    })
}

/// New dataset whose noisy labels are drawn from the symmetric transition
/// matrix with flip rate `rate`. With `include_true_class` the rate is
/// spread over all classes including the true one.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_corrupt_symmetric(
    ds: *const ColearnDataset,
    rate: f64,
    include_true_class: bool,
    seed: u64,
    out: *mut *mut ColearnDataset,
) -> ColearnStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ds = ref_arg(ds, "ds")?;
        let q = build_symmetric(ds.inner.num_classes(), rate, include_true_class)?;
        let noisy = corrupt_labels(&ds.inner, &q, seed)?;
        *out = Box::into_raw(Box::new(ColearnDataset { inner: noisy }));
        Ok(())
    })
}

/// Releases a dataset handle; NULL is ignored.
///
/// # Safety
/// `ds` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colearn_dataset_free(ds: *mut ColearnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains `method` (e.g. `"colearning"`, `"standard_ce"`) on the noisy
/// labels of `train` with default hyperparameters, `epochs` epochs and
/// `seed`. `test` is evaluated after every epoch with its clean labels.
///
/// # Safety
/// `train` and `test` must be live handles, `method` a NUL-terminated
/// string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_train(
    train: *const ColearnDataset,
    test: *const ColearnDataset,
    method: *const c_char,
    epochs: usize,
    seed: u64,
    out: *mut *mut ColearnModel,
) -> ColearnStatus {
    guard(|| {
        out_arg(out, "out")?;
        let train = ref_arg(train, "train")?;
        let test = ref_arg(test, "test")?;
        let method: Method = str_arg(method, "method")?.parse().map_err(Fail::Lib)?;
        let mut cfg = TrainConfig::for_method(method);
        cfg.epochs = epochs;
        cfg.seed = seed;
        let outcome = run_training(&train.inner, &test.inner, &cfg)?;
        let norm = normalization_for(&train.inner, &cfg);
        *out = Box::into_raw(Box::new(ColearnModel { params: outcome.params, norm }));
        Ok(())
    })
}

/// Loads a CLMP checkpoint. Inputs are standardized with the per-channel
/// statistics of `reference` (the training split the model was trained
/// on), or left unscaled when `reference` is NULL.
///
/// # Safety
/// `path` must be a NUL-terminated string, `reference` NULL or a live
/// handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_load(
    path: *const c_char,
    reference: *const ColearnDataset,
    out: *mut *mut ColearnModel,
) -> ColearnStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let params = ModelParams::load(path.as_ref())?;
        let norm = match reference.as_ref() {
            Some(r) => {
                if r.inner.shape().len() != params.config.input_dim {
                    return Err(Fail::Lib(Error::Dimension(format!(
                        "reference images have {} values, checkpoint expects {}",
                        r.inner.shape().len(),
                        params.config.input_dim
                    ))));
                }
                Normalization::from_dataset(&r.inner)
            }
            None => Normalization::identity(3),
        };
        *out = Box::into_raw(Box::new(ColearnModel { params, norm }));
        Ok(())
    })
}

/// Writes the model parameters as a CLMP checkpoint.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_save(model: *const ColearnModel, path: *const c_char) -> ColearnStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        model.params.save(path.as_ref())?;
        Ok(())
    })
}

/// Number of output classes, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_num_classes(model: *const ColearnModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.num_classes)
}

/// Writes the argmax class of every image of `ds` into `out`, which must
/// hold exactly `colearn_dataset_len(ds)` entries.
///
/// # Safety
/// `model` and `ds` must be live handles and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_predict(
    model: *const ColearnModel,
    ds: *const ColearnDataset,
    out: *mut u32,
    len: usize,
) -> ColearnStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "ds")?;
        let predictions = predict_labels(&model.params, &ds.inner, &model.norm)?;
        write_labels(&predictions, out, len)
    })
}

/// Accuracy of the model against the clean labels of `ds`.
///
/// # Safety
/// `model` and `ds` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_accuracy(model: *const ColearnModel, ds: *const ColearnDataset, out: *mut f64) -> ColearnStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let ds = ref_arg(ds, "ds")?;
        let out = out.as_mut().ok_or(Fail::Null("out"))?;
        let predictions = predict_labels(&model.params, &ds.inner, &model.norm)?;
        *out = accuracy(&predictions, ds.inner.clean_labels())?;
        Ok(())
    })
}

/// Releases a model handle; NULL is ignored.
///
/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colearn_model_free(model: *mut ColearnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs every (method, seed) cell of a TOML experiment config, like
/// `colearn run`. `output_dir` may be NULL to use the config's own;
/// `resume` skips finished cells; `jobs` cells train in parallel.
///
/// # Safety
/// `config_path` must be a NUL-terminated string and `output_dir` NULL or one.
#[no_mangle]
pub unsafe extern "C" fn colearn_run_experiment(
    config_path: *const c_char,
    output_dir: *const c_char,
    resume: bool,
    jobs: usize,
) -> ColearnStatus {
    guard(|| {
        let cfg = load_config(str_arg(config_path, "config_path")?.as_ref())?;
        let output_dir = if output_dir.is_null() { None } else { Some(PathBuf::from(str_arg(output_dir, "output_dir")?)) };
        let opts = RunOptions { resume, jobs: jobs.max(1), output_dir, verbose: false };
        run_experiment(&cfg, &opts)?;
        Ok(())
    })
}
