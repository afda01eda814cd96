//! C ABI over the `conclad` detector.
//!
//! Every function returns a status code (`CONCLAD_OK` on success) and writes
//! results through out-pointers. On failure, `conclad_last_error_message`
//! describes the most recent error on the calling thread. Handles are opaque
//! and must be released with their matching `_free` function; passing NULL to
//! a `_free` function is a no-op.
//!
//! Sample ids matter across calls: the detector keeps some pool samples in
//! its validation reservoir, so ids must stay unique over the pretrain set and
//! all pools given to one detector.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, c_int, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use conclad::detector::{NoveltyScorer, TaskResult};
use conclad::{ClassId, ClassSubspace, DetectorConfig, DetectorState, EmbeddingSet, Error, Mode, SampleId};

pub const CONCLAD_OK: c_int = 0;
pub const CONCLAD_ERR_NULL_POINTER: c_int = 1;
pub const CONCLAD_ERR_INVALID_ARGUMENT: c_int = 2;
pub const CONCLAD_ERR_DIMENSION_MISMATCH: c_int = 3;
pub const CONCLAD_ERR_EMPTY_INPUT: c_int = 4;
pub const CONCLAD_ERR_BUDGET_EXCEEDS_POOL: c_int = 5;
pub const CONCLAD_ERR_ORACLE: c_int = 6;
pub const CONCLAD_ERR_NUMERIC: c_int = 7;
pub const CONCLAD_ERR_IO: c_int = 8;
pub const CONCLAD_ERR_BUFFER_TOO_SMALL: c_int = 9;
pub const CONCLAD_ERR_PANIC: c_int = 10;

pub const CONCLAD_MODE_DEFAULT: c_int = 0;
pub const CONCLAD_MODE_NO_ITERS: c_int = 1;
pub const CONCLAD_MODE_NO_PSEUDO: c_int = 2;
pub const CONCLAD_MODE_SUP_TOP: c_int = 3;
pub const CONCLAD_MODE_SUP_RAND: c_int = 4;
pub const CONCLAD_MODE_COLLAPSE_ONE_CLASS: c_int = 5;

/// An `n x d` float matrix with per-row sample ids and optional labels.
pub struct ConcladEmbeddings {
    inner: EmbeddingSet,
}

/// A fitted per-class PCA subspace.
pub struct ConcladSubspace {
    inner: ClassSubspace,
}

/// A detector: learned class transforms plus its validation reservoir.
pub struct ConcladDetector {
    inner: DetectorState,
}

/// What one task produced, including the model used to score test data.
pub struct ConcladTaskResult {
    inner: TaskResult,
    predicted: Vec<SampleId>,
}

/// Tunable detector settings. Obtain defaults from
/// `conclad_detector_options_default` and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ConcladDetectorOptions {
    /// Fraction of above-threshold samples pseudo-labeled per iteration.
    pub alpha: f64,
    /// Standard deviations above the validation mean for the threshold.
    pub k_std: f64,
    /// Fraction of variance kept by each class subspace.
    pub retention: f64,
    /// Total inner iterations per task.
    pub max_iters: usize,
    /// Share of each task's budget spent at the first iteration.
    pub initial_budget_share: f64,
    /// Per-class share of pretrain data held out for threshold calibration.
    pub validation_fraction: f64,
}

/// Label callback: write the class of `sample_id` to `*label` and return 0,
/// or return nonzero if the sample is unknown.
pub type ConcladOracleFn =
    Option<unsafe extern "C" fn(user_data: *mut c_void, sample_id: u64, label: *mut i32) -> c_int>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    code: c_int,
    message: String,
}

impl Failure {
    fn new(code: c_int, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(CONCLAD_ERR_NULL_POINTER, format!("{what} is NULL"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DimensionMismatch { .. } => CONCLAD_ERR_DIMENSION_MISMATCH,
            Error::EmptyInput(_)
            | Error::EmptyBank
            | Error::InsufficientValidation(_)
            | Error::InsufficientSamples { .. }
            | Error::SingleClassInput => CONCLAD_ERR_EMPTY_INPUT,
            Error::BudgetExceedsPool { .. } => CONCLAD_ERR_BUDGET_EXCEEDS_POOL,
            Error::OracleFailure(_) | Error::UnknownSample(_) => CONCLAD_ERR_ORACLE,
            Error::InvalidSubspace(_) | Error::InfeasibleSeparation { .. } => CONCLAD_ERR_NUMERIC,
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::TruncatedFile(_)
            | Error::SizeMismatch(_)
            | Error::Csv(_)
            | Error::Toml(_) => CONCLAD_ERR_IO,
            _ => CONCLAD_ERR_INVALID_ARGUMENT,
        };
        Self::new(code, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CONCLAD_OK
        }
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.code
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {what}"));
            CONCLAD_ERR_PANIC
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(Failure::null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn store<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::null("output pointer"))
    } else {
        Ok(())
    }
}

unsafe fn copy_out<T: Copy>(src: &[T], out: *mut T, capacity: usize) -> Result<(), Failure> {
    if src.len() > capacity {
        return Err(Failure::new(
            CONCLAD_ERR_BUFFER_TOO_SMALL,
            format!("buffer holds {capacity}, need {}", src.len()),
        ));
    }
    if !src.is_empty() {
        check_out(out)?;
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

fn mode_from(code: c_int) -> Result<Mode, Failure> {
    Ok(match code {
        CONCLAD_MODE_DEFAULT => Mode::Default,
        CONCLAD_MODE_NO_ITERS => Mode::NoIters,
        CONCLAD_MODE_NO_PSEUDO => Mode::NoPseudo,
        CONCLAD_MODE_SUP_TOP => Mode::SupTop,
        CONCLAD_MODE_SUP_RAND => Mode::SupRand,
        CONCLAD_MODE_COLLAPSE_ONE_CLASS => Mode::CollapseOneClass,
        other => {
            return Err(Failure::new(
                CONCLAD_ERR_INVALID_ARGUMENT,
                format!("unknown mode {other}"),
            ))
        }
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn conclad_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn conclad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n * d` row-major floats into a new embedding set.
///
/// `ids` (length `n`) may be NULL, giving ids `0..n`. `labels` (length `n`)
/// may be NULL for unlabeled data.
#[no_mangle]
pub unsafe extern "C" fn conclad_embeddings_new(
    data: *const f32,
    n: usize,
    d: usize,
    ids: *const u64,
    labels: *const i32,
    out: *mut *mut ConcladEmbeddings,
) -> c_int {
    guard(|| {
        check_out(out)?;
        let len = n
            .checked_mul(d)
            .ok_or_else(|| Failure::new(CONCLAD_ERR_INVALID_ARGUMENT, "n * d overflows"))?;
        let mut set = EmbeddingSet::new(slice(data, len, "data")?.to_vec(), d)?;
        if !ids.is_null() {
            set = set.with_ids(slice(ids, n, "ids")?.to_vec())?;
        }
        if !labels.is_null() {
            set = set.with_labels(slice(labels, n, "labels")?.to_vec())?;
        }
        store(out, Box::into_raw(Box::new(ConcladEmbeddings { inner: set })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn conclad_embeddings_free(set: *mut ConcladEmbeddings) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

#[no_mangle]
pub unsafe extern "C" fn conclad_embeddings_shape(
    set: *const ConcladEmbeddings,
    n: *mut usize,
    d: *mut usize,
) -> c_int {
    guard(|| {
        let set = &handle(set, "embeddings")?.inner;
        store(n, set.n())?;
        store(d, set.d())
    })
}

/// Rank-based AUROC of `scores` against `is_novel` (nonzero = novel).
#[no_mangle]
pub unsafe extern "C" fn conclad_auroc(
    scores: *const f64,
    is_novel: *const u8,
    n: usize,
    out: *mut f64,
) -> c_int {
    guard(|| {
        check_out(out)?;
        let s = slice(scores, n, "scores")?;
        let y: Vec<bool> = slice(is_novel, n, "is_novel")?.iter().map(|&b| b != 0).collect();
        store(out, conclad::eval::auroc(s, &y)?)
    })
}

/// Fits a PCA subspace to every row of `set`.
#[no_mangle]
pub unsafe extern "C" fn conclad_subspace_fit(
    set: *const ConcladEmbeddings,
    class_id: i32,
    retention: f64,
    out: *mut *mut ConcladSubspace,
) -> c_int {
    guard(|| {
        check_out(out)?;
        let fit = ClassSubspace::fit(class_id, &handle(set, "embeddings")?.inner, retention)?;
        store(out, Box::into_raw(Box::new(ConcladSubspace { inner: fit })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn conclad_subspace_free(subspace: *mut ConcladSubspace) {
    if !subspace.is_null() {
        drop(Box::from_raw(subspace));
    }
}

/// Number of retained components.
#[no_mangle]
pub unsafe extern "C" fn conclad_subspace_rank(subspace: *const ConcladSubspace, out: *mut usize) -> c_int {
    guard(|| store(out, handle(subspace, "subspace")?.inner.k()))
}

/// Reconstruction error of one `d`-vector.
#[no_mangle]
pub unsafe extern "C" fn conclad_subspace_fre(
    subspace: *const ConcladSubspace,
    u: *const f64,
    d: usize,
    out: *mut f64,
) -> c_int {
    guard(|| {
        check_out(out)?;
        let s = &handle(subspace, "subspace")?.inner;
        store(out, s.fre(slice(u, d, "u")?)?)
    })
}

/// Default detector settings.
#[no_mangle]
pub extern "C" fn conclad_detector_options_default() -> ConcladDetectorOptions {
    let c = DetectorConfig::default();
    ConcladDetectorOptions {
        alpha: c.alpha,
        k_std: c.k_std,
        retention: c.retention,
        max_iters: c.max_iters,
        initial_budget_share: c.initial_budget_share,
        validation_fraction: c.validation_fraction,
    }
}

/// Builds a detector from labeled pretrain data. `options` may be NULL for
/// the defaults.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_pretrain(
    pretrain: *const ConcladEmbeddings,
    options: *const ConcladDetectorOptions,
    seed: u64,
    out: *mut *mut ConcladDetector,
) -> c_int {
    guard(|| {
        check_out(out)?;
        let o = options.as_ref().copied().unwrap_or_else(|| conclad_detector_options_default());
        let config = DetectorConfig {
            alpha: o.alpha,
            k_std: o.k_std,
            retention: o.retention,
            max_iters: o.max_iters,
            initial_budget_share: o.initial_budget_share,
            validation_fraction: o.validation_fraction,
            ..DetectorConfig::default()
        };
        config.validate()?;
        let state = DetectorState::pretrain(&handle(pretrain, "pretrain")?.inner, config, seed)?;
        store(out, Box::into_raw(Box::new(ConcladDetector { inner: state })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn conclad_detector_free(detector: *mut ConcladDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}

/// Current novelty threshold on initial scores.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_threshold(detector: *const ConcladDetector, out: *mut f64) -> c_int {
    guard(|| {
        check_out(out)?;
        store(out, handle(detector, "detector")?.inner.initial_threshold()?)
    })
}

/// Number of classes the detector has learned so far.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_class_count(detector: *const ConcladDetector, out: *mut usize) -> c_int {
    guard(|| store(out, handle(detector, "detector")?.inner.learned_class_ids().len()))
}

/// Initial (old-class) novelty score of every row of `set`, written to
/// `out[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_score(
    detector: *const ConcladDetector,
    set: *const ConcladEmbeddings,
    out: *mut f64,
    capacity: usize,
) -> c_int {
    guard(|| {
        let scores = handle(detector, "detector")?
            .inner
            .score_initial(&handle(set, "embeddings")?.inner)?;
        copy_out(&scores.values, out, capacity)
    })
}

fn finish_task(
    detector: &mut ConcladDetector,
    pool: &EmbeddingSet,
    oracle: &dyn conclad::LabelOracle,
    budget: usize,
    mode: c_int,
    seed: u64,
    out: *mut *mut ConcladTaskResult,
) -> Result<(), Failure> {
    check_out(out)?;
    let mode = mode_from(mode)?;
    let result = detector.inner.run_task(pool, oracle, budget, mode, seed)?;
    let predicted = result.predicted_novel_ids.iter().copied().collect();
    let boxed = Box::new(ConcladTaskResult {
        inner: result,
        predicted,
    });
    unsafe { store(out, Box::into_raw(boxed)) }
}

/// Runs one task on `pool` with an oracle given as parallel arrays of sample
/// ids and labels. The detector absorbs the discovered classes; on error it
/// is left unchanged.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_run_task(
    detector: *mut ConcladDetector,
    pool: *const ConcladEmbeddings,
    oracle_ids: *const u64,
    oracle_labels: *const i32,
    oracle_len: usize,
    budget: usize,
    mode: c_int,
    seed: u64,
    out: *mut *mut ConcladTaskResult,
) -> c_int {
    guard(|| {
        let ids = slice(oracle_ids, oracle_len, "oracle_ids")?;
        let labels = slice(oracle_labels, oracle_len, "oracle_labels")?;
        let oracle: HashMap<SampleId, ClassId> = ids.iter().copied().zip(labels.iter().copied()).collect();
        let detector = handle_mut(detector, "detector")?;
        finish_task(detector, &handle(pool, "pool")?.inner, &oracle, budget, mode, seed, out)
    })
}

/// As `conclad_detector_run_task`, asking `oracle` for each queried label.
#[no_mangle]
pub unsafe extern "C" fn conclad_detector_run_task_with_callback(
    detector: *mut ConcladDetector,
    pool: *const ConcladEmbeddings,
    oracle: ConcladOracleFn,
    user_data: *mut c_void,
    budget: usize,
    mode: c_int,
    seed: u64,
    out: *mut *mut ConcladTaskResult,
) -> c_int {
    guard(|| {
        let callback = oracle.ok_or_else(|| Failure::null("oracle"))?;
        let ask = |id: SampleId| -> conclad::Result<ClassId> {
            let mut label = 0i32;
            match callback(user_data, id, &mut label) {
                0 => Ok(label),
                code => Err(Error::OracleFailure(format!("callback returned {code} for sample {id}"))),
            }
        };
        let detector = handle_mut(detector, "detector")?;
        finish_task(detector, &handle(pool, "pool")?.inner, &ask, budget, mode, seed, out)
    })
}

#[no_mangle]
pub unsafe extern "C" fn conclad_task_result_free(result: *mut ConcladTaskResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Oracle calls spent and the threshold of the last iteration.
#[no_mangle]
pub unsafe extern "C" fn conclad_task_result_summary(
    result: *const ConcladTaskResult,
    queries: *mut usize,
    threshold: *mut f64,
) -> c_int {
    guard(|| {
        let r = &handle(result, "task result")?.inner;
        store(queries, r.queries_spent)?;
        store(threshold, r.threshold)
    })
}

/// Copies the discovered class ids into `out`. `*count` receives the number
/// of ids even when the buffer is too small, so a first call with
/// `capacity = 0` sizes the buffer.
#[no_mangle]
pub unsafe extern "C" fn conclad_task_result_discovered(
    result: *const ConcladTaskResult,
    out: *mut i32,
    capacity: usize,
    count: *mut usize,
) -> c_int {
    guard(|| {
        let r = &handle(result, "task result")?.inner;
        store(count, r.discovered.len())?;
        copy_out(&r.discovered, out, capacity)
    })
}

/// Copies the predicted-novel sample ids, ascending, into `out`. Sizing
/// works as in `conclad_task_result_discovered`.
#[no_mangle]
pub unsafe extern "C" fn conclad_task_result_predicted(
    result: *const ConcladTaskResult,
    out: *mut u64,
    capacity: usize,
    count: *mut usize,
) -> c_int {
    guard(|| {
        let r = handle(result, "task result")?;
        store(count, r.predicted.len())?;
        copy_out(&r.predicted, out, capacity)
    })
}

/// Test-time novelty scores of every row of `set` under the model the task
/// finished with, written to `out[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn conclad_task_result_score_test(
    result: *const ConcladTaskResult,
    set: *const ConcladEmbeddings,
    out: *mut f64,
    capacity: usize,
) -> c_int {
    guard(|| {
        let r = &handle(result, "task result")?.inner;
        let scores = r.outcome.score_test(&handle(set, "embeddings")?.inner)?;
        copy_out(&scores.values, out, capacity)
    })
}
