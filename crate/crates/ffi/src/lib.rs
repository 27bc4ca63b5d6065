//! C ABI over `vbdc`.
//!
//! Datasets and run results cross the boundary as opaque handles created by
//! `vbdc_*_new`/`vbdc_run*` and released with the matching `*_free`. Every
//! fallible call returns a [`VbdcStatus`]; on failure the message is kept per
//! thread and available through [`vbdc_last_error`]. Panics never unwind into
//! the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vbdc::experiment::{run_experiment, ExperimentConfig};
use vbdc::harness::{run_pipeline, PartitionStrategy, PipelineOptions, RunResult};
use vbdc::{Algorithm, ClusterStats, ConstraintMode, Dataset, Error, LocalClusteringConfig, MergeConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbdcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    Numerical = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbdcAlgorithm {
    Kmeans = 0,
    Khm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VbdcConstraint {
    Normalized = 0,
    Raw = 1,
}

/// Pipeline settings. Obtain defaults from `vbdc_run_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VbdcRunOptions {
    pub sites: usize,
    /// Sub-clusters requested at every site.
    pub local_k: usize,
    pub algorithm: VbdcAlgorithm,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub khm_power: f64,
    pub seed: u64,
    pub constraint: VbdcConstraint,
    pub sigma_factor: f64,
    pub border_fraction: f64,
    pub multi_attr_epsilon: f64,
    pub max_perturbation_passes: usize,
    pub merging_site: usize,
    /// Split rows into consecutive blocks instead of random sites.
    pub contiguous_partition: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VbdcLedger {
    pub total_numbers_sent: u64,
    pub wire_numbers_sent: u64,
    pub paper_model_elements: u64,
    pub bytes_at_64bit: u64,
}

/// Opaque dataset handle.
pub struct VbdcDataset(Dataset);

/// Opaque run result handle.
pub struct VbdcRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> VbdcStatus {
    match err {
        Error::DimensionMismatch { .. } => VbdcStatus::DimensionMismatch,
        Error::Io { .. } => VbdcStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => VbdcStatus::Parse,
        Error::NegativeSse { .. } | Error::NonFinite { .. } => VbdcStatus::Numerical,
        _ => VbdcStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (VbdcStatus, String)>) -> VbdcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VbdcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VbdcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (VbdcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VbdcStatus, String) {
    (VbdcStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next `vbdc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn vbdc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn vbdc_run_options_default() -> VbdcRunOptions {
    let local = LocalClusteringConfig::default();
    let merge = MergeConfig::default();
    VbdcRunOptions {
        sites: 1,
        local_k: local.k,
        algorithm: VbdcAlgorithm::Kmeans,
        max_iterations: local.max_iterations,
        convergence_tol: local.convergence_tol,
        khm_power: local.khm_power,
        seed: 0,
        constraint: VbdcConstraint::Normalized,
        sigma_factor: merge.sigma_factor,
        border_fraction: merge.border_fraction,
        multi_attr_epsilon: merge.multi_attr_epsilon,
        max_perturbation_passes: merge.max_perturbation_passes,
        merging_site: 0,
        contiguous_partition: false,
    }
}

/// Copies `rows * dim` row-major values into a new dataset.
///
/// # Safety
/// `values` must point to `rows * dim` readable doubles; `out` must be a
/// valid location for a handle.
#[no_mangle]
pub unsafe extern "C" fn vbdc_dataset_new(
    values: *const f64,
    rows: usize,
    dim: usize,
    out: *mut *mut VbdcDataset,
) -> VbdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        let len = rows
            .checked_mul(dim)
            .ok_or((VbdcStatus::InvalidArgument, "rows * dim overflows".to_string()))?;
        // SAFETY: the caller guarantees `len` readable doubles.
        let slice = unsafe { std::slice::from_raw_parts(values, len) };
        let ds = Dataset::new(dim, slice.to_vec()).map_err(lib_err)?;
        // SAFETY: `out` is non-null and writable per the contract.
        unsafe { *out = Box::into_raw(Box::new(VbdcDataset(ds))) };
        Ok(())
    })
}

/// Loads a numeric CSV file. `label_column < 0` means no label column.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle location.
#[no_mangle]
pub unsafe extern "C" fn vbdc_dataset_from_csv(
    path: *const c_char,
    has_header: bool,
    label_column: isize,
    out: *mut *mut VbdcDataset,
) -> VbdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if path.is_null() {
            return Err(null("path"));
        }
        // SAFETY: NUL-terminated per the contract.
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|e| (VbdcStatus::InvalidArgument, e.to_string()))?;
        let label = usize::try_from(label_column).ok();
        let loaded = vbdc::csvio::load_csv(Path::new(path), has_header, label).map_err(lib_err)?;
        // SAFETY: see above.
        unsafe { *out = Box::into_raw(Box::new(VbdcDataset(loaded.data))) };
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vbdc_dataset_rows(ds: *const VbdcDataset) -> usize {
    // SAFETY: live handle or NULL.
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vbdc_dataset_dim(ds: *const VbdcDataset) -> usize {
    // SAFETY: live handle or NULL.
    unsafe { ds.as_ref() }.map_or(0, |d| d.0.dim())
}

/// # Safety
/// `ds` must come from `vbdc_dataset_new`/`vbdc_dataset_from_csv` and not be
/// used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vbdc_dataset_free(ds: *mut VbdcDataset) {
    if !ds.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(ds) });
    }
}

fn configs(opts: &VbdcRunOptions) -> (Vec<LocalClusteringConfig>, MergeConfig, PipelineOptions) {
    let algorithm = match opts.algorithm {
        VbdcAlgorithm::Kmeans => Algorithm::Kmeans,
        VbdcAlgorithm::Khm => Algorithm::Khm,
    };
    let local = (0..opts.sites)
        .map(|i| LocalClusteringConfig {
            algorithm,
            k: opts.local_k,
            max_iterations: opts.max_iterations,
            convergence_tol: opts.convergence_tol,
            seed: vbdc::experiment::site_seed(opts.seed, i),
            khm_power: opts.khm_power,
        })
        .collect();
    let merge = MergeConfig {
        constraint_mode: match opts.constraint {
            VbdcConstraint::Normalized => ConstraintMode::NormalizedVariance,
            VbdcConstraint::Raw => ConstraintMode::RawSse,
        },
        sigma_factor: opts.sigma_factor,
        border_fraction: opts.border_fraction,
        multi_attr_epsilon: opts.multi_attr_epsilon,
        max_perturbation_passes: opts.max_perturbation_passes,
        ..MergeConfig::default()
    };
    let pipeline = PipelineOptions {
        partition: if opts.contiguous_partition {
            PartitionStrategy::Contiguous
        } else {
            PartitionStrategy::RandomUniform
        },
        seed: opts.seed,
        merging_site: opts.merging_site,
        baseline: None,
    };
    (local, merge, pipeline)
}

/// Runs the full pipeline on `ds`.
///
/// # Safety
/// `ds` and `opts` must be valid pointers; `out` a valid handle location.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run(
    ds: *const VbdcDataset,
    opts: *const VbdcRunOptions,
    out: *mut *mut VbdcRun,
) -> VbdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: valid or NULL per the contract.
        let ds = unsafe { ds.as_ref() }.ok_or_else(|| null("dataset"))?;
        // SAFETY: as above.
        let opts = unsafe { opts.as_ref() }.ok_or_else(|| null("options"))?;
        let (local, merge, pipeline) = configs(opts);
        let result = run_pipeline(&ds.0, &local, &merge, &pipeline, None).map_err(lib_err)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(VbdcRun(result))) };
        Ok(())
    })
}

/// Runs a named preset (`"synthetic3"` or `"iris"`).
///
/// # Safety
/// `name` must be NUL-terminated; `out` a valid handle location.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_preset(name: *const c_char, seed: u64, out: *mut *mut VbdcRun) -> VbdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if name.is_null() {
            return Err(null("name"));
        }
        // SAFETY: NUL-terminated per the contract.
        let name = unsafe { CStr::from_ptr(name) }.to_string_lossy();
        let cfg = ExperimentConfig::preset(&name, seed)
            .ok_or_else(|| (VbdcStatus::InvalidArgument, format!("unknown preset {name:?}")))?;
        let result = run_experiment(&cfg).map_err(lib_err)?.result;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(VbdcRun(result))) };
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_k_global(run: *const VbdcRun) -> usize {
    // SAFETY: live handle or NULL.
    unsafe { run.as_ref() }.map_or(0, |r| r.0.metrics.k_global)
}

/// # Safety
/// `run` must be a live handle or NULL (returns NaN).
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_total_sse(run: *const VbdcRun) -> f64 {
    // SAFETY: live handle or NULL.
    unsafe { run.as_ref() }.map_or(f64::NAN, |r| r.0.metrics.total_sse)
}

/// Number of points labelled by the run.
///
/// # Safety
/// `run` must be a live handle or NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_point_count(run: *const VbdcRun) -> usize {
    // SAFETY: live handle or NULL.
    unsafe { run.as_ref() }.map_or(0, |r| r.0.labels.len())
}

/// Copies the global label of every point, in dataset order, into `labels`.
///
/// # Safety
/// `labels` must have room for `len` values; `len` must be at least
/// `vbdc_run_point_count(run)`.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_copy_labels(run: *const VbdcRun, labels: *mut usize, len: usize) -> VbdcStatus {
    guard(|| {
        // SAFETY: live handle or NULL.
        let run = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let src = &run.0.labels;
        if len < src.len() {
            return Err((
                VbdcStatus::InvalidArgument,
                format!("buffer holds {len} labels, {} needed", src.len()),
            ));
        }
        // SAFETY: `labels` has room for at least `src.len()` values.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), labels, src.len()) };
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_ledger(run: *const VbdcRun, out: *mut VbdcLedger) -> VbdcStatus {
    guard(|| {
        // SAFETY: live handle or NULL.
        let run = unsafe { run.as_ref() }.ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let l = &run.0.ledger;
        // SAFETY: `out` is non-null and writable.
        unsafe {
            *out = VbdcLedger {
                total_numbers_sent: l.total_numbers_sent,
                wire_numbers_sent: l.wire_numbers_sent,
                paper_model_elements: l.paper_model_elements,
                bytes_at_64bit: l.bytes_at_64bit,
            }
        };
        Ok(())
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// The run serialized as JSON (the same document as `result.json`). Free the
/// string with `vbdc_string_free`. Returns NULL on failure.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_to_json(run: *const VbdcRun) -> *mut c_char {
    // SAFETY: live handle or NULL.
    let Some(run) = (unsafe { run.as_ref() }) else {
        set_error("run is null");
        return ptr::null_mut();
    };
    match serde_json::to_string_pretty(&run.0) {
        Ok(s) => into_c_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// The merge trace, one event per line. Free with `vbdc_string_free`.
///
/// # Safety
/// `run` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_trace(run: *const VbdcRun) -> *mut c_char {
    // SAFETY: live handle or NULL.
    unsafe { run.as_ref() }.map_or(ptr::null_mut(), |r| into_c_string(r.0.trace.to_lines()))
}

/// # Safety
/// `run` must come from `vbdc_run`/`vbdc_run_preset` and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vbdc_run_free(run: *mut VbdcRun) {
    if !run.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// # Safety
/// `s` must come from this library and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vbdc_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// `n_a n_b / (n_a + n_b) * |c_a - c_b|^2`.
///
/// # Safety
/// Both centers must point to `dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vbdc_variance_increase(
    count_a: u64,
    center_a: *const f64,
    count_b: u64,
    center_b: *const f64,
    dim: usize,
    out: *mut f64,
) -> VbdcStatus {
    guard(|| {
        if center_a.is_null() || center_b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        if count_a == 0 || count_b == 0 {
            return Err((VbdcStatus::InvalidArgument, "counts must be positive".into()));
        }
        // SAFETY: `dim` readable doubles each, per the contract.
        let (a, b) = unsafe {
            (
                std::slice::from_raw_parts(center_a, dim),
                std::slice::from_raw_parts(center_b, dim),
            )
        };
        let sa = ClusterStats { count: count_a, center: a.to_vec(), sse: 0.0 };
        let sb = ClusterStats { count: count_b, center: b.to_vec(), sse: 0.0 };
        let inc = vbdc::variance_increase(&sa, &sb).map_err(lib_err)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = inc };
        Ok(())
    })
}

/// Merges two cluster summaries. `out_center` receives `dim` values.
///
/// # Safety
/// Centers must point to `dim` readable doubles; outputs must be writable
/// (`out_center` for `dim` doubles).
#[no_mangle]
pub unsafe extern "C" fn vbdc_merge_stats(
    count_a: u64,
    center_a: *const f64,
    sse_a: f64,
    count_b: u64,
    center_b: *const f64,
    sse_b: f64,
    dim: usize,
    out_count: *mut u64,
    out_center: *mut f64,
    out_sse: *mut f64,
) -> VbdcStatus {
    guard(|| {
        if center_a.is_null() || center_b.is_null() || out_count.is_null() || out_center.is_null() || out_sse.is_null()
        {
            return Err(null("argument"));
        }
        if count_a == 0 || count_b == 0 {
            return Err((VbdcStatus::InvalidArgument, "counts must be positive".into()));
        }
        if !(sse_a >= 0.0 && sse_b >= 0.0) {
            return Err((VbdcStatus::InvalidArgument, "sse must be nonnegative".into()));
        }
        // SAFETY: `dim` readable doubles each, per the contract.
        let (a, b) = unsafe {
            (
                std::slice::from_raw_parts(center_a, dim),
                std::slice::from_raw_parts(center_b, dim),
            )
        };
        let sa = ClusterStats { count: count_a, center: a.to_vec(), sse: sse_a };
        let sb = ClusterStats { count: count_b, center: b.to_vec(), sse: sse_b };
        let m = vbdc::merge_stats(&sa, &sb).map_err(lib_err)?;
        // SAFETY: outputs are non-null and writable, `out_center` for `dim` values.
        unsafe {
            *out_count = m.count;
            ptr::copy_nonoverlapping(m.center.as_ptr(), out_center, dim);
            *out_sse = m.sse;
        }
        Ok(())
    })
}
