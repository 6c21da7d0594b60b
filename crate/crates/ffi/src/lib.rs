//! C ABI over the covsel library.
//!
//! Objects are opaque handles created by `covsel_*_new`-style functions and
//! released by the matching `covsel_*_free`. Every fallible call returns a
//! [`CovselStatus`]; on failure a message is kept per thread and can be read
//! with [`covsel_last_error_message`] until the next failing call on that
//! thread. Outputs are written only on success. Panics never cross the
//! boundary; they are reported as [`CovselStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use covsel::chol::{cholesky, CholFactor};
use covsel::estimators::{mc_estimate, simple_rbmc};
use covsel::models::{ar1_precision, rw1_posterior_precision, uniform_lambda};
use covsel::sampler::sample_gmrf_chol;
use covsel::selcov::SelectedCov;
use covsel::sparse::{IndexSet, SparseSymMatrix};
use covsel::takahashi::takahashi_selected_inverse;
use covsel::{mtx, Error};

/// Result codes. `COVSEL_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovselStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    NotConverged = 4,
    /// Other numeric failure (zero probe weight, rank deficiency).
    Numeric = 5,
    OutsidePattern = 6,
    BudgetExceeded = 7,
    Io = 8,
    Parse = 9,
    NotFound = 10,
    Panic = 11,
}

/// Which entries a selected inversion returns.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovselIndexKind {
    Diagonal = 0,
    /// Lower-triangle pattern of the matrix, diagonal included.
    Pattern = 1,
}

/// Sparse symmetric positive definite matrix.
pub struct CovselMatrix {
    inner: SparseSymMatrix,
}

/// Fill-reducing Cholesky factor of a [`CovselMatrix`].
pub struct CovselFactor {
    inner: CholFactor,
}

/// Covariance values on an index set.
pub struct CovselSelcov {
    inner: SelectedCov,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Core(Error),
    Null(&'static str),
    NotFound(String),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &Error) -> CovselStatus {
    match e {
        Error::NotPositiveDefinite { .. } => CovselStatus::NotPositiveDefinite,
        Error::NotConverged { .. } => CovselStatus::NotConverged,
        Error::ZeroProbeWeight(_) | Error::RankDeficient => CovselStatus::Numeric,
        Error::PairOutsidePattern(..) => CovselStatus::OutsidePattern,
        Error::BudgetExceeded { .. } => CovselStatus::BudgetExceeded,
        Error::Io(_) => CovselStatus::Io,
        Error::Parse(_) | Error::Csv(_) | Error::Json(_) => CovselStatus::Parse,
        _ => CovselStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CovselStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovselStatus::Ok,
        Ok(Err(fail)) => {
            let (status, msg) = match fail {
                Failure::Core(e) => (status_of(&e), e.to_string()),
                Failure::Null(what) => (CovselStatus::NullPointer, format!("{what} is null")),
                Failure::NotFound(m) => (CovselStatus::NotFound, m),
                Failure::Utf8(what) => (CovselStatus::InvalidArgument, format!("{what} is not valid UTF-8")),
            };
            set_last_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            CovselStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or valid for reads of a `T` for the duration of the call.
unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: caller contract.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

/// # Safety
/// `p` is null or valid for reads of `len` elements.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and caller guarantees `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null NUL-terminated string per caller contract.
    let s = unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| Failure::Utf8(what))?;
    Ok(PathBuf::from(s))
}

/// # Safety
/// `out` is null or valid for a write of one `T`.
unsafe fn put<T>(out: *mut T, v: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and writable per caller contract.
    unsafe { out.write(v) };
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// # Safety
/// `p` is null or was returned by `boxed` and not yet freed.
unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: caller contract; ownership returns to Rust exactly once.
        drop(unsafe { Box::from_raw(p) });
    }
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn covsel_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Forgets the last failure on this thread.
#[no_mangle]
pub extern "C" fn covsel_clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn covsel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an `n × n` symmetric matrix from `nnz` coordinate entries. Each
/// unordered pair may appear in either triangle and duplicates are summed.
///
/// # Safety
/// `rows`, `cols` and `vals` point to `nnz` elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_from_triplets(
    n: usize,
    nnz: usize,
    rows: *const usize,
    cols: *const usize,
    vals: *const f64,
    out: *mut *mut CovselMatrix,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (r, c, v) = unsafe { (slice(rows, nnz, "rows")?, slice(cols, nnz, "cols")?, slice(vals, nnz, "vals")?) };
        let trip: Vec<_> = (0..nnz).map(|k| (r[k], c[k], v[k])).collect();
        let inner = SparseSymMatrix::from_triplets_general(n, &trip)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselMatrix { inner }), "out") }
    })
}

/// Reads a symmetric Matrix Market coordinate file.
///
/// # Safety
/// `file` is a NUL-terminated path; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_read_mtx(file: *const c_char, out: *mut *mut CovselMatrix) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let p = unsafe { path(file, "file")? };
        let inner = mtx::read_sym(p)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselMatrix { inner }), "out") }
    })
}

/// Writes the matrix as a symmetric Matrix Market file.
///
/// # Safety
/// `m` is a live handle; `file` is a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_write_mtx(m: *const CovselMatrix, file: *const c_char) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, p) = unsafe { (deref(m, "matrix")?, path(file, "file")?) };
        Ok(mtx::write_sym(&m.inner, p)?)
    })
}

/// Stationary AR(1) precision of length `n`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_model_ar1(n: usize, phi: f64, out: *mut *mut CovselMatrix) -> CovselStatus {
    guard(|| {
        let inner = ar1_precision(n, phi)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselMatrix { inner }), "out") }
    })
}

/// RW1 posterior precision on a `dims[0] × … × dims[ndims-1]` lattice with
/// noise precisions drawn uniformly on (0.1, 0.2) from `lambda_seed`.
///
/// # Safety
/// `dims` points to `ndims` elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_model_rw1(
    ndims: usize,
    dims: *const usize,
    lambda_seed: u64,
    out: *mut *mut CovselMatrix,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let d = unsafe { slice(dims, ndims, "dims")? };
        if d.is_empty() {
            return Err(Error::InvalidParameter("at least one lattice dimension is required".into()).into());
        }
        let n = d.iter().product();
        let (inner, _, _) = rw1_posterior_precision(d, &uniform_lambda(n, 0.1, 0.2, lambda_seed))?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselMatrix { inner }), "out") }
    })
}

/// Dimension of the matrix; 0 for null.
///
/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_n(m: *const CovselMatrix) -> usize {
    // SAFETY: caller contract.
    unsafe { m.as_ref() }.map_or(0, |m| m.inner.n())
}

/// Stored lower-triangle entries; 0 for null.
///
/// # Safety
/// `m` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_nnz(m: *const CovselMatrix) -> usize {
    // SAFETY: caller contract.
    unsafe { m.as_ref() }.map_or(0, |m| m.inner.nnz())
}

/// # Safety
/// `m` is null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn covsel_matrix_free(m: *mut CovselMatrix) {
    // SAFETY: caller contract.
    unsafe { release(m) }
}

/// AMD-ordered Cholesky factorization.
///
/// # Safety
/// `m` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_factor_new(m: *const CovselMatrix, out: *mut *mut CovselFactor) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let m = unsafe { deref(m, "matrix")? };
        let inner = cholesky(&m.inner)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselFactor { inner }), "out") }
    })
}

/// Nonzeros of the factor, diagonal included; 0 for null.
///
/// # Safety
/// `f` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covsel_factor_fill_count(f: *const CovselFactor) -> usize {
    // SAFETY: caller contract.
    unsafe { f.as_ref() }.map_or(0, |f| f.inner.symbolic().fill_count())
}

/// # Safety
/// `f` is null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn covsel_factor_free(f: *mut CovselFactor) {
    // SAFETY: caller contract.
    unsafe { release(f) }
}

/// Exact covariances by Takahashi recursion. `m` must be the matrix `f`
/// was computed from; it supplies the pattern for `COVSEL_INDEX_KIND_PATTERN`.
///
/// # Safety
/// `m` and `f` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_selected_inverse(
    m: *const CovselMatrix,
    f: *const CovselFactor,
    kind: CovselIndexKind,
    out: *mut *mut CovselSelcov,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, f) = unsafe { (deref(m, "matrix")?, deref(f, "factor")?) };
        if m.inner.n() != f.inner.n() {
            return Err(Error::DimensionMismatch { expected: f.inner.n(), got: m.inner.n() }.into());
        }
        let s = match kind {
            CovselIndexKind::Diagonal => IndexSet::diagonal(m.inner.n()),
            CovselIndexKind::Pattern => IndexSet::pattern_of(&m.inner),
        };
        let inner = takahashi_selected_inverse(&f.inner, &s)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselSelcov { inner }), "out") }
    })
}

/// Monte Carlo marginal variances from `n_s` exact samples drawn with `f`.
///
/// # Safety
/// `f` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_mc_diagonal(
    f: *const CovselFactor,
    n_s: usize,
    seed: u64,
    out: *mut *mut CovselSelcov,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let f = unsafe { deref(f, "factor")? };
        let x = sample_gmrf_chol(&f.inner, n_s, seed)?;
        let inner = mc_estimate(&x, &IndexSet::diagonal(f.inner.n()))?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselSelcov { inner }), "out") }
    })
}

/// Simple Rao-Blackwellized marginal variances with `confidence` intervals,
/// from `n_s` exact samples drawn with `f`, the factor of `m`.
///
/// # Safety
/// `m` and `f` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_simple_rbmc(
    m: *const CovselMatrix,
    f: *const CovselFactor,
    n_s: usize,
    seed: u64,
    confidence: f64,
    out: *mut *mut CovselSelcov,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (m, f) = unsafe { (deref(m, "matrix")?, deref(f, "factor")?) };
        let x = sample_gmrf_chol(&f.inner, n_s, seed)?;
        let inner = simple_rbmc(&m.inner, &x, confidence)?;
        // SAFETY: forwarded caller contract.
        unsafe { put(out, boxed(CovselSelcov { inner }), "out") }
    })
}

/// Number of entries; 0 for null.
///
/// # Safety
/// `s` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_len(s: *const CovselSelcov) -> usize {
    // SAFETY: caller contract.
    unsafe { s.as_ref() }.map_or(0, |s| s.inner.len())
}

/// Value of entry `(i, j)` in either order; `COVSEL_STATUS_NOT_FOUND` if
/// the pair is not in the index set.
///
/// # Safety
/// `s` is a live handle; `value` is writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_get(s: *const CovselSelcov, i: usize, j: usize, value: *mut f64) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let s = unsafe { deref(s, "selcov")? };
        let v = s.inner.get(i, j).ok_or_else(|| Failure::NotFound(format!("pair ({i}, {j}) not in the index set")))?;
        // SAFETY: forwarded caller contract.
        unsafe { put(value, v, "value") }
    })
}

/// The `k`-th entry in index-set order, with `i >= j`.
///
/// # Safety
/// `s` is a live handle; `i`, `j` and `value` are writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_entry(
    s: *const CovselSelcov,
    k: usize,
    i: *mut usize,
    j: *mut usize,
    value: *mut f64,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let s = unsafe { deref(s, "selcov")? };
        if i.is_null() || j.is_null() || value.is_null() {
            return Err(Failure::Null("output"));
        }
        let &(a, b) = s
            .inner
            .index()
            .pairs()
            .get(k)
            .ok_or_else(|| Failure::NotFound(format!("entry {k} out of {}", s.inner.len())))?;
        // SAFETY: all three outputs checked non-null; caller guarantees writability.
        unsafe {
            i.write(a);
            j.write(b);
            value.write(s.inner.values()[k]);
        }
        Ok(())
    })
}

/// Confidence interval of the `k`-th entry; `COVSEL_STATUS_NOT_FOUND` when
/// the estimator attached none.
///
/// # Safety
/// `s` is a live handle; `lo` and `hi` are writable.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_interval(
    s: *const CovselSelcov,
    k: usize,
    lo: *mut f64,
    hi: *mut f64,
) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let s = unsafe { deref(s, "selcov")? };
        if lo.is_null() || hi.is_null() {
            return Err(Failure::Null("output"));
        }
        let ci = s
            .inner
            .uncertainty()
            .get(k)
            .copied()
            .flatten()
            .and_then(|u| u.ci)
            .ok_or_else(|| Failure::NotFound(format!("entry {k} has no interval")))?;
        // SAFETY: both outputs checked non-null; caller guarantees writability.
        unsafe {
            lo.write(ci.0);
            hi.write(ci.1);
        }
        Ok(())
    })
}

/// Writes the values and uncertainty columns as CSV.
///
/// # Safety
/// `s` is a live handle; `file` is a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_write_csv(s: *const CovselSelcov, file: *const c_char) -> CovselStatus {
    guard(|| {
        // SAFETY: forwarded caller contract.
        let (s, p) = unsafe { (deref(s, "selcov")?, path(file, "file")?) };
        Ok(s.inner.write_csv_file(p)?)
    })
}

/// # Safety
/// `s` is null or a live handle, which is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn covsel_selcov_free(s: *mut CovselSelcov) {
    // SAFETY: caller contract.
    unsafe { release(s) }
}
