use std::ffi::{CStr, CString};
use std::ptr;

use covsel_ffi::*;

fn last_error() -> String {
    let p = covsel_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn exchangeable() -> *mut CovselMatrix {
    let rows = [0usize, 1, 0];
    let cols = [0usize, 1, 1];
    let vals = [2.0, 2.0, -1.0];
    let mut m = ptr::null_mut();
    let st = unsafe { covsel_matrix_from_triplets(2, 3, rows.as_ptr(), cols.as_ptr(), vals.as_ptr(), &mut m) };
    assert_eq!(st, CovselStatus::Ok);
    m
}

#[test]
fn exact_inverse_of_exchangeable_pair() {
    let m = exchangeable();
    unsafe {
        assert_eq!((covsel_matrix_n(m), covsel_matrix_nnz(m)), (2, 3));
        let mut f = ptr::null_mut();
        assert_eq!(covsel_factor_new(m, &mut f), CovselStatus::Ok);
        assert_eq!(covsel_factor_fill_count(f), 3);
        let mut s = ptr::null_mut();
        assert_eq!(covsel_selected_inverse(m, f, CovselIndexKind::Pattern, &mut s), CovselStatus::Ok);
        assert_eq!(covsel_selcov_len(s), 3);
        let mut v = 0.0;
        assert_eq!(covsel_selcov_get(s, 0, 1, &mut v), CovselStatus::Ok);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(covsel_selcov_get(s, 1, 1, &mut v), CovselStatus::Ok);
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let (mut i, mut j) = (9, 9);
        assert_eq!(covsel_selcov_entry(s, 0, &mut i, &mut j, &mut v), CovselStatus::Ok);
        assert!(i >= j);
        assert_eq!(covsel_selcov_entry(s, 3, &mut i, &mut j, &mut v), CovselStatus::NotFound);
        covsel_selcov_free(s);
        covsel_factor_free(f);
        covsel_matrix_free(m);
    }
}

#[test]
fn status_codes_and_messages() {
    covsel_clear_last_error();
    assert!(covsel_last_error_message().is_null());
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(covsel_model_ar1(1, 0.5, &mut m), CovselStatus::InvalidArgument);
        assert!(last_error().contains("at least 2"));
        assert!(m.is_null());

        let rows = [0usize, 1, 1];
        let cols = [0usize, 0, 1];
        let vals = [1.0, 2.0, 1.0];
        assert_eq!(
            covsel_matrix_from_triplets(2, 3, rows.as_ptr(), cols.as_ptr(), vals.as_ptr(), &mut m),
            CovselStatus::Ok
        );
        let mut f = ptr::null_mut();
        assert_eq!(covsel_factor_new(m, &mut f), CovselStatus::NotPositiveDefinite);
        assert!(f.is_null());
        covsel_matrix_free(m);

        assert_eq!(covsel_factor_new(ptr::null(), &mut f), CovselStatus::NullPointer);
        assert!(last_error().contains("matrix"));
        let mut v = 0.0;
        assert_eq!(covsel_selcov_get(ptr::null(), 0, 0, &mut v), CovselStatus::NullPointer);
        let missing = CString::new("/nonexistent/covsel/q.mtx").unwrap();
        assert_eq!(covsel_matrix_read_mtx(missing.as_ptr(), &mut m), CovselStatus::Io);
    }
    assert_eq!(unsafe { covsel_matrix_n(ptr::null()) }, 0);
    unsafe {
        covsel_matrix_free(ptr::null_mut());
        covsel_factor_free(ptr::null_mut());
        covsel_selcov_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_thread_local() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(covsel_model_ar1(1, 0.5, &mut m), CovselStatus::InvalidArgument);
    }
    std::thread::spawn(|| assert!(covsel_last_error_message().is_null())).join().unwrap();
    assert!(!covsel_last_error_message().is_null());
}

#[test]
fn estimators_and_intervals() {
    unsafe {
        let dims = [6usize, 6];
        let mut m = ptr::null_mut();
        assert_eq!(covsel_model_rw1(2, dims.as_ptr(), 3, &mut m), CovselStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(covsel_factor_new(m, &mut f), CovselStatus::Ok);
        let mut mc = ptr::null_mut();
        let mut rb = ptr::null_mut();
        let mut rb2 = ptr::null_mut();
        assert_eq!(covsel_mc_diagonal(f, 30, 5, &mut mc), CovselStatus::Ok);
        assert_eq!(covsel_simple_rbmc(m, f, 30, 5, 0.95, &mut rb), CovselStatus::Ok);
        assert_eq!(covsel_simple_rbmc(m, f, 30, 5, 0.95, &mut rb2), CovselStatus::Ok);
        assert_eq!(covsel_selcov_len(rb), 36);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(covsel_selcov_interval(mc, 0, &mut lo, &mut hi), CovselStatus::NotFound);
        for k in 0..36 {
            let (mut i, mut j, mut v, mut w) = (0, 0, 0.0, 0.0);
            assert_eq!(covsel_selcov_entry(rb, k, &mut i, &mut j, &mut v), CovselStatus::Ok);
            assert_eq!(covsel_selcov_get(rb2, i, j, &mut w), CovselStatus::Ok);
            assert_eq!(v.to_bits(), w.to_bits());
            assert_eq!(covsel_selcov_interval(rb, k, &mut lo, &mut hi), CovselStatus::Ok);
            assert!(lo <= v && v <= hi);
        }
        let dir = tempfile::tempdir().unwrap();
        let csv = CString::new(dir.path().join("rb.csv").to_str().unwrap()).unwrap();
        assert_eq!(covsel_selcov_write_csv(rb, csv.as_ptr()), CovselStatus::Ok);
        let text = std::fs::read_to_string(dir.path().join("rb.csv")).unwrap();
        assert_eq!(text.lines().count(), 37);
        let q = CString::new(dir.path().join("q.mtx").to_str().unwrap()).unwrap();
        assert_eq!(covsel_matrix_write_mtx(m, q.as_ptr()), CovselStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(covsel_matrix_read_mtx(q.as_ptr(), &mut back), CovselStatus::Ok);
        assert_eq!(covsel_matrix_nnz(back), covsel_matrix_nnz(m));
        for p in [mc, rb, rb2] {
            covsel_selcov_free(p);
        }
        covsel_factor_free(f);
        covsel_matrix_free(back);
        covsel_matrix_free(m);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(covsel_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
