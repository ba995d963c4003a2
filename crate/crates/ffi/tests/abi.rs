use std::ffi::{CStr, CString};
use std::ptr;

use pseudomode_ffi::*;

const MODEL: &str = r#"{
  "system": {"hamiltonian": [[0.5, 0], [0, -0.5]], "couplings": ["pauli_z"], "initial_state": "plus_state"},
  "pseudomodes": {"modes": [{"omega": 1.0, "gamma": 0.5, "n_max": 5}], "couplings": [[0.3]]}
}"#;

fn c(re: f64, im: f64) -> PmComplex {
    PmComplex { re, im }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pm_last_error_message()).to_string_lossy().into_owned() }
}

fn model() -> *mut PmModel {
    let json = CString::new(MODEL).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pm_model_from_json(json.as_ptr(), &mut m) }, PmStatus::Ok, "{}", last_error());
    m
}

#[test]
fn model_round_trip() {
    let m = model();
    unsafe {
        let mut d = 0usize;
        assert_eq!(pm_model_system_dim(m, &mut d), PmStatus::Ok);
        assert_eq!(d, 2);

        let mut v = PmComplex::default();
        assert_eq!(pm_free_bath_two_time(m, 0, 0, 2.0, 0.0, &mut v), PmStatus::Ok);
        let want = 0.09 * num_complex::Complex64::new(-0.5, -2.0).exp();
        assert!((v.re - want.re).abs() < 1e-10 && (v.im - want.im).abs() < 1e-10);

        let id = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let left: Vec<PmComplex> = id.iter().chain(id.iter()).copied().collect();
        let times = [0.5, 1.5];
        assert_eq!(pm_multitime(m, 2, times.as_ptr(), left.as_ptr(), ptr::null(), &mut v), PmStatus::Ok);
        assert!((v.re - 1.0).abs() < 1e-10 && v.im.abs() < 1e-10);

        let plus = [c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let minus = [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let mut w = PmComplex::default();
        assert_eq!(pm_two_time_correlator(m, plus.as_ptr(), minus.as_ptr(), 0.0, 1.0, &mut w), PmStatus::Ok);
        assert!(w.re.hypot(w.im) > 0.1 && w.re.hypot(w.im) < 0.5);
        pm_model_free(m);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let bad = CString::new(r#"{"system": {"couplings": ["pauli_z"], "initial_state": "plus_state"}}"#).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(pm_model_from_json(bad.as_ptr(), &mut m), PmStatus::Config);
        assert!(m.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(pm_model_from_json(ptr::null(), &mut m), PmStatus::NullPointer);

        let m = model();
        let mut v = PmComplex::default();
        assert_eq!(pm_free_bath_two_time(m, 3, 0, 1.0, 0.0, &mut v), PmStatus::InvalidArgument, "{}", last_error());
        assert_eq!(pm_free_bath_two_time(m, 0, 0, -1.0, 0.0, &mut v), PmStatus::InvalidArgument);
        assert_eq!(pm_free_bath_two_time(m, 0, 0, 1.0, 0.0, ptr::null_mut()), PmStatus::NullPointer);
        assert_eq!(pm_free_bath_two_time(m, 0, 0, 1.0, 0.0, &mut v), PmStatus::Ok);
        assert!(last_error().is_empty());
        pm_model_free(m);
    }
}

#[test]
fn fit_handle() {
    let grid: Vec<f64> = (0..200).map(|k| 0.1 * k as f64).collect();
    let values: Vec<PmComplex> = grid
        .iter()
        .map(|&t| {
            let z = 0.04 * num_complex::Complex64::new(-0.25 * t, -t).exp();
            c(z.re, z.im)
        })
        .collect();
    unsafe {
        let mut es = ptr::null_mut();
        let mut res = f64::NAN;
        assert_eq!(pm_fit_exponentials(grid.as_ptr(), values.as_ptr(), grid.len(), 1, &mut es, &mut res), PmStatus::Ok);
        assert!(res < 1e-10);
        let mut n = 0;
        assert_eq!(pm_expsum_len(es, &mut n), PmStatus::Ok);
        assert_eq!(n, 1);
        let (mut a, mut z) = (PmComplex::default(), PmComplex::default());
        assert_eq!(pm_expsum_term(es, 0, &mut a, &mut z), PmStatus::Ok);
        assert!((a.re - 0.04).abs() < 1e-10 && (z.re + 0.25).abs() < 1e-10 && (z.im + 1.0).abs() < 1e-10);
        assert_eq!(pm_expsum_term(es, 1, &mut a, &mut z), PmStatus::InvalidArgument);
        pm_expsum_free(es);
        pm_expsum_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pseudomode.h")).unwrap();
    for name in ["pm_model_from_json", "pm_multitime", "pm_fit_exponentials", "PM_STATUS_TRUNCATION_BREACH", "PmComplex"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
