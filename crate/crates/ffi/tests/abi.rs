use std::ffi::{c_char, CStr};
use std::ptr;

use sslab_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { sslab_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(sslab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn regions_of_a_known_point() {
    let mut r = SslabLinearRegions::default();
    assert_eq!(unsafe { sslab_linear_regions(1.0, 1.0, 4.0, &mut r) }, SslabStatus::Ok);
    assert!(r.bidirectional);
    assert!((r.bidirectional_margin - (4.0 - 8f64.sqrt())).abs() < 1e-12);
    assert!(!r.one_directional);
}

#[test]
fn bound_handle_round_trip() {
    let mut h = ptr::null_mut();
    let st = unsafe { sslab_linear_bound_new(1.0, 1.0, 4.0, SslabLinearMode::Bidirectional, 5, &mut h) };
    assert_eq!(st, SslabStatus::Ok);
    assert!(!h.is_null());
    let (mut a1, mut a2) = (0.0, 0.0);
    assert_eq!(unsafe { sslab_bound_slopes(h, &mut a1, &mut a2) }, SslabStatus::Ok);
    let expected = 2f64.sqrt() / (4.0 - 8f64.sqrt());
    assert!((a1 - expected).abs() < 1e-9 && (a2 - expected).abs() < 1e-9, "{a1} {a2}");
    let xi = [1.0, -2.0, 0.5, 0.0, 0.25];
    let mut qn = -1.0;
    assert_eq!(unsafe { sslab_bound_qn(h, xi.as_ptr(), xi.len(), &mut qn) }, SslabStatus::Ok);
    assert!(qn > 0.0);
    // Q_n is homogeneous of degree one in the initial states
    let doubled: Vec<f64> = xi.iter().map(|x| 2.0 * x).collect();
    let mut q2 = 0.0;
    assert_eq!(unsafe { sslab_bound_qn(h, doubled.as_ptr(), 5, &mut q2) }, SslabStatus::Ok);
    assert!((q2 - 2.0 * qn).abs() < 1e-12);
    assert_eq!(unsafe { sslab_bound_qn(h, ptr::null(), 5, &mut q2) }, SslabStatus::NullPointer);
    unsafe { sslab_bound_free(h) };
}

#[test]
fn failing_condition_sets_the_message() {
    let mut h = ptr::null_mut();
    let st = unsafe { sslab_linear_bound_new(3.0, 0.0, 1.0, SslabLinearMode::OneDirectional, 3, &mut h) };
    assert_eq!(st, SslabStatus::Condition);
    assert!(h.is_null());
    assert!(last_error().contains("margin"), "{}", last_error());
    let st = unsafe { sslab_linear_bound_new(1.0, 0.0, -1.0, SslabLinearMode::OneDirectional, 3, &mut h) };
    assert_eq!(st, SslabStatus::InvalidInput);
}

#[test]
fn null_pointers_are_reported() {
    let st = unsafe { sslab_linear_regions(1.0, 0.0, 2.0, ptr::null_mut()) };
    assert_eq!(st, SslabStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { sslab_bound_slopes(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, SslabStatus::NullPointer);
    unsafe { sslab_bound_free(ptr::null_mut()) };
    unsafe { sslab_platoon_run_free(ptr::null_mut()) };
}

#[test]
fn short_error_buffer_is_truncated() {
    let mut h = ptr::null_mut();
    unsafe { sslab_linear_bound_new(3.0, 0.0, 1.0, SslabLinearMode::OneDirectional, 3, &mut h) };
    let full = unsafe { sslab_last_error(ptr::null_mut(), 0) };
    let mut buf = [1 as c_char; 8];
    assert_eq!(unsafe { sslab_last_error(buf.as_mut_ptr(), buf.len()) }, full);
    assert_eq!(buf[7], 0);
}

#[test]
fn platoon_constants_defaults() {
    let p = sslab_platoon_params_default();
    let mut c = SslabPlatoonConstants::default();
    assert_eq!(unsafe { sslab_platoon_constants(&p, &mut c) }, SslabStatus::Ok);
    assert!((c.k - 0.456435).abs() < 1e-6);
    assert!((c.lambda_bound - 1.0 / 35.0).abs() < 1e-12);
    let bad = SslabPlatoonParams { a_amp: 10.0, ..p };
    assert_eq!(unsafe { sslab_platoon_constants(&bad, &mut c) }, SslabStatus::InvalidInput);
}

fn platoon_run(amp_fraction: f64, allow: bool) -> (SslabStatus, *mut SslabPlatoonRun) {
    let p = SslabPlatoonParams { n: 3, ..sslab_platoon_params_default() };
    let mut c = SslabPlatoonConstants::default();
    unsafe { sslab_platoon_constants(&p, &mut c) };
    let opts = SslabVerifyOptions { t_end: 3.0, allow_uncertified: allow, ..sslab_verify_options_default() };
    let dt = 0.01;
    let y0: Vec<f64> = (0..=300)
        .map(|k| amp_fraction * c.lambda_bound * (0.3 * k as f64 * dt).sin())
        .collect();
    let s = [26.0, 20.0, 30.0];
    let v = [30.0; 3];
    let mut h = ptr::null_mut();
    let st = unsafe { sslab_platoon_verify(&p, s.as_ptr(), v.as_ptr(), y0.as_ptr(), y0.len(), dt, &opts, &mut h) };
    (st, h)
}

#[test]
fn platoon_verification_handle() {
    let (st, h) = platoon_run(0.8, false);
    assert_eq!(st, SslabStatus::Ok, "{}", last_error());
    let mut sum = SslabPlatoonSummary::default();
    assert_eq!(unsafe { sslab_platoon_run_summary(h, &mut sum) }, SslabStatus::Ok);
    assert_eq!(sum.n, 3);
    assert!(sum.completed && sum.certified_regime && sum.collision_free);
    assert!(sum.min_slack >= -1e-6);
    assert!(sum.transform_mismatch >= 0.0);
    let need = unsafe { sslab_platoon_run_report_json(h, ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; need];
    unsafe { sslab_platoon_run_report_json(h, buf.as_mut_ptr(), need) };
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    let json: serde_json::Value = serde_json::from_str(text).unwrap();
    assert_eq!(json["n"], 3);
    unsafe { sslab_platoon_run_free(h) };
}

#[test]
fn platoon_outside_certified_range() {
    let (st, h) = platoon_run(3.0, false);
    assert_eq!(st, SslabStatus::Uncertified);
    assert!(h.is_null());
    let (st, h) = platoon_run(3.0, true);
    assert_eq!(st, SslabStatus::Ok);
    let mut sum = SslabPlatoonSummary::default();
    unsafe { sslab_platoon_run_summary(h, &mut sum) };
    assert!(!sum.certified_regime);
    unsafe { sslab_platoon_run_free(h) };
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sslab.h")).unwrap();
    for name in [
        "SslabStatus",
        "typedef struct SslabBound SslabBound",
        "sslab_linear_bound_new",
        "sslab_platoon_verify",
        "sslab_last_error",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
