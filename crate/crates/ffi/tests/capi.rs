use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use sle4lab_ffi::*;

#[test]
fn sample_trace_map_round_trip() {
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(sle4_domain_rhombus(8, 0.5, &mut d), Sle4Status::Ok);
        assert_eq!(sle4_domain_num_interior(d), 49);
        let mut f = ptr::null_mut();
        assert_eq!(sle4_field_sample(d, sle4_lambda_critical(), 7, &mut f), Sle4Status::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(sle4_trace(d, f, &mut p), Sle4Status::Ok);
        let n = sle4_path_len(p);
        let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(sle4_path_points(p, xs.as_mut_ptr(), ys.as_mut_ptr(), n), Sle4Status::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(sle4_map_new(d, 4, &mut m), Sle4Status::Ok);
        let (mut u, mut v, mut x, mut y) = (0.0, 0.0, 0.0, 0.0);
        assert_eq!(sle4_map_eval(m, xs[1], ys[1], &mut u, &mut v), Sle4Status::Ok);
        assert!(v > 0.0);
        assert_eq!(sle4_map_inverse(m, u, v, &mut x, &mut y), Sle4Status::Ok);
        assert!((x - xs[1]).abs() < 1e-8 && (y - ys[1]).abs() < 1e-8);
        assert_eq!(sle4_map_inverse(m, 1.0, -1.0, &mut x, &mut y), Sle4Status::Domain);
        sle4_map_free(m);
        sle4_path_free(p);
        sle4_field_free(f);
        sle4_domain_free(d);
    }
}

#[test]
fn driving_sample_extract_and_forward() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(sle4_driving_sample(1.0, 0.01, 3, &mut w), Sle4Status::Ok);
        let n = sle4_driving_len(w);
        assert_eq!(n, 101);
        let (mut t, mut vals) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(sle4_driving_samples(w, t.as_mut_ptr(), vals.as_mut_ptr(), n), Sle4Status::Ok);
        assert_eq!(vals[0], 0.0);
        sle4_driving_free(w);

        let xs: Vec<f64> = vec![0.0; 11];
        let ys: Vec<f64> = (0..=10).map(|k| 2.0 * (k as f64 / 10.0).sqrt()).collect();
        let mut z = ptr::null_mut();
        assert_eq!(sle4_extract_driving(xs.as_ptr(), ys.as_ptr(), 11, 1e-3, &mut z), Sle4Status::Ok);
        let (mut u, mut v) = (0.0, 0.0);
        assert_eq!(sle4_solve_forward(z, 0.0, 3.0, 1.0, &mut u, &mut v), Sle4Status::Ok);
        assert!((u.abs() < 1e-3) && (v - 5f64.sqrt()).abs() < 1e-3);
        sle4_driving_free(z);
    }
}

#[test]
fn errors_carry_messages() {
    unsafe {
        let mut w = ptr::null_mut();
        let xs = [0.0, 0.0, 2.0];
        let ys = [0.0, 1.0, 0.0];
        assert_eq!(sle4_extract_driving(xs.as_ptr(), ys.as_ptr(), 3, 1.0, &mut w), Sle4Status::HullCollapse);
        let msg = CStr::from_ptr(sle4_last_error()).to_string_lossy();
        assert!(msg.contains("hull collapse"), "{msg}");
        assert!(!CStr::from_ptr(sle4_version()).to_bytes().is_empty());
    }
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sle4lab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["sle4_domain_rhombus", "sle4_trace", "sle4_last_error", "SLE4_STATUS_OK", "typedef struct Sle4Map Sle4Map"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // syntax check when a C compiler is around
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else { return };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
