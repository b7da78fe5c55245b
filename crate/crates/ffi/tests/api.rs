use std::ffi::CStr;
use std::ptr;

use fchmrf_ffi::*;

fn last_error() -> String {
    let p = fchmrf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lattice_round_trip() {
    let positions = [0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 40.0, 40.0, 40.0];
    let mut lat = ptr::null_mut();
    unsafe {
        assert_eq!(
            fchmrf_lattice_build(positions.as_ptr(), 3, 3, &mut lat),
            FchmrfStatus::Ok
        );
        let mut out = [0.0; 3];
        assert_eq!(
            fchmrf_lattice_filter(lat, [1.0; 3].as_ptr(), out.as_mut_ptr(), 3),
            FchmrfStatus::Ok
        );
        // The isolated point only sees itself.
        assert!((out[2] - 1.0).abs() < 1e-9, "{out:?}");
        assert!(out[0] > 1.5 && out[0] < 2.0, "{out:?}");
        assert_eq!(
            fchmrf_lattice_filter(lat, [1.0; 2].as_ptr(), out.as_mut_ptr(), 2),
            FchmrfStatus::DimensionMismatch
        );
        assert!(last_error().contains("3 points"));
        fchmrf_lattice_free(lat);
        fchmrf_lattice_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_codes() {
    let mut lat = ptr::null_mut();
    unsafe {
        assert_eq!(
            fchmrf_lattice_build(ptr::null(), 2, 3, &mut lat),
            FchmrfStatus::NullPointer
        );
        assert!(last_error().contains("positions"));
        let bad = [0.0, f64::NAN, 0.0];
        assert_eq!(
            fchmrf_lattice_build(bad.as_ptr(), 1, 3, &mut lat),
            FchmrfStatus::NonFinite
        );
        assert!(lat.is_null());
        let mut flags = [0u8; 2];
        assert_eq!(
            fchmrf_lis_test(
                [0.1, 1.5].as_ptr(),
                2,
                0.1,
                flags.as_mut_ptr(),
                ptr::null_mut()
            ),
            FchmrfStatus::InvalidArgument
        );
    }
}

#[test]
fn step_up_procedures() {
    let lis = [0.01, 0.5, 0.02, 0.9];
    let mut flags = [0u8; 4];
    let mut k = 0usize;
    unsafe {
        assert_eq!(
            fchmrf_lis_test(lis.as_ptr(), 4, 0.05, flags.as_mut_ptr(), &mut k),
            FchmrfStatus::Ok
        );
    }
    assert_eq!((k, flags), (2, [1, 0, 1, 0]));
    let p = [0.001, 0.8, 0.02, 0.04];
    unsafe {
        assert_eq!(
            fchmrf_bh_test(p.as_ptr(), 4, 0.1, flags.as_mut_ptr(), &mut k),
            FchmrfStatus::Ok
        );
    }
    assert_eq!((k, flags), (3, [1, 0, 1, 1]));
    assert!(fchmrf_last_error().is_null());
}

#[test]
fn fit_handle() {
    let n = 6usize;
    let m = n * n * n;
    let mut coords = Vec::with_capacity(3 * m);
    let mut x = Vec::with_capacity(m);
    for i in 0..m {
        let c = [i % n, (i / n) % n, i / (n * n)];
        coords.extend(c.iter().map(|&v| v as u32));
        let signal = c[0] < 3 && c[1] < 3;
        x.push(if signal { -3.0 } else { 0.0 } + ((i * 7919) % 97) as f64 / 97.0 - 0.5);
    }
    let mut config = fchmrf_fit_config_default();
    config.max_iterations = 3;
    config.samples = 20;
    let mut fit = ptr::null_mut();
    unsafe {
        let status = fchmrf_fit(
            x.as_ptr(),
            coords.as_ptr(),
            ptr::null(),
            m,
            &config,
            &mut fit,
        );
        assert_eq!(status, FchmrfStatus::Ok, "{}", last_error());
        assert_eq!(fchmrf_fit_len(fit), m);
        let mut w = [0.0; 3];
        assert_eq!(fchmrf_fit_weights(fit, w.as_mut_ptr()), FchmrfStatus::Ok);
        assert!(w[1] >= 0.0 && w[2] >= 0.0);
        let mut lis = vec![0.0; m];
        let mut rejected = vec![0u8; m];
        assert_eq!(
            fchmrf_fit_results(fit, lis.as_mut_ptr(), rejected.as_mut_ptr(), m),
            FchmrfStatus::Ok
        );
        assert!(lis.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(rejected.contains(&1));
        let mut iterations = 0usize;
        assert_eq!(
            fchmrf_fit_em_summary(fit, &mut iterations, ptr::null_mut()),
            FchmrfStatus::Ok
        );
        assert!((1..=3).contains(&iterations));
        fchmrf_fit_free(fit);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fchmrf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
