use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mrs_repro_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mrs_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn metabolite_table() {
    assert_eq!(mrs_metabolite_count(), 7);
    let name = unsafe { CStr::from_ptr(mrs_metabolite_name(1)) };
    assert_eq!(name.to_str().unwrap(), "Cr+PCr");
    assert!(mrs_metabolite_name(7).is_null());
}

#[test]
fn null_arguments_are_reported() {
    let mut out = MrsBlandAltman::default();
    let st = unsafe { mrs_bland_altman(ptr::null(), ptr::null(), 3, &mut out) };
    assert_eq!(st, MrsStatus::NullPointer);
    assert!(last_error().contains("null"), "{}", last_error());
    let st = unsafe { mrs_fid_write(ptr::null(), c"x.json".as_ptr()) };
    assert_eq!(st, MrsStatus::NullPointer);
    // a later success clears the message
    let (a, b) = ([2.0, 4.0, 6.0], [1.0, 2.0, 3.0]);
    assert_eq!(unsafe { mrs_bland_altman(a.as_ptr(), b.as_ptr(), 3, &mut out) }, MrsStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn bland_altman_hand_example() {
    let (a, b) = ([2.0, 4.0, 6.0], [1.0, 2.0, 3.0]);
    let mut out = MrsBlandAltman::default();
    assert_eq!(unsafe { mrs_bland_altman(a.as_ptr(), b.as_ptr(), 3, &mut out) }, MrsStatus::Ok);
    assert!((out.bias - 2.0).abs() < 1e-12);
    assert!((out.sd_diff - 1.0).abs() < 1e-12);
    assert!((out.z95 - 2.0 / 1.96).abs() < 1e-12);
}

#[test]
fn wilcoxon_and_insufficient_data() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [0.0; 5];
    let mut w = MrsWilcoxon::default();
    assert_eq!(unsafe { mrs_wilcoxon(x.as_ptr(), y.as_ptr(), 5, &mut w) }, MrsStatus::Ok);
    assert!(w.exact);
    assert_eq!(w.p_value, 0.0625);
    assert_eq!(unsafe { mrs_wilcoxon(x.as_ptr(), y.as_ptr(), 3, &mut w) }, MrsStatus::StatsFailed);
    assert!(last_error().contains("at least"), "{}", last_error());
}

#[test]
fn inter_execution_rmse() {
    // two signals, three executions; residuals ±1, 0 and 0, 0, 0
    let v = [1.0, 2.0, 3.0, 5.0, 5.0, 5.0];
    let mut r = 0.0;
    assert_eq!(unsafe { mrs_inter_execution_rmse(v.as_ptr(), 2, 3, &mut r) }, MrsStatus::Ok);
    assert!((r - (2.0f64 / 6.0).sqrt()).abs() < 1e-15);
    assert_eq!(unsafe { mrs_inter_execution_rmse(v.as_ptr(), 0, 3, &mut r) }, MrsStatus::InvalidArgument);
}

#[test]
fn fid_round_trip_and_fit() {
    unsafe {
        let mut acq = ptr::null_mut();
        assert_eq!(mrs_acquisition_standard(&mut acq), MrsStatus::Ok);
        let n = mrs_acquisition_n_points(acq);
        let dwell = mrs_acquisition_dwell_time(acq);
        assert_eq!(n, 2048);

        // a FID that does not match the acquisition fails cleanly
        let short = [0.0; 16];
        let mut fid = ptr::null_mut();
        assert_eq!(mrs_fid_new(short.as_ptr(), short.as_ptr(), 16, dwell, &mut fid), MrsStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(mrs_fit(acq, fid, MrsMethod::FreqfitA, 0, &mut res), MrsStatus::FitFailed);
        assert!(!last_error().is_empty());
        mrs_fid_free(fid);

        // one NAA-like line on the acquisition grid
        let (re, im): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|k| {
                let t = k as f64 * dwell;
                let z = num_complex::Complex64::new(-8.0 * t, 2.0 * std::f64::consts::PI * -1500.0 * t).exp();
                (z.re, z.im)
            })
            .unzip();
        let mut fid = ptr::null_mut();
        assert_eq!(mrs_fid_new(re.as_ptr(), im.as_ptr(), n, dwell, &mut fid), MrsStatus::Ok);
        assert_eq!(mrs_fid_len(fid), n);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("fid.json").to_str().unwrap()).unwrap();
        assert_eq!(mrs_fid_write(fid, path.as_ptr()), MrsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(mrs_fid_read(path.as_ptr(), &mut back), MrsStatus::Ok);
        let (mut re2, mut im2) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(mrs_fid_samples(back, re2.as_mut_ptr(), im2.as_mut_ptr(), n), MrsStatus::Ok);
        assert_eq!(re2, re);
        assert_eq!(im2, im);
        assert_eq!(mrs_fid_samples(back, re2.as_mut_ptr(), im2.as_mut_ptr(), 3), MrsStatus::InvalidArgument);

        let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(mrs_fid_read(missing.as_ptr(), &mut none), MrsStatus::Io);
        assert!(none.is_null());

        let mut res = ptr::null_mut();
        assert_eq!(mrs_fit(acq, back, MrsMethod::FreqfitA, 0, &mut res), MrsStatus::Ok);
        let mut c = f64::NAN;
        assert_eq!(mrs_fit_concentration(res, 0, &mut c), MrsStatus::Ok);
        assert!(c.is_finite());
        let mut sd = 0.0;
        assert_eq!(mrs_fit_crb_sd(res, 0, &mut sd), MrsStatus::Ok);
        assert!(mrs_fit_final_cost(res).is_finite());
        assert_eq!(mrs_fit_concentration(res, 99, &mut c), MrsStatus::InvalidArgument);
        mrs_fit_result_free(res);

        mrs_fid_free(back);
        mrs_fid_free(fid);
        mrs_acquisition_free(acq);
        mrs_fid_free(ptr::null_mut());
    }
}

#[test]
fn header_is_current_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mrs_repro.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["mrs_last_error_message", "mrs_fit(", "mrs_fid_read", "mrs_wilcoxon", "MRS_STATUS_NULL_POINTER"] {
        assert!(text.contains(f), "header lacks {f}");
    }
    // syntax-check with the system C compiler when one is installed
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
