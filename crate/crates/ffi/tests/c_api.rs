use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ercontrol_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        erc_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn model1(steps: usize) -> *mut ErcModel {
    let mut m = ptr::null_mut();
    let s = unsafe { erc_model_scalar(0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 1.0, 1.0, steps, &mut m) };
    assert_eq!(s, ErcStatus::Ok);
    m
}

#[test]
fn kl_of_scaled_identity() {
    let v = [0.0, 0.0];
    let sigma = [0.5, 0.0, 0.0, 0.5];
    let mut out = 0.0;
    assert_eq!(unsafe { erc_kl_gaussian(2, v.as_ptr(), sigma.as_ptr(), &mut out) }, ErcStatus::Ok);
    // 1/2 (1 - 2 - ln 0.25)
    assert!((out - 0.5 * (1.0 - 2.0 - 0.25f64.ln())).abs() < 1e-14);

    let bad = [1.0, 0.0, 0.0, -1.0];
    assert_ne!(unsafe { erc_kl_gaussian(2, v.as_ptr(), bad.as_ptr(), &mut out) }, ErcStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn riccati_handle_round_trip() {
    let m = model1(1000);
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(erc_riccati_solve(m, &mut r), ErcStatus::Ok);
        let mut buf = [0.0];
        assert_eq!(erc_riccati_theta_at(r, 0, buf.as_mut_ptr(), 1), ErcStatus::Ok);
        assert!((buf[0] - 1.0).abs() < 1e-12);
        assert_eq!(erc_riccati_theta_at(r, 500, buf.as_mut_ptr(), 1), ErcStatus::Ok);
        assert!((buf[0] - 0.5).abs() < 1e-12);
        assert_eq!(erc_riccati_theta_at(r, 0, buf.as_mut_ptr(), 0), ErcStatus::BufferTooSmall);
        assert_eq!(erc_riccati_theta_at(r, 1001, buf.as_mut_ptr(), 1), ErcStatus::InvalidArgument);
        erc_riccati_free(r);
        erc_model_free(m);
    }
}

#[test]
fn cost_and_coe_for_model1() {
    let m = model1(100);
    let mut coe = 0.0;
    let mut report = ErcCostReport::default();
    unsafe {
        assert_eq!(erc_coe(m, &mut coe), ErcStatus::Ok);
        assert_eq!(erc_simulate_and_cost(m, 16, 3, &mut report), ErcStatus::Ok);
        erc_model_free(m);
    }
    assert!((coe - 0.125).abs() < 1e-12);
    assert!((report.total - 0.173_286_795_139_986_3).abs() < 1e-10);
    assert_eq!(report.std_error, 0.0);
    assert_eq!(report.n_paths, 16);
}

#[test]
fn model_from_json_and_errors() {
    let json = CString::new(r#"{"model": {"state_dim": 1, "control_dim": 2, "b": [[1.0, 0.5]], "r": 1.0,
        "sigma": 1.0, "reference": "flat"}, "grid": {"n_steps": 50}}"#)
    .unwrap();
    let mut m = ptr::null_mut();
    let (mut n, mut p, mut k) = (0, 0, 0);
    let mut coe = 0.0;
    unsafe {
        assert_eq!(erc_model_from_json(json.as_ptr(), &mut m), ErcStatus::Ok);
        assert_eq!(erc_model_dims(m, &mut n, &mut p, &mut k), ErcStatus::Ok);
        assert_eq!(erc_coe(m, &mut coe), ErcStatus::Ok);
        let mut report = ErcCostReport::default();
        assert_eq!(erc_simulate_and_cost(m, 4, 1, &mut report), ErcStatus::Unsupported);
        erc_model_free(m);
    }
    assert_eq!((n, p, k), (1, 2, 51));
    assert!((coe - 0.5).abs() < 1e-12);

    let broken = CString::new("{\"model\": ").unwrap();
    let nonpsd = CString::new(r#"{"model": {"sigma": 1.0, "h": -1.0}}"#).unwrap();
    unsafe {
        assert_eq!(erc_model_from_json(broken.as_ptr(), &mut m), ErcStatus::InvalidArgument);
        assert!(last_error().contains("byte offset"));
        assert_eq!(erc_model_from_json(nonpsd.as_ptr(), &mut m), ErcStatus::Numerical);
        assert_eq!(erc_model_from_json(ptr::null(), &mut m), ErcStatus::NullPointer);
        assert_eq!(erc_coe(ptr::null(), &mut coe), ErcStatus::NullPointer);
        erc_model_free(ptr::null_mut());
    }
}

#[test]
fn gibbs_and_beta_on_a_grid() {
    let n = 2001;
    let a: Vec<f64> = (0..n).map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64).collect();
    let h: Vec<f64> = a.iter().map(|x| 0.25 * x * x).collect();
    let u: Vec<f64> = a.iter().map(|x| 0.5 * x * x + 0.5 * (2.0 * std::f64::consts::PI).ln()).collect();
    let mut mu = vec![0.0; n];
    let (mut beta, mut res) = (0.0, 0.0);
    unsafe {
        assert_eq!(erc_gibbs_density(-10.0, 10.0, n, h.as_ptr(), u.as_ptr(), 1.0, mu.as_mut_ptr()), ErcStatus::Ok);
        assert_eq!(
            erc_lagrange_beta(-10.0, 10.0, n, h.as_ptr(), u.as_ptr(), 1.0, &mut beta, &mut res),
            ErcStatus::Ok
        );
    }
    // exp(-a^2/2 - a^2/2) is N(0, 1/2).
    let peak = 1.0 / (std::f64::consts::PI).sqrt();
    assert!((mu[1000] - peak).abs() < 1e-6);
    assert!(res <= 1e-8);
    unsafe {
        assert_eq!(
            erc_gibbs_density(-10.0, 10.0, n, ptr::null(), u.as_ptr(), 1.0, mu.as_mut_ptr()),
            ErcStatus::NullPointer
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(erc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/ercontrol.h")).unwrap();
    for f in [
        "erc_last_error",
        "erc_model_from_json",
        "erc_model_free",
        "erc_kl_gaussian",
        "erc_riccati_solve",
        "erc_riccati_theta_at",
        "erc_coe",
        "erc_simulate_and_cost",
        "erc_gibbs_density",
        "erc_lagrange_beta",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct ErcModel ErcModel;"));
}

/// Compile a small C program against the generated header and the static
/// library, then run it.
#[test]
fn c_program_links_and_runs() {
    // Test binaries and the library artifacts share `target/<profile>/deps`.
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libercontrol_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <math.h>
#include "ercontrol.h"
int main(void) {
    ErcModel *m = NULL;
    ErcRiccati *r = NULL;
    double theta = -1.0, coe = -1.0;
    if (erc_model_scalar(0, 1, 0, 0, 0, 0.5, 0, 1, 1, 1, 1000, &m) != ERC_STATUS_OK) return 10;
    if (erc_riccati_solve(m, &r) != ERC_STATUS_OK) return 11;
    if (erc_riccati_theta_at(r, 0, &theta, 1) != ERC_STATUS_OK) return 12;
    if (erc_coe(m, &coe) != ERC_STATUS_OK) return 13;
    if (erc_model_scalar(0, 1, 0, 0, 0, 0.5, 0, -1, 1, 1, 10, &m) != ERC_STATUS_INVALID_ARGUMENT) return 14;
    char msg[256];
    erc_last_error(msg, sizeof msg);
    printf("%.12f %.12f %s\n", theta, coe, msg);
    erc_riccati_free(r);
    return fabs(theta - 1.0) < 1e-12 && fabs(coe - 0.125) < 1e-12 ? 0 : 1;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "exit {:?}: {stdout}", out.status.code());
    assert!(stdout.starts_with("1.000000000000 0.125000000000 sigma must be positive"), "{stdout}");
}
