use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use fluxlab_ffi::*;

fn last_error() -> String {
    let p = fluxlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn landau_model(n_r: usize, j_max: i64) -> *mut FluxlabModel {
    let mut prof = ptr::null_mut();
    assert_eq!(fluxlab_profile_uniform_field(2.0, &mut prof), FluxlabStatus::Ok);
    let mut m = ptr::null_mut();
    let s = unsafe { fluxlab_model_new(prof, n_r, 12.0, j_max, 0.0, 1.0, 0.5, &mut m) };
    assert_eq!(s, FluxlabStatus::Ok);
    unsafe { fluxlab_profile_free(prof) };
    m
}

#[test]
fn profile_round_trip() {
    let mut p = ptr::null_mut();
    assert_eq!(fluxlab_profile_power_law(2.0, 1.5, &mut p), FluxlabStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { fluxlab_profile_eval(p, 4.0, &mut v) }, FluxlabStatus::Ok);
    assert!((v - 16.0).abs() < 1e-12);
    unsafe { fluxlab_profile_free(p) };
}

#[test]
fn invalid_arguments_set_status_and_message() {
    let mut p = ptr::null_mut();
    assert_eq!(fluxlab_profile_linear(-1.0, &mut p), FluxlabStatus::Domain);
    assert!(p.is_null());
    assert!(last_error().contains("linear"));
    assert_eq!(fluxlab_profile_linear(1.0, ptr::null_mut()), FluxlabStatus::NullPointer);
    assert_eq!(unsafe { fluxlab_profile_eval(ptr::null(), 1.0, &mut 0.0) }, FluxlabStatus::NullPointer);
    assert_eq!(unsafe { fluxlab_xi_constant(-1.0, 1.0, &mut 0.0) }, FluxlabStatus::Domain);
    unsafe {
        fluxlab_profile_free(ptr::null_mut());
        fluxlab_model_free(ptr::null_mut());
    }
    assert_eq!(unsafe { fluxlab_model_dim(ptr::null()) }, 0);
}

#[test]
fn eigenvalues_use_a_sized_buffer() {
    let m = landau_model(1000, 2);
    assert_eq!(unsafe { fluxlab_model_dim(m) }, 5000);
    let mut count = 0usize;
    let s = unsafe { fluxlab_model_eigenvalues(m, 0.0, 7.0, ptr::null_mut(), 0, &mut count) };
    assert_eq!(s, FluxlabStatus::BufferTooSmall);
    // Levels 2 (j = 0, 1, 2) and 6 (j = -1, and n = 1 for j = 0, 1, 2).
    assert_eq!(count, 7);
    let mut buf = vec![0.0; count];
    let s = unsafe { fluxlab_model_eigenvalues(m, 0.0, 7.0, buf.as_mut_ptr(), buf.len(), &mut count) };
    assert_eq!(s, FluxlabStatus::Ok);
    assert!(buf.windows(2).all(|w| w[0] <= w[1]));
    assert!((buf[0] - 2.0).abs() < 1e-3 && (buf[6] - 6.0).abs() < 1e-2);
    let s = unsafe { fluxlab_model_eigenvalues(m, 3.0, 1.0, buf.as_mut_ptr(), buf.len(), &mut count) };
    assert_eq!(s, FluxlabStatus::InvalidArgument);
    unsafe { fluxlab_model_free(m) };
}

#[test]
fn xi_matches_geometric_series() {
    let mut xi = 0.0;
    assert_eq!(unsafe { fluxlab_xi_constant(2.0, 1.0, &mut xi) }, FluxlabStatus::Ok);
    assert!((xi - (1.0 + 2.0 / (std::f64::consts::E - 1.0))).abs() < 1e-12);
    let v = unsafe { CStr::from_ptr(fluxlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_reports_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "profile.kind = \"linear\"\nprofile.lambda = 1.0\ngrid.n_r = 100\ngrid.r_max = 10.0\ntruncation.j_max = 1\n").unwrap();
    let c = CString::new(cfg.to_str().unwrap()).unwrap();
    let o = CString::new(tmp.path().join("o").to_str().unwrap()).unwrap();
    let sub = CString::new("spectrum").unwrap();
    assert_eq!(unsafe { fluxlab_run(sub.as_ptr(), c.as_ptr(), o.as_ptr(), 1) }, FluxlabStatus::Config);
    assert!(last_error().contains("window.E0"));
    let bad = CString::new("spectra").unwrap();
    assert_eq!(unsafe { fluxlab_run(bad.as_ptr(), c.as_ptr(), o.as_ptr(), 0) }, FluxlabStatus::InvalidArgument);

    std::fs::write(&cfg, "profile.kind = \"linear\"\nprofile.lambda = 1.0\ngrid.n_r = 100\ngrid.r_max = 10.0\ntruncation.j_max = 1\nwindow.E0 = 3.0\n").unwrap();
    assert_eq!(unsafe { fluxlab_run(sub.as_ptr(), c.as_ptr(), o.as_ptr(), 1) }, FluxlabStatus::Ok);
    assert!(tmp.path().join("o").join("spectrum.csv").is_file());
}

/// Compiles and runs a C program against the generated header and the
/// static library built alongside this test.
#[test]
fn header_compiles_and_links_from_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libfluxlab_ffi.a");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "fluxlab.h"
int main(void) {
    double xi = 0.0;
    if (fluxlab_xi_constant(2.0, 1.0, &xi) != FLUXLAB_STATUS_OK) return 1;
    FluxlabProfile *p = NULL;
    if (fluxlab_profile_linear(-1.0, &p) != FLUXLAB_STATUS_DOMAIN || p != NULL) return 2;
    if (fluxlab_last_error() == NULL) return 3;
    if (fluxlab_profile_uniform_field(2.0, &p) != FLUXLAB_STATUS_OK) return 4;
    FluxlabModel *m = NULL;
    if (fluxlab_model_new(p, 400, 12.0, 1, 0.0, 1.0, 0.5, &m) != FLUXLAB_STATUS_OK) return 5;
    double ev[8];
    size_t n = 0;
    if (fluxlab_model_eigenvalues(m, 0.0, 3.0, ev, 8, &n) != FLUXLAB_STATUS_OK || n != 2) return 6;
    printf("%.6f %.6f\n", xi, ev[0]);
    fluxlab_model_free(m);
    fluxlab_profile_free(p);
    return 0;
}
"#,
    )
    .unwrap();
    let syntax = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(syntax.status.success(), "{}", String::from_utf8_lossy(&syntax.stderr));
    if !lib.is_file() {
        eprintln!("{} not built; syntax check only", lib.display());
        return;
    }
    let bin = tmp.path().join("probe");
    let link = Command::new(&cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(link.status.success(), "{}", String::from_utf8_lossy(&link.stderr));
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "probe exited with {:?}", out.status.code());
    let text = String::from_utf8_lossy(&out.stdout);
    let vals: Vec<f64> = text.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert!((vals[0] - 1.0 - 2.0 / (std::f64::consts::E - 1.0)).abs() < 1e-6);
    assert!((vals[1] - 2.0).abs() < 1e-2);
}
