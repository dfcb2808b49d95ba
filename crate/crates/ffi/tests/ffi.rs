use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use concentra_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = concentra_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn measure(json: &str) -> *mut ConcentraMeasure {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { concentra_measure_from_json(c(json).as_ptr(), &mut m) }, ConcentraStatus::Ok);
    m
}

#[test]
fn constants_through_the_abi() {
    let mut v = 0.0;
    let st = unsafe { concentra_constant(c("gc_markov_kappa").as_ptr(), c(r#"{"kappa1":1,"L":1}"#).as_ptr(), 3, &mut v) };
    assert_eq!(st, ConcentraStatus::Ok);
    assert_eq!(v, 14.0);

    let st = unsafe { concentra_constant(c("ts_weak_alpha").as_ptr(), c(r#"{"alpha":1,"R":1,"s":2}"#).as_ptr(), 3, &mut v) };
    assert_eq!(st, ConcentraStatus::Ok);
    assert!((v - (-1f64).exp() / 16.0).abs() < 1e-15);

    let st = unsafe {
        concentra_constant(
            c("arma_lsi_alpha").as_ptr(),
            c(r#"{"A":[[0.5]],"B":[[1]]}"#).as_ptr(),
            1,
            &mut v,
        )
    };
    assert_eq!(st, ConcentraStatus::Ok, "{}", last_error());
    assert!(v > 0.0 && v < 1.0);

    let st = unsafe { concentra_constant(c("gc_markov_kappa").as_ptr(), ptr::null(), 3, &mut v) };
    assert_eq!(st, ConcentraStatus::InvalidInput);
    assert!(last_error().contains("kappa1"));
}

#[test]
fn distances_and_entropy() {
    let mu = measure(r#"{"type":"discrete","support":["a","b"],"weights":[0.5,0.5]}"#);
    let nu = measure(r#"{"type":"discrete","support":["b"],"weights":[1]}"#);
    let mut space = ptr::null_mut();
    let doc = c(r#"{"type":"finite","labels":["a","b"],"dist":[[0,2],[2,0]]}"#);
    assert_eq!(unsafe { concentra_space_from_json(doc.as_ptr(), &mut space) }, ConcentraStatus::Ok);

    let mut w = 0.0;
    assert_eq!(unsafe { concentra_wasserstein(space, mu, nu, 2.0, &mut w) }, ConcentraStatus::Ok);
    assert!((w - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(unsafe { concentra_wasserstein(ptr::null(), mu, nu, 2.0, &mut w) }, ConcentraStatus::InvalidInput);

    let mut e = 0.0;
    assert_eq!(unsafe { concentra_relative_entropy(space, nu, mu, &mut e) }, ConcentraStatus::Ok);
    assert!((e - 2f64.ln()).abs() < 1e-15);
    assert_eq!(unsafe { concentra_relative_entropy(space, mu, nu, &mut e) }, ConcentraStatus::Ok);
    assert!(e.is_infinite());

    let g1 = measure(r#"{"type":"gaussian","mean":[0],"cov":[[1]]}"#);
    let g2 = measure(r#"{"type":"gaussian","mean":[3],"cov":[[1]]}"#);
    assert_eq!(unsafe { concentra_wasserstein(ptr::null(), g1, g2, 2.0, &mut w) }, ConcentraStatus::Ok);
    assert!((w - 3.0).abs() < 1e-12);
    assert_eq!(unsafe { concentra_wasserstein(ptr::null(), g1, mu, 2.0, &mut w) }, ConcentraStatus::InvalidInput);

    unsafe {
        for m in [mu, nu, g1, g2] {
            concentra_measure_free(m);
        }
        concentra_space_free(space);
    }
}

#[test]
fn certificates_round_trip_as_json() {
    let mu = measure(r#"{"type":"discrete","support":[0,2],"weights":[0.5,0.5]}"#);
    for (kappa, want) in [(0.5, 0), (1.0, 1)] {
        let mut cert = ptr::null_mut();
        assert_eq!(unsafe { concentra_check_gc(ptr::null(), mu, kappa, 4, 0, &mut cert) }, ConcentraStatus::Ok);
        let (mut passed, mut slack) = (-1, 0.0);
        assert_eq!(unsafe { concentra_certificate_summary(cert, &mut passed, &mut slack) }, ConcentraStatus::Ok);
        assert_eq!(passed, want, "kappa {kappa}: slack {slack}");
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { concentra_certificate_to_json(cert, &mut json) }, ConcentraStatus::Ok);
        let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
        let back: concentra::certify::Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back.worst_slack, slack);
        unsafe {
            concentra_string_free(json);
            concentra_certificate_free(cert);
        }
    }
    let mut cert = ptr::null_mut();
    assert_eq!(
        unsafe { concentra_check_transport(ptr::null(), mu, 0.5, 1.0, 2, 0, &mut cert) },
        ConcentraStatus::Ok
    );
    unsafe {
        concentra_certificate_free(cert);
        concentra_measure_free(mu);
    }
}

#[test]
fn paths_and_coupling() {
    let model = c(r#"{"kind":"gaussian_kernel","theta":0.5,"sigma2":1}"#);
    let mut paths = ptr::null_mut();
    assert_eq!(unsafe { concentra_simulate(model.as_ptr(), 5, 3, 1, &mut paths) }, ConcentraStatus::Ok);
    let (mut n, mut h, mut d) = (0, 0, 0);
    assert_eq!(unsafe { concentra_paths_shape(paths, &mut n, &mut h, &mut d) }, ConcentraStatus::Ok);
    assert_eq!((n, h, d), (3, 5, 1));
    let (mut data, mut len) = (ptr::null(), 0);
    assert_eq!(unsafe { concentra_paths_data(paths, &mut data, &mut len) }, ConcentraStatus::Ok);
    let values = unsafe { std::slice::from_raw_parts(data, len) };
    let direct = concentra::processes::simulate_joint(&serde_json::from_str(model.to_str().unwrap()).unwrap(), 5, 3, 1)
        .unwrap();
    assert_eq!(values, &direct.values[..]);
    unsafe { concentra_paths_free(paths) };

    let q = c(r#"{"kind":"gaussian_kernel","theta":0.5,"sigma2":1,"x0":1}"#);
    let mut b = 0.0;
    assert_eq!(
        unsafe { concentra_coupling_bound(model.as_ptr(), q.as_ptr(), 3, 2.0, 16, 0, &mut b) },
        ConcentraStatus::Ok
    );
    assert!((b - (0.25f64 + 0.0625 + 0.015625).sqrt()).abs() < 1e-12);
    assert_eq!(
        unsafe { concentra_coupling_bound(model.as_ptr(), q.as_ptr(), 4, 2.0, 128, 1000, &mut b) },
        ConcentraStatus::Resource
    );
}

#[test]
fn null_and_malformed_arguments() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { concentra_measure_from_json(ptr::null(), &mut m) }, ConcentraStatus::NullPointer);
    assert_eq!(unsafe { concentra_measure_from_json(c("{").as_ptr(), &mut m) }, ConcentraStatus::InvalidInput);
    let ok = c(r#"{"type":"discrete","support":[1],"weights":[1]}"#);
    assert_eq!(unsafe { concentra_measure_from_json(ok.as_ptr(), ptr::null_mut()) }, ConcentraStatus::NullPointer);
    unsafe {
        concentra_measure_free(ptr::null_mut());
        concentra_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(concentra_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libconcentra_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi_smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
