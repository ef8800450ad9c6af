use hjlab_ffi::*;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let p = hjlab_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { hjlab_string_free(p) };
    s
}

#[test]
fn gate_matches_hand_arithmetic() {
    let mut g = HjlabGate::default();
    let s = unsafe { hjlab_exponent_gate(2.0, 2, 5.0, f64::INFINITY, f64::INFINITY, &mut g) };
    assert_eq!(s, HjlabStatus::Ok);
    // d+2 = 4, (d+2)(γ−1) = 4.
    assert!(g.forcing_condition);
    assert_eq!(g.lipschitz_exponent, 4.0);
    assert_eq!(g.apriori_threshold, 4.0);
    assert!(g.aronson_serrin);

    let s = unsafe { hjlab_exponent_gate(0.5, 2, 5.0, 1.0, 1.0, &mut g) };
    assert_eq!(s, HjlabStatus::Validation);
    assert!(last_error().contains("gamma must exceed 1"));
}

#[test]
fn null_pointers_are_reported() {
    let s = unsafe { hjlab_exponent_gate(2.0, 2, 5.0, 1.0, 1.0, ptr::null_mut()) };
    assert_eq!(s, HjlabStatus::NullPointer);
    assert!(last_error().contains("out is null"));
    assert_eq!(unsafe { hjlab_grid_len(ptr::null()) }, 0);
    unsafe {
        hjlab_grid_free(ptr::null_mut());
        hjlab_field_free(ptr::null_mut());
        hjlab_string_free(ptr::null_mut());
    }
}

#[test]
fn grid_field_round_trip() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(hjlab_grid_new(2, 4, &mut g), HjlabStatus::Validation);
        assert_eq!(hjlab_grid_new(2, 8, &mut g), HjlabStatus::Ok);
        assert_eq!(hjlab_grid_len(g), 64);

        let vals: Vec<f64> = (0..64).map(|i| (i as f64) - 32.0).collect();
        let mut f = ptr::null_mut();
        assert_eq!(
            hjlab_field_new(g, vals.as_ptr(), 10, &mut f),
            HjlabStatus::InvalidInput
        );
        assert_eq!(
            hjlab_field_new(g, vals.as_ptr(), 64, &mut f),
            HjlabStatus::Ok
        );

        let mut back = vec![0.0; 64];
        assert_eq!(
            hjlab_field_values(f, back.as_mut_ptr(), 3),
            HjlabStatus::BufferTooSmall
        );
        assert_eq!(
            hjlab_field_values(f, back.as_mut_ptr(), 64),
            HjlabStatus::Ok
        );
        assert_eq!(back, vals);

        let mut sup = 0.0;
        assert_eq!(
            hjlab_field_lp_norm(f, f64::INFINITY, &mut sup),
            HjlabStatus::Ok
        );
        assert_eq!(sup, 32.0);
        hjlab_field_free(f);
        hjlab_grid_free(g);
    }
}

#[test]
fn hamiltonian_and_conjugate() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(hjlab_grid_new(1, 16, &mut g), HjlabStatus::Ok);
        let mut h = ptr::null_mut();
        assert_eq!(
            hjlab_hamiltonian_new(g, 2.0, 1.0, 0.0, 0.0, &mut h),
            HjlabStatus::Ok
        );
        let mut v = 0.0;
        assert_eq!(
            hjlab_hamiltonian_eval(h, 3, 3.0, 0.0, &mut v),
            HjlabStatus::Ok
        );
        assert!((v - 9.0).abs() < 1e-12);
        // |p|² has conjugate |ν|²/4.
        assert_eq!(
            hjlab_hamiltonian_legendre(h, 3, 2.0, 0.0, &mut v),
            HjlabStatus::Ok
        );
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        assert_eq!(
            hjlab_hamiltonian_eval(h, 99, 0.0, 0.0, &mut v),
            HjlabStatus::InvalidInput
        );
        assert_eq!(
            hjlab_hamiltonian_new(g, 1.0, 1.0, 0.0, 0.0, &mut h),
            HjlabStatus::Validation
        );
        hjlab_hamiltonian_free(h);
        hjlab_grid_free(g);
    }
}

const CONFIG: &str = r#"
[run]
kind = "duality"
[grid]
d = 1
n = 32
t_final = 0.05
dt_factor = 0.5
dt_power = 2.0
[problem]
gamma = 2.0
u0 = "0.3*sin(2*pi*x)"
[adjoint]
mode = "transpose"
"#;

#[test]
fn config_parse_json_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, CONFIG).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(hjlab_config_parse(cpath.as_ptr(), &mut c), HjlabStatus::Ok);
        let hash = hjlab_config_hash(c);
        let hs = CStr::from_ptr(hash).to_str().unwrap().to_string();
        hjlab_string_free(hash);
        assert_eq!(hs.len(), 64);

        let mut js = ptr::null_mut();
        assert_eq!(hjlab_config_to_json(c, &mut js), HjlabStatus::Ok);
        let v: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(js).to_str().unwrap()).unwrap();
        hjlab_string_free(js);
        assert_eq!(v["hash"], serde_json::json!(hs));
        assert_eq!(v["config"]["run"]["kind"], "duality");

        let ledger = CString::new(dir.path().join("l.jsonl").to_str().unwrap()).unwrap();
        let mut failed = 99usize;
        assert_eq!(
            hjlab_config_run(c, ledger.as_ptr(), false, &mut failed),
            HjlabStatus::Ok
        );
        assert_eq!(failed, 0);
        let text = std::fs::read_to_string(dir.path().join("l.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 1);
        hjlab_config_free(c);
    }

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nkind = \"hj\"\n[problem]\ngamma = 0.5\n").unwrap();
    let cbad = CString::new(bad.to_str().unwrap()).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(
        unsafe { hjlab_config_parse(cbad.as_ptr(), &mut c) },
        HjlabStatus::Validation
    );
    assert!(last_error().contains("gamma must exceed 1"));
    let missing = CString::new("/nonexistent/x.toml").unwrap();
    assert_eq!(
        unsafe { hjlab_config_parse(missing.as_ptr(), &mut c) },
        HjlabStatus::Io
    );
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hjlab.h")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "hjlab_last_error_message",
        "hjlab_string_free",
        "hjlab_exponent_gate",
        "hjlab_grid_new",
        "hjlab_field_new",
        "hjlab_hamiltonian_legendre",
        "hjlab_config_parse",
        "hjlab_config_run",
        "typedef struct HjlabGrid HjlabGrid;",
        "HJLAB_STATUS_NUMERICAL = 4",
    ] {
        assert!(h.contains(name), "missing {name}");
    }
}

/// Compiles a C caller against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libhjlab_ffi.a");
    assert!(
        lib.exists(),
        "static library not built at {}",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "hjlab.h"
int main(void) {
    HjlabGate g;
    if (hjlab_exponent_gate(2.0, 2, 5.0, INFINITY, INFINITY, &g) != HJLAB_STATUS_OK) return 1;
    if (!g.forcing_condition || g.lipschitz_exponent != 4.0) return 2;
    HjlabGrid *grid = NULL;
    if (hjlab_grid_new(1, 4, &grid) != HJLAB_STATUS_VALIDATION) return 3;
    char *msg = hjlab_last_error_message();
    if (msg == NULL) return 4;
    hjlab_string_free(msg);
    if (hjlab_grid_new(1, 8, &grid) != HJLAB_STATUS_OK) return 5;
    if (hjlab_grid_len(grid) != 8) return 6;
    hjlab_grid_free(grid);
    puts("ok");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("caller");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
