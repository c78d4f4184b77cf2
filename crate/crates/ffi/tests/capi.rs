use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use spde_fk_ffi::*;

const HEAT: &str = r#"
id = "heat"
modes = 0
samples = 400
seed = 7
space_cells = 64

[domain]
kind = "interval"
a = 0.0
b = 1.0

[time]
t_final = 0.5
n_steps = 256

[coefficients]
family = "constant"
rho = 1.0

[data.psi]
kind = "sine"
amplitude = 1.0

[constants]
lambda = 0.5
k = 10.0
"#;

fn parse(text: &str) -> *mut SpdeFkScenario {
    let src = CString::new(text).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { spde_fk_scenario_parse(src.as_ptr(), &mut handle) };
    assert_eq!(status, SpdeFkStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    let p = spde_fk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(spde_fk_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn scenario_accessors() {
    let s = parse(HEAT);
    unsafe {
        assert_eq!(spde_fk_scenario_dim(s), 1);
        assert_eq!(spde_fk_scenario_steps(s), 256);
        assert_eq!(spde_fk_scenario_t_final(s), 0.5);
        assert_eq!(spde_fk_scenario_set_seed(s, 99), SpdeFkStatus::Ok);
        spde_fk_scenario_free(s);
        assert_eq!(spde_fk_scenario_dim(ptr::null()), 0);
        assert!(spde_fk_scenario_t_final(ptr::null()).is_nan());
        spde_fk_scenario_free(ptr::null_mut());
    }
}

#[test]
fn parse_errors_carry_a_status_and_message() {
    let bad = CString::new("id = ").unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { spde_fk_scenario_parse(bad.as_ptr(), &mut handle) };
    assert_eq!(status, SpdeFkStatus::Parse);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let mut handle = ptr::null_mut();
    let status = unsafe { spde_fk_scenario_parse(ptr::null(), &mut handle) };
    assert_eq!(status, SpdeFkStatus::NullPointer);
    let src = CString::new(HEAT).unwrap();
    let status = unsafe { spde_fk_scenario_parse(src.as_ptr(), ptr::null_mut()) };
    assert_eq!(status, SpdeFkStatus::NullPointer);
    let status = unsafe { spde_fk_scenario_set_seed(ptr::null_mut(), 1) };
    assert_eq!(status, SpdeFkStatus::NullPointer);
}

#[test]
fn invalid_samples_are_refused_and_not_applied() {
    let s = parse(HEAT);
    unsafe {
        assert_eq!(spde_fk_scenario_set_samples(s, 0), SpdeFkStatus::Validation);
        assert_eq!(spde_fk_scenario_set_samples(s, 10), SpdeFkStatus::Ok);
        spde_fk_scenario_free(s);
    }
}

#[test]
fn missing_file_is_an_io_or_parse_error() {
    let path = CString::new("/nonexistent/scenario.toml").unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { spde_fk_scenario_load(path.as_ptr(), &mut handle) };
    assert!(matches!(status, SpdeFkStatus::Io | SpdeFkStatus::Parse));
    assert!(handle.is_null());
}

#[test]
fn heat_estimate_matches_the_reference() {
    let s = parse(HEAT);
    let xs = [0.25, 0.5];
    let mut est = ptr::null_mut();
    unsafe {
        assert_eq!(spde_fk_estimate(s, 0, 0, xs.as_ptr(), 2, &mut est), SpdeFkStatus::Ok);
        assert_eq!(spde_fk_estimates_len(est), 2);
        let mut reference = [0.0; 2];
        assert_eq!(spde_fk_reference(s, 0, xs.as_ptr(), 2, reference.as_mut_ptr()), SpdeFkStatus::Ok);
        for (i, r) in reference.iter().enumerate() {
            let (mut mean, mut se, mut res) = (0.0, 0.0, 0.0);
            assert_eq!(spde_fk_estimates_get(est, i, &mut mean, &mut se, &mut res), SpdeFkStatus::Ok);
            assert!((mean - r).abs() <= 4.0 * se + 2e-3, "{mean} vs {r} (se {se})");
            assert!(res <= 1e-8);
        }
        assert_eq!(spde_fk_estimates_get(est, 2, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), SpdeFkStatus::Index);
        spde_fk_estimates_free(est);
        spde_fk_scenario_free(s);
    }
}

#[test]
fn reference_off_the_grid_is_an_error() {
    let s = parse(HEAT);
    let xs = [0.3];
    let mut out = [0.0];
    unsafe {
        let status = spde_fk_reference(s, 0, xs.as_ptr(), 1, out.as_mut_ptr());
        assert_ne!(status, SpdeFkStatus::Ok);
        spde_fk_scenario_free(s);
    }
}

#[test]
fn validation_round_trip() {
    let s = parse(HEAT);
    let mut v = ptr::null_mut();
    unsafe {
        assert_eq!(spde_fk_scenario_set_samples(s, 200), SpdeFkStatus::Ok);
        assert_eq!(spde_fk_validate(s, 1, 5, &mut v), SpdeFkStatus::Ok);
        assert!(spde_fk_validation_max_relative_l2(v).is_finite());
        assert_eq!(spde_fk_validation_passed(v, 0.05), 1);
        spde_fk_validation_free(v);
        spde_fk_scenario_free(s);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/spde_fk.h");
    assert!(header.exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"spde_fk.h\"\nint main(void) { SpdeFkScenario *s = 0; SpdeFkStatus st = spde_fk_scenario_parse(\"\", &s); spde_fk_scenario_free(s); return st == SPDE_FK_STATUS_OK; }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg("-I")
            .arg(include)
            .arg(&src)
            .output()
        else {
            eprintln!("{compiler} not available; skipped");
            continue;
        };
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "spde_fk.h"

int main(int argc, char **argv) {
    SpdeFkScenario *s = NULL;
    if (spde_fk_scenario_load(argv[1], &s) != SPDE_FK_STATUS_OK) {
        fprintf(stderr, "%s\n", spde_fk_last_error());
        return 1;
    }
    if (spde_fk_scenario_set_samples(s, 0) != SPDE_FK_STATUS_VALIDATION) return 2;
    spde_fk_scenario_set_samples(s, 300);
    double x = 0.5, mean = 0.0, se = 0.0;
    SpdeFkEstimates *e = NULL;
    if (spde_fk_estimate(s, 0, 0, &x, 1, &e) != SPDE_FK_STATUS_OK) return 3;
    spde_fk_estimates_get(e, 0, &mean, &se, NULL);
    double exact = exp(-M_PI * M_PI * 0.25);
    printf("%.6f %.6f %.6f\n", mean, se, exact);
    spde_fk_estimates_free(e);
    spde_fk_scenario_free(s);
    return fabs(mean - exact) <= 4.0 * se + 0.01 ? 0 : 4;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile = exe.parent().unwrap();
    let lib = profile.join("libspde_fk_ffi.so");
    if !lib.exists() {
        eprintln!("{} not built; skipped", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    let scenario = dir.path().join("heat.toml");
    std::fs::write(&src, C_PROGRAM).unwrap();
    std::fs::write(&scenario, HEAT).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let Ok(out) = Command::new("cc")
        .arg("-D_DEFAULT_SOURCE")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg(format!("-L{}", profile.display()))
        .arg(format!("-Wl,-rpath,{}", profile.display()))
        .args(["-lspde_fk_ffi", "-lm"])
        .output()
    else {
        eprintln!("cc not available; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).arg(&scenario).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
}
