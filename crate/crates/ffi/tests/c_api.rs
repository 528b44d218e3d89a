use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use enmkf::data::{generate_synthetic, MeasurementRecord, SyntheticSpec};
use enmkf::experiment::{FilterRunner, RunConfig};
use enmkf_ffi::*;

fn records(n: usize) -> Vec<EnmkfRecord> {
    let spec = SyntheticSpec {
        horizon_min: n,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec)
        .unwrap()
        .records
        .iter()
        .map(|r| EnmkfRecord {
            t_min: r.t_min,
            t_int: r.t_int,
            t_ext: r.t_ext,
            f_int: r.f_int,
            f_ext: r.f_ext,
        })
        .collect()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(enmkf_last_error_message()) }
        .to_str()
        .unwrap()
        .to_owned()
}

const CONFIG: &str = r#"{"ensemble_size": 12, "seed": 5}"#;

#[test]
fn filter_matches_library_runner() {
    let recs = records(30);
    let json = CString::new(CONFIG).unwrap();
    let mut handle = ptr::null_mut();
    let status = unsafe { enmkf_filter_new(json.as_ptr(), recs.as_ptr(), recs.len(), &mut handle) };
    assert_eq!(status, EnmkfStatus::Ok);
    assert_eq!(unsafe { enmkf_filter_ensemble_size(handle) }, 12);

    let cfg = RunConfig::from_json_str(CONFIG).unwrap();
    let lib_records: Vec<_> = recs.iter().map(to_lib).collect();
    let mut runner = FilterRunner::new(&cfg, &lib_records).unwrap();

    for (r, lr) in recs.iter().zip(&lib_records) {
        let mut est = EnmkfEstimate::default();
        assert_eq!(
            unsafe { enmkf_filter_step(handle, r, &mut est) },
            EnmkfStatus::Ok
        );
        let row = runner.assimilate(lr).unwrap();
        assert_eq!(est.t_min, r.t_min);
        assert_eq!(est.r_mean, row.r_mean);
        assert_eq!(est.rho_c_std, row.rho_c_std);
        assert_eq!(est.f_ext_var, row.fext_var);
    }
    assert_eq!(last_error(), "");
    unsafe { enmkf_filter_free(handle) };
}

fn to_lib(r: &EnmkfRecord) -> MeasurementRecord {
    MeasurementRecord {
        t_min: r.t_min,
        t_int: r.t_int,
        t_ext: r.t_ext,
        f_int: r.f_int,
        f_ext: r.f_ext,
    }
}

#[test]
fn null_and_invalid_arguments_are_reported() {
    let recs = records(10);
    let mut handle = ptr::null_mut();
    let status = unsafe { enmkf_filter_new(ptr::null(), ptr::null(), 0, &mut handle) };
    assert_eq!(status, EnmkfStatus::NullPointer);
    assert!(handle.is_null());

    let bad = CString::new(r#"{"ensemble_size": 1}"#).unwrap();
    let status = unsafe { enmkf_filter_new(bad.as_ptr(), recs.as_ptr(), recs.len(), &mut handle) };
    assert_eq!(status, EnmkfStatus::Config);
    assert!(last_error().contains("ensemble_size"), "{}", last_error());

    let garbage = CString::new("{not json").unwrap();
    let status =
        unsafe { enmkf_filter_new(garbage.as_ptr(), recs.as_ptr(), recs.len(), &mut handle) };
    assert_eq!(status, EnmkfStatus::Config);

    let status = unsafe { enmkf_filter_new(ptr::null(), recs.as_ptr(), 0, &mut handle) };
    assert_eq!(status, EnmkfStatus::Config);

    let status = unsafe { enmkf_filter_step(ptr::null_mut(), &recs[0], ptr::null_mut()) };
    assert_eq!(status, EnmkfStatus::NullPointer);
    assert_eq!(unsafe { enmkf_filter_ensemble_size(ptr::null()) }, 0);
    unsafe { enmkf_filter_free(ptr::null_mut()) };
}

#[test]
fn non_finite_record_is_a_data_error() {
    let recs = records(10);
    let mut handle = ptr::null_mut();
    let json = CString::new(CONFIG).unwrap();
    assert_eq!(
        unsafe { enmkf_filter_new(json.as_ptr(), recs.as_ptr(), recs.len(), &mut handle) },
        EnmkfStatus::Ok
    );
    let mut rec = recs[0];
    rec.f_int = f64::NAN;
    let mut est = EnmkfEstimate::default();
    assert_eq!(
        unsafe { enmkf_filter_step(handle, &rec, &mut est) },
        EnmkfStatus::Data
    );
    unsafe { enmkf_filter_free(handle) };
}

#[test]
fn wall_flux_of_linear_profile() {
    let nodes: Vec<f64> = (0..=10).map(|i| 20.0 - i as f64).collect();
    let (mut fi, mut fe) = (0.0, 0.0);
    let status = unsafe { enmkf_wall_flux(nodes.as_ptr(), nodes.len(), 0.5, &mut fi, &mut fe) };
    assert_eq!(status, EnmkfStatus::Ok);
    assert!((fi - 20.0).abs() < 1e-12);
    assert!((fe + 20.0).abs() < 1e-12);

    let status = unsafe { enmkf_wall_flux(nodes.as_ptr(), 3, 0.5, &mut fi, &mut fe) };
    assert_eq!(status, EnmkfStatus::Config);
    let status = unsafe { enmkf_wall_flux(nodes.as_ptr(), nodes.len(), -1.0, &mut fi, &mut fe) };
    assert_eq!(status, EnmkfStatus::Config);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(enmkf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn has_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok()
}

#[test]
fn header_compiles_as_c_and_cpp() {
    if !has_cc() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"enmkf.h\"\nint main(void) { return ENMKF_STATUS_OK; }\n",
    )
    .unwrap();
    for lang in ["c", "c++"] {
        let out = Command::new("cc")
            .args(["-x", lang, "-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(header_dir())
            .arg(&src)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{lang}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn c_program_links_and_runs() {
    if !has_cc() {
        eprintln!("skipping: no C compiler");
        return;
    }
    // Test binaries live in target/<profile>/deps; the static library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libenmkf_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <math.h>
#include <stdio.h>
#include "enmkf.h"

int main(void) {
    EnmkfRecord recs[5];
    for (int i = 0; i < 5; ++i) {
        recs[i].t_min = i + 1;
        recs[i].t_int = 20.0;
        recs[i].t_ext = 10.0;
        recs[i].f_int = 32.0;
        recs[i].f_ext = -32.0;
    }
    EnmkfFilter *f = NULL;
    if (enmkf_filter_new("{\"ensemble_size\": 8}", recs, 5, &f) != ENMKF_STATUS_OK) {
        fprintf(stderr, "%s\n", enmkf_last_error_message());
        return 1;
    }
    EnmkfEstimate est;
    for (int i = 0; i < 5; ++i) {
        if (enmkf_filter_step(f, &recs[i], &est) != ENMKF_STATUS_OK) return 2;
    }
    enmkf_filter_free(f);
    if (enmkf_filter_new("{\"ensemble_size\": 1}", recs, 5, &f) != ENMKF_STATUS_CONFIG) return 3;
    printf("%lld %.6f\n", (long long)est.t_min, est.r_mean);
    return isfinite(est.r_mean) ? 0 : 4;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let out = Command::new("cc")
        .arg("-I")
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}",
        run.status,
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("5 "));
}
