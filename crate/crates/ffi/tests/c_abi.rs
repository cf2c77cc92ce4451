use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use robandit_ffi::*;

fn last_error() -> String {
    let p = rb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn basis_set(d: usize) -> *mut RbActionSet {
    let mut data = vec![0.0; d * d];
    for i in 0..d {
        data[i * d + i] = 1.0;
    }
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { rb_action_set_new(data.as_ptr(), d, d, &mut set) }, RbStatus::Ok);
    set
}

#[test]
fn design_lifecycle_on_standard_basis() {
    unsafe {
        let set = basis_set(4);
        assert_eq!(rb_action_set_len(set), 4);
        assert_eq!(rb_action_set_dim(set), 4);
        let mut design = ptr::null_mut();
        assert_eq!(rb_design_compute(set, 0.01, 1000, &mut design), RbStatus::Ok);
        assert!((rb_design_gvalue(design) - 4.0).abs() < 1e-9);
        assert_eq!(rb_design_effective_dim(design), 4);
        assert_eq!(rb_design_support_len(design), 4);

        let mut w = [0.0; 4];
        assert_eq!(rb_design_weights(design, w.as_mut_ptr(), 4), RbStatus::Ok);
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-12));

        let mut counts = [0u64; 4];
        assert_eq!(
            rb_design_coreset_counts(design, 10, RbClientModel::M1, 0.0, counts.as_mut_ptr(), 4),
            RbStatus::Ok
        );
        assert_eq!(counts, [3, 3, 3, 3]);
        assert_eq!(
            rb_design_coreset_counts(design, 10, RbClientModel::M2, 1.5, counts.as_mut_ptr(), 4),
            RbStatus::InvalidNu
        );
        assert_eq!(
            rb_design_weights(design, w.as_mut_ptr(), 3),
            RbStatus::InvalidInput
        );

        rb_design_free(design);
        rb_action_set_free(set);
        rb_action_set_free(ptr::null_mut());
        rb_design_free(ptr::null_mut());
    }
}

#[test]
fn invalid_inputs_report_codes_and_messages() {
    unsafe {
        let long = [2.0, 0.0];
        let mut set = ptr::null_mut();
        assert_eq!(rb_action_set_new(long.as_ptr(), 1, 2, &mut set), RbStatus::InvalidInput);
        assert!(set.is_null());
        assert!(last_error().contains("norm"), "{}", last_error());

        assert_eq!(rb_action_set_new(ptr::null(), 2, 2, &mut set), RbStatus::NullPointer);
        assert!(last_error().contains("data"));

        assert_eq!(rb_action_set_len(ptr::null()), 0);
        assert!(rb_design_gvalue(ptr::null()).is_nan());

        let a = [0.0, 1.0];
        let gram = [1.0, 0.0, 0.0, 0.0];
        let mut out = 0.0;
        assert_eq!(rb_weighted_norm_sq(a.as_ptr(), gram.as_ptr(), 2, &mut out), RbStatus::OutOfSpan);
    }
}

#[test]
fn weighted_norm_and_thresholds() {
    unsafe {
        let a = [1.0, 0.0];
        let gram = [0.25, 0.0, 0.0, 1.0];
        let mut out = 0.0;
        assert_eq!(rb_weighted_norm_sq(a.as_ptr(), gram.as_ptr(), 2, &mut out), RbStatus::Ok);
        assert!((out - 4.0).abs() < 1e-12);

        let mut g = 0.0;
        assert_eq!(rb_threshold_m1(1e4, 4, 1.0, 0.01, 0.0, 0.0, &mut g), RbStatus::Ok);
        assert!((g - (4.0 * 100f64.ln() / 1e4).sqrt()).abs() < 1e-12);
        assert_eq!(rb_threshold_m1(1e4, 4, 1.0, 0.01, 0.3, 0.0, &mut g), RbStatus::ConfigInvalid);

        let mut g2 = 0.0;
        assert_eq!(rb_threshold_m2(1e4, 5, 12, 0.01, 1.0, 0.01, 0.0, 0.0, &mut g2), RbStatus::Ok);
        assert!((g2 - (5.0 * 100f64.ln() / 100.0).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn laplace_quantile_edges() {
    assert_eq!(rb_laplace_quantile(0.5, 2.0), 0.0);
    assert!((rb_laplace_quantile(0.75, 1.0) - 2f64.ln()).abs() < 1e-12);
    assert!(rb_laplace_quantile(0.0, 1.0).is_nan());
    assert!(rb_laplace_quantile(0.5, -1.0).is_nan());
}

#[test]
fn regression_entry_points_agree_on_clean_data() {
    let d = 3;
    let theta = [0.2, -0.4, 0.6];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    for r in 0..30 {
        let i = r % d;
        let mut a = vec![0.0; d];
        a[i] = 1.0;
        rewards.push(theta[i]);
        actions.extend(a);
    }
    let n = rewards.len();
    let mut robust = [0.0; 3];
    let mut vanilla = [0.0; 3];
    let mut removed = usize::MAX;
    unsafe {
        assert_eq!(
            rb_robust_least_squares(actions.as_ptr(), rewards.as_ptr(), n, d, 0.0, 7, robust.as_mut_ptr(), &mut removed),
            RbStatus::Ok
        );
        assert_eq!(
            rb_vanilla_least_squares(actions.as_ptr(), rewards.as_ptr(), n, d, vanilla.as_mut_ptr()),
            RbStatus::Ok
        );
    }
    assert_eq!(removed, 0);
    for i in 0..d {
        assert!((robust[i] - theta[i]).abs() < 1e-10);
        assert!((vanilla[i] - theta[i]).abs() < 1e-10);
    }

    let pts = [1.0, 1.0, 1.0];
    let mut mean = [0.0];
    unsafe {
        assert_eq!(rb_filter(pts.as_ptr(), 3, 1, 0.0, 1, mean.as_mut_ptr(), ptr::null_mut()), RbStatus::Ok);
    }
    assert_eq!(mean[0], 1.0);
}

#[test]
fn sweep_from_json_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(
        r#"{"version": 1,
            "instance": {"inline": {"theta_star": [1.0, 0.0], "actions": {"dim": 2, "actions": [[1.0, 0.0], [0.0, 1.0]]}}},
            "schedule": {"horizon": 400},
            "seeds": [0, 1],
            "baselines": ["vanilla"]}"#,
    )
    .unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut csv = ptr::null_mut();
    unsafe {
        assert_eq!(rb_run_sweep_json(cfg.as_ptr(), out.as_ptr(), 1, false, &mut csv), RbStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        rb_string_free(csv);
        assert!(text.starts_with("variant,checkpoint,runs,mean,median,q25,q75,iqr\n"));
        assert!(text.contains("vanilla,400,2,"));
    }
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("traces/robust_1.json").exists());

    let bad = CString::new(r#"{"version": 1, "nope": true}"#).unwrap();
    unsafe {
        assert_eq!(rb_run_sweep_json(bad.as_ptr(), out.as_ptr(), 1, false, ptr::null_mut()), RbStatus::ConfigInvalid);
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(rb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/robandit.h");
    let text = std::fs::read_to_string(&header).expect("header generated by the build script");
    for sym in ["rb_design_compute", "rb_run_sweep_json", "rb_string_free", "RB_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(status.success());
}

#[test]
fn c_program_links_against_shared_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // tests run from target/<profile>/deps; the cdylib sits one level up
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap().to_path_buf();
    if !lib_dir.join("librobandit_ffi.so").exists() {
        eprintln!("shared library not found in {}; skipping", lib_dir.display());
        return;
    }
    let bin = tempfile::tempdir().unwrap();
    let out = bin.path().join("smoke");
    let Ok(status) = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-lrobandit_ffi", "-lm", "-o"])
        .arg(&out)
        .status()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&out).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
