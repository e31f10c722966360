use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use grouptest_ffi::*;

struct Owned {
    pop: *mut GtPopulation,
    plan: *mut GtPlan,
}

impl Drop for Owned {
    fn drop(&mut self) {
        unsafe {
            gt_plan_free(self.plan);
            gt_population_free(self.pop);
        }
    }
}

fn build(probs: &[f64], theta: f64) -> Owned {
    let mut pop = ptr::null_mut();
    assert_eq!(
        unsafe { gt_population_new(probs.as_ptr(), probs.len(), &mut pop) },
        GtStatus::Ok
    );
    let mut config = gt_plan_config_default();
    config.theta = theta;
    let mut plan = ptr::null_mut();
    assert_eq!(unsafe { gt_plan_new(pop, &config, &mut plan) }, GtStatus::Ok);
    Owned { pop, plan }
}

fn last_error() -> String {
    let p = gt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn round_trip_finds_defectives() {
    let h = build(&[0.3, 0.2, 0.2, 0.1, 0.05, 0.0001], 0.01);
    assert_eq!(unsafe { gt_population_len(h.pop) }, 6);
    assert_eq!(unsafe { gt_plan_retained(h.plan) }, 5);
    assert!(unsafe { gt_plan_set_count(h.plan) } >= 1);

    let truth = [1u8, 0, 1, 0, 0, 0];
    for strategy in [
        GtStrategy::ExplicitConfirm,
        GtStrategy::MergedPruning,
        GtStrategy::Laminar,
    ] {
        let mut run = ptr::null_mut();
        let st = unsafe { gt_plan_run(h.plan, truth.as_ptr(), truth.len(), strategy, -1, &mut run) };
        assert_eq!(st, GtStatus::Ok);
        let mut buf = [0usize; 6];
        let n = unsafe { gt_run_found_copy(run, buf.as_mut_ptr(), buf.len()) };
        assert_eq!(&buf[..n], &[0, 2]);
        assert_eq!(unsafe { gt_run_found_len(run) }, 2);
        assert!(unsafe { gt_run_success(run) });
        assert!(unsafe { gt_run_total_tests(run) } >= 3);
        unsafe { gt_run_free(run) };
    }
}

#[test]
fn discarded_defective_is_a_failure() {
    let h = build(&[0.3, 0.2, 0.2, 0.1, 0.05, 0.0001], 0.01);
    let truth = [0u8, 0, 0, 0, 0, 1];
    let mut run = ptr::null_mut();
    let st = unsafe { gt_plan_run(h.plan, truth.as_ptr(), 6, GtStrategy::MergedPruning, -1, &mut run) };
    assert_eq!(st, GtStatus::Ok);
    assert!(!unsafe { gt_run_success(run) });
    assert_eq!(unsafe { gt_run_found_len(run) }, 0);
    unsafe { gt_run_free(run) };
}

#[test]
fn stats_and_bounds() {
    let h = build(&[0.5, 0.25, 0.25], 0.01);
    let mut stats = GtPopulationStats::default();
    assert_eq!(unsafe { gt_population_stats(h.pop, &mut stats) }, GtStatus::Ok);
    assert!((stats.mu - 1.0).abs() < 1e-15);
    let h_exp = 1.0 + 2.0 * grouptest::priors::binary_entropy(0.25);
    assert!((stats.entropy_bits - h_exp).abs() < 1e-12);

    let mut b = GtBounds::default();
    assert_eq!(unsafe { gt_plan_bounds(h.plan, h.pop, &mut b) }, GtStatus::Ok);
    assert!((b.theta - 0.01).abs() < 1e-15);
    assert!(b.t_nec >= b.t_bd);
    assert!(b.t_bd > b.entropy_bits);

    let (mut theta, mut gamma) = (0.0, 0.0);
    assert_eq!(
        unsafe { gt_plan_parameters(h.plan, &mut theta, &mut gamma) },
        GtStatus::Ok
    );
    assert_eq!(theta, 0.01);
    assert!(gamma > 1.0);
}

#[test]
fn dirichlet_and_sampling_are_seeded() {
    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    assert_eq!(
        unsafe { gt_population_dirichlet(50, 3.0, 1.0, 9, &mut a) },
        GtStatus::Ok
    );
    assert_eq!(
        unsafe { gt_population_dirichlet(50, 3.0, 1.0, 9, &mut b) },
        GtStatus::Ok
    );
    let mut x = [0u8; 50];
    let mut y = [0u8; 50];
    assert_eq!(
        unsafe { gt_population_sample_defectivity(a, 4, x.as_mut_ptr(), 50) },
        GtStatus::Ok
    );
    assert_eq!(
        unsafe { gt_population_sample_defectivity(b, 4, y.as_mut_ptr(), 50) },
        GtStatus::Ok
    );
    assert_eq!(x, y);
    assert!(x.iter().all(|&v| v <= 1));
    assert_eq!(
        unsafe { gt_population_sample_defectivity(a, 4, x.as_mut_ptr(), 49) },
        GtStatus::LengthMismatch
    );
    unsafe {
        gt_population_free(a);
        gt_population_free(b);
    }
}

#[test]
fn theta_from_target_error() {
    let probs = [0.5, 0.5];
    let mut pop = ptr::null_mut();
    assert_eq!(unsafe { gt_population_new(probs.as_ptr(), 2, &mut pop) }, GtStatus::Ok);
    let mut theta = 0.0;
    assert_eq!(unsafe { gt_compute_theta(0.5, pop, &mut theta) }, GtStatus::Ok);
    assert!((theta - 0.125).abs() < 1e-15);
    unsafe { gt_population_free(pop) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut pop = ptr::null_mut();
    let bad = [0.2, f64::NAN];
    assert_eq!(
        unsafe { gt_population_new(bad.as_ptr(), 2, &mut pop) },
        GtStatus::InvalidProbability
    );
    assert!(pop.is_null());
    assert!(last_error().contains("2"));

    assert_eq!(
        unsafe { gt_population_new(ptr::null(), 0, &mut pop) },
        GtStatus::EmptyPopulation
    );
    assert_eq!(
        unsafe { gt_population_new(ptr::null(), 3, &mut pop) },
        GtStatus::NullPointer
    );
    assert!(last_error().contains("probs"));

    let mut stats = GtPopulationStats::default();
    assert_eq!(
        unsafe { gt_population_stats(ptr::null(), &mut stats) },
        GtStatus::NullPointer
    );

    let mut f = 0.0;
    assert_eq!(
        unsafe { gt_coefficient_f(0.5, 0.75, &mut f) },
        GtStatus::InvalidParameter
    );
    assert_eq!(unsafe { gt_coefficient_f(0.88824, 0.25, &mut f) }, GtStatus::Ok);
    assert!((f - 2.00135).abs() < 1e-4);

    let h = build(&[0.3, 0.3, 0.2], 0.01);
    let truth = [1u8, 1, 1];
    let mut run = ptr::null_mut();
    let st = unsafe { gt_plan_run(h.plan, truth.as_ptr(), 3, GtStrategy::MergedPruning, 1, &mut run) };
    assert_eq!(st, GtStatus::BudgetExhausted);
    assert!(run.is_null());
    let st = unsafe { gt_plan_run(h.plan, truth.as_ptr(), 2, GtStrategy::MergedPruning, -1, &mut run) };
    assert_eq!(st, GtStatus::LengthMismatch);

    let mut config = gt_plan_config_default();
    config.fullness = 0.0;
    let mut plan = ptr::null_mut();
    assert_eq!(
        unsafe { gt_plan_new(h.pop, &config, &mut plan) },
        GtStatus::InvalidParameter
    );
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        gt_population_free(ptr::null_mut());
        gt_plan_free(ptr::null_mut());
        gt_run_free(ptr::null_mut());
        assert_eq!(gt_population_len(ptr::null()), 0);
        assert_eq!(gt_plan_set_count(ptr::null()), 0);
        assert_eq!(gt_run_total_tests(ptr::null()), 0);
        assert!(!gt_run_success(ptr::null()));
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(gt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(manifest_dir().join("include/grouptest.h")).unwrap();
    for name in [
        "typedef struct GtPopulation GtPopulation;",
        "typedef struct GtPlan GtPlan;",
        "GT_STATUS_OK = 0",
        "GT_STATUS_PANIC",
        "GtStatus gt_plan_run(",
        "const char *gt_last_error_message(void);",
        "size_t gt_run_found_copy(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compile and run a C program against the header and static library when a
/// C compiler is available.
#[test]
fn c_smoke_program() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libgrouptest_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let out = std::env::temp_dir().join(format!("gt_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(manifest_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).contains("found=2 success=1"));
}
