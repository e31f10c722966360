//! C ABI for `grouptest`.
//!
//! Objects cross the boundary as opaque heap handles created by `*_new`
//! functions and released by the matching `*_free`. Fallible calls return a
//! [`GtStatus`] and write their result through an out-pointer; on failure a
//! description is available from [`gt_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grouptest::bounds::{bernstein_report, coefficient_f};
use grouptest::codetree::LengthRule;
use grouptest::priors::sample_dirichlet_priors;
use grouptest::search::{GammaRule, SearchConfig, ThresholdRule};
use grouptest::threshold::compute_theta;
use grouptest::{DefectivityVector, Error, Population, SearchPlan, Strategy, TruthOracle};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    Ok = 0,
    NullPointer = 1,
    EmptyPopulation = 2,
    InvalidProbability = 3,
    InvalidParameter = 4,
    RatioViolated = 5,
    DegenerateSet = 6,
    DegeneratePartition = 7,
    OracleInconsistent = 8,
    BudgetExhausted = 9,
    TooLarge = 10,
    Io = 11,
    LengthMismatch = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStrategy {
    ExplicitConfirm = 0,
    MergedPruning = 1,
    Laminar = 2,
}

impl From<GtStrategy> for Strategy {
    fn from(s: GtStrategy) -> Self {
        match s {
            GtStrategy::ExplicitConfirm => Strategy::ExplicitConfirm,
            GtStrategy::MergedPruning => Strategy::MergedPruning,
            GtStrategy::Laminar => Strategy::LaminarBaseline,
        }
    }
}

/// Settings for [`gt_plan_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GtPlanConfig {
    /// Truncation threshold, used when `target_error <= 0`.
    pub theta: f64,
    /// If positive, derive theta from this target truncation error instead.
    pub target_error: f64,
    /// Ratio bound; values `<= 0` select the optimal gamma.
    pub gamma: f64,
    /// Set fullness threshold in (0, 1/2].
    pub fullness: f64,
    /// Use Huffman instead of Shannon-Fano depths.
    pub huffman: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GtPopulationStats {
    pub mu: f64,
    pub entropy_bits: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GtBounds {
    pub entropy_bits: f64,
    pub mu: f64,
    pub theta: f64,
    pub t_bd: f64,
    pub variance_proxy: f64,
    pub length_cap: f64,
    pub psi: f64,
    pub t_nec: f64,
    pub success_lb: f64,
    pub laminar_bd: f64,
    pub capacity_ratio: f64,
}

/// Opaque population handle.
pub struct GtPopulation(Population);

/// Opaque search plan handle (truncation, partition and trees).
pub struct GtPlan(SearchPlan);

/// Opaque result of one search run.
pub struct GtRun {
    found: Vec<usize>,
    total_tests: u64,
    success: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> GtStatus {
    match err {
        Error::EmptyPopulation => GtStatus::EmptyPopulation,
        Error::InvalidProbability { .. } => GtStatus::InvalidProbability,
        Error::InvalidParameter(_) => GtStatus::InvalidParameter,
        Error::RatioViolated { .. } => GtStatus::RatioViolated,
        Error::DegenerateSet => GtStatus::DegenerateSet,
        Error::DegeneratePartition => GtStatus::DegeneratePartition,
        Error::OracleInconsistent { .. } => GtStatus::OracleInconsistent,
        Error::BudgetExhausted { .. } => GtStatus::BudgetExhausted,
        Error::TooLarge { .. } => GtStatus::TooLarge,
        Error::EmptyInput => GtStatus::InvalidParameter,
        Error::Io { .. } => GtStatus::Io,
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Length { expected: usize, got: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Run `body`, mapping errors and panics to a status and recording the message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GtStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GtStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer passed as {what}"));
            GtStatus::NullPointer
        }
        Ok(Err(Failure::Length { expected, got })) => {
            set_last_error(format!("expected {expected} entries, got {got}"));
            GtStatus::LengthMismatch
        }
        Err(_) => {
            set_last_error("panic inside grouptest".to_string());
            GtStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes either null or a valid pointer to a live T.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(Failure::Null(what));
    }
    // SAFETY: caller guarantees `data` points to `len` initialised elements.
    Ok(unsafe { std::slice::from_raw_parts(data, len) })
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create a population from `len` probabilities.
///
/// # Safety
/// `probs` must point to `len` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_population_new(probs: *const f64, len: usize, out: *mut *mut GtPopulation) -> GtStatus {
    guard(|| {
        let probs = unsafe { slice(probs, len, "probs") }?;
        let pop = Population::new(probs.to_vec())?;
        unsafe { write_out(out, Box::into_raw(Box::new(GtPopulation(pop))), "out") }
    })
}

/// Draw `p_i = min(mu w_i, 1)` with `w` from a symmetric Dirichlet.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_population_dirichlet(
    n: usize,
    mu: f64,
    alpha: f64,
    seed: u64,
    out: *mut *mut GtPopulation,
) -> GtStatus {
    guard(|| {
        let pop = sample_dirichlet_priors(n, mu, alpha, seed)?.population;
        unsafe { write_out(out, Box::into_raw(Box::new(GtPopulation(pop))), "out") }
    })
}

/// # Safety
/// `pop` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gt_population_free(pop: *mut GtPopulation) {
    if !pop.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(pop) });
    }
}

/// Number of items, or 0 for a null handle.
///
/// # Safety
/// `pop` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_population_len(pop: *const GtPopulation) -> usize {
    unsafe { pop.as_ref() }.map_or(0, |p| p.0.len())
}

/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_population_stats(pop: *const GtPopulation, out: *mut GtPopulationStats) -> GtStatus {
    guard(|| {
        let s = unsafe { deref(pop, "pop") }?.0.stats();
        unsafe {
            write_out(
                out,
                GtPopulationStats {
                    mu: s.mu,
                    entropy_bits: s.entropy_bits,
                },
                "out",
            )
        }
    })
}

/// Sample a defectivity vector into `bits` (one byte per item, 0 or 1).
///
/// # Safety
/// `pop` must be a live handle; `bits` must hold `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gt_population_sample_defectivity(
    pop: *const GtPopulation,
    seed: u64,
    bits: *mut u8,
    len: usize,
) -> GtStatus {
    guard(|| {
        let pop = &unsafe { deref(pop, "pop") }?.0;
        if len != pop.len() {
            return Err(Failure::Length {
                expected: pop.len(),
                got: len,
            });
        }
        if bits.is_null() {
            return Err(Failure::Null("bits"));
        }
        let v = pop.sample_defectivity(seed);
        // SAFETY: `bits` holds `len == pop.len()` bytes.
        let dst = unsafe { std::slice::from_raw_parts_mut(bits, len) };
        for (d, &b) in dst.iter_mut().zip(&v.bits) {
            *d = b as u8;
        }
        Ok(())
    })
}

/// Truncation threshold for a target error in (0, 1).
///
/// # Safety
/// `pop` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_compute_theta(target_error: f64, pop: *const GtPopulation, out: *mut f64) -> GtStatus {
    guard(|| {
        let theta = compute_theta(target_error, &unsafe { deref(pop, "pop") }?.0)?;
        unsafe { write_out(out, theta, "out") }
    })
}

/// Default settings: theta 0.001, optimal gamma, fullness 1/2, Shannon-Fano.
#[no_mangle]
pub extern "C" fn gt_plan_config_default() -> GtPlanConfig {
    GtPlanConfig {
        theta: 0.001,
        target_error: 0.0,
        gamma: 0.0,
        fullness: 0.5,
        huffman: false,
    }
}

/// Truncate, partition and build the search trees for `pop`.
///
/// # Safety
/// `pop` and `config` must be valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_new(
    pop: *const GtPopulation,
    config: *const GtPlanConfig,
    out: *mut *mut GtPlan,
) -> GtStatus {
    guard(|| {
        let pop = &unsafe { deref(pop, "pop") }?.0;
        let c = unsafe { deref(config, "config") }?;
        let search = SearchConfig {
            threshold: if c.target_error > 0.0 {
                ThresholdRule::TargetError(c.target_error)
            } else {
                ThresholdRule::Theta(c.theta)
            },
            gamma: if c.gamma > 0.0 {
                GammaRule::Fixed(c.gamma)
            } else {
                GammaRule::Auto
            },
            fullness: c.fullness,
            strategy: Strategy::default(),
            lengths: if c.huffman {
                LengthRule::Huffman
            } else {
                LengthRule::ShannonFano
            },
        };
        let plan = SearchPlan::build(pop, &search)?;
        unsafe { write_out(out, Box::into_raw(Box::new(GtPlan(plan))), "out") }
    })
}

/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_free(plan: *mut GtPlan) {
    if !plan.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(plan) });
    }
}

/// Number of search sets, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_set_count(plan: *const GtPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.0.partition.set_count())
}

/// Number of items kept after truncation, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_retained(plan: *const GtPlan) -> usize {
    unsafe { plan.as_ref() }.map_or(0, |p| p.0.retained_items())
}

/// Theta and gamma actually used by the plan.
///
/// # Safety
/// `plan` must be live; `theta` and `gamma` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_parameters(plan: *const GtPlan, theta: *mut f64, gamma: *mut f64) -> GtStatus {
    guard(|| {
        let plan = &unsafe { deref(plan, "plan") }?.0;
        unsafe { write_out(theta, plan.theta, "theta") }?;
        unsafe { write_out(gamma, plan.gamma, "gamma") }
    })
}

/// Bernstein-based bounds for the plan built from `pop`.
///
/// # Safety
/// `plan` must have been built from `pop`; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_bounds(plan: *const GtPlan, pop: *const GtPopulation, out: *mut GtBounds) -> GtStatus {
    guard(|| {
        let plan = &unsafe { deref(plan, "plan") }?.0;
        let pop = &unsafe { deref(pop, "pop") }?.0;
        let r = bernstein_report(plan, pop)?;
        let b = GtBounds {
            entropy_bits: r.entropy_bits,
            mu: r.mu,
            theta: r.theta,
            t_bd: r.t_bd,
            variance_proxy: r.variance_proxy,
            length_cap: r.length_cap,
            psi: r.psi,
            t_nec: r.t_nec,
            success_lb: r.success_lb,
            laminar_bd: r.laminar_bd,
            capacity_ratio: r.capacity_ratio,
        };
        unsafe { write_out(out, b, "out") }
    })
}

/// Search against the defectivity vector `truth` (one byte per item,
/// non-zero meaning defective). `budget < 0` means unlimited; exceeding a
/// budget returns `BUDGET_EXHAUSTED`.
///
/// # Safety
/// `plan` must be live; `truth` must hold `len` bytes; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_plan_run(
    plan: *const GtPlan,
    truth: *const u8,
    len: usize,
    strategy: GtStrategy,
    budget: i64,
    out: *mut *mut GtRun,
) -> GtStatus {
    guard(|| {
        let plan = &unsafe { deref(plan, "plan") }?.0;
        let bytes = unsafe { slice(truth, len, "truth") }?;
        let needed = plan
            .truncation
            .kept
            .iter()
            .chain(&plan.truncation.discarded)
            .max()
            .map_or(0, |&m| m + 1);
        if len < needed {
            return Err(Failure::Length {
                expected: needed,
                got: len,
            });
        }
        let truth = DefectivityVector::from_bits(bytes.iter().map(|&b| b != 0).collect());
        let mut oracle = TruthOracle::new(&truth);
        if budget >= 0 {
            oracle = oracle.with_budget(budget as u64);
        }
        let mut run = plan.execute(&mut oracle, strategy.into())?;
        let success = run.score(&truth);
        let handle = GtRun {
            found: run.found,
            total_tests: run.total_tests,
            success,
        };
        unsafe { write_out(out, Box::into_raw(Box::new(handle)), "out") }
    })
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_run_free(run: *mut GtRun) {
    if !run.is_null() {
        // SAFETY: allocated by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_run_total_tests(run: *const GtRun) -> u64 {
    unsafe { run.as_ref() }.map_or(0, |r| r.total_tests)
}

/// Whether the run recovered the defectivity vector exactly.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_run_success(run: *const GtRun) -> bool {
    unsafe { run.as_ref() }.is_some_and(|r| r.success)
}

/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_run_found_len(run: *const GtRun) -> usize {
    unsafe { run.as_ref() }.map_or(0, |r| r.found.len())
}

/// Copy up to `cap` found item indices (ascending) into `buf`; returns the
/// number written.
///
/// # Safety
/// `run` must be live; `buf` must hold `cap` writable `size_t`s.
#[no_mangle]
pub unsafe extern "C" fn gt_run_found_copy(run: *const GtRun, buf: *mut usize, cap: usize) -> usize {
    let Some(run) = (unsafe { run.as_ref() }) else {
        return 0;
    };
    if buf.is_null() {
        return 0;
    }
    let n = run.found.len().min(cap);
    // SAFETY: `buf` holds at least `cap >= n` elements.
    unsafe { ptr::copy_nonoverlapping(run.found.as_ptr(), buf, n) };
    n
}

/// Coefficient of mu under the capped-probability fullness variant.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn gt_coefficient_f(fullness: f64, cap: f64, out: *mut f64) -> GtStatus {
    guard(|| {
        let f = coefficient_f(fullness, cap)?;
        unsafe { write_out(out, f, "out") }
    })
}
