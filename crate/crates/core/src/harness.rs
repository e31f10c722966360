//! Monte Carlo experiment driver: grid sweeps over Dirichlet concentration
//! and truncation threshold, seeded trials, aggregation and CSV output.
//!
//! A grid point ("cell") is one (alpha, threshold) pair, alpha-major. Every
//! random stream is derived from the master seed and the stream's
//! coordinates, so records do not depend on the thread count.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bounds::{bernstein_report, entropy_budget_lower, BoundsReport};
use crate::codetree::LengthRule;
use crate::error::{Error, Result};
use crate::partition::DEFAULT_FULLNESS;
use crate::priors::{sample_dirichlet_priors, Population};
use crate::search::{
    GammaRule, LoggedTest, SearchConfig, SearchPlan, Strategy, TestOracle, ThresholdRule, TruthOracle,
};
use crate::seed;

const STREAM_CELL_PRIORS: u64 = 0;
const STREAM_TRUTH: u64 = 1;
const STREAM_TRIAL_PRIORS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// One prior vector per cell, shared by all its trials.
    #[default]
    Fixed,
    /// A fresh prior vector for every trial.
    PerTrial,
}

impl FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PriorMode::Fixed),
            "per-trial" => Ok(PriorMode::PerTrial),
            other => Err(Error::param(format!("unknown prior mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BudgetMode {
    #[default]
    Unlimited,
    /// Stop at `floor(T_nec)` tests.
    Tnec,
    /// Stop at a fixed number of tests.
    Tests(f64),
    /// Stop at `floor(f * H)` tests.
    EntropyFraction(f64),
}

impl BudgetMode {
    fn limit(self, report: Option<&BoundsReport>, entropy_bits: f64) -> Result<Option<u64>> {
        let raw = match self {
            BudgetMode::Unlimited => return Ok(None),
            BudgetMode::Tnec => {
                report
                    .ok_or_else(|| Error::param("stop-at-T_nec needs computable bounds"))?
                    .t_nec
            }
            BudgetMode::Tests(t) => t,
            BudgetMode::EntropyFraction(f) => f * entropy_bits,
        };
        if raw.is_finite() {
            Ok(Some(raw.max(0.0).floor() as u64))
        } else {
            Ok(None)
        }
    }
}

impl FromStr for BudgetMode {
    type Err = Error;

    /// `unlimited`, `tnec`, a test count, or an entropy multiple such as `0.5H`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("cannot parse budget {s:?}"));
        match s {
            "unlimited" => Ok(BudgetMode::Unlimited),
            "tnec" => Ok(BudgetMode::Tnec),
            _ => {
                if let Some(frac) = s.strip_suffix('H') {
                    let f: f64 = frac.parse().map_err(|_| bad())?;
                    if f < 0.0 {
                        return Err(bad());
                    }
                    Ok(BudgetMode::EntropyFraction(f))
                } else {
                    let t: f64 = s.parse().map_err(|_| bad())?;
                    if t < 0.0 {
                        return Err(bad());
                    }
                    Ok(BudgetMode::Tests(t))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSpec {
    Grid(Vec<f64>),
    TargetError(f64),
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn default_theta_grid() -> Vec<f64> {
    log_grid(1e-4, 1e-2, 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub mu: f64,
    pub alpha_grid: Vec<f64>,
    pub threshold: ThresholdSpec,
    pub trials: usize,
    pub master_seed: u64,
    pub strategy: Strategy,
    pub fullness: f64,
    pub gamma: GammaRule,
    pub budget: BudgetMode,
    pub prior_mode: PriorMode,
    /// Explicit priors; replaces the Dirichlet draw (alpha is then only a label).
    pub priors: Option<Population>,
    pub lengths: LengthRule,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub keep_logs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 500,
            mu: 8.0,
            alpha_grid: vec![1.0],
            threshold: ThresholdSpec::Grid(default_theta_grid()),
            trials: 1000,
            master_seed: 42,
            strategy: Strategy::default(),
            fullness: DEFAULT_FULLNESS,
            gamma: GammaRule::Auto,
            budget: BudgetMode::Unlimited,
            prior_mode: PriorMode::Fixed,
            priors: None,
            lengths: LengthRule::ShannonFano,
            threads: None,
            keep_logs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self.priors.is_none() && self.n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::param("alpha grid is empty"));
        }
        if let Some(a) = self.alpha_grid.iter().find(|&&a| !(a > 0.0)) {
            return Err(Error::param(format!("alpha must be positive, got {a}")));
        }
        match &self.threshold {
            ThresholdSpec::Grid(grid) => {
                if grid.is_empty() {
                    return Err(Error::param("theta grid is empty"));
                }
                if let Some(t) = grid.iter().find(|&&t| !(t > 0.0 && t < 0.5)) {
                    return Err(Error::param(format!("theta must lie in (0, 1/2), got {t}")));
                }
            }
            ThresholdSpec::TargetError(pe) => {
                if !(*pe > 0.0 && *pe < 1.0) {
                    return Err(Error::param(format!("target error must lie in (0, 1), got {pe}")));
                }
            }
        }
        if !(self.fullness > 0.0 && self.fullness <= 0.5) {
            return Err(Error::param(format!(
                "fullness must lie in (0, 1/2], got {}",
                self.fullness
            )));
        }
        if let GammaRule::Fixed(g) = self.gamma {
            if !(g > 1.0 && g.is_finite()) {
                return Err(Error::param(format!("gamma must exceed 1, got {g}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads must be at least 1"));
        }
        Ok(())
    }

    fn threshold_rules(&self) -> Vec<ThresholdRule> {
        match &self.threshold {
            ThresholdSpec::Grid(grid) => grid.iter().map(|&t| ThresholdRule::Theta(t)).collect(),
            ThresholdSpec::TargetError(pe) => vec![ThresholdRule::TargetError(*pe)],
        }
    }

    pub fn search_config(&self, threshold: ThresholdRule) -> SearchConfig {
        SearchConfig {
            threshold,
            gamma: self.gamma,
            fullness: self.fullness,
            strategy: self.strategy,
            lengths: self.lengths,
        }
    }

    fn draw_priors(&self, alpha: f64, stream_seed: u64) -> Result<(Population, usize)> {
        match &self.priors {
            Some(p) => Ok((p.clone(), 0)),
            None => {
                let d = sample_dirichlet_priors(self.n, self.mu, alpha, stream_seed)?;
                Ok((d.population, d.clipped))
            }
        }
    }
}

/// A population with its plan and bounds, as used by one cell or trial.
#[derive(Debug, Clone)]
pub struct Instance {
    pub population: Population,
    pub clipped: usize,
    pub plan: SearchPlan,
    /// `None` when the bounds are undefined (no retained items or theta >= 1/2).
    pub report: Option<BoundsReport>,
}

impl Instance {
    pub fn new(population: Population, clipped: usize, search: &SearchConfig) -> Result<Self> {
        let plan = SearchPlan::build(&population, search)?;
        let report = match bernstein_report(&plan, &population) {
            Ok(r) => Some(r),
            Err(Error::DegeneratePartition) => None,
            Err(Error::InvalidParameter(_)) if plan.theta >= 0.5 => None,
            Err(e) => return Err(e),
        };
        Ok(Instance {
            population,
            clipped,
            plan,
            report,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub index: usize,
    pub alpha: f64,
    pub threshold: ThresholdRule,
    /// Present in fixed-prior mode.
    pub instance: Option<Instance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial_id: usize,
    pub theta: f64,
    pub alpha: f64,
    /// Seed of the defectivity draw.
    pub seed: u64,
    pub tests_used: u64,
    pub defectives: usize,
    pub found: usize,
    pub success: bool,
    pub truncation_miss: bool,
    pub budget_exhausted: bool,
    pub set_count: usize,
    pub clipped: usize,
    pub t_bd: f64,
    pub t_nec: f64,
    pub entropy_bits: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct TrialLog {
    pub cell: usize,
    pub trial_id: usize,
    pub tests: Vec<LoggedTest>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cells: Vec<Cell>,
    /// Sorted by (cell, trial).
    pub records: Vec<TrialRecord>,
    pub logs: Vec<TrialLog>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    Ok(run_experiment_detailed(config)?.records)
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::param(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

pub fn run_experiment_detailed(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    in_pool(config.threads, || run_inner(config))?
}

fn run_inner(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let rules = config.threshold_rules();
    let specs: Vec<(usize, f64, ThresholdRule)> = config
        .alpha_grid
        .iter()
        .flat_map(|&a| rules.iter().map(move |&r| (a, r)))
        .enumerate()
        .map(|(i, (a, r))| (i, a, r))
        .collect();

    let cells: Vec<Cell> = specs
        .par_iter()
        .map(|&(index, alpha, threshold)| {
            let instance = match config.prior_mode {
                PriorMode::PerTrial => None,
                PriorMode::Fixed => {
                    let s = seed::derive(config.master_seed, &[STREAM_CELL_PRIORS, index as u64]);
                    let (pop, clipped) = config.draw_priors(alpha, s)?;
                    Some(Instance::new(pop, clipped, &config.search_config(threshold))?)
                }
            };
            Ok(Cell {
                index,
                alpha,
                threshold,
                instance,
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<(TrialRecord, Option<TrialLog>)> = jobs
        .par_iter()
        .map(|&(c, t)| run_trial(config, &cells[c], t))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(results.len());
    let mut logs = Vec::new();
    for (rec, log) in results {
        records.push(rec);
        logs.extend(log);
    }
    Ok(ExperimentOutput { cells, records, logs })
}

fn run_trial(config: &ExperimentConfig, cell: &Cell, trial_id: usize) -> Result<(TrialRecord, Option<TrialLog>)> {
    let fresh;
    let instance = match &cell.instance {
        Some(inst) => inst,
        None => {
            let s = seed::derive(
                config.master_seed,
                &[STREAM_TRIAL_PRIORS, cell.index as u64, trial_id as u64],
            );
            let (pop, clipped) = config.draw_priors(cell.alpha, s)?;
            fresh = Instance::new(pop, clipped, &config.search_config(cell.threshold))?;
            &fresh
        }
    };
    let stats = instance.population.stats();
    let truth_seed = seed::derive(config.master_seed, &[STREAM_TRUTH, cell.index as u64, trial_id as u64]);
    let truth = instance.population.sample_defectivity(truth_seed);

    let mut oracle = TruthOracle::new(&truth);
    if let Some(limit) = config.budget.limit(instance.report.as_ref(), stats.entropy_bits)? {
        oracle = oracle.with_budget(limit);
    }
    if config.keep_logs {
        oracle = oracle.with_log();
    }

    let (found, success, truncation_miss, budget_exhausted) = match instance.plan.execute(&mut oracle, config.strategy)
    {
        Ok(mut run) => {
            let success = run.score(&truth);
            (run.found.len(), success, !run.truncation_missed.is_empty(), false)
        }
        Err(Error::BudgetExhausted { .. }) => {
            let miss = instance
                .plan
                .truncation
                .discarded
                .iter()
                .any(|&i| truth.is_defective(i));
            (0, false, miss, true)
        }
        Err(e) => return Err(e),
    };

    let report = instance.report.as_ref();
    let record = TrialRecord {
        cell: cell.index,
        trial_id,
        theta: instance.plan.theta,
        alpha: cell.alpha,
        seed: truth_seed,
        tests_used: oracle.tests_used(),
        defectives: truth.count(),
        found,
        success,
        truncation_miss,
        budget_exhausted,
        set_count: instance.plan.partition.set_count(),
        clipped: instance.clipped,
        t_bd: report.map_or(f64::NAN, |r| r.t_bd),
        t_nec: report.map_or(f64::NAN, |r| r.t_nec),
        entropy_bits: stats.entropy_bits,
        mu: stats.mu,
    };
    let log = config.keep_logs.then(|| TrialLog {
        cell: cell.index,
        trial_id,
        tests: oracle.log().to_vec(),
    });
    Ok((record, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfKey {
    Theta,
    Alpha,
}

impl CdfKey {
    pub fn name(self) -> &'static str {
        match self {
            CdfKey::Theta => "theta",
            CdfKey::Alpha => "alpha",
        }
    }

    fn of(self, r: &TrialRecord) -> f64 {
        match self {
            CdfKey::Theta => r.theta,
            CdfKey::Alpha => r.alpha,
        }
    }
}

/// Empirical success CDF over test counts for one key value.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfTable {
    pub key: CdfKey,
    pub key_value: f64,
    pub trials: usize,
    /// `(t, fraction of all trials that succeeded within t tests)`, by ascending `t`.
    pub points: Vec<(u64, f64)>,
}

impl CdfTable {
    pub fn success_rate(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }

    /// Smallest test count at which the curve reaches `level`.
    pub fn quantile(&self, level: f64) -> Option<u64> {
        self.points.iter().find(|p| p.1 >= level).map(|p| p.0)
    }
}

/// One table per distinct key value, ascending.
pub fn aggregate_cdf(records: &[TrialRecord], key: CdfKey) -> Result<Vec<CdfTable>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut values: Vec<f64> = records.iter().map(|r| key.of(r)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values
        .into_iter()
        .map(|v| {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| key.of(r) == v).collect();
            let total = group.len();
            let mut counts: Vec<u64> = group.iter().filter(|r| r.success).map(|r| r.tests_used).collect();
            counts.sort_unstable();
            let mut points: Vec<(u64, f64)> = Vec::new();
            for (i, &t) in counts.iter().enumerate() {
                let frac = (i + 1) as f64 / total as f64;
                match points.last_mut() {
                    Some(last) if last.0 == t => last.1 = frac,
                    _ => points.push((t, frac)),
                }
            }
            CdfTable {
                key,
                key_value: v,
                trials: total,
                points,
            }
        })
        .collect())
}

/// Per-cell bound curve and empirical summary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub cell: usize,
    pub theta: f64,
    pub alpha: f64,
    /// `(1 - eps) H` with `eps` the empirical failure rate (or 0 with no trials).
    pub t_lower: f64,
    pub t_bd: f64,
    pub t_nec: f64,
    pub empirical_mean: Option<f64>,
    pub empirical_q95: Option<u64>,
    pub success_rate: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// The shared value when all agree (or all are NaN), otherwise the mean.
fn common_or_mean(xs: &[f64]) -> f64 {
    match xs.first() {
        Some(&first) if xs.iter().all(|&x| x.to_bits() == first.to_bits()) => first,
        _ => mean(xs.iter().copied()),
    }
}

/// Nearest-rank quantile of a sorted slice.
pub fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn median_tests(records: &[TrialRecord]) -> f64 {
    let mut t: Vec<u64> = records.iter().map(|r| r.tests_used).collect();
    t.sort_unstable();
    let n = t.len();
    if n % 2 == 1 {
        t[n / 2] as f64
    } else {
        (t[n / 2 - 1] + t[n / 2]) as f64 / 2.0
    }
}

pub fn bounds_rows(output: &ExperimentOutput) -> Vec<BoundsRow> {
    output
        .cells
        .iter()
        .map(|cell| {
            let recs: Vec<&TrialRecord> = output.records.iter().filter(|r| r.cell == cell.index).collect();
            if recs.is_empty() {
                let inst = cell.instance.as_ref();
                let h = inst.map_or(f64::NAN, |i| i.population.stats().entropy_bits);
                let report = inst.and_then(|i| i.report);
                return BoundsRow {
                    cell: cell.index,
                    theta: inst.map_or(f64::NAN, |i| i.plan.theta),
                    alpha: cell.alpha,
                    t_lower: entropy_budget_lower(h, 0.0),
                    t_bd: report.map_or(f64::NAN, |r| r.t_bd),
                    t_nec: report.map_or(f64::NAN, |r| r.t_nec),
                    empirical_mean: None,
                    empirical_q95: None,
                    success_rate: None,
                };
            }
            let success = recs.iter().filter(|r| r.success).count() as f64 / recs.len() as f64;
            let col = |f: fn(&TrialRecord) -> f64| common_or_mean(&recs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let h = col(|r| r.entropy_bits);
            let mut tests: Vec<u64> = recs.iter().map(|r| r.tests_used).collect();
            tests.sort_unstable();
            BoundsRow {
                cell: cell.index,
                theta: col(|r| r.theta),
                alpha: cell.alpha,
                t_lower: entropy_budget_lower(h, 1.0 - success),
                t_bd: col(|r| r.t_bd),
                t_nec: col(|r| r.t_nec),
                empirical_mean: Some(mean(tests.iter().map(|&t| t as f64))),
                empirical_q95: Some(nearest_rank(&tests, 0.95)),
                success_rate: Some(success),
            }
        })
        .collect()
}

/// Bound curves without simulation (`trials` is ignored).
pub fn bound_curves(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut cfg = config.clone();
    cfg.prior_mode = PriorMode::Fixed;
    cfg.trials = 1;
    cfg.validate()?;
    let rules = cfg.threshold_rules();
    let mut cells = Vec::new();
    for (i, (alpha, rule)) in cfg
        .alpha_grid
        .iter()
        .flat_map(|&a| rules.iter().map(move |&r| (a, r)))
        .enumerate()
    {
        let s = seed::derive(cfg.master_seed, &[STREAM_CELL_PRIORS, i as u64]);
        let (pop, clipped) = cfg.draw_priors(alpha, s)?;
        cells.push(Cell {
            index: i,
            alpha,
            threshold: rule,
            instance: Some(Instance::new(pop, clipped, &cfg.search_config(rule))?),
        });
    }
    Ok(ExperimentOutput {
        cells,
        records: Vec::new(),
        logs: Vec::new(),
    })
}

fn flag(b: bool) -> u8 {
    b as u8
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("trial_id,theta,alpha,seed,tests_used,defectives,found,success,t_bd,t_nec\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.trial_id,
            r.theta,
            r.alpha,
            r.seed,
            r.tests_used,
            r.defectives,
            r.found,
            flag(r.success),
            r.t_bd,
            r.t_nec
        );
    }
    out
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut out = String::from("theta,t_lower_thm2,t_bd,t_nec,empirical_mean,empirical_q95\n");
    for r in rows {
        let mean = r.empirical_mean.map(|m| m.to_string()).unwrap_or_default();
        let q95 = r.empirical_q95.map(|q| q.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.theta, r.t_lower, r.t_bd, r.t_nec, mean, q95
        );
    }
    out
}

pub fn cdf_csv(tables: &[CdfTable]) -> String {
    let mut out = String::from("key_name,key_value,tests,cum_success\n");
    for t in tables {
        for &(tests, frac) in &t.points {
            let _ = writeln!(out, "{},{},{},{}", t.key.name(), t.key_value, tests, frac);
        }
    }
    out
}

/// Rows `trial,set_id,query_items,outcome`; items are space-separated.
pub fn testlog_csv(logs: &[TrialLog]) -> String {
    let mut out = String::from("trial,set_id,query_items,outcome\n");
    for log in logs {
        for t in &log.tests {
            let items: Vec<String> = t.items.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                log.trial_id,
                t.set_id,
                items.join(" "),
                flag(t.outcome)
            );
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
