//! Adaptive search of each set against a noiseless OR-test oracle.

use std::fmt;
use std::str::FromStr;

use crate::codetree::{CodeTree, LengthRule, ROOT};
use crate::error::{Error, Result};
use crate::partition::{optimal_gamma, partition, PartitionResult, DEFAULT_FULLNESS};
use crate::priors::{DefectivityVector, Population};
use crate::threshold::{compute_theta, truncate, TruncationResult};

/// Answers pooled tests. Each call to [`TestOracle::query`] is one test.
pub trait TestOracle {
    /// `true` iff `items` contains a defective.
    fn query(&mut self, items: &[usize]) -> Result<bool>;

    fn tests_used(&self) -> u64;

    /// Called before the tests of set `set_id` are issued.
    fn begin_set(&mut self, _set_id: usize) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedTest {
    pub set_id: usize,
    pub items: Vec<usize>,
    pub outcome: bool,
}

/// Oracle backed by a known defectivity vector, with an optional test budget
/// and query log.
#[derive(Debug, Clone)]
pub struct TruthOracle {
    truth: Vec<bool>,
    tests: u64,
    budget: Option<u64>,
    current_set: usize,
    log: Option<Vec<LoggedTest>>,
}

impl TruthOracle {
    pub fn new(truth: &DefectivityVector) -> Self {
        Self::from_bits(truth.bits.clone())
    }

    pub fn from_bits(truth: Vec<bool>) -> Self {
        TruthOracle {
            truth,
            tests: 0,
            budget: None,
            current_set: 0,
            log: None,
        }
    }

    /// Refuse (with [`Error::BudgetExhausted`]) any query beyond `budget` tests.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn log(&self) -> &[LoggedTest] {
        self.log.as_deref().unwrap_or(&[])
    }
}

impl TestOracle for TruthOracle {
    fn query(&mut self, items: &[usize]) -> Result<bool> {
        if let Some(budget) = self.budget {
            if self.tests >= budget {
                return Err(Error::BudgetExhausted { budget });
            }
        }
        self.tests += 1;
        let outcome = items.iter().any(|&i| self.truth[i]);
        if let Some(log) = self.log.as_mut() {
            log.push(LoggedTest {
                set_id: self.current_set,
                items: items.to_vec(),
                outcome,
            });
        }
        Ok(outcome)
    }

    fn tests_used(&self) -> u64 {
        self.tests
    }

    fn begin_set(&mut self, set_id: usize) {
        self.current_set = set_id;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Strategy {
    /// Test the remaining set; on a positive, descend testing left children;
    /// remove the found leaf and repeat.
    ExplicitConfirm,
    /// Fold the confirmation into the first descent test and prune every
    /// subtree that tested negative.
    #[default]
    MergedPruning,
    /// Test both children of every positive node.
    LaminarBaseline,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::ExplicitConfirm,
        Strategy::MergedPruning,
        Strategy::LaminarBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::ExplicitConfirm => "explicit-confirm",
            Strategy::MergedPruning => "merged-pruning",
            Strategy::LaminarBaseline => "laminar",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit-confirm" => Ok(Strategy::ExplicitConfirm),
            "merged-pruning" => Ok(Strategy::MergedPruning),
            "laminar" | "laminar-baseline" => Ok(Strategy::LaminarBaseline),
            other => Err(Error::param(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetSearchResult {
    pub set_id: usize,
    /// Global indices of the defectives found, in discovery order.
    pub found: Vec<usize>,
    pub tests: u64,
    pub rounds: usize,
}

/// Per-set search state: which leaves are still candidates, which are known
/// negative, plus consistency checks on the oracle's answers.
struct Session<'a, O: TestOracle> {
    tree: &'a CodeTree,
    oracle: &'a mut O,
    /// Not yet found and not known negative.
    alive: Vec<bool>,
    known_negative: Vec<bool>,
    found: Vec<usize>,
    scratch: Vec<usize>,
}

impl<'a, O: TestOracle> Session<'a, O> {
    fn new(tree: &'a CodeTree, oracle: &'a mut O) -> Self {
        let m = tree.len();
        Session {
            tree,
            oracle,
            alive: vec![true; m],
            known_negative: vec![false; m],
            found: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn live(&self, node: Option<usize>) -> Vec<usize> {
        node.map(|id| {
            self.tree
                .node(id)
                .items
                .iter()
                .copied()
                .filter(|&k| self.alive[k])
                .collect()
        })
        .unwrap_or_default()
    }

    fn ask(&mut self, locals: &[usize]) -> Result<bool> {
        self.scratch.clear();
        self.scratch.extend(locals.iter().map(|&k| self.tree.items[k]));
        let outcome = self.oracle.query(&self.scratch)?;
        if outcome {
            if locals.iter().all(|&k| self.known_negative[k]) {
                return Err(Error::OracleInconsistent { outcome });
            }
        } else {
            for &k in locals {
                self.known_negative[k] = true;
                self.alive[k] = false;
            }
        }
        Ok(outcome)
    }

    fn prune(&mut self, locals: &[usize]) {
        for &k in locals {
            self.alive[k] = false;
        }
    }

    fn accept(&mut self, k: usize) -> Result<()> {
        if self.known_negative[k] {
            return Err(Error::OracleInconsistent { outcome: false });
        }
        self.alive[k] = false;
        self.found.push(self.tree.items[k]);
        Ok(())
    }

    fn explicit_confirm(&mut self) -> Result<()> {
        loop {
            let remaining = self.live(Some(ROOT));
            if remaining.is_empty() || !self.ask(&remaining)? {
                return Ok(());
            }
            let mut at = ROOT;
            loop {
                let node = self.tree.node(at);
                if node.is_leaf() {
                    self.accept(node.items[0])?;
                    break;
                }
                let (left, right) = (node.left, node.right);
                let l = self.live(left);
                let r = self.live(right);
                at = match (l.is_empty(), r.is_empty()) {
                    (true, true) => return Err(Error::OracleInconsistent { outcome: true }),
                    (false, true) => left.expect("non-empty"),
                    (true, false) => right.expect("non-empty"),
                    (false, false) => {
                        if self.ask(&l)? {
                            left.expect("non-empty")
                        } else {
                            right.expect("non-empty")
                        }
                    }
                };
            }
        }
    }

    /// One descent from the root with nothing known about it. Returns the
    /// leaf found, or `None` once the root is proven negative.
    fn merged_descent(&mut self) -> Result<Option<usize>> {
        let mut at = ROOT;
        let mut known = false;
        loop {
            let node = self.tree.node(at);
            if node.is_leaf() {
                let k = node.items[0];
                if known || self.ask(&[k])? {
                    return Ok(Some(k));
                }
                self.prune(&[k]);
                return Ok(None);
            }
            let (left, right) = (node.left, node.right);
            let l = self.live(left);
            let r = self.live(right);
            if !l.is_empty() {
                if r.is_empty() && known {
                    at = left.expect("non-empty");
                    continue;
                }
                if self.ask(&l)? {
                    at = left.expect("non-empty");
                    known = true;
                    continue;
                }
                self.prune(&l);
            }
            if r.is_empty() {
                if known {
                    return Err(Error::OracleInconsistent { outcome: false });
                }
                return Ok(None);
            }
            if known || self.ask(&r)? {
                at = right.expect("non-empty");
                known = true;
            } else {
                self.prune(&r);
                return Ok(None);
            }
        }
    }

    fn merged_pruning(&mut self) -> Result<()> {
        while !self.live(Some(ROOT)).is_empty() {
            match self.merged_descent()? {
                Some(k) => self.accept(k)?,
                None => break,
            }
        }
        Ok(())
    }

    fn laminar(&mut self) -> Result<()> {
        let all = self.live(Some(ROOT));
        if !self.ask(&all)? {
            return Ok(());
        }
        self.laminar_node(ROOT)
    }

    /// `at` is known to contain a defective.
    fn laminar_node(&mut self, at: usize) -> Result<()> {
        let node = self.tree.node(at);
        if node.is_leaf() {
            return self.accept(node.items[0]);
        }
        let (left, right) = (node.left, node.right);
        let l = self.live(left);
        let r = self.live(right);
        match (l.is_empty(), r.is_empty()) {
            (true, true) => Err(Error::OracleInconsistent { outcome: true }),
            (false, true) => self.laminar_node(left.expect("non-empty")),
            (true, false) => self.laminar_node(right.expect("non-empty")),
            (false, false) => {
                let left_pos = self.ask(&l)?;
                let right_pos = self.ask(&r)?;
                if !left_pos && !right_pos {
                    return Err(Error::OracleInconsistent { outcome: false });
                }
                if left_pos {
                    self.laminar_node(left.expect("non-empty"))?;
                }
                if right_pos {
                    self.laminar_node(right.expect("non-empty"))?;
                }
                Ok(())
            }
        }
    }
}

/// Find every defective in the set behind `tree`.
pub fn search_set<O: TestOracle>(tree: &CodeTree, oracle: &mut O, strategy: Strategy) -> Result<SetSearchResult> {
    oracle.begin_set(tree.set_id);
    let before = oracle.tests_used();
    let mut session = Session::new(tree, oracle);
    match strategy {
        Strategy::ExplicitConfirm => session.explicit_confirm()?,
        Strategy::MergedPruning => session.merged_pruning()?,
        Strategy::LaminarBaseline => session.laminar()?,
    }
    let found = session.found;
    Ok(SetSearchResult {
        set_id: tree.set_id,
        rounds: found.len(),
        found,
        tests: oracle.tests_used() - before,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Theta(f64),
    /// Derive theta from a target truncation error.
    TargetError(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    /// The minimiser of the expected-test bound; gamma = 2 when theta >= 1/2.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub threshold: ThresholdRule,
    pub gamma: GammaRule,
    pub fullness: f64,
    pub strategy: Strategy,
    pub lengths: LengthRule,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            threshold: ThresholdRule::Theta(0.001),
            gamma: GammaRule::Auto,
            fullness: DEFAULT_FULLNESS,
            strategy: Strategy::default(),
            lengths: LengthRule::ShannonFano,
        }
    }
}

/// Truncation, partition and trees for one population; reusable across
/// defectivity draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    pub theta: f64,
    pub gamma: f64,
    pub truncation: TruncationResult,
    pub partition: PartitionResult,
    pub trees: Vec<CodeTree>,
}

impl SearchPlan {
    pub fn build(pop: &Population, config: &SearchConfig) -> Result<Self> {
        let theta = match config.threshold {
            ThresholdRule::Theta(theta) => {
                if !(0.0..1.0).contains(&theta) {
                    return Err(Error::param(format!("theta must lie in [0, 1), got {theta}")));
                }
                theta
            }
            ThresholdRule::TargetError(pe) => compute_theta(pe, pop)?,
        };
        let gamma = match config.gamma {
            GammaRule::Fixed(g) => g,
            GammaRule::Auto if theta >= 0.5 => 2.0,
            GammaRule::Auto => {
                if theta <= 0.0 {
                    return Err(Error::param("automatic gamma needs theta > 0"));
                }
                let mu = pop.stats().mu;
                if mu > 0.0 {
                    optimal_gamma(mu, theta)?
                } else {
                    2.0
                }
            }
        };
        let truncation = truncate(pop, theta);
        let partition = partition(pop, &truncation.kept, gamma, config.fullness)?;
        let trees = partition
            .sets
            .iter()
            .map(|s| CodeTree::build_with(s, config.lengths))
            .collect::<Result<Vec<_>>>()?;
        Ok(SearchPlan {
            theta,
            gamma,
            truncation,
            partition,
            trees,
        })
    }

    pub fn retained_items(&self) -> usize {
        self.truncation.kept.len()
    }

    /// Search every set in ascending id.
    pub fn execute<O: TestOracle>(&self, oracle: &mut O, strategy: Strategy) -> Result<RunResult> {
        let before = oracle.tests_used();
        let per_set = self
            .trees
            .iter()
            .map(|tree| search_set(tree, oracle, strategy))
            .collect::<Result<Vec<_>>>()?;
        let mut found: Vec<usize> = per_set.iter().flat_map(|r| r.found.iter().copied()).collect();
        found.sort_unstable();
        Ok(RunResult {
            found,
            total_tests: oracle.tests_used() - before,
            per_set,
            discarded: self.truncation.discarded.clone(),
            truncation_missed: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Recovered defectives, ascending.
    pub found: Vec<usize>,
    pub total_tests: u64,
    pub per_set: Vec<SetSearchResult>,
    /// Items declared non-defective without testing.
    pub discarded: Vec<usize>,
    /// Defective discarded items; filled by [`RunResult::score`].
    pub truncation_missed: Vec<usize>,
}

impl RunResult {
    /// Compare against the hidden truth; `true` on exact recovery.
    pub fn score(&mut self, truth: &DefectivityVector) -> bool {
        self.truncation_missed = self
            .discarded
            .iter()
            .copied()
            .filter(|&i| truth.is_defective(i))
            .collect();
        self.truncation_missed.is_empty() && self.found == truth.defectives()
    }
}

/// Truncate, partition, build trees and search.
pub fn run_full<O: TestOracle>(pop: &Population, config: &SearchConfig, oracle: &mut O) -> Result<RunResult> {
    SearchPlan::build(pop, config)?.execute(oracle, config.strategy)
}

pub const ENUMERATION_CAP: usize = 24;

/// Exact expected test count of one set, summing the realised count of the
/// real search over all `2^m` defectivity patterns.
pub fn expected_tests_set(tree: &CodeTree, strategy: Strategy) -> Result<f64> {
    let m = tree.len();
    if m > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            items: m,
            cap: ENUMERATION_CAP,
        });
    }
    let width = tree.items.iter().copied().max().map_or(0, |x| x + 1);
    let mut expectation = 0.0;
    for pattern in 0u64..(1u64 << m) {
        let mut truth = vec![false; width];
        let mut weight = 1.0;
        for (k, (&item, &p)) in tree.items.iter().zip(&tree.probs).enumerate() {
            let bit = pattern >> k & 1 == 1;
            truth[item] = bit;
            weight *= if bit { p } else { 1.0 - p };
        }
        if weight == 0.0 {
            continue;
        }
        let mut oracle = TruthOracle::from_bits(truth);
        expectation += weight * search_set(tree, &mut oracle, strategy)?.tests as f64;
    }
    Ok(expectation)
}

/// Exact `E[T]` for a whole plan (sets are independent, so per-set
/// expectations add).
pub fn expected_tests_enumeration(plan: &SearchPlan, strategy: Strategy) -> Result<f64> {
    let items = plan.partition.item_count();
    if items > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            items,
            cap: ENUMERATION_CAP,
        });
    }
    plan.trees.iter().map(|t| expected_tests_set(t, strategy)).sum()
}
