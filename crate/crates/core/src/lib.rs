//! Adaptive group testing for items with non-identical defectivity priors.
//!
//! The pipeline discards items whose prior is at or below a threshold,
//! bins the rest geometrically by probability, packs each bin into search
//! sets of roughly half a defective's worth of mass, lays each set out on a
//! Shannon-Fano tree and finds every defective by repeated binary descent.
//!
//! - [`priors`]: populations, entropy, Dirichlet-generated priors
//! - [`threshold`]: truncation threshold and low-probability discarding
//! - [`partition`]: binning and set splitting
//! - [`codetree`]: per-set search trees
//! - [`search`]: search strategies, oracles, end-to-end runs
//! - [`bounds`]: expected-test and success-probability bounds
//! - [`harness`]: Monte Carlo sweeps and CSV output
//!
//! ```
//! use grouptest::{Population, SearchConfig, SearchPlan, Strategy, TestOracle, TruthOracle};
//!
//! let pop = Population::new(vec![0.3, 0.2, 0.2, 0.1, 0.05, 0.0001])?;
//! let plan = SearchPlan::build(&pop, &SearchConfig::default())?;
//! let truth = pop.sample_defectivity(7);
//! let mut oracle = TruthOracle::new(&truth);
//! let mut run = plan.execute(&mut oracle, Strategy::MergedPruning)?;
//! assert_eq!(run.total_tests, oracle.tests_used());
//! assert!(run.score(&truth) || !run.truncation_missed.is_empty());
//! # Ok::<(), grouptest::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod codetree;
pub mod error;
pub mod harness;
pub mod partition;
pub mod priors;
pub mod search;
pub mod seed;
pub mod threshold;

pub use error::{Error, Result};
pub use priors::{DefectivityVector, Population, PopulationStats};
pub use search::{run_full, SearchConfig, SearchPlan, Strategy, TestOracle, TruthOracle};
