//! Truncation of low-probability items.

use crate::error::{Error, Result};
use crate::priors::Population;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationResult {
    /// Items with `p_i > theta`, in index order.
    pub kept: Vec<usize>,
    /// Items with `p_i <= theta`, in index order; declared non-defective untested.
    pub discarded: Vec<usize>,
    pub theta: f64,
    /// Discarded defectivity mass, `sum p_i` over `discarded`.
    pub rho: f64,
}

/// `-log2 theta = min(log2(2n / P_e), 2 H / P_e)`.
///
/// When `H = 0` only the population-size branch is used.
pub fn neg_log2_theta(target_error: f64, n: usize, entropy_bits: f64) -> Result<f64> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::param(format!(
            "target error must lie in (0, 1), got {target_error}"
        )));
    }
    let size_branch = (2.0 * n as f64 / target_error).log2();
    if entropy_bits <= 0.0 {
        return Ok(size_branch);
    }
    Ok(size_branch.min(2.0 * entropy_bits / target_error))
}

/// Threshold guaranteeing that the discarded items hold a defective with
/// probability at most `target_error / 2`.
pub fn compute_theta(target_error: f64, pop: &Population) -> Result<f64> {
    let h = pop.stats().entropy_bits;
    Ok((-neg_log2_theta(target_error, pop.len(), h)?).exp2())
}

pub fn truncate(pop: &Population, theta: f64) -> TruncationResult {
    let (mut kept, mut discarded) = (Vec::new(), Vec::new());
    let mut rho = 0.0;
    for (i, &p) in pop.probs().iter().enumerate() {
        if p <= theta {
            discarded.push(i);
            rho += p;
        } else {
            kept.push(i);
        }
    }
    TruncationResult {
        kept,
        discarded,
        theta,
        rho,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::sample_dirichlet_priors;
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn theta_n500_example() {
        let nl = neg_log2_theta(0.5, 500, 20.0).unwrap();
        assert!((nl - 2000f64.log2()).abs() < 1e-12);
        assert!((nl - 10.9658).abs() < 1e-4);
        assert!(((-nl).exp2() - 5.0e-4).abs() < 1e-15);
    }

    #[test]
    fn theta_two_fair_items() {
        let pop = Population::new(vec![0.5, 0.5]).unwrap();
        let theta = compute_theta(0.5, &pop).unwrap();
        assert!((theta - 0.125).abs() < 1e-15);
        let t = truncate(&pop, theta);
        assert_eq!(t.kept, vec![0, 1]);
        assert!(t.discarded.is_empty());
    }

    #[test]
    fn theta_rejects_bad_target() {
        let pop = Population::new(vec![0.5]).unwrap();
        assert!(compute_theta(0.0, &pop).is_err());
        assert!(compute_theta(1.0, &pop).is_err());
    }

    #[test]
    fn theta_near_one_still_bounded() {
        let pop = sample_dirichlet_priors(200, 5.0, 1.0, 4).unwrap().population;
        let theta = compute_theta(1.0 - 1e-9, &pop).unwrap();
        assert!(truncate(&pop, theta).rho <= 0.5);
    }

    #[test]
    fn theta_zero_entropy_keeps_certain_defectives() {
        let pop = Population::new(vec![1.0, 0.0, 1.0]).unwrap();
        let theta = compute_theta(0.5, &pop).unwrap();
        let t = truncate(&pop, theta);
        assert_eq!(t.kept, vec![0, 2]);
    }

    #[test]
    fn truncate_examples() {
        let pop = Population::new(vec![0.5, 0.0001, 0.3]).unwrap();
        let t = truncate(&pop, 0.001);
        assert_eq!((t.kept, t.discarded), (vec![0, 2], vec![1]));
        assert!((t.rho - 0.0001).abs() < 1e-18);

        let pop = Population::new(vec![0.0, 0.2, 0.0]).unwrap();
        let t = truncate(&pop, 0.0);
        assert_eq!((t.kept, t.discarded, t.rho), (vec![1], vec![0, 2], 0.0));
    }

    #[test]
    fn empirical_truncation_error_frequency() {
        let pe = 0.3;
        let pop = sample_dirichlet_priors(500, 8.0, 0.5, 77).unwrap().population;
        let t = truncate(&pop, compute_theta(pe, &pop).unwrap());
        let trials = 10_000;
        let misses = (0..trials)
            .filter(|&s| {
                let v = pop.sample_defectivity(seed::derive(1, &[s]));
                t.discarded.iter().any(|&i| v.is_defective(i))
            })
            .count();
        let freq = misses as f64 / trials as f64;
        assert!(freq <= pe / 2.0 + 3.0 * (pe / (2.0 * trials as f64)).sqrt(), "{freq}");
    }

    proptest! {
        #[test]
        fn rho_bounds_hold(seed in any::<u64>(), alpha in 0.05f64..5.0, pe in 0.01f64..0.99) {
            let pop = sample_dirichlet_priors(300, 6.0, alpha, seed).unwrap().population;
            let stats = pop.stats();
            let theta = compute_theta(pe, &pop).unwrap();
            let t = truncate(&pop, theta);
            prop_assert!(t.rho <= pe / 2.0 + 1e-12);
            prop_assert!(t.rho <= pop.len() as f64 * theta + 1e-12);
            prop_assert!(t.rho <= stats.entropy_bits / (-theta.log2()) + 1e-12);
            prop_assert_eq!(t.kept.len() + t.discarded.len(), pop.len());
            for &i in &t.discarded { prop_assert!(pop.prob(i) <= theta); }
            for &i in &t.kept { prop_assert!(pop.prob(i) > theta); }
        }

        #[test]
        fn kept_monotone_in_theta(seed in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
            let pop = sample_dirichlet_priors(100, 4.0, 1.0, seed).unwrap().population;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let k_lo = truncate(&pop, lo).kept;
            let k_hi = truncate(&pop, hi).kept;
            prop_assert!(k_hi.iter().all(|i| k_lo.contains(i)));
        }
    }
}
