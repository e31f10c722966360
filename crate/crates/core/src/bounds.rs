//! Closed-form test-count and success-probability bounds.
//!
//! All logarithms are base 2 and all entropies are in bits.

use crate::codetree::CodeTree;
use crate::error::{Error, Result};
use crate::partition::SearchSet;
use crate::priors::{Population, PopulationStats};
use crate::search::SearchPlan;

/// Expected-test bound for one set satisfying the ratio condition with `gamma`:
/// `h(S) + P_S log2 gamma + P_S log2 P_S + P_S + 1`.
pub fn t_bd_set(set: &SearchSet, gamma: f64) -> Result<f64> {
    if !(set.total_prob > 0.0) {
        return Err(Error::DegenerateSet);
    }
    set.check_ratio(gamma)?;
    let ps = set.total_prob;
    Ok(set.self_information() + ps * gamma.log2() + ps * ps.log2() + ps + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBound {
    /// `H + 3 mu + 1 + 2 sqrt(mu (-log2(2 theta)))`.
    pub value: f64,
    /// `H + 3 mu + 1`.
    pub base: f64,
    /// `2 sqrt(mu (-log2(2 theta)))`, the optimised gamma trade-off term.
    pub tradeoff: f64,
}

pub fn t_bd_global(stats: &PopulationStats, theta: f64) -> Result<GlobalBound> {
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::param(format!("theta must lie in (0, 1/2), got {theta}")));
    }
    let base = stats.entropy_bits + 3.0 * stats.mu + 1.0;
    let tradeoff = 2.0 * (stats.mu * -(2.0 * theta).log2()).sqrt();
    Ok(GlobalBound {
        value: base + tradeoff,
        base,
        tradeoff,
    })
}

/// Bernstein-based quantities for a built plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub entropy_bits: f64,
    pub mu: f64,
    pub theta: f64,
    pub t_bd: f64,
    /// `sum l_j^2 p_j (1 - p_j)` over retained items, from realised depths.
    pub variance_proxy: f64,
    /// `-log2 theta + 1`.
    pub length_cap: f64,
    /// `(L / (4 M^2))^(-1/3)`.
    pub psi: f64,
    /// `T_bd + psi H`.
    pub t_nec: f64,
    /// `1 - sqrt(mu/H)/2 - exp(-(L/(4M^2))^(1/3))`; may be negative.
    pub success_lb: f64,
    /// `2 H + 2 mu`.
    pub laminar_bd: f64,
    /// `H / T_nec` in bits per test.
    pub capacity_ratio: f64,
}

impl BoundsReport {
    /// Whether the success lower bound says anything (is positive).
    pub fn success_lb_valid(&self) -> bool {
        self.success_lb > 0.0
    }

    /// Upper bound on success probability for any algorithm using `tests` tests.
    pub fn converse_ub(&self, tests: f64) -> f64 {
        success_upper_bound(tests, self.entropy_bits)
    }

    /// Terms of `T_nec / H = 1 + 3 mu/H + 1/H + 2 (mu/H)^(1/4) + psi`.
    pub fn capacity_terms(&self) -> CapacityTerms {
        let r = self.mu / self.entropy_bits;
        CapacityTerms {
            sparsity: 3.0 * r,
            constant: 1.0 / self.entropy_bits,
            threshold: 2.0 * r.powf(0.25),
            psi: self.psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityTerms {
    pub sparsity: f64,
    pub constant: f64,
    pub threshold: f64,
    pub psi: f64,
}

impl CapacityTerms {
    pub fn total(&self) -> f64 {
        1.0 + self.sparsity + self.constant + self.threshold + self.psi
    }
}

/// `sum l_j^2 p_j (1 - p_j)` over every leaf of every tree.
pub fn variance_proxy(trees: &[CodeTree]) -> f64 {
    trees
        .iter()
        .flat_map(|t| t.probs.iter().zip(&t.lengths))
        .map(|(&p, &l)| (l as f64).powi(2) * p * (1.0 - p))
        .sum()
}

pub fn bernstein_report(plan: &SearchPlan, pop: &Population) -> Result<BoundsReport> {
    if plan.retained_items() == 0 {
        return Err(Error::DegeneratePartition);
    }
    let stats = pop.stats();
    let theta = plan.theta;
    let t_bd = t_bd_global(&stats, theta)?.value;
    let h = stats.entropy_bits;
    let l = variance_proxy(&plan.trees);
    let m = -theta.log2() + 1.0;
    let phi = l / (4.0 * m * m);
    let psi = phi.powf(-1.0 / 3.0);
    let t_nec = t_bd + psi * h;
    let success_lb = 1.0 - 0.5 * (stats.mu / h).sqrt() - (-phi.cbrt()).exp();
    Ok(BoundsReport {
        entropy_bits: h,
        mu: stats.mu,
        theta,
        t_bd,
        variance_proxy: l,
        length_cap: m,
        psi,
        t_nec,
        success_lb,
        laminar_bd: laminar_bound(h, stats.mu),
        capacity_ratio: h / t_nec,
    })
}

/// `sum_j T_bd(S_j)` over the plan's sets.
pub fn sum_set_bounds(plan: &SearchPlan) -> Result<f64> {
    plan.partition.sets.iter().map(|s| t_bd_set(s, plan.gamma)).sum()
}

/// `min(1, T / H)`.
pub fn success_upper_bound(tests: f64, entropy_bits: f64) -> f64 {
    if entropy_bits <= 0.0 {
        return 1.0;
    }
    (tests / entropy_bits).clamp(0.0, 1.0)
}

/// Smallest budget compatible with success probability `1 - eps`: `(1 - eps) H`.
pub fn entropy_budget_lower(entropy_bits: f64, eps: f64) -> f64 {
    (1.0 - eps) * entropy_bits
}

pub fn laminar_bound(entropy_bits: f64, mu: f64) -> f64 {
    2.0 * entropy_bits + 2.0 * mu
}

pub fn log2_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).log2()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBounds {
    /// `min(1, T/H)`.
    pub converse_ub: f64,
    /// `min(1, 2^T / C(N, K))`.
    pub comb_ub: f64,
    pub laminar_bd: f64,
}

pub fn reference_bounds(tests: f64, entropy_bits: f64, mu: f64, n: u64, k: u64) -> Result<ReferenceBounds> {
    if k > n {
        return Err(Error::param(format!("K = {k} exceeds N = {n}")));
    }
    if !(tests >= 0.0) || !(entropy_bits > 0.0) {
        return Err(Error::param("need T >= 0 and H > 0"));
    }
    let comb_ub = (tests - log2_binomial(n, k)).exp2().min(1.0);
    Ok(ReferenceBounds {
        converse_ub: success_upper_bound(tests, entropy_bits),
        comb_ub,
        laminar_bd: laminar_bound(entropy_bits, mu),
    })
}

/// Coefficient of `mu` when every `p_i <= cap` and sets close at mass
/// `fullness`: `log2(fullness + cap) + 1 + 1/fullness + (1 - cap) log2(1 - cap)`.
pub fn coefficient_f(fullness: f64, cap: f64) -> Result<f64> {
    if !(fullness > 0.0 && fullness <= 1.0) {
        return Err(Error::param(format!("fullness must lie in (0, 1], got {fullness}")));
    }
    if !(cap > 0.0 && cap <= 0.5) {
        return Err(Error::param(format!("cap must lie in (0, 1/2], got {cap}")));
    }
    Ok((fullness + cap).log2() + 1.0 + 1.0 / fullness + (1.0 - cap) * (1.0 - cap).log2())
}

/// Grid minimiser of [`coefficient_f`] over `fullness in (0, 1]` with spacing `step`.
pub fn optimal_fullness(cap: f64, step: f64) -> Result<(f64, f64)> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::param("step must lie in (0, 1)"));
    }
    let points = (1.0 / step).floor() as u64;
    let mut best = (1.0, coefficient_f(1.0, cap)?);
    for i in 1..=points {
        let a = i as f64 * step;
        if a > 1.0 {
            break;
        }
        let v = coefficient_f(a, cap)?;
        if v < best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::SearchSet;
    use proptest::prelude::*;

    fn set_of(probs: &[f64]) -> SearchSet {
        let total = probs.iter().sum();
        SearchSet {
            id: 0,
            bin: 1,
            items: (0..probs.len()).collect(),
            probs: probs.to_vec(),
            total_prob: total,
            full: total >= 0.5,
        }
    }

    #[test]
    fn t_bd_set_examples() {
        assert!((t_bd_set(&set_of(&[0.5]), 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((t_bd_set(&set_of(&[0.25, 0.25]), 1.0).unwrap() - 2.0).abs() < 1e-12);
        // P_S = 1: the P log P term vanishes
        let s = set_of(&[0.5, 0.5]);
        let want = s.self_information() + 0.0 + 0.0 + 1.0 + 1.0;
        assert!((t_bd_set(&s, 1.0).unwrap() - want).abs() < 1e-12);
        assert!(t_bd_set(&set_of(&[0.4, 0.1]), 2.0).is_err());
    }

    #[test]
    fn t_bd_global_example() {
        let stats = PopulationStats {
            mu: 8.0,
            entropy_bits: 20.0,
        };
        let b = t_bd_global(&stats, (-10f64).exp2()).unwrap();
        assert!((b.value - 61.9706).abs() < 1e-4);
        assert!((b.base - 45.0).abs() < 1e-12);
        let tiny = PopulationStats {
            mu: 1e-12,
            entropy_bits: 20.0,
        };
        assert!((t_bd_global(&tiny, 0.001).unwrap().value - 21.0).abs() < 1e-4);
        assert!(t_bd_global(&stats, 0.5).is_err());
    }

    #[test]
    fn reference_bound_examples() {
        let r = reference_bounds(20.0, 20.0, 8.0, 500, 8).unwrap();
        assert_eq!(r.converse_ub, 1.0);
        assert_eq!(r.laminar_bd, 56.0);
        let r = reference_bounds(0.0, 5.0, 2.0, 10, 2).unwrap();
        assert!((r.comb_ub - 1.0 / 45.0).abs() < 1e-15);
        assert!(reference_bounds(0.0, 5.0, 2.0, 10, 11).is_err());
        // no overflow at n = 500
        let big = log2_binomial(500, 250);
        assert!(big.is_finite() && big > 490.0);
    }

    #[test]
    fn coefficient_examples() {
        let f = coefficient_f(0.88824, 0.25).unwrap();
        assert!((f - 2.00135).abs() < 1e-4, "{f}");
        assert!((coefficient_f(0.5, 0.5).unwrap() - 2.5).abs() < 1e-12);
        let (arg, _) = optimal_fullness(0.25, 1e-5).unwrap();
        assert!((arg - 0.88824).abs() < 1e-3, "{arg}");
        assert!(coefficient_f(0.0, 0.25).is_err());
        assert!(coefficient_f(0.5, 0.6).is_err());
    }

    #[test]
    fn closed_form_variance_proxy() {
        // 256 items at p = 2^-4, depth 4 each
        let (n, p) = (256usize, 1.0 / 16.0);
        let tree = CodeTree::from_lengths(0, (0..n).collect(), vec![p; n], vec![8; n]).unwrap();
        let l8 = variance_proxy(std::slice::from_ref(&tree));
        assert!((l8 - n as f64 * p * (1.0 - p) * 64.0).abs() < 1e-9);
        let tree4 = CodeTree::from_lengths(0, (0..16).collect(), vec![p; 16], vec![4; 16]).unwrap();
        let sets = vec![tree4; 16];
        assert!((variance_proxy(&sets) - 240.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn t_bd_global_monotone(h in 0.0f64..500.0, mu in 0.01f64..50.0, dmu in 0.0f64..5.0, e in 1.5f64..20.0, de in 0.0f64..5.0) {
            let th = (-e).exp2();
            let th2 = (-(e + de)).exp2();
            let a = t_bd_global(&PopulationStats { mu, entropy_bits: h }, th).unwrap().value;
            let b = t_bd_global(&PopulationStats { mu: mu + dmu, entropy_bits: h }, th).unwrap().value;
            let c = t_bd_global(&PopulationStats { mu, entropy_bits: h }, th2).unwrap().value;
            prop_assert!(b >= a && c >= a);
        }

        #[test]
        fn converse_monotone(h in 0.1f64..100.0, t in 0.0f64..200.0, dt in 0.0f64..50.0) {
            prop_assert!(success_upper_bound(t + dt, h) >= success_upper_bound(t, h));
        }
    }
}
