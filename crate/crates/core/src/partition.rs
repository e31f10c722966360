//! Geometric binning of retained items and greedy splitting of each bin
//! into search sets.
//!
//! Bin 0 holds `p >= 1/2`; bin `r >= 1` holds `p` in
//! `[1/(2 gamma^r), 1/(2 gamma^(r-1)))`. Items of bin 0 become singleton
//! sets. Every other bin is sorted by descending probability (ties by
//! ascending index) and packed into consecutive sets, each closed as soon as
//! its mass reaches the fullness threshold. Only the last set of a bin can
//! be non-full.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::priors::Population;

pub const DEFAULT_FULLNESS: f64 = 0.5;

/// `log2 gamma = sqrt(-log2(2 theta) / mu)`, the minimiser of
/// `-log2(2 theta) / log2 gamma + mu log2 gamma`.
pub fn optimal_gamma(mu: f64, theta: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param(format!("mu must be positive, got {mu}")));
    }
    if !(theta > 0.0 && theta < 0.5) {
        return Err(Error::param(format!("theta must lie in (0, 1/2), got {theta}")));
    }
    Ok((-(2.0 * theta).log2() / mu).sqrt().exp2())
}

/// `-log2(2 theta) / log2 gamma + mu log2 gamma`.
pub fn gamma_tradeoff(mu: f64, theta: f64, gamma: f64) -> f64 {
    let lg = gamma.log2();
    -(2.0 * theta).log2() / lg + mu * lg
}

fn bin_lower(r: u32, gamma: f64) -> f64 {
    0.5 / gamma.powi(r as i32)
}

pub fn bin_index(p: f64, gamma: f64) -> Result<u32> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidProbability { position: 0, value: p });
    }
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::param(format!("binning needs gamma > 1, got {gamma}")));
    }
    if p >= 0.5 {
        return Ok(0);
    }
    let estimate = ((0.5 / p).ln() / gamma.ln()).ceil();
    let mut r = estimate.clamp(1.0, i32::MAX as f64) as u32;
    // Correct floating-point error so that lower(r) <= p < lower(r - 1).
    while bin_lower(r, gamma) > p {
        r += 1;
    }
    while r > 1 && p >= bin_lower(r - 1, gamma) {
        r -= 1;
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSet {
    pub id: usize,
    pub bin: u32,
    /// Item indices in packing order.
    pub items: Vec<usize>,
    /// Probabilities aligned with `items`.
    pub probs: Vec<f64>,
    pub total_prob: f64,
    pub full: bool,
}

impl SearchSet {
    /// Build a set directly from items of `pop`, outside of any binning.
    pub fn from_items(id: usize, pop: &Population, items: Vec<usize>, fullness: f64) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::DegenerateSet);
        }
        let probs: Vec<f64> = items.iter().map(|&i| pop.prob(i)).collect();
        let total_prob = probs.iter().sum();
        Ok(SearchSet {
            id,
            bin: 0,
            items,
            probs,
            total_prob,
            full: total_prob >= fullness,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        let max = self.probs.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.probs.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// `h(S) = -sum p_j log2 p_j`.
    pub fn self_information(&self) -> f64 {
        self.probs
            .iter()
            .map(|&p| crate::priors::self_information_mass(p))
            .sum()
    }

    /// Fails if `max p / min p > gamma` (up to rounding).
    pub fn check_ratio(&self, gamma: f64) -> Result<()> {
        let ratio = self.ratio();
        if ratio > gamma * (1.0 + 1e-12) {
            return Err(Error::RatioViolated { ratio, gamma });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinLayout {
    pub gamma: f64,
    /// Non-empty bins in ascending index, with item indices in packing order.
    pub bins: Vec<(u32, Vec<usize>)>,
    /// Index of the last non-empty bin (0 if there are none).
    pub last_bin: u32,
}

impl BinLayout {
    /// `-log2(2 theta) / log2 gamma + 1`; an upper bound on `last_bin` when
    /// every binned item exceeds `theta`.
    pub fn bin_count_bound(theta: f64, gamma: f64) -> f64 {
        -(2.0 * theta).log2() / gamma.log2() + 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    pub layout: BinLayout,
    pub fullness: f64,
    pub sets: Vec<SearchSet>,
}

impl PartitionResult {
    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    pub fn full_count(&self) -> usize {
        self.sets.iter().filter(|s| s.full).count()
    }

    pub fn item_count(&self) -> usize {
        self.sets.iter().map(SearchSet::len).sum()
    }

    /// Rows `set_id,bin,item_id,p_i` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("set_id,bin,item_id,p_i\n");
        for set in &self.sets {
            for (&item, &p) in set.items.iter().zip(&set.probs) {
                let _ = writeln!(out, "{},{},{},{}", set.id, set.bin, item, p);
            }
        }
        out
    }
}

pub fn bin_items(pop: &Population, kept: &[usize], gamma: f64) -> Result<BinLayout> {
    let mut keyed = Vec::with_capacity(kept.len());
    for &item in kept {
        let p = pop.prob(item);
        let r = bin_index(p, gamma).map_err(|e| match e {
            Error::InvalidProbability { value, .. } => Error::InvalidProbability {
                position: item + 1,
                value,
            },
            other => other,
        })?;
        keyed.push((r, item, p));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(b.2.total_cmp(&a.2)).then(a.1.cmp(&b.1)));

    let mut bins: Vec<(u32, Vec<usize>)> = Vec::new();
    for (r, item, _) in keyed {
        match bins.last_mut() {
            Some((last, items)) if *last == r => items.push(item),
            _ => bins.push((r, vec![item])),
        }
    }
    let last_bin = bins.last().map_or(0, |(r, _)| *r);
    Ok(BinLayout { gamma, bins, last_bin })
}

pub fn partition(pop: &Population, kept: &[usize], gamma: f64, fullness: f64) -> Result<PartitionResult> {
    if !(fullness > 0.0 && fullness <= 0.5) {
        return Err(Error::param(format!("fullness must lie in (0, 1/2], got {fullness}")));
    }
    let layout = bin_items(pop, kept, gamma)?;
    let mut sets: Vec<SearchSet> = Vec::new();
    let mut push = |bin: u32, items: Vec<usize>| {
        let probs: Vec<f64> = items.iter().map(|&i| pop.prob(i)).collect();
        let total_prob: f64 = probs.iter().sum();
        sets.push(SearchSet {
            id: sets.len(),
            bin,
            items,
            probs,
            total_prob,
            full: total_prob >= fullness,
        });
    };

    for (r, items) in &layout.bins {
        if *r == 0 {
            for &item in items {
                push(0, vec![item]);
            }
            continue;
        }
        let mut current = Vec::new();
        let mut mass = 0.0;
        for &item in items {
            current.push(item);
            mass += pop.prob(item);
            if mass >= fullness {
                push(*r, std::mem::take(&mut current));
                mass = 0.0;
            }
        }
        if !current.is_empty() {
            push(*r, current);
        }
    }

    Ok(PartitionResult { layout, fullness, sets })
}
