//! Item populations with independent defectivity priors.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::seed;

/// Binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `-p log2 p`, zero at `p = 0`.
pub fn self_information_mass(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// An ordered population of items, item `i` being defective independently
/// with probability `probs[i]`. Item identity is the 0-based position.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationStats {
    /// Expected number of defectives, `sum p_i`.
    pub mu: f64,
    /// `H(U) = sum h(p_i)` in bits.
    pub entropy_bits: f64,
}

impl Population {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidProbability {
                position: i + 1,
                value: p,
            });
        }
        Ok(Population { probs })
    }

    /// Parse one probability per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut probs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let p: f64 = line
                .parse()
                .map_err(|_| Error::param(format!("line {}: cannot parse {line:?} as a probability", lineno + 1)))?;
            probs.push(p);
        }
        Population::new(probs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Population::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, item: usize) -> f64 {
        self.probs[item]
    }

    pub fn stats(&self) -> PopulationStats {
        let mu = self.probs.iter().sum();
        let entropy_bits = self.probs.iter().map(|&p| binary_entropy(p)).sum();
        PopulationStats { mu, entropy_bits }
    }

    /// Independent Bernoulli draw of the hidden defectivity vector.
    pub fn sample_defectivity(&self, seed: u64) -> DefectivityVector {
        let mut rng = seed::rng(seed);
        let bits = self.probs.iter().map(|&p| rng.random::<f64>() < p).collect();
        DefectivityVector { bits, seed }
    }
}

/// Priors drawn by [`sample_dirichlet_priors`], with the number of entries
/// that had to be clipped at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPriors {
    pub population: Population,
    pub clipped: usize,
}

/// Draw `w ~ Dirichlet(alpha, ..., alpha)` on `n` coordinates and set
/// `p_i = min(mu * w_i, 1)`.
pub fn sample_dirichlet_priors(n: usize, mu: f64, alpha: f64, seed: u64) -> Result<DirichletPriors> {
    if n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::param(format!("mu must be positive, got {mu}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be positive, got {alpha}")));
    }
    let weights = dirichlet_weights(n, alpha, seed)?;
    let mut clipped = 0;
    let probs = weights
        .into_iter()
        .map(|w| {
            let p = mu * w;
            if p > 1.0 {
                clipped += 1;
                1.0
            } else {
                p
            }
        })
        .collect();
    Ok(DirichletPriors {
        population: Population::new(probs)?,
        clipped,
    })
}

/// Symmetric Dirichlet via normalised Gamma(alpha, 1) draws.
pub fn dirichlet_weights(n: usize, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::param(format!(
            "Dirichlet draw degenerated (alpha = {alpha} too small for n = {n})"
        )));
    }
    draws.iter_mut().for_each(|w| *w /= total);
    Ok(draws)
}

/// A realised defectivity vector and the seed it was drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectivityVector {
    pub bits: Vec<bool>,
    pub seed: u64,
}

impl DefectivityVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        DefectivityVector { bits, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_defective(&self, item: usize) -> bool {
        self.bits[item]
    }

    pub fn defectives(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn make_population() {
        assert_eq!(Population::new(vec![0.5, 0.5]).unwrap().len(), 2);
        assert_eq!(Population::new(vec![]), Err(Error::EmptyPopulation));
        assert_eq!(
            Population::new(vec![0.5, 1.2]),
            Err(Error::InvalidProbability {
                position: 2,
                value: 1.2
            })
        );
        assert!(Population::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = Population::new(vec![0.5; 10]).unwrap().stats();
        assert!(close(s.mu, 5.0, 1e-12) && close(s.entropy_bits, 10.0, 1e-12));

        let s = Population::new(vec![1.0; 7]).unwrap().stats();
        assert_eq!((s.mu, s.entropy_bits), (7.0, 0.0));

        // h(0.25) = 0.25*2 + 0.75*log2(4/3)
        let h_quarter = 0.5 + 0.75 * (4.0f64 / 3.0).log2();
        assert!(close(h_quarter, 0.811278, 1e-6));
        let s = Population::new(vec![0.5, 0.25]).unwrap().stats();
        assert!(close(s.mu, 0.75, 1e-12));
        assert!(close(s.entropy_bits, 1.81128, 1e-5));
    }

    #[test]
    fn entropy_zero_iff_deterministic() {
        let s = Population::new(vec![0.0, 1.0, 0.0]).unwrap().stats();
        assert_eq!(s.entropy_bits, 0.0);
        let s = Population::new(vec![0.0, 1.0, 1e-9]).unwrap().stats();
        assert!(s.entropy_bits > 0.0);
    }

    #[test]
    fn dirichlet_single_item() {
        let d = sample_dirichlet_priors(1, 0.3, 1.0, 7).unwrap();
        assert_eq!(d.population.probs(), &[0.3]);
        assert_eq!(d.clipped, 0);
    }

    #[test]
    fn dirichlet_n500_sums_to_mu() {
        let d = sample_dirichlet_priors(500, 8.0, 1.0, 11).unwrap();
        let mu = d.population.stats().mu;
        if d.clipped == 0 {
            assert!(close(mu, 8.0, 1e-9), "mu = {mu}");
        } else {
            assert!(mu < 8.0);
        }
    }

    #[test]
    fn dirichlet_concentrated_alpha() {
        let d = sample_dirichlet_priors(4, 2.0, 10.0, 3).unwrap();
        let p = d.population.probs();
        assert_eq!(d.clipped, 0);
        assert!(close(p.iter().sum::<f64>(), 2.0, 1e-12));
        let max = p.iter().cloned().fold(f64::MIN, f64::max);
        let min = p.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 4.0, "ratio {}", max / min);
    }

    #[test]
    fn dirichlet_rejects_bad_params() {
        assert!(sample_dirichlet_priors(0, 1.0, 1.0, 0).is_err());
        assert!(sample_dirichlet_priors(3, 0.0, 1.0, 0).is_err());
        assert!(sample_dirichlet_priors(3, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn dirichlet_moments() {
        // mean 1/n and variance (n-1)/(n^2 (n alpha + 1)) per coordinate
        let (n, alpha, draws) = (4usize, 10.0, 100_000u64);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for s in 0..draws {
            let w = dirichlet_weights(n, alpha, seed::derive(99, &[s])).unwrap()[0];
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        let nf = n as f64;
        let want_var = (nf - 1.0) / (nf * nf * (nf * alpha + 1.0));
        assert!(close(mean, 0.25, 4.0 * (want_var / draws as f64).sqrt()));
        assert!((var / want_var - 1.0).abs() < 0.03, "var {var} vs {want_var}");
    }

    #[test]
    fn dirichlet_two_coords_uniform_ks() {
        let draws = 100_000usize;
        let mut xs: Vec<f64> = (0..draws)
            .map(|s| dirichlet_weights(2, 1.0, seed::derive(5, &[s as u64])).unwrap()[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = i as f64 / draws as f64;
                let hi = (i + 1) as f64 / draws as f64;
                (x - lo).abs().max((hi - x).abs())
            })
            .fold(0.0, f64::max);
        // K-S critical value at significance 1e-3: sqrt(-ln(0.0005)/2)/sqrt(n)
        let crit = ((-(0.0005f64).ln()) / 2.0).sqrt() / (draws as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn defectivity_extremes_and_rate() {
        let zero = Population::new(vec![0.0; 50]).unwrap().sample_defectivity(1);
        assert_eq!(zero.count(), 0);
        let one = Population::new(vec![1.0; 50]).unwrap().sample_defectivity(1);
        assert_eq!(one.count(), 50);

        let pop = Population::new(vec![0.3; 10_000]).unwrap();
        let v = pop.sample_defectivity(12345);
        let rate = v.count() as f64 / 1e4;
        assert!(close(rate, 0.3, 3.0 * (0.3f64 * 0.7 / 1e4).sqrt()));
        assert_eq!(v, pop.sample_defectivity(12345));
    }

    #[test]
    fn parse_text() {
        let pop = Population::parse("0.5\n# comment\n\n0.25 # trailing\n").unwrap();
        assert_eq!(pop.probs(), &[0.5, 0.25]);
        assert!(Population::parse("0.5\nabc\n").is_err());
    }
}
