//! Statistics shared by the experiments: chi-square goodness of fit, Wilson
//! intervals, the exact law of a sum of geometric variables, and total
//! variation distances.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{usage, Result};

/// Observed counts over integer-coded outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    outcomes: Vec<i64>,
    counts: Vec<u64>,
}

impl FrequencyTable {
    pub fn new(outcomes: Vec<i64>, counts: Vec<u64>) -> Result<Self> {
        if outcomes.len() != counts.len() {
            return Err(usage("frequency-table", "outcomes and counts differ in length"));
        }
        Ok(FrequencyTable { outcomes, counts })
    }

    /// Table over outcomes `0..bins` with zero counts.
    pub fn with_bins(bins: usize) -> Self {
        FrequencyTable {
            outcomes: (0..bins as i64).collect(),
            counts: vec![0; bins],
        }
    }

    /// Counts the samples; every sample must be `< bins`.
    pub fn from_samples(bins: usize, samples: impl IntoIterator<Item = usize>) -> Self {
        let mut t = Self::with_bins(bins);
        for s in samples {
            t.counts[s] += 1;
        }
        t
    }

    pub fn record(&mut self, bin: usize) {
        self.counts[bin] += 1;
    }

    pub fn outcomes(&self) -> &[i64] {
        &self.outcomes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &FrequencyTable) {
        assert_eq!(self.outcomes, other.outcomes, "merging tables over different outcomes");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// A probability law on a finite set of integers.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<i64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        if support.len() != probs.len() || support.is_empty() {
            return Err(usage("distribution", "support and probabilities must be nonempty and aligned"));
        }
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(usage("distribution", "probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(usage("distribution", format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteDistribution { support, probs })
    }

    pub fn uniform(bins: usize) -> Self {
        DiscreteDistribution {
            support: (0..bins as i64).collect(),
            probs: vec![1.0 / bins as f64; bins],
        }
    }

    /// Geometric law on `{1, 2, ...}` with the tail `>= max` lumped into the last bin.
    pub fn geometric_truncated(p: f64, max: i64) -> Self {
        assert!(p > 0.0 && p <= 1.0 && max >= 1);
        let mut probs = Vec::with_capacity(max as usize);
        let mut tail = 1.0;
        for _ in 1..max {
            let mass = tail * p;
            probs.push(mass);
            tail -= mass;
        }
        probs.push((1.0 - p).powi(max as i32 - 1));
        let total: f64 = probs.iter().sum();
        for q in &mut probs {
            *q /= total;
        }
        DiscreteDistribution {
            support: (1..=max).collect(),
            probs,
        }
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Pearson goodness-of-fit test of `observed` against `expected`.
///
/// Adjacent bins are merged, left to right, until every merged bin has an
/// expected count of at least 5.
pub fn chi_square_test(observed: &FrequencyTable, expected: &DiscreteDistribution) -> Result<ChiSquare> {
    if observed.outcomes != expected.support {
        return Err(usage("chi-square-support", "observed outcomes do not match the expected support"));
    }
    let total = observed.total();
    if total == 0 {
        return Err(usage("chi-square-degenerate", "no observations"));
    }
    let n = total as f64;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&o, &p) in observed.counts.iter().zip(&expected.probs) {
        acc.0 += o as f64;
        acc.1 += p * n;
        if acc.1 >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => bins.push(acc),
        }
    }
    if bins.len() < 2 {
        return Err(usage("chi-square-degenerate", "fewer than two bins after merging"));
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else { f64::INFINITY })
        .sum();
    let dof = bins.len() - 1;
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
    })
}

/// Survival function of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if !x.is_finite() {
        return 0.0;
    }
    ChiSquared::new(dof as f64).expect("dof >= 1").sf(x)
}

pub fn chi_square_quantile(prob: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).expect("dof >= 1").inverse_cdf(prob)
}

pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// `P(G_1 + ... + G_count <= t)` for i.i.d. geometric variables on `{1, 2, ...}`
/// with success probability `p`.
///
/// Runs the negative-binomial recursion `P(S_k = s) = p P(S_{k-1} = s-1) +
/// (1-p) P(S_k = s-1)` over `s <= t`.
pub fn geometric_sum_cdf(p: f64, count: u32, t: i64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "geometric parameter must lie in (0, 1)");
    assert!(count >= 1);
    if t < i64::from(count) {
        return 0.0;
    }
    let t = t as usize;
    let q = 1.0 - p;
    // prev[s] = P(S_{k-1} = s); S_0 = 0.
    let mut prev = vec![0.0; t + 1];
    prev[0] = 1.0;
    let mut cur = vec![0.0; t + 1];
    for _ in 0..count {
        cur[0] = 0.0;
        for s in 1..=t {
            cur[s] = p * prev[s - 1] + q * cur[s - 1];
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev.iter().sum::<f64>().min(1.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials >= 1 && successes <= trials);
    assert!(level > 0.0 && level < 1.0);
    let z = normal_quantile(0.5 + level / 2.0);
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Binomial standard error `sqrt(p (1 - p) / n)`.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `(1/2) sum |phat - p|` between an empirical table and a reference law.
pub fn tv_distance(empirical: &FrequencyTable, reference: &DiscreteDistribution) -> Result<f64> {
    if empirical.outcomes != reference.support {
        return Err(usage("tv-support", "empirical outcomes do not match the reference support"));
    }
    if empirical.total() == 0 {
        return Err(usage("tv-degenerate", "empty table"));
    }
    let d = empirical
        .frequencies()
        .iter()
        .zip(&reference.probs)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    Ok(d.clamp(0.0, 1.0))
}

/// One-sample Kolmogorov-Smirnov test of samples against Uniform(0, 1).
/// Returns `(D, p_value)` using the asymptotic Kolmogorov law with the
/// Stephens small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let above = (k as f64 + 1.0) / n - x;
            let below = x - k as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    (d, kolmogorov_sf(lambda))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
