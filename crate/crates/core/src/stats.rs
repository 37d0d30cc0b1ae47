//! Monte Carlo reductions and goodness-of-fit tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{precondition, Error, Result};
use crate::numerics::{compensated_sum, kolmogorov_q, ks_asymptotic_pvalue};

/// Probability levels reported in [`MonteCarloSummary::quantiles`].
pub const QUANTILE_LEVELS: [f64; 5] = [0.005, 0.025, 0.5, 0.975, 0.995];

/// Moments and quantiles of a scalar functional over Monte Carlo draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    /// Draws attempted, retained plus excluded.
    pub n_samples: usize,
    /// Draws dropped because the functional was undefined (collapse, stopping).
    pub n_excluded: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub stderr: f64,
    /// Values at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
}

impl MonteCarloSummary {
    pub fn n_retained(&self) -> usize {
        self.n_samples - self.n_excluded
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }

    /// `(mean - target) / stderr`; infinite when the summary is degenerate.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = self.mean - target;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        }
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain { what: "Monte Carlo sample", value: *bad });
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of at least two finite samples.
pub fn summarize(samples: &[f64]) -> Result<MonteCarloSummary> {
    summarize_with_exclusions(samples, 0)
}

/// Like [`summarize`], recording `n_excluded` draws that produced no value.
pub fn summarize_with_exclusions(retained: &[f64], n_excluded: usize) -> Result<MonteCarloSummary> {
    precondition(retained.len() >= 2, || {
        format!("need at least 2 retained samples, got {}", retained.len())
    })?;
    // Sorting first fixes the summation order, so the result is exactly
    // invariant under permutation of the input.
    let sorted = sorted_finite(retained)?;
    let n = sorted.len() as f64;
    let mean = compensated_sum(sorted.iter().copied()) / n;
    let variance = compensated_sum(sorted.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    let quantiles = QUANTILE_LEVELS.map(|p| quantile_sorted(&sorted, p));
    Ok(MonteCarloSummary {
        n_samples: retained.len() + n_excluded,
        n_excluded,
        mean,
        variance,
        stderr: (variance / n).sqrt(),
        quantiles,
    })
}

/// Reference distribution for [`ks_test`].
#[derive(Debug, Clone, PartialEq)]
pub enum KsReference {
    Normal { mean: f64, sd: f64 },
    /// Law of `exp(N(mu, sigma^2))`; samples are log-transformed.
    LogNormal { mu: f64, sigma: f64 },
    /// Two-sample test against another sample.
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    #[serde(rename = "D")]
    pub statistic: f64,
    #[serde(rename = "p")]
    pub p_value: f64,
    #[serde(skip_serializing, default)]
    pub n: usize,
}

fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}

fn one_sample_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

fn two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Kolmogorov-Smirnov test of `samples` against `reference` with the
/// asymptotic p-value; needs at least 35 samples on each side.
pub fn ks_test(samples: &[f64], reference: &KsReference) -> Result<KsResult> {
    let n = samples.len();
    if n < 35 {
        return Err(Error::Unsupported(format!("KS test needs at least 35 samples, got {n}")));
    }
    let sorted = sorted_finite(samples)?;
    match reference {
        KsReference::Normal { mean, sd } => {
            if !(*sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                return Err(Error::Unsupported(format!("normal reference N({mean}, {sd}^2)")));
            }
            let d = one_sample_statistic(&sorted, |x| normal_cdf(x, *mean, *sd));
            Ok(KsResult { statistic: d, p_value: ks_asymptotic_pvalue(d, n)?, n })
        }
        KsReference::LogNormal { mu, sigma } => {
            if sorted[0] <= 0.0 {
                return Err(Error::Domain { what: "lognormal KS sample", value: sorted[0] });
            }
            let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
            ks_test(&logs, &KsReference::Normal { mean: *mu, sd: *sigma })
        }
        KsReference::Empirical(other) => {
            if other.len() < 35 {
                return Err(Error::Unsupported(format!(
                    "empirical reference needs at least 35 samples, got {}",
                    other.len()
                )));
            }
            let other = sorted_finite(other)?;
            let d = two_sample_statistic(&sorted, &other);
            let (n1, n2) = (n as f64, other.len() as f64);
            let n_eff = n1 * n2 / (n1 + n2);
            Ok(KsResult { statistic: d, p_value: kolmogorov_q(n_eff.sqrt() * d), n })
        }
    }
}

/// Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct GaussianKde {
    samples: Vec<f64>,
    bandwidth: f64,
}

impl GaussianKde {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (self.samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        norm * compensated_sum(self.samples.iter().map(|s| {
            let u = (x - s) / h;
            (-0.5 * u * u).exp()
        }))
    }

    pub fn evaluate(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.density(x)).collect()
    }
}

/// Builds a [`GaussianKde`]. Without an explicit bandwidth the rule
/// `0.9 min(sd, IQR/1.34) n^{-1/5}` is used.
pub fn gaussian_kde(samples: &[f64], bandwidth: Option<f64>) -> Result<GaussianKde> {
    let summary = summarize(samples)?;
    let sd = summary.variance.sqrt();
    if sd == 0.0 {
        return Err(Error::Precondition("KDE of zero-variance samples".into()));
    }
    let bandwidth = match bandwidth {
        Some(h) => {
            precondition(h > 0.0 && h.is_finite(), || format!("bandwidth {h} must be positive"))?;
            h
        }
        None => {
            let sorted = sorted_finite(samples)?;
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * (samples.len() as f64).powf(-0.2)
        }
    };
    Ok(GaussianKde { samples: samples.to_vec(), bandwidth })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: usize, n: usize, level: f64) -> Result<(f64, f64)> {
    precondition(n > 0, || "Wilson interval needs n > 0".into())?;
    precondition(successes <= n, || format!("{successes} successes out of {n}"))?;
    precondition(level > 0.0 && level < 1.0, || format!("confidence level {level}"))?;
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}
