//! Descriptive Gaussian mixture models of multi-return range
//! distributions.
//!
//! Clusters come from segmenting the sorted samples at CDF-value
//! thresholds (manual or gap-based); each cluster then contributes its
//! size fraction, mean, and population standard deviation. Non-returns
//! stay outside the mixture: the fitted model describes the returned mass
//! only, and comparisons against an empirical CDF rescale by its return
//! fraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecdf::EmpiricalCdf;

/// Spread assigned to clusters whose own spread is below resolution
/// (singletons, constant samples). Well under any real sensor dispersion.
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.005;

/// Default range gap that separates clusters in `auto_segment`.
pub const DEFAULT_MIN_GAP: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("CDF has no finite samples")]
    EmptyCdf,
    #[error("thresholds must be strictly ascending")]
    ThresholdsNotAscending,
    #[error("threshold {threshold} is not below the return fraction {return_fraction}")]
    InfeasibleThreshold {
        threshold: f64,
        return_fraction: f64,
    },
    #[error("cluster {index} is empty")]
    EmptyCluster { index: usize },
    #[error("cluster means must be strictly increasing")]
    NonIncreasingMeans,
    #[error("invalid mixture: {0}")]
    Invalid(String),
}

/// One mixture component. Serialized with the field names `alpha`, `mu`,
/// `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    #[serde(rename = "alpha")]
    pub weight: f64,
    #[serde(rename = "mu")]
    pub mean: f64,
    #[serde(rename = "sigma")]
    pub std_dev: f64,
}

/// A mixture of Gaussians with weights summing to one and strictly
/// increasing means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRecord", into = "MixtureRecord")]
pub struct GaussianMixture {
    clusters: Vec<GaussianComponent>,
}

#[derive(Serialize, Deserialize)]
struct MixtureRecord {
    clusters: Vec<GaussianComponent>,
}

impl From<GaussianMixture> for MixtureRecord {
    fn from(g: GaussianMixture) -> Self {
        MixtureRecord {
            clusters: g.clusters,
        }
    }
}

impl TryFrom<MixtureRecord> for GaussianMixture {
    type Error = MixtureError;
    fn try_from(record: MixtureRecord) -> Result<Self, MixtureError> {
        GaussianMixture::new(record.clusters)
    }
}

impl GaussianMixture {
    pub fn new(clusters: Vec<GaussianComponent>) -> Result<Self, MixtureError> {
        if clusters.is_empty() {
            return Err(MixtureError::Invalid("no clusters".into()));
        }
        let mut sum = 0.0;
        for c in &clusters {
            if c.weight <= 0.0 || !c.weight.is_finite() {
                return Err(MixtureError::Invalid(format!(
                    "weight must be positive, got {}",
                    c.weight
                )));
            }
            if c.std_dev <= 0.0 || !c.std_dev.is_finite() || !c.mean.is_finite() {
                return Err(MixtureError::Invalid(format!(
                    "component N({}, {}) is not a proper Gaussian",
                    c.mean, c.std_dev
                )));
            }
            sum += c.weight;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(MixtureError::Invalid(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        if clusters.windows(2).any(|w| w[0].mean >= w[1].mean) {
            return Err(MixtureError::NonIncreasingMeans);
        }
        Ok(GaussianMixture { clusters })
    }

    pub fn clusters(&self) -> &[GaussianComponent] {
        &self.clusters
    }

    /// Mixture density at `x`, per meter.
    pub fn pdf(&self, x: f64) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.weight * normal_pdf(x, c.mean, c.std_dev))
            .sum()
    }

    /// Mixture CDF at `x`: weighted sum of normal CDFs.
    pub fn cdf(&self, x: f64) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.weight * normal_cdf(x, c.mean, c.std_dev))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mixture serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MixtureError> {
        serde_json::from_str(text).map_err(|e| MixtureError::Invalid(e.to_string()))
    }
}

fn normal_pdf(x: f64, mean: f64, std_dev: f64) -> f64 {
    let z = (x - mean) / std_dev;
    (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
}

fn normal_cdf(x: f64, mean: f64, std_dev: f64) -> f64 {
    let z = (x - mean) / (std_dev * std::f64::consts::SQRT_2);
    0.5 * (1.0 + libm::erf(z))
}

/// Partition the finite samples at the first sample index whose cumulative
/// fraction exceeds each threshold. Returns `thresholds.len() + 1`
/// order-preserving clusters that concatenate back to the sorted samples.
pub fn segment_by_thresholds(
    cdf: &EmpiricalCdf,
    thresholds: &[f64],
) -> Result<Vec<Vec<f64>>, MixtureError> {
    let samples = cdf.samples();
    if samples.is_empty() {
        return Err(MixtureError::EmptyCdf);
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MixtureError::ThresholdsNotAscending);
    }
    let return_fraction = cdf.return_fraction();
    let total = cdf.total() as f64;
    let mut clusters = Vec::with_capacity(thresholds.len() + 1);
    let mut start = 0usize;
    for &threshold in thresholds {
        if threshold.is_nan() || threshold <= 0.0 || threshold >= return_fraction {
            return Err(MixtureError::InfeasibleThreshold {
                threshold,
                return_fraction,
            });
        }
        // first index whose cumulative fraction (i+1)/N exceeds the
        // threshold starts the next cluster
        let mut idx = start;
        while idx < samples.len() && (idx + 1) as f64 / total <= threshold {
            idx += 1;
        }
        clusters.push(samples[start..idx].to_vec());
        start = idx;
    }
    clusters.push(samples[start..].to_vec());
    Ok(clusters)
}

/// Scan consecutive sorted samples and place a threshold in every range
/// gap wider than `min_gap`, at the cumulative fraction of the lower
/// sample. No gaps means no thresholds.
pub fn auto_segment(cdf: &EmpiricalCdf, min_gap: f64) -> Vec<f64> {
    assert!(min_gap > 0.0, "min_gap must be positive");
    let samples = cdf.samples();
    let total = cdf.total() as f64;
    let mut thresholds = Vec::new();
    for (i, pair) in samples.windows(2).enumerate() {
        if pair[1] - pair[0] > min_gap {
            thresholds.push((i + 1) as f64 / total);
        }
    }
    thresholds
}

/// Fit one Gaussian per cluster: size-fraction weight, mean, population
/// standard deviation (raised to `sigma_floor` when smaller).
pub fn fit_gmm(clusters: &[Vec<f64>], sigma_floor: f64) -> Result<GaussianMixture, MixtureError> {
    if sigma_floor.is_nan() || sigma_floor <= 0.0 {
        return Err(MixtureError::Invalid(format!(
            "sigma floor must be positive, got {sigma_floor}"
        )));
    }
    let total: usize = clusters.iter().map(|c| c.len()).sum();
    let mut fitted = Vec::with_capacity(clusters.len());
    for (index, cluster) in clusters.iter().enumerate() {
        if cluster.is_empty() {
            return Err(MixtureError::EmptyCluster { index });
        }
        let n = cluster.len() as f64;
        let mean = cluster.iter().sum::<f64>() / n;
        let var = cluster.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        fitted.push(GaussianComponent {
            weight: n / total as f64,
            mean,
            std_dev: var.sqrt().max(sigma_floor),
        });
    }
    GaussianMixture::new(fitted)
}

/// Sup-norm disagreement between the model and an empirical CDF at the
/// empirical jump points; the model is rescaled by the return fraction so
/// both sides describe the same returned mass.
pub fn model_fit_error(g: &GaussianMixture, cdf: &EmpiricalCdf) -> f64 {
    assert!(!cdf.samples().is_empty(), "CDF has no finite samples");
    let rf = cdf.return_fraction();
    cdf.jump_points()
        .iter()
        .map(|&x| (g.cdf(x) * rf - cdf.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Per-cluster report rows `cluster,alpha,mu,sigma,count`.
pub fn fit_report_csv(g: &GaussianMixture, cluster_sizes: &[usize]) -> String {
    assert_eq!(
        g.clusters().len(),
        cluster_sizes.len(),
        "one size per cluster"
    );
    let mut out = String::from("cluster,alpha,mu,sigma,count\n");
    for (i, (c, n)) in g.clusters().iter().zip(cluster_sizes).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i, c.weight, c.mean, c.std_dev, n);
    }
    out
}
