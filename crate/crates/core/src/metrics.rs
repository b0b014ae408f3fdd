//! Resilience metrics: the performance-trapezoid score for a single
//! outage window, the per-system mean, the vulnerability-weighted
//! variant, and Spearman rank correlation with a permutation p-value.

use crate::rng::RngStream;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Number of vulnerability factors per system.
pub const FACTOR_COUNT: usize = 15;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("performance curve needs at least 2 hourly samples, got {0}")]
    DegenerateWindow(usize),
    #[error("performance sample out of range at hour {index}: {value}")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("resilience score out of range: {0}")]
    ScoreOutOfRange(f64),
    #[error("cannot average an empty benchmark")]
    EmptyBenchmark,
    #[error("vulnerability profile needs {FACTOR_COUNT} factors, got {0}")]
    BadFactorCount(usize),
    #[error("vulnerability factor {index} is negative: {value}")]
    NegativeFactor { index: usize, value: f64 },
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("weight scheme invalid: {0}")]
    BadScheme(String),
    #[error("spearman inputs differ in length: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("spearman needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("undefined correlation: ranks of {side} have zero variance")]
    ZeroRankVariance { side: &'static str },
    #[error("profile csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("profile csv row {row}: {message}")]
    BadProfileRow { row: usize, message: String },
}

/// Hourly fraction-served samples starting at an epoch hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub start_time: i64,
    pub samples: Vec<f64>,
}

impl PerformanceCurve {
    pub fn new(start_time: i64, samples: Vec<f64>) -> Result<Self, MetricsError> {
        for (index, &value) in samples.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(MetricsError::SampleOutOfRange { index, value });
            }
        }
        if samples.is_empty() {
            return Err(MetricsError::DegenerateWindow(0));
        }
        Ok(Self { start_time, samples })
    }

    /// Last sampled epoch hour (inclusive).
    pub fn end_time(&self) -> i64 {
        self.start_time + self.samples.len() as i64 - 1
    }
}

/// A dimensionless resilience value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResilienceScore(f64);

impl ResilienceScore {
    pub fn new(value: f64) -> Result<Self, MetricsError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricsError::ScoreOutOfRange(value));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Fifteen non-negative socio-economic factors plus the weighting
/// coefficient lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityProfile {
    pub factors: [f64; FACTOR_COUNT],
    pub lambda: f64,
}

impl VulnerabilityProfile {
    pub const DEFAULT_LAMBDA: f64 = 1.0 / 3.0;

    pub fn new(factors: [f64; FACTOR_COUNT], lambda: f64) -> Result<Self, MetricsError> {
        for (index, &value) in factors.iter().enumerate() {
            if value < 0.0 || !value.is_finite() {
                return Err(MetricsError::NegativeFactor { index, value });
            }
        }
        if !(lambda > 0.0) {
            return Err(MetricsError::NonPositiveLambda(lambda));
        }
        Ok(Self { factors, lambda })
    }

    pub fn with_default_lambda(factors: [f64; FACTOR_COUNT]) -> Result<Self, MetricsError> {
        Self::new(factors, Self::DEFAULT_LAMBDA)
    }
}

/// How the 15 factors collapse into the exponent's weight sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum WeightScheme {
    /// S = sum of the factors as-is.
    PlainSum,
    /// S = sum of factor * per-factor multiplier.
    GroupEmphasis { multipliers: [f64; FACTOR_COUNT] },
    /// Factors above `threshold` count `penalty` times.
    ConcentrationPenalty { threshold: f64, penalty: f64 },
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), MetricsError> {
        match self {
            WeightScheme::PlainSum => Ok(()),
            WeightScheme::GroupEmphasis { multipliers } => {
                if multipliers.iter().any(|m| *m < 0.0 || !m.is_finite()) {
                    Err(MetricsError::BadScheme("multipliers must be >= 0".into()))
                } else {
                    Ok(())
                }
            }
            WeightScheme::ConcentrationPenalty { threshold, penalty } => {
                if !(*threshold > 0.0 && *threshold < 1.0) {
                    Err(MetricsError::BadScheme(format!(
                        "threshold must lie in (0,1), got {threshold}"
                    )))
                } else if !(*penalty >= 1.0) {
                    Err(MetricsError::BadScheme(format!(
                        "penalty must be >= 1, got {penalty}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Scheme-transformed factor sum S.
    pub fn weight_sum(&self, factors: &[f64; FACTOR_COUNT]) -> f64 {
        match self {
            WeightScheme::PlainSum => factors.iter().sum(),
            WeightScheme::GroupEmphasis { multipliers } => factors
                .iter()
                .zip(multipliers.iter())
                .map(|(w, m)| w * m)
                .sum(),
            WeightScheme::ConcentrationPenalty { threshold, penalty } => factors
                .iter()
                .map(|w| if *w > *threshold { w * penalty } else { *w })
                .sum(),
        }
    }
}

/// Trapezoidal-rule mean of a performance curve over its window.
///
/// With hourly samples f_0..f_{n-1} this is
/// `sum((f_i + f_{i+1}) / 2) / (n - 1)`.
pub fn trapezoid_resilience(curve: &PerformanceCurve) -> Result<ResilienceScore, MetricsError> {
    let n = curve.samples.len();
    if n < 2 {
        return Err(MetricsError::DegenerateWindow(n));
    }
    for (index, &value) in curve.samples.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricsError::SampleOutOfRange { index, value });
        }
    }
    let integral: f64 = curve
        .samples
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .sum();
    let value = integral / (n - 1) as f64;
    // Trapezoid averaging cannot escape [0,1]; clamp away rounding dust.
    ResilienceScore::new(value.clamp(0.0, 1.0))
}

/// Arithmetic mean of per-event scores.
pub fn unweighted_resilience(scores: &[ResilienceScore]) -> Result<ResilienceScore, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyBenchmark);
    }
    let mean = scores.iter().map(|s| s.value()).sum::<f64>() / scores.len() as f64;
    ResilienceScore::new(mean.clamp(0.0, 1.0))
}

/// Vulnerability-weighted resilience `ru^(1 + lambda * S)`.
pub fn weighted_resilience(
    ru: ResilienceScore,
    profile: &VulnerabilityProfile,
    scheme: &WeightScheme,
) -> Result<ResilienceScore, MetricsError> {
    scheme.validate()?;
    let s = scheme.weight_sum(&profile.factors);
    let exponent = 1.0 + profile.lambda * s;
    ResilienceScore::new(ru.value().powf(exponent))
}

/// Settings for the permutation p-value attached to Spearman's rho.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanConfig {
    pub permutations: usize,
    pub stream: RngStream,
}

impl Default for SpearmanConfig {
    fn default() -> Self {
        Self {
            permutations: 10_000,
            stream: RngStream::new(0, 0),
        }
    }
}

/// Average ranks (1-based); tied values share the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank mean of (i+1)..=(j+1)
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with the default permutation config.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<(f64, f64), MetricsError> {
    spearman_rho_with(x, y, SpearmanConfig::default())
}

/// Spearman rank correlation: Pearson on average ranks, with a two-sided
/// permutation p-value `(hits + 1) / (permutations + 1)` where a hit is a
/// shuffled |rho| at least as large as the observed one.
pub fn spearman_rho_with(
    x: &[f64],
    y: &[f64],
    config: SpearmanConfig,
) -> Result<(f64, f64), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(MetricsError::TooFewPairs(x.len()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let var = |r: &[f64]| {
        let m = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    if var(&rx) == 0.0 {
        return Err(MetricsError::ZeroRankVariance { side: "x" });
    }
    if var(&ry) == 0.0 {
        return Err(MetricsError::ZeroRankVariance { side: "y" });
    }
    let rho = pearson(&rx, &ry).expect("rank variance already checked");

    let mut rng = config.stream.rng();
    let mut shuffled = ry.clone();
    let mut hits = 0usize;
    for _ in 0..config.permutations {
        shuffled.shuffle(&mut rng);
        let r = pearson(&rx, &shuffled).expect("rank variance already checked");
        if r.abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    let p = (hits + 1) as f64 / (config.permutations + 1) as f64;
    Ok((rho, p))
}

/// Ordering for system identifiers: purely numeric ids sort numerically
/// and ahead of the rest, so "2" < "10" < "area_b".
pub fn system_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// One row of the factor table keyed by system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemProfile {
    pub system_id: String,
    pub factors: [f64; FACTOR_COUNT],
}

/// Load vulnerability factors from a CSV with header `system_id,f01..f15`.
pub fn load_profiles(path: &Path) -> Result<Vec<SystemProfile>, MetricsError> {
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let mut expected = vec!["system_id".to_string()];
        expected.extend((1..=FACTOR_COUNT).map(|i| format!("f{i:02}")));
        let got: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
        if got != expected {
            return Err(MetricsError::BadProfileRow {
                row: 0,
                message: format!("header must be {}", expected.join(",")),
            });
        }
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != FACTOR_COUNT + 1 {
            return Err(MetricsError::BadProfileRow {
                row,
                message: format!("expected {} fields, got {}", FACTOR_COUNT + 1, record.len()),
            });
        }
        let system_id = record[0].to_string();
        let mut factors = [0.0; FACTOR_COUNT];
        for (j, slot) in factors.iter_mut().enumerate() {
            let raw = &record[j + 1];
            let value: f64 = raw.trim().parse().map_err(|_| MetricsError::BadProfileRow {
                row,
                message: format!("factor f{:02} is not a number: {raw:?}", j + 1),
            })?;
            if value < 0.0 || !value.is_finite() {
                return Err(MetricsError::BadProfileRow {
                    row,
                    message: format!("factor f{:02} must be >= 0, got {value}", j + 1),
                });
            }
            *slot = value;
        }
        out.push(SystemProfile { system_id, factors });
    }
    Ok(out)
}
