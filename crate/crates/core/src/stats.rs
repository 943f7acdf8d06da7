//! Descriptive statistics for gas samples: percentile bootstrap of the mean,
//! Cliff's δ, and shape moments.
//!
//! Resampling uses ChaCha8 seeded with `seed` on stream `stream`; with the same
//! arguments the interval is bit-identical on every platform.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("confidence level must lie strictly between 0 and 1")]
    InvalidLevel,
    #[error("at least one resample is required")]
    NoResamples,
}

pub const DEFAULT_RESAMPLES: usize = 10_000;

pub fn mean(sample: &[f64]) -> Option<f64> {
    if sample.is_empty() {
        return None;
    }
    Some(sample.iter().sum::<f64>() / sample.len() as f64)
}

pub fn median(sample: &[f64]) -> Option<f64> {
    if sample.is_empty() {
        return None;
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

/// Sample standard deviation (divisor `n - 1`); zero for a single value.
pub fn sigma(sample: &[f64]) -> Option<f64> {
    let m = mean(sample)?;
    if sample.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = sample.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (sample.len() - 1) as f64).sqrt())
}

/// Nearest-rank quantile of an ascending slice: element `ceil(p * n)`,
/// 1-based, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn bootstrap_ci(sample: &[f64], b: usize, level: f64, seed: u64) -> Result<(f64, f64), StatsError> {
    bootstrap_ci_stream(sample, b, level, seed, 0)
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci_stream(
    sample: &[f64],
    b: usize,
    level: f64,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if b == 0 {
        return Err(StatsError::NoResamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidLevel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = sample.len();
    let mut means: Vec<f64> = (0..b)
        .map(|_| (0..n).map(|_| sample[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((nearest_rank(&means, tail), nearest_rank(&means, 1.0 - tail)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(delta: f64) -> Magnitude {
        let d = delta.abs();
        if d < 0.147 {
            Magnitude::Negligible
        } else if d < 0.33 {
            Magnitude::Small
        } else if d < 0.474 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaResult {
    pub delta: f64,
    pub magnitude: Magnitude,
}

/// `(#{a_i < b_j} - #{a_i > b_j}) / (|a| |b|)`: positive when `a` tends lower.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<DeltaResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut score: i64 = 0;
    for x in a {
        for y in b {
            score += match x.total_cmp(y) {
                std::cmp::Ordering::Less => 1,
                std::cmp::Ordering::Greater => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    let delta = score as f64 / (a.len() * b.len()) as f64;
    Ok(DeltaResult { delta, magnitude: Magnitude::of(delta) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Moments {
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Population skewness `m3 / m2^1.5` and excess kurtosis `m4 / m2^2 - 3`.
/// Undefined (`None`) for fewer than three values or zero spread.
pub fn moments(sample: &[f64]) -> Option<Moments> {
    if sample.len() < 3 {
        return None;
    }
    let n = sample.len() as f64;
    let m = mean(sample)?;
    let central = |k: i32| sample.iter().map(|x| (x - m).powi(k)).sum::<f64>() / n;
    let m2 = central(2);
    if m2 == 0.0 {
        return None;
    }
    Some(Moments { skewness: central(3) / m2.powf(1.5), excess_kurtosis: central(4) / (m2 * m2) - 3.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub sigma: f64,
    pub ci95: (f64, f64),
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

pub fn summary(sample: &[f64], b: usize, seed: u64, stream: u64) -> Result<StatsSummary, StatsError> {
    let mean = mean(sample).ok_or(StatsError::EmptySample)?;
    let shape = moments(sample);
    Ok(StatsSummary {
        n: sample.len(),
        mean,
        median: median(sample).ok_or(StatsError::EmptySample)?,
        sigma: sigma(sample).ok_or(StatsError::EmptySample)?,
        ci95: bootstrap_ci_stream(sample, b, 0.95, seed, stream)?,
        skewness: shape.map(|m| m.skewness),
        excess_kurtosis: shape.map(|m| m.excess_kurtosis),
    })
}

/// Gas samples of one system.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSamples {
    pub system: String,
    pub tx_gas: Vec<f64>,
    pub actual_gas: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    TxGasUsed,
    ActualGasUsed,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TxGasUsed => "txGasUsed",
            Metric::ActualGasUsed => "actualGasUsed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub system: String,
    pub metric: Metric,
    pub summary: StatsSummary,
}

/// δ of `a` against `b` on txGasUsed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaEntry {
    pub a: String,
    pub b: String,
    pub result: DeltaResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub deltas: Vec<DeltaEntry>,
}

impl SummaryTable {
    pub fn row(&self, system: &str, metric: Metric) -> Option<&StatsSummary> {
        self.rows.iter().find(|r| r.system == system && r.metric == metric).map(|r| &r.summary)
    }

    pub fn delta(&self, a: &str, b: &str) -> Option<DeltaResult> {
        self.deltas.iter().find(|d| d.a == a && d.b == b).map(|d| d.result)
    }
}

/// One row per (system, metric), bootstrapped on stream = row index, plus δ
/// for every ordered pair of distinct systems. Empty systems are skipped.
pub fn summarize(systems: &[SystemSamples], b: usize, seed: u64) -> Result<SummaryTable, StatsError> {
    let systems: Vec<&SystemSamples> = systems.iter().filter(|s| !s.tx_gas.is_empty()).collect();
    let mut table = SummaryTable::default();
    for s in &systems {
        for (metric, sample) in [(Metric::TxGasUsed, &s.tx_gas), (Metric::ActualGasUsed, &s.actual_gas)] {
            let stream = table.rows.len() as u64;
            table.rows.push(SummaryRow { system: s.system.clone(), metric, summary: summary(sample, b, seed, stream)? });
        }
    }
    for a in &systems {
        for b in &systems {
            if a.system != b.system {
                table.deltas.push(DeltaEntry {
                    a: a.system.clone(),
                    b: b.system.clone(),
                    result: cliffs_delta(&a.tx_gas, &b.tx_gas)?,
                });
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_width() {
        assert_eq!(bootstrap_ci(&[5.0; 4], 100, 0.95, 1).unwrap(), (5.0, 5.0));
        assert_eq!(bootstrap_ci(&[], 100, 0.95, 1), Err(StatsError::EmptySample));
    }

    /// Oracle: the exact distribution of resample means of [1, 2, 3] over all
    /// 27 equally likely resamples.
    #[test]
    fn three_point_bootstrap_matches_enumeration() {
        let sample = [1.0, 2.0, 3.0];
        let mut exact = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    exact.push((sample[i] + sample[j] + sample[k]) / 3.0);
                }
            }
        }
        exact.sort_by(f64::total_cmp);
        let oracle = (nearest_rank(&exact, 0.025), nearest_rank(&exact, 0.975));
        assert_eq!(oracle, (1.0, 3.0));

        let ci = bootstrap_ci(&sample, 10_000, 0.95, 42).unwrap();
        assert_eq!(ci, bootstrap_ci(&sample, 10_000, 0.95, 42).unwrap());
        assert!(ci.0 <= 2.0 && 2.0 <= ci.1);
        // Each extreme mean has probability 1/27 > 2.5%, so the percentile
        // interval reaches the sample range and the width is exactly 2.
        assert_eq!(ci, oracle);
    }

    #[test]
    fn delta_examples() {
        let d = cliffs_delta(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!((d.delta, d.magnitude), (1.0, Magnitude::Large));
        let d = cliffs_delta(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.delta, d.magnitude), (0.0, Magnitude::Negligible));
        assert!(cliffs_delta(&[], &[1.0]).is_err());
    }

    #[test]
    fn magnitude_thresholds() {
        assert_eq!(Magnitude::of(0.146), Magnitude::Negligible);
        assert_eq!(Magnitude::of(-0.147), Magnitude::Small);
        assert_eq!(Magnitude::of(0.33), Magnitude::Medium);
        assert_eq!(Magnitude::of(0.474), Magnitude::Large);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(moments(&[1.0, 2.0, 3.0]).unwrap().skewness, 0.0);
        assert!(moments(&[7.0; 10]).is_none());
        // Direct formula: mean 1/4, m2 = 3/16, m3 = 3/32, m4 = 21/256.
        let m = moments(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((m.skewness - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((m.excess_kurtosis - (7.0 / 3.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn summarize_shapes() {
        let one = SystemSamples { system: "x".into(), tx_gas: vec![1.0, 2.0], actual_gas: vec![3.0, 4.0] };
        let t = summarize(std::slice::from_ref(&one), 50, 1).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.deltas.is_empty());
        let two = SystemSamples { system: "y".into(), tx_gas: vec![10.0, 20.0], actual_gas: vec![30.0, 40.0] };
        let t = summarize(&[one, two], 50, 1).unwrap();
        assert_eq!(t.delta("x", "y").unwrap().delta, 1.0);
        assert_eq!(t.delta("y", "x").unwrap().delta, -1.0);
    }
}
