//! Sweeps that measure how costs scale: ABE cost
//! against attribute count and payload size, proof-of-work attempts per
//! strategy, and contract throughput.
//!
//! Absolute numbers depend on the host; only the shape flags are asserted.

mod abe;
mod pow;
mod throughput;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::Strategy;
use crate::netsim::GroupChoice;

pub use abe::{bench_abe, AbeChecks, AbeReport, AbeSample, GateMode};
pub use pow::{bench_pow, PowReport, PowSample};
pub use throughput::{bench_throughput, ThroughputReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub backend: GroupChoice,
    pub attribute_counts: Vec<usize>,
    pub payload_sizes: Vec<usize>,
    pub gate_modes: Vec<GateMode>,
    /// Payload size used while sweeping attribute counts.
    pub sweep_payload: usize,
    /// Attribute count held fixed while sweeping payload sizes; defaults to the largest count.
    pub fixed_attributes: Option<usize>,
    pub n_bits: Vec<u32>,
    pub strategies: Vec<Strategy>,
    pub concurrency: Vec<usize>,
    /// Blocks mined per (strategy, nBits, concurrency).
    pub blocks: usize,
    /// Accesses per kind in the throughput run.
    pub throughput_ops: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            repetitions: 5,
            backend: GroupChoice::Curve,
            attribute_counts: (2..=20).step_by(2).collect(),
            payload_sizes: vec![1, 1 << 10, 64 << 10, 1 << 20, 10 << 20],
            gate_modes: vec![GateMode::And, GateMode::Or],
            sweep_payload: 1 << 10,
            fixed_attributes: None,
            n_bits: vec![8, 12, 16],
            strategies: Strategy::ALL.to_vec(),
            concurrency: vec![1, 3, 4, 5],
            blocks: 100,
            throughput_ops: 200,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.repetitions < 3 {
            return bad("repetitions must be at least 3");
        }
        if self.attribute_counts.is_empty()
            || self.payload_sizes.is_empty()
            || self.gate_modes.is_empty()
            || self.n_bits.is_empty()
            || self.strategies.is_empty()
            || self.concurrency.is_empty()
        {
            return bad("every sweep list must be nonempty");
        }
        if self.attribute_counts.contains(&0) || self.fixed_attributes == Some(0) {
            return bad("attribute counts must be positive");
        }
        if self.concurrency.contains(&0) {
            return bad("concurrency levels must be positive");
        }
        if let Some(&b) = self.n_bits.iter().find(|&&b| b > 24) {
            return Err(BenchError::Config(format!("nBits {b} is beyond the bench range (at most 24)")));
        }
        if self.blocks < 2 || self.throughput_ops == 0 {
            return bad("blocks must be at least 2 and throughput_ops positive");
        }
        Ok(())
    }

    pub fn fixed_attributes(&self) -> usize {
        self.fixed_attributes
            .unwrap_or_else(|| self.attribute_counts.iter().copied().max().unwrap_or(1))
    }

    /// SHA-256 of the config's JSON, carried by every report.
    pub fn digest(&self) -> String {
        crate::api::config_digest(self)
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Mean and sample standard deviation.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// Writes serializable rows as CSV with a header.
pub(crate) fn rows_to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of utf-8 is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_of_exact_and_noisy_lines() {
        let exact: Vec<_> = (0..10).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        assert!((r_squared(&exact) - 1.0).abs() < 1e-12);
        // y = x^2 on symmetric x has no linear trend.
        let parabola: Vec<_> = (-5..=5).map(|i| (i as f64, (i * i) as f64)).collect();
        assert!(r_squared(&parabola) < 1e-12);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((sd - 2.138089935299395).abs() < 1e-12);
    }

    #[test]
    fn config_rules() {
        assert!(BenchConfig::default().validate().is_ok());
        let few = BenchConfig { repetitions: 2, ..BenchConfig::default() };
        assert!(few.validate().is_err());
        let empty = BenchConfig { strategies: vec![], ..BenchConfig::default() };
        assert!(empty.validate().is_err());
        assert_eq!(BenchConfig::default().fixed_attributes(), 20);
        assert_ne!(BenchConfig::default().digest(), few.digest());
    }
}
