use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{mine, ChainError, Digest32, HashPrefix, MineOutcome, Strategy};

use super::{mean_sd, rows_to_csv, BenchConfig, BenchError};

/// Attempts and wall time per block for one (strategy, nBits, concurrency) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowSample {
    pub strategy: Strategy,
    pub n_bits: u32,
    pub concurrency: usize,
    pub blocks: usize,
    /// Hash evaluations summed over all miners until the first solution.
    pub mean_attempts: f64,
    pub sd_attempts: f64,
    pub expected_attempts: f64,
    /// `|mean - 2^nBits| / (sd / sqrt(blocks))`.
    pub z_score: f64,
    pub mean_ms: f64,
    pub sd_ms: f64,
}

impl PowSample {
    /// Whether the mean lies within three standard errors of `2^nBits`.
    pub fn within_3_sigma(&self) -> bool {
        self.z_score <= 3.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowReport {
    pub seed: u64,
    pub config_digest: String,
    pub samples: Vec<PowSample>,
    /// Every single-miner cell is within 3σ of `2^nBits`.
    pub single_miner_within_3_sigma: bool,
}

impl PowReport {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.samples)
    }

    pub fn table(&self) -> String {
        let mut out = format!("bench-pow seed={} config={}\n", self.seed, &self.config_digest[..16]);
        out.push_str(&format!(
            "{:<10} {:>5} {:>4} {:>6} {:>12} {:>12} {:>10} {:>6} {:>10} {:>10}\n",
            "strategy", "nBits", "conc", "blocks", "mean_att", "sd_att", "2^nBits", "z", "mean_ms", "sd_ms"
        ));
        for s in &self.samples {
            out.push_str(&format!(
                "{:<10} {:>5} {:>4} {:>6} {:>12.1} {:>12.1} {:>10} {:>6.2} {:>10.3} {:>10.3}\n",
                s.strategy.name(),
                s.n_bits,
                s.concurrency,
                s.blocks,
                s.mean_attempts,
                s.sd_attempts,
                s.expected_attempts,
                s.z_score,
                s.mean_ms,
                s.sd_ms
            ));
        }
        out.push_str(&format!(
            "single-miner attempts within 3σ of 2^nBits: {}\n",
            if self.single_miner_within_3_sigma { "ok" } else { "FAIL" }
        ));
        out
    }
}

/// Mines one block with `miners` threads racing over distinct creators' prefixes.
///
/// The first solution raises the shared stop flag; attempts are summed over all miners.
fn race(prefixes: &[HashPrefix], n_bits: u32, strategy: Strategy, seeds: &[u64]) -> Result<u64, ChainError> {
    if let [prefix] = prefixes {
        let mut rng = ChaCha20Rng::seed_from_u64(seeds[0]);
        return mine(prefix, n_bits, strategy, &mut rng, None).map(|o| o.attempts);
    }
    let stop = AtomicBool::new(false);
    let total = Mutex::new(0u64);
    let winner: Mutex<Option<MineOutcome>> = Mutex::new(None);
    std::thread::scope(|s| {
        for (prefix, &seed) in prefixes.iter().zip(seeds) {
            let (stop, total, winner) = (&stop, &total, &winner);
            s.spawn(move || {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                match mine(prefix, n_bits, strategy, &mut rng, Some(stop)) {
                    Ok(o) => {
                        stop.store(true, Ordering::Relaxed);
                        *total.lock().expect("no panics while held") += o.attempts;
                        winner.lock().expect("no panics while held").get_or_insert(o);
                    }
                    Err(ChainError::Stopped { attempts: n }) => *total.lock().expect("no panics while held") += n,
                    Err(_) => stop.store(true, Ordering::Relaxed),
                }
            });
        }
    });
    if winner.into_inner().expect("threads joined").is_none() {
        return Err(ChainError::NonceExhausted);
    }
    Ok(total.into_inner().expect("threads joined"))
}

pub fn bench_pow(config: &BenchConfig) -> Result<PowReport, BenchError> {
    config.validate()?;
    let mut seeder = ChaCha20Rng::seed_from_u64(config.seed);
    let mut samples = Vec::new();
    for &strategy in &config.strategies {
        for &n_bits in &config.n_bits {
            for &concurrency in &config.concurrency {
                let mut attempts = Vec::with_capacity(config.blocks);
                let mut times = Vec::with_capacity(config.blocks);
                for block in 0..config.blocks {
                    let data = Digest32::of(&seeder.next_u64().to_be_bytes());
                    let prev = Digest32::of(&(block as u64).to_be_bytes());
                    let prefixes: Vec<HashPrefix> = (0..concurrency)
                        .map(|m| HashPrefix::new(data, prev, block as u64, n_bits, Digest32::of(format!("miner-{m}").as_bytes())))
                        .collect();
                    let seeds: Vec<u64> = (0..concurrency).map(|_| seeder.next_u64()).collect();
                    let t = Instant::now();
                    let n = race(&prefixes, n_bits, strategy, &seeds).map_err(|e| BenchError::Run(e.to_string()))?;
                    times.push(t.elapsed().as_secs_f64() * 1e3);
                    attempts.push(n as f64);
                }
                let (mean, sd) = mean_sd(&attempts);
                let (mean_ms, sd_ms) = mean_sd(&times);
                let expected = 2f64.powi(n_bits as i32);
                let se = sd / (config.blocks as f64).sqrt();
                let z_score = if se > 0.0 {
                    (mean - expected).abs() / se
                } else if mean == expected {
                    0.0
                } else {
                    f64::INFINITY
                };
                samples.push(PowSample {
                    strategy,
                    n_bits,
                    concurrency,
                    blocks: config.blocks,
                    mean_attempts: mean,
                    sd_attempts: sd,
                    expected_attempts: expected,
                    z_score,
                    mean_ms,
                    sd_ms,
                });
            }
        }
    }
    let single_miner_within_3_sigma = samples.iter().filter(|s| s.concurrency == 1).all(PowSample::within_3_sigma);
    Ok(PowReport { seed: config.seed, config_digest: config.digest(), samples, single_miner_within_3_sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_bits: Vec<u32>, concurrency: Vec<usize>) -> BenchConfig {
        BenchConfig { n_bits, concurrency, blocks: 20, ..BenchConfig::default() }
    }

    #[test]
    fn zero_difficulty_takes_one_attempt() {
        let report = bench_pow(&small(vec![0], vec![1])).unwrap();
        assert_eq!(report.samples.len(), 3);
        for s in &report.samples {
            assert_eq!((s.mean_attempts, s.sd_attempts, s.z_score), (1.0, 0.0, 0.0));
        }
        assert!(report.single_miner_within_3_sigma);
    }

    #[test]
    fn concurrent_miners_count_total_work() {
        let report = bench_pow(&small(vec![6], vec![3])).unwrap();
        // Losers run until their next stop poll, so total work is at least one attempt per miner.
        assert!(report.samples.iter().all(|s| s.mean_attempts >= 3.0));
        assert!(report.to_csv().lines().count() == 4);
    }
}
