use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chain::Wallet;
use crate::contracts::{ContractError, EnforceOutcome, Engine, EngineConfig, RawDevice, Role};
use crate::field::LARGE_PRIME;
use crate::pairing::{ExponentGroup, GroupParams};

use super::{rows_to_csv, BenchConfig, BenchError};

const POLICY: &str = "(Sub_reader OR Sub_admin) AND (Ob_sensor)";

/// Accesses per second for the three kinds of work on the contract path.
///
/// A successful access is one granted enforcement for a subject with a clean
/// record. A failed access is one enforcement for a fresh subject whose
/// attributes do not satisfy the policy, which also records a penalty. A
/// verification re-checks every transaction one successful access produced:
/// signature, block digest and block hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub seed: u64,
    pub config_digest: String,
    pub operations: usize,
    pub success_tps: f64,
    pub failed_tps: f64,
    pub verification_tps: f64,
    /// Transactions signed per successful and per failed access.
    pub success_txs: usize,
    pub failed_txs: usize,
    /// success > failed > verification.
    pub ordering_holds: bool,
}

#[derive(Serialize)]
struct Row<'a> {
    kind: &'a str,
    tps: f64,
    transactions_per_access: usize,
}

impl ThroughputReport {
    pub fn to_csv(&self) -> String {
        rows_to_csv(&[
            Row { kind: "success", tps: self.success_tps, transactions_per_access: self.success_txs },
            Row { kind: "failed", tps: self.failed_tps, transactions_per_access: self.failed_txs },
            Row { kind: "verification", tps: self.verification_tps, transactions_per_access: self.success_txs },
        ])
    }

    pub fn table(&self) -> String {
        format!(
            "bench-throughput seed={} config={} operations={}\n\
             {:<13} {:>12} {:>8}\n\
             {:<13} {:>12.1} {:>8}\n\
             {:<13} {:>12.1} {:>8}\n\
             {:<13} {:>12.1} {:>8}\n\
             success > failed > verification: {}\n",
            self.seed,
            &self.config_digest[..16],
            self.operations,
            "kind",
            "tps",
            "txs",
            "success",
            self.success_tps,
            self.success_txs,
            "failed",
            self.failed_tps,
            self.failed_txs,
            "verification",
            self.verification_tps,
            self.success_txs,
            if self.ordering_holds { "ok" } else { "FAIL" }
        )
    }
}

fn run_err(e: ContractError) -> BenchError {
    BenchError::Run(e.to_string())
}

pub fn bench_throughput(config: &BenchConfig) -> Result<ThroughputReport, BenchError> {
    config.validate()?;
    let ops = config.throughput_ops;
    let group = ExponentGroup::new(GroupParams::exponent(LARGE_PRIME).map_err(|e| BenchError::Run(e.to_string()))?);
    // Sealing is untimed, so a low difficulty only shortens setup.
    let engine_config = EngineConfig { seed: config.seed, n_bits: 4, session_ticks: 1, ..EngineConfig::default() };
    let mut engine = Engine::new(group, engine_config).map_err(run_err)?;

    let manager = engine.register_device(&RawDevice::named("manager"), Role::Manager).map_err(run_err)?.wallet;
    let sensor = engine.register_device(&RawDevice::named("sensor"), Role::Terminal).map_err(run_err)?.wallet;
    let reader = engine.register_user("reader").map_err(run_err)?.wallet;
    engine.scpi_add_att(&sensor, &["Ob_sensor"]).map_err(run_err)?;
    engine.scpi_add_att(&reader, &["Sub_reader", "Ob_sensor"]).map_err(run_err)?;
    // Composed against a profile holding every subject leaf.
    let profile = engine.register_user("profile").map_err(run_err)?.wallet;
    engine.scpi_add_att(&profile, &["Sub_reader", "Sub_admin"]).map_err(run_err)?;
    engine.scpa_add_policy(&manager, profile.id(), sensor.id(), POLICY).map_err(run_err)?;
    let strangers: Vec<Wallet> = (0..ops)
        .map(|i| {
            let w = engine.register_user(&format!("stranger-{i}")).map_err(run_err)?.wallet;
            engine.scpi_add_att(&w, &["Sub_guest"]).map_err(run_err)?;
            Ok(w)
        })
        .collect::<Result<_, BenchError>>()?;
    let creator = manager.id();
    engine.seal(creator).map_err(run_err)?;

    // Sessions last one tick, so two ticks apart never collide.
    let mut tick = engine.tick() + 2;
    let mut success_secs = 0.0;
    let mut sealed_heights = Vec::with_capacity(ops);
    let mut success_txs = 0;
    for _ in 0..ops {
        let before = engine.pending().len();
        let t = Instant::now();
        let outcome = engine.scpe_enforce(&reader, sensor.id(), tick).map_err(run_err)?;
        success_secs += t.elapsed().as_secs_f64();
        if outcome != EnforceOutcome::Granted {
            return Err(BenchError::Run(format!("reader was refused: {outcome:?}")));
        }
        success_txs = engine.pending().len() - before;
        engine.seal(creator).map_err(run_err)?;
        sealed_heights.push(engine.chain().height() - 1);
        tick += 2;
    }

    let mut failed_secs = 0.0;
    let mut failed_txs = 0;
    for stranger in &strangers {
        let before = engine.pending().len();
        let t = Instant::now();
        let outcome = engine.scpe_enforce(stranger, sensor.id(), tick).map_err(run_err)?;
        failed_secs += t.elapsed().as_secs_f64();
        if outcome.granted() {
            return Err(BenchError::Run("a non-satisfying subject was granted".into()));
        }
        failed_txs = engine.pending().len() - before;
        tick += 2;
    }
    engine.seal(creator).map_err(run_err)?;

    let mut verify_secs = 0.0;
    for &height in &sealed_heights {
        let count = engine.chain().blocks()[height].transactions.len();
        let t = Instant::now();
        for index in 0..count {
            engine.verify_at(height, index).map_err(run_err)?;
        }
        verify_secs += t.elapsed().as_secs_f64();
    }

    let tps = |secs: f64| if secs > 0.0 { ops as f64 / secs } else { f64::INFINITY };
    let (success_tps, failed_tps, verification_tps) = (tps(success_secs), tps(failed_secs), tps(verify_secs));
    Ok(ThroughputReport {
        seed: config.seed,
        config_digest: config.digest(),
        operations: ops,
        success_tps,
        failed_tps,
        verification_tps,
        success_txs,
        failed_txs,
        ordering_holds: success_tps > failed_tps && failed_tps > verification_tps,
    })
}
