//! Request and response bodies shared by the HTTP service and its client.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{read_jsonl, validate_blocks, ChainError, Digest32};
use crate::contracts::EngineConfig;
use crate::netsim::{run_scenario, AccessLog, Event, GroupChoice, Metrics, Scenario, SimError, SimOutcome, Topology};

/// Hex SHA-256 of a value's JSON form; reports carry it to pin their inputs.
pub fn config_digest<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("config serializes")))
}

/// Error body of every non-2xx response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    /// Stable machine-readable kind, e.g. `invalid_config` or `unknown_node`.
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into() }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl From<&SimError> for ApiError {
    fn from(e: &SimError) -> Self {
        let code = match e {
            SimError::UnknownNode(_) => "unknown_node",
            SimError::DuplicateNode(_) => "duplicate_node",
            SimError::NotAnEdge(_) => "not_an_edge",
            SimError::NotRegistered(_) => "not_registered",
            SimError::AlreadyRegistered(_) => "already_registered",
            SimError::Script(_) => "invalid_script",
            SimError::Fixture(_) => "invalid_fixture",
            SimError::Invariant(_) => "invariant_violated",
            SimError::Contract(_) => "contract_error",
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<&ChainError> for ApiError {
    fn from(e: &ChainError) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitRequest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub group: GroupChoice,
    #[serde(default)]
    pub engine: EngineConfig,
    pub topology: Topology,
}

/// A fresh deployment with every node registered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitResponse {
    pub seed: u64,
    pub config_digest: String,
    /// The registration script; append events to it and pass it to `run`.
    pub scenario: Scenario,
    pub chain_jsonl: String,
    pub ids: BTreeMap<String, Digest32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_digest: String,
    pub chain_jsonl: String,
    pub metrics: Metrics,
    pub accesses: Vec<AccessLog>,
    pub references: BTreeMap<String, Vec<Digest32>>,
    pub ids: BTreeMap<String, Digest32>,
}

impl RunReport {
    pub fn new(scenario: &Scenario, outcome: SimOutcome) -> Self {
        Self {
            seed: scenario.seed,
            config_digest: config_digest(scenario),
            chain_jsonl: outcome.chain_jsonl(),
            metrics: outcome.metrics,
            accesses: outcome.accesses,
            references: outcome.references,
            ids: outcome.ids,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateRequest {
    pub chain_jsonl: String,
    /// Every block but genesis must carry at least this difficulty.
    #[serde(default)]
    pub min_bits: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub valid: bool,
    pub blocks: usize,
    pub transactions: usize,
    pub error: Option<ApiError>,
}

/// A live simulation held by the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub id: u64,
    pub seed: u64,
    pub tick: u64,
    pub height: usize,
    pub pending: usize,
    pub ids: BTreeMap<String, Digest32>,
    pub accesses: Vec<AccessLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRequest {
    pub events: Vec<Event>,
    /// Seal pending transactions after the events.
    #[serde(default)]
    pub flush: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub summary: DeploymentSummary,
    /// Accesses logged by this request's events.
    pub new_accesses: Vec<AccessLog>,
}

/// Registers every node of the topology and seals the result.
pub fn init(req: &InitRequest) -> Result<InitResponse, SimError> {
    let events = req.topology.nodes.iter().map(|n| Event::Register { node: n.name.clone() }).collect();
    let scenario = Scenario {
        seed: req.seed,
        group: req.group,
        engine: req.engine.clone(),
        drop_rate: 0.0,
        topology: req.topology.clone(),
        events,
    };
    let outcome = run_scenario(&scenario)?;
    Ok(InitResponse {
        seed: req.seed,
        config_digest: config_digest(req),
        chain_jsonl: outcome.chain_jsonl(),
        ids: outcome.ids,
        scenario,
    })
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunReport, SimError> {
    Ok(RunReport::new(scenario, run_scenario(scenario)?))
}

/// Parses and fully verifies a JSONL chain. An invalid chain is a report, not an error.
pub fn validate(req: &ValidateRequest) -> ValidateReport {
    let checked = read_jsonl(req.chain_jsonl.as_bytes()).and_then(|blocks| {
        validate_blocks(&blocks, req.min_bits)?;
        Ok(blocks)
    });
    match checked {
        Ok(blocks) => ValidateReport {
            valid: true,
            blocks: blocks.len(),
            transactions: blocks.iter().map(|b| b.transactions.len()).sum(),
            error: None,
        },
        Err(e) => ValidateReport { valid: false, blocks: 0, transactions: 0, error: Some(ApiError::from(&e)) },
    }
}
