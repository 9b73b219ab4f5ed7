//! Deterministic tick-driven simulation of terminals, edges, a manager and
//! users driving the contracts end to end.
//!
//! One logical thread runs the script; the only fan-out is consensus mining,
//! whose result is merged in a fixed order. Wall-clock latencies go into
//! [`Metrics`] and never influence the chain.

mod metrics;
mod script;

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abe::PrivateKey;
use crate::chain::{Block, Digest32, Wallet};
use crate::contracts::{ContractError, EdgeBehavior, EnforceOutcome, Engine, RawDevice, Role};
use crate::field::LARGE_PRIME;
use crate::pairing::{CurveGroup, ExponentGroup, GroupParams, PairingGroup};

pub use metrics::{resource_sample, Metrics, ResourceSample};
pub use script::{
    canonical_scenario, parse_sensor_csv, threshold_scenario, Event, GroupChoice, NodeSpec, Scenario, SensorRecord, Topology,
    CANONICAL_SCENARIO, SENSOR_FIXTURE,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("node `{0}` is not an edge")]
    NotAnEdge(String),
    #[error("node `{0}` is not registered")]
    NotRegistered(String),
    #[error("node `{0}` is already registered")]
    AlreadyRegistered(String),
    #[error("script: {0}")]
    Script(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Contract(#[from] ContractError),
}

/// A request delivered to an edge's inbox.
#[derive(Clone, Debug)]
pub enum Message<G: PairingGroup> {
    Decrypt { from: Digest32, reference: Digest32, key: PrivateKey<G> },
}

#[derive(Debug)]
pub struct SimNode<G: PairingGroup> {
    pub name: String,
    pub role: Role,
    pub wallet: Option<Wallet>,
    pub behavior: EdgeBehavior,
    pub inbox: VecDeque<Message<G>>,
    /// A delegated decryption key; only edges hold one, and only within a request.
    pub delegated: Option<PrivateKey<G>>,
    /// Height of the chain replica this node last synced.
    pub synced_height: usize,
    pub synced_head: Digest32,
}

impl<G: PairingGroup> SimNode<G> {
    pub fn id(&self) -> Option<Digest32> {
        self.wallet.as_ref().map(Wallet::id)
    }
}

/// One `request_access` as it played out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessLog {
    pub tick: u64,
    pub subject: String,
    pub object: String,
    #[serde(flatten)]
    pub outcome: EnforceOutcome,
    /// The record read back, when a grant led to a decryption that reached consensus.
    pub record: Option<SensorRecord>,
    pub verified: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub chain: Vec<Block>,
    pub metrics: Metrics,
    pub accesses: Vec<AccessLog>,
    /// Ciphertext references per terminal, in ingestion order.
    pub references: BTreeMap<String, Vec<Digest32>>,
    /// Registered node ids by name.
    pub ids: BTreeMap<String, Digest32>,
}

impl SimOutcome {
    pub fn chain_jsonl(&self) -> String {
        crate::chain::to_jsonl(&self.chain)
    }
}

/// Runs `scenario` with its own seed. Fixture references must already be resolved.
pub fn run_scenario(scenario: &Scenario) -> Result<SimOutcome, SimError> {
    AnySimulation::new(scenario)?.run(&scenario.events)
}

/// A simulation over whichever group the scenario names.
pub enum AnySimulation {
    Exponent(Simulation<ExponentGroup>),
    Curve(Simulation<CurveGroup>),
}

macro_rules! dispatch {
    ($self:expr, $sim:ident => $body:expr) => {
        match $self {
            AnySimulation::Exponent($sim) => $body,
            AnySimulation::Curve($sim) => $body,
        }
    };
}

impl AnySimulation {
    /// Sets up the scenario's topology and engine; its events are not run.
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.check()?;
        Ok(match scenario.group {
            GroupChoice::Exponent => {
                let group = ExponentGroup::new(GroupParams::exponent(LARGE_PRIME).expect("LARGE_PRIME is prime"));
                AnySimulation::Exponent(Simulation::new(group, scenario)?)
            }
            GroupChoice::Curve => AnySimulation::Curve(Simulation::new(CurveGroup::new(), scenario)?),
        })
    }

    pub fn run(self, events: &[Event]) -> Result<SimOutcome, SimError> {
        dispatch!(self, sim => sim.run(events))
    }

    pub fn step(&mut self, event: &Event) -> Result<(), SimError> {
        dispatch!(self, sim => sim.step(event))
    }

    pub fn flush(&mut self) -> Result<(), SimError> {
        dispatch!(self, sim => sim.flush())
    }

    pub fn snapshot(&self) -> SimOutcome {
        dispatch!(self, sim => sim.snapshot())
    }

    pub fn ids(&self) -> BTreeMap<String, Digest32> {
        dispatch!(self, sim => sim.ids())
    }

    pub fn accesses(&self) -> &[AccessLog] {
        dispatch!(self, sim => sim.accesses())
    }

    pub fn tick(&self) -> u64 {
        dispatch!(self, sim => sim.engine().tick())
    }

    pub fn height(&self) -> usize {
        dispatch!(self, sim => sim.engine().chain().height())
    }

    pub fn pending(&self) -> usize {
        dispatch!(self, sim => sim.engine().pending().len())
    }
}

pub struct Simulation<G: PairingGroup> {
    engine: Engine<G>,
    nodes: BTreeMap<String, SimNode<G>>,
    raw: BTreeMap<String, RawDevice>,
    rng: ChaCha20Rng,
    drop_rate: f64,
    metrics: Metrics,
    accesses: Vec<AccessLog>,
    data: BTreeMap<String, Vec<(Digest32, SensorRecord)>>,
    /// Set by any event other than `advance`; sealing waits for it.
    dirty: bool,
}

impl<G: PairingGroup> Simulation<G> {
    pub fn new(group: G, scenario: &Scenario) -> Result<Self, SimError> {
        let mut config = scenario.engine.clone();
        config.seed = scenario.seed;
        let nodes = scenario
            .topology
            .nodes
            .iter()
            .map(|spec| {
                let node = SimNode {
                    name: spec.name.clone(),
                    role: spec.role,
                    wallet: None,
                    behavior: EdgeBehavior::Honest,
                    inbox: VecDeque::new(),
                    delegated: None,
                    synced_height: 0,
                    synced_head: crate::chain::genesis().block_hash,
                };
                (spec.name.clone(), node)
            })
            .collect();
        let raw = scenario.topology.nodes.iter().map(|s| (s.name.clone(), s.raw())).collect();
        Ok(Self {
            engine: Engine::new(group, config)?,
            metrics: Metrics { seed: scenario.seed, nodes: scenario.topology.nodes.len(), ..Metrics::default() },
            nodes,
            raw,
            rng: ChaCha20Rng::seed_from_u64(scenario.seed ^ 0x5eed_0f_5eed),
            drop_rate: scenario.drop_rate,
            accesses: Vec::new(),
            data: BTreeMap::new(),
            dirty: false,
        })
    }

    pub fn engine(&self) -> &Engine<G> {
        &self.engine
    }

    pub fn nodes(&self) -> &BTreeMap<String, SimNode<G>> {
        &self.nodes
    }

    fn node(&self, name: &str) -> Result<&SimNode<G>, SimError> {
        self.nodes.get(name).ok_or_else(|| SimError::UnknownNode(name.to_string()))
    }

    fn wallet(&self, name: &str) -> Result<Wallet, SimError> {
        self.node(name)?
            .wallet
            .clone()
            .ok_or_else(|| SimError::NotRegistered(name.to_string()))
    }

    /// Edges in id order, the fixed global delivery order.
    fn edges(&self) -> Vec<(String, Digest32)> {
        let mut edges: Vec<_> = self
            .nodes
            .values()
            .filter(|n| n.role == Role::Edge)
            .filter_map(|n| n.id().map(|id| (n.name.clone(), id)))
            .collect();
        edges.sort_by_key(|(_, id)| *id);
        edges
    }

    pub fn run(mut self, events: &[Event]) -> Result<SimOutcome, SimError> {
        let started = Instant::now();
        for event in events {
            self.step(event)?;
        }
        self.flush()?;
        let mut outcome = self.snapshot();
        outcome.metrics.wall_secs = started.elapsed().as_secs_f64();
        Ok(outcome)
    }

    /// Seals whatever the current tick left pending.
    pub fn flush(&mut self) -> Result<(), SimError> {
        self.end_tick()
    }

    /// Registered node ids by name.
    pub fn ids(&self) -> BTreeMap<String, Digest32> {
        self.nodes.iter().filter_map(|(name, n)| n.id().map(|id| (name.clone(), id))).collect()
    }

    pub fn accesses(&self) -> &[AccessLog] {
        &self.accesses
    }

    /// Chain, metrics and logs as of now; pending transactions are not included.
    pub fn snapshot(&self) -> SimOutcome {
        let mut metrics = self.metrics.clone();
        let stats = self.engine.stats();
        metrics.ticks = self.engine.tick();
        metrics.blocks = stats.blocks;
        metrics.mining_attempts = stats.mining_attempts;
        metrics.rejected_txs = stats.rejected_txs;
        metrics.consensus_rounds = stats.consensus_rounds;
        metrics.consensus_failures = stats.consensus_failures;
        metrics.transactions = self.engine.chain().transactions().count() as u64;
        metrics.resources = resource_sample();
        let references = self
            .data
            .iter()
            .map(|(name, recs)| (name.clone(), recs.iter().map(|(r, _)| *r).collect()))
            .collect();
        SimOutcome {
            chain: self.engine.chain().blocks().to_vec(),
            metrics,
            accesses: self.accesses.clone(),
            references,
            ids: self.ids(),
        }
    }

    pub fn step(&mut self, event: &Event) -> Result<(), SimError> {
        self.dirty |= !matches!(event, Event::Advance { .. });
        self.metrics.events += 1;
        match event {
            Event::Register { node } => self.register(node),
            Event::AddAtt { node, attributes } => {
                let wallet = self.wallet(node)?;
                let labels: Vec<&str> = attributes.iter().map(String::as_str).collect();
                self.engine.scpi_add_att(&wallet, &labels)?;
                Ok(())
            }
            Event::AddPolicy { by, subject, object, formula } => {
                let caller = self.wallet(by)?;
                let (s, o) = (self.wallet(subject)?.id(), self.wallet(object)?.id());
                self.engine.scpa_add_policy(&caller, s, o, formula)?;
                Ok(())
            }
            Event::IngestData { node, records, fixture, .. } => {
                if fixture.is_some() {
                    return Err(SimError::Fixture(format!("unresolved fixture for `{node}`")));
                }
                self.ingest(node, records)
            }
            Event::RequestAccess { subject, object, record } => self.request_access(subject, object, *record),
            Event::InjectMalicious { node, behavior } => {
                let n = self
                    .nodes
                    .get_mut(node)
                    .ok_or_else(|| SimError::UnknownNode(node.clone()))?;
                if n.role != Role::Edge {
                    return Err(SimError::NotAnEdge(node.clone()));
                }
                n.behavior = *behavior;
                Ok(())
            }
            Event::Advance { ticks } => {
                self.end_tick()?;
                self.engine.advance_to(self.engine.tick() + ticks);
                Ok(())
            }
        }
    }

    fn register(&mut self, name: &str) -> Result<(), SimError> {
        let node = self.node(name)?;
        if node.wallet.is_some() {
            return Err(SimError::AlreadyRegistered(name.to_string()));
        }
        let role = node.role;
        let registered = if role == Role::User {
            self.engine.register_user(name)?
        } else {
            let raw = self.raw[name].clone();
            self.engine.register_device(&raw, role)?
        };
        self.nodes.get_mut(name).expect("checked above").wallet = Some(registered.wallet);
        Ok(())
    }

    fn ingest(&mut self, name: &str, records: &[SensorRecord]) -> Result<(), SimError> {
        let owner = self.wallet(name)?;
        for record in records {
            let bytes = serde_json::to_vec(record).expect("records serialize");
            let reference = self.engine.sced_encrypt(&owner, &bytes, None)?;
            self.data.entry(name.to_string()).or_default().push((reference, record.clone()));
            self.metrics.records_ingested += 1;
        }
        Ok(())
    }

    fn request_access(&mut self, subject: &str, object: &str, record: Option<usize>) -> Result<(), SimError> {
        let caller = self.wallet(subject)?;
        let target = self.wallet(object)?.id();
        let tick = self.engine.tick();
        let started = Instant::now();
        let outcome = self.engine.scpe_enforce(&caller, target, tick)?;
        let mut log = AccessLog {
            tick,
            subject: subject.to_string(),
            object: object.to_string(),
            outcome,
            record: None,
            verified: None,
            error: None,
        };
        let stored = self.data.get(object).and_then(|recs| match record {
            Some(i) => recs.get(i).cloned(),
            None => recs.last().cloned(),
        });
        if let (true, Some((reference, _))) = (outcome.granted(), stored) {
            match self.outsourced_decrypt(&caller, target, reference, tick) {
                Ok((rec, verified)) => {
                    log.record = rec;
                    log.verified = Some(verified);
                    if verified {
                        self.metrics.decryptions_ok += 1;
                    } else {
                        self.metrics.forged_accepted += 1;
                    }
                }
                Err(e) => {
                    log.error = Some(e.to_string());
                    self.metrics.decryptions_failed += 1;
                }
            }
        }
        let secs = started.elapsed().as_secs_f64();
        if outcome.granted() {
            self.metrics.accesses_granted += 1;
            self.metrics.granted_secs += secs;
        } else {
            self.metrics.accesses_denied += 1;
            self.metrics.denied_secs += secs;
        }
        self.accesses.push(log);
        Ok(())
    }

    /// Delivers the request to every edge, runs the round, and clears the delegated keys.
    fn outsourced_decrypt(
        &mut self,
        caller: &Wallet,
        object: Digest32,
        reference: Digest32,
        tick: u64,
    ) -> Result<(Option<SensorRecord>, bool), SimError> {
        let key = self.engine.sced_issue_key(caller, object, tick)?;
        let edges = self.edges();
        for (name, _) in &edges {
            let node = self.nodes.get_mut(name).expect("edge listed from nodes");
            node.inbox.push_back(Message::Decrypt { from: caller.id(), reference, key: key.clone() });
        }
        let mut plan = Vec::with_capacity(edges.len());
        for (name, id) in &edges {
            let dropped = self.drop_rate > 0.0 && self.rng.gen_bool(self.drop_rate.min(1.0));
            let node = self.nodes.get_mut(name).expect("edge listed from nodes");
            let delivered = node.inbox.pop_front();
            if dropped {
                self.metrics.messages_dropped += 1;
            }
            let behavior = match delivered {
                Some(Message::Decrypt { key, .. }) if !dropped => {
                    node.delegated = Some(key);
                    node.behavior
                }
                _ => EdgeBehavior::SkipWork,
            };
            plan.push((*id, behavior));
        }
        let result = self.engine.sced_decrypt(caller, reference, &key, &plan, tick);
        for (name, _) in &edges {
            self.nodes.get_mut(name).expect("edge listed from nodes").delegated = None;
        }
        let out = result?;
        let rec = serde_json::from_slice(&out.plaintext).ok();
        Ok((rec, out.verified))
    }

    /// Seals pending work, syncs replicas and checks the agent boundary.
    fn end_tick(&mut self) -> Result<(), SimError> {
        let tick = self.engine.tick();
        let edges = self.edges();
        if self.dirty && !self.engine.pending().is_empty() {
            // Sealing rotates over the edges; before any edge exists the executor seals.
            let creator = edges
                .get(tick as usize % edges.len().max(1))
                .map_or(self.engine.executor_id(), |(_, id)| *id);
            let started = Instant::now();
            if self.engine.seal(creator)?.is_some() {
                self.metrics.block_secs += started.elapsed().as_secs_f64();
                self.metrics.sealed_blocks += 1;
            }
        }
        let head = self.engine.chain().head().block_hash;
        let height = self.engine.chain().height();
        for node in self.nodes.values_mut() {
            node.synced_height = height;
            node.synced_head = head;
            if node.delegated.is_some() {
                return Err(SimError::Invariant(format!("`{}` kept a delegated key past its request", node.name)));
            }
            if node.role != Role::Edge && !node.inbox.is_empty() {
                return Err(SimError::Invariant(format!("`{}` received edge work", node.name)));
            }
            if let Some(w) = &node.wallet {
                if self.engine.state().registration(&w.id()).map(|r| r.role) != Some(node.role) {
                    return Err(SimError::Invariant(format!("`{}` holds a key not registered to it", node.name)));
                }
            }
        }
        Ok(())
    }
}
