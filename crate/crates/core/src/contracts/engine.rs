use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest as _, Sha256};

use crate::abe::{self, attribute_ref, AttributeUniverse, MasterKey, PrivateKey, PublicKey};
use crate::chain::{
    consensus_round, Chain, ConsensusNode, Digest32, KeyDirectory, MineOutcome, Strategy, Transaction, Wallet,
};
use crate::field::FieldElement;
use crate::pairing::{hash_to_group, ElementBytes, PairingGroup};
use crate::policy::{assign_shares, PolicyId, PolicyRecord, ShareSource, StoreOutcome};

use super::state::{ContractState, Record};
use super::{
    compose_policy, identity_digest, judge, lockout, AccessDecision, ContractError, DecisionReason,
    EnforceOutcome, RawDevice, Role,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub seed: u64,
    pub n_bits: u32,
    pub strategy: Strategy,
    /// Ticks a grant stays open after the granting tick.
    pub session_ticks: u64,
    pub min_edges: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_bits: 12,
            strategy: Strategy::Hybrid,
            session_ticks: 1,
            min_edges: 3,
        }
    }
}

/// Monotone counters over an engine's lifetime.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    pub call_txs: u64,
    pub result_txs: u64,
    pub rejected_txs: u64,
    pub blocks: u64,
    pub mining_attempts: u64,
    pub consensus_rounds: u64,
    pub consensus_failures: u64,
}

/// How an edge behaves during outsourced decryption.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeBehavior {
    #[default]
    Honest,
    /// Reports fabricated plaintext.
    ForgeDecrypt,
    /// Reports nothing.
    SkipWork,
    /// Alters its result after signing.
    TamperTx,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecryptOutcome {
    pub plaintext: Vec<u8>,
    /// Whether the accepted plaintext matches the digest sealed at encryption.
    pub verified: bool,
    pub reencrypted: bool,
    pub support: usize,
    pub participants: usize,
    /// Edge results dropped for failing signature verification.
    pub rejected: usize,
    pub block_height: usize,
}

/// A registration's outcome: the new id and the key pair the caller keeps.
#[derive(Clone, Debug)]
pub struct Registered {
    pub id: Digest32,
    pub wallet: Wallet,
}

/// Contract runtime with its chain. Holds the master key as trust anchor and
/// the off-chain label table; everything it publishes is label-free.
#[derive(Debug)]
pub struct Engine<G: PairingGroup> {
    group: G,
    pk: PublicKey<G>,
    mk: MasterKey<G>,
    universe: AttributeUniverse<G>,
    points_by_ref: HashMap<String, G::G1>,
    owner_h: HashMap<Digest32, FieldElement>,
    executor: Wallet,
    state: ContractState<G>,
    chain: Chain,
    pending: Vec<Transaction>,
    keys: KeyDirectory,
    rng: ChaCha20Rng,
    config: EngineConfig,
    stats: EngineStats,
    tick: u64,
}

const EXECUTOR_NAME: &[u8] = b"contract-executor";

impl<G: PairingGroup> Engine<G> {
    pub fn new(group: G, config: EngineConfig) -> Result<Self, ContractError> {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let (pk, mk) = abe::setup(&group, &mut rng);
        let executor = Wallet::generate(Digest32::of(EXECUTOR_NAME), &mut rng);
        let mut engine = Self {
            chain: Chain::new(config.n_bits),
            group,
            pk: pk.clone(),
            mk,
            universe: AttributeUniverse::default(),
            points_by_ref: HashMap::new(),
            owner_h: HashMap::new(),
            executor,
            state: ContractState::default(),
            pending: Vec::new(),
            keys: KeyDirectory::default(),
            rng,
            config,
            stats: EngineStats::default(),
            tick: 0,
        };
        let record = Record::Setup { public_key: pk };
        engine.state.apply(&record);
        let tx = engine.executor.sign(
            json!({
                "contract": "SCED",
                "method": "setup",
                "verification_key": engine.executor.verifying_key_hex(),
                "result": record,
            }),
            0,
        );
        engine.submit(tx)?;
        engine.stats.result_txs += 1;
        Ok(engine)
    }

    pub fn group(&self) -> &G {
        &self.group
    }

    pub fn public_key(&self) -> &PublicKey<G> {
        &self.pk
    }

    pub fn state(&self) -> &ContractState<G> {
        &self.state
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn executor_id(&self) -> Digest32 {
        self.executor.id()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Moves the clock forward; it never goes back.
    pub fn advance_to(&mut self, tick: u64) {
        self.tick = self.tick.max(tick);
    }

    /// Public reference of a label, if the label was ever registered.
    pub fn reference(&self, label: &str) -> Option<String> {
        self.universe.reference(label)
    }

    /// Verifies and queues an externally built transaction.
    pub fn submit(&mut self, tx: Transaction) -> Result<(), ContractError> {
        match self.keys.admit(&tx) {
            Ok(()) => {
                self.pending.push(tx);
                Ok(())
            }
            Err(reason) => {
                self.stats.rejected_txs += 1;
                Err(ContractError::Rejected(reason))
            }
        }
    }

    /// Mines the queued transactions into a block created by `creator`.
    pub fn seal(&mut self, creator: Digest32) -> Result<Option<MineOutcome>, ContractError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let txs = std::mem::take(&mut self.pending);
        let outcome = self
            .chain
            .mine_block(txs, creator, self.tick, self.config.strategy, &mut self.rng)?;
        self.stats.blocks += 1;
        self.stats.mining_attempts += outcome.attempts;
        Ok(Some(outcome))
    }

    /// Re-verifies one recorded transaction: its signature and its block's digest and hash.
    pub fn verify_at(&self, height: usize, index: usize) -> Result<(), ContractError> {
        let block = self
            .chain
            .blocks()
            .get(height)
            .ok_or_else(|| ContractError::NotFound(format!("block {height}")))?;
        let tx = block
            .transactions
            .get(index)
            .ok_or_else(|| ContractError::NotFound(format!("transaction {height}/{index}")))?;
        let key = self
            .chain
            .keys()
            .get(&tx.sender)
            .ok_or(ContractError::UnknownId(tx.sender))?;
        if !tx.verify(key) {
            return Err(ContractError::Rejected("signature does not verify".into()));
        }
        if crate::chain::Block::digest_transactions(&block.transactions) != block.data_digest
            || block.recompute_hash() != block.block_hash
        {
            return Err(ContractError::Rejected("block does not match its hash".into()));
        }
        Ok(())
    }

    fn emit(&mut self, contract: &str, method: &str, record: Record<G>) {
        self.state.apply(&record);
        let tx = self.executor.sign(
            json!({"contract": contract, "method": method, "result": record}),
            self.tick,
        );
        self.pending.push(tx);
        self.stats.result_txs += 1;
    }

    fn call(&mut self, caller: &Wallet, contract: &str, method: &str, args: Value) -> Result<(), ContractError> {
        match self.keys.get(&caller.id()) {
            Some(k) if *k == caller.verifying_key() => {}
            Some(_) => return Err(ContractError::WrongKey(caller.id())),
            None => return Err(ContractError::UnknownId(caller.id())),
        }
        let tx = caller.sign(json!({"contract": contract, "method": method, "args": args}), self.tick);
        self.pending.push(tx);
        self.stats.call_txs += 1;
        Ok(())
    }

    fn fresh_id(&mut self, fields: &[&str]) -> Digest32 {
        let field = self.group.scalar_field();
        loop {
            let id = identity_digest(fields, field.random(&mut self.rng));
            if !self.state.is_registered(&id) && id != self.executor.id() {
                return id;
            }
        }
    }

    fn register(&mut self, id: Digest32, role: Role) -> Result<Registered, ContractError> {
        let wallet = Wallet::generate(id, &mut self.rng);
        let vk = wallet.verifying_key_hex();
        let call = wallet.sign(
            json!({
                "contract": "SCPA",
                "method": if role.is_device() { "register_device" } else { "register_user" },
                "verification_key": vk,
                "args": {"role": role},
            }),
            self.tick,
        );
        self.submit(call)?;
        self.stats.call_txs += 1;
        let method = if role.is_device() { "register_device" } else { "register_user" };
        self.emit("SCPA", method, Record::Registered { id, role, verification_key: vk });
        Ok(Registered { id, wallet })
    }

    /// Device identity: `D_ID = SHA-256(id ‖ com ‖ mac ‖ ip ‖ rv)` with fresh `rv`.
    pub fn register_device(&mut self, raw: &RawDevice, role: Role) -> Result<Registered, ContractError> {
        if raw.is_empty() {
            return Err(ContractError::EmptyIdentity);
        }
        if role == Role::User {
            return Err(ContractError::Rejected("devices cannot take the user role".into()));
        }
        let id = self.fresh_id(&[&raw.id, &raw.com, &raw.mac, &raw.ip]);
        self.register(id, role)
    }

    /// `U_ID = SHA-256(id ‖ rv)`.
    pub fn register_user(&mut self, raw_id: &str) -> Result<Registered, ContractError> {
        if raw_id.is_empty() {
            return Err(ContractError::EmptyIdentity);
        }
        let id = self.fresh_id(&[raw_id]);
        self.register(id, Role::User)
    }

    /// H-maps `labels` off-chain and adds the points to the caller's set.
    pub fn scpi_add_att(&mut self, caller: &Wallet, labels: &[&str]) -> Result<Vec<G::G1>, ContractError> {
        let id = caller.id();
        if !self.state.is_registered(&id) {
            return Err(ContractError::UnknownId(id));
        }
        let mut fresh = Vec::with_capacity(labels.len());
        for label in labels {
            let p = self
                .universe
                .register(&self.group, label, &mut self.rng)
                .map_err(abe::AbeError::from)?;
            self.points_by_ref.insert(attribute_ref::<G>(&p), p.clone());
            fresh.push(p);
        }
        self.call(caller, "SCPI", "scpi_add_att", json!({"points": fresh}))?;
        let mut all: Vec<G::G1> = self.state.attributes.get(&id).cloned().unwrap_or_default();
        all.extend(fresh);
        all.sort_by_cached_key(|p| attribute_ref::<G>(p));
        all.dedup();
        self.emit("SCPI", "scpi_add_att", Record::AttributesSet { id, points: all.clone() });
        Ok(all)
    }

    pub fn scpi_get_att(&self, id: &Digest32) -> Result<Vec<G::G1>, ContractError> {
        self.state
            .attributes
            .get(id)
            .cloned()
            .ok_or_else(|| ContractError::NotFound(format!("attributes of {id}")))
    }

    pub fn scpi_del_att(&mut self, caller: &Wallet) -> Result<(), ContractError> {
        let id = caller.id();
        if !self.state.attributes.contains_key(&id) {
            return Err(ContractError::NotFound(format!("attributes of {id}")));
        }
        self.call(caller, "SCPI", "scpi_del_att", json!({}))?;
        self.emit("SCPI", "scpi_del_att", Record::AttributesDeleted { id });
        Ok(())
    }

    /// Composes, converts and stores a policy over the parties' attributes and binds it to `object`.
    pub fn scpa_add_policy(
        &mut self,
        caller: &Wallet,
        subject: Digest32,
        object: Digest32,
        formula: &str,
    ) -> Result<PolicyRecord, ContractError> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.rng.next_u64());
        self.scpa_add_policy_with(caller, subject, object, formula, &mut rng)
    }

    pub fn scpa_add_policy_with<S: ShareSource + ?Sized>(
        &mut self,
        caller: &Wallet,
        subject: Digest32,
        object: Digest32,
        formula: &str,
        source: &mut S,
    ) -> Result<PolicyRecord, ContractError> {
        for id in [subject, object] {
            if !self.state.is_registered(&id) {
                return Err(ContractError::UnknownId(id));
            }
        }
        let mut held = self.state.attribute_refs(&subject);
        held.extend(self.state.attribute_refs(&object));
        let universe = &self.universe;
        let tree = compose_policy(formula, |l| universe.reference(l).is_some_and(|r| held.contains(&r)))?;
        let (tree, matrix, secret) = assign_shares(&tree, source, self.group.scalar_field())?;
        let to_ref = |l: &str| universe.reference(l).expect("composition checked every leaf");
        let record = PolicyRecord {
            policy_id: matrix.policy_id(secret),
            matrix,
            skeleton: tree.skeleton(),
        }
        .relabel(to_ref);
        self.call(
            caller,
            "SCPA",
            "scpa_add_policy",
            json!({"subject": subject, "object": object, "policy_id": record.policy_id}),
        )?;
        let outcome = if self.state.policies.get(&record.policy_id).is_some() {
            StoreOutcome::Duplicate
        } else {
            StoreOutcome::Inserted
        };
        self.emit(
            "SCPA",
            if outcome == StoreOutcome::Inserted { "scpa_store_policy" } else { "scpa_bind_policy" },
            Record::PolicyStored { subject, object, record: record.clone() },
        );
        Ok(record)
    }

    fn judge_internal(&mut self, subject: Digest32, object: Digest32, tick: u64) -> AccessDecision {
        let reason = if !self.state.is_registered(&subject) {
            Some(DecisionReason::UnknownSubject)
        } else if !self.state.is_registered(&object) {
            Some(DecisionReason::UnknownObject)
        } else {
            None
        };
        let (verdict, reason) = match reason {
            Some(r) => (false, r),
            None => match self.state.bindings.get(&object).and_then(|id| self.state.policies.get(id)) {
                None => (false, DecisionReason::NoPolicy),
                Some(record) => judge(record, &self.state.attribute_refs(&subject)),
            },
        };
        let decision = AccessDecision { verdict, subject, object, tick, reason };
        self.emit("SCPD", "scpd_judge_policy", Record::Decision { decision });
        decision
    }

    pub fn scpd_judge_policy(
        &mut self,
        caller: &Wallet,
        subject: Digest32,
        object: Digest32,
        tick: u64,
    ) -> Result<AccessDecision, ContractError> {
        self.advance_to(tick);
        self.call(caller, "SCPD", "scpd_judge_policy", json!({"subject": subject, "object": object}))?;
        Ok(self.judge_internal(subject, object, tick))
    }

    /// Records one more violation and its lockout.
    pub fn scpm_penalize(&mut self, subject: Digest32, tick: u64) -> (u32, super::NextAccess) {
        self.advance_to(tick);
        let t = self.state.illegal.get(&subject).map_or(1, |t| t + 1);
        let next_access = lockout(t, tick);
        self.emit("SCPM", "scpm_penalize", Record::Penalty { subject, t, next_access });
        (t, next_access)
    }

    /// Decrements an expired lockout, then judges again.
    pub fn scpe_enforce(&mut self, caller: &Wallet, object: Digest32, tick: u64) -> Result<EnforceOutcome, ContractError> {
        self.advance_to(tick);
        let subject = caller.id();
        self.call(caller, "SCPE", "scpe_enforce", json!({"object": object}))?;
        let record = |outcome, session_until| Record::Enforcement { subject, object, tick, outcome, session_until };

        if !self.state.is_registered(&object) {
            self.emit("SCPE", "scpe_enforce", record(EnforceOutcome::DeniedUnknown, None));
            return Ok(EnforceOutcome::DeniedUnknown);
        }
        if let Some(s) = self.state.sessions.get(&object) {
            if s.subject != subject && s.until >= tick {
                self.emit("SCPE", "scpe_enforce", record(EnforceOutcome::DeniedBusy, None));
                return Ok(EnforceOutcome::DeniedBusy);
            }
        }
        if let Some(&next) = self.state.penalties.get(&subject) {
            let t_prev = self.state.illegal.get(&subject).copied().unwrap_or(0);
            if next.blocks(tick) {
                let t = t_prev + 1;
                let next_access = lockout(t, tick);
                self.emit("SCPE", "scpe_standing", Record::Standing { subject, t, next_access: Some(next_access) });
                let outcome = EnforceOutcome::DeniedLocked { t, next_access };
                self.emit("SCPE", "scpe_enforce", record(outcome, None));
                return Ok(outcome);
            }
            let t = t_prev.saturating_sub(1);
            let next_access = (t > 0).then_some(next);
            self.emit("SCPE", "scpe_standing", Record::Standing { subject, t, next_access });
        }
        let decision = self.judge_internal(subject, object, tick);
        let outcome = if decision.verdict {
            let until = tick + self.config.session_ticks;
            self.emit("SCPE", "scpe_enforce", record(EnforceOutcome::Granted, Some(until)));
            EnforceOutcome::Granted
        } else {
            let (t, next_access) = self.scpm_penalize(subject, tick);
            let outcome = EnforceOutcome::DeniedPenalized { t, next_access };
            self.emit("SCPE", "scpe_enforce", record(outcome, None));
            outcome
        };
        Ok(outcome)
    }

    fn owner_binding(&mut self, owner: Digest32) -> FieldElement {
        if let Some(h) = self.owner_h.get(&owner) {
            return *h;
        }
        let (_, h) = hash_to_group(&self.group, &owner.to_string(), &mut self.rng).expect("owner label is nonempty");
        self.owner_h.insert(owner, h);
        h
    }

    fn wrap_fresh(
        &mut self,
        owner: Digest32,
        policy_id: PolicyId,
        payload: &[u8],
    ) -> Result<abe::WrappedPayload<G>, ContractError> {
        let h = self.owner_binding(owner);
        let record = self
            .state
            .policies
            .get(&policy_id)
            .ok_or_else(|| ContractError::NotFound(format!("policy {policy_id}")))?;
        let (_, matrix, _) = assign_shares(&record.skeleton, &mut self.rng, self.group.scalar_field())?;
        let points = &self.points_by_ref;
        Ok(abe::wrap(
            &self.group,
            &self.pk,
            payload,
            &matrix,
            h,
            |r| points.get(r).cloned(),
            &mut self.rng,
        )?)
    }

    /// Wraps `payload` under `policy` (default: the owner's bound policy) with fresh shares.
    pub fn sced_encrypt(
        &mut self,
        caller: &Wallet,
        payload: &[u8],
        policy: Option<PolicyId>,
    ) -> Result<Digest32, ContractError> {
        let owner = caller.id();
        let policy_id = match policy.or_else(|| self.state.bindings.get(&owner).copied()) {
            Some(p) => p,
            None => return Err(ContractError::NotFound(format!("policy bound to {owner}"))),
        };
        let wrapped = self.wrap_fresh(owner, policy_id, payload)?;
        let reference = Digest32::of(&serde_json::to_vec(&wrapped).expect("payloads serialize"));
        self.call(caller, "SCED", "sced_encrypt", json!({"policy_id": policy_id, "reference": reference}))?;
        self.emit("SCED", "sced_encrypt", Record::Stored { reference, owner, policy_id, wrapped });
        Ok(reference)
    }

    fn require_session(&self, subject: Digest32, object: Digest32, tick: u64) -> Result<(), ContractError> {
        match self.state.sessions.get(&object) {
            Some(s) if s.subject == subject && s.until >= tick => Ok(()),
            _ => Err(ContractError::NotGranted),
        }
    }

    /// Issues a one-time decryption key for a granted subject, bound to `object`'s `g^h`.
    pub fn sced_issue_key(&mut self, caller: &Wallet, object: Digest32, tick: u64) -> Result<PrivateKey<G>, ContractError> {
        self.advance_to(tick);
        let subject = caller.id();
        self.require_session(subject, object, tick)?;
        let h = self.owner_binding(object);
        let points: HashMap<String, G::G1> = self
            .state
            .attributes
            .get(&subject)
            .map(|ps| ps.iter().map(|p| (attribute_ref::<G>(p), p.clone())).collect())
            .unwrap_or_default();
        let mut attrs: Vec<String> = points.keys().cloned().collect();
        attrs.sort();
        let key = abe::keygen(&self.group, &self.mk, &attrs, h, |r| points.get(r).cloned(), &mut self.rng)?;
        let key_id = Digest32::of(&key.pk.to_bytes());
        self.call(caller, "SCED", "sced_issue_key", json!({"object": object}))?;
        self.emit("SCED", "sced_issue_key", Record::KeyIssued { key_id, subject, object });
        Ok(key)
    }

    /// Outsourced decryption on `edges`, settled by result consensus.
    ///
    /// On success the key is invalidated and, if the accepted plaintext matches
    /// the sealed digest, the payload is re-encrypted under fresh shares.
    pub fn sced_decrypt(
        &mut self,
        caller: &Wallet,
        reference: Digest32,
        key: &PrivateKey<G>,
        edges: &[(Digest32, EdgeBehavior)],
        tick: u64,
    ) -> Result<DecryptOutcome, ContractError> {
        self.advance_to(tick);
        let subject = caller.id();
        let key_id = Digest32::of(&key.pk.to_bytes());
        if self.state.invalidated_keys.contains(&key_id) {
            return Err(ContractError::KeyInvalidated);
        }
        let (key_subject, object) = *self.state.issued_keys.get(&key_id).ok_or(ContractError::UnknownKey)?;
        if key_subject != subject {
            return Err(ContractError::UnknownKey);
        }
        let stored = self
            .state
            .payloads
            .get(&reference)
            .ok_or_else(|| ContractError::NotFound(format!("payload {reference}")))?;
        if stored.owner != object {
            return Err(ContractError::NotGranted);
        }
        self.require_session(subject, object, tick)?;
        if edges.len() < self.config.min_edges {
            return Err(ContractError::TooFewEdges { need: self.config.min_edges, got: edges.len() });
        }
        for (id, _) in edges {
            if self.state.devices.get(id).map(|r| r.role) != Some(Role::Edge) {
                return Err(ContractError::NotAnEdge(*id));
            }
        }
        let wrapped = stored.wrapped.clone();
        self.call(caller, "SCED", "sced_decrypt", json!({"reference": reference}))?;
        self.seal(edges[0].0)?;

        let honest = abe::unwrap(&self.group, key, &wrapped).ok();
        let mut plaintexts: HashMap<Digest32, Vec<u8>> = HashMap::new();
        let mut results = Vec::with_capacity(edges.len());
        let mut rejected = 0;
        for (_, behavior) in edges {
            let local = match behavior {
                EdgeBehavior::SkipWork => {
                    results.push(None);
                    continue;
                }
                EdgeBehavior::ForgeDecrypt => Some(forge(honest.as_deref().unwrap_or_default())),
                EdgeBehavior::Honest | EdgeBehavior::TamperTx => honest.clone(),
            };
            let digest = local.as_ref().map(|m| hex::encode(Sha256::digest(m)));
            let mut tx = self.executor.sign(
                json!({
                    "contract": "SCED",
                    "method": "sced_decrypt",
                    "reference": reference,
                    "subject": subject,
                    "key_id": key_id,
                    "status": if local.is_some() { "ok" } else { "failed" },
                    "digest": digest,
                }),
                tick,
            );
            if *behavior == EdgeBehavior::TamperTx {
                tx.payload["digest"] = json!(hex::encode([0u8; 32]));
            }
            if !tx.verify(&self.executor.verifying_key()) {
                rejected += 1;
                self.stats.rejected_txs += 1;
                results.push(None);
                continue;
            }
            if let Some(m) = local {
                plaintexts.insert(crate::chain::Block::digest_transactions(std::slice::from_ref(&tx)), m);
            }
            results.push(Some(vec![tx]));
        }

        let nodes: Vec<ConsensusNode> = edges
            .iter()
            .map(|(id, _)| ConsensusNode {
                id: *id,
                seed: self.rng.next_u64(),
                strategy: self.config.strategy,
            })
            .collect();
        let round = consensus_round(&nodes, &results, self.chain.head().block_hash, self.config.n_bits, tick)?;
        self.stats.consensus_rounds += 1;
        self.stats.mining_attempts += round.attempts.iter().map(|(_, a)| a).sum::<u64>();
        let Some(block) = round.accepted.clone() else {
            self.stats.consensus_failures += 1;
            return Err(ContractError::ConsensusFailed { candidates: round.candidates.len() });
        };
        let support = round.leader().map_or(0, |c| c.support());
        let plaintext = plaintexts.get(&block.data_digest).cloned();
        self.chain.append(block)?;
        self.stats.blocks += 1;
        let block_height = self.chain.height();
        let Some(plaintext) = plaintext else {
            return Err(ContractError::DecryptionFailed);
        };

        self.emit("SCED", "sced_release", Record::Released { reference, subject, object, key_id });
        let verified = Sha256::digest(&plaintext)[..] == wrapped.digest[..];
        let reencrypted = if verified {
            let policy_id = self.state.payloads[&reference].policy_id;
            let fresh = self.wrap_fresh(object, policy_id, &plaintext)?;
            self.emit("SCED", "sced_reencrypt", Record::Reencrypted { reference, wrapped: fresh });
            true
        } else {
            false
        };
        Ok(DecryptOutcome {
            plaintext,
            verified,
            reencrypted,
            support,
            participants: edges.len(),
            rejected,
            block_height,
        })
    }

    /// The current ciphertext stored under `reference`.
    pub fn payload(&self, reference: &Digest32) -> Option<&abe::WrappedPayload<G>> {
        self.state.payloads.get(reference).map(|p| &p.wrapped)
    }
}

/// What a forging edge reports instead of the plaintext: always a different byte string.
fn forge(plaintext: &[u8]) -> Vec<u8> {
    let mut out: Vec<u8> = plaintext.iter().map(|b| b ^ 0x5a).collect();
    out.push(0xa5);
    out
}
