//! The six access-control contracts and registration, as deterministic state
//! machines whose every state change is a signed result transaction.
//!
//! Public data never carries attribute labels: attributes appear as their
//! H-points, and policies, keys and ciphertexts are labeled by
//! [`attribute_ref`](crate::abe::attribute_ref) instead.

mod engine;
mod state;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::abe::AbeError;
use crate::chain::{ChainError, Digest32};
use crate::field::FieldElement;
use crate::policy::{build_tree, parse_policy, PolicyError, PolicyRecord, ThresholdTree};

pub use engine::{DecryptOutcome, EdgeBehavior, Engine, EngineConfig, EngineStats, Registered};
pub use state::{ContractState, Record, Registration, Session, StoredPayload};

/// Violations after which the lockout becomes permanent.
pub const MAX_TIMED_VIOLATIONS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error("all identity dimensions are empty")]
    EmptyIdentity,
    #[error("unknown id {0}")]
    UnknownId(Digest32),
    #[error("{0} not found")]
    NotFound(String),
    #[error("attribute `{0}` is held by neither party")]
    PolicyComposition(String),
    #[error("caller wallet does not match the registered key of {0}")]
    WrongKey(Digest32),
    #[error("{0} is not an edge node")]
    NotAnEdge(Digest32),
    #[error("need at least {need} edge nodes, got {got}")]
    TooFewEdges { need: usize, got: usize },
    #[error("no active access grant")]
    NotGranted,
    #[error("key was never issued")]
    UnknownKey,
    #[error("key was invalidated by an earlier decryption")]
    KeyInvalidated,
    #[error("consensus failed: {candidates} competing results, none with a majority")]
    ConsensusFailed { candidates: usize },
    #[error("edges agreed that the payload cannot be decrypted")]
    DecryptionFailed,
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Terminal,
    Edge,
    Manager,
    User,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Terminal => "terminal",
            Role::Edge => "edge",
            Role::Manager => "manager",
            Role::User => "user",
        }
    }

    pub fn is_device(self) -> bool {
        self != Role::User
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Role::Terminal, Role::Edge, Role::Manager, Role::User]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

/// The four identity dimensions of a device; empty strings are absent.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawDevice {
    pub id: String,
    pub com: String,
    pub mac: String,
    pub ip: String,
}

impl RawDevice {
    pub fn named(id: &str) -> Self {
        Self {
            id: id.to_string(),
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        [&self.id, &self.com, &self.mac, &self.ip].iter().all(|s| s.is_empty())
    }
}

/// `SHA-256(len ‖ field ...)‖ rv)` over the given fields, each length-prefixed (u32 BE).
pub fn identity_digest(fields: &[&str], rv: FieldElement) -> Digest32 {
    let mut h = Sha256::new();
    for f in fields {
        h.update((f.len() as u32).to_be_bytes());
        h.update(f.as_bytes());
    }
    h.update(rv.value().to_be_bytes());
    Digest32(h.finalize().into())
}

/// Next permitted access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextAccess {
    At(u64),
    Permanent,
}

impl NextAccess {
    /// Whether access at `tick` is still blocked.
    pub fn blocks(&self, tick: u64) -> bool {
        match self {
            NextAccess::At(t) => tick < *t,
            NextAccess::Permanent => true,
        }
    }
}

/// Lockout after the `t`-th violation at `tick`: `2^t` hours, permanent past ten.
pub fn lockout(t: u32, tick: u64) -> NextAccess {
    if t <= MAX_TIMED_VIOLATIONS {
        NextAccess::At(tick + (1u64 << t))
    } else {
        NextAccess::Permanent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    Satisfied,
    UnknownSubject,
    UnknownObject,
    NoPolicy,
    NoAttributes,
    InsufficientAttributes,
    PolicyIdMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub verdict: bool,
    pub subject: Digest32,
    pub object: Digest32,
    pub tick: u64,
    pub reason: DecisionReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum EnforceOutcome {
    Granted,
    DeniedPenalized { t: u32, next_access: NextAccess },
    DeniedLocked { t: u32, next_access: NextAccess },
    DeniedUnknown,
    DeniedBusy,
}

impl EnforceOutcome {
    pub fn granted(&self) -> bool {
        matches!(self, EnforceOutcome::Granted)
    }
}

/// Parses `formula` and checks every leaf against `available`.
pub fn compose_policy(formula: &str, available: impl Fn(&str) -> bool) -> Result<ThresholdTree, ContractError> {
    let tree = build_tree(&parse_policy(formula)?)?;
    if let Some(missing) = tree.leaves().into_iter().find(|l| !available(l)) {
        return Err(ContractError::PolicyComposition(missing.to_string()));
    }
    Ok(tree)
}

/// Judgment: rebuild the root secret from the stored shares of the
/// subject's matching leaves and compare the recomputed policy id.
pub fn judge(record: &PolicyRecord, subject_refs: &BTreeSet<String>) -> (bool, DecisionReason) {
    if subject_refs.is_empty() {
        return (false, DecisionReason::NoAttributes);
    }
    match record.matrix.recover_secret(|leaf| subject_refs.contains(&leaf.attribute)) {
        None => (false, DecisionReason::InsufficientAttributes),
        Some(s) if record.matrix.policy_id(s) == record.policy_id => (true, DecisionReason::Satisfied),
        Some(_) => (false, DecisionReason::PolicyIdMismatch),
    }
}
