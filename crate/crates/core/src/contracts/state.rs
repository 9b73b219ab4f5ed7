use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::abe::{attribute_ref, PublicKey, WrappedPayload};
use crate::chain::{Digest32, Transaction};
use crate::pairing::PairingGroup;
use crate::policy::{PolicyId, PolicyRecord, PolicyRegistry};

use super::{AccessDecision, EnforceOutcome, NextAccess, Role};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub role: Role,
    pub verification_key: String,
}

/// An active grant: `subject` may use `object` until tick `until` inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub subject: Digest32,
    pub until: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StoredPayload<G: PairingGroup> {
    pub owner: Digest32,
    pub policy_id: PolicyId,
    pub version: u32,
    pub wrapped: WrappedPayload<G>,
}

/// A state change, carried as the `result` of an executor-signed transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "")]
pub enum Record<G: PairingGroup> {
    Setup {
        public_key: PublicKey<G>,
    },
    Registered {
        id: Digest32,
        role: Role,
        verification_key: String,
    },
    AttributesSet {
        id: Digest32,
        points: Vec<G::G1>,
    },
    AttributesDeleted {
        id: Digest32,
    },
    PolicyStored {
        subject: Digest32,
        object: Digest32,
        record: PolicyRecord,
    },
    Decision {
        decision: AccessDecision,
    },
    Penalty {
        subject: Digest32,
        t: u32,
        next_access: NextAccess,
    },
    /// Adjusts the violation count; `t = 0` clears the record.
    Standing {
        subject: Digest32,
        t: u32,
        next_access: Option<NextAccess>,
    },
    Enforcement {
        subject: Digest32,
        object: Digest32,
        tick: u64,
        #[serde(flatten)]
        outcome: EnforceOutcome,
        session_until: Option<u64>,
    },
    Stored {
        reference: Digest32,
        owner: Digest32,
        policy_id: PolicyId,
        wrapped: WrappedPayload<G>,
    },
    KeyIssued {
        key_id: Digest32,
        subject: Digest32,
        object: Digest32,
    },
    Released {
        reference: Digest32,
        subject: Digest32,
        object: Digest32,
        key_id: Digest32,
    },
    Reencrypted {
        reference: Digest32,
        wrapped: WrappedPayload<G>,
    },
}

/// The on-chain registries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ContractState<G: PairingGroup> {
    pub public_key: Option<PublicKey<G>>,
    /// `D_HashID`.
    pub devices: BTreeMap<Digest32, Registration>,
    /// `U_HashID`.
    pub users: BTreeMap<Digest32, Registration>,
    /// `A_HashID`: points sorted by reference.
    pub attributes: BTreeMap<Digest32, Vec<G::G1>>,
    /// `P_HashID`.
    pub policies: PolicyRegistry,
    /// Object to the policy it is bound to.
    pub bindings: BTreeMap<Digest32, PolicyId>,
    /// `I_rec`: violation counts, all at least 1.
    pub illegal: BTreeMap<Digest32, u32>,
    /// `PM`.
    pub penalties: BTreeMap<Digest32, NextAccess>,
    /// Object to its active session.
    pub sessions: BTreeMap<Digest32, Session>,
    pub payloads: BTreeMap<Digest32, StoredPayload<G>>,
    pub issued_keys: BTreeMap<Digest32, (Digest32, Digest32)>,
    pub invalidated_keys: BTreeSet<Digest32>,
}

impl<G: PairingGroup> Default for ContractState<G> {
    fn default() -> Self {
        Self {
            public_key: None,
            devices: BTreeMap::new(),
            users: BTreeMap::new(),
            attributes: BTreeMap::new(),
            policies: PolicyRegistry::default(),
            bindings: BTreeMap::new(),
            illegal: BTreeMap::new(),
            penalties: BTreeMap::new(),
            sessions: BTreeMap::new(),
            payloads: BTreeMap::new(),
            issued_keys: BTreeMap::new(),
            invalidated_keys: BTreeSet::new(),
        }
    }
}

impl<G: PairingGroup> ContractState<G> {
    pub fn registration(&self, id: &Digest32) -> Option<&Registration> {
        self.devices.get(id).or_else(|| self.users.get(id))
    }

    pub fn is_registered(&self, id: &Digest32) -> bool {
        self.registration(id).is_some()
    }

    /// References of the subject's attribute points.
    pub fn attribute_refs(&self, id: &Digest32) -> BTreeSet<String> {
        self.attributes
            .get(id)
            .map(|ps| ps.iter().map(attribute_ref::<G>).collect())
            .unwrap_or_default()
    }

    pub fn apply(&mut self, record: &Record<G>) {
        match record {
            Record::Setup { public_key } => self.public_key = Some(public_key.clone()),
            Record::Registered { id, role, verification_key } => {
                let reg = Registration {
                    role: *role,
                    verification_key: verification_key.clone(),
                };
                if role.is_device() {
                    self.devices.insert(*id, reg);
                } else {
                    self.users.insert(*id, reg);
                }
            }
            Record::AttributesSet { id, points } => {
                self.attributes.insert(*id, points.clone());
            }
            Record::AttributesDeleted { id } => {
                self.attributes.remove(id);
            }
            Record::PolicyStored { object, record, .. } => {
                self.policies.insert(record.clone());
                self.bindings.insert(*object, record.policy_id);
            }
            Record::Decision { .. } => {}
            Record::Penalty { subject, t, next_access } => {
                self.illegal.insert(*subject, *t);
                self.penalties.insert(*subject, *next_access);
            }
            Record::Standing { subject, t, next_access } => {
                if *t == 0 {
                    self.illegal.remove(subject);
                } else {
                    self.illegal.insert(*subject, *t);
                }
                match next_access {
                    Some(n) => self.penalties.insert(*subject, *n),
                    None => self.penalties.remove(subject),
                };
            }
            Record::Enforcement { subject, object, session_until, .. } => {
                if let Some(until) = session_until {
                    self.sessions.insert(*object, Session { subject: *subject, until: *until });
                }
            }
            Record::Stored { reference, owner, policy_id, wrapped } => {
                self.payloads.insert(
                    *reference,
                    StoredPayload {
                        owner: *owner,
                        policy_id: *policy_id,
                        version: 0,
                        wrapped: wrapped.clone(),
                    },
                );
            }
            Record::KeyIssued { key_id, subject, object } => {
                self.issued_keys.insert(*key_id, (*subject, *object));
            }
            Record::Released { object, key_id, .. } => {
                self.invalidated_keys.insert(*key_id);
                self.sessions.remove(object);
            }
            Record::Reencrypted { reference, wrapped } => {
                if let Some(p) = self.payloads.get_mut(reference) {
                    p.wrapped = wrapped.clone();
                    p.version += 1;
                }
            }
        }
    }

    /// Rebuilds the registries from the result transactions `executor` signed.
    pub fn replay<'a>(executor: Digest32, txs: impl IntoIterator<Item = &'a Transaction>) -> Result<Self, String> {
        let mut state = Self::default();
        for tx in txs {
            if tx.sender != executor {
                continue;
            }
            let Some(result) = tx.payload.get("result") else {
                continue;
            };
            let record: Record<G> = serde_json::from_value(result.clone()).map_err(|e| e.to_string())?;
            state.apply(&record);
        }
        Ok(state)
    }
}
