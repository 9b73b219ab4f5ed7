//! Hash-linked proof-of-work chain with ECDSA-signed transactions and result consensus.

mod block;
mod consensus;
mod ledger;
mod tx;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use block::{
    block_hash, genesis, leading_zero_bits, mine, Block, HashPrefix, MineOutcome, Strategy, MAX_MINING_BITS,
};
pub use consensus::{consensus_round, Candidate, ConsensusNode, RoundOutcome};
pub use ledger::{read_jsonl, to_jsonl, validate_blocks, write_jsonl, Chain, KeyDirectory};
pub use tx::{parse_verifying_key, Transaction, Wallet};

/// A 32-byte digest or node id, hex-encoded in text form.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0; 32]);

    pub fn of(bytes: &[u8]) -> Digest32 {
        Digest32(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..", &hex::encode(&self.0[..6]))
    }
}

impl FromStr for Digest32 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        crate::hexutil::decode_array(s).map(Digest32)
    }
}

impl From<Digest32> for String {
    fn from(d: Digest32) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Digest32 {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("block 0 is not the genesis block")]
    Genesis,
    #[error("block {height}: prev_hash does not match the predecessor")]
    BrokenLink { height: usize },
    #[error("block {height}: data digest does not match the transactions")]
    DataDigest { height: usize },
    #[error("block {height}: stored hash does not match the header")]
    BlockHash { height: usize },
    #[error("block {height}: hash does not meet {n_bits} leading zero bits")]
    Difficulty { height: usize, n_bits: u32 },
    #[error("block {height}: difficulty {n_bits} is below the chain minimum {minimum}")]
    TooEasy { height: usize, n_bits: u32, minimum: u32 },
    #[error("block {height}: created_at goes backwards")]
    Timestamp { height: usize },
    #[error("block {height}, transaction {index}: {reason}")]
    Transaction { height: usize, index: usize, reason: String },
    #[error("nonce space exhausted")]
    NonceExhausted,
    #[error("mining stopped after {attempts} attempts without a solution")]
    Stopped { attempts: u64 },
    #[error("difficulty {0} exceeds the 32-bit desk-scale limit")]
    DifficultyTooHigh(u32),
    #[error("I/O error: {0}")]
    Io(String),
}

impl ChainError {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            ChainError::Parse { .. } => "parse",
            ChainError::Genesis => "genesis",
            ChainError::BrokenLink { .. } => "broken_link",
            ChainError::DataDigest { .. } => "data_digest",
            ChainError::BlockHash { .. } => "block_hash",
            ChainError::Difficulty { .. } => "difficulty",
            ChainError::TooEasy { .. } => "too_easy",
            ChainError::Timestamp { .. } => "timestamp",
            ChainError::Transaction { .. } => "transaction",
            ChainError::NonceExhausted => "nonce_exhausted",
            ChainError::Stopped { .. } => "stopped",
            ChainError::DifficultyTooHigh(_) => "difficulty_too_high",
            ChainError::Io(_) => "io",
        }
    }
}
