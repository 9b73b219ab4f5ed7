use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainError, Digest32, Transaction};

/// Highest difficulty `mine` accepts.
pub const MAX_MINING_BITS: u32 = 32;

const STOP_POLL_INTERVAL: u64 = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub transactions: Vec<Transaction>,
    pub prev_hash: Digest32,
    pub creator: Digest32,
    pub created_at: u64,
    pub data_digest: Digest32,
    pub nonce: u64,
    pub n_bits: u32,
    pub block_hash: Digest32,
}

impl Block {
    pub fn digest_transactions(transactions: &[Transaction]) -> Digest32 {
        Digest32::of(&serde_json::to_vec(transactions).expect("transactions always serialize"))
    }

    /// Unmined block over `transactions`; `nonce` and `block_hash` are placeholders.
    pub fn template(
        transactions: Vec<Transaction>,
        prev_hash: Digest32,
        creator: Digest32,
        created_at: u64,
        n_bits: u32,
    ) -> Block {
        Block {
            data_digest: Block::digest_transactions(&transactions),
            transactions,
            prev_hash,
            creator,
            created_at,
            nonce: 0,
            n_bits,
            block_hash: Digest32::ZERO,
        }
    }

    pub fn prefix(&self) -> HashPrefix {
        HashPrefix::new(self.data_digest, self.prev_hash, self.created_at, self.n_bits, self.creator)
    }

    pub fn recompute_hash(&self) -> Digest32 {
        self.prefix().hash(self.nonce)
    }

    /// Mines this template in place.
    pub fn seal<R: RngCore>(
        &mut self,
        strategy: Strategy,
        rng: &mut R,
        stop: Option<&AtomicBool>,
    ) -> Result<MineOutcome, ChainError> {
        let outcome = mine(&self.prefix(), self.n_bits, strategy, rng, stop)?;
        self.nonce = outcome.nonce;
        self.block_hash = outcome.hash;
        Ok(outcome)
    }
}

/// `SHA-256(data_digest ‖ prev_hash ‖ created_at ‖ nonce ‖ n_bits ‖ creator)`, integers big-endian.
pub fn block_hash(
    data_digest: Digest32,
    prev_hash: Digest32,
    created_at: u64,
    nonce: u64,
    n_bits: u32,
    creator: Digest32,
) -> Digest32 {
    HashPrefix::new(data_digest, prev_hash, created_at, n_bits, creator).hash(nonce)
}

/// Hash state with everything before the nonce already absorbed.
#[derive(Clone)]
pub struct HashPrefix {
    state: Sha256,
    suffix: [u8; 36],
}

impl fmt::Debug for HashPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HashPrefix").finish_non_exhaustive()
    }
}

impl HashPrefix {
    pub fn new(
        data_digest: Digest32,
        prev_hash: Digest32,
        created_at: u64,
        n_bits: u32,
        creator: Digest32,
    ) -> Self {
        let mut state = Sha256::new();
        state.update(data_digest.0);
        state.update(prev_hash.0);
        state.update(created_at.to_be_bytes());
        let mut suffix = [0u8; 36];
        suffix[..4].copy_from_slice(&n_bits.to_be_bytes());
        suffix[4..].copy_from_slice(&creator.0);
        Self { state, suffix }
    }

    pub fn hash(&self, nonce: u64) -> Digest32 {
        let mut h = self.state.clone();
        h.update(nonce.to_be_bytes());
        h.update(self.suffix);
        Digest32(h.finalize().into())
    }
}

pub fn leading_zero_bits(d: &Digest32) -> u32 {
    let mut n = 0;
    for byte in d.0 {
        if byte == 0 {
            n += 8;
        } else {
            return n + byte.leading_zeros();
        }
    }
    n
}

/// The fixed first block: no transactions, zero links, difficulty 0.
pub fn genesis() -> Block {
    let mut b = Block::template(Vec::new(), Digest32::ZERO, Digest32::ZERO, 0, 0);
    b.block_hash = b.recompute_hash();
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Nonces 0, 1, 2, ...
    Sequential,
    /// Uniform nonces, never repeating.
    Random,
    /// Increment while the hash's first bit is set, otherwise jump to an unused random nonce.
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sequential, Strategy::Random, Strategy::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Sequential => "sequential",
            Strategy::Random => "random",
            Strategy::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected sequential, random or hybrid)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MineOutcome {
    pub nonce: u64,
    pub hash: Digest32,
    /// Hash evaluations, including the successful one.
    pub attempts: u64,
}

/// Searches for a nonce whose hash has at least `n_bits` leading zero bits.
///
/// `stop` is polled every 1024 attempts; a raised flag yields `ChainError::Stopped` with the attempts so far.
pub fn mine<R: RngCore>(
    prefix: &HashPrefix,
    n_bits: u32,
    strategy: Strategy,
    rng: &mut R,
    stop: Option<&AtomicBool>,
) -> Result<MineOutcome, ChainError> {
    if n_bits > MAX_MINING_BITS {
        return Err(ChainError::DifficultyTooHigh(n_bits));
    }
    let mut attempts = 0u64;
    let found = |h: &Digest32| leading_zero_bits(h) >= n_bits;

    match strategy {
        Strategy::Sequential => {
            let mut nonce = 0u64;
            loop {
                let h = evaluate(prefix, nonce, &mut attempts, stop)?;
                if found(&h) {
                    return Ok(MineOutcome { nonce, hash: h, attempts });
                }
                nonce = nonce.checked_add(1).ok_or(ChainError::NonceExhausted)?;
            }
        }
        Strategy::Random => {
            let mut used = HashSet::new();
            loop {
                let nonce = fresh_nonce(rng, &used)?;
                used.insert(nonce);
                let h = evaluate(prefix, nonce, &mut attempts, stop)?;
                if found(&h) {
                    return Ok(MineOutcome { nonce, hash: h, attempts });
                }
            }
        }
        Strategy::Hybrid => {
            let mut used = HashSet::new();
            let mut nonce = 0u64;
            loop {
                used.insert(nonce);
                let h = evaluate(prefix, nonce, &mut attempts, stop)?;
                if found(&h) {
                    return Ok(MineOutcome { nonce, hash: h, attempts });
                }
                nonce = if h.0[0] & 0x80 != 0 {
                    nonce.wrapping_add(1)
                } else {
                    fresh_nonce(rng, &used)?
                };
            }
        }
    }
}

fn evaluate(
    prefix: &HashPrefix,
    nonce: u64,
    attempts: &mut u64,
    stop: Option<&AtomicBool>,
) -> Result<Digest32, ChainError> {
    if *attempts > 0 && *attempts % STOP_POLL_INTERVAL == 0 {
        if let Some(flag) = stop {
            if flag.load(Ordering::Relaxed) {
                return Err(ChainError::Stopped { attempts: *attempts });
            }
        }
    }
    *attempts += 1;
    Ok(prefix.hash(nonce))
}

fn fresh_nonce<R: RngCore>(rng: &mut R, used: &HashSet<u64>) -> Result<u64, ChainError> {
    if used.len() as u128 == 1u128 << 64 {
        return Err(ChainError::NonceExhausted);
    }
    loop {
        let n = rng.next_u64();
        if !used.contains(&n) {
            return Ok(n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn prefix(tag: u8) -> HashPrefix {
        HashPrefix::new(Digest32([tag; 32]), Digest32::ZERO, 5, 8, Digest32([1; 32]))
    }

    #[test]
    fn prefix_matches_one_shot_hash() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&[3u8; 32]);
        bytes.extend_from_slice(&[0u8; 32]);
        bytes.extend_from_slice(&5u64.to_be_bytes());
        bytes.extend_from_slice(&42u64.to_be_bytes());
        bytes.extend_from_slice(&8u32.to_be_bytes());
        bytes.extend_from_slice(&[1u8; 32]);
        assert_eq!(prefix(3).hash(42), Digest32::of(&bytes));
        assert_eq!(
            block_hash(Digest32([3; 32]), Digest32::ZERO, 5, 42, 8, Digest32([1; 32])),
            Digest32::of(&bytes)
        );
    }

    #[test]
    fn leading_zeros() {
        let mut d = Digest32::ZERO;
        assert_eq!(leading_zero_bits(&d), 256);
        d.0[1] = 0x10;
        assert_eq!(leading_zero_bits(&d), 11);
        d.0[0] = 0x80;
        assert_eq!(leading_zero_bits(&d), 0);
    }

    #[test]
    fn zero_difficulty_accepts_first_nonce() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for s in Strategy::ALL {
            let out = mine(&prefix(1), 0, s, &mut rng, None).unwrap();
            assert_eq!(out.attempts, 1, "{s}");
        }
        assert_eq!(mine(&prefix(1), 0, Strategy::Sequential, &mut rng, None).unwrap().nonce, 0);
    }

    #[test]
    fn every_strategy_meets_eight_bits() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for s in Strategy::ALL {
            let out = mine(&prefix(2), 8, s, &mut rng, None).unwrap();
            assert_eq!(out.hash.0[0], 0, "{s}");
            assert_eq!(prefix(2).hash(out.nonce), out.hash);
        }
    }

    #[test]
    fn too_hard_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(
            mine(&prefix(0), 33, Strategy::Random, &mut rng, None),
            Err(ChainError::DifficultyTooHigh(33))
        );
    }

    #[test]
    fn raised_stop_flag_interrupts() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let stop = AtomicBool::new(true);
        // The flag is first seen at the first poll.
        assert_eq!(
            mine(&prefix(0), 32, Strategy::Sequential, &mut rng, Some(&stop)),
            Err(ChainError::Stopped { attempts: STOP_POLL_INTERVAL })
        );
    }

    #[test]
    fn genesis_is_constant() {
        let g = genesis();
        assert_eq!(g, genesis());
        assert_eq!(g.n_bits, 0);
        assert_eq!(g.recompute_hash(), g.block_hash);
        assert_eq!(g.data_digest, Digest32::of(b"[]"));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("pow".parse::<Strategy>().is_err());
    }
}
