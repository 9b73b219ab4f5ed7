//! Result consensus: miners keep working after the first solution and support a
//! candidate only if re-hashing it with their own result reproduces its hash.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{mine, Block, ChainError, Digest32, HashPrefix, Strategy, Transaction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsensusNode {
    pub id: Digest32,
    pub seed: u64,
    pub strategy: Strategy,
}

/// One entry of the round's result set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub block_hash: Digest32,
    pub nonce: u64,
    pub creator: Digest32,
    /// Supporters in arrival order; the creator is first.
    pub supporters: Vec<Digest32>,
    #[serde(skip)]
    proposer: usize,
}

impl Candidate {
    pub fn support(&self) -> usize {
        self.supporters.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundOutcome {
    /// The block holding the majority result, if any.
    pub accepted: Option<Block>,
    pub candidates: Vec<Candidate>,
    /// `(node, attempts)` in finishing order; abstaining nodes are absent.
    pub attempts: Vec<(Digest32, u64)>,
    pub participants: usize,
}

impl RoundOutcome {
    /// Highest support, ties to the smaller hash.
    pub fn leader(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .max_by(|a, b| a.support().cmp(&b.support()).then(b.block_hash.cmp(&a.block_hash)))
    }
}

/// Runs one round over the nodes' local results.
///
/// `results[i]` is node `i`'s transaction list, whose JSON encoding is its message `m`;
/// `None` means the node does no work. Abstainers still count toward the majority
/// denominator. Nodes act in order of (attempts needed, id), which is deterministic
/// in the seeds.
pub fn consensus_round(
    nodes: &[ConsensusNode],
    results: &[Option<Vec<Transaction>>],
    prev_hash: Digest32,
    n_bits: u32,
    tick: u64,
) -> Result<RoundOutcome, ChainError> {
    assert_eq!(nodes.len(), results.len(), "one result slot per node");
    let digests: Vec<Option<Digest32>> = results
        .iter()
        .map(|r| r.as_deref().map(Block::digest_transactions))
        .collect();

    let mined: Vec<Option<Result<(u64, Digest32, u64), ChainError>>> = std::thread::scope(|s| {
        let handles: Vec<_> = nodes
            .iter()
            .zip(&digests)
            .map(|(node, digest)| {
                digest.map(|d| {
                    s.spawn(move || {
                        let mut rng = ChaCha20Rng::seed_from_u64(node.seed);
                        let prefix = HashPrefix::new(d, prev_hash, tick, n_bits, node.id);
                        mine(&prefix, n_bits, node.strategy, &mut rng, None)
                            .map(|o| (o.attempts, o.hash, o.nonce))
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.map(|h| h.join().expect("mining thread panicked")))
            .collect()
    });

    let mut order = Vec::new();
    for (i, m) in mined.into_iter().enumerate() {
        if let Some(m) = m {
            let (attempts, hash, nonce) = m?;
            order.push((attempts, nodes[i].id, i, hash, nonce));
        }
    }
    order.sort_by_key(|&(attempts, id, ..)| (attempts, id));

    let n = nodes.len();
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut finished = Vec::new();
    let mut winner = None;
    for (attempts, id, i, hash, nonce) in order {
        finished.push((id, attempts));
        let own = digests[i].expect("only working nodes mine");
        let backed = candidates.iter_mut().position(|c| {
            HashPrefix::new(own, prev_hash, tick, n_bits, c.creator).hash(c.nonce) == c.block_hash
        });
        let at = match backed {
            Some(k) => {
                candidates[k].supporters.push(id);
                k
            }
            None => {
                candidates.push(Candidate {
                    block_hash: hash,
                    nonce,
                    creator: id,
                    supporters: vec![id],
                    proposer: i,
                });
                candidates.len() - 1
            }
        };
        if 2 * candidates[at].support() > n {
            winner = Some(at);
            break;
        }
    }

    let accepted = winner.map(|k| {
        let c = &candidates[k];
        let txs = results[c.proposer].clone().expect("proposer has a result");
        Block {
            data_digest: digests[c.proposer].expect("proposer has a digest"),
            transactions: txs,
            prev_hash,
            creator: c.creator,
            created_at: tick,
            nonce: c.nonce,
            n_bits,
            block_hash: c.block_hash,
        }
    });
    Ok(RoundOutcome {
        accepted,
        candidates,
        attempts: finished,
        participants: n,
    })
}
