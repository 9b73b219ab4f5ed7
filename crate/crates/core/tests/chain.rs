use edgeac_core::chain::{
    consensus_round, read_jsonl, validate_blocks, Block, Chain, ChainError, ConsensusNode, Digest32, Strategy,
    Transaction, Wallet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

fn wallet(name: &str, seed: u64) -> Wallet {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Wallet::generate(Digest32::of(name.as_bytes()), &mut rng)
}

fn registration(w: &Wallet, tick: u64) -> Transaction {
    w.sign(json!({"verification_key": w.verifying_key_hex()}), tick)
}

/// A short chain with registrations and signed contract calls from two senders.
fn small_chain(n_bits: u32) -> Chain {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let a = wallet("terminal-a", 1);
    let b = wallet("edge-b", 2);
    let mut chain = Chain::new(n_bits);
    chain
        .mine_block(vec![registration(&a, 1), registration(&b, 1)], b.id(), 1, Strategy::Hybrid, &mut rng)
        .unwrap();
    chain
        .mine_block(
            vec![a.sign(json!({"contract": "SCPI", "method": "scpi_add_att", "n": 3}), 2)],
            b.id(),
            2,
            Strategy::Random,
            &mut rng,
        )
        .unwrap();
    chain
        .mine_block(
            vec![
                b.sign(json!({"contract": "SCPD", "method": "scpd_judge_policy", "verdict": true}), 3),
                a.sign(json!({"data": "x\u{e9}\"y"}), 3),
            ],
            a.id(),
            3,
            Strategy::Sequential,
            &mut rng,
        )
        .unwrap();
    chain
}

#[test]
fn ten_mined_blocks_validate() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let w = wallet("miner", 3);
    let mut chain = Chain::new(8);
    chain.mine_block(vec![registration(&w, 0)], w.id(), 0, Strategy::Hybrid, &mut rng).unwrap();
    for tick in 1..10 {
        let txs = vec![w.sign(json!({"tick": tick}), tick)];
        chain.mine_block(txs, w.id(), tick, Strategy::ALL[tick as usize % 3], &mut rng).unwrap();
    }
    assert_eq!(chain.height(), 10);
    chain.validate().unwrap();
    let reread = read_jsonl(chain.to_jsonl().as_bytes()).unwrap();
    assert!(validate_blocks(&reread, 8).is_ok());
    assert!(chain.blocks().iter().skip(1).all(|b| b.block_hash.0[0] == 0));
}

#[test]
fn tampered_transaction_fails_validation() {
    let chain = small_chain(4);
    let mut blocks = chain.blocks().to_vec();
    blocks[2].transactions[0].payload["n"] = json!(4);
    assert_eq!(validate_blocks(&blocks, 4), Err(ChainError::DataDigest { height: 2 }));
    // Re-digesting and re-hashing still leaves the signature broken.
    blocks[2].data_digest = Block::digest_transactions(&blocks[2].transactions);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    blocks[2].seal(Strategy::Sequential, &mut rng, None).unwrap();
    assert!(matches!(
        validate_blocks(&blocks[..3], 4),
        Err(ChainError::Transaction { height: 2, index: 0, .. })
    ));
}

#[test]
fn every_single_bit_flip_is_detected() {
    let chain = small_chain(4);
    let text = chain.to_jsonl().into_bytes();
    assert!(validate_blocks(&read_jsonl(&text).unwrap(), 0).is_ok());
    let mut undetected = Vec::new();
    for byte in 0..text.len() {
        for bit in 0..8 {
            let mut mutated = text.clone();
            mutated[byte] ^= 1 << bit;
            let ok = read_jsonl(&mutated).map(|b| validate_blocks(&b, 0).is_ok()).unwrap_or(false);
            if ok {
                undetected.push((byte, bit));
            }
        }
    }
    assert!(undetected.is_empty(), "undetected flips at {undetected:?}");
}

#[test]
fn foreign_genesis_is_rejected() {
    let chain = small_chain(2);
    let mut blocks = chain.blocks().to_vec();
    blocks[0].created_at = 1;
    assert_eq!(validate_blocks(&blocks, 0), Err(ChainError::Genesis));
    assert_eq!(validate_blocks(&[], 0), Err(ChainError::Genesis));
}

fn nodes(n: usize) -> Vec<ConsensusNode> {
    (0..n)
        .map(|i| ConsensusNode {
            id: Digest32::of(format!("edge-{i}").as_bytes()),
            seed: 1000 + i as u64,
            strategy: Strategy::ALL[i % 3],
        })
        .collect()
}

#[test]
fn majority_result_wins_for_every_assignment() {
    let manager = wallet("manager", 9);
    let honest = vec![manager.sign(json!({"m": "honest"}), 5)];
    let forged = vec![manager.sign(json!({"m": "forged"}), 5)];
    for n in 1..=7usize {
        let ns = nodes(n);
        for mask in 0u32..(1 << n) {
            let f = mask.count_ones() as usize;
            let results: Vec<_> = (0..n)
                .map(|i| Some(if mask >> i & 1 == 1 { forged.clone() } else { honest.clone() }))
                .collect();
            let out = consensus_round(&ns, &results, Digest32([3; 32]), 3, 5).unwrap();
            let accepted = out.accepted.map(|b| b.transactions);
            if 2 * (n - f) > n {
                assert_eq!(accepted.as_ref(), Some(&honest), "n={n} mask={mask:b}");
            } else if 2 * f > n {
                assert_eq!(accepted.as_ref(), Some(&forged), "n={n} mask={mask:b}");
            } else {
                assert_eq!(accepted, None, "n={n} mask={mask:b}");
            }
        }
    }
}

#[test]
fn forgers_cannot_borrow_honest_support() {
    // Each forger submits a distinct message, so none can gather support it did not compute.
    let manager = wallet("manager", 9);
    let honest = vec![manager.sign(json!({"m": "honest"}), 1)];
    let results: Vec<_> = (0..5)
        .map(|i| Some(if i < 2 { vec![manager.sign(json!({"m": i}), 1)] } else { honest.clone() }))
        .collect();
    let out = consensus_round(&nodes(5), &results, Digest32::ZERO, 6, 1).unwrap();
    assert_eq!(out.accepted.as_ref().unwrap().transactions, honest);
    assert!(out.candidates.iter().filter(|c| c.block_hash != out.leader().unwrap().block_hash).all(|c| c.support() == 1));
}

#[test]
fn accepted_round_block_appends() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let manager = wallet("manager", 9);
    let mut chain = Chain::new(6);
    chain.mine_block(vec![registration(&manager, 0)], manager.id(), 0, Strategy::Sequential, &mut rng).unwrap();
    let m = vec![manager.sign(json!({"contract": "SCED", "method": "sced_decrypt"}), 2)];
    let out = consensus_round(&nodes(3), &vec![Some(m); 3], chain.head().block_hash, 6, 2).unwrap();
    chain.append(out.accepted.unwrap()).unwrap();
    chain.validate().unwrap();
}
