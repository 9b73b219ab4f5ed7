//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits nonzero when a deterministic check fails. Timing shapes depend on
//! the host, so their failures are printed as FAIL but leave the exit code alone.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use edgeac_core::abe::{self, AttributeUniverse};
use edgeac_core::bench::{bench_abe, bench_pow, bench_throughput, BenchConfig};
use edgeac_core::chain::{read_jsonl, validate_blocks, Chain, Digest32, Strategy, Wallet};
use edgeac_core::contracts::{judge, EnforceOutcome, Engine, EngineConfig, NextAccess, RawDevice, Role};
use edgeac_core::field::{PrimeField, LARGE_PRIME, TEST_PRIME};
use edgeac_core::netsim::{canonical_scenario, run_scenario, threshold_scenario, Event};
use edgeac_core::pairing::{ExponentGroup, GroupParams, PairingGroup};
use edgeac_core::policy::{
    assign_shares, build_tree, parse_policy, reconstruct_secret, FixedShares, PolicyMatrix, PolicyRecord,
    ThresholdTree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

const EXAMPLE: &str = "(SA_1 OR ObA_1) AND (SA_2 OR ObA_2) AND (SA_3 OR ObA_3)";
const POLICIES: usize = 200;
const MAX_LEAVES: usize = 12;

type Check = fn() -> Result<String, String>;

/// A failure message prefixed with this marker comes only from host-dependent
/// timing shapes; it is reported but does not fail the run.
const TIMING_ONLY: &str = "timing shape: ";

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Up to four clauses of one to four distinct leaves, capped at `max_leaves`.
fn random_policy(rng: &mut ChaCha20Rng, max_leaves: usize) -> String {
    let mut used = 0;
    let mut parts = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let width = rng.gen_range(1..=4);
        if used + width > max_leaves {
            break;
        }
        let names: Vec<String> = (used + 1..=used + width).map(|i| format!("L{i}")).collect();
        used += width;
        let op = if rng.gen_bool(0.5) { " AND " } else { " OR " };
        parts.push(format!("({})", names.join(op)));
    }
    if parts.is_empty() {
        parts.push("L1".into());
    }
    let op = if rng.gen_bool(0.5) { " AND " } else { " OR " };
    parts.join(op)
}

fn compile(text: &str, rng: &mut ChaCha20Rng, field: PrimeField) -> (ThresholdTree, PolicyMatrix, PolicyRecord) {
    let tree = build_tree(&parse_policy(text).expect("generated policies parse")).expect("and build");
    let (tree, matrix, secret) = assign_shares(&tree, rng, field).expect("shares assign");
    let record = PolicyRecord { policy_id: matrix.policy_id(secret), matrix: matrix.clone(), skeleton: tree.skeleton() };
    (tree, matrix, record)
}

/// Every subset of `labels`, by bitmask.
fn subsets(labels: &[String]) -> impl Iterator<Item = BTreeSet<String>> + '_ {
    (0u32..1 << labels.len())
        .map(move |mask| (0..labels.len()).filter(|i| mask >> i & 1 == 1).map(|i| labels[i].clone()).collect())
}

fn ac1_golden_lsss() -> Result<String, String> {
    let field = PrimeField::new(TEST_PRIME).map_err(|e| e.to_string())?;
    let tree = build_tree(&parse_policy(EXAMPLE).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (_, matrix, secret) =
        assign_shares(&tree, &mut FixedShares::new(7, [1, 1]), field).map_err(|e| e.to_string())?;
    let rows: Vec<(usize, usize, Vec<u64>)> =
        matrix.rows().iter().map(|r| (r.t, r.n, r.shares.iter().map(|s| s.value()).collect())).collect();
    let expected = vec![
        (3, 3, vec![9, 13, 19]),
        (1, 2, vec![9, 9, 0]),
        (1, 2, vec![13, 13, 0]),
        (1, 2, vec![19, 19, 0]),
    ];
    ensure(rows == expected, || format!("rows {rows:?}"))?;
    ensure(secret.value() == 7, || format!("secret {}", secret.value()))?;
    let shares = [(1, field.element(9)), (2, field.element(13)), (3, field.element(19))];
    let s = reconstruct_secret(&shares, 3).map_err(|e| e.to_string())?;
    ensure(s.value() == 7, || format!("reconstructed {}", s.value()))?;
    ensure(reconstruct_secret(&shares[..2], 3).is_err(), || "two shares reconstructed".into())?;
    Ok("rows (3,3,9,13,19) (1,2,9,9,0) (1,2,13,13,0) (1,2,19,19,0); secret 7; two shares refused".into())
}

fn ac2_decision_soundness() -> Result<String, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let field = PrimeField::new(LARGE_PRIME).map_err(|e| e.to_string())?;
    let (mut checked, mut widest) = (0u64, 0);
    for _ in 0..POLICIES {
        let text = random_policy(&mut rng, MAX_LEAVES);
        let (tree, _, record) = compile(&text, &mut rng, field);
        let labels: Vec<String> = tree.leaves().into_iter().map(String::from).collect();
        widest = widest.max(labels.len());
        for set in subsets(&labels) {
            let (verdict, _) = judge(&record, &set);
            ensure(verdict == tree.satisfies(&set), || format!("policy {text} subset {set:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{POLICIES} policies, up to {widest} leaves, {checked} subsets, 0 mismatches"))
}

fn ac3_abe_correctness() -> Result<String, String> {
    let group = ExponentGroup::new(GroupParams::exponent(LARGE_PRIME).map_err(|e| e.to_string())?);
    let field = group.scalar_field();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (pk, mk) = abe::setup(&group, &mut rng);
    let mut universe = AttributeUniverse::<ExponentGroup>::default();
    for i in 1..=MAX_LEAVES {
        universe.register(&group, &format!("L{i}"), &mut rng).map_err(|e| e.to_string())?;
    }
    let points = |l: &str| universe.point(l).cloned();
    let (mut round_trips, mut identities) = (0u64, 0u64);
    for p in 0..POLICIES {
        let text = random_policy(&mut rng, MAX_LEAVES);
        let (tree, matrix, _) = compile(&text, &mut rng, field);
        let labels: Vec<String> = tree.leaves().into_iter().map(String::from).collect();
        let h = field.random_nonzero(&mut rng);
        let payload: Vec<u8> = (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect();
        let wrapped = abe::wrap(&group, &pk, &payload, &matrix, h, points, &mut rng).map_err(|e| e.to_string())?;
        for set in subsets(&labels) {
            if set.is_empty() {
                continue;
            }
            let attrs: Vec<String> = set.iter().cloned().collect();
            let sk = abe::keygen(&group, &mk, &attrs, h, points, &mut rng).map_err(|e| e.to_string())?;
            let back = abe::unwrap(&group, &sk, &wrapped);
            let ok = back.as_deref() == Ok(&payload[..]);
            ensure(ok == tree.satisfies(&set), || format!("policy {text} attrs {attrs:?}: {back:?}"))?;
            round_trips += 1;
        }

        // Per-leaf and final identities, tracked in the exponent, on a full key.
        let s = matrix.recover_secret(|_| true).ok_or("full key cannot recover")?;
        let m = group.random_gt(&mut rng);
        let ct = abe::encrypt(&group, &pk, &m, &matrix, h, points).map_err(|e| e.to_string())?;
        let sk = abe::keygen(&group, &mk, &labels, h, points, &mut rng).map_err(|e| e.to_string())?;
        let c0 = &sk.components[0];
        let rv = group.dlog_g1(&c0.a) - group.dlog_g1(&points(&c0.attribute).ok_or("unregistered")?) * group.dlog_g1(&c0.d);
        for (i, leaf) in matrix.leaves().iter().enumerate() {
            let key = sk.components.iter().find(|k| k.attribute == leaf.attribute).ok_or("missing component")?;
            let f = abe::leaf_factor(&group, &ct.components[i], key).map_err(|e| e.to_string())?;
            ensure(group.dlog_gt(&f) == rv * matrix.share(leaf), || format!("policy {p}: leaf {i} identity"))?;
            identities += 1;
        }
        let blinded = group.gt_pow(&group.gt_generator(), rv * s);
        let denominator = group.gt_mul(
            &group.pair(&sk.pk, &ct.c).map_err(|e| e.to_string())?,
            &group.pair(&sk.d, &ct.c).map_err(|e| e.to_string())?,
        );
        let ratio = group.gt_div(&group.gt_mul(&ct.ct0, &blinded), &denominator);
        ensure(group.dlog_gt(&ratio) == group.dlog_gt(&m), || format!("policy {p}: final identity"))?;
        identities += 1;
    }
    Ok(format!("{round_trips} keyed round trips match satisfaction; {identities} exponent identities exact"))
}

fn ac4_penalty_schedule() -> Result<String, String> {
    let group = ExponentGroup::new(GroupParams::exponent(LARGE_PRIME).map_err(|e| e.to_string())?);
    let mut e = Engine::new(group, EngineConfig { seed: 4, n_bits: 4, ..EngineConfig::default() }).map_err(|e| e.to_string())?;
    let violator = Digest32::of(b"violator");
    for t in 1..=10u32 {
        let got = e.scpm_penalize(violator, 100);
        ensure(got == (t, NextAccess::At(100 + (1 << t))), || format!("t={t}: {got:?}"))?;
    }
    let got = e.scpm_penalize(violator, 100);
    ensure(got == (11, NextAccess::Permanent), || format!("t=11: {got:?}"))?;

    // Decrement path: a penalized subject gains the attributes and retries after expiry.
    let err = |e: edgeac_core::contracts::ContractError| e.to_string();
    let manager = e.register_device(&RawDevice::named("manager"), Role::Manager).map_err(err)?.wallet;
    let object = e.register_device(&RawDevice::named("sensor"), Role::Terminal).map_err(err)?.wallet;
    let profile = e.register_user("profile").map_err(err)?.wallet;
    let subject = e.register_user("subject").map_err(err)?.wallet;
    e.scpi_add_att(&profile, &["SA_1", "SA_2", "SA_3"]).map_err(err)?;
    e.scpi_add_att(&object, &["ObA_1", "ObA_2", "ObA_3"]).map_err(err)?;
    e.scpi_add_att(&subject, &["SA_1"]).map_err(err)?;
    e.scpa_add_policy(&manager, profile.id(), object.id(), EXAMPLE).map_err(err)?;
    let first = e.scpe_enforce(&subject, object.id(), 0).map_err(err)?;
    ensure(first == EnforceOutcome::DeniedPenalized { t: 1, next_access: NextAccess::At(2) }, || format!("{first:?}"))?;
    let locked = e.scpe_enforce(&subject, object.id(), 1).map_err(err)?;
    ensure(matches!(locked, EnforceOutcome::DeniedLocked { t: 2, .. }), || format!("{locked:?}"))?;
    e.scpi_add_att(&subject, &["SA_2", "SA_3"]).map_err(err)?;
    let regranted = e.scpe_enforce(&subject, object.id(), 5).map_err(err)?;
    ensure(regranted == EnforceOutcome::Granted, || format!("after expiry: {regranted:?}"))?;
    Ok("lockouts 2..1024 for t=1..10, PERMANENT at 11; expired lockout re-grants".into())
}

fn ac5_consensus_threshold() -> Result<String, String> {
    let mut runs = 0;
    for n in [3usize, 5, 7] {
        for mask in 0u32..(1 << n) {
            let f = mask.count_ones() as usize;
            let out = run_scenario(&threshold_scenario(n, mask, 50 + mask as u64)).map_err(|e| e.to_string())?;
            let honest = out.accesses[0].verified == Some(true);
            ensure(honest == (2 * f < n), || format!("n={n} forgers={mask:b}: honest={honest}"))?;
            if f == n.div_ceil(2) {
                ensure(!honest, || format!("n={n} f={f} should fail"))?;
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} assignments over n=3,5,7: honest iff f < n/2"))
}

fn mined_chain(blocks: u64, n_bits: u32, seed: u64) -> Result<Chain, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = Wallet::generate(Digest32::of(b"miner"), &mut rng);
    let reg = w.sign(json!({"verification_key": w.verifying_key_hex()}), 0);
    let mut chain = Chain::new(n_bits);
    chain.mine_block(vec![reg], w.id(), 0, Strategy::Hybrid, &mut rng).map_err(|e| e.to_string())?;
    for tick in 1..blocks {
        let txs = vec![w.sign(json!({"tick": tick, "note": "reading"}), tick)];
        chain
            .mine_block(txs, w.id(), tick, Strategy::ALL[tick as usize % 3], &mut rng)
            .map_err(|e| e.to_string())?;
    }
    Ok(chain)
}

fn ac6_chain_integrity() -> Result<String, String> {
    let long = mined_chain(100, 12, 6)?.to_jsonl();
    let blocks = read_jsonl(long.as_bytes()).map_err(|e| e.to_string())?;
    ensure(blocks.len() == 101, || format!("{} blocks", blocks.len()))?;
    validate_blocks(&blocks, 12).map_err(|e| format!("clean chain: {e}"))?;

    // Every bit of every persisted line of a shorter chain at the same difficulty.
    let text = mined_chain(5, 12, 7)?.to_jsonl().into_bytes();
    validate_blocks(&read_jsonl(&text).map_err(|e| e.to_string())?, 12).map_err(|e| e.to_string())?;
    let mut flips = 0u64;
    for byte in 0..text.len() {
        for bit in 0..8 {
            let mut mutated = text.clone();
            mutated[byte] ^= 1 << bit;
            let accepted = read_jsonl(&mutated).map(|b| validate_blocks(&b, 12).is_ok()).unwrap_or(false);
            ensure(!accepted, || format!("flip of bit {bit} at byte {byte} undetected"))?;
            flips += 1;
        }
    }
    Ok(format!("100 blocks at nBits=12 validate; all {flips} single-bit flips of a 6-block chain rejected"))
}

fn ac7_anonymity() -> Result<String, String> {
    let s = canonical_scenario();
    let text = run_scenario(&s).map_err(|e| e.to_string())?.chain_jsonl();
    let mut needles = BTreeSet::new();
    for event in &s.events {
        match event {
            Event::AddAtt { attributes, .. } => needles.extend(attributes.iter().cloned()),
            Event::AddPolicy { formula, .. } => {
                needles.insert(formula.clone());
                needles.extend(formula.split(" AND ").map(String::from));
            }
            _ => {}
        }
    }
    if let Some(leak) = needles.iter().find(|n| text.contains(n.as_str())) {
        return Err(format!("chain contains {leak:?}"));
    }
    Ok(format!("{} labels and formula fragments absent from {} bytes", needles.len(), text.len()))
}

fn ac8_performance_shape() -> Result<String, String> {
    let started = Instant::now();
    let config = BenchConfig { n_bits: vec![8, 12, 16], concurrency: vec![1], ..BenchConfig::default() };
    let abe = bench_abe(&config).map_err(|e| e.to_string())?;
    print!("{}", abe.table());
    let pow = bench_pow(&config).map_err(|e| e.to_string())?;
    print!("{}", pow.table());
    let c = &abe.checks;
    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "(a) encrypt R²={:.3} keygen R²={:.3}; (b) OR decrypt max/min={:.3}; (c) payload≤1MiB max/min={:.3}; (d) max z={:.2}; {:.0}s",
        c.encrypt_r2,
        c.keygen_r2,
        c.or_decrypt_ratio.unwrap_or(f64::NAN),
        c.small_payload_ratio.unwrap_or(f64::NAN),
        pow.samples.iter().map(|s| s.z_score).fold(0.0, f64::max),
        elapsed,
    );
    let mut timing = Vec::new();
    if !(c.encrypt_linear && c.keygen_linear) {
        timing.push("a");
    }
    if !c.or_decrypt_flat {
        timing.push("b");
    }
    if !c.small_payload_constant {
        timing.push("c");
    }
    let mut hard = Vec::new();
    if !pow.single_miner_within_3_sigma {
        hard.push("d");
    }
    if elapsed > 600.0 {
        hard.push("runtime");
    }
    match (hard.is_empty(), timing.is_empty()) {
        (true, true) => Ok(detail),
        (true, false) => Err(format!("{TIMING_ONLY}failed {}: {detail}", timing.join(","))),
        (false, _) => Err(format!("failed {}: {detail}", [hard, timing].concat().join(","))),
    }
}

fn ac9_throughput_ordering() -> Result<String, String> {
    let report = bench_throughput(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let detail = format!(
        "success {:.0} > failed {:.0} > verification {:.0} accesses/s",
        report.success_tps, report.failed_tps, report.verification_tps
    );
    if report.ordering_holds {
        Ok(detail)
    } else {
        Err(format!("{TIMING_ONLY}{detail}"))
    }
}

fn main() {
    // Accept and ignore libtest flags passed through by `cargo test`.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let checks: [(&str, &str, Check); 9] = [
        ("AC1", "golden LSSS example", ac1_golden_lsss),
        ("AC2", "decision soundness", ac2_decision_soundness),
        ("AC3", "ABE correctness", ac3_abe_correctness),
        ("AC4", "penalty schedule", ac4_penalty_schedule),
        ("AC5", "consensus threshold", ac5_consensus_threshold),
        ("AC6", "chain integrity", ac6_chain_integrity),
        ("AC7", "anonymity serialization", ac7_anonymity),
        ("AC8", "performance shape", ac8_performance_shape),
        ("AC9", "throughput ordering", ac9_throughput_ordering),
    ];
    let (mut failures, mut timing_failures) = (0, 0);
    for (id, name, check) in checks {
        if filter.as_deref().is_some_and(|f| !id.eq_ignore_ascii_case(f) && !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                if detail.starts_with(TIMING_ONLY) {
                    timing_failures += 1;
                } else {
                    failures += 1;
                }
                println!("{id} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{failures} deterministic failure(s), {timing_failures} timing-shape failure(s)");
    if failures > 0 {
        std::process::exit(1);
    }
}
