use std::collections::{BTreeSet, HashMap};

use edgeac_core::abe::{
    self, decrypt, encrypt, interpolate_in_exponent, keygen, leaf_factor, setup, unwrap, wrap, AbeError,
    AttributeUniverse, WrappedPayload,
};
use edgeac_core::field::{FieldElement, LARGE_PRIME, TEST_PRIME};
use edgeac_core::pairing::{CurveGroup, ExponentGroup, GroupParams, PairingGroup};
use edgeac_core::policy::{assign_shares, build_tree, parse_policy, FixedShares, PolicyMatrix, ThresholdTree};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const EXAMPLE: &str = "(SA_1 OR ObA_1) AND (SA_2 OR ObA_2) AND (SA_3 OR ObA_3)";

struct Fixture<G: PairingGroup> {
    group: G,
    universe: AttributeUniverse<G>,
    pk: abe::PublicKey<G>,
    mk: abe::MasterKey<G>,
    rng: ChaCha20Rng,
}

impl<G: PairingGroup> Fixture<G> {
    fn new(group: G, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (pk, mk) = setup(&group, &mut rng);
        Self {
            group,
            universe: AttributeUniverse::default(),
            pk,
            mk,
            rng,
        }
    }

    fn compile(&mut self, text: &str) -> (ThresholdTree, PolicyMatrix, FieldElement) {
        let tree = build_tree(&parse_policy(text).unwrap()).unwrap();
        for label in tree.leaves() {
            self.universe.register(&self.group, label, &mut self.rng).unwrap();
        }
        assign_shares(&tree, &mut self.rng, self.group.scalar_field()).unwrap()
    }

    fn points(&self) -> impl Fn(&str) -> Option<G::G1> + '_ {
        |label| self.universe.point(label).cloned()
    }

    fn key(&mut self, attrs: &[&str], h: FieldElement) -> abe::PrivateKey<G> {
        let attrs: Vec<String> = attrs.iter().map(|s| s.to_string()).collect();
        for a in &attrs {
            self.universe.register(&self.group, a, &mut self.rng).unwrap();
        }
        let universe = self.universe.clone();
        keygen(&self.group, &self.mk, &attrs, h, |l| universe.point(l).cloned(), &mut self.rng).unwrap()
    }
}

fn exponent_fixture(seed: u64) -> Fixture<ExponentGroup> {
    Fixture::new(ExponentGroup::new(GroupParams::exponent(LARGE_PRIME).unwrap()), seed)
}

#[test]
fn setup_exponents_are_consistent() {
    let mut fx = exponent_fixture(1);
    let g = &fx.group;
    assert_eq!(g.g1_exp(fx.mk.beta), fx.pk.g_beta);
    let alpha = g.dlog_g1(&fx.pk.g_alpha);
    assert_eq!(
        g.pair(&fx.pk.g_alpha, &g.generator()).unwrap(),
        g.gt_pow(&g.gt_generator(), alpha)
    );
    let (other, _) = setup(&fx.group, &mut ChaCha20Rng::seed_from_u64(2));
    assert_ne!(other.g_alpha, fx.pk.g_alpha);
    let _ = fx.rng.next_u64();
}

#[test]
fn worked_example_ciphertext_exponent() {
    let group = ExponentGroup::new(GroupParams::exponent(TEST_PRIME).unwrap());
    let mut fx = Fixture::new(group, 3);
    let tree = build_tree(&parse_policy(EXAMPLE).unwrap()).unwrap();
    for label in tree.leaves() {
        fx.universe.register(&fx.group, label, &mut fx.rng).unwrap();
    }
    let field = fx.group.scalar_field();
    let (_, matrix, s) = assign_shares(&tree, &mut FixedShares::new(7, [1, 1]), field).unwrap();
    assert_eq!(s.value(), 7);

    let h = field.element(123);
    let m = fx.group.gt_pow(&fx.group.gt_generator(), field.element(55));
    let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
    assert_eq!(ct.components.len(), 6);

    // Oracle: plain modular arithmetic on the logs.
    let alpha = fx.group.dlog_g1(&fx.pk.g_alpha).value() as u128;
    let expected = (55 + (alpha + 123) * 7) % TEST_PRIME as u128;
    assert_eq!(fx.group.dlog_gt(&ct.ct0).value() as u128, expected);
    let beta = fx.mk.beta.value() as u128;
    assert_eq!(fx.group.dlog_g1(&ct.c).value() as u128, beta * 7 % TEST_PRIME as u128);

    // Ciphertext does not carry the shares.
    assert!(ct.policy.rows().iter().all(|r| r.shares.iter().all(|s| s.is_zero())));
}

#[test]
fn identity_message_round_trips() {
    let mut fx = exponent_fixture(4);
    let (_, matrix, s) = fx.compile("A AND B");
    let h = fx.group.scalar_field().element(9);
    let id = fx.group.gt_identity();
    let ct = encrypt(&fx.group, &fx.pk, &id, &matrix, h, fx.points()).unwrap();
    let alpha = fx.group.dlog_g1(&fx.pk.g_alpha);
    assert_eq!(fx.group.dlog_gt(&ct.ct0), (alpha + h) * s);
    let sk = fx.key(&["A", "B"], h);
    assert_eq!(decrypt(&fx.group, &sk, &ct).unwrap(), id);
}

#[test]
fn unshared_matrix_is_rejected() {
    let mut fx = exponent_fixture(5);
    let (_, matrix, _) = fx.compile("A OR B");
    let h = fx.group.scalar_field().element(1);
    let m = fx.group.gt_identity();
    assert_eq!(
        encrypt(&fx.group, &fx.pk, &m, &matrix.shape(), h, fx.points()),
        Err(AbeError::MissingShares)
    );
}

#[test]
fn keygen_shape_and_exponents() {
    let mut fx = exponent_fixture(6);
    let h = fx.group.scalar_field().element(777);
    let sk = fx.key(&["SA_1", "SA_2", "SA_3"], h);
    assert_eq!(sk.components.len(), 3);
    let group = fx.group.clone();
    let g = &group;
    // rv recovered from A_1 = g^rv * H^rv_1 independently of pk.
    let c = &sk.components[0];
    let hp = g.dlog_g1(fx.universe.point("SA_1").unwrap());
    let rv = g.dlog_g1(&c.a) - hp * g.dlog_g1(&c.d);
    assert_eq!(g.dlog_g1(&sk.pk) * fx.mk.beta - h, rv);
    for c in &sk.components[1..] {
        let hp = g.dlog_g1(fx.universe.point(&c.attribute).unwrap());
        assert_eq!(g.dlog_g1(&c.a) - hp * g.dlog_g1(&c.d), rv);
    }
    let again = fx.key(&["SA_1", "SA_2", "SA_3"], h);
    assert_ne!(again.pk, sk.pk);
    let none: Vec<String> = Vec::new();
    assert_eq!(
        keygen(g, &fx.mk, &none, h, |_| None, &mut ChaCha20Rng::seed_from_u64(0)),
        Err(AbeError::EmptyAttributes)
    );
}

#[test]
fn per_leaf_and_final_identities() {
    let mut fx = exponent_fixture(7);
    let (_, matrix, s) = fx.compile(EXAMPLE);
    let field = fx.group.scalar_field();
    let h = field.element(31337);
    let m = fx.group.random_gt(&mut fx.rng);
    let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
    let labels: Vec<&str> = matrix.leaves().iter().map(|l| l.attribute.as_str()).collect();
    let sk = fx.key(&labels, h);
    let g = &fx.group;
    let c0 = &sk.components[0];
    let rv = g.dlog_g1(&c0.a) - g.dlog_g1(fx.universe.point(&c0.attribute).unwrap()) * g.dlog_g1(&c0.d);

    for (i, leaf) in matrix.leaves().iter().enumerate() {
        let key = sk.components.iter().find(|k| k.attribute == leaf.attribute).unwrap();
        let f = leaf_factor(g, &ct.components[i], key).unwrap();
        assert_eq!(g.dlog_gt(&f), rv * matrix.share(leaf));
    }
    let blinded = g.gt_pow(&g.gt_generator(), rv * s);
    let ratio = g.gt_div(
        &g.gt_mul(&ct.ct0, &blinded),
        &g.gt_mul(&g.pair(&sk.pk, &ct.c).unwrap(), &g.pair(&sk.d, &ct.c).unwrap()),
    );
    assert_eq!(g.dlog_gt(&ratio), g.dlog_gt(&m));
    assert_eq!(decrypt(g, &sk, &ct).unwrap(), m);
}

#[test]
fn worked_example_subsets() {
    let mut fx = exponent_fixture(8);
    let (_, matrix, _) = fx.compile(EXAMPLE);
    let h = fx.group.scalar_field().element(5);
    let m = fx.group.random_gt(&mut fx.rng);
    let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
    let good = fx.key(&["SA_1", "SA_2", "SA_3"], h);
    assert_eq!(decrypt(&fx.group, &good, &ct).unwrap(), m);
    let bad = fx.key(&["SA_1", "SA_2"], h);
    assert_ne!(decrypt(&fx.group, &bad, &ct).unwrap(), m);
    let wrong_object = fx.key(&["SA_1", "SA_2", "SA_3"], h + fx.group.scalar_field().one());
    assert_ne!(decrypt(&fx.group, &wrong_object, &ct).unwrap(), m);
}

#[test]
fn exponent_interpolation_of_quadratic() {
    let group = ExponentGroup::new(GroupParams::exponent(TEST_PRIME).unwrap());
    let f = group.scalar_field();
    let rv = f.element(17);
    let gt = group.gt_generator();
    let lift = |y: u64| group.gt_pow(&gt, rv * f.element(y));
    let shares = [(1, lift(9)), (2, lift(13)), (3, lift(19))];
    assert_eq!(interpolate_in_exponent(&group, &shares, 3).unwrap(), lift(7));
    assert_eq!(interpolate_in_exponent(&group, &shares[..1], 1).unwrap(), lift(9));
    assert!(interpolate_in_exponent(&group, &shares[..2], 3).is_err());
}

#[test]
fn wrap_round_trips_and_fails_cleanly() {
    let mut fx = exponent_fixture(9);
    let (_, matrix, _) = fx.compile("(A OR B) AND C");
    let h = fx.group.scalar_field().element(2024);
    let mut big = vec![0u8; 1 << 20];
    fx.rng.fill_bytes(&mut big);
    let good = fx.key(&["B", "C"], h);
    let bad = fx.key(&["A", "B"], h);
    for payload in [Vec::new(), b"21.5,40.0".to_vec(), big] {
        let universe = fx.universe.clone();
        let wp = wrap(&fx.group, &fx.pk, &payload, &matrix, h, |l| universe.point(l).cloned(), &mut fx.rng).unwrap();
        assert_eq!(unwrap(&fx.group, &good, &wp).unwrap(), payload);
        assert_eq!(unwrap(&fx.group, &bad, &wp), Err(AbeError::DecryptionFailed));
    }
}

#[test]
fn tampered_body_is_detected() {
    let mut fx = exponent_fixture(10);
    let (_, matrix, _) = fx.compile("A");
    let h = fx.group.scalar_field().element(1);
    let universe = fx.universe.clone();
    let mut wp = wrap(&fx.group, &fx.pk, b"hello", &matrix, h, |l| universe.point(l).cloned(), &mut fx.rng).unwrap();
    let sk = fx.key(&["A"], h);
    wp.body[0] ^= 1;
    assert_eq!(unwrap(&fx.group, &sk, &wp), Err(AbeError::DecryptionFailed));
}

#[test]
fn wrapped_payload_json_round_trip() {
    let mut fx = exponent_fixture(11);
    let (_, matrix, _) = fx.compile("A AND (B OR C)");
    let h = fx.group.scalar_field().element(3);
    let universe = fx.universe.clone();
    let wp = wrap(&fx.group, &fx.pk, b"payload", &matrix, h, |l| universe.point(l).cloned(), &mut fx.rng).unwrap();
    let json = serde_json::to_string(&wp).unwrap();
    let back: WrappedPayload<ExponentGroup> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, wp);
    let pk_json = serde_json::to_string(&fx.pk).unwrap();
    assert_eq!(serde_json::from_str::<abe::PublicKey<ExponentGroup>>(&pk_json).unwrap(), fx.pk);
}

#[test]
fn foreign_parameters_are_rejected() {
    let mut fx = exponent_fixture(12);
    let (_, matrix, _) = fx.compile("A");
    let h = fx.group.scalar_field().element(1);
    let m = fx.group.gt_identity();
    let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
    let other = ExponentGroup::new(GroupParams::exponent(TEST_PRIME).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let (_, omk) = setup(&other, &mut rng);
    let sk = keygen(&other, &omk, &["A".to_string()], other.scalar_field().one(), |_| Some(other.generator()), &mut rng).unwrap();
    assert!(matches!(decrypt(&other, &sk, &ct), Err(AbeError::Group(_))));
}

#[test]
fn colluding_keys_cannot_be_mixed() {
    let mut fx = exponent_fixture(13);
    let (_, matrix, _) = fx.compile("A AND B");
    let h = fx.group.scalar_field().element(99);
    let mut wrong = 0;
    for _ in 0..50 {
        let m = fx.group.random_gt(&mut fx.rng);
        let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
        let ka = fx.key(&["A"], h);
        let kb = fx.key(&["B"], h);
        let mut mixed = ka.clone();
        mixed.components.extend(kb.components.iter().cloned());
        if decrypt(&fx.group, &mixed, &ct).unwrap() != m {
            wrong += 1;
        }
    }
    assert_eq!(wrong, 50);
}

#[test]
fn curve_backend_round_trip() {
    let mut fx = Fixture::new(CurveGroup::new(), 14);
    let (_, matrix, _) = fx.compile("(A OR B) AND C AND (D AND E)");
    let h = fx.group.scalar_field().element(4242);
    let m = fx.group.random_gt(&mut fx.rng);
    let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
    let good = fx.key(&["A", "C", "D", "E"], h);
    assert_eq!(decrypt(&fx.group, &good, &ct).unwrap(), m);
    let bad = fx.key(&["A", "B", "C", "D"], h);
    assert_ne!(decrypt(&fx.group, &bad, &ct).unwrap(), m);

    let universe = fx.universe.clone();
    let wp = wrap(&fx.group, &fx.pk, b"curve", &matrix, h, |l| universe.point(l).cloned(), &mut fx.rng).unwrap();
    let json = serde_json::to_string(&wp).unwrap();
    let back: WrappedPayload<CurveGroup> = serde_json::from_str(&json).unwrap();
    assert_eq!(unwrap(&fx.group, &good, &back).unwrap(), b"curve");
}

#[test]
fn attribute_references_hide_labels() {
    let mut fx = exponent_fixture(15);
    let (_, matrix, _) = fx.compile("SA_1 AND ObA_1");
    let by_ref: HashMap<String, _> = fx.universe.points_by_reference();
    let relabeled = matrix.relabel(|l| fx.universe.reference(l).unwrap());
    let h = fx.group.scalar_field().element(8);
    let m = fx.group.random_gt(&mut fx.rng);
    let ct = encrypt(&fx.group, &fx.pk, &m, &relabeled, h, |r| by_ref.get(r).cloned()).unwrap();
    let json = serde_json::to_string(&ct).unwrap();
    assert!(!json.contains("SA_1") && !json.contains("ObA_1"));
}

fn random_policy(rng: &mut ChaCha20Rng, max_leaves: usize) -> String {
    let mut next = 0;
    let mut leaf = || {
        next += 1;
        format!("L{next}")
    };
    let clauses = 1 + (rng.next_u32() as usize % 4);
    let mut parts = Vec::new();
    let mut used = 0;
    for _ in 0..clauses {
        let width = 1 + (rng.next_u32() as usize % 3);
        if used + width > max_leaves {
            break;
        }
        used += width;
        let names: Vec<String> = (0..width).map(|_| leaf()).collect();
        let op = if rng.next_u32() % 2 == 0 { " AND " } else { " OR " };
        parts.push(format!("({})", names.join(op)));
    }
    if parts.is_empty() {
        parts.push(leaf());
    }
    let op = if rng.next_u32() % 2 == 0 { " AND " } else { " OR " };
    parts.join(op)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decrypt_succeeds_exactly_on_satisfying_sets(seed in any::<u64>()) {
        let mut fx = exponent_fixture(seed);
        let text = random_policy(&mut fx.rng, 8);
        let (tree, matrix, _) = fx.compile(&text);
        let labels: Vec<String> = matrix.leaves().iter().map(|l| l.attribute.clone()).collect();
        let h = fx.group.scalar_field().random(&mut fx.rng);
        let m = fx.group.random_gt(&mut fx.rng);
        let ct = encrypt(&fx.group, &fx.pk, &m, &matrix, h, fx.points()).unwrap();
        for mask in 1u32..(1 << labels.len()) {
            let attrs: Vec<&str> = (0..labels.len()).filter(|i| mask >> i & 1 == 1).map(|i| labels[i].as_str()).collect();
            let set: BTreeSet<String> = attrs.iter().map(|s| s.to_string()).collect();
            let sk = fx.key(&attrs, h);
            let ok = decrypt(&fx.group, &sk, &ct).unwrap() == m;
            prop_assert_eq!(ok, tree.satisfies(&set), "policy {} attrs {:?}", text, attrs);
        }
    }
}
