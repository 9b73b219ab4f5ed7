//! Ciphertext-policy ABE with the object binding `g^h`, plus a KEM-DEM wrapper.
//!
//! With `e(g,g) = gT`:
//!
//! ```text
//! CT0 = m * gT^((alpha + h) s)      C   = g^(beta s)
//! C_i = g^(s_i)                     M_i = H(rho(i))^(s_i)
//! pk  = g^((rv + h) / beta)         D   = g^(alpha / beta)
//! D_j = g^(rv_j)                    A_j = g^rv * H(j)^(rv_j)
//! ```
//!
//! Each matched leaf yields `e(C_i, A_j) / e(D_j, M_i) = gT^(rv s_i)`;
//! interpolating gate by gate gives `gT^(rv s)`, and
//! `CT0 * gT^(rv s) / (e(pk, C) e(D, C)) = m`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::field::FieldElement;
use crate::pairing::{hash_to_group, ElementBytes, GroupError, GroupParams, PairingGroup};
use crate::policy::{check_xs, lagrange_at_zero, PolicyError, PolicyId, PolicyMatrix};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbeError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("a key needs at least one attribute")]
    EmptyAttributes,
    #[error("policy matrix carries no shares")]
    MissingShares,
    #[error("no point registered for attribute `{0}`")]
    UnknownAttribute(String),
    #[error("decryption failed: attributes do not satisfy the policy or the payload was altered")]
    DecryptionFailed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PublicKey<G: PairingGroup> {
    #[serde(with = "params_text")]
    pub params: GroupParams,
    pub g_alpha: G::G1,
    pub g_beta: G::G1,
}

/// Held by the trust anchor only. `g_alpha` duplicates the public value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MasterKey<G: PairingGroup> {
    pub g_alpha: G::G1,
    #[serde(with = "scalar")]
    pub beta: FieldElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KeyComponent<G: PairingGroup> {
    pub attribute: String,
    pub d: G::G1,
    pub a: G::G1,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PrivateKey<G: PairingGroup> {
    pub pk: G::G1,
    pub d: G::G1,
    pub components: Vec<KeyComponent<G>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CiphertextComponent<G: PairingGroup> {
    pub c: G::G1,
    pub m: G::G1,
}

/// Components follow `policy.leaves()` order. `policy` keeps the access
/// structure but not the shares.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Ciphertext<G: PairingGroup> {
    pub ct0: G::Gt,
    pub c: G::G1,
    pub components: Vec<CiphertextComponent<G>>,
    pub policy_id: PolicyId,
    pub policy: PolicyMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WrappedPayload<G: PairingGroup> {
    pub header: Ciphertext<G>,
    #[serde(with = "b64_bytes")]
    pub body: Vec<u8>,
    pub length: u64,
    /// SHA-256 of the plaintext.
    #[serde(with = "hex_digest")]
    pub digest: [u8; 32],
    /// Keystream block at counter `u64::MAX`, never used for data; detects a
    /// wrong key even when the payload is empty.
    #[serde(with = "hex_digest")]
    pub key_check: [u8; 32],
}

/// Off-chain attribute universe: label to `(H(label), rv)`, sampled once per label.
#[derive(Clone, Debug)]
pub struct AttributeUniverse<G: PairingGroup> {
    entries: BTreeMap<String, (G::G1, FieldElement)>,
}

impl<G: PairingGroup> Default for AttributeUniverse<G> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<G: PairingGroup> AttributeUniverse<G> {
    /// Returns the cached point, sampling it on first use.
    pub fn register<R: Rng + ?Sized>(&mut self, group: &G, label: &str, rng: &mut R) -> Result<G::G1, GroupError> {
        if let Some((p, _)) = self.entries.get(label) {
            return Ok(p.clone());
        }
        let (point, rv) = hash_to_group(group, label, rng)?;
        self.entries.insert(label.to_string(), (point.clone(), rv));
        Ok(point)
    }

    pub fn point(&self, label: &str) -> Option<&G::G1> {
        self.entries.get(label).map(|(p, _)| p)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Public reference of a registered label.
    pub fn reference(&self, label: &str) -> Option<String> {
        self.point(label).map(attribute_ref::<G>)
    }

    /// Maps reference back to point, for encrypting against relabeled matrices.
    pub fn points_by_reference(&self) -> HashMap<String, G::G1> {
        self.entries
            .values()
            .map(|(p, _)| (attribute_ref::<G>(p), p.clone()))
            .collect()
    }
}

/// Lowercase hex SHA-256 of a point's encoding; stands in for the label in public data.
pub fn attribute_ref<G: PairingGroup>(point: &G::G1) -> String {
    hex::encode(Sha256::digest(point.to_bytes()))
}

pub fn setup<G: PairingGroup, R: Rng + ?Sized>(group: &G, rng: &mut R) -> (PublicKey<G>, MasterKey<G>) {
    let field = group.scalar_field();
    let alpha = field.random_nonzero(rng);
    let beta = field.random_nonzero(rng);
    let g_alpha = group.g1_exp(alpha);
    (
        PublicKey {
            params: *group.params(),
            g_alpha: g_alpha.clone(),
            g_beta: group.g1_exp(beta),
        },
        MasterKey { g_alpha, beta },
    )
}

/// Interpolates `gT^(f(x))` shares at zero: `prod share_x^(lambda_x(0))` over the first `t`.
pub fn interpolate_in_exponent<G: PairingGroup>(
    group: &G,
    shares: &[(u64, G::Gt)],
    t: usize,
) -> Result<G::Gt, PolicyError> {
    let xs: Vec<u64> = shares.iter().map(|(x, _)| *x).collect();
    check_xs(&xs, t)?;
    if t == 1 {
        return Ok(shares[0].1.clone());
    }
    let lambdas = lagrange_at_zero(&xs[..t], group.scalar_field());
    Ok(shares[..t]
        .iter()
        .zip(lambdas)
        .fold(group.gt_identity(), |acc, ((_, v), l)| group.gt_mul(&acc, &group.gt_pow(v, l))))
}

/// Encrypts a GT element under `matrix`, whose leaf labels `points` resolves.
///
/// The root secret is read back from the matrix's root row.
pub fn encrypt<G: PairingGroup>(
    group: &G,
    pk: &PublicKey<G>,
    m: &G::Gt,
    matrix: &PolicyMatrix,
    h: FieldElement,
    points: impl Fn(&str) -> Option<G::G1>,
) -> Result<Ciphertext<G>, AbeError> {
    if pk.params != *group.params() || matrix.modulus() != group.params().order || !group.gt_belongs(m) {
        return Err(GroupError::ParamMismatch.into());
    }
    if !matrix.has_shares() {
        return Err(AbeError::MissingShares);
    }
    let root = &matrix.rows()[0];
    let root_shares: Vec<(u64, FieldElement)> = (1..=root.n as u64).zip(root.shares.iter().copied()).collect();
    let s = crate::policy::reconstruct_secret(&root_shares, root.t)?;

    let mut components = Vec::with_capacity(matrix.leaves().len());
    for leaf in matrix.leaves() {
        let point = points(&leaf.attribute).ok_or_else(|| AbeError::UnknownAttribute(leaf.attribute.clone()))?;
        let s_i = matrix.share(leaf);
        components.push(CiphertextComponent {
            c: group.g1_exp(s_i),
            m: group.g1_pow(&point, s_i),
        });
    }
    // gT^(alpha + h) = e(g^alpha, g) * gT^h; alpha itself stays with the trust anchor.
    let base = group.gt_mul(
        &group.pair(&pk.g_alpha, &group.generator())?,
        &group.gt_pow(&group.gt_generator(), h),
    );
    let ct0 = group.gt_mul(m, &group.gt_pow(&base, s));
    Ok(Ciphertext {
        ct0,
        c: group.g1_pow(&pk.g_beta, s),
        components,
        policy_id: matrix.policy_id(s),
        policy: matrix.shape(),
    })
}

/// Device-side half of key generation: `g^(rv + h)`.
pub fn device_binding<G: PairingGroup>(group: &G, rv: FieldElement, h: FieldElement) -> G::G1 {
    group.g1_exp(rv + h)
}

/// Edge-side half: `binding^(1 / beta)`.
pub fn edge_finish<G: PairingGroup>(group: &G, mk: &MasterKey<G>, binding: &G::G1) -> G::G1 {
    group.g1_pow(binding, mk.beta.inv().expect("beta is nonzero"))
}

pub fn keygen<G: PairingGroup, R: Rng + ?Sized>(
    group: &G,
    mk: &MasterKey<G>,
    attributes: &[String],
    h: FieldElement,
    points: impl Fn(&str) -> Option<G::G1>,
    rng: &mut R,
) -> Result<PrivateKey<G>, AbeError> {
    if attributes.is_empty() {
        return Err(AbeError::EmptyAttributes);
    }
    let field = group.scalar_field();
    let rv = field.random_nonzero(rng);
    let beta_inv = mk.beta.inv().expect("beta is nonzero");
    let g_rv = group.g1_exp(rv);
    let components = attributes
        .iter()
        .map(|attr| {
            let point = points(attr).ok_or_else(|| AbeError::UnknownAttribute(attr.clone()))?;
            let rv_j = field.random_nonzero(rng);
            Ok(KeyComponent {
                attribute: attr.clone(),
                d: group.g1_exp(rv_j),
                a: group.g1_mul(&g_rv, &group.g1_pow(&point, rv_j)),
            })
        })
        .collect::<Result<Vec<_>, AbeError>>()?;
    Ok(PrivateKey {
        pk: edge_finish(group, mk, &device_binding(group, rv, h)),
        d: group.g1_pow(&mk.g_alpha, beta_inv),
        components,
    })
}

/// `e(C_i, A_j) / e(D_j, M_i)`, which is `gT^(rv s_i)` for matching components.
pub fn leaf_factor<G: PairingGroup>(
    group: &G,
    ct: &CiphertextComponent<G>,
    key: &KeyComponent<G>,
) -> Result<G::Gt, GroupError> {
    Ok(group.gt_div(&group.pair(&ct.c, &key.a)?, &group.pair(&key.d, &ct.m)?))
}

/// Recovers `m` when the key's attributes satisfy the policy; otherwise an unrelated element.
pub fn decrypt<G: PairingGroup>(
    group: &G,
    sk: &PrivateKey<G>,
    ct: &Ciphertext<G>,
) -> Result<G::Gt, AbeError> {
    check_ciphertext(group, ct)?;
    let by_attr: HashMap<&str, &KeyComponent<G>> =
        sk.components.iter().map(|k| (k.attribute.as_str(), k)).collect();
    let mut failure = None;
    let blinded = ct
        .policy
        .combine(
            |i, pos| {
                let key = by_attr.get(pos.attribute.as_str())?;
                match leaf_factor(group, &ct.components[i], key) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        failure = Some(e);
                        None
                    }
                }
            },
            |shares, t| interpolate_in_exponent(group, shares, t).ok(),
        )
        .unwrap_or_else(|| group.gt_identity());
    if let Some(e) = failure {
        return Err(e.into());
    }
    let denominator = group.gt_mul(&group.pair(&sk.pk, &ct.c)?, &group.pair(&sk.d, &ct.c)?);
    Ok(group.gt_div(&group.gt_mul(&ct.ct0, &blinded), &denominator))
}

fn check_ciphertext<G: PairingGroup>(group: &G, ct: &Ciphertext<G>) -> Result<(), AbeError> {
    let elements_ok = group.gt_belongs(&ct.ct0)
        && group.g1_belongs(&ct.c)
        && ct.components.iter().all(|c| group.g1_belongs(&c.c) && group.g1_belongs(&c.m));
    if !elements_ok || ct.policy.modulus() != group.params().order {
        return Err(GroupError::ParamMismatch.into());
    }
    if ct.components.len() != ct.policy.leaves().len() {
        return Err(PolicyError::Malformed("component count differs from leaf count".into()).into());
    }
    Ok(())
}

fn keystream_block(key_bytes: &[u8], counter: u64) -> [u8; 32] {
    Sha256::new()
        .chain_update(key_bytes)
        .chain_update(counter.to_be_bytes())
        .finalize()
        .into()
}

const SHA256_IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

/// Counter-mode keystream: block `i` is `SHA-256(key_bytes || i as u64 BE)`.
///
/// When `key_bytes || counter` fits one padded SHA-256 block, the block is
/// laid out once and only the counter bytes change between compressions.
fn apply_keystream(key_bytes: &[u8], data: &mut [u8]) {
    let msg_len = key_bytes.len() + 8;
    if msg_len > 55 {
        for (counter, chunk) in data.chunks_mut(32).enumerate() {
            let block = keystream_block(key_bytes, counter as u64);
            chunk.iter_mut().zip(block.iter()).for_each(|(b, k)| *b ^= k);
        }
        return;
    }
    let mut block: sha2::digest::core_api::Block<sha2::Sha256VarCore> = Default::default();
    block[..key_bytes.len()].copy_from_slice(key_bytes);
    block[msg_len] = 0x80;
    block[56..].copy_from_slice(&((msg_len as u64) * 8).to_be_bytes());
    for (counter, chunk) in data.chunks_mut(32).enumerate() {
        block[key_bytes.len()..msg_len].copy_from_slice(&(counter as u64).to_be_bytes());
        let mut state = SHA256_IV;
        sha2::compress256(&mut state, std::slice::from_ref(&block));
        let mut ks = [0u8; 32];
        for (out, word) in ks.chunks_exact_mut(4).zip(state) {
            out.copy_from_slice(&word.to_be_bytes());
        }
        chunk.iter_mut().zip(ks).for_each(|(b, k)| *b ^= k);
    }
}

/// Encrypts bytes under a fresh random GT key carried in an ABE header.
pub fn wrap<G: PairingGroup, R: Rng + ?Sized>(
    group: &G,
    pk: &PublicKey<G>,
    payload: &[u8],
    matrix: &PolicyMatrix,
    h: FieldElement,
    points: impl Fn(&str) -> Option<G::G1>,
    rng: &mut R,
) -> Result<WrappedPayload<G>, AbeError> {
    let key = group.random_gt(rng);
    let header = encrypt(group, pk, &key, matrix, h, points)?;
    let key_bytes = key.to_bytes();
    let mut body = payload.to_vec();
    apply_keystream(&key_bytes, &mut body);
    Ok(WrappedPayload {
        header,
        body,
        length: payload.len() as u64,
        digest: Sha256::digest(payload).into(),
        key_check: keystream_block(&key_bytes, u64::MAX),
    })
}

/// Inverse of [`wrap`]; fails cleanly unless the recovered bytes match the digest.
pub fn unwrap<G: PairingGroup>(group: &G, sk: &PrivateKey<G>, wp: &WrappedPayload<G>) -> Result<Vec<u8>, AbeError> {
    let key_bytes = decrypt(group, sk, &wp.header)?.to_bytes();
    if wp.body.len() as u64 != wp.length || keystream_block(&key_bytes, u64::MAX) != wp.key_check {
        return Err(AbeError::DecryptionFailed);
    }
    let mut body = wp.body.clone();
    apply_keystream(&key_bytes, &mut body);
    if Sha256::digest(&body)[..] != wp.digest[..] {
        return Err(AbeError::DecryptionFailed);
    }
    Ok(body)
}

mod params_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::pairing::GroupParams;

    pub fn serialize<S: Serializer>(p: &GroupParams, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.to_canonical_text())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GroupParams, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) mod scalar {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::field::{FieldElement, PrimeField};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        value: u64,
        modulus: u64,
    }

    pub fn serialize<S: Serializer>(x: &FieldElement, s: S) -> Result<S::Ok, S::Error> {
        Repr {
            value: x.value(),
            modulus: x.modulus(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FieldElement, D::Error> {
        let r = Repr::deserialize(d)?;
        PrimeField::new(r.modulus)
            .and_then(|f| f.checked_element(r.value))
            .map_err(serde::de::Error::custom)
    }
}

pub(crate) mod b64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        STANDARD
            .decode(String::deserialize(d)?)
            .map_err(serde::de::Error::custom)
    }
}

pub(crate) mod hex_digest {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        crate::hexutil::decode_array(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
