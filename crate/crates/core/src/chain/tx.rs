use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Digest32;

/// A signed payload. The signature is ECDSA/secp256k1 over `SHA-256(payload bytes)`,
/// where the bytes are the compact JSON encoding of `payload`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub payload: Value,
    pub sender: Digest32,
    #[serde(with = "sig_hex")]
    pub signature: [u8; 64],
    pub timestamp: u64,
}

impl Transaction {
    pub fn payload_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.payload).expect("JSON values always serialize")
    }

    pub fn verify(&self, key: &VerifyingKey) -> bool {
        let Ok(sig) = Signature::from_slice(&self.signature) else {
            return false;
        };
        key.verify(&self.payload_bytes(), &sig).is_ok()
    }

    /// The `verification_key` a registration payload announces, if any.
    pub fn announced_key(&self) -> Option<&str> {
        self.payload.get("verification_key")?.as_str()
    }
}

/// A node's identity and signing key.
#[derive(Clone)]
pub struct Wallet {
    id: Digest32,
    key: SigningKey,
}

impl fmt::Debug for Wallet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wallet").field("id", &self.id).finish_non_exhaustive()
    }
}

impl Wallet {
    pub fn generate<R: RngCore + CryptoRng>(id: Digest32, rng: &mut R) -> Self {
        Self {
            id,
            key: SigningKey::random(rng),
        }
    }

    pub fn id(&self) -> Digest32 {
        self.id
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        *self.key.verifying_key()
    }

    /// Compressed SEC1 encoding, lowercase hex.
    pub fn verifying_key_hex(&self) -> String {
        hex::encode(self.key.verifying_key().to_encoded_point(true).as_bytes())
    }

    /// Deterministic (RFC 6979) signature, so equal payloads give equal transactions.
    pub fn sign(&self, payload: Value, timestamp: u64) -> Transaction {
        let bytes = serde_json::to_vec(&payload).expect("JSON values always serialize");
        let sig: Signature = self.key.sign(&bytes);
        Transaction {
            payload,
            sender: self.id,
            signature: sig.to_bytes().into(),
            timestamp,
        }
    }
}

pub fn parse_verifying_key(text: &str) -> Result<VerifyingKey, String> {
    let bytes = crate::hexutil::decode(text)?;
    VerifyingKey::from_sec1_bytes(&bytes).map_err(|e| e.to_string())
}

mod sig_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(sig: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(sig))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        crate::hexutil::decode_array(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
