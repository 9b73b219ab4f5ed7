//! Symmetric bilinear groups `e: G1 x G1 -> GT` behind one trait.
//!
//! Two backends exist:
//!
//! * [`ExponentGroup`] stores every element as its discrete logarithm. It is
//!   completely insecure, but it turns every pairing identity of the scheme
//!   into modular arithmetic that tests can check exactly.
//! * [`CurveGroup`] is a real Type-1 pairing: the reduced Tate pairing on the
//!   supersingular curve `y^2 = x^3 + x` over a 62-bit prime field, composed
//!   with the distortion map. It is far too small to be secure and exists to
//!   show the scheme also runs on an honest pairing.

mod curve;
mod exponent;

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldElement, PrimeField};

pub use curve::{CurveGroup, CurveG1, CurveGt, CURVE_BASE_PRIME, CURVE_ORDER};
pub use exponent::{ExpG1, ExpGt, ExponentGroup};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("elements were created under different group parameters")]
    ParamMismatch,
    #[error("malformed group element encoding: {0}")]
    Encoding(String),
    #[error("attribute label must not be empty")]
    EmptyLabel,
    #[error("invalid group parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ExponentTracking,
    ExternalPairing,
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::ExponentTracking => "exponent-tracking",
            Backend::ExternalPairing => "external-pairing",
        }
    }
}

impl FromStr for Backend {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponent-tracking" => Ok(Backend::ExponentTracking),
            "external-pairing" => Ok(Backend::ExternalPairing),
            other => Err(GroupError::InvalidParams(format!("unknown backend `{other}`"))),
        }
    }
}

/// Public description of a pairing group.
///
/// `generator_log` and `target_log` are the discrete logs of `g` and
/// `gT = e(g, g)` relative to the backend's internal bases. They are always 1
/// for the curve backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupParams {
    pub order: u64,
    pub generator_log: u64,
    pub target_log: u64,
    pub backend: Backend,
}

impl GroupParams {
    pub fn exponent(order: u64) -> Result<Self, GroupError> {
        Self::exponent_with_generator(order, 1)
    }

    pub fn exponent_with_generator(order: u64, generator_log: u64) -> Result<Self, GroupError> {
        let field = PrimeField::new(order).map_err(|e| GroupError::InvalidParams(e.to_string()))?;
        let g = field.element(generator_log);
        if g.is_zero() {
            return Err(GroupError::InvalidParams("generator must not be the identity".into()));
        }
        Ok(Self {
            order,
            generator_log: g.value(),
            target_log: (g * g).value(),
            backend: Backend::ExponentTracking,
        })
    }

    pub fn curve() -> Self {
        Self {
            order: CURVE_ORDER,
            generator_log: 1,
            target_log: 1,
            backend: Backend::ExternalPairing,
        }
    }

    pub fn scalar_field(&self) -> PrimeField {
        PrimeField::new(self.order).expect("group order is validated on construction")
    }

    /// Canonical text form: one `key=value` line per field, decimal integers.
    pub fn to_canonical_text(&self) -> String {
        format!(
            "backend={}\np={}\ng={}\ngt={}\n",
            self.backend.tag(),
            self.order,
            self.generator_log,
            self.target_log
        )
    }

    fn validate(self) -> Result<Self, GroupError> {
        let expected = match self.backend {
            Backend::ExponentTracking => {
                Self::exponent_with_generator(self.order, self.generator_log)?
            }
            Backend::ExternalPairing => Self::curve(),
        };
        if expected != self {
            return Err(GroupError::InvalidParams(
                "generator logs are inconsistent with the backend".into(),
            ));
        }
        Ok(self)
    }
}

impl fmt::Display for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical_text())
    }
}

impl FromStr for GroupParams {
    type Err = GroupError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut backend = None;
        let mut order = None;
        let mut g = None;
        let mut gt = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GroupError::InvalidParams(format!("expected key=value, got `{line}`")))?;
            let number = || {
                value
                    .parse::<u64>()
                    .map_err(|_| GroupError::InvalidParams(format!("`{key}` is not a decimal integer")))
            };
            match key {
                "backend" => backend = Some(value.parse::<Backend>()?),
                "p" => order = Some(number()?),
                "g" => g = Some(number()?),
                "gt" => gt = Some(number()?),
                other => return Err(GroupError::InvalidParams(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| GroupError::InvalidParams(format!("missing `{k}`"));
        GroupParams {
            order: order.ok_or_else(|| missing("p"))?,
            generator_log: g.ok_or_else(|| missing("g"))?,
            target_log: gt.ok_or_else(|| missing("gt"))?,
            backend: backend.ok_or_else(|| missing("backend"))?,
        }
        .validate()
    }
}

/// Byte encoding of a group element, independent of any group handle.
pub trait ElementBytes: Sized {
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError>;
}

/// A symmetric bilinear group, written multiplicatively.
pub trait PairingGroup: Clone + fmt::Debug + Send + Sync + 'static {
    type G1: Clone + PartialEq + Eq + fmt::Debug + Send + Sync + ElementBytes + Serialize + DeserializeOwned;
    type Gt: Clone + PartialEq + Eq + fmt::Debug + Send + Sync + ElementBytes + Serialize + DeserializeOwned;

    fn params(&self) -> &GroupParams;

    fn generator(&self) -> Self::G1;
    fn g1_identity(&self) -> Self::G1;
    fn g1_mul(&self, a: &Self::G1, b: &Self::G1) -> Self::G1;
    fn g1_pow(&self, a: &Self::G1, k: FieldElement) -> Self::G1;
    /// Whether `a` was produced under this group's parameters.
    fn g1_belongs(&self, a: &Self::G1) -> bool;

    fn gt_identity(&self) -> Self::Gt;
    fn gt_mul(&self, a: &Self::Gt, b: &Self::Gt) -> Self::Gt;
    fn gt_inv(&self, a: &Self::Gt) -> Self::Gt;
    fn gt_pow(&self, a: &Self::Gt, k: FieldElement) -> Self::Gt;
    fn gt_belongs(&self, a: &Self::Gt) -> bool;

    fn pair(&self, u: &Self::G1, v: &Self::G1) -> Result<Self::Gt, GroupError>;

    fn scalar_field(&self) -> PrimeField {
        self.params().scalar_field()
    }

    /// `g^k`.
    fn g1_exp(&self, k: FieldElement) -> Self::G1 {
        self.g1_pow(&self.generator(), k)
    }

    /// `gT = e(g, g)`.
    fn gt_generator(&self) -> Self::Gt {
        self.pair(&self.generator(), &self.generator())
            .expect("generator belongs to its own group")
    }

    fn gt_div(&self, a: &Self::Gt, b: &Self::Gt) -> Self::Gt {
        self.gt_mul(a, &self.gt_inv(b))
    }

    /// A uniformly random element of GT.
    fn random_gt<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Gt {
        let k = self.scalar_field().random(rng);
        self.gt_pow(&self.gt_generator(), k)
    }
}

/// Maps an attribute label to a fresh random point `(g^rv, rv)`.
///
/// The label only gates the call; repeat queries return fresh values, so
/// callers that need a stable mapping must cache the result.
pub fn hash_to_group<G: PairingGroup, R: Rng + ?Sized>(
    group: &G,
    label: &str,
    rng: &mut R,
) -> Result<(G::G1, FieldElement), GroupError> {
    if label.is_empty() {
        return Err(GroupError::EmptyLabel);
    }
    let rv = group.scalar_field().random_nonzero(rng);
    Ok((group.g1_exp(rv), rv))
}

pub(crate) fn encode_b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub(crate) fn decode_b64(text: &str) -> Result<Vec<u8>, GroupError> {
    B64.decode(text)
        .map_err(|e| GroupError::Encoding(e.to_string()))
}

/// Implements base64 string serde for an [`ElementBytes`] type.
macro_rules! b64_serde {
    ($ty:ty) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&$crate::pairing::encode_b64(&$crate::pairing::ElementBytes::to_bytes(self)))
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = <std::borrow::Cow<'de, str>>::deserialize(d)?;
                let bytes = $crate::pairing::decode_b64(&text).map_err(serde::de::Error::custom)?;
                <$ty as $crate::pairing::ElementBytes>::from_bytes(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use b64_serde;
