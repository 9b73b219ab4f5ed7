use crate::field::{FieldElement, PrimeField};

use super::{b64_serde, ElementBytes, GroupError, GroupParams, PairingGroup};

/// Insecure group whose elements are their own discrete logs.
///
/// `b^x` is stored as `x`, so `e(b^x, b^y) = bT^(x*y)` is a field product.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExponentGroup {
    params: GroupParams,
    field: PrimeField,
}

/// Element of G1, stored as its log to the internal base.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExpG1 {
    log: FieldElement,
}

/// Element of GT, stored as its log to the internal base.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExpGt {
    log: FieldElement,
}

impl ExponentGroup {
    /// # Panics
    /// If `params` are not exponent-tracking parameters.
    pub fn new(params: GroupParams) -> Self {
        assert_eq!(params.backend, super::Backend::ExponentTracking);
        Self {
            field: params.scalar_field(),
            params,
        }
    }

    /// `log_g(a)`; only this backend can answer it.
    pub fn dlog_g1(&self, a: &ExpG1) -> FieldElement {
        let g = self.field.element(self.params.generator_log);
        a.log * g.inv().expect("generator is not the identity")
    }

    /// `log_gT(a)` where `gT = e(g, g)`.
    pub fn dlog_gt(&self, a: &ExpGt) -> FieldElement {
        let gt = self.field.element(self.params.target_log);
        a.log * gt.inv().expect("target generator is not the identity")
    }
}

impl PairingGroup for ExponentGroup {
    type G1 = ExpG1;
    type Gt = ExpGt;

    fn params(&self) -> &GroupParams {
        &self.params
    }

    fn generator(&self) -> ExpG1 {
        ExpG1 {
            log: self.field.element(self.params.generator_log),
        }
    }

    fn g1_identity(&self) -> ExpG1 {
        ExpG1 { log: self.field.zero() }
    }

    fn g1_mul(&self, a: &ExpG1, b: &ExpG1) -> ExpG1 {
        ExpG1 { log: a.log + b.log }
    }

    fn g1_pow(&self, a: &ExpG1, k: FieldElement) -> ExpG1 {
        ExpG1 { log: a.log * k }
    }

    fn g1_belongs(&self, a: &ExpG1) -> bool {
        a.log.modulus() == self.params.order
    }

    fn gt_identity(&self) -> ExpGt {
        ExpGt { log: self.field.zero() }
    }

    fn gt_mul(&self, a: &ExpGt, b: &ExpGt) -> ExpGt {
        ExpGt { log: a.log + b.log }
    }

    fn gt_inv(&self, a: &ExpGt) -> ExpGt {
        ExpGt { log: -a.log }
    }

    fn gt_pow(&self, a: &ExpGt, k: FieldElement) -> ExpGt {
        ExpGt { log: a.log * k }
    }

    fn gt_belongs(&self, a: &ExpGt) -> bool {
        a.log.modulus() == self.params.order
    }

    fn pair(&self, u: &ExpG1, v: &ExpG1) -> Result<ExpGt, GroupError> {
        if !self.g1_belongs(u) || !self.g1_belongs(v) {
            return Err(GroupError::ParamMismatch);
        }
        Ok(ExpGt { log: u.log * v.log })
    }
}

fn encode(log: &FieldElement) -> Vec<u8> {
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(&log.modulus().to_be_bytes());
    out.extend_from_slice(&log.value().to_be_bytes());
    out
}

fn decode(bytes: &[u8]) -> Result<FieldElement, GroupError> {
    if bytes.len() != 16 {
        return Err(GroupError::Encoding(format!("expected 16 bytes, got {}", bytes.len())));
    }
    let modulus = u64::from_be_bytes(bytes[..8].try_into().expect("length checked"));
    let value = u64::from_be_bytes(bytes[8..].try_into().expect("length checked"));
    let field = PrimeField::new(modulus).map_err(|e| GroupError::Encoding(e.to_string()))?;
    field
        .checked_element(value)
        .map_err(|e| GroupError::Encoding(e.to_string()))
}

impl ElementBytes for ExpG1 {
    fn to_bytes(&self) -> Vec<u8> {
        encode(&self.log)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        Ok(ExpG1 { log: decode(bytes)? })
    }
}

impl ElementBytes for ExpGt {
    fn to_bytes(&self) -> Vec<u8> {
        encode(&self.log)
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        Ok(ExpGt { log: decode(bytes)? })
    }
}

b64_serde!(ExpG1);
b64_serde!(ExpGt);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{LARGE_PRIME, TEST_PRIME};
    use proptest::prelude::*;

    fn group(p: u64) -> ExponentGroup {
        ExponentGroup::new(GroupParams::exponent(p).unwrap())
    }

    #[test]
    fn pairing_of_generator_is_target_generator() {
        let g = ExponentGroup::new(GroupParams::exponent_with_generator(TEST_PRIME, 5).unwrap());
        let gt = g.pair(&g.generator(), &g.generator()).unwrap();
        assert_eq!(g.dlog_gt(&gt).value(), 1);
        assert_eq!(gt.log.value(), 25);
    }

    #[test]
    fn cross_parameter_pairing_is_rejected() {
        let a = group(TEST_PRIME);
        let b = group(LARGE_PRIME);
        assert_eq!(a.pair(&a.generator(), &b.generator()), Err(GroupError::ParamMismatch));
    }

    #[test]
    fn bytes_and_json_round_trip() {
        let g = group(LARGE_PRIME);
        let x = g.g1_exp(g.scalar_field().element(123_456_789));
        assert_eq!(ExpG1::from_bytes(&x.to_bytes()).unwrap(), x);
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(serde_json::from_str::<ExpG1>(&json).unwrap(), x);
        assert!(ExpG1::from_bytes(&[0; 15]).is_err());
        let mut unreduced = x.to_bytes();
        unreduced[8..].copy_from_slice(&u64::MAX.to_be_bytes());
        assert!(ExpG1::from_bytes(&unreduced).is_err());
    }

    proptest! {
        #[test]
        fn bilinear(a in 0u64..TEST_PRIME, b in 0u64..TEST_PRIME, gl in 1u64..TEST_PRIME) {
            let g = ExponentGroup::new(GroupParams::exponent_with_generator(TEST_PRIME, gl).unwrap());
            let f = g.scalar_field();
            let (a, b) = (f.element(a), f.element(b));
            let lhs = g.pair(&g.g1_exp(a), &g.g1_exp(b)).unwrap();
            let rhs = g.gt_pow(&g.gt_generator(), a * b);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn dlog_inverts_exponentiation(k in 0u64..LARGE_PRIME) {
            let g = group(LARGE_PRIME);
            let k = g.scalar_field().element(k);
            prop_assert_eq!(g.dlog_g1(&g.g1_exp(k)), k);
            prop_assert_eq!(g.dlog_gt(&g.gt_pow(&g.gt_generator(), k)), k);
        }
    }
}
