//! Arithmetic in the prime field Z_p.
//!
//! Every exponent in the scheme (attribute randomness, polynomial shares,
//! master secrets) lives here. Moduli are at most 63 bits so a product fits
//! in a `u128` before reduction.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use thiserror::Error;

/// Small prime used by unit tests; the worked policy example embeds in it.
pub const TEST_PRIME: u64 = 1009;

/// 2^61 - 1, the default modulus for simulations and benchmarks.
pub const LARGE_PRIME: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulus {0} is not a prime below 2^63")]
    InvalidModulus(u64),
    #[error("value {value} is not reduced modulo {modulus}")]
    Unreduced { value: u64, modulus: u64 },
}

/// Handle to Z_p. Cheap to copy; elements remember which field produced them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrimeField {
    modulus: u64,
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        if modulus >= 1 << 63 || !is_prime(modulus) {
            return Err(FieldError::InvalidModulus(modulus));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Reduces `value` into the field.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.modulus,
            modulus: self.modulus,
        }
    }

    /// Like [`PrimeField::element`] but rejects values that are not already reduced.
    pub fn checked_element(&self, value: u64) -> Result<FieldElement, FieldError> {
        if value >= self.modulus {
            return Err(FieldError::Unreduced {
                value,
                modulus: self.modulus,
            });
        }
        Ok(self.element(value))
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    /// Uniform sample from [0, p).
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        self.element(rng.gen_range(0..self.modulus))
    }

    /// Uniform sample from [1, p).
    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        self.element(rng.gen_range(1..self.modulus))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn field(&self) -> PrimeField {
        PrimeField {
            modulus: self.modulus,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    /// Square-and-multiply exponentiation.
    pub fn pow(&self, mut exp: u64) -> FieldElement {
        let mut base = self.value;
        let mut acc = 1 % self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul_mod(acc, base, self.modulus);
            }
            base = mul_mod(base, base, self.modulus);
            exp >>= 1;
        }
        FieldElement {
            value: acc,
            modulus: self.modulus,
        }
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self) -> Result<FieldElement, FieldError> {
        if self.value == 0 {
            return Err(FieldError::DivisionByZero);
        }
        Ok(self.pow(self.modulus - 2))
    }

    pub fn div(&self, rhs: FieldElement) -> Result<FieldElement, FieldError> {
        Ok(*self * rhs.inv()?)
    }

    fn same_field(&self, rhs: &FieldElement) {
        assert_eq!(
            self.modulus, rhs.modulus,
            "operands belong to different fields"
        );
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;

    fn add(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        let sum = self.value as u128 + rhs.value as u128;
        FieldElement {
            value: (sum % self.modulus as u128) as u64,
            modulus: self.modulus,
        }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;

    fn sub(self, rhs: FieldElement) -> FieldElement {
        self + (-rhs)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;

    fn mul(self, rhs: FieldElement) -> FieldElement {
        self.same_field(&rhs);
        FieldElement {
            value: mul_mod(self.value, rhs.value, self.modulus),
            modulus: self.modulus,
        }
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;

    fn neg(self) -> FieldElement {
        let value = if self.value == 0 {
            0
        } else {
            self.modulus - self.value
        };
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: FieldElement) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: FieldElement) {
        *self = *self * rhs;
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; these witnesses cover every 64-bit integer.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n % w == 0 {
            return n == w;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
