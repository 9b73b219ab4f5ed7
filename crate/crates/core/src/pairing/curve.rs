use std::sync::OnceLock;

use crate::field::FieldElement;

use super::{b64_serde, ElementBytes, GroupError, GroupParams, PairingGroup};

/// Base field prime `q`. `q = 4r - 1`, so `q = 3 (mod 4)` and `#E(F_q) = q + 1 = 4r`.
pub const CURVE_BASE_PRIME: u64 = 4_611_686_018_427_386_323;

/// Prime order `r` of the pairing subgroup.
pub const CURVE_ORDER: u64 = 1_152_921_504_606_846_581;

const Q: u64 = CURVE_BASE_PRIME;

#[inline]
fn add(a: u64, b: u64) -> u64 {
    let s = a + b; // both < 2^62, no overflow
    if s >= Q {
        s - Q
    } else {
        s
    }
}

#[inline]
fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + Q - b
    }
}

#[inline]
fn mul(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % Q as u128) as u64
}

#[inline]
fn neg(a: u64) -> u64 {
    if a == 0 {
        0
    } else {
        Q - a
    }
}

/// Inverse by the extended Euclidean algorithm. `a` must be nonzero.
fn inv(a: u64) -> u64 {
    debug_assert!(a != 0 && a < Q);
    let (mut r0, mut r1) = (Q as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let quotient = r0 / r1;
        (r0, r1) = (r1, r0 - quotient * r1);
        (t0, t1) = (t1, t0 - quotient * t1);
    }
    debug_assert_eq!(r0, 1);
    t0.rem_euclid(Q as i128) as u64
}

fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

/// `a + b*i` in `F_q[i] / (i^2 + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Fq2 {
    a: u64,
    b: u64,
}

impl Fq2 {
    const ONE: Fq2 = Fq2 { a: 1, b: 0 };

    fn mul(self, o: Fq2) -> Fq2 {
        Fq2 {
            a: sub(mul(self.a, o.a), mul(self.b, o.b)),
            b: add(mul(self.a, o.b), mul(self.b, o.a)),
        }
    }

    fn square(self) -> Fq2 {
        self.mul(self)
    }

    /// Frobenius: `(a + bi)^q = a - bi` because `q = 3 (mod 4)`.
    fn conj(self) -> Fq2 {
        Fq2 {
            a: self.a,
            b: neg(self.b),
        }
    }

    fn norm(self) -> u64 {
        add(mul(self.a, self.a), mul(self.b, self.b))
    }

    fn inv(self) -> Fq2 {
        let n = inv(self.norm());
        let c = self.conj();
        Fq2 {
            a: mul(c.a, n),
            b: mul(c.b, n),
        }
    }

    fn pow(self, mut exp: u64) -> Fq2 {
        let mut base = self;
        let mut acc = Fq2::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }
}

type Affine = (u64, u64);

fn on_curve((x, y): Affine) -> bool {
    mul(y, y) == add(mul(mul(x, x), x), x)
}

fn point_double(p: Option<Affine>) -> Option<Affine> {
    let (x, y) = p?;
    if y == 0 {
        return None;
    }
    let lambda = mul(add(mul(3, mul(x, x)), 1), inv(add(y, y)));
    let x3 = sub(mul(lambda, lambda), add(x, x));
    let y3 = sub(mul(lambda, sub(x, x3)), y);
    Some((x3, y3))
}

fn point_add(p: Option<Affine>, q: Option<Affine>) -> Option<Affine> {
    let (Some((x1, y1)), Some((x2, y2))) = (p, q) else {
        return p.or(q);
    };
    if x1 == x2 {
        return if y1 == y2 { point_double(p) } else { None };
    }
    let lambda = mul(sub(y2, y1), inv(sub(x2, x1)));
    let x3 = sub(sub(mul(lambda, lambda), x1), x2);
    let y3 = sub(mul(lambda, sub(x1, x3)), y1);
    Some((x3, y3))
}

fn point_mul(p: Option<Affine>, k: u64) -> Option<Affine> {
    let mut acc = None;
    for i in (0..64 - k.leading_zeros()).rev() {
        acc = point_double(acc);
        if (k >> i) & 1 == 1 {
            acc = point_add(acc, p);
        }
    }
    acc
}

/// Deterministic generator: the first `x` giving a curve point, cleared of the cofactor.
fn generator() -> Affine {
    static GEN: OnceLock<Affine> = OnceLock::new();
    *GEN.get_or_init(|| {
        for x in 1u64.. {
            let rhs = add(mul(mul(x, x), x), x);
            if pow(rhs, (Q - 1) / 2) != 1 {
                continue;
            }
            let y = pow(rhs, (Q + 1) / 4);
            let y = y.min(neg(y));
            if let Some(g) = point_mul(Some((x, y)), 4) {
                return g;
            }
        }
        unreachable!("the curve has points of order r")
    })
}

/// Miller loop for `f_{r,P}` evaluated at `psi(Q) = (-x_Q, i*y_Q)`.
///
/// Vertical lines evaluate into `F_q` and vanish under the final
/// exponentiation, so they are skipped.
fn miller(p: Affine, q: Affine) -> Fq2 {
    let (xq, yq) = q;
    let line = |lambda: u64, (xt, yt): Affine| Fq2 {
        a: sub(mul(lambda, add(xq, xt)), yt),
        b: yq,
    };
    let mut t = p;
    let mut f = Fq2::ONE;
    let bits = 64 - CURVE_ORDER.leading_zeros();
    for i in (0..bits - 1).rev() {
        let (xt, yt) = t;
        let lambda = mul(add(mul(3, mul(xt, xt)), 1), inv(add(yt, yt)));
        f = f.square().mul(line(lambda, t));
        t = point_double(Some(t)).expect("intermediate multiples have odd order");
        if (CURVE_ORDER >> i) & 1 == 1 {
            let (xt, yt) = t;
            if xt == p.0 {
                // T = -P only on the final step, where T + P = O.
                debug_assert_eq!(i, 0);
                break;
            }
            let lambda = mul(sub(p.1, yt), inv(sub(p.0, xt)));
            f = f.mul(line(lambda, t));
            t = point_add(Some(t), Some(p)).expect("T != -P before the last step");
        }
    }
    f
}

/// `f^((q^2 - 1) / r) = (conj(f) / f)^4`.
fn final_exponentiation(f: Fq2) -> Fq2 {
    f.conj().mul(f.inv()).square().square()
}

/// Reduced Tate pairing composed with the distortion map on `y^2 = x^3 + x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveGroup {
    params: GroupParams,
}

impl Default for CurveGroup {
    fn default() -> Self {
        Self::new()
    }
}

impl CurveGroup {
    pub fn new() -> Self {
        Self {
            params: GroupParams::curve(),
        }
    }
}

/// Point of the order-`r` subgroup; `None` is the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CurveG1(Option<Affine>);

/// Element of the order-`r` subgroup of `F_{q^2}^*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CurveGt(Fq2);

fn scalar(k: FieldElement) -> u64 {
    debug_assert_eq!(k.modulus(), CURVE_ORDER, "scalar from a foreign field");
    k.value() % CURVE_ORDER
}

impl PairingGroup for CurveGroup {
    type G1 = CurveG1;
    type Gt = CurveGt;

    fn params(&self) -> &GroupParams {
        &self.params
    }

    fn generator(&self) -> CurveG1 {
        CurveG1(Some(generator()))
    }

    fn g1_identity(&self) -> CurveG1 {
        CurveG1(None)
    }

    fn g1_mul(&self, a: &CurveG1, b: &CurveG1) -> CurveG1 {
        CurveG1(point_add(a.0, b.0))
    }

    fn g1_pow(&self, a: &CurveG1, k: FieldElement) -> CurveG1 {
        CurveG1(point_mul(a.0, scalar(k)))
    }

    fn g1_belongs(&self, _: &CurveG1) -> bool {
        true
    }

    fn gt_identity(&self) -> CurveGt {
        CurveGt(Fq2::ONE)
    }

    fn gt_mul(&self, a: &CurveGt, b: &CurveGt) -> CurveGt {
        CurveGt(a.0.mul(b.0))
    }

    fn gt_inv(&self, a: &CurveGt) -> CurveGt {
        // Norm-one elements are inverted by conjugation.
        CurveGt(a.0.conj())
    }

    fn gt_pow(&self, a: &CurveGt, k: FieldElement) -> CurveGt {
        CurveGt(a.0.pow(scalar(k)))
    }

    fn gt_belongs(&self, _: &CurveGt) -> bool {
        true
    }

    fn pair(&self, u: &CurveG1, v: &CurveG1) -> Result<CurveGt, GroupError> {
        Ok(match (u.0, v.0) {
            (Some(p), Some(q)) => CurveGt(final_exponentiation(miller(p, q))),
            _ => CurveGt(Fq2::ONE),
        })
    }
}

fn read_u64(bytes: &[u8]) -> Result<u64, GroupError> {
    let v = u64::from_be_bytes(bytes.try_into().expect("caller slices 8 bytes"));
    if v >= Q {
        return Err(GroupError::Encoding("coordinate is not reduced".into()));
    }
    Ok(v)
}

impl ElementBytes for CurveG1 {
    /// `0x00` for infinity, otherwise `0x04 || x || y`.
    fn to_bytes(&self) -> Vec<u8> {
        match self.0 {
            None => vec![0],
            Some((x, y)) => {
                let mut out = Vec::with_capacity(17);
                out.push(4);
                out.extend_from_slice(&x.to_be_bytes());
                out.extend_from_slice(&y.to_be_bytes());
                out
            }
        }
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        match bytes {
            [0] => Ok(CurveG1(None)),
            [4, rest @ ..] if rest.len() == 16 => {
                let p = (read_u64(&rest[..8])?, read_u64(&rest[8..])?);
                if !on_curve(p) {
                    return Err(GroupError::Encoding("point is not on the curve".into()));
                }
                if point_mul(Some(p), CURVE_ORDER).is_some() {
                    return Err(GroupError::Encoding("point is outside the prime-order subgroup".into()));
                }
                Ok(CurveG1(Some(p)))
            }
            _ => Err(GroupError::Encoding("bad curve point encoding".into())),
        }
    }
}

impl ElementBytes for CurveGt {
    /// `a || b` for `a + b*i`.
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        out.extend_from_slice(&self.0.a.to_be_bytes());
        out.extend_from_slice(&self.0.b.to_be_bytes());
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, GroupError> {
        if bytes.len() != 16 {
            return Err(GroupError::Encoding(format!("expected 16 bytes, got {}", bytes.len())));
        }
        let x = Fq2 {
            a: read_u64(&bytes[..8])?,
            b: read_u64(&bytes[8..])?,
        };
        if x.pow(CURVE_ORDER) != Fq2::ONE {
            return Err(GroupError::Encoding("element is outside the order-r subgroup".into()));
        }
        Ok(CurveGt(x))
    }
}

b64_serde!(CurveG1);
b64_serde!(CurveGt);
