//! Short-Weierstrass curves `y^2 = x^3 + ax + b` over a prime field and the
//! DSS variant with `r = x(k^-1 G) mod q`, `s = k (m + r d) mod q`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::hexint;
use crate::modmath::mod_inverse;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CurveError {
    #[error("point is not on the curve")]
    PointNotOnCurve,
    #[error("invalid curve parameters: {0}")]
    InvalidParams(String),
    #[error("scalar is zero modulo the group order")]
    InvalidScalar,
    #[error("r came out as zero, pick another nonce")]
    ZeroR,
    #[error("s came out as zero, pick another nonce")]
    ZeroS,
}

pub type Result<T> = std::result::Result<T, CurveError>;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurvePoint {
    Identity,
    Affine { x: BigUint, y: BigUint },
}

impl CurvePoint {
    pub fn affine(x: impl Into<BigUint>, y: impl Into<BigUint>) -> Self {
        CurvePoint::Affine { x: x.into(), y: y.into() }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CurvePoint::Identity)
    }

    pub fn x(&self) -> Option<&BigUint> {
        match self {
            CurvePoint::Identity => None,
            CurvePoint::Affine { x, .. } => Some(x),
        }
    }
}

impl fmt::Debug for CurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvePoint::Identity => write!(f, "O"),
            CurvePoint::Affine { x, y } => write!(f, "({x:x}, {y:x})"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AffineRepr {
    #[serde(with = "hexint")]
    x: BigUint,
    #[serde(with = "hexint")]
    y: BigUint,
}

impl Serialize for CurvePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CurvePoint::Identity => serializer.serialize_str("O"),
            CurvePoint::Affine { x, y } => AffineRepr { x: x.clone(), y: y.clone() }.serialize(serializer),
        }
    }
}

impl<'de> Deserialize<'de> for CurvePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Tag(String),
            Affine(AffineRepr),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Tag(t) if t == "O" => Ok(CurvePoint::Identity),
            Repr::Tag(t) => Err(de::Error::custom(format!("unknown point tag {t:?}"))),
            Repr::Affine(a) => Ok(CurvePoint::Affine { x: a.x, y: a.y }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveParams {
    #[serde(with = "hexint")]
    pub p: BigUint,
    #[serde(with = "hexint")]
    pub a: BigUint,
    #[serde(with = "hexint")]
    pub b: BigUint,
    pub g: CurvePoint,
    #[serde(with = "hexint")]
    pub q: BigUint,
}

impl CurveParams {
    pub fn new(p: BigUint, a: BigUint, b: BigUint, g: CurvePoint, q: BigUint) -> Result<Self> {
        let params = CurveParams { p, a, b, g, q };
        params.validate()?;
        Ok(params)
    }

    /// `y^2 = x^3 + 2x + 2` over F_17 with base point (5, 1) of order 19.
    pub fn toy() -> Self {
        Self::new(
            BigUint::from(17u32),
            BigUint::from(2u32),
            BigUint::from(2u32),
            CurvePoint::affine(5u32, 1u32),
            BigUint::from(19u32),
        )
        .expect("toy curve is valid")
    }

    /// secp256k1.
    pub fn secp256k1() -> Self {
        let h = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).expect("constant");
        Self::new(
            h("fffffffffffffffffffffffffffffffffffffffffffffffffffffffefffffc2f"),
            BigUint::zero(),
            BigUint::from(7u32),
            CurvePoint::Affine {
                x: h("79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798"),
                y: h("483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8"),
            },
            h("fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141"),
        )
        .expect("secp256k1 constants are valid")
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "toy" => Some(Self::toy()),
            "secp256k1" => Some(Self::secp256k1()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.p;
        let disc = (BigUint::from(4u32) * self.a.modpow(&BigUint::from(3u32), p) + BigUint::from(27u32) * &self.b * &self.b) % p;
        if disc.is_zero() {
            return Err(CurveError::InvalidParams("singular curve".into()));
        }
        if self.a >= *p || self.b >= *p {
            return Err(CurveError::InvalidParams("coefficients outside the field".into()));
        }
        if self.g.is_identity() || !self.contains(&self.g) {
            return Err(CurveError::InvalidParams("base point not on curve".into()));
        }
        if !self.mul_unreduced(&self.q, &self.g).is_identity() {
            return Err(CurveError::InvalidParams("q * G is not the identity".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("curve serializes")))
    }

    pub fn contains(&self, point: &CurvePoint) -> bool {
        match point {
            CurvePoint::Identity => true,
            CurvePoint::Affine { x, y } => {
                let p = &self.p;
                if x >= p || y >= p {
                    return false;
                }
                let lhs = y * y % p;
                let rhs = (x * x % p * x + &self.a * x + &self.b) % p;
                lhs == rhs
            }
        }
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a + &self.p - b % &self.p) % &self.p
    }

    fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * b % &self.p
    }

    pub fn negate(&self, point: &CurvePoint) -> CurvePoint {
        match point {
            CurvePoint::Identity => CurvePoint::Identity,
            CurvePoint::Affine { x, y } => CurvePoint::Affine { x: x.clone(), y: self.sub(&BigUint::zero(), y) },
        }
    }

    fn add_affine(&self, lhs: &CurvePoint, rhs: &CurvePoint) -> CurvePoint {
        let (x1, y1, x2, y2) = match (lhs, rhs) {
            (CurvePoint::Identity, _) => return rhs.clone(),
            (_, CurvePoint::Identity) => return lhs.clone(),
            (CurvePoint::Affine { x: x1, y: y1 }, CurvePoint::Affine { x: x2, y: y2 }) => (x1, y1, x2, y2),
        };
        let p = &self.p;
        let slope = if x1 == x2 {
            if (y1 + y2) % p == BigUint::zero() {
                return CurvePoint::Identity;
            }
            let num = (BigUint::from(3u32) * x1 * x1 + &self.a) % p;
            let den = (y1 << 1) % p;
            self.mul(&num, &mod_inverse(&den, p).expect("2y is a unit"))
        } else {
            let num = self.sub(y2, y1);
            let den = self.sub(x2, x1);
            self.mul(&num, &mod_inverse(&den, p).expect("x2 - x1 is a unit"))
        };
        let x3 = self.sub(&self.sub(&self.mul(&slope, &slope), x1), x2);
        let y3 = self.sub(&self.mul(&slope, &self.sub(x1, &x3)), y1);
        CurvePoint::Affine { x: x3, y: y3 }
    }

    /// Group law; both inputs must lie on the curve.
    pub fn point_add(&self, lhs: &CurvePoint, rhs: &CurvePoint) -> Result<CurvePoint> {
        if !self.contains(lhs) || !self.contains(rhs) {
            return Err(CurveError::PointNotOnCurve);
        }
        Ok(self.add_affine(lhs, rhs))
    }

    /// `k * point` by double-and-add. Multiples of the base point reduce `k`
    /// modulo `q` first.
    pub fn scalar_mul(&self, k: &BigUint, point: &CurvePoint) -> Result<CurvePoint> {
        if !self.contains(point) {
            return Err(CurveError::PointNotOnCurve);
        }
        if *point == self.g {
            return Ok(self.mul_unreduced(&(k % &self.q), point));
        }
        Ok(self.mul_unreduced(k, point))
    }

    pub fn mul_base(&self, k: &BigUint) -> CurvePoint {
        self.mul_unreduced(&(k % &self.q), &self.g)
    }

    // Jacobian coordinates (X, Y, Z) ~ (X / Z^2, Y / Z^3); one inversion at the end.
    fn mul_unreduced(&self, k: &BigUint, point: &CurvePoint) -> CurvePoint {
        let (px, py) = match point {
            CurvePoint::Identity => return CurvePoint::Identity,
            CurvePoint::Affine { x, y } => (x, y),
        };
        if k.is_zero() {
            return CurvePoint::Identity;
        }
        let mut acc: Option<Jacobian> = None;
        for bit in (0..k.bits()).rev() {
            if let Some(j) = acc.take() {
                acc = self.jacobian_double(j);
            }
            if k.bit(bit) {
                acc = match acc.take() {
                    None => Some(Jacobian { x: px.clone(), y: py.clone(), z: BigUint::one() }),
                    Some(j) => self.jacobian_add_affine(j, px, py),
                };
            }
        }
        match acc {
            None => CurvePoint::Identity,
            Some(j) => self.to_affine(&j),
        }
    }

    fn jacobian_double(&self, j: Jacobian) -> Option<Jacobian> {
        if j.y.is_zero() {
            return None;
        }
        let yy = self.mul(&j.y, &j.y);
        let s = self.mul(&(BigUint::from(4u32) * &j.x % &self.p), &yy);
        let zz = self.mul(&j.z, &j.z);
        let m = (BigUint::from(3u32) * self.mul(&j.x, &j.x) + self.mul(&self.a, &self.mul(&zz, &zz))) % &self.p;
        let x3 = self.sub(&self.mul(&m, &m), &((&s << 1) % &self.p));
        let y4 = self.mul(&yy, &yy);
        let y3 = self.sub(&self.mul(&m, &self.sub(&s, &x3)), &((y4 << 3) % &self.p));
        let z3 = self.mul(&((&j.y << 1) % &self.p), &j.z);
        Some(Jacobian { x: x3, y: y3, z: z3 })
    }

    fn jacobian_add_affine(&self, j: Jacobian, x2: &BigUint, y2: &BigUint) -> Option<Jacobian> {
        let z1z1 = self.mul(&j.z, &j.z);
        let u2 = self.mul(x2, &z1z1);
        let s2 = self.mul(y2, &self.mul(&z1z1, &j.z));
        let h = self.sub(&u2, &j.x);
        let r = self.sub(&s2, &j.y);
        if h.is_zero() {
            if r.is_zero() {
                return self.jacobian_double(j);
            }
            return None;
        }
        let hh = self.mul(&h, &h);
        let hhh = self.mul(&hh, &h);
        let v = self.mul(&j.x, &hh);
        let x3 = self.sub(&self.sub(&self.mul(&r, &r), &hhh), &((&v << 1) % &self.p));
        let y3 = self.sub(&self.mul(&r, &self.sub(&v, &x3)), &self.mul(&j.y, &hhh));
        let z3 = self.mul(&j.z, &h);
        Some(Jacobian { x: x3, y: y3, z: z3 })
    }

    fn to_affine(&self, j: &Jacobian) -> CurvePoint {
        let zinv = mod_inverse(&j.z, &self.p).expect("z is a unit");
        let zinv2 = self.mul(&zinv, &zinv);
        CurvePoint::Affine { x: self.mul(&j.x, &zinv2), y: self.mul(&j.y, &self.mul(&zinv2, &zinv)) }
    }
}

struct Jacobian {
    x: BigUint,
    y: BigUint,
    z: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DssSignature {
    #[serde(with = "hexint")]
    pub r: BigUint,
    #[serde(with = "hexint")]
    pub s: BigUint,
}

/// `r = x(k^-1 G) mod q` for a nonce `k`.
pub fn nonce_r(k: &BigUint, params: &CurveParams) -> Result<BigUint> {
    let k = k % &params.q;
    let k_inv = mod_inverse(&k, &params.q).map_err(|_| CurveError::InvalidScalar)?;
    let point = params.mul_base(&k_inv);
    Ok(point.x().map(|x| x % &params.q).unwrap_or_default())
}

/// Single-signer form of the threshold signature, used as the oracle for the
/// distributed protocol.
pub fn dss_sign_central(d: &BigUint, k: &BigUint, m: &BigUint, params: &CurveParams) -> Result<DssSignature> {
    let q = &params.q;
    if (d % q).is_zero() {
        return Err(CurveError::InvalidScalar);
    }
    let r = nonce_r(k, params)?;
    if r.is_zero() {
        return Err(CurveError::ZeroR);
    }
    let s = (k % q) * ((m + &r * d) % q) % q;
    if s.is_zero() {
        return Err(CurveError::ZeroS);
    }
    Ok(DssSignature { r, s })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    /// `r` or `s` outside `[1, q)`, or an invalid public key.
    Malformed,
    /// `u1 G + u2 Q` is the identity.
    IdentityPoint,
    Mismatch,
}

pub fn dss_verify_detailed(public: &CurvePoint, m: &BigUint, sig: &DssSignature, params: &CurveParams) -> Verdict {
    let q = &params.q;
    let in_range = |v: &BigUint| !v.is_zero() && v < q;
    if !in_range(&sig.r) || !in_range(&sig.s) || public.is_identity() || !params.contains(public) {
        return Verdict::Malformed;
    }
    let w = match mod_inverse(&sig.s, q) {
        Ok(w) => w,
        Err(_) => return Verdict::Malformed,
    };
    let u1 = m % q * &w % q;
    let u2 = &sig.r * &w % q;
    let lhs = params.mul_base(&u1);
    let rhs = params.mul_unreduced(&u2, public);
    match params.add_affine(&lhs, &rhs) {
        CurvePoint::Identity => Verdict::IdentityPoint,
        CurvePoint::Affine { ref x, .. } if x % q == sig.r => Verdict::Accept,
        CurvePoint::Affine { .. } => Verdict::Mismatch,
    }
}

pub fn dss_verify(public: &CurvePoint, m: &BigUint, sig: &DssSignature, params: &CurveParams) -> bool {
    dss_verify_detailed(public, m, sig, params) == Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    #[test]
    fn add_examples() {
        let c = CurveParams::toy();
        let g = c.g.clone();
        assert_eq!(c.point_add(&g, &CurvePoint::Identity).unwrap(), g);
        assert_eq!(c.point_add(&g, &g).unwrap(), CurvePoint::affine(6u32, 3u32));
        assert_eq!(c.point_add(&g, &CurvePoint::affine(5u32, 16u32)).unwrap(), CurvePoint::Identity);
        assert_eq!(c.point_add(&g, &CurvePoint::affine(5u32, 2u32)), Err(CurveError::PointNotOnCurve));
    }

    #[test]
    fn scalar_examples() {
        let c = CurveParams::toy();
        let g = c.g.clone();
        assert_eq!(c.scalar_mul(&big(0), &g).unwrap(), CurvePoint::Identity);
        assert_eq!(c.scalar_mul(&big(19), &g).unwrap(), CurvePoint::Identity);
        assert_eq!(c.scalar_mul(&big(2), &g).unwrap(), CurvePoint::affine(6u32, 3u32));
        // Jacobian path against repeated affine addition, including k >= q on a non-base point.
        let p2 = CurvePoint::affine(6u32, 3u32);
        let mut acc = CurvePoint::Identity;
        for k in 0..45u64 {
            assert_eq!(c.scalar_mul(&big(k), &p2).unwrap(), acc, "k = {k}");
            acc = c.point_add(&acc, &p2).unwrap();
        }
    }

    #[test]
    fn sign_example_pins_values() {
        let c = CurveParams::toy();
        // k^-1 = 4, 4G = (3, 1), r = 3, s = 5 * (11 + 21) mod 19 = 8.
        let sig = dss_sign_central(&big(7), &big(5), &big(11), &c).unwrap();
        assert_eq!(sig, DssSignature { r: big(3), s: big(8) });
        assert_eq!(dss_sign_central(&big(7), &big(5), &big(11), &c).unwrap(), sig);
        assert_eq!(dss_sign_central(&big(7), &big(19), &big(11), &c), Err(CurveError::InvalidScalar));
        let q = c.mul_base(&big(7));
        assert!(dss_verify(&q, &big(11), &sig, &c));
        let bumped = DssSignature { r: sig.r.clone(), s: &sig.s + 1u32 };
        assert!(!dss_verify(&q, &big(11), &bumped, &c));
    }

    #[test]
    fn identity_point_is_rejected() {
        let c = CurveParams::toy();
        let d = big(7);
        let q = c.mul_base(&d);
        // m = -r d mod q makes u1 G + u2 Q = s^-1 (m + r d) G = O for every s.
        let r = big(3);
        let m = (big(19) - (&r * &d) % big(19)) % big(19);
        for s in 1..19u64 {
            let sig = DssSignature { r: r.clone(), s: big(s) };
            assert_eq!(dss_verify_detailed(&q, &m, &sig, &c), Verdict::IdentityPoint);
        }
    }

    #[test]
    fn secp256k1_sanity() {
        let c = CurveParams::secp256k1();
        let two_g = c.point_add(&c.g, &c.g).unwrap();
        assert_eq!(c.mul_base(&big(2)), two_g);
        let d = BigUint::parse_bytes(b"1234567890abcdef1234567890abcdef", 16).unwrap();
        let k = BigUint::parse_bytes(b"fedcba0987654321", 16).unwrap();
        let m = big(0xdead_beef);
        let sig = dss_sign_central(&d, &k, &m, &c).unwrap();
        assert!(dss_verify(&c.mul_base(&d), &m, &sig, &c));
        assert!(!dss_verify(&c.mul_base(&d), &(m + 1u32), &sig, &c));
    }

    #[test]
    fn point_serialization() {
        assert_eq!(serde_json::to_string(&CurvePoint::Identity).unwrap(), "\"O\"");
        let p = CurvePoint::affine(6u32, 3u32);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"x":"6","y":"3"}"#);
        assert_eq!(serde_json::from_str::<CurvePoint>(&json).unwrap(), p);
        assert_eq!(serde_json::from_str::<CurvePoint>("\"O\"").unwrap(), CurvePoint::Identity);
        assert!(serde_json::from_str::<CurvePoint>("\"P\"").is_err());
    }
}
