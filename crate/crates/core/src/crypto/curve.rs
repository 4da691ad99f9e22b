//! Short-Weierstrass curves `y^2 = x^3 + ax + b` over a prime field, with
//! prime-order generators.
//!
//! Arithmetic is generic over the parameters so that the same code runs on
//! secp256r1 and on the 19-element toy curve used for exhaustive testing.
//! Scalar multiplication works in Jacobian coordinates with a 4-bit fixed
//! window over Montgomery-form limbs. Nothing here is constant time.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;

use super::field;
use super::mont::{Fe, MontField};
use super::CryptoError;

/// Raw domain parameters of a curve.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveParams {
    pub name: String,
    pub p: BigUint,
    pub a: BigUint,
    pub b: BigUint,
    pub gx: BigUint,
    pub gy: BigUint,
    pub q: BigUint,
}

fn hex_uint(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

impl CurveParams {
    /// NIST P-256 / secp256r1.
    pub fn secp256r1() -> Self {
        let p = hex_uint("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff");
        Self {
            name: "secp256r1".into(),
            a: &p - 3u32,
            b: hex_uint("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
            gx: hex_uint("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
            gy: hex_uint("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
            q: hex_uint("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
            p,
        }
    }

    pub fn secp256k1() -> Self {
        Self {
            name: "secp256k1".into(),
            p: hex_uint("fffffffffffffffffffffffffffffffffffffffffffffffffffffffefffffc2f"),
            a: BigUint::zero(),
            b: BigUint::from(7u32),
            gx: hex_uint("79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798"),
            gy: hex_uint("483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8"),
            q: hex_uint("fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141"),
        }
    }

    /// `y^2 = x^3 + 2x + 2` over F_17 with generator (5, 1) of order 19.
    pub fn toy() -> Self {
        Self {
            name: "toy17".into(),
            p: BigUint::from(17u32),
            a: BigUint::from(2u32),
            b: BigUint::from(2u32),
            gx: BigUint::from(5u32),
            gy: BigUint::from(1u32),
            q: BigUint::from(19u32),
        }
    }

    pub fn by_name(name: &str) -> Result<Self, CryptoError> {
        match name {
            "secp256r1" | "p256" | "P-256" => Ok(Self::secp256r1()),
            "secp256k1" => Ok(Self::secp256k1()),
            "toy17" | "toy" => Ok(Self::toy()),
            other => Err(CryptoError::UnknownCurve(other.to_string())),
        }
    }
}

/// An element of Z_q. The curve that owns it is implicit; values are always
/// reduced below the order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(0x{:x})", self.0)
    }
}

/// A point on the curve in affine form, or the point at infinity.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Point {
    Identity,
    Affine { x: BigUint, y: BigUint },
}

impl Point {
    pub fn is_identity(&self) -> bool {
        matches!(self, Point::Identity)
    }

    /// Convenience constructor for small test coordinates.
    pub fn from_u64(x: u64, y: u64) -> Self {
        Point::Affine { x: BigUint::from(x), y: BigUint::from(y) }
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Identity => write!(f, "Identity"),
            Point::Affine { x, y } => write!(f, "({x:#x}, {y:#x})"),
        }
    }
}

#[derive(Clone, Copy)]
struct Jacobian {
    x: Fe,
    y: Fe,
    z: Fe,
}

impl Jacobian {
    fn infinity(one: Fe) -> Self {
        Jacobian { x: one, y: one, z: Fe::ZERO }
    }

    fn is_infinity(&self) -> bool {
        self.z.is_zero()
    }
}

struct CurveInner {
    params: CurveParams,
    generator: Point,
    field_len: usize,
    scalar_len: usize,
    order_bits: u64,
    fp: MontField,
    a_mont: Fe,
}

/// A validated curve. Cheap to clone; shares its parameters.
#[derive(Clone)]
pub struct Curve {
    inner: Arc<CurveInner>,
}

impl fmt::Debug for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Curve").field("name", &self.inner.params.name).finish_non_exhaustive()
    }
}

impl PartialEq for Curve {
    fn eq(&self, other: &Self) -> bool {
        self.inner.params == other.inner.params
    }
}

impl Eq for Curve {}

impl Curve {
    /// Validates the parameters: non-singular, generator on the curve,
    /// prime order that annihilates the generator.
    pub fn new(params: CurveParams) -> Result<Self, CryptoError> {
        let p = &params.p;
        if p < &BigUint::from(5u32) || !field::is_probable_prime(p) {
            return Err(CryptoError::InvalidCurve("field modulus is not an odd prime".into()));
        }
        if &params.a >= p || &params.b >= p || &params.gx >= p || &params.gy >= p {
            return Err(CryptoError::InvalidCurve("coefficient not reduced mod p".into()));
        }
        let a3 = params.a.modpow(&BigUint::from(3u32), p);
        let disc = field::add(
            &field::mul(&BigUint::from(4u32), &a3, p),
            &field::mul(&BigUint::from(27u32), &field::sqr(&params.b, p), p),
            p,
        );
        if disc.is_zero() {
            return Err(CryptoError::InvalidCurve("singular curve (4a^3 + 27b^2 = 0)".into()));
        }
        if !field::is_probable_prime(&params.q) {
            return Err(CryptoError::InvalidCurve("group order is not prime".into()));
        }
        if p.bits() > 256 {
            return Err(CryptoError::InvalidCurve("field modulus wider than 256 bits".into()));
        }
        let field_len = p.bits().div_ceil(8) as usize;
        let order_bits = params.q.bits();
        let scalar_len = order_bits.div_ceil(8) as usize;
        if scalar_len > 32 {
            return Err(CryptoError::InvalidCurve("group order wider than 256 bits".into()));
        }
        let generator = Point::Affine { x: params.gx.clone(), y: params.gy.clone() };
        let fp = MontField::new(p);
        let a_mont = fp.to_mont(&params.a);
        let curve = Curve {
            inner: Arc::new(CurveInner { params, generator, field_len, scalar_len, order_bits, fp, a_mont }),
        };
        if !curve.is_on_curve(&curve.inner.generator) {
            return Err(CryptoError::InvalidCurve("generator not on curve".into()));
        }
        let q = Scalar(curve.inner.params.q.clone());
        if !curve.point_mul(&q, curve.generator()).is_identity() {
            return Err(CryptoError::InvalidCurve("q * G is not the identity".into()));
        }
        Ok(curve)
    }

    pub fn secp256r1() -> Self {
        Self::new(CurveParams::secp256r1()).expect("secp256r1 parameters are valid")
    }

    pub fn toy() -> Self {
        Self::new(CurveParams::toy()).expect("toy parameters are valid")
    }

    pub fn by_name(name: &str) -> Result<Self, CryptoError> {
        Self::new(CurveParams::by_name(name)?)
    }

    pub fn params(&self) -> &CurveParams {
        &self.inner.params
    }

    pub fn name(&self) -> &str {
        &self.inner.params.name
    }

    pub fn generator(&self) -> &Point {
        &self.inner.generator
    }

    pub fn order(&self) -> &BigUint {
        &self.inner.params.q
    }

    /// Byte width of a canonical scalar encoding.
    pub fn scalar_len(&self) -> usize {
        self.inner.scalar_len
    }

    /// Byte width of a field element.
    pub fn field_len(&self) -> usize {
        self.inner.field_len
    }

    /// Byte width of a compressed non-identity point.
    pub fn point_len(&self) -> usize {
        1 + self.inner.field_len
    }

    pub fn is_on_curve(&self, pt: &Point) -> bool {
        match pt {
            Point::Identity => true,
            Point::Affine { x, y } => {
                let p = &self.inner.params.p;
                x < p && y < p && field::sqr(y, p) == self.rhs(x)
            }
        }
    }

    fn rhs(&self, x: &BigUint) -> BigUint {
        let CurveParams { p, a, b, .. } = &self.inner.params;
        let x3 = field::mul(&field::sqr(x, p), x, p);
        field::add(&field::add(&x3, &field::mul(a, x, p), p), b, p)
    }

    // ---- scalars ----

    /// Reduces an arbitrary integer into Z_q.
    pub fn scalar(&self, value: BigUint) -> Scalar {
        Scalar(value % self.order())
    }

    pub fn scalar_from_u64(&self, value: u64) -> Scalar {
        self.scalar(BigUint::from(value))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(field::add(&a.0, &b.0, self.order()))
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar(field::mul(&a.0, &b.0, self.order()))
    }

    /// Fixed-width big-endian encoding.
    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0.to_bytes_be(), self.inner.scalar_len)
    }

    /// Inverse of [`Curve::encode_scalar`]. Accepts any width so that
    /// zero-extended forms (e.g. a 32-byte token on a small curve) can be
    /// decoded; rejects values that are not below `q`.
    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, CryptoError> {
        let v = BigUint::from_bytes_be(bytes);
        if &v >= self.order() {
            return Err(CryptoError::ScalarOutOfRange);
        }
        Ok(Scalar(v))
    }

    /// Uniform scalar in `[1, q - 1]` by rejection sampling.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let len = self.inner.scalar_len;
        let top_bits = (self.inner.order_bits % 8) as u32;
        let top_mask: u8 = if top_bits == 0 { 0xff } else { (1u8 << top_bits) - 1 };
        let mut buf = vec![0u8; len];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= top_mask;
            let v = BigUint::from_bytes_be(&buf);
            if !v.is_zero() && &v < self.order() {
                return Scalar(v);
            }
        }
    }

    // ---- group law ----

    pub fn negate(&self, pt: &Point) -> Point {
        match pt {
            Point::Identity => Point::Identity,
            Point::Affine { x, y } => {
                let p = &self.inner.params.p;
                Point::Affine { x: x.clone(), y: field::sub(&BigUint::zero(), y, p) }
            }
        }
    }

    pub fn point_add(&self, p1: &Point, p2: &Point) -> Point {
        let sum = self.jac_add(&self.to_jacobian(p1), &self.to_jacobian(p2));
        self.to_affine(&sum)
    }

    /// `k * pt`. Identity when `k = 0` or `pt` is the identity.
    pub fn point_mul(&self, k: &Scalar, pt: &Point) -> Point {
        if k.is_zero() || pt.is_identity() {
            return Point::Identity;
        }
        let base = self.to_jacobian(pt);
        // table[i] = i * pt for i in 0..16
        let mut table = [Jacobian::infinity(self.inner.fp.one()); 16];
        table[1] = base;
        for i in 2..16 {
            table[i] = self.jac_add(&table[i - 1], &base);
        }
        let bytes = k.0.to_bytes_be();
        let mut acc = Jacobian::infinity(self.inner.fp.one());
        for byte in bytes {
            for nibble in [byte >> 4, byte & 0x0f] {
                for _ in 0..4 {
                    acc = self.jac_double(&acc);
                }
                if nibble != 0 {
                    acc = self.jac_add(&acc, &table[nibble as usize]);
                }
            }
        }
        self.to_affine(&acc)
    }

    fn to_jacobian(&self, pt: &Point) -> Jacobian {
        let f = &self.inner.fp;
        match pt {
            Point::Identity => Jacobian::infinity(f.one()),
            Point::Affine { x, y } => Jacobian { x: f.to_mont(x), y: f.to_mont(y), z: f.one() },
        }
    }

    fn to_affine(&self, pt: &Jacobian) -> Point {
        if pt.is_infinity() {
            return Point::Identity;
        }
        let f = &self.inner.fp;
        let z_inv = f.to_mont(&field::inv(&f.decode(&pt.z), &self.inner.params.p));
        let z_inv2 = f.sqr(&z_inv);
        let z_inv3 = f.mul(&z_inv2, &z_inv);
        Point::Affine { x: f.decode(&f.mul(&pt.x, &z_inv2)), y: f.decode(&f.mul(&pt.y, &z_inv3)) }
    }

    fn jac_double(&self, pt: &Jacobian) -> Jacobian {
        if pt.is_infinity() || pt.y.is_zero() {
            return Jacobian::infinity(self.inner.fp.one());
        }
        let f = &self.inner.fp;
        let xx = f.sqr(&pt.x);
        let yy = f.sqr(&pt.y);
        let yyyy = f.sqr(&yy);
        let zz = f.sqr(&pt.z);
        // s = 4 x y^2
        let s = f.dbl(&f.dbl(&f.mul(&pt.x, &yy)));
        // m = 3 x^2 + a z^4
        let mut m = f.add(&f.dbl(&xx), &xx);
        if !self.inner.a_mont.is_zero() {
            m = f.add(&m, &f.mul(&self.inner.a_mont, &f.sqr(&zz)));
        }
        let x3 = f.sub(&f.sqr(&m), &f.dbl(&s));
        let yyyy8 = f.dbl(&f.dbl(&f.dbl(&yyyy)));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &yyyy8);
        let z3 = f.dbl(&f.mul(&pt.y, &pt.z));
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn jac_add(&self, p1: &Jacobian, p2: &Jacobian) -> Jacobian {
        if p1.is_infinity() {
            return *p2;
        }
        if p2.is_infinity() {
            return *p1;
        }
        let f = &self.inner.fp;
        let z1z1 = f.sqr(&p1.z);
        let z2z2 = f.sqr(&p2.z);
        let u1 = f.mul(&p1.x, &z2z2);
        let u2 = f.mul(&p2.x, &z1z1);
        let s1 = f.mul(&p1.y, &f.mul(&p2.z, &z2z2));
        let s2 = f.mul(&p2.y, &f.mul(&p1.z, &z1z1));
        if u1 == u2 {
            if s1 == s2 {
                return self.jac_double(p1);
            }
            return Jacobian::infinity(f.one());
        }
        let h = f.sub(&u2, &u1);
        let r = f.sub(&s2, &s1);
        let hh = f.sqr(&h);
        let hhh = f.mul(&h, &hh);
        let v = f.mul(&u1, &hh);
        let x3 = f.sub(&f.sub(&f.sqr(&r), &hhh), &f.dbl(&v));
        let y3 = f.sub(&f.mul(&r, &f.sub(&v, &x3)), &f.mul(&s1, &hhh));
        let z3 = f.mul(&h, &f.mul(&p1.z, &p2.z));
        Jacobian { x: x3, y: y3, z: z3 }
    }

    // ---- encodings ----

    /// Compressed SEC1-style encoding: `00` for the identity, otherwise
    /// `02`/`03` (even/odd y) followed by the fixed-width x coordinate.
    pub fn encode_point(&self, pt: &Point) -> Vec<u8> {
        match pt {
            Point::Identity => vec![0x00],
            Point::Affine { x, y } => {
                let mut out = Vec::with_capacity(self.point_len());
                out.push(if y.bit(0) { 0x03 } else { 0x02 });
                out.extend_from_slice(&left_pad(&x.to_bytes_be(), self.inner.field_len));
                out
            }
        }
    }

    pub fn decode_point(&self, bytes: &[u8]) -> Result<Point, CryptoError> {
        match bytes {
            [0x00] => Ok(Point::Identity),
            [] => Err(CryptoError::MalformedPoint("empty encoding")),
            [prefix, rest @ ..] => {
                if *prefix != 0x02 && *prefix != 0x03 {
                    return Err(CryptoError::MalformedPoint("unknown prefix byte"));
                }
                if rest.len() != self.inner.field_len {
                    return Err(CryptoError::MalformedPoint("wrong length"));
                }
                let p = &self.inner.params.p;
                let x = BigUint::from_bytes_be(rest);
                if &x >= p {
                    return Err(CryptoError::MalformedPoint("x not below field modulus"));
                }
                let y = field::sqrt(&self.rhs(&x), p)
                    .ok_or(CryptoError::MalformedPoint("x not on curve"))?;
                let want_odd = *prefix == 0x03;
                let y = if y.bit(0) == want_odd { y } else { field::sub(&BigUint::zero(), &y, p) };
                if y.bit(0) != want_odd {
                    // y = 0: only the even encoding is canonical
                    return Err(CryptoError::MalformedPoint("non-canonical parity"));
                }
                Ok(Point::Affine { x, y })
            }
        }
    }
}

pub(crate) fn left_pad(bytes: &[u8], width: usize) -> Vec<u8> {
    debug_assert!(bytes.len() <= width);
    let mut out = vec![0u8; width.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn named_curves_validate() {
        for name in ["secp256r1", "secp256k1", "toy17"] {
            let c = Curve::by_name(name).unwrap();
            assert_eq!(c.name(), name);
        }
        assert!(matches!(Curve::by_name("p521"), Err(CryptoError::UnknownCurve(_))));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut singular = CurveParams::toy();
        // 4*0 + 27*0 = 0
        singular.a = BigUint::zero();
        singular.b = BigUint::zero();
        singular.gx = BigUint::zero();
        singular.gy = BigUint::zero();
        assert!(matches!(Curve::new(singular), Err(CryptoError::InvalidCurve(_))));

        let mut off_curve = CurveParams::toy();
        off_curve.gy = BigUint::from(2u32);
        assert!(matches!(Curve::new(off_curve), Err(CryptoError::InvalidCurve(_))));

        let mut wrong_order = CurveParams::toy();
        wrong_order.q = BigUint::from(17u32);
        assert!(matches!(Curve::new(wrong_order), Err(CryptoError::InvalidCurve(_))));

        let mut composite = CurveParams::toy();
        composite.q = BigUint::from(38u32);
        assert!(matches!(Curve::new(composite), Err(CryptoError::InvalidCurve(_))));
    }

    #[test]
    fn toy_doubling_and_zero() {
        let c = Curve::toy();
        let g = c.generator().clone();
        assert_eq!(c.point_mul(&c.scalar_from_u64(2), &g), Point::from_u64(6, 3));
        assert_eq!(c.point_add(&g, &g), Point::from_u64(6, 3));
        assert_eq!(c.point_mul(&c.scalar_from_u64(19), &g), Point::Identity);
        assert_eq!(c.point_mul(&c.scalar_from_u64(0), &g), Point::Identity);
        assert_eq!(c.point_add(&g, &Point::Identity), g);
        assert_eq!(c.point_add(&g, &Point::from_u64(5, 16)), Point::Identity);
    }

    #[test]
    fn toy_encoding() {
        let c = Curve::toy();
        assert_eq!(c.encode_point(&Point::from_u64(5, 1)), vec![0x03, 0x05]);
        assert_eq!(c.encode_point(&Point::Identity), vec![0x00]);
        assert_eq!(c.decode_point(&[0x03, 0x05]).unwrap(), Point::from_u64(5, 1));
        assert_eq!(c.decode_point(&[0x02, 0x05]).unwrap(), Point::from_u64(5, 16));
        assert_eq!(c.scalar_len(), 1);
        assert_eq!(c.point_len(), 2);
    }

    #[test]
    fn decode_rejects_malformed() {
        let c = Curve::toy();
        // x = 17 is not reduced
        assert!(matches!(c.decode_point(&[0x02, 17]), Err(CryptoError::MalformedPoint(_))));
        // x = 1: 1 + 2 + 2 = 5 is a non-residue mod 17
        assert!(matches!(c.decode_point(&[0x02, 1]), Err(CryptoError::MalformedPoint(_))));
        assert!(matches!(c.decode_point(&[0x04, 5]), Err(CryptoError::MalformedPoint(_))));
        assert!(matches!(c.decode_point(&[0x02, 5, 0]), Err(CryptoError::MalformedPoint(_))));
        assert!(matches!(c.decode_point(&[]), Err(CryptoError::MalformedPoint(_))));
        assert!(matches!(c.decode_point(&[0x00, 0x00]), Err(CryptoError::MalformedPoint(_))));
    }

    #[test]
    fn scalar_encoding_is_fixed_width() {
        let c = Curve::secp256r1();
        let s = c.scalar_from_u64(1);
        let enc = c.encode_scalar(&s);
        assert_eq!(enc.len(), 32);
        assert_eq!(enc[31], 1);
        assert_eq!(c.decode_scalar(&enc).unwrap(), s);
        let q_bytes = c.order().to_bytes_be();
        assert_eq!(c.decode_scalar(&q_bytes), Err(CryptoError::ScalarOutOfRange));
    }

    #[test]
    fn random_scalar_is_seed_deterministic() {
        let c = Curve::secp256r1();
        let a: Vec<Scalar> = {
            let mut rng = ChaCha20Rng::seed_from_u64(7);
            (0..4).map(|_| c.random_scalar(&mut rng)).collect()
        };
        let b: Vec<Scalar> = {
            let mut rng = ChaCha20Rng::seed_from_u64(7);
            (0..4).map(|_| c.random_scalar(&mut rng)).collect()
        };
        assert_eq!(a, b);
        let mut other = ChaCha20Rng::seed_from_u64(8);
        assert_ne!(a[0], c.random_scalar(&mut other));
    }

    #[test]
    fn random_scalar_toy_distribution() {
        let c = Curve::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let mut counts = [0u32; 19];
        let draws = 10_000;
        for _ in 0..draws {
            let s = c.random_scalar(&mut rng);
            let v = u32::try_from(s.value()).unwrap();
            assert!((1..=18).contains(&v));
            counts[v as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        let expected = draws as f64 / 18.0;
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        // 17 degrees of freedom: mean 17, sd sqrt(34)
        assert!(chi2 < 17.0 + 5.0 * 34f64.sqrt(), "chi2 = {chi2}");
    }
}
