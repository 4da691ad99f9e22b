//! Fixed-width Montgomery arithmetic modulo an odd prime below 2^256.
//! Used for the inner loop of scalar multiplication; values cross the
//! `BigUint` boundary only on entry and exit.

use num_bigint::BigUint;
use num_traits::One;

/// Field element in Montgomery form, little-endian 64-bit limbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Fe([u64; 4]);

impl Fe {
    pub(crate) const ZERO: Fe = Fe([0; 4]);

    pub(crate) fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }
}

#[derive(Debug)]
pub(crate) struct MontField {
    p: [u64; 4],
    /// `-p^-1 mod 2^64`
    n0: u64,
    /// `2^512 mod p`
    r2: Fe,
    one: Fe,
}

fn to_limbs(x: &BigUint) -> [u64; 4] {
    let digits = x.to_u64_digits();
    assert!(digits.len() <= 4, "value wider than 256 bits");
    let mut out = [0u64; 4];
    out[..digits.len()].copy_from_slice(&digits);
    out
}

fn from_limbs(l: &[u64; 4]) -> BigUint {
    let bytes: Vec<u8> = l.iter().flat_map(|w| w.to_le_bytes()).collect();
    BigUint::from_bytes_le(&bytes)
}

#[inline]
fn geq(a: &[u64; 4], b: &[u64; 4]) -> bool {
    for i in (0..4).rev() {
        if a[i] != b[i] {
            return a[i] > b[i];
        }
    }
    true
}

#[inline]
fn sub_limbs(a: &[u64; 4], b: &[u64; 4]) -> ([u64; 4], bool) {
    let mut out = [0u64; 4];
    let mut borrow = false;
    for i in 0..4 {
        let (d1, b1) = a[i].overflowing_sub(b[i]);
        let (d2, b2) = d1.overflowing_sub(borrow as u64);
        out[i] = d2;
        borrow = b1 || b2;
    }
    (out, borrow)
}

#[inline]
fn add_limbs(a: &[u64; 4], b: &[u64; 4]) -> ([u64; 4], bool) {
    let mut out = [0u64; 4];
    let mut carry = false;
    for i in 0..4 {
        let (s1, c1) = a[i].overflowing_add(b[i]);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        out[i] = s2;
        carry = c1 || c2;
    }
    (out, carry)
}

impl MontField {
    /// `p` must be odd and below 2^256.
    pub(crate) fn new(p: &BigUint) -> Self {
        assert!(p.bit(0) && p.bits() <= 256, "modulus must be odd and at most 256 bits");
        let limbs = to_limbs(p);
        // Newton iteration for p0^-1 mod 2^64
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(limbs[0].wrapping_mul(inv)));
        }
        let r = (BigUint::one() << 256u32) % p;
        let r2 = (BigUint::one() << 512u32) % p;
        MontField { p: limbs, n0: inv.wrapping_neg(), r2: Fe(to_limbs(&r2)), one: Fe(to_limbs(&r)) }
    }

    pub(crate) fn one(&self) -> Fe {
        self.one
    }

    pub(crate) fn to_mont(&self, x: &BigUint) -> Fe {
        let reduced = x % from_limbs(&self.p);
        self.mul(&Fe(to_limbs(&reduced)), &self.r2)
    }

    pub(crate) fn decode(&self, a: &Fe) -> BigUint {
        from_limbs(&self.mul(a, &Fe([1, 0, 0, 0])).0)
    }

    #[inline]
    pub(crate) fn add(&self, a: &Fe, b: &Fe) -> Fe {
        let (s, carry) = add_limbs(&a.0, &b.0);
        if carry || geq(&s, &self.p) {
            Fe(sub_limbs(&s, &self.p).0)
        } else {
            Fe(s)
        }
    }

    #[inline]
    pub(crate) fn sub(&self, a: &Fe, b: &Fe) -> Fe {
        let (d, borrow) = sub_limbs(&a.0, &b.0);
        if borrow {
            Fe(add_limbs(&d, &self.p).0)
        } else {
            Fe(d)
        }
    }

    #[inline]
    pub(crate) fn dbl(&self, a: &Fe) -> Fe {
        self.add(a, a)
    }

    /// CIOS Montgomery product `a * b * 2^-256 mod p`.
    #[inline]
    pub(crate) fn mul(&self, a: &Fe, b: &Fe) -> Fe {
        let (a, b, p) = (&a.0, &b.0, &self.p);
        let mut t = [0u64; 6];
        for &bi in b.iter() {
            let mut carry: u128 = 0;
            for j in 0..4 {
                let v = t[j] as u128 + (a[j] as u128) * (bi as u128) + carry;
                t[j] = v as u64;
                carry = v >> 64;
            }
            let v = t[4] as u128 + carry;
            t[4] = v as u64;
            t[5] = (v >> 64) as u64;

            let m = t[0].wrapping_mul(self.n0);
            let v = t[0] as u128 + (m as u128) * (p[0] as u128);
            let mut carry = v >> 64;
            for j in 1..4 {
                let v = t[j] as u128 + (m as u128) * (p[j] as u128) + carry;
                t[j - 1] = v as u64;
                carry = v >> 64;
            }
            let v = t[4] as u128 + carry;
            t[3] = v as u64;
            t[4] = t[5] + (v >> 64) as u64;
        }
        let r = [t[0], t[1], t[2], t[3]];
        if t[4] != 0 || geq(&r, p) {
            Fe(sub_limbs(&r, p).0)
        } else {
            Fe(r)
        }
    }

    #[inline]
    pub(crate) fn sqr(&self, a: &Fe) -> Fe {
        self.mul(a, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::RandBigInt;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn p256() -> BigUint {
        BigUint::parse_bytes(b"ffffffff00000001000000000000000000000000ffffffffffffffffffffffff", 16).unwrap()
    }

    fn check_against_biguint(p: &BigUint, a: &BigUint, b: &BigUint) {
        let f = MontField::new(p);
        let (ma, mb) = (f.to_mont(a), f.to_mont(b));
        assert_eq!(f.decode(&ma), a % p);
        assert_eq!(f.decode(&f.mul(&ma, &mb)), (a * b) % p);
        assert_eq!(f.decode(&f.add(&ma, &mb)), (a + b) % p);
        assert_eq!(f.decode(&f.sub(&ma, &mb)), (p + a % p - b % p) % p);
    }

    #[test]
    fn toy_modulus_exhaustive() {
        let p = BigUint::from(17u32);
        for a in 0u32..17 {
            for b in 0u32..17 {
                check_against_biguint(&p, &a.into(), &b.into());
            }
        }
    }

    #[test]
    fn p256_edges() {
        let p = p256();
        let top = &p - 1u32;
        check_against_biguint(&p, &top, &top);
        check_against_biguint(&p, &top, &BigUint::from(2u32));
        check_against_biguint(&p, &BigUint::from(0u32), &top);
        let f = MontField::new(&p);
        assert_eq!(f.decode(&f.one()), BigUint::one());
    }

    #[test]
    fn full_width_modulus() {
        // secp256k1 field prime has every high limb saturated
        let p = BigUint::parse_bytes(b"fffffffffffffffffffffffffffffffffffffffffffffffffffffffefffffc2f", 16).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = rng.gen_biguint_below(&p);
            let b = rng.gen_biguint_below(&p);
            check_against_biguint(&p, &a, &b);
        }
    }

    proptest! {
        #[test]
        fn p256_random(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
            let p = p256();
            let a = BigUint::from_bytes_be(&a) % &p;
            let b = BigUint::from_bytes_be(&b) % &p;
            check_against_biguint(&p, &a, &b);
        }
    }
}
