//! Domain-separated SHA-256 hashing: H1 into Z_q, H2 onto 32 bytes, and the
//! derived point mask and key-derivation helpers.

use std::fmt;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use super::curve::{Curve, Point, Scalar};

pub const TAG_H1: &[u8] = b"H1";
pub const TAG_H2: &[u8] = b"H2";
pub const TAG_MASK: &[u8] = b"MASK";
pub const TAG_KDF: &[u8] = b"KDF";

/// Exactly 32 opaque bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn xor(&self, other: &Digest32) -> Digest32 {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        Digest32(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Digest32> {
        <[u8; 32]>::try_from(bytes).ok().map(Digest32)
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

/// H2: SHA-256 over `"H2" || data`.
pub fn h2(data: &[u8]) -> Digest32 {
    h2_parts(&[data])
}

/// H2 over the concatenation of `parts`, without materializing it.
pub fn h2_parts(parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    hasher.update(TAG_H2);
    for part in parts {
        hasher.update(part);
    }
    Digest32(hasher.finalize().into())
}

/// 32-byte big-endian zero-padded timestamp.
pub fn pad32(t: u64) -> [u8; 32] {
    let mut out = [0u8; 32];
    out[24..].copy_from_slice(&t.to_be_bytes());
    out
}

/// Left-pads a short encoding to 32 bytes. Panics if `bytes` is longer.
pub fn widen32(bytes: &[u8]) -> [u8; 32] {
    assert!(bytes.len() <= 32, "value wider than 32 bytes");
    let mut out = [0u8; 32];
    out[32 - bytes.len()..].copy_from_slice(bytes);
    out
}

impl Curve {
    /// H1: SHA-256 over `"H1" || data`, reduced mod q.
    pub fn h1(&self, data: &[u8]) -> Scalar {
        let mut hasher = Sha256::new();
        hasher.update(TAG_H1);
        hasher.update(data);
        let digest: [u8; 32] = hasher.finalize().into();
        self.scalar(BigUint::from_bytes_be(&digest))
    }

    /// Fixed-width mask derived from a group element: `H2("MASK" || enc(pt))`.
    pub fn mask32(&self, pt: &Point) -> Digest32 {
        h2_parts(&[TAG_MASK, &self.encode_point(pt)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference digests computed with Python's hashlib:
    //   hashlib.sha256(b"H2").hexdigest()
    //   hashlib.sha256(b"H1abc").hexdigest()  (then mod q)
    //   hashlib.sha256(b"H2abc").hexdigest()
    //   hashlib.sha256(b"H2MASK\x00").hexdigest()
    const H2_EMPTY: &str = "ae1a64d34d1c58553d436923cc6eb2386a63892c0bdd3f1a924eb7f7a30ae975";
    const H1_ABC_DIGEST: &str = "8d89def9bffb893465c5dc6c41aa7a7fc00d00054c6dab3ac7da0654fb254cf3";
    const H2_ABC: &str = "32b69ec8023f75b39322c38f95b571114e67f3152b51f1883ca82ddd96641e13";
    const MASK_IDENTITY: &str = "f59a3227c7f5bf271cf896b046ddd34e25a37b61959e4020673da4c9b437fcf4";

    #[test]
    fn h2_empty_vector() {
        assert_eq!(h2(b"").to_hex(), H2_EMPTY);
    }

    #[test]
    fn h1_abc_vector_reduced_mod_q() {
        // The digest is already below the P-256 order; mod 19 it is 9.
        let c = Curve::secp256r1();
        assert_eq!(hex::encode(c.encode_scalar(&c.h1(b"abc"))), H1_ABC_DIGEST);
        let t = Curve::toy();
        assert_eq!(t.h1(b"abc"), t.scalar_from_u64(9));
    }

    #[test]
    fn h1_and_h2_are_domain_separated() {
        let c = Curve::secp256r1();
        let h1 = c.encode_scalar(&c.h1(b"abc"));
        assert_ne!(h1.as_slice(), h2(b"abc").as_bytes());
        assert_eq!(h2(b"abc").to_hex(), H2_ABC);
    }

    #[test]
    fn mask_of_identity_vector() {
        assert_eq!(Curve::toy().mask32(&Point::Identity).to_hex(), MASK_IDENTITY);
        assert_eq!(Curve::secp256r1().mask32(&Point::Identity).to_hex(), MASK_IDENTITY);
    }

    #[test]
    fn mask_separates_points() {
        let c = Curve::toy();
        let g = c.generator().clone();
        let g2 = c.point_add(&g, &g);
        assert_eq!(c.mask32(&g), c.mask32(&g));
        assert_ne!(c.mask32(&g), c.mask32(&g2));
    }

    #[test]
    fn pad32_layout() {
        let p = pad32(0x0102);
        assert_eq!(&p[..30], &[0u8; 30]);
        assert_eq!(&p[30..], &[1, 2]);
    }

    #[test]
    fn xor_is_involution() {
        let a = h2(b"a");
        let b = h2(b"b");
        assert_eq!(a.xor(&b).xor(&b), a);
    }
}
