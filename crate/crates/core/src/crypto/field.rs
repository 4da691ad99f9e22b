//! Modular arithmetic helpers over `BigUint`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

#[inline]
pub(crate) fn add(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    let s = a + b;
    if &s >= m {
        s - m
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    if a >= b {
        a - b
    } else {
        m - (b - a)
    }
}

#[inline]
pub(crate) fn mul(a: &BigUint, b: &BigUint, m: &BigUint) -> BigUint {
    (a * b) % m
}

#[inline]
pub(crate) fn sqr(a: &BigUint, m: &BigUint) -> BigUint {
    (a * a) % m
}

/// Inverse of `a` modulo the prime `m`. `a` must be non-zero mod `m`.
pub(crate) fn inv(a: &BigUint, m: &BigUint) -> BigUint {
    a.modinv(m).expect("inverse of zero requested")
}

/// Square root modulo an odd prime, if one exists.
pub(crate) fn sqrt(a: &BigUint, p: &BigUint) -> Option<BigUint> {
    let a = a % p;
    if a.is_zero() {
        return Some(BigUint::zero());
    }
    let one = BigUint::one();
    let p_minus_one = p - &one;
    let legendre_exp = &p_minus_one >> 1;
    if a.modpow(&legendre_exp, p) != one {
        return None;
    }

    // p = 3 mod 4 covers every named production curve.
    if (p % 4u32) == BigUint::from(3u32) {
        let root = a.modpow(&((p + &one) >> 2), p);
        return Some(root);
    }

    // Tonelli-Shanks.
    let mut q = p_minus_one.clone();
    let mut s = 0u32;
    while q.is_even() {
        q >>= 1;
        s += 1;
    }
    let mut z = BigUint::from(2u32);
    while z.modpow(&legendre_exp, p) != p_minus_one {
        z += 1u32;
    }
    let mut m = s;
    let mut c = z.modpow(&q, p);
    let mut t = a.modpow(&q, p);
    let mut r = a.modpow(&((&q + &one) >> 1), p);
    while !t.is_one() {
        let mut i = 0u32;
        let mut t2i = t.clone();
        while !t2i.is_one() {
            t2i = sqr(&t2i, p);
            i += 1;
        }
        let mut b = c.clone();
        for _ in 0..(m - i - 1) {
            b = sqr(&b, p);
        }
        m = i;
        c = sqr(&b, p);
        t = mul(&t, &c, p);
        r = mul(&r, &b, p);
    }
    Some(r)
}

/// Miller-Rabin with a fixed witness set. Deterministic below 3.3e24 and
/// overwhelmingly reliable for the curve orders this crate ships.
pub(crate) fn is_probable_prime(n: &BigUint) -> bool {
    const WITNESSES: [u32; 13] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41];
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for w in WITNESSES {
        let w = BigUint::from(w);
        if n == &w {
            return true;
        }
        if (n % &w).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - &one;
    let mut d = n_minus_one.clone();
    let mut s = 0u32;
    while d.is_even() {
        d >>= 1;
        s += 1;
    }
    'witness: for w in WITNESSES {
        let mut x = BigUint::from(w).modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = sqr(&x, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
