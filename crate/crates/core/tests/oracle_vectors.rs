//! Checks against values produced by `tests/vectors/gen_vectors.py`, an
//! independent affine implementation in Python, and against the `p256` crate.

use mec_auth::codec::{encode_message, Message};
use mec_auth::crypto::{Curve, Point};
use mec_auth::handshake::{ServerContext, UserSession};
use mec_auth::registry::{setup, Directory, Role};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::RngCore;
use serde_json::Value;

const VECTORS: &str = include_str!("vectors/vectors.json");

fn vectors() -> Value {
    serde_json::from_str(VECTORS).unwrap()
}

fn point(v: &Value) -> Point {
    match v.as_array() {
        None => Point::Identity,
        Some(xy) => Point::from_u64(xy[0].as_u64().unwrap(), xy[1].as_u64().unwrap()),
    }
}

/// Hands out a fixed byte script.
struct Script(Vec<u8>, usize);

impl RngCore for Script {
    fn next_u32(&mut self) -> u32 {
        unimplemented!()
    }
    fn next_u64(&mut self) -> u64 {
        unimplemented!()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for d in dest {
            *d = self.0[self.1];
            self.1 += 1;
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

#[test]
fn toy_group_matches_enumeration() {
    let v = vectors();
    let c = Curve::toy();
    let multiples: Vec<Point> = v["toy_group"]["multiples"].as_array().unwrap().iter().map(point).collect();
    assert_eq!(multiples.len(), 19);
    for (k, expected) in multiples.iter().enumerate() {
        assert_eq!(&c.point_mul(&c.scalar_from_u64(k as u64), c.generator()), expected, "{k}G");
    }
    let table = v["toy_group"]["add_index"].as_array().unwrap();
    for i in 0..19 {
        for j in 0..19 {
            let idx = table[i][j].as_u64().unwrap() as usize;
            assert_eq!(c.point_add(&multiples[i], &multiples[j]), multiples[idx], "{i}G + {j}G");
        }
    }
}

#[test]
fn toy_handshake_matches_reference() {
    let v = vectors();
    let h = &v["toy_handshake"];
    let n = |k: &str| h[k].as_u64().unwrap() as u8;
    let c = Curve::toy();
    let (user_v, server_v) = (&h["user"], &h["server"]);
    let b = |p: &Value, k: &str| p[k].as_u64().unwrap() as u8;

    let mut rng = Script(
        vec![n("d_rc"), b(user_v, "r"), b(user_v, "d"), b(server_v, "r"), b(server_v, "d"), n("r1")],
        0,
    );
    let (mut rc, params) = setup(c.clone(), &mut rng);
    assert_eq!(params.rc_public, point(&h["p_rc"]));
    let (user, user_rec) = rc.register("u1", Role::User, &mut rng).unwrap();
    let (server, server_rec) = rc.register("ms", Role::Server, &mut rng).unwrap();
    assert_eq!(user.sid, c.scalar_from_u64(user_v["sid"].as_u64().unwrap()));
    assert_eq!(server.sid, c.scalar_from_u64(server_v["sid"].as_u64().unwrap()));
    assert_eq!(user_rec.commitment, point(&user_v["commitment"]));
    assert_eq!(user_rec.public_key, point(&user_v["public_key"]));
    assert_eq!(server_rec.public_key, point(&server_v["public_key"]));
    assert!(params.verify_pseudo_identity("u1", &user_rec));

    let mut dir = Directory::new(c.clone());
    dir.insert(user_rec).unwrap();
    dir.insert(server_rec.clone()).unwrap();
    let ctx = ServerContext::new(c.clone(), server, dir, 5).unwrap();
    let mut u = UserSession::new(c.clone(), user, server_rec, 5).unwrap();
    let mut s = ctx.session();

    let (t_u, t_ms) = (h["t_u"].as_u64().unwrap(), h["t_ms"].as_u64().unwrap());
    let m1 = u.start(&mut rng, t_u).unwrap();
    assert_eq!(m1.r1, point(&h["r1_point"]));
    assert_eq!(m1.token.to_hex(), h["token"].as_str().unwrap());
    assert_eq!(hex::encode(encode_message(&c, &Message::M1(m1.clone()))), h["m1"].as_str().unwrap());

    let m2 = s.on_m1(&m1, t_ms).unwrap();
    assert_eq!(m2.auth.to_hex(), h["auth_ms"].as_str().unwrap());
    assert_eq!(hex::encode(encode_message(&c, &Message::M2(m2.clone()))), h["m2"].as_str().unwrap());

    let (m3, ku) = u.on_m2(&m2, t_ms).unwrap();
    assert_eq!(m3.auth.to_hex(), h["auth_u"].as_str().unwrap());
    assert_eq!(hex::encode(encode_message(&c, &Message::M3(m3.clone()))), h["m3"].as_str().unwrap());

    let ks = s.on_m3(&m3).unwrap();
    assert_eq!(ku, ks);
    assert_eq!(hex::encode(ku.as_bytes()), h["session_key"].as_str().unwrap());
}

#[test]
fn p256_multiples_match_reference() {
    let c = Curve::secp256r1();
    for case in vectors()["p256_multiples"].as_array().unwrap() {
        let k = BigUint::parse_bytes(case["k"].as_str().unwrap().as_bytes(), 16).unwrap();
        let got = c.point_mul(&c.scalar(k), c.generator());
        assert_eq!(hex::encode(c.encode_point(&got)), case["encoding"].as_str().unwrap());
    }
}

fn p256_crate_mul(k: &[u8; 32]) -> Vec<u8> {
    use p256::elliptic_curve::sec1::ToEncodedPoint;
    use p256::elliptic_curve::PrimeField;
    let scalar = Option::<p256::Scalar>::from(p256::Scalar::from_repr((*k).into())).unwrap();
    (p256::ProjectivePoint::GENERATOR * scalar).to_affine().to_encoded_point(true).as_bytes().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn p256_agrees_with_reference_crate(seed in any::<u64>()) {
        use rand::SeedableRng;
        let c = Curve::secp256r1();
        let k = c.random_scalar(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed));
        let bytes: [u8; 32] = c.encode_scalar(&k).try_into().unwrap();
        let ours = c.encode_point(&c.point_mul(&k, c.generator()));
        prop_assert_eq!(ours, p256_crate_mul(&bytes));
    }

    #[test]
    fn p256_decode_agrees_with_reference_crate(seed in any::<u64>()) {
        use rand::SeedableRng;
        let c = Curve::secp256r1();
        let k = c.random_scalar(&mut rand_chacha::ChaCha20Rng::seed_from_u64(seed));
        let enc = p256_crate_mul(&c.encode_scalar(&k).try_into().unwrap());
        let pt = c.decode_point(&enc).unwrap();
        prop_assert_eq!(pt, c.point_mul(&k, c.generator()));
    }
}
