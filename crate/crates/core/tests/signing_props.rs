use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use trustshare::curve::{self, CurveParams, CurvePoint, DssSignature};
use trustshare::modmath::{self, ABParams};
use trustshare::threshold_dss::{self, DssError, SigningKeyMaterial, SigningSession, Tamper};

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

/// Points of y^2 = x^3 + 2x + 2 over F_17, found by brute force.
fn toy_points() -> Vec<CurvePoint> {
    let mut pts = vec![CurvePoint::Identity];
    for x in 0..17u64 {
        for y in 0..17u64 {
            if (y * y) % 17 == (x * x * x + 2 * x + 2) % 17 {
                pts.push(CurvePoint::affine(x, y));
            }
        }
    }
    pts
}

/// Modular inverse by search, independent of the library.
fn inv(a: u64, q: u64) -> u64 {
    (1..q).find(|x| a * x % q == 1).expect("invertible")
}

#[test]
fn toy_group_laws_exhaustive() {
    let c = CurveParams::toy();
    let pts = toy_points();
    assert_eq!(pts.len(), 19);
    for a in &pts {
        assert!(c.contains(a));
        for b in &pts {
            let ab = c.point_add(a, b).unwrap();
            assert_eq!(ab, c.point_add(b, a).unwrap());
            assert!(pts.contains(&ab));
            for d in &pts {
                let left = c.point_add(&ab, d).unwrap();
                let right = c.point_add(a, &c.point_add(b, d).unwrap()).unwrap();
                assert_eq!(left, right);
            }
        }
    }
}

#[test]
fn toy_sign_verify_exhaustive() {
    let c = CurveParams::toy();
    let q = 19u64;
    let mut signed = 0;
    for d in 1..q {
        let public = c.mul_base(&big(d));
        for k in 1..q {
            let point = c.mul_base(&big(inv(k, q)));
            let r = u64::try_from(point.x().unwrap()).unwrap() % q;
            for m in 0..q {
                let s = k * ((m + r * d) % q) % q;
                if r == 0 || s == 0 {
                    assert!(curve::dss_sign_central(&big(d), &big(k), &big(m), &c).is_err());
                    continue;
                }
                let sig = curve::dss_sign_central(&big(d), &big(k), &big(m), &c).unwrap();
                assert_eq!(sig, DssSignature { r: big(r), s: big(s) });
                assert!(curve::dss_verify(&public, &big(m), &sig, &c));
                signed += 1;
            }
        }
    }
    assert!(signed > 5000);
}

fn toy_key(seed: u64) -> (SigningKeyMaterial, ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = CurveParams::toy();
    let params = modmath::gen_ab_params(3, 4, &big(65537), 56, &mut rng).unwrap();
    let key = SigningKeyMaterial::generate(&big(seed % 65537), &params, &c, &big(8), &mut rng).unwrap();
    (key, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn honest_sessions_match_central_signer(seed in any::<u64>(), m in 0u64..19, first in 1usize..3) {
        let (key, mut rng) = toy_key(seed);
        let indices = vec![first, first + 1, 4];
        let ctx = modmath::coalition_context(&key.params, &indices).unwrap();
        let session = SigningSession::new(&key, ctx.clone(), big(m));
        let outcome = session.run(None, &mut rng).unwrap();
        let (sig, kappa) = outcome.result.clone().unwrap();
        prop_assert!(kappa < ctx.len());
        let k = outcome.nonce.k();
        let a = outcome.nonce.a();
        let v: Vec<_> = outcome.round1.iter().map(|r| (r.v.clone(), ctx.moduli()[ctx.position(r.index).unwrap()].clone())).collect();
        prop_assert_eq!(modmath::crt_reconstruct(&v, &ctx).unwrap(), &k * &a);
        prop_assert_eq!(curve::dss_sign_central(&key.d, &k, &big(m), &key.curve).unwrap(), sig.clone());
        prop_assert!(curve::dss_verify(&key.public, &big(m), &sig, &key.curve));
    }

    #[test]
    fn tampering_never_yields_an_invalid_signature(seed in any::<u64>(), pos in 0usize..3, which in 0usize..3) {
        let (key, mut rng) = toy_key(seed);
        let ctx = modmath::coalition_context(&key.params, &[1, 2, 3]).unwrap();
        let session = SigningSession::new(&key, ctx, big(7));
        let tamper = [Tamper::Round1V(pos), Tamper::Round1W(pos), Tamper::Round2Sig(pos)][which];
        let outcome = session.run(Some(tamper), &mut rng).unwrap();
        match outcome.result {
            Ok((sig, _)) => prop_assert!(curve::dss_verify(&key.public, &big(7), &sig, &key.curve)),
            Err(e) => prop_assert!(matches!(e, DssError::NoValidCandidate | DssError::DegenerateNonce)),
        }
    }
}

#[test]
fn secp256k1_tampering_always_detected() {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let c = CurveParams::secp256k1();
    let (params, bound) = trustshare::netsim::signing_params(&c, 2, 3, &mut rng).unwrap();
    let key = SigningKeyMaterial::generate(&big(4242), &params, &c, &bound, &mut rng).unwrap();
    let ctx = modmath::coalition_context(&params, &[1, 3]).unwrap();
    let session = SigningSession::new(&key, ctx, big(99));
    for tamper in [Tamper::Round1V(0), Tamper::Round1W(1), Tamper::Round2Sig(0), Tamper::Round2Sig(1)] {
        let outcome = session.run(Some(tamper), &mut rng).unwrap();
        assert_eq!(outcome.result, Err(DssError::NoValidCandidate), "{tamper:?}");
    }
    let honest = session.run(None, &mut rng).unwrap();
    assert!(honest.result.is_ok());
}

#[test]
fn fixture_key_respects_sizing_contract() {
    let p = ABParams::fixture();
    let c = CurveParams::toy();
    let key = SigningKeyMaterial::generate(&big(3), &p, &c, &big(8), &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
    assert!(key.d < threshold_dss::key_limit(p.capacity(), 2, &big(8), &c.q));
    assert!(threshold_dss::check_sizing(p.capacity(), 2, &big(8), &c.q, &key.d).is_ok());
    assert_eq!(threshold_dss::check_sizing(p.capacity(), 2, &big(40), &c.q, &key.d), Err(DssError::BoundTooLarge));
    assert!(SigningKeyMaterial::generate(&big(3), &p, &c, &big(40), &mut ChaCha20Rng::seed_from_u64(1)).is_err());
}
