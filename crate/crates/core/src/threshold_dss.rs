//! Distributed DSS signing over CRT shares.
//!
//! The coalition holds CRT shares `d_i` of the lifted key `d` and jointly
//! generates shares of two nonces `k` and `a`. Round 1 broadcasts
//! `v_i = k_i a_i mod m_i` and `w_i = ((lambda_i a_i) mod M_C) G`; the
//! combiner gets `ka` exactly by CRT and `W = (a + kappa M_C) G` for an
//! unknown wrap count `kappa < t`. Each `kappa` yields a candidate `r`.
//! Round 2 returns one signature share per candidate, and the assembled
//! candidate that verifies under the public key is the signature.
//!
//! Exactness needs every recombined integer to stay below `M_C`. With nonce
//! contributions below `B` this is the sizing contract
//! `(t B)^2 < M` and `t B q (1 + d) < M`, where `M <= M_C` for every
//! coalition.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attest::{NodeId, TrustMark};
use crate::crt_vss::{self, Dealing, MaskedSecret, Share, VssError};
use crate::curve::{self, CurveError, CurveParams, CurvePoint, DssSignature};
use crate::hexint;
use crate::modmath::{self, crt_reconstruct, mod_inverse, ABParams, CoalitionContext, MathError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DssError {
    #[error("nonce bound violates the sizing contract")]
    BoundTooLarge,
    #[error("member {0} lacks the shares this step needs")]
    MissingShares(usize),
    #[error("expected one message from each coalition member")]
    MissingMessages,
    #[error("ka is zero modulo q, resample nonces")]
    NonInvertibleKA,
    #[error("no candidate signature verifies; a share was corrupted")]
    NoValidCandidate,
    #[error("a candidate has r = 0 or s = 0, resample nonces")]
    DegenerateNonce,
    #[error("only {found} of {needed} required nodes passed attestation")]
    InsufficientTrustedNodes { needed: usize, found: usize },
    #[error(transparent)]
    Vss(#[from] VssError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

pub type Result<T> = std::result::Result<T, DssError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageDigest {
    #[default]
    Sha1,
    Sha256,
}

/// Hashes `message` and reduces the digest modulo `q`.
pub fn digest_scalar(alg: MessageDigest, message: &[u8], q: &BigUint) -> BigUint {
    let bytes = match alg {
        MessageDigest::Sha1 => Sha1::digest(message).to_vec(),
        MessageDigest::Sha256 => Sha256::digest(message).to_vec(),
    };
    BigUint::from_bytes_be(&bytes) % q
}

/// Checks `(t B)^2 < M` and `t B q (1 + d) < M` against the capacity.
pub fn check_sizing(capacity: &BigUint, t: usize, bound: &BigUint, q: &BigUint, d: &BigUint) -> Result<()> {
    let tb = bound * BigUint::from(t);
    if &tb * &tb >= *capacity || &tb * q * (d + 1u32) >= *capacity {
        return Err(DssError::BoundTooLarge);
    }
    Ok(())
}

/// Largest exclusive key bound `D` with `t B q D < M`.
pub fn key_limit(capacity: &BigUint, t: usize, bound: &BigUint, q: &BigUint) -> BigUint {
    let step = bound * BigUint::from(t) * q;
    (capacity - 1u32) / step
}

/// The registered key pair `(d, d G)` with `d = S + A m0` and its dealing.
#[derive(Debug, Clone)]
pub struct SigningKeyMaterial {
    pub params: ABParams,
    pub curve: CurveParams,
    /// Effective private scalar, the lifted masked secret.
    pub d: BigUint,
    pub public: CurvePoint,
    pub dealing: Dealing,
    pub masked: MaskedSecret,
    pub nonce_bound: BigUint,
}

impl SigningKeyMaterial {
    /// Shares `secret` with a mask small enough for nonces below `nonce_bound`.
    pub fn generate<R: Rng + ?Sized>(
        secret: &BigUint,
        params: &ABParams,
        curve: &CurveParams,
        nonce_bound: &BigUint,
        rng: &mut R,
    ) -> Result<Self> {
        let limit = key_limit(params.capacity(), params.t(), nonce_bound, &curve.q);
        if limit <= secret + params.m0() {
            return Err(DssError::BoundTooLarge);
        }
        loop {
            let (dealing, masked) = crt_vss::split_masked_below(secret, params, &limit, rng)?;
            if (&masked.lifted % &curve.q).is_zero() {
                continue;
            }
            let d = masked.lifted.clone();
            check_sizing(params.capacity(), params.t(), nonce_bound, &curve.q, &d)?;
            return Ok(SigningKeyMaterial {
                public: curve.mul_base(&d),
                params: params.clone(),
                curve: curve.clone(),
                d,
                dealing,
                masked,
                nonce_bound: nonce_bound.clone(),
            });
        }
    }

    pub fn key_share(&self, index: usize) -> Option<&Share> {
        self.dealing.share(index)
    }
}

/// One coalition member's private state during a signing session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberState {
    pub index: usize,
    pub modulus: BigUint,
    pub key_share: Option<BigUint>,
    pub k_share: Option<BigUint>,
    pub a_share: Option<BigUint>,
}

impl MemberState {
    pub fn new(key_share: &Share) -> Self {
        MemberState {
            index: key_share.index,
            modulus: key_share.modulus.clone(),
            key_share: Some(key_share.value.clone()),
            k_share: None,
            a_share: None,
        }
    }
}

/// Member `member`'s random contributions to `k` and `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonceContribution {
    pub member: usize,
    pub rho: BigUint,
    pub sigma: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointNonce {
    pub contributions: Vec<NonceContribution>,
    /// Summed `k` shares, aligned with the coalition indices.
    pub k_shares: Vec<Share>,
    pub a_shares: Vec<Share>,
}

impl JointNonce {
    /// `k = sum rho_j`; known only to a harness that sees every contribution.
    pub fn k(&self) -> BigUint {
        self.contributions.iter().map(|c| &c.rho).sum()
    }

    pub fn a(&self) -> BigUint {
        self.contributions.iter().map(|c| &c.sigma).sum()
    }
}

/// Sub-shares of one contribution: `value mod m_i` for every coalition member.
pub fn contribution_shares(value: &BigUint, ctx: &CoalitionContext) -> Vec<Share> {
    ctx.indices().iter().zip(ctx.moduli()).map(|(&i, m)| Share::new(i, value.clone(), m.clone())).collect()
}

/// Every member samples `rho_j, sigma_j` in `[1, B)`, direct-splits them over
/// the coalition moduli and each member sums what it receives.
pub fn joint_nonce_gen<R: Rng + ?Sized>(
    ctx: &CoalitionContext,
    bound: &BigUint,
    q: &BigUint,
    d: &BigUint,
    rng: &mut R,
) -> Result<JointNonce> {
    check_sizing(ctx.m_c(), ctx.len(), bound, q, d)?;
    if *bound <= BigUint::one() {
        return Err(DssError::BoundTooLarge);
    }
    let one = BigUint::one();
    let (rho, sigma): (Vec<_>, Vec<_>) =
        ctx.indices().iter().map(|_| (rng.gen_biguint_range(&one, bound), rng.gen_biguint_range(&one, bound))).unzip();
    joint_nonce_from(ctx, &rho, &sigma)
}

/// [`joint_nonce_gen`] with the contributions fixed by the caller.
pub fn joint_nonce_from(ctx: &CoalitionContext, rho: &[BigUint], sigma: &[BigUint]) -> Result<JointNonce> {
    if rho.len() != ctx.len() || sigma.len() != ctx.len() {
        return Err(DssError::MissingMessages);
    }
    let mut k_shares = contribution_shares(&BigUint::zero(), ctx);
    let mut a_shares = k_shares.clone();
    for (r, s) in rho.iter().zip(sigma) {
        for (slot, sub) in k_shares.iter_mut().zip(contribution_shares(r, ctx)) {
            *slot = crt_vss::add_shares(slot, &sub)?;
        }
        for (slot, sub) in a_shares.iter_mut().zip(contribution_shares(s, ctx)) {
            *slot = crt_vss::add_shares(slot, &sub)?;
        }
    }
    let contributions = ctx
        .indices()
        .iter()
        .zip(rho.iter().zip(sigma))
        .map(|(&member, (r, s))| NonceContribution { member, rho: r.clone(), sigma: s.clone() })
        .collect();
    Ok(JointNonce { contributions, k_shares, a_shares })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round1Msg {
    pub index: usize,
    #[serde(with = "hexint")]
    pub v: BigUint,
    pub w: CurvePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round2Msg {
    pub index: usize,
    #[serde(with = "hexint::vec")]
    pub sig_candidates: Vec<BigUint>,
}

/// `v = k_i a_i mod m_i`, `w = ((lambda_i a_i) mod M_C) G`.
pub fn round1(member: &MemberState, ctx: &CoalitionContext, curve: &CurveParams) -> Result<Round1Msg> {
    let (k, a) = match (&member.k_share, &member.a_share) {
        (Some(k), Some(a)) => (k, a),
        _ => return Err(DssError::MissingShares(member.index)),
    };
    let lambda = ctx.lambda(member.index).ok_or(MathError::BadIndex(member.index))?;
    let v = k * a % &member.modulus;
    let exponent = lambda * a % ctx.m_c();
    Ok(Round1Msg { index: member.index, v, w: curve.mul_base(&exponent) })
}

fn ordered<'a, T>(msgs: &'a [T], ctx: &CoalitionContext, index_of: impl Fn(&T) -> usize) -> Result<Vec<&'a T>> {
    if msgs.len() != ctx.len() {
        return Err(DssError::MissingMessages);
    }
    ctx.indices().iter().map(|&i| msgs.iter().find(|m| index_of(m) == i).ok_or(DssError::MissingMessages)).collect()
}

/// Recombines round 1 into the candidate list `r_0..r_{t-1}`. A candidate
/// whose point is the identity is reported as `0`.
pub fn combine_round1(msgs: &[Round1Msg], ctx: &CoalitionContext, curve: &CurveParams) -> Result<Vec<BigUint>> {
    let msgs = ordered(msgs, ctx, |m| m.index)?;
    let residues: Vec<_> = msgs.iter().zip(ctx.moduli()).map(|(m, modulus)| (&m.v % modulus, modulus.clone())).collect();
    let ka = crt_reconstruct(&residues, ctx)?;
    let q = &curve.q;
    let ka_inv = mod_inverse(&(&ka % q), q).map_err(|_| DssError::NonInvertibleKA)?;
    let mut w_sum = CurvePoint::Identity;
    for m in &msgs {
        w_sum = curve.point_add(&w_sum, &m.w)?;
    }
    let wrap = ctx.m_c() % q;
    let mut candidates = Vec::with_capacity(ctx.len());
    for kappa in 0..ctx.len() {
        let correction = (q - (BigUint::from(kappa) * &wrap) % q) % q;
        let w_kappa = curve.point_add(&w_sum, &curve.mul_base(&correction))?;
        let r_point = curve.scalar_mul(&ka_inv, &w_kappa)?;
        candidates.push(r_point.x().map(|x| x % q).unwrap_or_default());
    }
    Ok(candidates)
}

/// `sig_i^(kappa) = k_i (m + r_kappa d_i) mod m_i` for every candidate.
pub fn round2(member: &MemberState, candidates: &[BigUint], m: &BigUint) -> Result<Round2Msg> {
    let (k, d) = match (&member.k_share, &member.key_share) {
        (Some(k), Some(d)) => (k, d),
        _ => return Err(DssError::MissingShares(member.index)),
    };
    let modulus = &member.modulus;
    let sig_candidates = candidates.iter().map(|r| k * ((m + r * d) % modulus) % modulus).collect();
    Ok(Round2Msg { index: member.index, sig_candidates })
}

/// Assembles `s_kappa` for every candidate and returns the first pair that
/// verifies, together with its `kappa`. When nothing verifies but some
/// candidate has `r = 0` or `s = 0`, the nonce pair is reported as degenerate.
pub fn assemble_and_select(
    msgs: &[Round2Msg],
    candidates: &[BigUint],
    public: &CurvePoint,
    m: &BigUint,
    ctx: &CoalitionContext,
    curve: &CurveParams,
) -> Result<(DssSignature, usize)> {
    let msgs = ordered(msgs, ctx, |m| m.index)?;
    if msgs.iter().any(|msg| msg.sig_candidates.len() != candidates.len()) {
        return Err(DssError::MissingMessages);
    }
    let q = &curve.q;
    let mut degenerate = false;
    for (kappa, r) in candidates.iter().enumerate() {
        if r.is_zero() {
            degenerate = true;
            continue;
        }
        let residues: Vec<_> =
            msgs.iter().zip(ctx.moduli()).map(|(msg, modulus)| (&msg.sig_candidates[kappa] % modulus, modulus.clone())).collect();
        let s = crt_reconstruct(&residues, ctx)? % q;
        degenerate |= s.is_zero();
        let sig = DssSignature { r: r.clone(), s };
        if curve::dss_verify(public, m, &sig, curve) {
            return Ok((sig, kappa));
        }
    }
    Err(if degenerate { DssError::DegenerateNonce } else { DssError::NoValidCandidate })
}

/// A chosen coalition: node ids with their share indices, plus CRT context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coalition {
    pub members: Vec<(NodeId, usize)>,
    pub ctx: CoalitionContext,
}

/// Source of trust decisions for [`trusted_choice`].
pub trait AttestationService {
    /// The requestor's cached trust mark for `candidate`.
    fn trust_mark(&self, requestor: &NodeId, candidate: &NodeId) -> TrustMark;
    /// Runs `auth(candidate, requestor)` and returns the resulting mark.
    fn authenticate(&mut self, requestor: &NodeId, candidate: &NodeId) -> TrustMark;
}

/// Picks the first `t` candidates (in order) that are trusted. Cached `-1`
/// marks are skipped without re-running authentication; `0` triggers a run.
pub fn trusted_choice<S: AttestationService + ?Sized>(
    requestor: &NodeId,
    candidates: &[(NodeId, usize)],
    params: &ABParams,
    service: &mut S,
) -> Result<Coalition> {
    let t = params.t();
    let mut members = Vec::with_capacity(t);
    for (node, index) in candidates {
        if members.len() == t {
            break;
        }
        let mark = match service.trust_mark(requestor, node) {
            TrustMark::Failed => continue,
            TrustMark::Trusted => TrustMark::Trusted,
            TrustMark::Unknown => service.authenticate(requestor, node),
        };
        if mark == TrustMark::Trusted {
            members.push((node.clone(), *index));
        }
    }
    if members.len() < t {
        return Err(DssError::InsufficientTrustedNodes { needed: t, found: members.len() });
    }
    members.sort_by_key(|(_, i)| *i);
    let indices: Vec<usize> = members.iter().map(|(_, i)| *i).collect();
    let ctx = modmath::coalition_context(params, &indices)?;
    Ok(Coalition { members, ctx })
}

/// Which message a fault injection corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tamper {
    /// Add one to member `pos`'s `v`.
    Round1V(usize),
    /// Add the base point to member `pos`'s `w`.
    Round1W(usize),
    /// Add one to every signature candidate of member `pos`.
    Round2Sig(usize),
}

/// Everything an honest run produced, including harness-only values.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub nonce: JointNonce,
    pub candidates: Vec<BigUint>,
    pub round1: Vec<Round1Msg>,
    pub round2: Vec<Round2Msg>,
    pub result: Result<(DssSignature, usize)>,
}

/// In-process orchestrator for one signing session over `ctx`.
pub struct SigningSession<'a> {
    pub key: &'a SigningKeyMaterial,
    pub ctx: CoalitionContext,
    pub m: BigUint,
}

impl<'a> SigningSession<'a> {
    pub fn new(key: &'a SigningKeyMaterial, ctx: CoalitionContext, m: BigUint) -> Self {
        SigningSession { key, ctx, m }
    }

    pub fn members(&self) -> Result<Vec<MemberState>> {
        self.ctx
            .indices()
            .iter()
            .map(|&i| self.key.key_share(i).map(MemberState::new).ok_or(DssError::MissingShares(i)))
            .collect()
    }

    /// Runs nonce generation and both rounds, resampling nonces while `ka`
    /// vanishes modulo `q` or the result is degenerate.
    pub fn run<R: Rng + ?Sized>(&self, tamper: Option<Tamper>, rng: &mut R) -> Result<SessionOutcome> {
        loop {
            let nonce = joint_nonce_gen(&self.ctx, &self.key.nonce_bound, &self.key.curve.q, &self.key.d, rng)?;
            match self.run_with_nonce(nonce, tamper) {
                Err(DssError::NonInvertibleKA) => continue,
                Ok(outcome) if outcome.result == Err(DssError::DegenerateNonce) => continue,
                other => return other,
            }
        }
    }

    pub fn run_with_nonce(&self, nonce: JointNonce, tamper: Option<Tamper>) -> Result<SessionOutcome> {
        let curve = &self.key.curve;
        let mut members = self.members()?;
        for (member, (k, a)) in members.iter_mut().zip(nonce.k_shares.iter().zip(&nonce.a_shares)) {
            member.k_share = Some(k.value.clone());
            member.a_share = Some(a.value.clone());
        }
        let mut round1_msgs = members.iter().map(|m| round1(m, &self.ctx, curve)).collect::<Result<Vec<_>>>()?;
        match tamper {
            Some(Tamper::Round1V(pos)) => {
                let msg = &mut round1_msgs[pos];
                msg.v = (&msg.v + 1u32) % &self.ctx.moduli()[pos];
            }
            Some(Tamper::Round1W(pos)) => {
                let msg = &mut round1_msgs[pos];
                msg.w = curve.point_add(&msg.w, &curve.g)?;
            }
            _ => {}
        }
        let candidates = combine_round1(&round1_msgs, &self.ctx, curve)?;
        let mut round2_msgs = members.iter().map(|m| round2(m, &candidates, &self.m)).collect::<Result<Vec<_>>>()?;
        if let Some(Tamper::Round2Sig(pos)) = tamper {
            let modulus = &self.ctx.moduli()[pos];
            for s in &mut round2_msgs[pos].sig_candidates {
                *s = (&*s + 1u32) % modulus;
            }
        }
        let result = assemble_and_select(&round2_msgs, &candidates, &self.key.public, &self.m, &self.ctx, curve);
        Ok(SessionOutcome { nonce, candidates, round1: round1_msgs, round2: round2_msgs, result })
    }
}

/// Published signature record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureOutput {
    #[serde(with = "hexint")]
    pub r: BigUint,
    #[serde(with = "hexint")]
    pub s: BigUint,
    pub kappa: usize,
    pub curve: String,
}

impl SignatureOutput {
    pub fn new(sig: &DssSignature, kappa: usize, curve: &CurveParams) -> Self {
        SignatureOutput { r: sig.r.clone(), s: sig.s.clone(), kappa, curve: curve.digest() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modmath::context_from_moduli;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn toy_key(seed: u64) -> SigningKeyMaterial {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = modmath::gen_ab_params(2, 3, &big(7), 40, &mut rng).unwrap();
        SigningKeyMaterial::generate(&big(5), &params, &CurveParams::toy(), &big(8), &mut rng).unwrap()
    }

    #[test]
    fn joint_nonce_example() {
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let nonce = joint_nonce_from(&ctx, &[big(2), big(3)], &[big(1), big(2)]).unwrap();
        assert_eq!(nonce.k(), big(5));
        assert_eq!(nonce.a(), big(3));
        assert_eq!(nonce.k_shares.iter().map(|s| s.value.clone()).collect::<Vec<_>>(), vec![big(5), big(5)]);
        assert_eq!(nonce.a_shares.iter().map(|s| s.value.clone()).collect::<Vec<_>>(), vec![big(3), big(3)]);
        let ones = joint_nonce_from(&ctx, &[big(1), big(1)], &[big(1), big(1)]).unwrap();
        assert_eq!(ones.k(), big(2));
    }

    #[test]
    fn sizing_contract() {
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        // t B = 2 * 34 = 68 > sqrt(4399) ~ 66.3
        assert_eq!(joint_nonce_gen(&ctx, &big(34), &big(19), &big(1), &mut rng), Err(DssError::BoundTooLarge));
        assert!(joint_nonce_gen(&ctx, &big(4), &big(19), &big(12), &mut rng).is_ok());
        assert_eq!(joint_nonce_gen(&ctx, &big(4), &big(19), &big(40), &mut rng), Err(DssError::BoundTooLarge));
    }

    #[test]
    fn round1_examples() {
        let curve = CurveParams::toy();
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let mut member =
            MemberState { index: 1, modulus: big(53), key_share: Some(big(16)), k_share: Some(big(5)), a_share: Some(big(3)) };
        let msg = round1(&member, &ctx, &curve).unwrap();
        assert_eq!(msg.v, big(15));
        // lambda_1 a_1 mod M_C = 1909 * 3 mod 4399 = 1328
        assert_eq!(msg.w, curve.scalar_mul(&big(1328), &curve.g).unwrap());
        member.a_share = Some(big(0));
        assert_eq!(round1(&member, &ctx, &curve).unwrap().w, CurvePoint::Identity);
        member.k_share = None;
        assert_eq!(round1(&member, &ctx, &curve), Err(DssError::MissingShares(1)));
    }

    #[test]
    fn combine_contains_true_r() {
        let curve = CurveParams::toy();
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let nonce = joint_nonce_from(&ctx, &[big(2), big(3)], &[big(1), big(2)]).unwrap();
        let msgs: Vec<_> = ctx
            .indices()
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let m = MemberState {
                    index: i,
                    modulus: ctx.moduli()[pos].clone(),
                    key_share: None,
                    k_share: Some(nonce.k_shares[pos].value.clone()),
                    a_share: Some(nonce.a_shares[pos].value.clone()),
                };
                round1(&m, &ctx, &curve).unwrap()
            })
            .collect();
        let candidates = combine_round1(&msgs, &ctx, &curve).unwrap();
        let truth = curve::nonce_r(&big(5), &curve).unwrap();
        assert_eq!(candidates.len(), 2);
        assert!(candidates.contains(&truth));
        assert_eq!(combine_round1(&msgs[..1], &ctx, &curve), Err(DssError::MissingMessages));
    }

    #[test]
    fn kappa_zero_when_no_wrap() {
        // With a = 0 every lambda_i a_i term is 0, so W = O = aG with kappa = 0.
        let curve = CurveParams::toy();
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let msgs = vec![
            Round1Msg { index: 1, v: big(1), w: CurvePoint::Identity },
            Round1Msg { index: 2, v: big(1), w: CurvePoint::Identity },
        ];
        let candidates = combine_round1(&msgs, &ctx, &curve).unwrap();
        assert_eq!(candidates[0], big(0));
    }

    #[test]
    fn non_invertible_ka() {
        let curve = CurveParams::toy();
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        // ka = 38 = 2 * 19
        let msgs =
            vec![Round1Msg { index: 1, v: big(38), w: curve.g.clone() }, Round1Msg { index: 2, v: big(38), w: curve.g.clone() }];
        assert_eq!(combine_round1(&msgs, &ctx, &curve), Err(DssError::NonInvertibleKA));
    }

    #[test]
    fn round2_examples() {
        let member = MemberState { index: 1, modulus: big(53), key_share: Some(big(16)), k_share: Some(big(5)), a_share: None };
        let msg = round2(&member, &[big(4), big(0), big(7)], &big(11)).unwrap();
        assert_eq!(msg.sig_candidates.len(), 3);
        assert_eq!(msg.sig_candidates[0], big(4));
        assert_eq!(msg.sig_candidates[1], big(55 % 53));
        let bare = MemberState { key_share: None, ..member };
        assert_eq!(round2(&bare, &[big(4)], &big(11)), Err(DssError::MissingShares(1)));
    }

    #[test]
    fn honest_session_matches_central_signer() {
        let key = toy_key(3);
        let ctx = modmath::coalition_context(&key.params, &[1, 3]).unwrap();
        let session = SigningSession::new(&key, ctx, big(11));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let outcome = session.run(None, &mut rng).unwrap();
        let (sig, kappa) = outcome.result.clone().unwrap();
        assert!(kappa < 2);
        let central = curve::dss_sign_central(&key.d, &outcome.nonce.k(), &big(11), &key.curve).unwrap();
        assert_eq!(sig, central);
        assert!(curve::dss_verify(&key.public, &big(11), &sig, &key.curve));
    }

    #[test]
    fn tampered_signature_share_is_caught() {
        let key = toy_key(5);
        let ctx = modmath::coalition_context(&key.params, &[1, 2]).unwrap();
        let session = SigningSession::new(&key, ctx, big(2));
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let honest = session.run(None, &mut rng).unwrap();
        let tampered = session.run_with_nonce(honest.nonce.clone(), Some(Tamper::Round2Sig(0))).unwrap();
        match tampered.result {
            Err(DssError::NoValidCandidate | DssError::DegenerateNonce) => {}
            Ok((sig, _)) => assert!(curve::dss_verify(&key.public, &big(2), &sig, &key.curve)),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn single_signer_has_kappa_zero() {
        let curve = CurveParams::toy();
        let ctx = context_from_moduli(vec![1], vec![big(1_000_003)]).unwrap();
        let d = big(12);
        let public = curve.mul_base(&d);
        for (k, a) in [(5u64, 3u64), (7, 11), (2, 9)] {
            let nonce = joint_nonce_from(&ctx, &[big(k)], &[big(a)]).unwrap();
            let member = MemberState {
                index: 1,
                modulus: big(1_000_003),
                key_share: Some(d.clone()),
                k_share: Some(nonce.k_shares[0].value.clone()),
                a_share: Some(nonce.a_shares[0].value.clone()),
            };
            let r1 = round1(&member, &ctx, &curve).unwrap();
            let candidates = combine_round1(&[r1], &ctx, &curve).unwrap();
            let r2 = round2(&member, &candidates, &big(4)).unwrap();
            let (_, kappa) = assemble_and_select(&[r2], &candidates, &public, &big(4), &ctx, &curve).unwrap();
            assert_eq!(kappa, 0);
        }
    }

    struct MockService {
        marks: BTreeMap<NodeId, TrustMark>,
        compromised: Vec<NodeId>,
        auth_runs: Vec<NodeId>,
    }

    impl AttestationService for MockService {
        fn trust_mark(&self, _: &NodeId, candidate: &NodeId) -> TrustMark {
            self.marks.get(candidate).copied().unwrap_or(TrustMark::Unknown)
        }

        fn authenticate(&mut self, _: &NodeId, candidate: &NodeId) -> TrustMark {
            self.auth_runs.push(candidate.clone());
            let mark = if self.compromised.contains(candidate) { TrustMark::Failed } else { TrustMark::Trusted };
            self.marks.insert(candidate.clone(), mark);
            mark
        }
    }

    fn neighbors() -> Vec<(NodeId, usize)> {
        (1..=5).map(|i| (NodeId::new(format!("P{i}")), i)).collect()
    }

    #[test]
    fn trusted_choice_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let params = modmath::gen_ab_params(3, 5, &big(7), 16, &mut rng).unwrap();
        let requestor = NodeId::new("A");

        let mut honest = MockService { marks: BTreeMap::new(), compromised: vec![], auth_runs: vec![] };
        let c = trusted_choice(&requestor, &neighbors(), &params, &mut honest).unwrap();
        assert_eq!(c.members.len(), 3);
        assert!(c.members.iter().all(|(n, _)| honest.marks[n] == TrustMark::Trusted));

        let bad: Vec<NodeId> = ["P1", "P2", "P3"].iter().map(|s| NodeId::new(*s)).collect();
        let mut mostly_bad = MockService { marks: BTreeMap::new(), compromised: bad, auth_runs: vec![] };
        assert_eq!(
            trusted_choice(&requestor, &neighbors(), &params, &mut mostly_bad),
            Err(DssError::InsufficientTrustedNodes { needed: 3, found: 2 })
        );

        let mut cached = MockService { marks: BTreeMap::new(), compromised: vec![], auth_runs: vec![] };
        cached.marks.insert(NodeId::new("P2"), TrustMark::Failed);
        let c = trusted_choice(&requestor, &neighbors(), &params, &mut cached).unwrap();
        assert!(!cached.auth_runs.contains(&NodeId::new("P2")));
        assert_eq!(c.ctx.indices(), &[1, 3, 4]);
    }

    #[test]
    fn digest_reduces_mod_q() {
        let q = big(19);
        let m = digest_scalar(MessageDigest::Sha1, b"abc", &q);
        // SHA-1("abc") = a9993e36...9cd0d89d
        let full = BigUint::parse_bytes(b"a9993e364706816aba3e25717850c26c9cd0d89d", 16).unwrap();
        assert_eq!(m, full % &q);
    }
}
