//! Asmuth-Bloom verifiable secret sharing.
//!
//! A secret `S < m0` is lifted to `y = S + A * m0 < M` with a random mask `A`
//! and participant `i` receives `y mod m_i`. Each share is published as
//! `z_i = g_i^{S_i} mod p_i` where `p_i = 2 m_i + 1` and `g_i` generates the
//! order-`m_i` subgroup of squares, so a share can be checked by anyone
//! holding the bulletin. Protocol randoms are shared in *direct* mode
//! (no mask), which keeps products of two shared values inside capacity.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hexint;
use crate::modmath::{self, crt_reconstruct, is_prime, ABParams, CoalitionContext, MathError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VssError {
    #[error("secret must be below m0")]
    SecretOutOfRange,
    #[error("value does not fit below the capacity")]
    ValueExceedsCapacity,
    #[error("verification prime is not 2m+1 or not prime")]
    BadVerificationPrime,
    #[error("share index {share} does not match commitment index {commitment}")]
    IndexMismatch { share: usize, commitment: usize },
    #[error("shares belong to different moduli")]
    ModulusMismatch,
    #[error("coalition must have exactly {expected} shares, got {got}")]
    WrongCoalitionSize { expected: usize, got: usize },
    #[error("declared operand bounds overflow the coalition capacity")]
    CapacityExceeded,
    #[error("refresh constraints cannot be met for this split point")]
    ConstraintUnsatisfiable,
    #[error("new parameters cannot hold the secret")]
    InvalidNewParams,
    #[error("dealings use different parameters")]
    ParamsMismatch,
    #[error(transparent)]
    Math(#[from] MathError),
}

pub type Result<T> = std::result::Result<T, VssError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Masked,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub index: usize,
    #[serde(with = "hexint")]
    pub value: BigUint,
    #[serde(with = "hexint")]
    pub modulus: BigUint,
}

impl Share {
    pub fn new(index: usize, value: BigUint, modulus: BigUint) -> Self {
        let value = value % &modulus;
        Share { index, value, modulus }
    }

    pub fn residue(&self) -> (BigUint, BigUint) {
        (self.value.clone(), self.modulus.clone())
    }
}

/// Public verification triple `(p_i, g_i, z_i)` for share `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub index: usize,
    #[serde(with = "hexint")]
    pub p: BigUint,
    #[serde(with = "hexint")]
    pub g: BigUint,
    #[serde(with = "hexint")]
    pub z: BigUint,
}

impl Commitment {
    /// Commitment with an explicit generator (must already be a non-trivial square).
    pub fn with_generator(share: &Share, p: &BigUint, g: BigUint) -> Result<Self> {
        check_verification_prime(&share.modulus, p)?;
        if g.is_one() || g >= *p || !g.modpow(&share.modulus, p).is_one() {
            return Err(VssError::BadVerificationPrime);
        }
        let z = g.modpow(&share.value, p);
        Ok(Commitment { index: share.index, p: p.clone(), g, z })
    }
}

fn check_verification_prime(modulus: &BigUint, p: &BigUint) -> Result<()> {
    if *p != (modulus << 1) + 1u32 || !is_prime(p) {
        return Err(VssError::BadVerificationPrime);
    }
    Ok(())
}

/// Commits to `share` under a fresh random generator of the order-`m` subgroup.
pub fn gen_commitment<R: Rng + ?Sized>(share: &Share, p: &BigUint, rng: &mut R) -> Result<Commitment> {
    check_verification_prime(&share.modulus, p)?;
    let two = BigUint::from(2u32);
    loop {
        let h = rng.gen_biguint_range(&two, p);
        let g = h.modpow(&two, p);
        if !g.is_one() {
            return Commitment::with_generator(share, p, g);
        }
    }
}

/// True iff `g^value = z (mod p)`.
pub fn verify_share(share: &Share, commitment: &Commitment) -> Result<bool> {
    if share.index != commitment.index {
        return Err(VssError::IndexMismatch { share: share.index, commitment: commitment.index });
    }
    Ok(commitment.g.modpow(&share.value, &commitment.p) == commitment.z)
}

/// The lifted form of a masked secret.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSecret {
    pub secret: BigUint,
    pub mask: BigUint,
    pub lifted: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dealing {
    pub params: ABParams,
    pub shares: Vec<Share>,
    pub commitments: Vec<Commitment>,
    pub mode: SplitMode,
}

impl Dealing {
    pub fn share(&self, index: usize) -> Option<&Share> {
        self.shares.iter().find(|s| s.index == index)
    }

    pub fn commitment(&self, index: usize) -> Option<&Commitment> {
        self.commitments.iter().find(|c| c.index == index)
    }

    pub fn shares_for(&self, indices: &[usize]) -> Vec<Share> {
        indices.iter().filter_map(|&i| self.share(i).cloned()).collect()
    }

    pub fn bulletin(&self) -> Bulletin {
        Bulletin { params_digest: self.params.digest(), commitments: self.commitments.clone() }
    }
}

fn deal<R: Rng + ?Sized>(value: &BigUint, params: &ABParams, mode: SplitMode, rng: &mut R) -> Result<Dealing> {
    let mut shares = Vec::with_capacity(params.n());
    let mut commitments = Vec::with_capacity(params.n());
    for ((index, m), p) in params.indices().zip(params.moduli()).zip(params.verif_primes()) {
        let share = Share::new(index, value % m, m.clone());
        commitments.push(gen_commitment(&share, p, rng)?);
        shares.push(share);
    }
    Ok(Dealing { params: params.clone(), shares, commitments, mode })
}

/// Masked split with a mask drawn uniformly from `[1, (M - 1 - S) / m0]`.
pub fn split_masked<R: Rng + ?Sized>(secret: &BigUint, params: &ABParams, rng: &mut R) -> Result<(Dealing, MaskedSecret)> {
    split_masked_below(secret, params, params.capacity(), rng)
}

/// Masked split whose lifted value stays below `bound` (at most `M`). The
/// mask is uniform in `[1, (bound - 1 - S) / m0]`.
pub fn split_masked_below<R: Rng + ?Sized>(
    secret: &BigUint,
    params: &ABParams,
    bound: &BigUint,
    rng: &mut R,
) -> Result<(Dealing, MaskedSecret)> {
    if secret >= params.m0() {
        return Err(VssError::SecretOutOfRange);
    }
    if bound > params.capacity() || *bound <= secret + params.m0() {
        return Err(VssError::ValueExceedsCapacity);
    }
    let max_mask = (bound - 1u32 - secret) / params.m0();
    let mask = rng.gen_biguint_range(&BigUint::one(), &(max_mask + 1u32));
    split_masked_with_mask(secret, &mask, params, rng)
}

/// Masked split with a caller-chosen mask.
pub fn split_masked_with_mask<R: Rng + ?Sized>(
    secret: &BigUint,
    mask: &BigUint,
    params: &ABParams,
    rng: &mut R,
) -> Result<(Dealing, MaskedSecret)> {
    if secret >= params.m0() {
        return Err(VssError::SecretOutOfRange);
    }
    let lifted = secret + mask * params.m0();
    if mask.is_zero() || lifted >= *params.capacity() {
        return Err(VssError::ValueExceedsCapacity);
    }
    let dealing = deal(&lifted, params, SplitMode::Masked, rng)?;
    Ok((dealing, MaskedSecret { secret: secret.clone(), mask: mask.clone(), lifted }))
}

/// Splits `x < M` without a mask.
pub fn split_direct<R: Rng + ?Sized>(x: &BigUint, params: &ABParams, rng: &mut R) -> Result<Dealing> {
    if x >= params.capacity() {
        return Err(VssError::ValueExceedsCapacity);
    }
    deal(x, params, SplitMode::Direct, rng)
}

/// Combines `shares` over `ctx`. Returns the lifted value and the secret
/// (`y mod m0` for masked dealings, `y` itself for direct ones).
pub fn reconstruct(shares: &[Share], ctx: &CoalitionContext, m0: &BigUint, mode: SplitMode) -> Result<(BigUint, BigUint)> {
    if shares.len() != ctx.len() {
        return Err(VssError::WrongCoalitionSize { expected: ctx.len(), got: shares.len() });
    }
    if shares.iter().zip(ctx.indices()).any(|(s, &i)| s.index != i) {
        return Err(MathError::IndexMismatch.into());
    }
    let residues: Vec<_> = shares.iter().map(Share::residue).collect();
    let y = crt_reconstruct(&residues, ctx)?;
    let secret = match mode {
        SplitMode::Masked => &y % m0,
        SplitMode::Direct => y.clone(),
    };
    Ok((y, secret))
}

/// Builds the coalition from the shares' own indices and reconstructs.
pub fn reconstruct_with(shares: &[Share], params: &ABParams, mode: SplitMode) -> Result<(BigUint, BigUint)> {
    if shares.len() != params.t() {
        return Err(VssError::WrongCoalitionSize { expected: params.t(), got: shares.len() });
    }
    let indices: Vec<usize> = shares.iter().map(|s| s.index).collect();
    let ctx = modmath::coalition_context(params, &indices)?;
    reconstruct(shares, &ctx, params.m0(), mode)
}

fn check_pair(a: &Share, b: &Share) -> Result<()> {
    if a.index != b.index || a.modulus != b.modulus {
        return Err(VssError::ModulusMismatch);
    }
    Ok(())
}

pub fn add_shares(a: &Share, b: &Share) -> Result<Share> {
    check_pair(a, b)?;
    Ok(Share::new(a.index, &a.value + &b.value, a.modulus.clone()))
}

pub fn mul_shares(a: &Share, b: &Share) -> Result<Share> {
    check_pair(a, b)?;
    Ok(Share::new(a.index, &a.value * &b.value, a.modulus.clone()))
}

/// Inclusive upper bounds the caller declares for the two hidden operands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductBound {
    pub a_max: BigUint,
    pub b_max: BigUint,
}

/// Each member forms `v_i = a_i b_i mod m_i`; the coalition recombines the
/// `v_i` into `a * b`. No masking term is added.
///
/// Shares alone cannot reveal whether `a * b` fits, so the caller declares
/// operand bounds; the product of the bounds must stay below `M_C`.
pub fn shares_product_protocol(
    deal_a: &Dealing,
    deal_b: &Dealing,
    ctx: &CoalitionContext,
    bound: &ProductBound,
) -> Result<BigUint> {
    if deal_a.params != deal_b.params {
        return Err(VssError::ParamsMismatch);
    }
    if deal_a.mode != SplitMode::Direct || deal_b.mode != SplitMode::Direct {
        return Err(VssError::CapacityExceeded);
    }
    if &bound.a_max * &bound.b_max >= *ctx.m_c() {
        return Err(VssError::CapacityExceeded);
    }
    let products = ctx
        .indices()
        .iter()
        .map(|&i| {
            let a = deal_a.share(i).ok_or(MathError::BadIndex(i))?;
            let b = deal_b.share(i).ok_or(MathError::BadIndex(i))?;
            mul_shares(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    let (y, _) = reconstruct(&products, ctx, deal_a.params.m0(), SplitMode::Direct)?;
    Ok(y)
}

/// Refresh values generated for a mixed multiplicative/additive refresh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRefresh {
    /// `w_1..w_k`, product = 1 mod the full modulus product, none = 1.
    pub multiplicative: Vec<BigUint>,
    /// `w_{k+1}..w_n`, sum = 0 mod the full modulus product, none = 0.
    pub additive: Vec<BigUint>,
    pub refreshed: Vec<Share>,
}

/// Applies a mixed refresh: participants `1..=k_split` contribute
/// multiplicative values, the rest additive values, each CRT-split into
/// per-participant sub-shares. The refreshed shares always equal the
/// originals modulo their moduli.
pub fn refresh_mixed_demo<R: Rng + ?Sized>(
    shares: &[Share],
    params: &ABParams,
    k_split: usize,
    rng: &mut R,
) -> Result<MixedRefresh> {
    let n = params.n();
    if k_split > n || k_split == 1 || n - k_split == 1 {
        return Err(VssError::ConstraintUnsatisfiable);
    }
    let full: BigUint = params.moduli().iter().product();
    let one = BigUint::one();

    let mut multiplicative = Vec::with_capacity(k_split);
    if k_split > 0 {
        // Sample units w_1..w_{k-1}; w_k closes the product. Retry if any is 1.
        loop {
            multiplicative.clear();
            let mut product = BigUint::one();
            for _ in 0..k_split - 1 {
                let w = loop {
                    let w = rng.gen_biguint_range(&BigUint::from(2u32), &full);
                    if modmath::mod_inverse(&w, &full).is_ok() {
                        break w;
                    }
                };
                product = product * &w % &full;
                multiplicative.push(w);
            }
            let closing = modmath::mod_inverse(&product, &full)?;
            multiplicative.push(closing);
            if multiplicative.iter().all(|w| *w != one) {
                break;
            }
        }
    }

    let mut additive = Vec::with_capacity(n - k_split);
    if k_split < n {
        loop {
            additive.clear();
            let mut sum = BigUint::zero();
            for _ in 0..n - k_split - 1 {
                let w = rng.gen_biguint_range(&one, &full);
                sum = (sum + &w) % &full;
                additive.push(w);
            }
            additive.push((&full - &sum) % &full);
            if additive.iter().all(|w| !w.is_zero()) {
                break;
            }
        }
    }

    let refreshed = shares
        .iter()
        .map(|s| {
            let m = &s.modulus;
            let factor = multiplicative.iter().fold(BigUint::one(), |acc, w| acc * (w % m) % m);
            let offset = additive.iter().fold(BigUint::zero(), |acc, w| (acc + w % m) % m);
            Share::new(s.index, &s.value * factor + offset, m.clone())
        })
        .collect();
    Ok(MixedRefresh { multiplicative, additive, refreshed })
}

/// Trusted-third-party refresh onto a new modulus system: same secret, fresh
/// mask, fresh shares and commitments.
pub fn refresh_ttp<R: Rng + ?Sized>(
    dealing: &Dealing,
    masked: &MaskedSecret,
    new_params: &ABParams,
    rng: &mut R,
) -> Result<(Dealing, MaskedSecret)> {
    if new_params.validate().is_err() || masked.secret >= *new_params.m0() || dealing.mode != SplitMode::Masked {
        return Err(VssError::InvalidNewParams);
    }
    split_masked(&masked.secret, new_params, rng)
}

/// On-disk form of one participant's share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareFile {
    pub version: u32,
    pub index: usize,
    #[serde(with = "hexint")]
    pub modulus: BigUint,
    #[serde(with = "hexint")]
    pub value: BigUint,
    pub commitment: CommitmentTriple,
    pub mode: SplitMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentTriple {
    #[serde(with = "hexint")]
    pub p: BigUint,
    #[serde(with = "hexint")]
    pub g: BigUint,
    #[serde(with = "hexint")]
    pub z: BigUint,
}

impl ShareFile {
    pub const VERSION: u32 = 1;

    pub fn new(share: &Share, commitment: &Commitment, mode: SplitMode) -> Self {
        ShareFile {
            version: Self::VERSION,
            index: share.index,
            modulus: share.modulus.clone(),
            value: share.value.clone(),
            commitment: CommitmentTriple { p: commitment.p.clone(), g: commitment.g.clone(), z: commitment.z.clone() },
            mode,
        }
    }

    pub fn share(&self) -> Share {
        Share { index: self.index, value: self.value.clone(), modulus: self.modulus.clone() }
    }

    pub fn commitment(&self) -> Commitment {
        Commitment { index: self.index, p: self.commitment.p.clone(), g: self.commitment.g.clone(), z: self.commitment.z.clone() }
    }
}

/// Public bulletin: the ordered commitments plus a digest of the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bulletin {
    pub params_digest: String,
    pub commitments: Vec<Commitment>,
}

impl Bulletin {
    pub fn commitment(&self, index: usize) -> Option<&Commitment> {
        self.commitments.iter().find(|c| c.index == index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn share(index: usize, value: u64, modulus: u64) -> Share {
        Share::new(index, big(value), big(modulus))
    }

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(42)
    }

    fn values(d: &Dealing) -> Vec<u64> {
        d.shares.iter().map(|s| u64::try_from(&s.value).unwrap()).collect()
    }

    #[test]
    fn masked_split_with_forced_mask() {
        let params = ABParams::fixture();
        let (d, m) = split_masked_with_mask(&big(5), &big(100), &params, &mut rng()).unwrap();
        assert_eq!(m.lifted, big(705));
        assert_eq!(values(&d), vec![16, 41, 82]);
        for (s, c) in d.shares.iter().zip(&d.commitments) {
            assert!(verify_share(s, c).unwrap());
        }
    }

    #[test]
    fn masked_split_zero_secret_and_range() {
        let params = ABParams::fixture();
        let (_, m) = split_masked(&big(0), &params, &mut rng()).unwrap();
        assert!(m.mask >= big(1));
        assert_eq!(&m.lifted % big(7), big(0));
        assert_eq!(m.lifted, &m.mask * big(7));
        assert_eq!(split_masked(&big(7), &params, &mut rng()), Err(VssError::SecretOutOfRange));
    }

    #[test]
    fn mask_stays_in_range() {
        let params = ABParams::fixture();
        let mut r = rng();
        // (4399 - 1 - 6) / 7 = 627
        for _ in 0..500 {
            let (_, m) = split_masked(&big(6), &params, &mut r).unwrap();
            assert!(m.mask >= big(1) && m.mask <= big(627));
            assert!(m.lifted < big(4399));
        }
    }

    #[test]
    fn direct_split_examples() {
        let params = ABParams::fixture();
        assert_eq!(values(&split_direct(&big(60), &params, &mut rng()).unwrap()), vec![7, 60, 60]);
        assert_eq!(values(&split_direct(&big(0), &params, &mut rng()).unwrap()), vec![0, 0, 0]);
        assert_eq!(split_direct(&big(4399), &params, &mut rng()), Err(VssError::ValueExceedsCapacity));
    }

    #[test]
    fn commitment_examples() {
        let c = Commitment::with_generator(&share(1, 16, 53), &big(107), big(9)).unwrap();
        assert_eq!(c.z, big(13));
        let c0 = gen_commitment(&share(1, 0, 53), &big(107), &mut rng()).unwrap();
        assert_eq!(c0.z, big(1));
        assert_eq!(gen_commitment(&share(1, 16, 53), &big(106), &mut rng()), Err(VssError::BadVerificationPrime));
        // 9 is a square but 2 is not: 2^53 != 1 mod 107.
        assert!(Commitment::with_generator(&share(1, 16, 53), &big(107), big(2)).is_err());
    }

    #[test]
    fn verify_examples() {
        let c = Commitment { index: 1, p: big(107), g: big(9), z: big(13) };
        assert!(verify_share(&share(1, 16, 53), &c).unwrap());
        assert!(!verify_share(&share(1, 17, 53), &c).unwrap());
        let c0 = Commitment { index: 1, p: big(107), g: big(9), z: big(1) };
        assert!(verify_share(&share(1, 0, 53), &c0).unwrap());
        assert!(matches!(verify_share(&share(2, 16, 53), &c), Err(VssError::IndexMismatch { .. })));
    }

    #[test]
    fn reconstruct_examples() {
        let params = ABParams::fixture();
        let c12 = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let c13 = modmath::coalition_context(&params, &[1, 3]).unwrap();
        let r = reconstruct(&[share(1, 16, 53), share(2, 41, 83)], &c12, &big(7), SplitMode::Masked).unwrap();
        assert_eq!(r, (big(705), big(5)));
        let r = reconstruct(&[share(1, 16, 53), share(3, 82, 89)], &c13, &big(7), SplitMode::Masked).unwrap();
        assert_eq!(r, (big(705), big(5)));
        assert_eq!(
            reconstruct(&[share(1, 16, 53)], &c12, &big(7), SplitMode::Masked),
            Err(VssError::WrongCoalitionSize { expected: 2, got: 1 })
        );
    }

    #[test]
    fn share_arithmetic_examples() {
        assert_eq!(add_shares(&share(1, 16, 53), &share(1, 35, 53)).unwrap().value, big(51));
        assert_eq!(add_shares(&share(1, 16, 53), &share(1, 0, 53)).unwrap().value, big(16));
        assert_eq!(add_shares(&share(1, 16, 53), &share(1, 41, 83)), Err(VssError::ModulusMismatch));
        assert_eq!(mul_shares(&share(1, 7, 53), &share(1, 17, 53)).unwrap().value, big(13));
        assert_eq!(mul_shares(&share(1, 7, 53), &share(1, 1, 53)).unwrap().value, big(7));
        assert_eq!(mul_shares(&share(1, 7, 53), &share(2, 17, 83)), Err(VssError::ModulusMismatch));
    }

    #[test]
    fn product_protocol_examples() {
        let params = ABParams::fixture();
        let ctx = modmath::coalition_context(&params, &[1, 2]).unwrap();
        let mut r = rng();
        let a = split_direct(&big(60), &params, &mut r).unwrap();
        let b = split_direct(&big(70), &params, &mut r).unwrap();
        let bound = ProductBound { a_max: big(60), b_max: big(70) };
        let v1 = mul_shares(a.share(1).unwrap(), b.share(1).unwrap()).unwrap();
        let v2 = mul_shares(a.share(2).unwrap(), b.share(2).unwrap()).unwrap();
        assert_eq!((v1.value, v2.value), (big(13), big(50)));
        assert_eq!(shares_product_protocol(&a, &b, &ctx, &bound).unwrap(), big(4200));

        let zero = split_direct(&big(0), &params, &mut r).unwrap();
        let bound0 = ProductBound { a_max: big(0), b_max: big(70) };
        assert_eq!(shares_product_protocol(&zero, &b, &ctx, &bound0).unwrap(), big(0));

        let over = ProductBound { a_max: big(70), b_max: big(70) };
        assert_eq!(shares_product_protocol(&b, &b, &ctx, &over), Err(VssError::CapacityExceeded));
    }

    #[test]
    fn mixed_refresh_is_identity() {
        let params = ABParams::fixture();
        let (d, _) = split_masked_with_mask(&big(5), &big(100), &params, &mut rng()).unwrap();
        let mut r = rng();
        for k in [0, 3] {
            let out = refresh_mixed_demo(&d.shares, &params, k, &mut r).unwrap();
            assert_eq!(out.refreshed, d.shares, "k = {k}");
            assert_eq!(out.multiplicative.len(), k);
        }
        // A lone multiplicative or additive contributor would have to be 1 or 0.
        assert_eq!(refresh_mixed_demo(&d.shares, &params, 1, &mut r), Err(VssError::ConstraintUnsatisfiable));
        assert_eq!(refresh_mixed_demo(&d.shares, &params, 2, &mut r), Err(VssError::ConstraintUnsatisfiable));
        assert_eq!(refresh_mixed_demo(&d.shares, &params, 4, &mut r), Err(VssError::ConstraintUnsatisfiable));
    }

    #[test]
    fn ttp_refresh_examples() {
        let params = ABParams::fixture();
        let mut r = rng();
        let (d, m) = split_masked_with_mask(&big(5), &big(100), &params, &mut r).unwrap();
        let fresh = ABParams::new(big(7), vec![big(83), big(89), big(113)], 2).unwrap();
        let (nd, nm) = refresh_ttp(&d, &m, &fresh, &mut r).unwrap();
        assert_eq!(nm.secret, big(5));
        for pair in [[1, 2], [1, 3], [2, 3]] {
            let (_, s) = reconstruct_with(&nd.shares_for(&pair), &fresh, SplitMode::Masked).unwrap();
            assert_eq!(s, big(5));
        }
        let (_, same) = refresh_ttp(&d, &m, &params, &mut r).unwrap();
        assert_eq!(same.secret, big(5));

        let small = ABParams::new(big(3), vec![big(23), big(29), big(41)], 2).unwrap();
        assert_eq!(refresh_ttp(&d, &m, &small, &mut r), Err(VssError::InvalidNewParams));
    }

    #[test]
    fn share_file_format() {
        let s = share(1, 16, 53);
        let c = Commitment { index: 1, p: big(107), g: big(9), z: big(13) };
        let file = ShareFile::new(&s, &c, SplitMode::Masked);
        let json = serde_json::to_string(&file).unwrap();
        assert_eq!(
            json,
            r#"{"version":1,"index":1,"modulus":"35","value":"10","commitment":{"p":"6b","g":"9","z":"d"},"mode":"masked"}"#
        );
        let back: ShareFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.share(), s);
        assert_eq!(back.commitment(), c);
    }
}
