//! Modular arithmetic kernel: inverses, Miller-Rabin, CRT reconstruction and
//! Asmuth-Bloom parameter generation.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hexint;

/// Miller-Rabin rounds used for every primality decision in the crate.
pub const PRIMALITY_ROUNDS: u32 = 64;

/// Candidate sets tried by [`gen_ab_params`] before giving up.
pub const PARAM_SEARCH_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MathError {
    #[error("{value} is not invertible modulo {modulus}")]
    NotInvertible { value: BigUint, modulus: BigUint },
    #[error("residues do not match the coalition context")]
    IndexMismatch,
    #[error("coalition must have exactly {expected} members, got {got}")]
    WrongCoalitionSize { expected: usize, got: usize },
    #[error("participant index {0} appears more than once")]
    DuplicateIndex(usize),
    #[error("participant index {0} is out of range")]
    BadIndex(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no parameter set found after {0} candidate sets")]
    SearchExhausted(usize),
}

pub type Result<T> = std::result::Result<T, MathError>;

/// Returns `x` in `[1, m)` with `a * x = 1 (mod m)`.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Result<BigUint> {
    let not_invertible = || MathError::NotInvertible { value: a.clone(), modulus: m.clone() };
    if *m < BigUint::from(2u32) {
        return Err(not_invertible());
    }
    let m_signed = BigInt::from_biguint(Sign::Plus, m.clone());
    let a_signed = BigInt::from_biguint(Sign::Plus, a % m);
    let ext = a_signed.extended_gcd(&m_signed);
    if !ext.gcd.is_one() {
        return Err(not_invertible());
    }
    let x = ext.x.mod_floor(&m_signed);
    Ok(x.to_biguint().expect("mod_floor result is non-negative"))
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127,
    131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

// Sufficient for a deterministic answer below 3.3e24.
const DETERMINISTIC_WITNESSES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Miller-Rabin test. Inputs below 2^64 use a fixed witness set and are
/// answered exactly; larger inputs use `rounds` witnesses drawn from a
/// generator seeded by the candidate itself, so the answer is a pure function
/// of `(x, rounds)`.
pub fn is_probable_prime(x: &BigUint, rounds: u32) -> bool {
    if let Some(small) = x.to_u32() {
        if small < 2 {
            return false;
        }
        if SMALL_PRIMES.contains(&small) {
            return true;
        }
    }
    for p in SMALL_PRIMES {
        if (x % p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let x_minus_one = x - &one;
    let shift = x_minus_one.trailing_zeros().expect("x > 2 so x - 1 > 0");
    let odd_part = &x_minus_one >> shift;

    let passes = |witness: &BigUint| -> bool {
        let mut y = witness.modpow(&odd_part, x);
        if y.is_one() || y == x_minus_one {
            return true;
        }
        for _ in 1..shift {
            y = (&y * &y) % x;
            if y == x_minus_one {
                return true;
            }
            if y.is_one() {
                return false;
            }
        }
        false
    };

    if x.bits() <= 64 {
        return DETERMINISTIC_WITNESSES.iter().all(|&w| passes(&BigUint::from(w)));
    }
    let seed: [u8; 32] = Sha256::digest(x.to_bytes_le()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    let two = BigUint::from(2u32);
    (0..rounds).all(|_| passes(&rng.gen_biguint_range(&two, &x_minus_one)))
}

/// Primality with the crate-wide round count.
pub fn is_prime(x: &BigUint) -> bool {
    is_probable_prime(x, PRIMALITY_ROUNDS)
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    #[serde(with = "hexint")]
    m0: BigUint,
    #[serde(with = "hexint::vec")]
    moduli: Vec<BigUint>,
    #[serde(with = "hexint::vec")]
    verif_primes: Vec<BigUint>,
    t: usize,
    n: usize,
}

/// An Asmuth-Bloom modulus system with verification primes `p_i = 2 m_i + 1`.
///
/// Construction always goes through [`ABParams::new`] (or deserialization,
/// which calls it), so a value of this type satisfies every invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct ABParams {
    m0: BigUint,
    moduli: Vec<BigUint>,
    verif_primes: Vec<BigUint>,
    t: usize,
    capacity: BigUint,
}

impl TryFrom<ParamsFile> for ABParams {
    type Error = MathError;

    fn try_from(file: ParamsFile) -> Result<Self> {
        if file.n != file.moduli.len() {
            return Err(MathError::InvalidParams(format!("n = {} but {} moduli listed", file.n, file.moduli.len())));
        }
        let params = ABParams::new(file.m0, file.moduli, file.t)?;
        if params.verif_primes != file.verif_primes {
            return Err(MathError::InvalidParams("verification primes are not 2m+1".into()));
        }
        Ok(params)
    }
}

impl From<ABParams> for ParamsFile {
    fn from(p: ABParams) -> Self {
        ParamsFile { n: p.moduli.len(), m0: p.m0, moduli: p.moduli, verif_primes: p.verif_primes, t: p.t }
    }
}

impl ABParams {
    /// Builds and validates a parameter set from `m0`, the share moduli
    /// (ascending) and the threshold.
    pub fn new(m0: BigUint, moduli: Vec<BigUint>, t: usize) -> Result<Self> {
        let verif_primes = moduli.iter().map(|m| (m << 1) + 1u32).collect();
        let capacity = moduli.iter().take(t).product();
        let params = ABParams { m0, moduli, verif_primes, t, capacity };
        params.validate()?;
        Ok(params)
    }

    /// The desk-scale fixture `{m0 = 7, moduli 53/83/89, t = 2}`.
    pub fn fixture() -> Self {
        Self::new(BigUint::from(7u32), vec![BigUint::from(53u32), BigUint::from(83u32), BigUint::from(89u32)], 2)
            .expect("fixture parameters are valid")
    }

    /// Checks every Asmuth-Bloom and verification-prime condition.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(MathError::InvalidParams(msg));
        let n = self.moduli.len();
        if self.t < 2 || self.t > n {
            return fail(format!("threshold must satisfy 2 <= t <= n, got t = {}, n = {n}", self.t));
        }
        if !is_prime(&self.m0) {
            return fail(format!("m0 = {} is not prime", self.m0));
        }
        if self.moduli.windows(2).any(|w| w[0] >= w[1]) {
            return fail("moduli are not strictly increasing".into());
        }
        for (m, p) in self.moduli.iter().zip(&self.verif_primes) {
            if !is_prime(m) {
                return fail(format!("modulus {m} is not prime"));
            }
            if *m == self.m0 {
                return fail(format!("modulus {m} equals m0"));
            }
            if *p != (m << 1) + 1u32 || !is_prime(p) {
                return fail(format!("2 * {m} + 1 is not prime"));
            }
        }
        let largest: BigUint = self.moduli.iter().rev().take(self.t - 1).product();
        if self.capacity <= &self.m0 * &self.m0 * largest {
            return fail("Asmuth-Bloom condition fails".into());
        }
        Ok(())
    }

    pub fn m0(&self) -> &BigUint {
        &self.m0
    }

    pub fn moduli(&self) -> &[BigUint] {
        &self.moduli
    }

    pub fn verif_primes(&self) -> &[BigUint] {
        &self.verif_primes
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.moduli.len()
    }

    /// Product of the `t` smallest moduli.
    pub fn capacity(&self) -> &BigUint {
        &self.capacity
    }

    /// Modulus of participant `index` (1-based).
    pub fn modulus(&self, index: usize) -> Result<&BigUint> {
        index.checked_sub(1).and_then(|i| self.moduli.get(i)).ok_or(MathError::BadIndex(index))
    }

    pub fn verif_prime(&self, index: usize) -> Result<&BigUint> {
        index.checked_sub(1).and_then(|i| self.verif_primes.get(i)).ok_or(MathError::BadIndex(index))
    }

    /// SHA-256 over the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("params serialize");
        hex::encode(Sha256::digest(json))
    }

    /// All participant indices, 1-based.
    pub fn indices(&self) -> impl Iterator<Item = usize> {
        1..=self.moduli.len()
    }
}

/// Precomputed CRT data for one coalition of `t` participants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionContext {
    indices: Vec<usize>,
    moduli: Vec<BigUint>,
    m_c: BigUint,
    lambdas: Vec<BigUint>,
}

impl CoalitionContext {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn moduli(&self) -> &[BigUint] {
        &self.moduli
    }

    /// Product of the coalition's moduli.
    pub fn m_c(&self) -> &BigUint {
        &self.m_c
    }

    /// `lambda_i = M'_{C,i} * M_{C\{i}}`, aligned with [`Self::indices`].
    pub fn lambdas(&self) -> &[BigUint] {
        &self.lambdas
    }

    pub fn position(&self, index: usize) -> Option<usize> {
        self.indices.iter().position(|&i| i == index)
    }

    pub fn lambda(&self, index: usize) -> Option<&BigUint> {
        self.position(index).map(|p| &self.lambdas[p])
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Builds the CRT coefficients for coalition `indices` (1-based, size `t`).
pub fn coalition_context(params: &ABParams, indices: &[usize]) -> Result<CoalitionContext> {
    if indices.len() != params.t() {
        return Err(MathError::WrongCoalitionSize { expected: params.t(), got: indices.len() });
    }
    context_for(params, indices)
}

/// Like [`coalition_context`] but accepts any non-empty coalition size. Used
/// where more than `t` shares are combined (e.g. refreshed or oversized sets).
pub fn context_for(params: &ABParams, indices: &[usize]) -> Result<CoalitionContext> {
    let mut seen = BTreeSet::new();
    for &i in indices {
        params.modulus(i)?;
        if !seen.insert(i) {
            return Err(MathError::DuplicateIndex(i));
        }
    }
    let moduli: Vec<BigUint> = indices.iter().map(|&i| params.modulus(i).cloned()).collect::<Result<_>>()?;
    context_from_moduli(indices.to_vec(), moduli)
}

/// Coalition context over explicit pairwise-coprime moduli.
pub fn context_from_moduli(indices: Vec<usize>, moduli: Vec<BigUint>) -> Result<CoalitionContext> {
    if indices.is_empty() || indices.len() != moduli.len() {
        return Err(MathError::IndexMismatch);
    }
    let m_c: BigUint = moduli.iter().product();
    let lambdas = moduli
        .iter()
        .map(|m| {
            let others = &m_c / m;
            let inv = mod_inverse(&others, m)?;
            Ok(inv * others)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoalitionContext { indices, moduli, m_c, lambdas })
}

/// Reconstructs `y = sum value_i * lambda_i (mod M_C)`.
pub fn crt_reconstruct(residues: &[(BigUint, BigUint)], ctx: &CoalitionContext) -> Result<BigUint> {
    let mut mults = 0;
    crt_reconstruct_counted(residues, ctx, &mut mults)
}

/// [`crt_reconstruct`] that adds the number of big-integer multiplications
/// performed to `mults`.
pub fn crt_reconstruct_counted(residues: &[(BigUint, BigUint)], ctx: &CoalitionContext, mults: &mut u64) -> Result<BigUint> {
    if residues.len() != ctx.len() {
        return Err(MathError::IndexMismatch);
    }
    let mut acc = BigUint::zero();
    for ((value, modulus), (ctx_modulus, lambda)) in residues.iter().zip(ctx.moduli.iter().zip(&ctx.lambdas)) {
        if modulus != ctx_modulus || value >= modulus {
            return Err(MathError::IndexMismatch);
        }
        acc += value * lambda;
        *mults += 1;
    }
    Ok(acc % &ctx.m_c)
}

fn is_sophie_germain(m: &BigUint) -> bool {
    is_prime(m) && is_prime(&((m << 1) + 1u32))
}

/// Searches for a valid Asmuth-Bloom system whose capacity has at least
/// `min_capacity_bits` bits.
///
/// Each candidate set is the run of `n` consecutive Sophie Germain primes of a
/// common bit length above a random start. Consecutive primes keep the spread
/// of the moduli small, which is what the Asmuth-Bloom inequality needs.
pub fn gen_ab_params<R: Rng + ?Sized>(t: usize, n: usize, m0: &BigUint, min_capacity_bits: u64, rng: &mut R) -> Result<ABParams> {
    if t < 2 || t > n {
        return Err(MathError::InvalidParams(format!("threshold must satisfy 2 <= t <= n, got t = {t}, n = {n}")));
    }
    if !is_prime(m0) {
        return Err(MathError::InvalidParams(format!("m0 = {m0} is not prime")));
    }
    let t_bits = t as u64;
    let base_len = (min_capacity_bits.saturating_sub(1)).div_ceil(t_bits) + 1;
    let mut bit_len = base_len.max(2 * m0.bits() + 2);
    for attempt in 0..PARAM_SEARCH_ATTEMPTS {
        // Widen the window if a length keeps failing (very large t).
        if attempt > 0 && attempt % 1_000 == 0 {
            bit_len += 1;
        }
        let low = BigUint::one() << (bit_len - 1);
        let high = BigUint::one() << bit_len;
        let mut candidate = rng.gen_biguint_range(&low, &high) | BigUint::one();
        let mut moduli = Vec::with_capacity(n);
        while moduli.len() < n {
            if candidate != *m0 && is_sophie_germain(&candidate) {
                moduli.push(candidate.clone());
            }
            candidate += 2u32;
        }
        let capacity: BigUint = moduli.iter().take(t).product();
        if capacity.bits() < min_capacity_bits {
            continue;
        }
        if let Ok(params) = ABParams::new(m0.clone(), moduli, t) {
            return Ok(params);
        }
    }
    Err(MathError::SearchExhausted(PARAM_SEARCH_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn trial_division(x: u64) -> bool {
        x >= 2 && (2..).take_while(|d| d * d <= x).all(|d| !x.is_multiple_of(d))
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(mod_inverse(&big(1), &big(7)).unwrap(), big(1));
        let inv = mod_inverse(&big(83), &big(53)).unwrap();
        assert_eq!(inv, big(23));
        assert_eq!((big(83) * inv) % big(53), big(1));
        assert!(matches!(mod_inverse(&big(6), &big(9)), Err(MathError::NotInvertible { .. })));
        assert!(mod_inverse(&big(1), &big(1)).is_err());
    }

    #[test]
    fn primality_matches_trial_division() {
        assert!(is_prime(&big(107)));
        assert!(!is_prime(&big(27)));
        assert!(!is_prime(&big(1)));
        assert!(!is_prime(&big(0)));
        for x in 0..5_000u64 {
            assert_eq!(is_prime(&big(x)), trial_division(x), "x = {x}");
        }
        // Carmichael numbers and a strong pseudoprime to base 2.
        for c in [561u64, 1105, 1729, 2047, 3_215_031_751] {
            assert!(!is_prime(&big(c)));
        }
    }

    #[test]
    fn primality_large() {
        let mersenne_127 = (BigUint::one() << 127) - 1u32;
        assert!(is_prime(&mersenne_127));
        assert!(!is_prime(&(&mersenne_127 * &mersenne_127)));
        let p = BigUint::parse_bytes(b"fffffffffffffffffffffffffffffffffffffffffffffffffffffffefffffc2f", 16).unwrap();
        assert!(is_prime(&p));
        assert!(!is_prime(&(&p + 2u32)));
    }

    #[test]
    fn fixture_params_are_valid() {
        let p = ABParams::fixture();
        assert_eq!(p.capacity(), &big(4399));
        assert_eq!(p.verif_primes(), &[big(107), big(167), big(179)]);
    }

    #[test]
    fn params_rejections() {
        let m = |v: &[u64]| v.iter().map(|&x| big(x)).collect::<Vec<_>>();
        assert!(ABParams::new(big(7), m(&[53, 83, 89]), 4).is_err());
        assert!(ABParams::new(big(7), m(&[53, 83, 89]), 1).is_err());
        assert!(ABParams::new(big(8), m(&[53, 83, 89]), 2).is_err());
        assert!(ABParams::new(big(7), m(&[83, 53, 89]), 2).is_err());
        // 59 is prime but 119 = 7 * 17 is not.
        assert!(ABParams::new(big(7), m(&[53, 59, 83]), 2).is_err());
        // Asmuth-Bloom inequality: 11 * 23 = 253 < 49 * 29.
        assert!(ABParams::new(big(7), m(&[11, 23, 29]), 2).is_err());
    }

    #[test]
    fn coalition_examples() {
        let p = ABParams::fixture();
        let c = coalition_context(&p, &[1, 2]).unwrap();
        assert_eq!(c.m_c(), &big(4399));
        assert_eq!(c.lambdas(), &[big(1909), big(2491)]);
        let c = coalition_context(&p, &[1, 3]).unwrap();
        assert_eq!(c.m_c(), &big(4717));
        assert_eq!(c.lambdas(), &[big(2492), big(2226)]);
        assert_eq!(coalition_context(&p, &[1]), Err(MathError::WrongCoalitionSize { expected: 2, got: 1 }));
        assert_eq!(coalition_context(&p, &[2, 2]), Err(MathError::DuplicateIndex(2)));
        assert_eq!(coalition_context(&p, &[1, 4]), Err(MathError::BadIndex(4)));
    }

    #[test]
    fn reconstruct_examples() {
        let p = ABParams::fixture();
        let c12 = coalition_context(&p, &[1, 2]).unwrap();
        let c13 = coalition_context(&p, &[1, 3]).unwrap();
        assert_eq!(crt_reconstruct(&[(big(16), big(53)), (big(41), big(83))], &c12).unwrap(), big(705));
        assert_eq!(crt_reconstruct(&[(big(0), big(53)), (big(0), big(83))], &c12).unwrap(), big(0));
        assert_eq!(crt_reconstruct(&[(big(16), big(53)), (big(82), big(89))], &c13).unwrap(), big(705));
        assert_eq!(crt_reconstruct(&[(big(16), big(53)), (big(82), big(89))], &c12), Err(MathError::IndexMismatch));
        assert_eq!(crt_reconstruct(&[(big(16), big(53))], &c12), Err(MathError::IndexMismatch));
    }

    #[test]
    fn generated_params_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let p = gen_ab_params(2, 3, &big(7), 12, &mut rng).unwrap();
        assert!(p.capacity().bits() >= 12);
        p.validate().unwrap();
        let p = gen_ab_params(2, 2, &big(7), 12, &mut rng).unwrap();
        assert_eq!(p.n(), 2);
        assert!(gen_ab_params(3, 2, &big(7), 12, &mut rng).is_err());
        assert!(gen_ab_params(2, 3, &big(9), 12, &mut rng).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_ab_params(3, 5, &big(65_537), 64, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
        let b = gen_ab_params(3, 5, &big(65_537), 64, &mut ChaCha20Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn large_threshold_generation() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = gen_ab_params(32, 32, &big(65_537), 64, &mut rng).unwrap();
        assert_eq!(p.t(), 32);
    }

    #[test]
    fn params_file_round_trip_and_validation() {
        let p = ABParams::fixture();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"m0":"7","moduli":["35","53","59"],"verif_primes":["6b","a7","b3"],"t":2,"n":3}"#);
        assert_eq!(serde_json::from_str::<ABParams>(&json).unwrap(), p);
        let bad = json.replace("\"59\"", "\"5a\"");
        assert!(serde_json::from_str::<ABParams>(&bad).is_err());
    }
}
