//! Reconstruction cost comparison between CRT and Shamir sharing.

use num_bigint::{BigUint, RandBigInt};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crt_vss::{self, SplitMode};
use crate::modmath::{self, MathError};
use crate::shamir_ref::{self, ShamirError};

/// Bits per CRT modulus; the Shamir field prime has `t` times as many.
pub const MODULUS_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Crt,
    Shamir,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub t: usize,
    pub mult_count: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("threshold must be at least 2, got {0}")]
    BadThreshold(usize),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    Vss(#[from] crt_vss::VssError),
    #[error(transparent)]
    Shamir(#[from] ShamirError),
    #[error("reconstruction returned the wrong secret for t = {0}")]
    WrongSecret(usize),
}

fn field_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let candidate = rng.gen_biguint(bits) | (BigUint::from(1u32) << (bits - 1)) | BigUint::from(1u32);
        if modmath::is_prime(&candidate) {
            return candidate;
        }
    }
}

/// Counts the multiplications of one `t`-of-`t` reconstruction in each
/// scheme over secrets of the same size.
pub fn measure<R: Rng + ?Sized>(t: usize, rng: &mut R) -> Result<[BenchRow; 2], BenchError> {
    if t < 2 {
        return Err(BenchError::BadThreshold(t));
    }
    let m0 = BigUint::from(65537u32);
    let params = modmath::gen_ab_params(t, t, &m0, MODULUS_BITS * t as u64, rng)?;
    let secret = rng.gen_biguint_below(&m0);
    let (dealing, _) = crt_vss::split_masked(&secret, &params, rng)?;
    let indices: Vec<usize> = params.indices().collect();
    let ctx = modmath::coalition_context(&params, &indices)?;
    let residues: Vec<_> = dealing.shares_for(&indices).iter().map(|s| s.residue()).collect();
    let mut crt = 0;
    let y = modmath::crt_reconstruct_counted(&residues, &ctx, &mut crt)?;
    let (_, recovered) = crt_vss::reconstruct(&dealing.shares_for(&indices), &ctx, &m0, SplitMode::Masked)?;
    if recovered != secret || &y % &m0 != secret {
        return Err(BenchError::WrongSecret(t));
    }

    let prime = field_prime(params.capacity().bits(), rng);
    let shamir_dealing = shamir_ref::shamir_split(&secret, t, t, &prime, rng)?;
    let xs: Vec<u64> = (1..=t as u64).collect();
    let mut shamir = 0;
    let s = shamir_ref::shamir_reconstruct_counted(&shamir_dealing.shares_at(&xs), &prime, &mut shamir)?;
    if s != secret {
        return Err(BenchError::WrongSecret(t));
    }
    Ok([BenchRow { scheme: Scheme::Crt, t, mult_count: crt }, BenchRow { scheme: Scheme::Shamir, t, mult_count: shamir }])
}

pub fn compare<R: Rng + ?Sized>(t_values: &[usize], rng: &mut R) -> Result<Vec<BenchRow>, BenchError> {
    let mut rows = Vec::with_capacity(2 * t_values.len());
    for &t in t_values {
        rows.extend(measure(t, rng)?);
    }
    Ok(rows)
}

/// Least-squares slope of `count = c t` and the largest relative deviation
/// of any point from that line.
pub fn linear_fit(points: &[(usize, u64)]) -> (f64, f64) {
    let sxy: f64 = points.iter().map(|&(t, c)| t as f64 * c as f64).sum();
    let sxx: f64 = points.iter().map(|&(t, _)| (t as f64).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let c = sxy / sxx;
    let worst = points.iter().map(|&(t, n)| ((n as f64 - c * t as f64) / (c * t as f64)).abs()).fold(0.0, f64::max);
    (c, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn counts_for_small_t() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rows = compare(&[2, 4], &mut rng).unwrap();
        let get = |s, t| rows.iter().find(|r| r.scheme == s && r.t == t).unwrap().mult_count;
        assert_eq!(get(Scheme::Crt, 2), 2);
        assert_eq!(get(Scheme::Crt, 4), 4);
        assert_eq!(get(Scheme::Shamir, 2), 8);
        assert_eq!(get(Scheme::Shamir, 4), 32);
        assert!(compare(&[], &mut rng).unwrap().is_empty());
        assert!(matches!(measure(1, &mut rng), Err(BenchError::BadThreshold(1))));
    }

    #[test]
    fn fit() {
        let (c, worst) = linear_fit(&[(2, 2), (4, 4), (8, 8)]);
        assert!((c - 1.0).abs() < 1e-12 && worst < 1e-12);
        let (_, worst) = linear_fit(&[(2, 8), (4, 32), (8, 128)]);
        assert!(worst > 0.2);
    }
}
