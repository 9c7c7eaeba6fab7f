//! Plain Shamir sharing over a prime field, kept as the comparison baseline
//! for the CRT scheme: naive Lagrange reconstruction with a multiplication
//! tally, zero-sum additive refresh and the BGW shares-product.

use std::collections::BTreeSet;

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::Rng;
use thiserror::Error;

use crate::modmath::{is_prime, mod_inverse};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShamirError {
    #[error("bad sharing parameters: {0}")]
    BadParams(String),
    #[error("evaluation point {0} appears more than once")]
    DuplicatePoint(u64),
    #[error("refresh secrets do not sum to zero")]
    ConstraintViolated,
    #[error("need at least {needed} shares, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("share sets do not line up")]
    Mismatch,
}

pub type Result<T> = std::result::Result<T, ShamirError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShamirShare {
    pub x: u64,
    pub y: BigUint,
    pub field_prime: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyDealing {
    pub degree: usize,
    pub field_prime: BigUint,
    pub shares: Vec<ShamirShare>,
    /// Field multiplications spent by reconstructions through this dealing.
    pub op_counter: u64,
}

impl PolyDealing {
    pub fn share(&self, x: u64) -> Option<&ShamirShare> {
        self.shares.iter().find(|s| s.x == x)
    }

    pub fn shares_at(&self, xs: &[u64]) -> Vec<ShamirShare> {
        xs.iter().filter_map(|&x| self.share(x).cloned()).collect()
    }

    /// Interpolates at zero from the shares at `xs`, charging the work to
    /// [`Self::op_counter`].
    pub fn reconstruct(&mut self, xs: &[u64]) -> Result<BigUint> {
        let shares = self.shares_at(xs);
        if shares.len() != xs.len() {
            return Err(ShamirError::Mismatch);
        }
        shamir_reconstruct_counted(&shares, &self.field_prime, &mut self.op_counter)
    }

    fn secret(&self) -> Result<BigUint> {
        let first: Vec<_> = self.shares.iter().take(self.degree + 1).cloned().collect();
        if first.len() < self.degree + 1 {
            return Err(ShamirError::InsufficientShares { needed: self.degree + 1, got: first.len() });
        }
        shamir_reconstruct(&first, &self.field_prime)
    }
}

fn eval(coeffs: &[BigUint], x: u64, prime: &BigUint) -> BigUint {
    let x = BigUint::from(x);
    coeffs.iter().rev().fold(BigUint::zero(), |acc, c| (acc * &x + c) % prime)
}

/// Shares the polynomial with the given coefficients (constant term first)
/// at `x = 1..=n`.
pub fn shamir_split_with_coeffs(coeffs: &[BigUint], n: usize, prime: &BigUint) -> Result<PolyDealing> {
    if coeffs.is_empty() {
        return Err(ShamirError::BadParams("empty polynomial".into()));
    }
    if !is_prime(prime) {
        return Err(ShamirError::BadParams(format!("{prime} is not prime")));
    }
    if BigUint::from(n) >= *prime {
        return Err(ShamirError::BadParams("n must be below the field prime".into()));
    }
    if coeffs.len() > n {
        return Err(ShamirError::BadParams("threshold exceeds share count".into()));
    }
    if coeffs.iter().any(|c| c >= prime) {
        return Err(ShamirError::BadParams("coefficient outside the field".into()));
    }
    let shares = (1..=n as u64).map(|x| ShamirShare { x, y: eval(coeffs, x, prime), field_prime: prime.clone() }).collect();
    Ok(PolyDealing { degree: coeffs.len() - 1, field_prime: prime.clone(), shares, op_counter: 0 })
}

/// Random degree-`(t - 1)` sharing of `secret` at `x = 1..=n`.
pub fn shamir_split<R: Rng + ?Sized>(secret: &BigUint, t: usize, n: usize, prime: &BigUint, rng: &mut R) -> Result<PolyDealing> {
    if t == 0 || t > n {
        return Err(ShamirError::BadParams(format!("need 1 <= t <= n, got t = {t}, n = {n}")));
    }
    if secret >= prime {
        return Err(ShamirError::BadParams("secret outside the field".into()));
    }
    let mut coeffs = vec![secret.clone()];
    coeffs.extend((1..t).map(|_| rng.gen_biguint_below(prime)));
    shamir_split_with_coeffs(&coeffs, n, prime)
}

pub fn shamir_reconstruct(shares: &[ShamirShare], prime: &BigUint) -> Result<BigUint> {
    let mut mults = 0;
    shamir_reconstruct_counted(shares, prime, &mut mults)
}

/// Naive Lagrange interpolation at zero. Each term costs `t - 1`
/// multiplications for the numerator, `t - 1` for the denominator, one to
/// apply the inverted denominator and one to scale by `y_i`, so the total is
/// `2 t^2`.
pub fn shamir_reconstruct_counted(shares: &[ShamirShare], prime: &BigUint, mults: &mut u64) -> Result<BigUint> {
    if shares.is_empty() {
        return Err(ShamirError::InsufficientShares { needed: 1, got: 0 });
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.x) {
            return Err(ShamirError::DuplicatePoint(s.x));
        }
        if s.field_prime != *prime {
            return Err(ShamirError::Mismatch);
        }
    }
    let xs: Vec<BigUint> = shares.iter().map(|s| BigUint::from(s.x) % prime).collect();
    let mut acc = BigUint::zero();
    for (i, share) in shares.iter().enumerate() {
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for (j, xj) in xs.iter().enumerate() {
            if i == j {
                continue;
            }
            num = num * xj % prime;
            den = den * ((xj + prime - &xs[i]) % prime) % prime;
            *mults += 2;
        }
        let inv = mod_inverse(&den, prime).map_err(|_| ShamirError::DuplicatePoint(share.x))?;
        let coeff = num * inv % prime;
        acc = (acc + &share.y * coeff) % prime;
        *mults += 2;
    }
    Ok(acc)
}

/// Additive refresh: participant `i` shares `w_i` through `refresh[i]`;
/// the `w_i` must sum to zero. Share `j` becomes `S_j + sum_i w_ij`.
pub fn shamir_refresh(refresh: &[PolyDealing], shares: &[ShamirShare]) -> Result<Vec<ShamirShare>> {
    let prime = match shares.first() {
        Some(s) => s.field_prime.clone(),
        None => return Ok(Vec::new()),
    };
    let mut total = BigUint::zero();
    for d in refresh {
        if d.field_prime != prime {
            return Err(ShamirError::Mismatch);
        }
        total = (total + d.secret()?) % &prime;
    }
    if !total.is_zero() {
        return Err(ShamirError::ConstraintViolated);
    }
    shares
        .iter()
        .map(|s| {
            let mut y = s.y.clone();
            for d in refresh {
                y += &d.share(s.x).ok_or(ShamirError::Mismatch)?.y;
            }
            Ok(ShamirShare { x: s.x, y: y % &prime, field_prime: prime.clone() })
        })
        .collect()
}

/// BGW product: members exchange `v_i = a_i b_i + c_i` where `c` shares zero,
/// then interpolate the degree-`2t - 2` product polynomial from `2t - 1`
/// points.
pub fn bgw_product(deal_a: &PolyDealing, deal_b: &PolyDealing, deal_c: &PolyDealing, xs: &[u64]) -> Result<BigUint> {
    if deal_a.field_prime != deal_b.field_prime || deal_a.field_prime != deal_c.field_prime {
        return Err(ShamirError::Mismatch);
    }
    let product_degree = deal_a.degree + deal_b.degree;
    if deal_c.degree > product_degree {
        return Err(ShamirError::BadParams("refresh polynomial degree too high".into()));
    }
    let needed = product_degree + 1;
    if xs.len() < needed {
        return Err(ShamirError::InsufficientShares { needed, got: xs.len() });
    }
    let prime = &deal_a.field_prime;
    let v = xs[..needed]
        .iter()
        .map(|&x| {
            let a = deal_a.share(x).ok_or(ShamirError::Mismatch)?;
            let b = deal_b.share(x).ok_or(ShamirError::Mismatch)?;
            let c = deal_c.share(x).ok_or(ShamirError::Mismatch)?;
            Ok(ShamirShare { x, y: (&a.y * &b.y + &c.y) % prime, field_prime: prime.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    shamir_reconstruct(&v, prime)
}
