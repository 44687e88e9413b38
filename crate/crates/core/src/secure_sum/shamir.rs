//! Shamir secret sharing over a prime field.

use rand::Rng;

use super::field::PrimeField;
use crate::{CapeError, Result};

/// One evaluation point of a sharing polynomial. `holder` is the 1-based
/// x-coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub holder: u64,
    pub value: u64,
}

/// All `total` shares of a secret with reconstruction threshold `threshold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretShareSet {
    pub shares: Vec<Share>,
    pub threshold: usize,
}

impl SecretShareSet {
    pub fn total(&self) -> usize {
        self.shares.len()
    }

    /// Shares held by the given 0-based positions.
    pub fn subset(&self, positions: &[usize]) -> Vec<Share> {
        positions.iter().map(|&i| self.shares[i]).collect()
    }

    /// Pointwise sum of two sharings with the same holders. The result shares
    /// the sum of the secrets.
    pub fn add(&self, other: &Self, field: &PrimeField) -> Result<Self> {
        if self.shares.len() != other.shares.len() || self.threshold != other.threshold {
            return Err(CapeError::ShapeMismatch("share sets differ in layout".into()));
        }
        let shares = self
            .shares
            .iter()
            .zip(&other.shares)
            .map(|(a, b)| {
                debug_assert_eq!(a.holder, b.holder);
                Share {
                    holder: a.holder,
                    value: field.add(a.value, b.value),
                }
            })
            .collect();
        Ok(Self {
            shares,
            threshold: self.threshold,
        })
    }

    pub fn reconstruct(&self, field: &PrimeField) -> Result<u64> {
        reconstruct(&self.shares, self.threshold, field)
    }
}

fn check_threshold(threshold: usize, total: usize, field: &PrimeField) -> Result<()> {
    if threshold == 0 || threshold > total || total as u64 >= field.modulus() {
        return Err(CapeError::InvalidThreshold { threshold, total });
    }
    Ok(())
}

/// Splits `secret` into `total` shares using a random polynomial of degree
/// `threshold - 1` evaluated at `x = 1..=total`.
pub fn share_secret<R: Rng + ?Sized>(
    secret: u64,
    threshold: usize,
    total: usize,
    field: &PrimeField,
    rng: &mut R,
) -> Result<SecretShareSet> {
    check_threshold(threshold, total, field)?;
    let mut coeffs = Vec::with_capacity(threshold);
    coeffs.push(secret % field.modulus());
    for _ in 1..threshold {
        coeffs.push(field.random(rng));
    }
    let shares = (1..=total as u64)
        .map(|x| Share {
            holder: x,
            value: eval_poly(&coeffs, x, field),
        })
        .collect();
    Ok(SecretShareSet { shares, threshold })
}

fn eval_poly(coeffs: &[u64], x: u64, field: &PrimeField) -> u64 {
    coeffs
        .iter()
        .rev()
        .fold(0, |acc, &c| field.add(field.mul(acc, x), c))
}

/// Lagrange basis weights for interpolating at zero from the points `xs`.
pub fn lagrange_at_zero(xs: &[u64], field: &PrimeField) -> Result<Vec<u64>> {
    let q = field.modulus();
    for (i, &a) in xs.iter().enumerate() {
        if a % q == 0 || xs[..i].iter().any(|&b| b % q == a % q) {
            return Err(CapeError::InvalidField(format!(
                "evaluation points must be distinct and nonzero, got {a}"
            )));
        }
    }
    Ok(xs
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut num = 1;
            let mut den = 1;
            for (m, &xm) in xs.iter().enumerate() {
                if m != j {
                    num = field.mul(num, xm);
                    den = field.mul(den, field.sub(xm, xj));
                }
            }
            field.mul(num, field.inv(den))
        })
        .collect())
}

/// Recovers the secret from at least `threshold` shares with distinct holders.
pub fn reconstruct(shares: &[Share], threshold: usize, field: &PrimeField) -> Result<u64> {
    if shares.len() < threshold {
        return Err(CapeError::InsufficientShares {
            needed: threshold,
            got: shares.len(),
        });
    }
    let xs: Vec<u64> = shares.iter().map(|s| s.holder).collect();
    let weights = lagrange_at_zero(&xs, field)?;
    Ok(shares
        .iter()
        .zip(weights)
        .fold(0, |acc, (s, w)| field.add(acc, field.mul(s.value, w))))
}
