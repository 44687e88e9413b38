//! Threshold secure summation and zero-sum correlated noise.
//!
//! The aggregation protocol is simulated at the secret-sharing layer. Every
//! site quantizes its input, Shamir-shares each coordinate to all sites, and
//! each share-holder adds the shares it received. The aggregator then
//! interpolates the summed shares of any `t` surviving holders. Key agreement
//! and encryption are not modeled.

mod field;
mod shamir;
mod zero_sum;

pub use field::{dequantize, is_prime, quantize, FieldParams, PrimeField, MERSENNE_61};
pub use shamir::{lagrange_at_zero, reconstruct, share_secret, SecretShareSet, Share};
pub use zero_sum::{check_weights, generate_zero_sum, generate_zero_sum_weighted, ZeroSumNoise};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CapeError, Result};

/// Smallest admissible threshold for `sites` participants.
pub fn min_threshold(sites: usize) -> usize {
    2 * sites / 3 + 1
}

/// Protocol stages, recorded for message accounting only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    AdvertiseKeys,
    ShareKeys,
    MaskedInputCollection,
    Unmasking,
}

/// Message counts per stage of one secure-sum invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: Vec<(Stage, usize)>,
    pub survivors: Vec<usize>,
}

/// Threshold secure sum over `sites` participants.
#[derive(Debug, Clone, PartialEq)]
pub struct SecureSum {
    params: FieldParams,
    sites: usize,
    threshold: usize,
    dropped: Vec<usize>,
}

impl SecureSum {
    pub fn new(params: FieldParams, sites: usize, threshold: usize) -> Result<Self> {
        if sites == 0 || threshold > sites || threshold < min_threshold(sites) {
            return Err(CapeError::InvalidThreshold {
                threshold,
                total: sites,
            });
        }
        Ok(Self {
            params,
            sites,
            threshold,
            dropped: Vec::new(),
        })
    }

    /// Default field with the smallest admissible threshold.
    pub fn with_defaults(sites: usize) -> Result<Self> {
        Self::new(FieldParams::default(), sites, min_threshold(sites))
    }

    /// Marks share-holders (0-based) as dropped after the sharing round.
    pub fn with_dropouts(mut self, dropped: &[usize]) -> Result<Self> {
        if let Some(&bad) = dropped.iter().find(|&&d| d >= self.sites) {
            return Err(CapeError::ShapeMismatch(format!(
                "dropped site {bad} out of range for {} sites",
                self.sites
            )));
        }
        self.dropped = dropped.to_vec();
        self.dropped.sort_unstable();
        self.dropped.dedup();
        Ok(self)
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Upper bound on the per-element error of the dequantized sum.
    pub fn residual_bound(&self) -> f64 {
        self.sites as f64 / self.params.quant_scale() as f64
    }

    pub fn sum<R: Rng + ?Sized>(&self, inputs: &[&[f64]], rng: &mut R) -> Result<Vec<f64>> {
        self.sum_with_transcript(inputs, rng).map(|(s, _)| s)
    }

    pub fn sum_with_transcript<R: Rng + ?Sized>(
        &self,
        inputs: &[&[f64]],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Transcript)> {
        if inputs.len() != self.sites {
            return Err(CapeError::ShapeMismatch(format!(
                "expected {} inputs, got {}",
                self.sites,
                inputs.len()
            )));
        }
        let len = inputs.first().map_or(0, |x| x.len());
        if inputs.iter().any(|x| x.len() != len) {
            return Err(CapeError::ShapeMismatch("inputs differ in length".into()));
        }
        // The reconstructed sum must also fit in the signed range.
        let limit = self.params.max_magnitude();
        for i in 0..len {
            let total: f64 = inputs.iter().map(|x| x[i].abs()).sum::<f64>() + self.residual_bound();
            if total >= limit {
                return Err(CapeError::Overflow {
                    value: total,
                    limit,
                });
            }
        }

        let field = *self.params.field();
        let n = self.sites;
        let mut held = vec![vec![0u64; len]; n];
        for input in inputs {
            let q = quantize(input, &self.params, rng)?;
            for (i, &v) in q.iter().enumerate() {
                let set = share_secret(v, self.threshold, n, &field, rng)?;
                for (h, share) in set.shares.iter().enumerate() {
                    held[h][i] = field.add(held[h][i], share.value);
                }
            }
        }

        let survivors: Vec<usize> = (0..n).filter(|h| !self.dropped.contains(h)).collect();
        if survivors.len() < self.threshold {
            return Err(CapeError::InsufficientShares {
                needed: self.threshold,
                got: survivors.len(),
            });
        }
        let xs: Vec<u64> = survivors.iter().map(|&h| h as u64 + 1).collect();
        let weights = lagrange_at_zero(&xs, &field)?;
        let summed: Vec<u64> = (0..len)
            .map(|i| {
                survivors
                    .iter()
                    .zip(&weights)
                    .fold(0, |acc, (&h, &w)| field.add(acc, field.mul(held[h][i], w)))
            })
            .collect();

        let transcript = Transcript {
            rounds: vec![
                (Stage::AdvertiseKeys, n),
                (Stage::ShareKeys, n * (n - 1)),
                (Stage::MaskedInputCollection, n),
                (Stage::Unmasking, survivors.len()),
            ],
            survivors,
        };
        Ok((dequantize(&summed, &self.params), transcript))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_bounds() {
        assert_eq!(min_threshold(4), 3);
        assert_eq!(min_threshold(5), 4);
        assert_eq!(min_threshold(10), 7);
        let fp = FieldParams::default();
        assert!(SecureSum::new(fp, 4, 2).is_err());
        assert!(SecureSum::new(fp, 4, 5).is_err());
        assert!(SecureSum::new(fp, 4, 3).is_ok());
    }

    #[test]
    fn sum_matches_plain_sum() {
        let ss = SecureSum::with_defaults(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = [1.5, -2.0, 0.25];
        let b = [0.5, 3.0, -0.125];
        let c = [-1.0, 0.0, 10.0];
        let d = [0.0, -1.0, 0.0];
        let s = ss.sum(&[&a, &b, &c, &d], &mut rng).unwrap();
        for (i, v) in s.iter().enumerate() {
            let exact = a[i] + b[i] + c[i] + d[i];
            assert!((v - exact).abs() <= ss.residual_bound());
        }
    }

    #[test]
    fn dropouts_up_to_threshold_are_tolerated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<Vec<f64>> = (0..5).map(|s| vec![s as f64 * 0.5 - 1.0]).collect();
        let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
        let exact: f64 = inputs.iter().map(|v| v[0]).sum();
        let ss = SecureSum::new(FieldParams::default(), 5, 4).unwrap();
        for d in 0..5 {
            let (s, t) = ss
                .clone()
                .with_dropouts(&[d])
                .unwrap()
                .sum_with_transcript(&refs, &mut rng)
                .unwrap();
            assert!((s[0] - exact).abs() <= ss.residual_bound());
            assert_eq!(t.survivors.len(), 4);
        }
        let err = ss
            .with_dropouts(&[0, 3])
            .unwrap()
            .sum(&refs, &mut rng)
            .unwrap_err();
        assert_eq!(err, CapeError::InsufficientShares { needed: 4, got: 3 });
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let ss = SecureSum::with_defaults(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = [1.0];
        let b = [1.0, 2.0];
        assert!(ss.sum(&[&a, &a], &mut rng).is_err());
        assert!(ss.sum(&[&a, &a, &b], &mut rng).is_err());
    }
}
