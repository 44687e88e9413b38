//! Prime-field arithmetic and stochastic fixed-point quantization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{CapeError, Result};

/// Largest 61-bit prime, `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Integers modulo a prime below `2^63`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeField {
    modulus: u64,
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus >= 1 << 63 {
            return Err(CapeError::InvalidField(format!(
                "modulus {modulus} must be below 2^63"
            )));
        }
        if !is_prime(modulus) {
            return Err(CapeError::InvalidField(format!("{modulus} is not prime")));
        }
        Ok(Self { modulus })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        ((a as u128 + b as u128) % self.modulus as u128) as u64
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.add(a, self.modulus - b % self.modulus)
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        base %= self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem. `a` must be nonzero.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.modulus != 0);
        self.pow(a, self.modulus - 2)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.modulus)
    }
}

/// Field and fixed-point parameters for the secure sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    field: PrimeField,
    quant_scale: u64,
    lambda_bits: u32,
}

impl FieldParams {
    pub fn new(modulus: u64, quant_scale: u64, lambda_bits: u32) -> Result<Self> {
        let field = PrimeField::new(modulus)?;
        if lambda_bits >= 63 || modulus <= 1u64 << lambda_bits {
            return Err(CapeError::InvalidField(format!(
                "modulus {modulus} must exceed 2^{lambda_bits}"
            )));
        }
        if !quant_scale.is_power_of_two() || quant_scale < 1 << 20 {
            return Err(CapeError::InvalidField(format!(
                "quantization scale {quant_scale} must be a power of two >= 2^20"
            )));
        }
        if quant_scale >= modulus / 2 {
            return Err(CapeError::InvalidField(
                "quantization scale leaves no room in the field".into(),
            ));
        }
        Ok(Self {
            field,
            quant_scale,
            lambda_bits,
        })
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn modulus(&self) -> u64 {
        self.field.modulus
    }

    pub fn quant_scale(&self) -> u64 {
        self.quant_scale
    }

    pub fn lambda_bits(&self) -> u32 {
        self.lambda_bits
    }

    /// Largest real magnitude that quantizes without leaving the signed range.
    pub fn max_magnitude(&self) -> f64 {
        (self.modulus() / 2) as f64 / self.quant_scale as f64
    }

    fn embed(&self, k: i128) -> u64 {
        k.rem_euclid(self.modulus() as i128) as u64
    }

    fn signed(&self, y: u64) -> i128 {
        let q = self.modulus();
        let y = y % q;
        if y <= (q - 1) / 2 {
            y as i128
        } else {
            y as i128 - q as i128
        }
    }
}

impl Default for FieldParams {
    fn default() -> Self {
        Self::new(MERSENNE_61, 1 << 24, 60).expect("default field parameters are valid")
    }
}

/// Maps reals to field elements by unbiased stochastic rounding of
/// `x * quant_scale`: the value rounds up with probability equal to its
/// fractional part. Negative values use the signed embedding `q + k`.
pub fn quantize<R: Rng + ?Sized>(x: &[f64], fp: &FieldParams, rng: &mut R) -> Result<Vec<u64>> {
    let scale = fp.quant_scale as f64;
    let limit = (fp.modulus() / 2) as f64;
    x.iter()
        .map(|&v| {
            let scaled = v * scale;
            if !scaled.is_finite() || scaled.abs() >= limit {
                return Err(CapeError::Overflow {
                    value: v,
                    limit: fp.max_magnitude(),
                });
            }
            let floor = scaled.floor();
            let frac = scaled - floor;
            let up = rng.random::<f64>() < frac;
            let k = floor as i128 + i128::from(up);
            Ok(fp.embed(k))
        })
        .collect()
}

/// Inverts the signed embedding and divides by the quantization scale.
pub fn dequantize(y: &[u64], fp: &FieldParams) -> Vec<f64> {
    let scale = fp.quant_scale as f64;
    y.iter().map(|&v| fp.signed(v) as f64 / scale).collect()
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut r = 0;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for &a in &SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..r {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
