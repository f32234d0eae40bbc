//! Per-primitive Bernoulli dropout masks.
//!
//! Every mask carries its own 64-bit seed: drawing a mask from a training
//! generator first draws that seed, then expands it with a fresh ChaCha8
//! stream. A mask is therefore a pure function of `(n, rate, seed)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Identifier of the generator family used for masks and training streams.
pub const RNG_NAME: &str = "chacha8-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub rate: f64,
    pub seed: u64,
}

impl DropoutMask {
    pub fn all_kept(n: usize) -> Self {
        Self {
            keep: vec![true; n],
            rate: 0.0,
            seed: 0,
        }
    }

    pub fn from_seed(n: usize, rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // u in [0,1): rate 0 keeps everything, rate 1 drops everything.
        let keep = (0..n).map(|_| rng.gen::<f64>() >= rate).collect();
        Ok(Self { keep, rate, seed })
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.keep[i]
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidRate(rate))
    }
}

/// Draws a mask seed from `rng` and expands it into `n` keep bits.
pub fn sample_mask(n: usize, rate: f64, rng: &mut impl RngCore) -> Result<DropoutMask> {
    check_rate(rate)?;
    let seed = rng.next_u64();
    DropoutMask::from_seed(n, rate, seed)
}

/// Survivor opacity multiplier: `1/(1-rate)` when enabled, else 1.
pub fn compensation_factor(rate: f64, enabled: bool) -> Result<f64> {
    check_rate(rate)?;
    if !enabled {
        return Ok(1.0);
    }
    if rate >= 1.0 {
        return Err(Error::InvalidRate(rate));
    }
    Ok(1.0 / (1.0 - rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_mask(100, 0.0, &mut rng).unwrap().kept_count(), 100);
        assert_eq!(sample_mask(100, 1.0, &mut rng).unwrap().kept_count(), 0);
        assert!(matches!(sample_mask(3, 1.5, &mut rng), Err(Error::InvalidRate(_))));
        assert!(sample_mask(3, -0.1, &mut rng).is_err());
        assert!(sample_mask(0, 0.3, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn kept_fraction_within_binomial_bound() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = sample_mask(n, 0.1, &mut rng).unwrap();
        let frac = m.kept_count() as f64 / n as f64;
        let bound = 3.0 * (0.09f64 / n as f64).sqrt();
        assert!((frac - 0.9).abs() <= bound, "kept fraction {frac}");
    }

    #[test]
    fn reseeding_reproduces_and_successive_masks_differ() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a1 = sample_mask(200, 0.1, &mut r1).unwrap();
            let b1 = sample_mask(200, 0.1, &mut r1).unwrap();
            let a2 = sample_mask(200, 0.1, &mut r2).unwrap();
            let b2 = sample_mask(200, 0.1, &mut r2).unwrap();
            assert_eq!((&a1, &b1), (&a2, &b2));
            assert_ne!(a1.keep, b1.keep);
        }
        let m = DropoutMask::from_seed(64, 0.3, 99).unwrap();
        assert_eq!(m, DropoutMask::from_seed(64, 0.3, 99).unwrap());
    }

    #[test]
    fn compensation() {
        assert_eq!(compensation_factor(0.0, true).unwrap(), 1.0);
        assert_eq!(compensation_factor(0.7, false).unwrap(), 1.0);
        assert_eq!(compensation_factor(0.5, true).unwrap(), 2.0);
        assert!(matches!(compensation_factor(1.0, true), Err(Error::InvalidRate(_))));
    }
}
