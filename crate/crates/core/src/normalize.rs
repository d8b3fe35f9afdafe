//! Whitening of coefficient and shape vectors against their training-set
//! statistics: a mean vector and a single scalar spread
//! `sigma = sqrt(mean_i ||x_i - mu||^2)`, applied as `(x - mu) / sigma`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

impl Normalizer {
    /// Fits mean and scalar spread over at least two vectors of equal
    /// length. A zero spread (all samples identical) is rejected as a
    /// degenerate population.
    pub fn fit(samples: &[&[f64]]) -> Result<Normalizer> {
        if samples.len() < 2 {
            return Err(Error::Degenerate(format!(
                "normalizer needs >= 2 samples, got {}",
                samples.len()
            )));
        }
        let dim = samples[0].len();
        for s in samples {
            if s.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: s.len(),
                });
            }
        }
        let n = samples.len() as f64;
        let mut mu = vec![0.0f64; dim];
        for s in samples {
            for (m, v) in mu.iter_mut().zip(*s) {
                *m += v;
            }
        }
        for m in mu.iter_mut() {
            *m /= n;
        }
        let mut mean_sq = 0.0f64;
        for s in samples {
            let mut d2 = 0.0;
            for (v, m) in s.iter().zip(&mu) {
                d2 += (v - m) * (v - m);
            }
            mean_sq += d2;
        }
        mean_sq /= n;
        let sigma = mean_sq.sqrt();
        if sigma == 0.0 {
            return Err(Error::Degenerate(
                "zero spread: all samples identical".into(),
            ));
        }
        Ok(Normalizer { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.mu.len() {
            return Err(Error::LengthMismatch {
                expected: self.mu.len(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(&self.mu)
            .map(|(v, m)| (v - m) / self.sigma)
            .collect())
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Result<Vec<f64>> {
        if normalized.len() != self.mu.len() {
            return Err(Error::LengthMismatch {
                expected: self.mu.len(),
                got: normalized.len(),
            });
        }
        Ok(normalized
            .iter()
            .zip(&self.mu)
            .map(|(v, m)| v * self.sigma + m)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_scalar_samples_hand_arithmetic() {
        // samples 0 and 2: mu = 1, sigma = sqrt((1 + 1) / 2) = 1,
        // normalized values -1 and +1.
        let a = [0.0];
        let b = [2.0];
        let n = Normalizer::fit(&[&a, &b]).unwrap();
        assert_eq!(n.mu, vec![1.0]);
        assert_eq!(n.sigma, 1.0);
        assert_eq!(n.normalize(&a).unwrap(), vec![-1.0]);
        assert_eq!(n.normalize(&b).unwrap(), vec![1.0]);
    }

    #[test]
    fn normalized_zero_denormalizes_to_mean() {
        let a = [1.0, 2.0];
        let b = [3.0, 6.0];
        let n = Normalizer::fit(&[&a, &b]).unwrap();
        let back = n.denormalize(&[0.0, 0.0]).unwrap();
        assert_eq!(back, n.mu);
    }

    #[test]
    fn identical_samples_rejected() {
        let a = [1.0, 1.0];
        assert!(Normalizer::fit(&[&a, &a]).is_err());
    }

    #[test]
    fn single_sample_rejected() {
        let a = [1.0];
        assert!(Normalizer::fit(&[&a]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            base in proptest::collection::vec(-100.0f64..100.0, 1..16),
            scale in 0.1f64..50.0,
        ) {
            // Build a non-degenerate two-sample population around `base`.
            let hi: Vec<f64> = base.iter().map(|v| v + scale).collect();
            let lo: Vec<f64> = base.iter().map(|v| v - scale).collect();
            let n = Normalizer::fit(&[&hi, &lo]).unwrap();
            for probe in [&hi, &lo, &base] {
                let rt = n.denormalize(&n.normalize(probe).unwrap()).unwrap();
                for (a, b) in rt.iter().zip(probe) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
                let rt2 = n.normalize(&n.denormalize(probe).unwrap()).unwrap();
                for (a, b) in rt2.iter().zip(probe) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }
}
