//! Seeded randomness: seed derivation and multinomial draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a job identified by `tags`, independent of scheduling.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(root), |acc, &t| {
        splitmix64(acc.wrapping_mul(0xd1b5_4a32_d192_ed03) ^ t)
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws multinomial count vectors from a fixed categorical distribution.
///
/// Sample sizes below four draws per category use per-draw alias
/// sampling; large ones walk the categories with conditional binomials.
pub struct MultinomialSampler {
    alias: WeightedAliasIndex<f64>,
    /// `cond[i] = p_i / sum_{j >= i} p_j`.
    cond: Vec<f64>,
}

impl MultinomialSampler {
    /// `probs` must be nonnegative with a positive sum; they are normalized.
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let total = neumaier_sum(probs.iter().copied());
        if total.is_nan() || total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        let mut tail = 0.0;
        let mut cond = vec![0.0; probs.len()];
        for i in (0..probs.len()).rev() {
            tail += probs[i];
            cond[i] = if tail > 0.0 { (probs[i] / tail).min(1.0) } else { 0.0 };
        }
        let alias = WeightedAliasIndex::new(probs.to_vec())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(MultinomialSampler { alias, cond })
    }

    pub fn len(&self) -> usize {
        self.cond.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cond.is_empty()
    }

    /// Index of a single categorical draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Count vector aligned with the input probabilities, summing to `n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.len()];
        if n < 4 * self.len() as u64 {
            for _ in 0..n {
                counts[self.alias.sample(rng)] += 1;
            }
        } else {
            conditional(&self.cond, n, &mut counts, rng);
        }
        counts
    }
}

fn conditional<R: Rng + ?Sized>(cond: &[f64], n: u64, counts: &mut [u64], rng: &mut R) {
    let mut remaining = n;
    let last = cond.len() - 1;
    for (i, &c) in cond.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let k = if i == last || c >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, c).expect("probability in [0, 1]").sample(rng)
        };
        counts[i] = k;
        remaining -= k;
    }
}

/// One multinomial draw of `n` trials over `probs`.
pub fn multinomial<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Result<Vec<u64>> {
    Ok(MultinomialSampler::new(probs)?.sample(n, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_and_repeat() {
        let a = derive_seed(42, &[1, 2]);
        assert_eq!(a, derive_seed(42, &[1, 2]));
        assert_ne!(a, derive_seed(42, &[2, 1]));
        assert_ne!(a, derive_seed(43, &[1, 2]));
        assert_ne!(derive_seed(0, &[]), derive_seed(0, &[0]));
    }

    #[test]
    fn counts_sum_to_n_in_both_regimes() {
        let probs: Vec<f64> = (1..=1000).map(|i| 1.0 / i as f64).collect();
        let s = MultinomialSampler::new(&probs).unwrap();
        for n in [0u64, 7, 300, 5_000, 100_000] {
            let mut rng = rng_from_seed(n);
            let c = s.sample(n, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), n);
            assert_eq!(c.len(), 1000);
        }
    }

    #[test]
    fn frequencies_match_probabilities() {
        let probs = [0.5, 0.3, 0.2, 0.0];
        let mut rng = rng_from_seed(3);
        let n = 200_000;
        let c = multinomial(&probs, n, &mut rng).unwrap();
        assert_eq!(c[3], 0);
        for (k, p) in c.iter().zip(probs) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*k as f64 - n as f64 * p).abs() < 5.0 * sd + 1.0);
        }
        // Sparse regime.
        let wide: Vec<f64> = (0..10_000).map(|i| if i < 2 { 0.5 } else { 0.0 }).collect();
        let c = multinomial(&wide, 1000, &mut rng).unwrap();
        assert_eq!(c[0] + c[1], 1000);
    }

    #[test]
    fn reproducible_given_seed() {
        let probs = [0.25, 0.25, 0.5];
        let a = multinomial(&probs, 4, &mut rng_from_seed(9)).unwrap();
        let b = multinomial(&probs, 4, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(MultinomialSampler::new(&[]).is_err());
        assert!(MultinomialSampler::new(&[0.0, 0.0]).is_err());
        assert!(MultinomialSampler::new(&[-1.0, 2.0]).is_err());
    }
}
