//! Estimating divergences from finite loan counts.
//!
//! The plug-in estimator evaluates the divergence on empirical frequencies and
//! is biased upward when loans are few relative to items. The bootstrap
//! estimator redraws both samples from their plug-in distributions, reads the
//! bias off the mean of the resampled divergences and subtracts it:
//! `corrected = 2 * plugin - mean(resampled)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{DriftValue, Measure};
use crate::error::{Error, Result};
use crate::numeric::mean_and_std;
use crate::popularity::{normalize, ItemId, PopularityDistribution, RelativeDistribution};
use crate::sampling::{derive_seed, rng_from_seed, MultinomialSampler};

pub const DEFAULT_RESAMPLES: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Plugin,
    Bootstrap { resamples: usize, seed: u64 },
}

impl Estimator {
    pub fn bootstrap(seed: u64) -> Self {
        Estimator::Bootstrap {
            resamples: DEFAULT_RESAMPLES,
            seed,
        }
    }

    /// Estimates `measure` between two count tables. For the bootstrap, the
    /// resampling seed is derived from the root seed and `job`, so the same
    /// job always sees the same draws.
    pub fn estimate(
        &self,
        a: &PopularityDistribution,
        b: &PopularityDistribution,
        measure: Measure,
        job: &[u64],
    ) -> Result<Estimate> {
        match *self {
            Estimator::Plugin => Ok(Estimate {
                value: plugin(a, b, measure)?.value,
                std_error: None,
            }),
            Estimator::Bootstrap { resamples, seed } => {
                let est = bootstrap(a, b, measure, resamples, derive_seed(seed, job))?;
                Ok(Estimate {
                    value: est.corrected_value,
                    std_error: Some(est.std_error),
                })
            }
        }
    }
}

/// A point estimate with an optional standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub measure: Measure,
    pub plugin_value: f64,
    /// `2 * plugin - mean(resampled)`, clamped to `[0, 1]`.
    pub corrected_value: f64,
    /// Sample standard deviation of the resampled values.
    pub std_error: f64,
    pub resample_mean: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

fn check_nonempty(a: &PopularityDistribution, b: &PopularityDistribution) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    Ok(())
}

/// Divergence of the empirical frequencies.
pub fn plugin(a: &PopularityDistribution, b: &PopularityDistribution, measure: Measure) -> Result<DriftValue> {
    check_nonempty(a, b)?;
    Ok(DriftValue {
        value: measure.compute(&normalize(a)?, &normalize(b)?),
        measure,
        n_left: Some(a.total()),
        n_right: Some(b.total()),
    })
}

/// Maximum-likelihood JSD in bits.
pub fn plugin_jsd(a: &PopularityDistribution, b: &PopularityDistribution) -> Result<DriftValue> {
    plugin(a, b, Measure::JsdBits)
}

struct Resampler {
    ids: Vec<ItemId>,
    sampler: MultinomialSampler,
    total: u64,
}

impl Resampler {
    fn new(d: &PopularityDistribution) -> Result<Self> {
        let ids = d.counts().iter().map(|&(id, _)| id).collect();
        let weights: Vec<f64> = d.counts().iter().map(|&(_, c)| c as f64).collect();
        Ok(Resampler {
            ids,
            sampler: MultinomialSampler::new(&weights)?,
            total: d.total(),
        })
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> RelativeDistribution {
        let counts = self.sampler.sample(self.total, rng);
        let n = self.total as f64;
        let probs: Vec<(ItemId, f64)> = self
            .ids
            .iter()
            .zip(counts)
            .filter(|&(_, c)| c > 0)
            .map(|(&id, c)| (id, c as f64 / n))
            .collect();
        RelativeDistribution::from_probs(probs).expect("resample is a valid distribution")
    }
}

/// Bootstrap bias-corrected estimate of `measure`.
///
/// Resample `r` uses its own generator seeded from `(seed, r)`, so results do
/// not depend on how resamples are scheduled across threads.
pub fn bootstrap(
    a: &PopularityDistribution,
    b: &PopularityDistribution,
    measure: Measure,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapEstimate> {
    check_nonempty(a, b)?;
    if n_resamples < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 2 resamples, got {n_resamples}"
        )));
    }
    let plugin_value = plugin(a, b, measure)?.value;
    let (ra, rb) = (Resampler::new(a)?, Resampler::new(b)?);
    let values: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[r]));
            let p = ra.draw(&mut rng);
            let q = rb.draw(&mut rng);
            measure.compute(&p, &q)
        })
        .collect();
    let (mean, std_error) = mean_and_std(&values);
    Ok(BootstrapEstimate {
        measure,
        plugin_value,
        corrected_value: (2.0 * plugin_value - mean).clamp(0.0, 1.0),
        std_error,
        resample_mean: mean,
        n_resamples,
        seed,
    })
}

/// Bootstrap bias-corrected JSD in bits.
pub fn bootstrap_jsd(
    a: &PopularityDistribution,
    b: &PopularityDistribution,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapEstimate> {
    bootstrap(a, b, Measure::JsdBits, n_resamples, seed)
}
