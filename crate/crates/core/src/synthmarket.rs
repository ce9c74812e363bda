//! Seeded synthetic loan markets with exact ground truth.
//!
//! Bin `t` assigns Zipf weights `w_r = r^-s` to rank positions `r = 1..=K`.
//! Ranks are split into blocks of `B = round(1/rho)` positions; at every step
//! one seeded-random position in each block except the first hands its rank
//! to a fresh entrant, so about a `rho` fraction of the catalog turns over
//! while the rank-frequency shape stays fixed. Seasonal items occupy every
//! `round(1/f)`-th rank starting at rank 1, never churn, and have their weight
//! multiplied by `gamma` in active months before renormalization.
//!
//! Item `i` is written as key `s{i:07}` (physical) or `s{i:07}e` (ebook) with
//! titles that normalize identically, so both keys form one canonical item,
//! named by the physical key whenever that key occurs in the log. Titles of
//! distinct items are at least two edits apart.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::jsd_bits;
use crate::error::{Error, Result};
use crate::ledger::{Category, Education, Granularity, Residence, Schema, Sex, TimeBin};
use crate::numeric::neumaier_sum;
use crate::popularity::{ItemId, PopularityDistribution, RelativeDistribution};
use crate::sampling::{derive_seed, rng_from_seed, MultinomialSampler};

const CHURN_STREAM: u64 = 1;
const SAMPLE_STREAM: u64 = 2;
const EVENT_STREAM: u64 = 3;

/// Demographic profile of one loaner population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCohort {
    pub weight: f64,
    pub sex: Sex,
    pub education: Education,
    pub residence: Residence,
    /// Age range `[min, max)` at the start of the market.
    pub age_min: u32,
    pub age_max: u32,
    pub loaners: u32,
}

fn default_cohorts() -> Vec<SynthCohort> {
    vec![
        SynthCohort {
            weight: 0.5,
            sex: Sex::Female,
            education: Education::Higher,
            residence: Residence::LargeCity,
            age_min: 30,
            age_max: 46,
            loaners: 20_000,
        },
        SynthCohort {
            weight: 0.3,
            sex: Sex::Male,
            education: Education::UpperSecondary,
            residence: Residence::TownRural,
            age_min: 46,
            age_max: 65,
            loaners: 12_000,
        },
        SynthCohort {
            weight: 0.2,
            sex: Sex::Female,
            education: Education::Basic,
            residence: Residence::TownRural,
            age_min: 65,
            age_max: 90,
            loaners: 8_000,
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthMarketSpec {
    pub catalog_size: u32,
    pub zipf_exponent: f64,
    /// Fraction of rank positions handed to fresh entrants per bin.
    pub churn: f64,
    /// Fraction of rank positions held by seasonal items.
    pub seasonal_fraction: f64,
    pub seasonal_multiplier: f64,
    /// Calendar months (1-12) in which seasonal weights are boosted.
    pub active_months: Vec<u32>,
    pub loans_per_bin: u64,
    pub n_bins: u32,
    /// First day of the first monthly bin.
    pub start: NaiveDate,
    pub ebook_share: f64,
    pub cohorts: Vec<SynthCohort>,
    pub seed: u64,
}

impl Default for SynthMarketSpec {
    fn default() -> Self {
        SynthMarketSpec {
            catalog_size: 50_000,
            zipf_exponent: 1.0,
            churn: 0.05,
            seasonal_fraction: 0.01,
            seasonal_multiplier: 3.0,
            active_months: vec![11, 12],
            loans_per_bin: 500_000,
            n_bins: 24,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            ebook_share: 0.3,
            cohorts: default_cohorts(),
            seed: 0,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidParameter(msg)
}

impl SynthMarketSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.catalog_size == 0 {
            return Err(invalid("catalog_size must be at least 1".into()));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(invalid(format!("zipf_exponent {} must be >= 0", self.zipf_exponent)));
        }
        if !unit(self.churn) || !unit(self.seasonal_fraction) || !unit(self.ebook_share) {
            return Err(invalid("churn, seasonal_fraction and ebook_share must lie in [0, 1]".into()));
        }
        if !(self.seasonal_multiplier.is_finite() && self.seasonal_multiplier > 0.0) {
            return Err(invalid(format!("seasonal_multiplier {} must be > 0", self.seasonal_multiplier)));
        }
        if let Some(m) = self.active_months.iter().find(|m| !(1..=12).contains(*m)) {
            return Err(invalid(format!("active month {m} is not in 1..=12")));
        }
        if self.loans_per_bin == 0 || self.n_bins == 0 {
            return Err(invalid("loans_per_bin and n_bins must be at least 1".into()));
        }
        if self.start.day() != 1 {
            return Err(invalid(format!("start {} must be the first day of a month", self.start)));
        }
        if self.cohorts.is_empty()
            || self.cohorts.iter().any(|c| {
                !(c.weight.is_finite() && c.weight >= 0.0) || c.loaners == 0 || c.age_max <= c.age_min
            })
            || self.cohorts.iter().map(|c| c.weight).sum::<f64>() <= 0.0
        {
            return Err(invalid("cohorts need nonnegative weights with a positive sum, loaners >= 1 and age_max > age_min".into()));
        }
        let churned_per_bin = (self.catalog_size as u64).div_ceil(self.block_len() as u64);
        let max_id = self.catalog_size as u64 + churned_per_bin * self.n_bins as u64;
        if max_id >= 10_000_000 {
            return Err(invalid("catalog plus entrants exceeds 10^7 items".into()));
        }
        Ok(())
    }

    fn block_len(&self) -> usize {
        if self.churn > 0.0 {
            ((1.0 / self.churn).round() as usize).max(1)
        } else {
            usize::MAX
        }
    }

    fn is_seasonal_rank(&self, rank0: usize) -> bool {
        if self.seasonal_fraction <= 0.0 {
            return false;
        }
        let step = ((1.0 / self.seasonal_fraction).round() as usize).max(1);
        rank0 % step == 0
    }
}

/// Physical item key of a synthetic item; also its canonical id.
pub fn item_key(id: u32) -> String {
    format!("s{id:07}")
}

fn code(mut n: u32, digits: usize) -> String {
    // Digit d becomes two letters that differ from every other digit's pair
    // in both positions.
    const FIRST: &[u8; 10] = b"bdfghklmnp";
    const SECOND: &[u8; 10] = b"aeiouyrstv";
    let mut out = vec![0u8; 2 * digits];
    for i in (0..digits).rev() {
        let d = (n % 10) as usize;
        n /= 10;
        out[2 * i] = FIRST[d];
        out[2 * i + 1] = SECOND[d];
    }
    String::from_utf8(out).expect("ascii")
}

/// Title of a synthetic item.
pub fn item_title(id: u32) -> String {
    let c = code(id, 7);
    format!("The {} {}", &c[..6], &c[6..])
}

pub fn item_creator(id: u32) -> String {
    format!("Writer {}", code(id % 1000, 3))
}

pub fn item_category(id: u32) -> Category {
    match id % 10 {
        0..=4 => Category::AdultFiction,
        5..=7 => Category::AdultNonfiction,
        _ => Category::Children,
    }
}

/// Exact per-bin relative popularity of a synthetic market.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub bins: Vec<TimeBin>,
    /// Keyed by synthetic item id.
    pub dists: Vec<RelativeDistribution>,
}

impl GroundTruth {
    pub fn index_of(&self, bin: TimeBin) -> Option<usize> {
        self.bins.iter().position(|&b| b == bin)
    }

    pub fn distribution(&self, bin: TimeBin) -> Result<&RelativeDistribution> {
        self.index_of(bin)
            .map(|i| &self.dists[i])
            .ok_or(Error::MissingBin(bin.start))
    }

    /// JSD in bits between the true distributions of two bins.
    pub fn true_jsd(&self, a: TimeBin, b: TimeBin) -> Result<f64> {
        Ok(jsd_bits(self.distribution(a)?, self.distribution(b)?))
    }

    /// Writes `bin_start,canonical_id,probability` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "bin_start,canonical_id,probability").map_err(io)?;
        for (bin, dist) in self.bins.iter().zip(&self.dists) {
            for &(id, p) in dist.probs() {
                writeln!(out, "{},{},{}", bin.start, item_key(id.0), p).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}

/// A generated market: who holds each rank in each bin, and the exact truth.
#[derive(Clone, Debug)]
pub struct SynthMarket {
    spec: SynthMarketSpec,
    truth: GroundTruth,
}

impl SynthMarket {
    pub fn new(spec: SynthMarketSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.catalog_size as usize;
        let base: Vec<f64> = (1..=k).map(|r| (r as f64).powf(-spec.zipf_exponent)).collect();
        let seasonal: Vec<bool> = (0..k).map(|r| spec.is_seasonal_rank(r)).collect();
        let block = spec.block_len();

        let mut holders: Vec<u32> = (0..spec.catalog_size).collect();
        let mut next_id = spec.catalog_size;
        let first = TimeBin::containing(spec.start, Granularity::Month);
        let mut bins = Vec::with_capacity(spec.n_bins as usize);
        let mut dists = Vec::with_capacity(spec.n_bins as usize);
        for t in 0..spec.n_bins as usize {
            let bin = TimeBin::from_index(Granularity::Month, first.index + t as i64);
            if t > 0 && block != usize::MAX {
                let mut rng = rng_from_seed(derive_seed(spec.seed, &[CHURN_STREAM, t as u64]));
                for start in (block..k).step_by(block) {
                    let candidates: Vec<usize> = (start..(start + block).min(k)).filter(|&r| !seasonal[r]).collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    let r = candidates[rng.random_range(0..candidates.len())];
                    holders[r] = next_id;
                    next_id += 1;
                }
            }
            let boost = if spec.active_months.contains(&bin.start.month()) {
                spec.seasonal_multiplier
            } else {
                1.0
            };
            let weights = base
                .iter()
                .zip(&seasonal)
                .map(|(&w, &s)| if s { w * boost } else { w });
            let total = neumaier_sum(weights.clone());
            let probs: Vec<(ItemId, f64)> = holders
                .iter()
                .zip(weights)
                .map(|(&id, w)| (ItemId(id), w / total))
                .collect();
            bins.push(bin);
            dists.push(RelativeDistribution::from_probs(probs)?);
        }
        Ok(SynthMarket {
            spec,
            truth: GroundTruth { bins, dists },
        })
    }

    pub fn spec(&self) -> &SynthMarketSpec {
        &self.spec
    }

    pub fn bins(&self) -> &[TimeBin] {
        &self.truth.bins
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Multinomial loan tallies of bin `t`, keyed by synthetic item id.
    pub fn sample_bin(&self, t: usize) -> PopularityDistribution {
        self.sample_bin_with(t, self.spec.loans_per_bin, self.spec.seed)
    }

    /// Tallies of `loans` draws from bin `t` under an explicit sampling seed.
    pub fn sample_bin_with(&self, t: usize, loans: u64, seed: u64) -> PopularityDistribution {
        let dist = &self.truth.dists[t];
        let probs: Vec<f64> = dist.probs().iter().map(|&(_, p)| p).collect();
        let sampler = MultinomialSampler::new(&probs).expect("truth is a valid distribution");
        let mut rng = rng_from_seed(derive_seed(seed, &[SAMPLE_STREAM, t as u64]));
        let counts = sampler.sample(loans, &mut rng);
        PopularityDistribution::new(
            self.truth.bins[t],
            "all",
            dist.probs().iter().zip(counts).map(|(&(id, _), c)| (id, c)),
        )
    }

    /// Tallies of every bin.
    pub fn sample_all(&self) -> Vec<PopularityDistribution> {
        (0..self.truth.bins.len())
            .into_par_iter()
            .map(|t| self.sample_bin(t))
            .collect()
    }

    fn bin_rows(&self, t: usize) -> Vec<u8> {
        let spec = &self.spec;
        let tally = self.sample_bin(t);
        let bin = self.truth.bins[t];
        let days = (bin.end - bin.start).num_days() as u64;
        let weights: Vec<f64> = spec.cohorts.iter().map(|c| c.weight).collect();
        let cohorts = MultinomialSampler::new(&weights).expect("validated cohort weights");
        let mut rng = rng_from_seed(derive_seed(spec.seed, &[EVENT_STREAM, t as u64]));

        let mut loans: Vec<(u64, u32)> = Vec::with_capacity(tally.total() as usize);
        for &(id, c) in tally.counts() {
            for _ in 0..c {
                loans.push((rng.random_range(0..days), id.0));
            }
        }
        loans.sort_unstable();

        let mut out = Vec::with_capacity(loans.len() * 110);
        for (day, id) in loans {
            let date = bin.start + Days::new(day);
            let ci = cohorts.draw(&mut rng);
            let cohort = &spec.cohorts[ci];
            let loaner = rng.random_range(0..cohort.loaners);
            let birth = loaner_birthdate(spec, ci, loaner);
            let ebook = rng.random_bool(spec.ebook_share);
            let (key_suffix, title_suffix, medium) = if ebook { ("e", "!", "ebook") } else { ("", "", "physical") };
            let _ = writeln!(
                out,
                "{date},{}{key_suffix},{}{title_suffix},{},{},{medium},c{ci}-{loaner:06},{birth},{},{},{}",
                item_key(id),
                item_title(id),
                item_creator(id),
                item_category(id),
                cohort.sex,
                cohort.education,
                cohort.residence,
            );
        }
        out
    }

    /// Writes the market as an event log with the standard header. Bins are
    /// generated in parallel and written in order. Returns the event count.
    pub fn write_events(&self, path: &Path) -> Result<u64> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        let io = |e| Error::io(path, e);
        writeln!(out, "{}", Schema::default().header().join(",")).map_err(io)?;
        let n = self.truth.bins.len();
        let chunk = rayon::current_num_threads().max(1);
        for start in (0..n).step_by(chunk) {
            let rows: Vec<Vec<u8>> = (start..(start + chunk).min(n))
                .into_par_iter()
                .map(|t| self.bin_rows(t))
                .collect();
            for r in rows {
                out.write_all(&r).map_err(io)?;
            }
        }
        out.flush().map_err(io)?;
        Ok(self.spec.loans_per_bin * n as u64)
    }
}

fn loaner_birthdate(spec: &SynthMarketSpec, cohort: usize, loaner: u32) -> NaiveDate {
    let c = &spec.cohorts[cohort];
    let span_days = (c.age_max - c.age_min) as u64 * 365;
    let offset = derive_seed(spec.seed, &[cohort as u64, loaner as u64]) % span_days;
    let youngest = spec
        .start
        .checked_sub_months(chrono::Months::new(12 * c.age_min))
        .expect("date in range");
    youngest - Days::new(offset + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{bounded_levenshtein, normalize};

    fn small(churn: f64, gamma: f64) -> SynthMarketSpec {
        SynthMarketSpec {
            catalog_size: 2_000,
            churn,
            seasonal_multiplier: gamma,
            loans_per_bin: 20_000,
            n_bins: 14,
            seed: 5,
            ..SynthMarketSpec::default()
        }
    }

    #[test]
    fn static_market_has_zero_truth_drift() {
        let m = SynthMarket::new(small(0.0, 1.0)).unwrap();
        let b = m.bins();
        for i in 0..b.len() {
            assert_eq!(m.truth().true_jsd(b[0], b[i]).unwrap(), 0.0);
        }
    }

    #[test]
    fn truth_sums_to_one() {
        let m = SynthMarket::new(small(0.05, 3.0)).unwrap();
        for d in &m.truth().dists {
            let s = neumaier_sum(d.probs().iter().map(|&(_, p)| p));
            assert!((s - 1.0).abs() <= 1e-15, "{s}");
            assert_eq!(d.support_len(), 2_000);
        }
    }

    #[test]
    fn churn_replaces_one_rank_per_block() {
        let m = SynthMarket::new(small(0.05, 1.0)).unwrap();
        let (a, b) = (&m.truth().dists[0], &m.truth().dists[1]);
        let ids = |d: &RelativeDistribution| d.probs().iter().map(|&(id, _)| id).collect::<std::collections::BTreeSet<_>>();
        let (ia, ib) = (ids(a), ids(b));
        // 100 blocks of 20; the head block is exempt.
        assert_eq!(ia.difference(&ib).count(), 99);
        assert!(ib.iter().all(|id| id.0 < 2_000 + 99));
    }

    #[test]
    fn tiny_market_is_reproducible() {
        let spec = SynthMarketSpec {
            catalog_size: 2,
            zipf_exponent: 0.0,
            churn: 0.0,
            seasonal_fraction: 0.0,
            loans_per_bin: 4,
            n_bins: 2,
            seed: 42,
            ..SynthMarketSpec::default()
        };
        let m = SynthMarket::new(spec.clone()).unwrap();
        assert_eq!(m.truth().dists[0].probs(), &[(ItemId(0), 0.5), (ItemId(1), 0.5)]);
        let again = SynthMarket::new(spec).unwrap();
        assert_eq!(m.sample_bin(0), again.sample_bin(0));
        assert_eq!(m.sample_bin(0).total(), 4);
    }

    #[test]
    fn seasonal_boundaries_exceed_off_season() {
        let m = SynthMarket::new(small(0.05, 3.0)).unwrap();
        let b = m.bins();
        let local: Vec<f64> = (1..b.len()).map(|t| m.truth().true_jsd(b[t - 1], b[t]).unwrap()).collect();
        // Bins start in January; local[i] compares bins i and i + 1, so the
        // season opens at local[9] (Oct->Nov) and closes at local[11] (Dec->Jan).
        let off_max = local
            .iter()
            .enumerate()
            .filter(|(i, _)| ![9, 11].contains(i))
            .map(|(_, &v)| v)
            .fold(0.0, f64::max);
        assert!(local[9] > off_max && local[11] > off_max, "{local:?}");
    }

    #[test]
    fn off_season_truth_drift_is_nearly_constant() {
        let m = SynthMarket::new(SynthMarketSpec {
            catalog_size: 20_000,
            n_bins: 10,
            seasonal_multiplier: 1.0,
            ..SynthMarketSpec::default()
        })
        .unwrap();
        let b = m.bins();
        let local: Vec<f64> = (1..b.len()).map(|t| m.truth().true_jsd(b[t - 1], b[t]).unwrap()).collect();
        let (mean, sd) = crate::numeric::mean_and_std(&local);
        assert!(sd / mean < 0.05, "{local:?}");
    }

    #[test]
    fn titles_stay_two_edits_apart() {
        let ids = [0u32, 1, 9, 10, 11, 99, 100, 1234567, 1234568, 7654321];
        for &a in &ids {
            for &b in &ids {
                let ta: Vec<char> = normalize(&item_title(a), "").title_norm.chars().collect();
                let tb: Vec<char> = normalize(&item_title(b), "").title_norm.chars().collect();
                let d = bounded_levenshtein(&ta, &tb, 1);
                assert_eq!(d.is_some(), a == b, "{a} {b}");
            }
        }
        let ebook = normalize(&format!("{}!", item_title(7)), &item_creator(7));
        assert_eq!(ebook, normalize(&item_title(7), &item_creator(7)));
    }

    #[test]
    fn rejects_invalid_specs() {
        for spec in [
            SynthMarketSpec { catalog_size: 0, ..SynthMarketSpec::default() },
            SynthMarketSpec { churn: 1.5, ..SynthMarketSpec::default() },
            SynthMarketSpec { active_months: vec![13], ..SynthMarketSpec::default() },
            SynthMarketSpec { start: NaiveDate::from_ymd_opt(2021, 1, 2).unwrap(), ..SynthMarketSpec::default() },
        ] {
            assert!(SynthMarket::new(spec).is_err());
        }
    }

    #[test]
    fn event_file_matches_tallies() {
        let spec = SynthMarketSpec {
            catalog_size: 300,
            loans_per_bin: 2_000,
            n_bins: 3,
            seed: 9,
            ..SynthMarketSpec::default()
        };
        let m = SynthMarket::new(spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        assert_eq!(m.write_events(&path).unwrap(), 6_000);
        let (events, report) = crate::ledger::ingest(&path, Default::default()).unwrap();
        assert_eq!(report.accepted, 6_000);
        assert_eq!(report.malformed, 0);
        let t0 = m.sample_bin(0);
        let n0 = events
            .iter()
            .filter(|e| m.bins()[0].contains(e.date) && e.item_key.trim_end_matches('e') == item_key(t0.counts()[0].0 .0))
            .count() as u64;
        assert_eq!(n0, t0.counts()[0].1);
        let bytes = std::fs::read(&path).unwrap();
        m.write_events(&path).unwrap();
        assert_eq!(bytes, std::fs::read(&path).unwrap());
    }
}
