//! Drift analyses over binned popularity distributions.
//!
//! Every pairwise value goes through [`pair_estimate`], which orders the two
//! bins chronologically and derives the bootstrap seed from their indices. The
//! same pair therefore yields the same bits whether it is reached from a local
//! series, a global series or a matrix cell.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{jsd_with_contributions, Measure};
use crate::error::{Error, Result};
use crate::estimators::{Estimate, Estimator};
use crate::popularity::{normalize, top_k_items, ItemId, PopularityDistribution};
use crate::ledger::TimeBin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesKind {
    /// Each bin against the bin before it.
    Local,
    /// Each bin against a fixed baseline bin.
    Global { baseline: TimeBin },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    /// The later bin of a local pair; the compared bin of a global pair.
    pub bin: TimeBin,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSeries {
    pub measure: Measure,
    pub kind: SeriesKind,
    pub entries: Vec<SeriesEntry>,
}

impl DriftSeries {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.value).collect()
    }

    pub fn get(&self, bin: TimeBin) -> Option<&SeriesEntry> {
        self.entries.iter().find(|e| e.bin == bin)
    }
}

/// Symmetric matrix of pairwise values with a zero diagonal, rows in bin order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftMatrix {
    pub measure: Measure,
    pub bins: Vec<TimeBin>,
    values: Vec<f64>,
    std_errors: Option<Vec<f64>>,
}

impl DriftMatrix {
    pub fn n(&self) -> usize {
        self.bins.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n() + j]
    }

    pub fn std_error(&self, i: usize, j: usize) -> Option<f64> {
        self.std_errors.as_ref().map(|s| s[i * self.n() + j])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n()..(i + 1) * self.n()]
    }

    pub fn index_of(&self, bin: TimeBin) -> Option<usize> {
        self.bins.binary_search(&bin).ok()
    }
}

/// Sorts distributions by bin. Duplicate bins or mixed granularities are
/// rejected.
pub fn order_bins(dists: &[PopularityDistribution]) -> Result<Vec<&PopularityDistribution>> {
    let mut sorted: Vec<&PopularityDistribution> = dists.iter().collect();
    sorted.sort_by_key(|d| d.bin);
    let mixed = sorted
        .windows(2)
        .any(|w| w[0].bin.granularity != w[1].bin.granularity || w[0].bin.index == w[1].bin.index);
    if mixed {
        return Err(Error::UnorderedBins);
    }
    Ok(sorted)
}

/// Estimate for one pair of bins, computed in chronological order with a
/// seed tagged by both bin indices.
pub fn pair_estimate(
    a: &PopularityDistribution,
    b: &PopularityDistribution,
    estimator: &Estimator,
    measure: Measure,
) -> Result<Estimate> {
    let (first, second) = if a.bin <= b.bin { (a, b) } else { (b, a) };
    let tags = [first.bin.index as u64, second.bin.index as u64];
    estimator.estimate(first, second, measure, &tags)
}

fn require_bins(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(Error::TooFewBins { needed, got: n });
    }
    Ok(())
}

/// `m(dist[t-1], dist[t])` for every consecutive pair. The bins must be
/// contiguous.
pub fn local_drift(dists: &[PopularityDistribution], estimator: &Estimator, measure: Measure) -> Result<DriftSeries> {
    let sorted = order_bins(dists)?;
    require_bins(sorted.len(), 2)?;
    let missing: Vec<_> = sorted
        .windows(2)
        .flat_map(|w| (w[0].bin.index + 1..w[1].bin.index).map(|i| TimeBin::from_index(w[0].bin.granularity, i).start))
        .collect();
    if !missing.is_empty() {
        return Err(Error::BinGaps { missing });
    }
    let entries = sorted
        .par_windows(2)
        .map(|w| {
            let est = pair_estimate(w[0], w[1], estimator, measure)?;
            Ok(SeriesEntry {
                bin: w[1].bin,
                value: est.value,
                std_error: est.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftSeries {
        measure,
        kind: SeriesKind::Local,
        entries,
    })
}

/// `m(dist[baseline], dist[t])` for every bin other than the baseline.
pub fn global_drift(
    dists: &[PopularityDistribution],
    baseline: TimeBin,
    estimator: &Estimator,
    measure: Measure,
) -> Result<DriftSeries> {
    let sorted = order_bins(dists)?;
    let base = sorted
        .iter()
        .find(|d| d.bin == baseline)
        .ok_or(Error::MissingBaseline(baseline.start))?;
    let entries = sorted
        .par_iter()
        .filter(|d| d.bin != baseline)
        .map(|d| {
            let est = pair_estimate(base, d, estimator, measure)?;
            Ok(SeriesEntry {
                bin: d.bin,
                value: est.value,
                std_error: est.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftSeries {
        measure,
        kind: SeriesKind::Global { baseline },
        entries,
    })
}

/// All pairwise values. Cells of the upper triangle are computed in row-major
/// order and mirrored.
pub fn drift_matrix(dists: &[PopularityDistribution], estimator: &Estimator, measure: Measure) -> Result<DriftMatrix> {
    let sorted = order_bins(dists)?;
    require_bins(sorted.len(), 2)?;
    let n = sorted.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let estimates = cells
        .par_iter()
        .map(|&(i, j)| pair_estimate(sorted[i], sorted[j], estimator, measure))
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; n * n];
    let mut std_errors = matches!(estimator, Estimator::Bootstrap { .. }).then(|| vec![0.0; n * n]);
    for (&(i, j), est) in cells.iter().zip(&estimates) {
        values[i * n + j] = est.value;
        values[j * n + i] = est.value;
        if let (Some(se), Some(e)) = (std_errors.as_mut(), est.std_error) {
            se[i * n + j] = e;
            se[j * n + i] = e;
        }
    }
    Ok(DriftMatrix {
        measure,
        bins: sorted.iter().map(|d| d.bin).collect(),
        values,
        std_errors,
    })
}

/// Upper rank bounds of contribution groups G1..G4; G5 is everything beyond.
pub const GROUP_BOUNDS: [usize; 4] = [100, 1_000, 10_000, 50_000];
pub const N_GROUPS: usize = 5;

/// Group index 0..5 of a 1-based rank.
pub fn group_of_rank(rank: usize) -> usize {
    GROUP_BOUNDS.iter().take_while(|&&b| rank > b).count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedContribution {
    pub id: ItemId,
    pub partial: f64,
    /// Loans of the item over both bins.
    pub loans: u64,
    /// 1-based.
    pub rank: usize,
    /// 0-based group index.
    pub group: usize,
}

/// Ranked per-item contributions for one pair of bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairContributions {
    pub left: TimeBin,
    pub right: TimeBin,
    /// Entropy-form JSD of the pair in bits.
    pub jsd: f64,
    /// Sorted by rank.
    pub ranked: Vec<RankedContribution>,
    /// Fraction of the JSD held by each group. All zero when the JSD is zero.
    pub shares: [f64; N_GROUPS],
}

impl PairContributions {
    /// Group index per item id, sorted by id.
    pub fn groups_by_id(&self) -> Vec<(ItemId, usize)> {
        let mut v: Vec<_> = self.ranked.iter().map(|r| (r.id, r.group)).collect();
        v.sort_unstable();
        v
    }
}

/// Ranks the items loaned in either bin by partial JSD, descending; ties go
/// to more loans, then to the smaller id.
pub fn contribution_groups(a: &PopularityDistribution, b: &PopularityDistribution) -> Result<PairContributions> {
    let (p, q) = (normalize(a)?, normalize(b)?);
    let (value, breakdown) = jsd_with_contributions(&p, &q);
    let loans = a.merged(b);
    let mut ranked: Vec<RankedContribution> = breakdown
        .partials
        .iter()
        .zip(loans.counts())
        .map(|(&(id, partial), &(lid, n))| {
            debug_assert_eq!(id, lid);
            RankedContribution {
                id,
                partial,
                loans: n,
                rank: 0,
                group: 0,
            }
        })
        .collect();
    ranked.sort_unstable_by(|x, y| {
        y.partial
            .total_cmp(&x.partial)
            .then(y.loans.cmp(&x.loans))
            .then(x.id.cmp(&y.id))
    });
    let mut sums = [Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
        r.group = group_of_rank(r.rank);
        sums[r.group].push(r.partial);
    }
    let mut shares = [0.0; N_GROUPS];
    if breakdown.total > 0.0 {
        for (s, parts) in shares.iter_mut().zip(&sums) {
            *s = crate::numeric::neumaier_sum(parts.iter().copied()) / breakdown.total;
        }
    }
    Ok(PairContributions {
        left: a.bin,
        right: b.bin,
        jsd: value.value,
        ranked,
        shares,
    })
}

/// Contribution rankings of every consecutive pair of bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub pairs: Vec<PairContributions>,
}

pub fn group_schedule(dists: &[PopularityDistribution]) -> Result<GroupSchedule> {
    let sorted = order_bins(dists)?;
    require_bins(sorted.len(), 2)?;
    let pairs = sorted
        .par_windows(2)
        .map(|w| contribution_groups(w[0], w[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupSchedule { pairs })
}

pub type TransitionMatrix = [[f64; N_GROUPS]; N_GROUPS];

/// Average probability that an item in group g at one pair is in group h at
/// the next pair.
///
/// Items missing from the next pair's ranking count as G5. A row with no
/// items at a step is left out of that step's average; a row that is empty at
/// every step is a self-transition.
pub fn transition_matrix(schedule: &GroupSchedule) -> Result<TransitionMatrix> {
    if schedule.pairs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "transitions need at least 2 consecutive bin pairs, got {}",
            schedule.pairs.len()
        )));
    }
    let mut sum = [[0.0; N_GROUPS]; N_GROUPS];
    let mut steps = [0usize; N_GROUPS];
    for w in schedule.pairs.windows(2) {
        let next: HashMap<ItemId, usize> = w[1].ranked.iter().map(|r| (r.id, r.group)).collect();
        let mut counts = [[0u64; N_GROUPS]; N_GROUPS];
        for r in &w[0].ranked {
            let h = next.get(&r.id).copied().unwrap_or(N_GROUPS - 1);
            counts[r.group][h] += 1;
        }
        for g in 0..N_GROUPS {
            let total: u64 = counts[g].iter().sum();
            if total == 0 {
                continue;
            }
            steps[g] += 1;
            for h in 0..N_GROUPS {
                sum[g][h] += counts[g][h] as f64 / total as f64;
            }
        }
    }
    let mut out = [[0.0; N_GROUPS]; N_GROUPS];
    for g in 0..N_GROUPS {
        if steps[g] == 0 {
            out[g][g] = 1.0;
        } else {
            for h in 0..N_GROUPS {
                out[g][h] = sum[g][h] / steps[g] as f64;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySelector {
    /// Items contributing most to the global drift from `baseline` to `at`.
    TopGlobalContrib { baseline: TimeBin, at: TimeBin, k: usize },
    /// Items with most loans over all bins.
    TopTotal { k: usize },
    /// Items with the highest single-bin loan count.
    TopPeak { k: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub id: ItemId,
    /// Index into the panel's bins of the first bin with the item's maximum count.
    pub peak: usize,
    pub counts: Vec<u64>,
}

/// Per-bin loan counts of selected items, rows ordered by peak bin then id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryPanel {
    pub bins: Vec<TimeBin>,
    pub rows: Vec<TrajectoryRow>,
}

fn find_bin<'a>(sorted: &[&'a PopularityDistribution], bin: TimeBin) -> Result<&'a PopularityDistribution> {
    sorted
        .iter()
        .copied()
        .find(|d| d.bin == bin)
        .ok_or(Error::MissingBin(bin.start))
}

pub fn trajectory_panel(dists: &[PopularityDistribution], selector: TrajectorySelector) -> Result<TrajectoryPanel> {
    let sorted = order_bins(dists)?;
    let selected: Vec<ItemId> = match selector {
        TrajectorySelector::TopGlobalContrib { baseline, at, k } => {
            let base = sorted
                .iter()
                .copied()
                .find(|d| d.bin == baseline)
                .ok_or(Error::MissingBaseline(baseline.start))?;
            let pair = contribution_groups(base, find_bin(&sorted, at)?)?;
            pair.ranked.iter().take(k).map(|r| r.id).collect()
        }
        TrajectorySelector::TopTotal { k } => top_k_items(dists, k),
        TrajectorySelector::TopPeak { k } => {
            let mut peaks: HashMap<ItemId, u64> = HashMap::new();
            for d in &sorted {
                for &(id, c) in d.counts() {
                    let e = peaks.entry(id).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            let mut ranked: Vec<(ItemId, u64)> = peaks.into_iter().collect();
            ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().take(k).map(|(id, _)| id).collect()
        }
    };
    let mut rows: Vec<TrajectoryRow> = selected
        .into_iter()
        .map(|id| {
            let counts: Vec<u64> = sorted.iter().map(|d| d.count_of(id)).collect();
            let max = counts.iter().copied().max().unwrap_or(0);
            let peak = counts.iter().position(|&c| c == max).unwrap_or(0);
            TrajectoryRow { id, peak, counts }
        })
        .collect();
    rows.sort_unstable_by(|a, b| a.peak.cmp(&b.peak).then(a.id.cmp(&b.id)));
    Ok(TrajectoryPanel {
        bins: sorted.iter().map(|d| d.bin).collect(),
        rows,
    })
}
