//! Sparse per-bin popularity counts and their relative distributions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canon::CanonicalCatalog;
use crate::error::{Error, Result};
use crate::ledger::{CohortCheck, CohortFilter, Granularity, LoanEvent, TimeBin};
use crate::numeric::neumaier_sum;

/// Dense handle for a canonical item within one [`Vocabulary`].
///
/// Ids are assigned in lexicographic order of the canonical names, so ordering
/// by id is ordering by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Canonical item names indexed by [`ItemId`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from names in any order; duplicates collapse.
    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let mut names: Vec<String> = names.into_iter().collect();
        names.sort_unstable();
        names.dedup();
        Vocabulary { names }
    }

    pub fn name(&self, id: ItemId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn id(&self, name: &str) -> Option<ItemId> {
        self.names
            .binary_search_by(|n| n.as_str().cmp(name))
            .ok()
            .map(|i| ItemId(i as u32))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Loan counts of canonical items within one bin and cohort.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopularityDistribution {
    pub bin: TimeBin,
    pub cohort: String,
    counts: Vec<(ItemId, u64)>,
    total: u64,
}

impl PopularityDistribution {
    /// Repeated ids are summed and zero counts dropped.
    pub fn new(bin: TimeBin, cohort: impl Into<String>, counts: impl IntoIterator<Item = (ItemId, u64)>) -> Self {
        let mut counts: Vec<(ItemId, u64)> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        counts.sort_unstable_by_key(|&(id, _)| id);
        counts.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        let total = counts.iter().map(|&(_, c)| c).sum();
        PopularityDistribution {
            bin,
            cohort: cohort.into(),
            counts,
            total,
        }
    }

    /// `(id, count)` sorted by id; every count is at least 1.
    pub fn counts(&self) -> &[(ItemId, u64)] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn support(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.counts.iter().map(|&(id, _)| id)
    }

    pub fn count_of(&self, id: ItemId) -> u64 {
        self.counts
            .binary_search_by_key(&id, |&(i, _)| i)
            .map_or(0, |pos| self.counts[pos].1)
    }

    /// Sum of two distributions over the same bin.
    pub fn merged(&self, other: &PopularityDistribution) -> PopularityDistribution {
        PopularityDistribution::new(
            self.bin,
            self.cohort.clone(),
            self.counts.iter().chain(&other.counts).copied(),
        )
    }

    /// Counts sorted by decreasing popularity with the fraction of loans held
    /// by items of strictly lower rank: `(rank, count, ccdf)`, rank from 1.
    pub fn rank_frequency(&self) -> Vec<(usize, u64, f64)> {
        let mut sorted: Vec<u64> = self.counts.iter().map(|&(_, c)| c).collect();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut remaining = self.total;
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                remaining -= c;
                (i + 1, c, remaining as f64 / self.total as f64)
            })
            .collect()
    }
}

/// Probabilities over a sparse support, sorted by id, all strictly positive,
/// summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeDistribution {
    probs: Vec<(ItemId, f64)>,
}

impl RelativeDistribution {
    /// Validates `probs`: positive finite values summing to 1 within 1e-9.
    /// Input order does not matter; ids must be unique.
    pub fn from_probs(probs: impl IntoIterator<Item = (ItemId, f64)>) -> Result<Self> {
        let mut probs: Vec<(ItemId, f64)> = probs.into_iter().collect();
        if probs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        probs.sort_unstable_by_key(|&(id, _)| id);
        if probs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("repeated item id".into()));
        }
        if let Some(&(id, p)) = probs.iter().find(|&&(_, p)| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidDistribution(format!("probability {p} for {id}")));
        }
        let sum = neumaier_sum(probs.iter().map(|&(_, p)| p));
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}")));
        }
        Ok(RelativeDistribution { probs })
    }

    /// Normalizes nonnegative weights; zero weights are dropped.
    pub fn from_weights(weights: impl IntoIterator<Item = (ItemId, f64)>) -> Result<Self> {
        let mut w: Vec<(ItemId, f64)> = weights.into_iter().filter(|&(_, x)| x != 0.0).collect();
        if let Some(&(id, x)) = w.iter().find(|&&(_, x)| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidDistribution(format!("weight {x} for {id}")));
        }
        if w.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let total = neumaier_sum(w.iter().map(|&(_, x)| x));
        for (_, x) in &mut w {
            *x /= total;
        }
        RelativeDistribution::from_probs(w)
    }

    pub fn probs(&self) -> &[(ItemId, f64)] {
        &self.probs
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn prob_of(&self, id: ItemId) -> f64 {
        self.probs
            .binary_search_by_key(&id, |&(i, _)| i)
            .map_or(0.0, |pos| self.probs[pos].1)
    }
}

/// `counts[i] / total` for every item.
pub fn normalize(dist: &PopularityDistribution) -> Result<RelativeDistribution> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let total = dist.total as f64;
    Ok(RelativeDistribution {
        probs: dist
            .counts
            .iter()
            .map(|&(id, c)| (id, c as f64 / total))
            .collect(),
    })
}

/// Tallies from an aggregation pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub events: u64,
    pub matched: u64,
    pub cohort_rejected: u64,
    /// Events skipped because the cohort constrains age and no birthdate is known.
    pub missing_birthdate: u64,
    /// Matched events whose item key was absent from the catalog.
    pub uncatalogued: u64,
}

/// Canonical-item counts per bin together with the vocabulary naming them.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregation {
    pub vocab: Vocabulary,
    /// One distribution per non-empty bin, in bin order.
    pub dists: Vec<PopularityDistribution>,
    pub report: AggregateReport,
}

/// Incremental aggregator; feed events with [`Aggregator::push`].
///
/// Independent aggregators over disjoint event sets can be combined with
/// [`Aggregator::merge`]; the result equals aggregating the union.
pub struct Aggregator<'c> {
    granularity: Granularity,
    cohort: CohortFilter,
    catalog: Option<&'c CanonicalCatalog>,
    ids: HashMap<String, u32>,
    names: Vec<String>,
    bins: BTreeMap<i64, HashMap<u32, u64>>,
    report: AggregateReport,
}

impl<'c> Aggregator<'c> {
    /// Without a catalog every item key is its own canonical item.
    pub fn new(granularity: Granularity, cohort: CohortFilter, catalog: Option<&'c CanonicalCatalog>) -> Self {
        Aggregator {
            granularity,
            cohort,
            catalog,
            ids: HashMap::new(),
            names: Vec::new(),
            bins: BTreeMap::new(),
            report: AggregateReport::default(),
        }
    }

    pub fn push(&mut self, event: &LoanEvent) {
        self.report.events += 1;
        match self.cohort.check(event) {
            CohortCheck::Match => {}
            CohortCheck::NoMatch => {
                self.report.cohort_rejected += 1;
                return;
            }
            CohortCheck::MissingBirthdate => {
                self.report.missing_birthdate += 1;
                return;
            }
        }
        self.report.matched += 1;
        let name = match self.catalog {
            None => event.item_key.as_str(),
            Some(cat) => match cat.canonical_of(&event.item_key) {
                Some(c) => c,
                None => {
                    self.report.uncatalogued += 1;
                    event.item_key.as_str()
                }
            },
        };
        let id = self.intern(name);
        let bin = TimeBin::containing(event.date, self.granularity).index;
        *self.bins.entry(bin).or_default().entry(id).or_insert(0) += 1;
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn merge(&mut self, other: Aggregator<'_>) {
        let remap: Vec<u32> = other.names.iter().map(|n| self.intern(n)).collect();
        for (bin, counts) in other.bins {
            let mine = self.bins.entry(bin).or_default();
            for (id, c) in counts {
                *mine.entry(remap[id as usize]).or_insert(0) += c;
            }
        }
        let r = &mut self.report;
        r.events += other.report.events;
        r.matched += other.report.matched;
        r.cohort_rejected += other.report.cohort_rejected;
        r.missing_birthdate += other.report.missing_birthdate;
        r.uncatalogued += other.report.uncatalogued;
    }

    pub fn finish(self) -> Aggregation {
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| self.names[a as usize].cmp(&self.names[b as usize]));
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let label = self.cohort.label();
        let dists: Vec<PopularityDistribution> = self
            .bins
            .into_iter()
            .map(|(index, counts)| {
                PopularityDistribution::new(
                    TimeBin::from_index(self.granularity, index),
                    label.clone(),
                    counts.into_iter().map(|(id, c)| (ItemId(remap[id as usize]), c)),
                )
            })
            .collect();
        if dists.is_empty() {
            log::warn!("no events matched cohort `{label}`");
        }
        let mut names = self.names;
        let sorted: Vec<String> = order.iter().map(|&i| std::mem::take(&mut names[i as usize])).collect();
        Aggregation {
            vocab: Vocabulary { names: sorted },
            dists,
            report: self.report,
        }
    }
}

/// Aggregates events into one distribution per non-empty bin.
pub fn aggregate<'e>(
    events: impl IntoIterator<Item = &'e LoanEvent>,
    granularity: Granularity,
    cohort: &CohortFilter,
    catalog: Option<&CanonicalCatalog>,
) -> Aggregation {
    let mut agg = Aggregator::new(granularity, cohort.clone(), catalog);
    for e in events {
        agg.push(e);
    }
    agg.finish()
}

/// The `k` items with most loans over all of `dists`, ties broken by id.
pub fn top_k_items(dists: &[PopularityDistribution], k: usize) -> Vec<ItemId> {
    let mut totals: HashMap<ItemId, u64> = HashMap::new();
    for d in dists {
        for &(id, c) in d.counts() {
            *totals.entry(id).or_insert(0) += c;
        }
    }
    let mut ranked: Vec<(ItemId, u64)> = totals.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    let mut kept: Vec<ItemId> = ranked.into_iter().map(|(id, _)| id).collect();
    kept.sort_unstable();
    kept
}

/// Keeps only the `k` items most loaned across all bins; every bin is filtered
/// to that one set.
pub fn restrict_top_k(dists: &[PopularityDistribution], k: usize) -> Result<Vec<PopularityDistribution>> {
    if k == 0 {
        return Err(Error::InvalidParameter("top-k must be at least 1".into()));
    }
    let kept = top_k_items(dists, k);
    if kept.len() < k {
        log::info!("only {} distinct items, fewer than top-k {k}; keeping all", kept.len());
    }
    Ok(dists
        .iter()
        .map(|d| {
            PopularityDistribution::new(
                d.bin,
                d.cohort.clone(),
                d.counts()
                    .iter()
                    .filter(|(id, _)| kept.binary_search(id).is_ok())
                    .copied(),
            )
        })
        .collect())
}
