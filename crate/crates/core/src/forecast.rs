//! Seasonal-naive drift prediction.
//!
//! A bin's drift is predicted by the observed drift at the same calendar
//! position (month, quarter or ISO week) of another year. Global series of
//! each year are measured from that year's first bin.

use serde::{Deserialize, Serialize};

use crate::divergence::Measure;
use crate::driftscan::{global_drift, local_drift, DriftSeries, SeriesEntry, SeriesKind};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::ledger::TimeBin;
use crate::numeric::neumaier_sum;
use crate::popularity::PopularityDistribution;

/// Re-indexes `source` onto `target_bins`: each target bin takes the value at
/// its calendar position in `source_year`. Targets without a source value are
/// left out with a warning.
pub fn predict_drift(source: &DriftSeries, source_year: i32, target_bins: &[TimeBin]) -> DriftSeries {
    let entries = target_bins
        .iter()
        .filter_map(|&t| {
            let found = t.at_year(source_year).and_then(|s| source.get(s));
            if found.is_none() {
                log::warn!("no source drift in {source_year} for target bin {t}; omitted");
            }
            found.map(|e| SeriesEntry {
                bin: t,
                value: e.value,
                std_error: e.std_error,
            })
        })
        .collect();
    let kind = match (source.kind, target_bins.first()) {
        (SeriesKind::Global { baseline }, Some(t)) => SeriesKind::Global {
            baseline: baseline.at_year(t.year()).unwrap_or(baseline),
        },
        (kind, _) => kind,
    };
    DriftSeries {
        measure: source.measure,
        kind,
        entries,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub bin: TimeBin,
    pub predicted: f64,
    pub observed: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub measure: Measure,
    /// Kind of the observed series.
    pub kind: SeriesKind,
    pub source_year: Option<i32>,
    pub target_year: Option<i32>,
    /// Baseline of the source series when it is global.
    pub source_baseline: Option<TimeBin>,
    pub rows: Vec<ForecastRow>,
    pub mae: f64,
    /// Mean absolute percentage error over bins with nonzero observed drift.
    pub mape_percent: Option<f64>,
    /// Bins left out of the MAPE because their observed drift is zero.
    pub mape_excluded: usize,
}

/// Compares the bins present in both series.
pub fn score(predicted: &DriftSeries, observed: &DriftSeries) -> Result<ForecastReport> {
    let rows: Vec<ForecastRow> = observed
        .entries
        .iter()
        .filter_map(|o| {
            predicted.get(o.bin).map(|p| ForecastRow {
                bin: o.bin,
                predicted: p.value,
                observed: o.value,
                abs_error: (p.value - o.value).abs(),
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mae = neumaier_sum(rows.iter().map(|r| r.abs_error)) / rows.len() as f64;
    let relative: Vec<f64> = rows
        .iter()
        .filter(|r| r.observed != 0.0)
        .map(|r| r.abs_error / r.observed.abs())
        .collect();
    let mape_excluded = rows.len() - relative.len();
    if mape_excluded > 0 {
        log::info!("{mape_excluded} bins with zero observed drift left out of the MAPE");
    }
    let mape_percent = (!relative.is_empty()).then(|| 100.0 * neumaier_sum(relative.iter().copied()) / relative.len() as f64);
    let target_year = rows.iter().map(|r| r.bin.year()).min();
    Ok(ForecastReport {
        measure: observed.measure,
        kind: observed.kind,
        source_year: None,
        target_year,
        source_baseline: None,
        rows,
        mae,
        mape_percent,
        mape_excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastKind {
    Local,
    Global,
}

/// First bin of `year` at the granularity of `like`.
pub fn first_bin_of_year(like: TimeBin, year: i32) -> TimeBin {
    let mut bin = like.at_year(year).unwrap_or(like);
    while bin.prev().year() == year {
        bin = bin.prev();
    }
    while bin.year() < year {
        bin = bin.next();
    }
    bin
}

/// Drift series restricted to bins of `year`. Global series are measured
/// from the first bin of that year.
pub fn yearly_series(
    dists: &[PopularityDistribution],
    year: i32,
    kind: ForecastKind,
    estimator: &Estimator,
    measure: Measure,
) -> Result<DriftSeries> {
    let any = dists.first().ok_or(Error::TooFewBins { needed: 2, got: 0 })?.bin;
    match kind {
        ForecastKind::Local => {
            // The first local value of a year compares with the last bin of
            // the year before, so neighbors outside the year are kept.
            let first = first_bin_of_year(any, year);
            let window: Vec<PopularityDistribution> = dists
                .iter()
                .filter(|d| d.bin.year() == year || d.bin == first.prev())
                .cloned()
                .collect();
            let mut series = local_drift(&window, estimator, measure)?;
            series.entries.retain(|e| e.bin.year() == year);
            Ok(series)
        }
        ForecastKind::Global => {
            let baseline = first_bin_of_year(any, year);
            let window: Vec<PopularityDistribution> = dists.iter().filter(|d| d.bin.year() == year).cloned().collect();
            global_drift(&window, baseline, estimator, measure)
        }
    }
}

/// Predicts `target_year` from `target_year - 1` and scores the prediction
/// against the observed series.
pub fn seasonal_forecast(
    dists: &[PopularityDistribution],
    target_year: i32,
    kind: ForecastKind,
    estimator: &Estimator,
    measure: Measure,
) -> Result<ForecastReport> {
    let source_year = target_year - 1;
    let source = yearly_series(dists, source_year, kind, estimator, measure)?;
    let observed = yearly_series(dists, target_year, kind, estimator, measure)?;
    let target_bins: Vec<TimeBin> = observed.entries.iter().map(|e| e.bin).collect();
    let predicted = predict_drift(&source, source_year, &target_bins);
    let mut report = score(&predicted, &observed)?;
    report.source_year = Some(source_year);
    report.target_year = Some(target_year);
    if let SeriesKind::Global { baseline } = source.kind {
        report.source_baseline = Some(baseline);
    }
    Ok(report)
}
