//! Hand-computed examples through the public API.

use chrono::NaiveDate;
use driftlens::canon::{canonicalize, CanonConfig, ItemRecord};
use driftlens::divergence::{
    jaccard_distance, jsd_alpha, jsd_alpha_max, jsd_alpha_normalized, jsd_bits, jsd_with_contributions, partial_jsd,
    tsallis_entropy,
};
use driftlens::driftscan::{
    contribution_groups, group_schedule, trajectory_panel, transition_matrix, TrajectorySelector,
};
use driftlens::estimators::plugin_jsd;
use driftlens::forecast::{predict_drift, score};
use driftlens::ledger::{AgeBin, Category, Education, LoanEvent, Medium, Residence, Sex};
use driftlens::popularity::{normalize, top_k_items};
use driftlens::{
    CohortFilter, DriftSeries, Granularity, ItemId, Measure, PopularityDistribution, RelativeDistribution, SeriesKind,
    TimeBin,
};

fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn rel(pairs: &[(u32, f64)]) -> RelativeDistribution {
    RelativeDistribution::from_probs(pairs.iter().map(|&(i, p)| (ItemId(i), p))).unwrap()
}

fn month(y: i32, m: u32) -> TimeBin {
    TimeBin::containing(day(y, m, 1), Granularity::Month)
}

fn counts(bin: TimeBin, pairs: &[(u32, u64)]) -> PopularityDistribution {
    PopularityDistribution::new(bin, "all", pairs.iter().map(|&(i, c)| (ItemId(i), c)))
}

#[test]
fn point_mass_against_coin() {
    let (p, q) = (rel(&[(0, 1.0)]), rel(&[(0, 0.5), (1, 0.5)]));
    // H(0.75, 0.25) - 0.5
    let h = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
    assert!((jsd_bits(&p, &q) - (h - 0.5)).abs() < 1e-15);
    assert!((jsd_bits(&p, &q) - 0.311278).abs() < 1e-6);

    let (_, b) = jsd_with_contributions(&p, &q);
    let pa = 0.5 * ((4.0f64 / 3.0).log2() + 0.5 * (2.0f64 / 3.0).log2());
    assert!((b.partials[0].1 - pa).abs() < 1e-15);
    assert!((b.partials[0].1 - 0.061278).abs() < 1e-6);
    assert!((b.partials[1].1 - 0.25).abs() < 1e-15);
    assert!((partial_jsd(0.0, 0.5) - 0.25).abs() < 1e-15);
}

#[test]
fn plugin_from_counts() {
    let bin = month(2021, 1);
    let a = counts(bin, &[(0, 3), (1, 1)]);
    let b = counts(bin.next(), &[(0, 4)]);
    // H(0.875, 0.125) - 0.5 * H(0.75, 0.25)
    let h = |xs: &[f64]| -> f64 { xs.iter().map(|x| -x * x.log2()).sum() };
    let expected = h(&[0.875, 0.125]) - 0.5 * h(&[0.75, 0.25]);
    let v = plugin_jsd(&a, &b).unwrap();
    assert!((v.value - expected).abs() < 1e-15);
    assert!((v.value - 0.137925).abs() < 1e-6);
    assert_eq!((v.n_left, v.n_right), (Some(4), Some(4)));
    assert_eq!(plugin_jsd(&a, &a).unwrap().value, 0.0);
    let disjoint = counts(bin, &[(7, 2)]);
    assert!((plugin_jsd(&a, &disjoint).unwrap().value - 1.0).abs() < 1e-15);
}

#[test]
fn tsallis_family() {
    assert!((tsallis_entropy(&rel(&[(0, 0.5), (1, 0.5)]), 2.0).unwrap() - 0.5).abs() < 1e-15);
    let five = rel(&[(0, 0.2), (1, 0.2), (2, 0.2), (3, 0.2), (4, 0.2)]);
    assert!((tsallis_entropy(&five, 0.0).unwrap() - 4.0).abs() < 1e-12);
    assert_eq!(tsallis_entropy(&rel(&[(0, 1.0)]), 2.0).unwrap(), 0.0);

    let (a, b) = (rel(&[(0, 1.0)]), rel(&[(1, 1.0)]));
    assert!((jsd_alpha(&a, &b, 2.0) - 0.5).abs() < 1e-15);
    assert!((jsd_alpha_max(&a, &b, 2.0) - 0.5).abs() < 1e-15);
    assert_eq!(jsd_alpha_normalized(&a, &b, 2.0).value, 1.0);

    let p = rel(&[(0, 0.2), (1, 0.3), (2, 0.5)]);
    let q = rel(&[(1, 0.1), (2, 0.1), (3, 0.8)]);
    assert!((jsd_alpha_normalized(&p, &q, 0.0).value - (1.0 - 2.0 / 3.0)).abs() < 1e-12);
    assert_eq!(jsd_alpha_normalized(&p, &q, 1.0).value, jsd_bits(&p, &q));
    assert!((jaccard_distance(&p, &q).value - 0.5).abs() < 1e-15);
    assert_eq!(jaccard_distance(&p, &p).value, 0.0);
    assert_eq!(jaccard_distance(&a, &b).value, 1.0);
}

#[test]
fn calendar_bins() {
    let w = TimeBin::containing(day(2021, 4, 29), Granularity::Week);
    assert_eq!(w.start, day(2021, 4, 26));
    assert_eq!(w.end, day(2021, 5, 3));
    let q = TimeBin::containing(day(2021, 8, 15), Granularity::Quarter);
    assert_eq!((q.start, q.end), (day(2021, 7, 1), day(2021, 10, 1)));
    let m = month(2021, 12);
    assert_eq!(m.next().start, day(2022, 1, 1));
}

fn event(date: NaiveDate, birth: Option<NaiveDate>) -> LoanEvent {
    LoanEvent {
        date,
        item_key: "k".into(),
        title: "t".into(),
        creator: "c".into(),
        category: Category::AdultFiction,
        medium: Medium::Physical,
        loaner_id: "l".into(),
        birthdate: birth,
        sex: Sex::Female,
        education: Education::Higher,
        residence: Residence::LargeCity,
    }
}

#[test]
fn age_is_taken_on_the_loan_date() {
    let filter = CohortFilter {
        age: Some(AgeBin::new(30, Some(46)).unwrap()),
        ..CohortFilter::default()
    };
    let e = event(day(2022, 6, 1), Some(day(1990, 1, 1)));
    assert_eq!(e.age(), Some(32));
    assert!(filter.matches(&e));
    // The same loaner at 29, before turning 30.
    assert!(!filter.matches(&event(day(2019, 12, 31), Some(day(1990, 1, 1)))));
    assert!(CohortFilter::default().matches(&event(day(2022, 6, 1), None)));
}

#[test]
fn canonical_pairs() {
    let records = [
        ItemRecord::new("tn", "Ternet Ninja", "Anders Matthesen"),
        ItemRecord::new("tn1", "Ternet Ninja 1", "Anders Matthesen"),
        ItemRecord::new("tn2", "Ternet Ninja 2", "Anders Matthesen"),
        ItemRecord::new("as1", "Anna s Sang", "Ida Nord"),
        ItemRecord::new("as2", "Annas Sang", "Ida Nord"),
    ];
    let cat = canonicalize(&records, CanonConfig::default());
    assert_eq!(cat.resolve("tn1"), cat.resolve("tn"));
    assert_ne!(cat.resolve("tn2"), cat.resolve("tn"));
    assert_eq!(cat.resolve("as1"), cat.resolve("as2"));
    assert_eq!(cat.n_groups(), 3);
}

#[test]
fn single_item_change_lands_in_the_top_group() {
    let bin = month(2021, 1);
    let a = counts(bin, &[(0, 10), (1, 10), (2, 10)]);
    let b = counts(bin.next(), &[(0, 10), (1, 10), (2, 10), (3, 30)]);
    let pair = contribution_groups(&a, &b).unwrap();
    assert_eq!(pair.ranked[0].id, ItemId(3));
    assert_eq!(pair.ranked[0].group, 0);
    assert!((pair.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn static_ranking_keeps_every_group() {
    // 200 items whose counts never change: only G1 and G2 hold items.
    let start = month(2021, 1);
    let base: Vec<(u32, u64)> = (0..200).map(|i| (i, 1000 - i as u64)).collect();
    // Drift must be nonzero for groups to be defined, so perturb one item per bin
    // identically; the ranking of contributions stays the same.
    let dists: Vec<PopularityDistribution> = (0..4)
        .map(|t| {
            let mut c = base.clone();
            c[0].1 += if t % 2 == 0 { 0 } else { 500 };
            counts(TimeBin::from_index(Granularity::Month, start.index + t), &c)
        })
        .collect();
    let m = transition_matrix(&group_schedule(&dists).unwrap()).unwrap();
    for (g, row) in m.iter().enumerate() {
        assert!((row[g] - 1.0).abs() < 1e-12, "row {g}: {row:?}");
    }
}

#[test]
fn top_total_matches_sort_oracle() {
    let start = month(2021, 1);
    let dists: Vec<PopularityDistribution> = (0..3)
        .map(|t| {
            let c: Vec<(u32, u64)> = (0..50u32).map(|i| (i, u64::from((i * 7 + t * 13) % 23 + 1))).collect();
            counts(TimeBin::from_index(Granularity::Month, start.index + i64::from(t)), &c)
        })
        .collect();
    let mut totals: Vec<(u64, ItemId)> = (0..50u32)
        .map(|i| (dists.iter().map(|d| d.count_of(ItemId(i))).sum(), ItemId(i)))
        .collect();
    totals.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let oracle: Vec<ItemId> = totals.iter().take(10).map(|&(_, id)| id).collect();
    let mut got = top_k_items(&dists, 10);
    got.sort();
    let mut want = oracle.clone();
    want.sort();
    assert_eq!(got, want);

    let panel = trajectory_panel(&dists, TrajectorySelector::TopTotal { k: 10 }).unwrap();
    assert_eq!(panel.rows.len(), 10);
    assert!(panel.rows.windows(2).all(|w| (w[0].peak, w[0].id) <= (w[1].peak, w[1].id)));
}

#[test]
fn peak_column() {
    let start = month(2021, 1);
    let dists: Vec<PopularityDistribution> = (0..5)
        .map(|t| {
            let c = if t == 2 { vec![(0, 9), (1, 1)] } else { vec![(0, 1), (1, 1)] };
            counts(TimeBin::from_index(Granularity::Month, start.index + t), &c)
        })
        .collect();
    let panel = trajectory_panel(&dists, TrajectorySelector::TopPeak { k: 1 }).unwrap();
    assert_eq!(panel.rows[0].id, ItemId(0));
    assert_eq!(panel.rows[0].peak, 2);
    assert_eq!(panel.rows[0].counts, vec![1, 1, 9, 1, 1]);
}

#[test]
fn same_period_last_year() {
    let source = DriftSeries {
        measure: Measure::JsdBits,
        kind: SeriesKind::Local,
        entries: vec![driftlens::driftscan::SeriesEntry {
            bin: month(2022, 3),
            value: 0.2,
            std_error: None,
        }],
    };
    let predicted = predict_drift(&source, 2022, &[month(2023, 3)]);
    assert_eq!(predicted.entries.len(), 1);
    assert_eq!(predicted.entries[0].bin, month(2023, 3));
    assert_eq!(predicted.entries[0].value, 0.2);

    let observed = DriftSeries {
        entries: vec![driftlens::driftscan::SeriesEntry {
            bin: month(2023, 3),
            value: 0.25,
            std_error: None,
        }],
        ..predicted.clone()
    };
    let report = score(&predicted, &observed).unwrap();
    assert!((report.mae - 0.05).abs() < 1e-15);
}

#[test]
fn normalization_of_many_counts() {
    let bin = month(2021, 1);
    let c: Vec<(u32, u64)> = (0..1_000_000u32).map(|i| (i, u64::from(i % 97) + 1)).collect();
    let r = normalize(&counts(bin, &c)).unwrap();
    let sum: f64 = driftlens::numeric::neumaier_sum(r.probs().iter().map(|&(_, p)| p));
    assert!((sum - 1.0).abs() < 1e-12);
    let small = normalize(&counts(bin, &[(0, 3), (1, 1)])).unwrap();
    assert_eq!(small.probs(), &[(ItemId(0), 0.75), (ItemId(1), 0.25)]);
}
