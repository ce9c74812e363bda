//! Divergences between popularity distributions.
//!
//! All functions walk the union of two sparse supports in id order and never
//! materialize dense vectors. Absent items have probability zero and
//! `0 * log 0` is taken as zero.
//!
//! The per-item decomposition carries a factor 1/2 so that the partial terms
//! sum to the entropy-form JSD `H(M) - (H(P) + H(Q)) / 2`, which is bounded by
//! one bit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;
use crate::popularity::{ItemId, RelativeDistribution};

/// Which divergence a value measures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    /// Jensen-Shannon divergence in bits.
    JsdBits,
    /// Tsallis-generalized JSD divided by its maximum, in `[0, 1]`.
    JsdAlphaNorm { alpha: f64 },
    Jaccard,
}

impl Measure {
    pub fn compute(&self, p: &RelativeDistribution, q: &RelativeDistribution) -> f64 {
        match *self {
            Measure::JsdBits => jsd_bits(p, q),
            Measure::JsdAlphaNorm { alpha } => normalized_alpha_value(p, q, alpha),
            Measure::Jaccard => jaccard_value(p, q),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::JsdBits => f.write_str("jsd"),
            Measure::JsdAlphaNorm { alpha } => write!(f, "alpha:{alpha}"),
            Measure::Jaccard => f.write_str("jaccard"),
        }
    }
}

/// Parses `jsd`, `jaccard`, or `alpha:<value>`.
impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "jsd" | "jsd_bits" => Ok(Measure::JsdBits),
            "jaccard" => Ok(Measure::Jaccard),
            _ => s
                .strip_prefix("alpha:")
                .and_then(|a| a.parse::<f64>().ok())
                .filter(|a| a.is_finite())
                .map(|alpha| Measure::JsdAlphaNorm { alpha })
                .ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "unknown measure `{s}` (expected jsd, jaccard or alpha:<value>)"
                    ))
                }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftValue {
    pub value: f64,
    pub measure: Measure,
    /// Loan totals behind the two inputs, when they came from counts.
    pub n_left: Option<u64>,
    pub n_right: Option<u64>,
}

impl DriftValue {
    fn bare(value: f64, measure: Measure) -> Self {
        DriftValue {
            value,
            measure,
            n_left: None,
            n_right: None,
        }
    }
}

/// Per-item partial JSD terms over the union support, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionBreakdown {
    pub partials: Vec<(ItemId, f64)>,
    /// Compensated sum of the partials.
    pub total: f64,
}

/// Merge-join over two id-sorted supports: `(id, p_i, q_i)`.
pub fn union_support<'a>(
    p: &'a RelativeDistribution,
    q: &'a RelativeDistribution,
) -> impl Iterator<Item = (ItemId, f64, f64)> + 'a {
    let (a, b) = (p.probs(), q.probs());
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || match (a.get(i), b.get(j)) {
        (Some(&(ia, pa)), Some(&(ib, qb))) => Some(if ia == ib {
            i += 1;
            j += 1;
            (ia, pa, qb)
        } else if ia < ib {
            i += 1;
            (ia, pa, 0.0)
        } else {
            j += 1;
            (ib, 0.0, qb)
        }),
        (Some(&(ia, pa)), None) => {
            i += 1;
            Some((ia, pa, 0.0))
        }
        (None, Some(&(ib, qb))) => {
            j += 1;
            Some((ib, 0.0, qb))
        }
        (None, None) => None,
    })
}

fn neg_xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits.
pub fn shannon_entropy(p: &RelativeDistribution) -> f64 {
    neumaier_sum(p.probs().iter().map(|&(_, x)| neg_xlog2x(x))).max(0.0)
}

/// JSD in bits via `H(M) - (H(P) + H(Q)) / 2`, clamped into `[0, 1]`.
pub fn jsd_bits(p: &RelativeDistribution, q: &RelativeDistribution) -> f64 {
    let h_m = neumaier_sum(union_support(p, q).map(|(_, a, b)| neg_xlog2x((a + b) / 2.0)));
    let value = h_m - (shannon_entropy(p) + shannon_entropy(q)) / 2.0;
    value.clamp(0.0, 1.0)
}

pub fn jsd(p: &RelativeDistribution, q: &RelativeDistribution) -> DriftValue {
    DriftValue::bare(jsd_bits(p, q), Measure::JsdBits)
}

/// `(p log2(2p/(p+q)) + q log2(2q/(p+q))) / 2`, never negative.
pub fn partial_jsd(p: f64, q: f64) -> f64 {
    let s = p + q;
    if s <= 0.0 {
        return 0.0;
    }
    let term = |x: f64| if x > 0.0 { x * (2.0 * x / s).log2() } else { 0.0 };
    (0.5 * (term(p) + term(q))).max(0.0)
}

/// JSD together with each item's additive share of it.
pub fn jsd_with_contributions(
    p: &RelativeDistribution,
    q: &RelativeDistribution,
) -> (DriftValue, ContributionBreakdown) {
    let partials: Vec<(ItemId, f64)> = union_support(p, q)
        .map(|(id, a, b)| (id, partial_jsd(a, b)))
        .collect();
    let total = neumaier_sum(partials.iter().map(|&(_, x)| x));
    (jsd(p, q), ContributionBreakdown { partials, total })
}

// p * (p^(alpha-1) - 1), accurate near alpha = 1.
fn tsallis_term(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x * ((alpha - 1.0) * x.ln()).exp_m1()
    } else {
        0.0
    }
}

fn power_sum(p: &RelativeDistribution, alpha: f64) -> f64 {
    neumaier_sum(p.probs().iter().map(|&(_, x)| x.powf(alpha)))
}

/// Tsallis entropy `(sum p^alpha - 1) / (1 - alpha)` in natural units.
pub fn tsallis_entropy(p: &RelativeDistribution, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Err(Error::AlphaIsOne);
    }
    if alpha == 0.0 {
        return Ok(p.support_len() as f64 - 1.0);
    }
    // Uses sum p = 1: sum p^alpha - 1 = sum p (p^(alpha-1) - 1).
    Ok(neumaier_sum(p.probs().iter().map(|&(_, x)| tsallis_term(x, alpha))) / (1.0 - alpha))
}

fn intersection_and_union(p: &RelativeDistribution, q: &RelativeDistribution) -> (usize, usize) {
    union_support(p, q).fold((0, 0), |(i, u), (_, a, b)| {
        (i + usize::from(a > 0.0 && b > 0.0), u + 1)
    })
}

/// Unnormalized `H_a(M) - (H_a(P) + H_a(Q)) / 2` in natural units. At
/// `alpha = 1` this is the JSD in nats.
pub fn jsd_alpha(p: &RelativeDistribution, q: &RelativeDistribution, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return jsd_bits(p, q) * std::f64::consts::LN_2;
    }
    if alpha == 0.0 {
        let (inter, union) = intersection_and_union(p, q);
        let half_sizes = (p.support_len() + q.support_len()) as f64 / 2.0;
        debug_assert_eq!(union + inter, p.support_len() + q.support_len());
        return half_sizes - inter as f64;
    }
    let sum = neumaier_sum(union_support(p, q).map(|(_, a, b)| {
        tsallis_term((a + b) / 2.0, alpha) - (tsallis_term(a, alpha) + tsallis_term(b, alpha)) / 2.0
    }));
    sum / (1.0 - alpha)
}

/// Largest attainable `jsd_alpha` given the entropies of `P` and `Q`:
/// `(2^(1-a) - 1) / 2 * (H_a(P) + H_a(Q) + 2 / (1 - a))`.
///
/// Evaluated as `(2^(1-a) - 1) / (1-a) * (sum p^a + sum q^a) / 2`, the same
/// quantity without the cancellation near `a = 1`, where it tends to `ln 2`.
pub fn jsd_alpha_max(p: &RelativeDistribution, q: &RelativeDistribution, alpha: f64) -> f64 {
    let scale = if alpha == 1.0 {
        std::f64::consts::LN_2
    } else {
        let x = (1.0 - alpha) * std::f64::consts::LN_2;
        x.exp_m1() / (1.0 - alpha)
    };
    scale * (power_sum(p, alpha) + power_sum(q, alpha)) / 2.0
}

fn normalized_alpha_value(p: &RelativeDistribution, q: &RelativeDistribution, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return jsd_bits(p, q);
    }
    let (inter, _) = intersection_and_union(p, q);
    if alpha == 0.0 {
        let half_sizes = (p.support_len() + q.support_len()) as f64 / 2.0;
        return (1.0 - inter as f64 / half_sizes).clamp(0.0, 1.0);
    }
    // The maximum is the value on disjoint supports; return it exactly.
    if inter == 0 {
        return 1.0;
    }
    if p == q {
        return 0.0;
    }
    let max = jsd_alpha_max(p, q, alpha);
    if max.is_nan() || max <= 0.0 {
        return 0.0;
    }
    (jsd_alpha(p, q, alpha) / max).clamp(0.0, 1.0)
}

/// `jsd_alpha / jsd_alpha_max`, in `[0, 1]`. Equals the JSD in bits at
/// `alpha = 1`; at `alpha = 0` it is `1 - |P ∩ Q| / ((|P| + |Q|) / 2)` over
/// supports. Orders outside `[0, 2]` are computed but logged.
pub fn jsd_alpha_normalized(p: &RelativeDistribution, q: &RelativeDistribution, alpha: f64) -> DriftValue {
    if !(0.0..=2.0).contains(&alpha) {
        log::warn!("alpha = {alpha} lies outside [0, 2]; the normalized divergence is not a metric there");
    }
    DriftValue::bare(normalized_alpha_value(p, q, alpha), Measure::JsdAlphaNorm { alpha })
}

fn jaccard_value(p: &RelativeDistribution, q: &RelativeDistribution) -> f64 {
    let (inter, union) = intersection_and_union(p, q);
    1.0 - inter as f64 / union as f64
}

/// `1 - |Supp P ∩ Supp Q| / |Supp P ∪ Supp Q|`; ignores popularity.
pub fn jaccard_distance(p: &RelativeDistribution, q: &RelativeDistribution) -> DriftValue {
    DriftValue::bare(jaccard_value(p, q), Measure::Jaccard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(pairs: &[(u32, f64)]) -> RelativeDistribution {
        RelativeDistribution::from_weights(pairs.iter().map(|&(i, w)| (ItemId(i), w))).unwrap()
    }

    // Dense brute-force oracle with natural logs, independent of the sparse
    // merge and of the entropy form.
    fn dense_jsd_bits(p: &RelativeDistribution, q: &RelativeDistribution) -> f64 {
        let n = p.probs().iter().chain(q.probs()).map(|&(i, _)| i.0).max().unwrap() as usize + 1;
        let (mut pv, mut qv) = (vec![0.0; n], vec![0.0; n]);
        p.probs().iter().for_each(|&(i, x)| pv[i.0 as usize] = x);
        q.probs().iter().for_each(|&(i, x)| qv[i.0 as usize] = x);
        let kl = |a: &[f64], m: &[f64]| -> f64 {
            a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).ln()).sum()
        };
        let m: Vec<f64> = pv.iter().zip(&qv).map(|(a, b)| (a + b) / 2.0).collect();
        (kl(&pv, &m) + kl(&qv, &m)) / 2.0 / std::f64::consts::LN_2
    }

    // The normalization exactly as usually printed, for comparison with the
    // rearranged form.
    fn literal_alpha_max(p: &RelativeDistribution, q: &RelativeDistribution, a: f64) -> f64 {
        let h = |d: &RelativeDistribution| (d.probs().iter().map(|&(_, x)| x.powf(a)).sum::<f64>() - 1.0) / (1.0 - a);
        (2f64.powf(1.0 - a) - 1.0) / 2.0 * (h(p) + h(q) + 2.0 / (1.0 - a))
    }

    #[test]
    fn entropy_values() {
        assert_eq!(shannon_entropy(&dist(&[(0, 1.0)])), 0.0);
        assert_eq!(shannon_entropy(&dist(&[(0, 1.0), (1, 1.0)])), 1.0);
        let uniform8 = dist(&(0..8).map(|i| (i, 1.0)).collect::<Vec<_>>());
        assert!((shannon_entropy(&uniform8) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn jsd_reference_values() {
        let p = dist(&[(0, 1.0)]);
        let q = dist(&[(0, 1.0), (1, 1.0)]);
        // H(0.75, 0.25) - 1/2
        let expected = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2()) - 0.5;
        assert!((jsd_bits(&p, &q) - expected).abs() < 1e-15);
        assert!((jsd_bits(&p, &q) - 0.311278).abs() < 1e-6);
        assert_eq!(jsd_bits(&q, &q), 0.0);
        assert_eq!(jsd_bits(&p, &dist(&[(5, 1.0)])), 1.0);
    }

    #[test]
    fn contribution_reference_values() {
        let p = dist(&[(0, 1.0)]);
        let q = dist(&[(0, 1.0), (1, 1.0)]);
        let (value, parts) = jsd_with_contributions(&p, &q);
        let a = 0.5 * ((4.0f64 / 3.0).log2() + 0.5 * (2.0f64 / 3.0).log2());
        assert!((parts.partials[0].1 - a).abs() < 1e-15);
        assert!((parts.partials[0].1 - 0.061278).abs() < 1e-6);
        assert_eq!(parts.partials[1], (ItemId(1), 0.25));
        assert!((parts.total - value.value).abs() < 1e-15);
        assert_eq!(partial_jsd(0.3, 0.3), 0.0);
        assert_eq!(partial_jsd(0.0, 0.0), 0.0);
    }

    #[test]
    fn tsallis_values() {
        let two = dist(&[(0, 1.0), (1, 1.0)]);
        assert!((tsallis_entropy(&two, 2.0).unwrap() - 0.5).abs() < 1e-15);
        let five = dist(&(0..5).map(|i| (i, i as f64 + 1.0)).collect::<Vec<_>>());
        assert_eq!(tsallis_entropy(&five, 0.0).unwrap(), 4.0);
        assert_eq!(tsallis_entropy(&dist(&[(3, 1.0)]), 2.0).unwrap(), 0.0);
        assert!(matches!(tsallis_entropy(&two, 1.0), Err(Error::AlphaIsOne)));
        // Approaches Shannon entropy in nats.
        let h = tsallis_entropy(&five, 1.0 + 1e-7).unwrap();
        assert!((h - shannon_entropy(&five) * std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn alpha_reference_values() {
        let (p, q) = (dist(&[(0, 1.0)]), dist(&[(1, 1.0)]));
        assert!((jsd_alpha(&p, &q, 2.0) - 0.5).abs() < 1e-15);
        assert!((jsd_alpha_max(&p, &q, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(jsd_alpha_normalized(&p, &q, 2.0).value, 1.0);

        let abc = dist(&[(0, 1.0), (1, 2.0), (2, 3.0)]);
        let bcd = dist(&[(1, 5.0), (2, 1.0), (3, 1.0)]);
        let v0 = jsd_alpha_normalized(&abc, &bcd, 0.0).value;
        assert!((v0 - (1.0 - 2.0 / 3.0)).abs() < 1e-15);
        // The closed form agrees with the general formula just above zero.
        let near0 = jsd_alpha(&abc, &bcd, 1e-9) / jsd_alpha_max(&abc, &bcd, 1e-9);
        assert!((near0 - v0).abs() < 1e-6);

        let v1 = jsd_alpha_normalized(&abc, &bcd, 1.0).value;
        assert_eq!(v1, jsd_bits(&abc, &bcd));
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((jsd_alpha_normalized(&abc, &bcd, a).value - v1).abs() < 1e-3);
        }
        assert_eq!(jsd_alpha_normalized(&abc, &abc, 2.0).value, 0.0);
        assert_eq!(jsd_alpha_normalized(&p, &p, 0.5).value, 0.0);
    }

    #[test]
    fn alpha_max_matches_printed_form() {
        let p = dist(&[(0, 1.0), (1, 2.0), (2, 3.0), (7, 0.5)]);
        let q = dist(&[(1, 5.0), (2, 1.0), (3, 1.0)]);
        for a in [0.25, 0.5, 0.9, 1.5, 2.0, 3.0] {
            let lit = literal_alpha_max(&p, &q, a);
            assert!((jsd_alpha_max(&p, &q, a) - lit).abs() < 1e-12 * lit.abs().max(1.0), "alpha {a}");
        }
    }

    #[test]
    fn jaccard_values() {
        let abc = dist(&[(0, 1.0), (1, 1.0), (2, 1.0)]);
        let bcd = dist(&[(1, 1.0), (2, 9.0), (3, 1.0)]);
        assert_eq!(jaccard_distance(&abc, &abc).value, 0.0);
        assert_eq!(jaccard_distance(&abc, &bcd).value, 0.5);
        assert_eq!(jaccard_distance(&abc, &dist(&[(9, 1.0)])).value, 1.0);
    }

    #[test]
    fn measure_parsing() {
        assert_eq!("jsd".parse::<Measure>().unwrap(), Measure::JsdBits);
        assert_eq!("alpha:0.5".parse::<Measure>().unwrap(), Measure::JsdAlphaNorm { alpha: 0.5 });
        assert!("alpha:x".parse::<Measure>().is_err());
        assert_eq!(Measure::JsdAlphaNorm { alpha: 2.0 }.to_string(), "alpha:2");
    }

    fn arb_dist(max_items: u32) -> impl Strategy<Value = RelativeDistribution> {
        proptest::collection::btree_map(0..max_items, 1e-3f64..1.0, 1..40)
            .prop_map(|m| RelativeDistribution::from_weights(m.into_iter().map(|(i, w)| (ItemId(i), w))).unwrap())
    }

    proptest! {
        #[test]
        fn measures_are_symmetric_and_bounded(p in arb_dist(60), q in arb_dist(60)) {
            for m in [Measure::JsdBits, Measure::Jaccard, Measure::JsdAlphaNorm { alpha: 0.5 },
                      Measure::JsdAlphaNorm { alpha: 2.0 }, Measure::JsdAlphaNorm { alpha: 0.0 }] {
                let (a, b) = (m.compute(&p, &q), m.compute(&q, &p));
                prop_assert_eq!(a, b);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert_eq!(m.compute(&p, &p), 0.0);
            }
        }

        #[test]
        fn decomposition_matches_dense_oracle(p in arb_dist(200), q in arb_dist(200)) {
            let (v, parts) = jsd_with_contributions(&p, &q);
            prop_assert!((parts.total - v.value).abs() < 1e-12);
            prop_assert!((dense_jsd_bits(&p, &q) - v.value).abs() < 1e-12);
            prop_assert!(parts.partials.iter().all(|&(_, x)| x >= 0.0));
        }

        #[test]
        fn sqrt_jsd_triangle(p in arb_dist(30), q in arb_dist(30), r in arb_dist(30)) {
            let d = |a: &RelativeDistribution, b: &RelativeDistribution| jsd_bits(a, b).sqrt();
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
        }

        #[test]
        fn normalized_alpha_triangle_on_shared_rank_frequency(
            weights in proptest::collection::vec(1e-3f64..1.0, 2..30),
            perms in proptest::collection::vec(any::<u64>(), 3),
            alpha_ix in 0usize..3,
        ) {
            // P, Q and R are permutations of one rank-frequency profile.
            let alpha = [0.5, 1.0, 2.0][alpha_ix];
            let n = weights.len() as u32;
            let permuted = |seed: u64| {
                let mut ids: Vec<u32> = (0..n).collect();
                let mut s = seed;
                for i in (1..ids.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ids.swap(i, (s >> 33) as usize % (i + 1));
                }
                RelativeDistribution::from_weights(ids.iter().zip(&weights).map(|(&i, &w)| (ItemId(i), w))).unwrap()
            };
            let (p, q, r) = (permuted(perms[0]), permuted(perms[1]), permuted(perms[2]));
            let d = |a: &RelativeDistribution, b: &RelativeDistribution| jsd_alpha_normalized(a, b, alpha).value.sqrt();
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
        }
    }
}
