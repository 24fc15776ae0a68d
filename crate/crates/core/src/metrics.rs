//! Ranking quality measures.
//!
//! NDCG uses exponential gain `2^rel - 1` with a `log2(i + 1)` discount at
//! 1-based position `i`. A slate whose grades are all zero has no ideal
//! ordering; it scores 0 and is left out of averages.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NDCG_K: usize = 10;

fn gain(rel: f64) -> f64 {
    rel.exp2() - 1.0
}

fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

/// DCG of the first `k` grades, given in ranked order.
pub fn dcg_at_k(relevances: &[f64], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) * discount(i))
        .sum()
}

/// DCG of the same grades in descending order.
pub fn ideal_dcg_at_k(relevances: &[f64], k: usize) -> f64 {
    let mut sorted = relevances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    dcg_at_k(&sorted, k)
}

/// NDCG@k, or `None` when every grade is zero.
pub fn ndcg_checked(relevances: &[f64], k: usize) -> Option<f64> {
    let ideal = ideal_dcg_at_k(relevances, k);
    if ideal <= 0.0 {
        return None;
    }
    Some((dcg_at_k(relevances, k) / ideal).clamp(0.0, 1.0))
}

/// NDCG@k in [0, 1]; all-zero grades give 0.
pub fn ndcg_at_k(relevances: &[f64], k: usize) -> f64 {
    ndcg_checked(relevances, k).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
    pub slate_count: usize,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "metric,k,value,slate_count"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.metric,
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            self.value,
            self.slate_count
        )
    }
}

/// Mean NDCG@k over ranked grade lists, skipping all-zero slates.
///
/// Returns the report and the number of skipped slates.
pub fn mean_ndcg_at_k<'a, I>(slates: I, k: usize) -> (MetricReport, usize)
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sum = 0.0;
    let mut counted = 0;
    let mut skipped = 0;
    for rel in slates {
        match ndcg_checked(rel, k) {
            Some(v) => {
                sum += v;
                counted += 1;
            }
            None => skipped += 1,
        }
    }
    let value = if counted > 0 { sum / counted as f64 } else { 0.0 };
    (
        MetricReport {
            metric: "ndcg".to_string(),
            k: Some(k),
            value,
            slate_count: counted,
        },
        skipped,
    )
}

/// Kendall's tau-a between two orderings of the same ids.
///
/// Counts discordant pairs by merge-sort inversion counting. Fewer than
/// two items gives 1.
pub fn kendall_tau<T: Eq + Hash + std::fmt::Debug>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "rankings have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let pos_b: HashMap<&T, usize> = b.iter().enumerate().map(|(i, id)| (id, i)).collect();
    if pos_b.len() != b.len() {
        return Err(Error::Input("second ranking repeats an id".into()));
    }
    let mut seq = Vec::with_capacity(a.len());
    let mut seen = BTreeSet::new();
    for id in a {
        let p = *pos_b
            .get(id)
            .ok_or_else(|| Error::Input(format!("id {id:?} missing from second ranking")))?;
        if !seen.insert(p) {
            return Err(Error::Input(format!("id {id:?} repeated in first ranking")));
        }
        seq.push(p);
    }
    let n = seq.len();
    if n < 2 {
        return Ok(1.0);
    }
    let discordant = count_inversions(&mut seq) as f64;
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((pairs - 2.0 * discordant) / pairs)
}

fn count_inversions(v: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid]) + count_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    inv
}

/// Set precision and recall of `predicted` against `truth`.
///
/// An empty prediction has precision 0.
pub fn precision_recall<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> (f64, f64) {
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hits / predicted.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dcg_examples() {
        assert_eq!(dcg_at_k(&[1.0], 1), 1.0);
        assert_eq!(dcg_at_k(&[0.0, 0.0, 0.0], 2), 0.0);
        let want = 7.0 + 3.0 / 3f64.log2() + 1.0 / 2.0;
        assert!((dcg_at_k(&[3.0, 2.0, 1.0], 3) - want).abs() < 1e-12);
        assert!((want - 9.3927).abs() < 1e-4);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[3.0, 2.0, 2.0, 0.0], 10), 1.0);
        let worst = (1.0 + 3.0 / 3f64.log2() + 7.0 / 2.0) / (7.0 + 3.0 / 3f64.log2() + 0.5);
        let v = ndcg_at_k(&[1.0, 2.0, 3.0], 3);
        assert!((v - worst).abs() < 1e-12);
        assert!((v - 0.6806).abs() < 1e-4);
        assert_eq!(ndcg_checked(&[0.0, 0.0], 10), None);
        assert_eq!(ndcg_at_k(&[0.0, 0.0], 10), 0.0);
    }

    #[test]
    fn mean_skips_all_zero() {
        let a = [1.0, 0.0];
        let b = [0.0, 0.0];
        let c = [0.0, 1.0];
        let (report, skipped) = mean_ndcg_at_k([&a[..], &b[..], &c[..]], 10);
        assert_eq!(skipped, 1);
        assert_eq!(report.slate_count, 2);
        assert!((report.value - (1.0 + 1.0 / 3f64.log2()) / 2.0).abs() < 1e-12);
        assert_eq!(report.csv_row(), format!("ndcg,10,{},2", report.value));
    }

    #[test]
    fn kendall_examples() {
        let a = ["a", "b", "c", "d"];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let rev = ["d", "c", "b", "a"];
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        let swapped = ["b", "a", "c"];
        assert!((kendall_tau(&["a", "b", "c"], &swapped).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&["a", "b"], &["a", "c"]).is_err());
        assert!(kendall_tau(&["a", "a"], &["a", "b"]).is_err());
        assert!(kendall_tau(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let p: BTreeSet<_> = ["A", "B", "C"].into_iter().collect();
        let h: BTreeSet<_> = ["A", "B", "D"].into_iter().collect();
        let (pr, rc) = precision_recall(&p, &h);
        assert!((pr - 2.0 / 3.0).abs() < 1e-15 && (rc - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_recall(&BTreeSet::<&str>::new(), &h), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn ndcg_bounds_and_ideal(grades in proptest::collection::vec(0u8..6, 1..15), k in 1usize..12) {
            let rel: Vec<f64> = grades.iter().map(|&g| f64::from(g)).collect();
            let v = ndcg_at_k(&rel, k);
            prop_assert!((0.0..=1.0).contains(&v));
            let mut sorted = rel.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if sorted[0] > 0.0 {
                prop_assert_eq!(ndcg_at_k(&sorted, k), 1.0);
            }
        }

        #[test]
        fn promoting_a_better_item_never_lowers_dcg(
            grades in proptest::collection::vec(0u8..6, 2..10),
            i in 0usize..10,
            j in 0usize..10,
        ) {
            let mut rel: Vec<f64> = grades.iter().map(|&g| f64::from(g)).collect();
            let (i, j) = (i % rel.len(), j % rel.len());
            let (early, late) = (i.min(j), i.max(j));
            let before = dcg_at_k(&rel, rel.len());
            if rel[late] > rel[early] {
                rel.swap(early, late);
                prop_assert!(dcg_at_k(&rel, rel.len()) >= before);
            }
        }

        #[test]
        fn tau_is_symmetric_and_bounded(perm in Just((0..9).collect::<Vec<u32>>()).prop_shuffle()) {
            let ident: Vec<u32> = (0..9).collect();
            let t = kendall_tau(&ident, &perm).unwrap();
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((t - kendall_tau(&perm, &ident).unwrap()).abs() < 1e-15);
        }
    }
}
