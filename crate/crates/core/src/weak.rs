//! Fixed-weight linear scorer over normalized features.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{Feature, Locale, ProviderId, Record, TopicId};
use crate::error::{Error, Result};
use crate::features::{FeatureStore, NumericFeatures};

/// Non-negative weight per feature.
///
/// The default profile is the hand-set iteration-one weighting. Its weights
/// sum to 0.95 and are deliberately not renormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile([f64; Feature::COUNT]);

impl Default for WeightProfile {
    fn default() -> Self {
        WeightProfile([0.3, 0.1, 0.05, 0.1, 0.1, 0.1, 0.1, 0.1])
    }
}

impl WeightProfile {
    pub fn new(weights: [f64; Feature::COUNT]) -> Result<Self> {
        for (f, w) in Feature::ALL.iter().zip(weights) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "weight for `{f}` must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(WeightProfile(weights))
    }

    /// Builds a profile from a name → weight map holding exactly the 8 features.
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut weights = [0.0; Feature::COUNT];
        let mut seen = BTreeSet::new();
        for (name, &w) in map {
            let f: Feature = name
                .parse()
                .map_err(|_| Error::Config(format!("unknown weight key `{name}`")))?;
            weights[f.index()] = w;
            seen.insert(f);
        }
        if let Some(missing) = Feature::ALL.iter().find(|f| !seen.contains(f)) {
            return Err(Error::Config(format!("missing weight for `{missing}`")));
        }
        WeightProfile::new(weights)
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        Feature::ALL
            .iter()
            .map(|f| (f.name().to_string(), self.0[f.index()]))
            .collect()
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }
}

/// `Σ w_f · x_f`, accumulated in feature order.
pub fn score_linear(numeric: &NumericFeatures, weights: &WeightProfile) -> f64 {
    numeric
        .as_slice()
        .iter()
        .zip(weights.0.iter())
        .fold(0.0, |acc, (x, w)| acc + w * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedItem {
    pub provider: ProviderId,
    pub score: f64,
}

/// Providers for one (topic, locale) in rank order; rank is position + 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedSlate {
    pub topic: TopicId,
    pub locale: Locale,
    pub items: Vec<RankedItem>,
}

impl Record for RankedSlate {}

impl RankedSlate {
    /// Sorts `(provider, score)` pairs by descending score, ties by ascending id.
    pub fn from_scores(
        topic: TopicId,
        locale: Locale,
        scores: Vec<(ProviderId, f64)>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (p, s) in &scores {
            if !seen.insert(p) {
                return Err(Error::Input(format!(
                    "provider `{p}` appears twice in ({topic}, {locale})"
                )));
            }
            if !s.is_finite() {
                return Err(Error::Data(format!("provider `{p}` has non-finite score")));
            }
        }
        let mut items: Vec<RankedItem> = scores
            .into_iter()
            .map(|(provider, score)| RankedItem { provider, score })
            .collect();
        items.sort_by(rank_order);
        Ok(RankedSlate {
            topic,
            locale,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn providers(&self) -> impl Iterator<Item = &ProviderId> {
        self.items.iter().map(|i| &i.provider)
    }

    /// 1-based rank of `provider`, if present.
    pub fn rank_of(&self, provider: &ProviderId) -> Option<usize> {
        self.items
            .iter()
            .position(|i| &i.provider == provider)
            .map(|p| p + 1)
    }
}

fn rank_order(a: &RankedItem, b: &RankedItem) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.provider.cmp(&b.provider))
}

pub fn rank_topic(
    topic: TopicId,
    locale: Locale,
    cells: &[(ProviderId, NumericFeatures)],
    weights: &WeightProfile,
) -> Result<RankedSlate> {
    if cells.is_empty() {
        return Err(Error::Input(format!(
            "no cells to rank for ({topic}, {locale})"
        )));
    }
    let scores = cells
        .iter()
        .map(|(p, n)| (p.clone(), score_linear(n, weights)))
        .collect();
    RankedSlate::from_scores(topic, locale, scores)
}

pub fn top_k(slate: &RankedSlate, k: usize) -> Result<RankedSlate> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    Ok(RankedSlate {
        topic: slate.topic.clone(),
        locale: slate.locale.clone(),
        items: slate.items.iter().take(k).cloned().collect(),
    })
}

/// Weak-ranks every (topic, locale) cohort held by `store`.
pub fn rank_all(store: &FeatureStore, weights: &WeightProfile) -> Result<Vec<RankedSlate>> {
    store
        .cohorts()
        .into_iter()
        .map(|((topic, locale), cells)| rank_topic(topic, locale, &cells, weights))
        .collect()
}
