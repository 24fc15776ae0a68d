//! Seeded synthetic catalogs with a planted utility, for end-to-end runs
//! where the right ranking is known.
//!
//! Each topic gets `providers_per_topic` cells: home providers whose mission
//! embedding sits at cosine ≈ 0.8 to the topic, plus negatives drawn from
//! other topics' home providers (cosine ≈ 0). Utility is a fixed linear
//! combination of the normalized numerics plus `ALIGNMENT_GAIN · cos`, and
//! grades follow utility rank.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{
    CellKey, ContentItem, EmbeddingKind, EmbeddingRecord, Feature, FeatureSnapshot, Locale,
    ProviderId, SlateExample, TopicConfidence, TopicId,
};
use crate::error::{Error, Result};
use crate::features::{cosine_alignment, FeatureParams, FeatureStore};
use crate::truth::{assign_relevance, CandidateSet, LabelResponse, LabelSource};

/// Planted weight per normalized numeric feature. Alignment enters through
/// the cosine term instead.
pub const PLANTED_WEIGHTS: [f64; Feature::COUNT] = [0.25, 0.0, 0.1, 0.2, 0.05, 0.15, 0.2, 0.05];
pub const ALIGNMENT_GAIN: f64 = 2.0;
pub const HOME_COSINE: f64 = 0.8;
pub const SNAPSHOT_DAYS: u32 = 3;
pub const CONTENT_PER_TOPIC: usize = 2;

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub snapshots: Vec<FeatureSnapshot>,
    pub embeddings: Vec<EmbeddingRecord>,
    pub labels: Vec<LabelResponse>,
    pub candidates: Vec<CandidateSet>,
    pub content: Vec<ContentItem>,
    pub slates: Vec<SlateExample>,
    pub utility: BTreeMap<CellKey, f64>,
    pub params: FeatureParams,
}

impl SyntheticDataset {
    pub fn feature_store(&self) -> Result<FeatureStore> {
        FeatureStore::build(&self.snapshots, &self.embeddings, self.params)
    }
}

pub fn synthetic_locale() -> Locale {
    Locale::new("en", "US").expect("valid locale")
}

fn last_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 7).expect("valid date")
}

fn topic_id(t: usize) -> TopicId {
    TopicId::new(format!("topic-{t:03}")).expect("non-blank")
}

fn provider_id(t: usize, i: usize) -> ProviderId {
    ProviderId::new(format!("pub-{t:03}-{i:02}")).expect("non-blank")
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Unit vector at cosine `c` to the unit vector `axis`.
fn at_cosine(axis: &[f64], c: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let z = unit_gaussian(axis.len(), rng);
        let along: f64 = z.iter().zip(axis).map(|(a, b)| a * b).sum();
        let ortho: Vec<f64> = z.iter().zip(axis).map(|(a, b)| a - along * b).collect();
        let norm = ortho.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let s = (1.0 - c * c).sqrt();
            return axis
                .iter()
                .zip(&ortho)
                .map(|(a, o)| c * a + s * o / norm)
                .collect();
        }
    }
}

/// Raw daily values around a per-cell base level.
fn cell_snapshots(
    provider: &ProviderId,
    topic: &TopicId,
    locale: &Locale,
    rng: &mut ChaCha8Rng,
) -> Vec<FeatureSnapshot> {
    let base = [
        rng.random_range(0.0..1000.0),
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..60.0),
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..1.0),
        rng.random_range(5.0..300.0),
        rng.random_range(0.0..0.2),
        rng.random_range(0.0..5.0),
    ];
    (0..SNAPSHOT_DAYS)
        .map(|back| {
            let date = last_day() - chrono::Days::new(u64::from(SNAPSHOT_DAYS - 1 - back));
            let values = Feature::ALL
                .iter()
                .map(|&f| {
                    let jitter: f64 = rng.sample(StandardNormal);
                    let mut v = (base[f.index()] * (1.0 + 0.1 * jitter)).max(0.0);
                    if f.is_unit_interval() || f == Feature::BrandMissionAlignment {
                        v = v.min(1.0);
                    }
                    if f.is_count() {
                        v = v.round();
                    }
                    (f, v)
                })
                .collect();
            FeatureSnapshot {
                provider: provider.clone(),
                topic: topic.clone(),
                locale: locale.clone(),
                date,
                values,
            }
        })
        .collect()
}

/// Builds a synthetic catalog of `n_topics` slates of `providers_per_topic`
/// cells each, with embeddings of width `dim`.
pub fn make_synthetic_dataset(
    n_topics: usize,
    providers_per_topic: usize,
    dim: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    if n_topics < 2 || providers_per_topic < 2 || dim < 2 {
        return Err(Error::Parameter(
            "synthetic dataset needs at least 2 topics, 2 providers per topic and width 2".into(),
        ));
    }
    let n_neg = (providers_per_topic / 3).max(1);
    let n_home = providers_per_topic - n_neg;
    if (n_topics - 1) * n_home < n_neg {
        return Err(Error::Parameter(format!(
            "{n_topics} topics cannot supply {n_neg} foreign negatives per slate"
        )));
    }
    let locale = synthetic_locale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut embeddings = Vec::with_capacity(n_topics * (n_home + 1));
    let mut topic_vecs = Vec::with_capacity(n_topics);
    for t in 0..n_topics {
        let v = unit_gaussian(dim, &mut rng);
        embeddings.push(EmbeddingRecord {
            subject_id: topic_id(t).to_string(),
            kind: EmbeddingKind::TopicDefinition,
            vector: v.clone(),
        });
        topic_vecs.push(v);
    }
    let mut missions: BTreeMap<ProviderId, Vec<f64>> = BTreeMap::new();
    for (t, axis) in topic_vecs.iter().enumerate() {
        for i in 0..n_home {
            let c = HOME_COSINE + rng.random_range(-0.02..0.02);
            missions.insert(provider_id(t, i), at_cosine(axis, c, &mut rng));
        }
    }
    embeddings.extend(missions.iter().map(|(p, v)| EmbeddingRecord {
        subject_id: p.to_string(),
        kind: EmbeddingKind::ProviderMission,
        vector: v.clone(),
    }));

    let mut members: Vec<(TopicId, Vec<ProviderId>)> = Vec::with_capacity(n_topics);
    let mut snapshots = Vec::new();
    for t in 0..n_topics {
        let topic = topic_id(t);
        let foreign: Vec<ProviderId> = (0..n_topics)
            .filter(|&o| o != t)
            .flat_map(|o| (0..n_home).map(move |i| provider_id(o, i)))
            .collect();
        let mut slate: Vec<ProviderId> = (0..n_home).map(|i| provider_id(t, i)).collect();
        slate.extend(foreign.choose_multiple(&mut rng, n_neg).cloned());
        slate.sort();
        for p in &slate {
            snapshots.extend(cell_snapshots(p, &topic, &locale, &mut rng));
        }
        members.push((topic, slate));
    }

    let params = FeatureParams {
        embedding_dim: dim,
        ..FeatureParams::default()
    };
    let store = FeatureStore::build(&snapshots, &embeddings, params)?;

    let mut utility = BTreeMap::new();
    let mut labels = Vec::with_capacity(n_topics);
    let mut candidates = Vec::with_capacity(n_topics);
    let mut slates = Vec::with_capacity(n_topics);
    for (t, (topic, slate)) in members.iter().enumerate() {
        let mut scored: Vec<(ProviderId, f64)> = Vec::with_capacity(slate.len());
        for p in slate {
            let cell = CellKey {
                provider: p.clone(),
                topic: topic.clone(),
                locale: locale.clone(),
            };
            let numeric = store
                .numeric(&cell)
                .ok_or_else(|| Error::Data(format!("synthetic cell {cell} missing")))?;
            let cos = cosine_alignment(&missions[p], &topic_vecs[t])?;
            let u = numeric
                .as_slice()
                .iter()
                .zip(PLANTED_WEIGHTS)
                .fold(0.0, |acc, (x, w)| acc + w * x)
                + ALIGNMENT_GAIN * cos;
            utility.insert(cell, u);
            scored.push((p.clone(), u));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let ranked: Vec<ProviderId> = scored[..n_home].iter().map(|(p, _)| p.clone()).collect();
        let mut negatives: Vec<ProviderId> =
            scored[n_home..].iter().map(|(p, _)| p.clone()).collect();
        negatives.sort();
        let label = LabelResponse {
            topic: topic.clone(),
            locale: locale.clone(),
            ranked_providers: ranked.clone(),
            source: LabelSource::HumanConsensus,
            additions: Vec::new(),
        };
        slates.push(assign_relevance(&label, &negatives, providers_per_topic)?);
        candidates.push(CandidateSet {
            topic: topic.clone(),
            locale: locale.clone(),
            positives: ranked,
            negatives,
            seed,
            shortfall: 0,
        });
        labels.push(label);
    }

    let mut content = Vec::with_capacity(n_topics * CONTENT_PER_TOPIC);
    for (t, (topic, _)) in members.iter().enumerate() {
        for k in 0..CONTENT_PER_TOPIC {
            let mut topics = vec![TopicConfidence {
                topic: topic.clone(),
                confidence: 0.9,
            }];
            for _ in 0..rng.random_range(1..=3usize) {
                let other = rng.random_range(0..n_topics);
                if other != t && topics.iter().all(|c| c.topic != topic_id(other)) {
                    topics.push(TopicConfidence {
                        topic: topic_id(other),
                        confidence: (rng.random_range(0.1..0.8f64) * 100.0).round() / 100.0,
                    });
                }
            }
            content.push(ContentItem {
                content_id: format!("c-{t:03}-{k}"),
                provider: provider_id(t, k % n_home),
                locale: locale.clone(),
                topics,
            });
        }
    }

    Ok(SyntheticDataset {
        snapshots,
        embeddings,
        labels,
        candidates,
        content,
        slates,
        utility,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::validate_catalog;
    use crate::metrics::ndcg_at_k;

    #[test]
    fn same_seed_same_dataset() {
        let a = make_synthetic_dataset(4, 6, 8, 11).unwrap();
        let b = make_synthetic_dataset(4, 6, 8, 11).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.slates, b.slates);
        assert_eq!(a.content, b.content);
        let c = make_synthetic_dataset(4, 6, 8, 12).unwrap();
        assert_ne!(a.embeddings, c.embeddings);
    }

    #[test]
    fn catalog_is_clean_and_shaped() {
        let d = make_synthetic_dataset(5, 9, 16, 3).unwrap();
        let report = validate_catalog(
            d.snapshots.iter().cloned().enumerate(),
            d.embeddings.iter().cloned().enumerate(),
            16,
        );
        assert!(report.is_clean(), "{:?}", report.violations);
        assert_eq!(d.slates.len(), 5);
        for s in &d.slates {
            s.check(9, true).unwrap();
            let zeros = s.items.iter().filter(|i| i.relevance == 0).count();
            assert_eq!(zeros, 3);
            let mut grades: Vec<u32> = s.items.iter().map(|i| i.relevance).filter(|&r| r > 0).collect();
            grades.sort_unstable();
            assert_eq!(grades, (1..=6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn oracle_ranking_is_perfect() {
        let d = make_synthetic_dataset(6, 12, 16, 5).unwrap();
        for s in &d.slates {
            let mut items: Vec<(f64, f64)> = s
                .items
                .iter()
                .map(|i| {
                    let cell = CellKey {
                        provider: i.provider.clone(),
                        topic: s.topic.clone(),
                        locale: s.locale.clone(),
                    };
                    (d.utility[&cell], f64::from(i.relevance))
                })
                .collect();
            items.sort_by(|a, b| b.0.total_cmp(&a.0));
            let rel: Vec<f64> = items.iter().map(|x| x.1).collect();
            assert_eq!(ndcg_at_k(&rel, 10), 1.0);
        }
    }

    #[test]
    fn random_ranking_is_far_from_perfect() {
        let d = make_synthetic_dataset(120, 30, 8, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut total = 0.0;
        for s in &d.slates {
            let mut rel: Vec<f64> = s.items.iter().map(|i| f64::from(i.relevance)).collect();
            rand::seq::SliceRandom::shuffle(rel.as_mut_slice(), &mut rng);
            total += ndcg_at_k(&rel, 10);
        }
        assert!(total / (d.slates.len() as f64) < 0.8);
    }

    #[test]
    fn home_providers_align_and_foreign_do_not() {
        let d = make_synthetic_dataset(3, 6, 32, 2).unwrap();
        let store = d.feature_store().unwrap();
        for s in &d.slates {
            for item in &s.items {
                let cell = CellKey {
                    provider: item.provider.clone(),
                    topic: s.topic.clone(),
                    locale: s.locale.clone(),
                };
                let a = store.numeric(&cell).unwrap()[Feature::BrandMissionAlignment];
                let home = item.provider.as_str()[4..7] == s.topic.as_str()[6..9];
                if home {
                    assert!((a - 0.9).abs() < 0.011, "{a}");
                } else {
                    assert!(a < 0.85, "{a}");
                }
            }
        }
    }
}
