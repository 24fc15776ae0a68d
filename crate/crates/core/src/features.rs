//! Turns daily snapshots into one normalized feature vector per cell.
//!
//! Pipeline per (provider, topic, locale): recency-weighted average of each
//! feature over a trailing window, then min-max normalization within the
//! (topic, locale, feature) cohort, then the mission/topic cosine replaces
//! the raw brand-mission feature.

use std::collections::{BTreeMap, HashMap};
use std::ops::Index;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    CellKey, EmbeddingKind, EmbeddingRecord, Feature, FeatureSnapshot, Locale, ProviderId,
    TopicId,
};
use crate::error::{Error, Result};

pub const DEFAULT_DECAY: f64 = 0.8;
pub const DEFAULT_WINDOW_DAYS: u32 = 7;

/// Exponentially weighted mean of the observations in `[as_of - window + 1, as_of]`.
///
/// A day of age `a` gets weight `decay^a`. Days without an observation
/// contribute nothing; an empty window yields 0.
pub fn recency_weighted_average(
    series: &[(NaiveDate, f64)],
    decay: f64,
    window_days: u32,
    as_of: NaiveDate,
) -> Result<f64> {
    check_decay(decay, window_days)?;
    let mut kept = Vec::with_capacity(series.len());
    for &(date, value) in series {
        let age = (as_of - date).num_days();
        if age < 0 {
            return Err(Error::Parameter(format!(
                "observation dated {date} is after as-of date {as_of}"
            )));
        }
        if !value.is_finite() {
            return Err(Error::Data(format!("non-finite observation on {date}")));
        }
        if age < i64::from(window_days) {
            kept.push((age, value));
        }
    }
    // weights relative to the freshest observation; the ratio is unchanged
    let newest = kept.iter().map(|&(age, _)| age).min().unwrap_or(0);
    let mut num = 0.0;
    let mut den = 0.0;
    for (age, value) in kept {
        let w = decay.powi((age - newest) as i32);
        num += w * value;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

fn check_decay(decay: f64, window_days: u32) -> Result<()> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::Parameter(format!("decay {decay} must lie in (0, 1]")));
    }
    if window_days == 0 {
        return Err(Error::Parameter("window_days must be at least 1".into()));
    }
    Ok(())
}

/// Min-max scales a cohort into [0, 1]. A degenerate cohort maps to 0.5.
pub fn normalize_cohort<K: Clone + std::fmt::Debug>(cells: &[(K, f64)]) -> Result<Vec<(K, f64)>> {
    if cells.is_empty() {
        return Err(Error::Input("cohort must contain at least one cell".into()));
    }
    if let Some((key, v)) = cells.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("cell {key:?} has non-finite value {v}")));
    }
    let min = cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let max = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    Ok(cells
        .iter()
        .map(|(k, v)| {
            let scaled = if range > 0.0 {
                ((v - min) / range).clamp(0.0, 1.0)
            } else {
                0.5
            };
            (k.clone(), scaled)
        })
        .collect())
}

/// Cosine similarity of two vectors, clamped to [-1, 1].
pub fn cosine_alignment(mission: &[f64], topic_def: &[f64]) -> Result<f64> {
    if mission.len() != topic_def.len() {
        return Err(Error::Dimension(format!(
            "cosine of vectors with lengths {} and {}",
            mission.len(),
            topic_def.len()
        )));
    }
    let dot: f64 = mission.iter().zip(topic_def).map(|(a, b)| a * b).sum();
    let na = mission.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = topic_def.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedAlignment(
            "cosine with a zero vector".to_string(),
        ));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// The eight features of a cell after normalization, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NumericFeatures(pub [f64; Feature::COUNT]);

impl NumericFeatures {
    pub fn new(values: [f64; Feature::COUNT]) -> Result<Self> {
        for (f, v) in Feature::ALL.iter().zip(values) {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Input(format!("feature `{f}` = {v} outside [0, 1]")));
            }
        }
        Ok(NumericFeatures(values))
    }

    pub fn splat(v: f64) -> Self {
        NumericFeatures([v; Feature::COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn set(&mut self, f: Feature, v: f64) {
        self.0[f.index()] = v;
    }
}

impl Index<Feature> for NumericFeatures {
    type Output = f64;
    fn index(&self, f: Feature) -> &f64 {
        &self.0[f.index()]
    }
}

/// Model input for one cell: the two embeddings plus the numeric block.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledInput {
    pub mission_embedding: Arc<[f64]>,
    pub topic_embedding: Arc<[f64]>,
    pub numeric: NumericFeatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub decay: f64,
    pub window_days: u32,
    pub embedding_dim: usize,
    /// Reference day; defaults to the latest snapshot date.
    pub as_of: Option<NaiveDate>,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            decay: DEFAULT_DECAY,
            window_days: DEFAULT_WINDOW_DAYS,
            embedding_dim: crate::catalog::DEFAULT_EMBEDDING_DIM,
            as_of: None,
        }
    }
}

/// A cell with its recency-averaged raw feature values.
type CellAverages = (CellKey, [f64; Feature::COUNT]);

/// Indexed snapshots and embeddings, with cohort-normalized numerics per cell.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    params: FeatureParams,
    as_of: Option<NaiveDate>,
    numeric: BTreeMap<CellKey, NumericFeatures>,
    missions: HashMap<String, Arc<[f64]>>,
    topics: HashMap<String, Arc<[f64]>>,
}

impl FeatureStore {
    pub fn build(
        snapshots: &[FeatureSnapshot],
        embeddings: &[EmbeddingRecord],
        params: FeatureParams,
    ) -> Result<Self> {
        check_decay(params.decay, params.window_days)?;

        let mut missions = HashMap::new();
        let mut topics = HashMap::new();
        for e in embeddings {
            if e.vector.len() != params.embedding_dim {
                return Err(Error::Dimension(format!(
                    "{} embedding `{}` has length {}, expected {}",
                    e.kind,
                    e.subject_id,
                    e.vector.len(),
                    params.embedding_dim
                )));
            }
            let target = match e.kind {
                EmbeddingKind::ProviderMission => &mut missions,
                EmbeddingKind::TopicDefinition => &mut topics,
            };
            target.insert(e.subject_id.clone(), Arc::from(e.vector.as_slice()));
        }

        let as_of = params.as_of.or_else(|| snapshots.iter().map(|s| s.date).max());
        let mut store = FeatureStore {
            params,
            as_of,
            numeric: BTreeMap::new(),
            missions,
            topics,
        };
        let Some(as_of) = as_of else {
            return Ok(store);
        };

        // Per-cell daily series for each feature.
        let mut series: BTreeMap<CellKey, Vec<&FeatureSnapshot>> = BTreeMap::new();
        for s in snapshots {
            if s.date > as_of {
                continue;
            }
            series.entry(s.cell()).or_default().push(s);
        }

        // Cells with no observation inside the window are excluded.
        let mut averaged: BTreeMap<(TopicId, Locale), Vec<CellAverages>> = BTreeMap::new();
        for (cell, rows) in series {
            let in_window = rows
                .iter()
                .any(|r| (as_of - r.date).num_days() < i64::from(params.window_days));
            if !in_window {
                continue;
            }
            let mut values = [0.0; Feature::COUNT];
            for f in Feature::ALL {
                let points: Vec<(NaiveDate, f64)> = rows
                    .iter()
                    .filter_map(|r| r.values.get(&f).map(|&v| (r.date, v)))
                    .collect();
                values[f.index()] =
                    recency_weighted_average(&points, params.decay, params.window_days, as_of)?;
            }
            averaged
                .entry((cell.topic.clone(), cell.locale.clone()))
                .or_default()
                .push((cell, values));
        }

        for (_, cohort) in averaged {
            let mut normalized: Vec<NumericFeatures> =
                vec![NumericFeatures::default(); cohort.len()];
            for f in Feature::ALL {
                let column: Vec<(usize, f64)> = cohort
                    .iter()
                    .enumerate()
                    .map(|(i, (_, v))| (i, v[f.index()]))
                    .collect();
                for (i, v) in normalize_cohort(&column)? {
                    normalized[i].set(f, v);
                }
            }
            for ((cell, _), mut numeric) in cohort.into_iter().zip(normalized) {
                if let (Some(m), Some(t)) = (
                    store.missions.get(cell.provider.as_str()),
                    store.topics.get(cell.topic.as_str()),
                ) {
                    let cos = cosine_alignment(m, t)?;
                    numeric.set(Feature::BrandMissionAlignment, (cos + 1.0) / 2.0);
                }
                store.numeric.insert(cell, numeric);
            }
        }
        Ok(store)
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn as_of(&self) -> Option<NaiveDate> {
        self.as_of
    }

    /// Normalized numerics for a cell, `None` when the cell has no snapshot
    /// inside the window. When either embedding is missing, the alignment
    /// feature keeps its cohort-normalized snapshot value.
    pub fn numeric(&self, cell: &CellKey) -> Option<&NumericFeatures> {
        self.numeric.get(cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &NumericFeatures)> {
        self.numeric.iter()
    }

    /// Cells grouped by (topic, locale), providers in ascending id order.
    pub fn cohorts(&self) -> BTreeMap<(TopicId, Locale), Vec<(ProviderId, NumericFeatures)>> {
        let mut out: BTreeMap<(TopicId, Locale), Vec<(ProviderId, NumericFeatures)>> =
            BTreeMap::new();
        for (cell, n) in &self.numeric {
            out.entry((cell.topic.clone(), cell.locale.clone()))
                .or_default()
                .push((cell.provider.clone(), *n));
        }
        out
    }

    pub fn mission_embedding(&self, provider: &ProviderId) -> Option<&Arc<[f64]>> {
        self.missions.get(provider.as_str())
    }

    pub fn topic_embedding(&self, topic: &TopicId) -> Option<&Arc<[f64]>> {
        self.topics.get(topic.as_str())
    }

    pub fn assemble(&self, cell: &CellKey) -> Result<AssembledInput> {
        let mission = self.missions.get(cell.provider.as_str()).ok_or_else(|| {
            Error::MissingEmbedding {
                subject_id: cell.provider.to_string(),
                kind: EmbeddingKind::ProviderMission.to_string(),
            }
        })?;
        let topic =
            self.topics
                .get(cell.topic.as_str())
                .ok_or_else(|| Error::MissingEmbedding {
                    subject_id: cell.topic.to_string(),
                    kind: EmbeddingKind::TopicDefinition.to_string(),
                })?;
        let numeric = self
            .numeric
            .get(cell)
            .ok_or_else(|| Error::Data(format!("no snapshot in window for cell {cell}")))?;
        Ok(AssembledInput {
            mission_embedding: mission.clone(),
            topic_embedding: topic.clone(),
            numeric: *numeric,
        })
    }
}

/// Assembles the model input for one cell from raw snapshots and embeddings.
///
/// The cohort for normalization is every provider with snapshots for the
/// same (topic, locale).
pub fn assemble_input(
    provider: &ProviderId,
    topic: &TopicId,
    locale: &Locale,
    snapshots: &[FeatureSnapshot],
    embeddings: &[EmbeddingRecord],
    params: FeatureParams,
) -> Result<AssembledInput> {
    let cohort: Vec<FeatureSnapshot> = snapshots
        .iter()
        .filter(|s| &s.topic == topic && &s.locale == locale)
        .cloned()
        .collect();
    let store = FeatureStore::build(&cohort, embeddings, params)?;
    store.assemble(&CellKey {
        provider: provider.clone(),
        topic: topic.clone(),
        locale: locale.clone(),
    })
}
