//! Content-level provider-topic signal: per-slate score normalization,
//! top-3 topic averaging and multiplicative composition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{ContentItem, Locale, ProviderId, Record, TopicId};
use crate::error::{Error, Result};
use crate::weak::RankedSlate;

pub const DEFAULT_FLOOR: f64 = 0.1;
pub const TOP_TOPICS: usize = 3;

pub const FLAG_COLD_CONTENT: &str = "cold_content";
pub const FLAG_PARTIAL_TOPICS: &str = "partial_topics";

/// One row of the exported table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalEntry {
    pub topic: TopicId,
    pub provider: ProviderId,
    pub locale: Locale,
    pub score: f64,
}

impl Record for SignalEntry {}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::Parameter(format!("floor {floor} must lie in (0, 1)")));
    }
    Ok(())
}

/// Affine map of a slate's raw scores onto `[floor, 1]`; the top score maps
/// to 1. A single item or an all-equal slate maps to 1 throughout.
pub fn normalize_slate_scores(slate: &RankedSlate, floor: f64) -> Result<Vec<SignalEntry>> {
    check_floor(floor)?;
    if slate.is_empty() {
        return Err(Error::Input(format!(
            "cannot normalize empty slate ({}, {})",
            slate.topic, slate.locale
        )));
    }
    let max = slate.items.iter().map(|i| i.score).fold(f64::NEG_INFINITY, f64::max);
    let min = slate.items.iter().map(|i| i.score).fold(f64::INFINITY, f64::min);
    Ok(slate
        .items
        .iter()
        .map(|item| {
            let score = if max == min || item.score == max {
                1.0
            } else {
                (floor + (item.score - min) / (max - min) * (1.0 - floor)).clamp(floor, 1.0)
            };
            SignalEntry {
                topic: slate.topic.clone(),
                provider: item.provider.clone(),
                locale: slate.locale.clone(),
                score,
            }
        })
        .collect())
}

/// Normalized score per (topic, provider, locale).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignalTable {
    scores: BTreeMap<(TopicId, ProviderId, Locale), f64>,
}

impl SignalTable {
    pub fn from_entries(entries: impl IntoIterator<Item = SignalEntry>) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for e in entries {
            if !(e.score > 0.0 && e.score <= 1.0) {
                return Err(Error::Data(format!(
                    "score {} for ({}, {}, {}) is outside (0, 1]",
                    e.score, e.topic, e.provider, e.locale
                )));
            }
            let key = (e.topic, e.provider, e.locale);
            if scores.insert(key.clone(), e.score).is_some() {
                return Err(Error::Input(format!(
                    "duplicate table entry for ({}, {}, {})",
                    key.0, key.1, key.2
                )));
            }
        }
        Ok(SignalTable { scores })
    }

    pub fn from_slates(slates: &[RankedSlate], floor: f64) -> Result<Self> {
        let mut entries = Vec::new();
        for s in slates {
            entries.extend(normalize_slate_scores(s, floor)?);
        }
        Self::from_entries(entries)
    }

    pub fn get(&self, topic: &TopicId, provider: &ProviderId, locale: &Locale) -> Option<f64> {
        self.scores
            .get(&(topic.clone(), provider.clone(), locale.clone()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Entries in key order.
    pub fn entries(&self) -> Vec<SignalEntry> {
        self.scores
            .iter()
            .map(|((topic, provider, locale), &score)| SignalEntry {
                topic: topic.clone(),
                provider: provider.clone(),
                locale: locale.clone(),
                score,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicScore {
    pub topic: TopicId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PxtSignal {
    pub content_id: String,
    pub score: f64,
    /// Contributing topics that were found in the table.
    pub topics: Vec<TopicScore>,
    pub flags: Vec<String>,
}

impl Record for PxtSignal {}

/// The `TOP_TOPICS` most confident distinct topics, ties by topic id.
pub fn top_topics(content: &ContentItem) -> Vec<TopicId> {
    let mut ranked: Vec<(f64, &TopicId)> = content
        .topics
        .iter()
        .map(|t| (t.confidence, &t.topic))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let mut seen = BTreeSet::new();
    ranked
        .into_iter()
        .filter(|(_, t)| seen.insert(*t))
        .take(TOP_TOPICS)
        .map(|(_, t)| t.clone())
        .collect()
}

/// Mean table score over the content's top topics. Topics missing from the
/// table are skipped; when none is found the signal is a neutral 1.0.
pub fn content_pxt(content: &ContentItem, table: &SignalTable, floor: f64) -> Result<PxtSignal> {
    check_floor(floor)?;
    content.check()?;
    let chosen = top_topics(content);
    let topics: Vec<TopicScore> = chosen
        .iter()
        .filter_map(|t| {
            table
                .get(t, &content.provider, &content.locale)
                .map(|score| TopicScore {
                    topic: t.clone(),
                    score,
                })
        })
        .collect();
    let mut flags = Vec::new();
    let score = if topics.is_empty() {
        flags.push(FLAG_COLD_CONTENT.to_string());
        1.0
    } else {
        if topics.len() < chosen.len() {
            flags.push(FLAG_PARTIAL_TOPICS.to_string());
        }
        let mean = topics.iter().map(|t| t.score).sum::<f64>() / topics.len() as f64;
        mean.clamp(floor, 1.0)
    };
    Ok(PxtSignal {
        content_id: content.content_id.clone(),
        score,
        topics,
        flags,
    })
}

pub fn export_signals(
    content: &[ContentItem],
    table: &SignalTable,
    floor: f64,
) -> Result<Vec<PxtSignal>> {
    content.iter().map(|c| content_pxt(c, table, floor)).collect()
}

/// Product of the other signals and the provider-topic score.
pub fn compose_multiplicative(others: &[f64], pxt: &PxtSignal) -> Result<f64> {
    for (i, &v) in others.iter().chain(std::iter::once(&pxt.score)).enumerate() {
        if !(v.is_finite() && v > 0.0) {
            let which = if i < others.len() {
                format!("signal #{i}")
            } else {
                format!("provider-topic score of `{}`", pxt.content_id)
            };
            return Err(Error::Composition(format!("{which} is {v}, expected a positive number")));
        }
    }
    Ok(others.iter().fold(1.0, |acc, v| acc * v) * pxt.score)
}
