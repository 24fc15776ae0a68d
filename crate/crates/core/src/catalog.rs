//! Domain identifiers, records and their JSONL persistence.
//!
//! Every artifact on disk is JSON Lines: one object per line, fields in a
//! fixed order, floats printed in shortest round-trip form. Writing the same
//! records twice yields byte-identical files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default embedding width, matching the external embedding service.
pub const DEFAULT_EMBEDDING_DIM: usize = 1536;

/// Default slate capacity (providers per topic list).
pub const DEFAULT_SLATE_CAPACITY: usize = 30;

/// A (language, region) market, rendered as `en-US`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Locale {
    language: String,
    region: String,
}

impl Locale {
    pub fn new(language: &str, region: &str) -> Result<Self> {
        if language.is_empty() || !language.chars().all(|c| c.is_ascii_lowercase()) {
            return Err(Error::Input(format!(
                "locale language `{language}` must be non-empty lowercase ASCII"
            )));
        }
        if region.is_empty() || !region.chars().all(|c| c.is_ascii_uppercase()) {
            return Err(Error::Input(format!(
                "locale region `{region}` must be non-empty uppercase ASCII"
            )));
        }
        Ok(Locale {
            language: language.to_string(),
            region: region.to_string(),
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn region(&self) -> &str {
        &self.region
    }
}

impl FromStr for Locale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((lang, region)) => Locale::new(lang, region),
            None => Err(Error::Input(format!(
                "locale `{s}` must look like `en-US`"
            ))),
        }
    }
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.language, self.region)
    }
}

impl Serialize for Locale {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Locale {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.trim().is_empty() {
                    return Err(Error::Input(format!(
                        "{} must be a non-empty, non-whitespace string",
                        stringify!($name)
                    )));
                }
                Ok($name(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $name::new(s)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(
                deserializer: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                $name::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_id!(
    /// Opaque, case-sensitive content provider identifier.
    ProviderId
);
string_id!(
    /// Opaque, case-sensitive topic identifier.
    TopicId
);

/// The eight engagement and content features tracked per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Popularity,
    BrandMissionAlignment,
    EligibleArticleCount7d,
    HighQualityDocRatio,
    ProviderDocRatio,
    ClickDwellTime,
    Ctr,
    UserFeedback,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::Popularity,
        Feature::BrandMissionAlignment,
        Feature::EligibleArticleCount7d,
        Feature::HighQualityDocRatio,
        Feature::ProviderDocRatio,
        Feature::ClickDwellTime,
        Feature::Ctr,
        Feature::UserFeedback,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Popularity => "popularity",
            Feature::BrandMissionAlignment => "brand_mission_alignment",
            Feature::EligibleArticleCount7d => "eligible_article_count_7d",
            Feature::HighQualityDocRatio => "high_quality_doc_ratio",
            Feature::ProviderDocRatio => "provider_doc_ratio",
            Feature::ClickDwellTime => "click_dwell_time",
            Feature::Ctr => "ctr",
            Feature::UserFeedback => "user_feedback",
        }
    }

    /// Features whose raw value must lie in [0, 1].
    pub fn is_unit_interval(self) -> bool {
        matches!(
            self,
            Feature::HighQualityDocRatio | Feature::ProviderDocRatio | Feature::Ctr
        )
    }

    pub fn is_count(self) -> bool {
        matches!(self, Feature::EligibleArticleCount7d)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown feature `{s}`")))
    }
}

/// One day's raw feature values for a (provider, topic, locale) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSnapshot {
    pub provider: ProviderId,
    pub topic: TopicId,
    pub locale: Locale,
    pub date: NaiveDate,
    pub values: BTreeMap<Feature, f64>,
}

impl FeatureSnapshot {
    pub fn cell(&self) -> CellKey {
        CellKey {
            provider: self.provider.clone(),
            topic: self.topic.clone(),
            locale: self.locale.clone(),
        }
    }

    /// Every typed-invariant violation of this row, as human-readable text.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for feature in Feature::ALL {
            match self.values.get(&feature) {
                None => out.push(format!("missing feature `{feature}`")),
                Some(&v) if !v.is_finite() => out.push(format!("`{feature}` is not finite")),
                Some(&v) if v < 0.0 => out.push(format!("`{feature}` = {v} is negative")),
                Some(&v) if feature.is_unit_interval() && v > 1.0 => {
                    out.push(format!("`{feature}` = {v} exceeds 1"))
                }
                Some(&v) if feature.is_count() && v.fract() != 0.0 => {
                    out.push(format!("`{feature}` = {v} is not an integer count"))
                }
                Some(_) => {}
            }
        }
        out
    }
}

/// A (provider, topic, locale) cell key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub provider: ProviderId,
    pub topic: TopicId,
    pub locale: Locale,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.provider, self.topic, self.locale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    ProviderMission,
    TopicDefinition,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::ProviderMission => "provider_mission",
            EmbeddingKind::TopicDefinition => "topic_definition",
        })
    }
}

/// Fixed-width embedding of a provider mission statement or topic definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub subject_id: String,
    pub kind: EmbeddingKind,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.subject_id.trim().is_empty() {
            out.push("empty subject_id".to_string());
        }
        if self.vector.len() != dim {
            out.push(format!(
                "vector length {} does not match embedding dim {dim}",
                self.vector.len()
            ));
        }
        if self.vector.iter().any(|v| !v.is_finite()) {
            out.push("vector has non-finite entries".to_string());
        }
        if self.vector.iter().all(|&v| v == 0.0) {
            out.push("vector is all zeros".to_string());
        }
        out
    }
}

/// One annotator's yes/no selection of a provider for a topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Judgment {
    pub topic: TopicId,
    pub locale: Locale,
    pub provider: ProviderId,
    pub annotator: String,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlateItem {
    pub provider: ProviderId,
    pub relevance: u32,
}

/// One topic's graded provider list; the unit of listwise training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlateExample {
    pub topic: TopicId,
    pub locale: Locale,
    pub items: Vec<SlateItem>,
}

impl SlateExample {
    pub fn check(&self, capacity: usize, training: bool) -> Result<()> {
        let n = self.items.len();
        if n == 0 || n > capacity {
            return Err(Error::Input(format!(
                "slate ({}, {}) has {n} items, expected 1..={capacity}",
                self.topic, self.locale
            )));
        }
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert(&item.provider) {
                return Err(Error::Input(format!(
                    "slate ({}, {}) lists provider `{}` twice",
                    self.topic, self.locale, item.provider
                )));
            }
        }
        if training && self.items.iter().all(|i| i.relevance == 0) {
            return Err(Error::Input(format!(
                "training slate ({}, {}) has no positive item",
                self.topic, self.locale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicConfidence {
    pub topic: TopicId,
    pub confidence: f64,
}

/// A content item with its provider and inferred topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentItem {
    pub content_id: String,
    pub provider: ProviderId,
    pub locale: Locale,
    pub topics: Vec<TopicConfidence>,
}

impl ContentItem {
    pub fn check(&self) -> Result<()> {
        if self.content_id.trim().is_empty() {
            return Err(Error::Input("content_id must be non-empty".into()));
        }
        if self.topics.is_empty() {
            return Err(Error::Input(format!(
                "content `{}` has no topics",
                self.content_id
            )));
        }
        for t in &self.topics {
            if !t.confidence.is_finite() || !(0.0..=1.0).contains(&t.confidence) {
                return Err(Error::Input(format!(
                    "content `{}` topic `{}` has confidence {} outside [0, 1]",
                    self.content_id, t.topic, t.confidence
                )));
            }
        }
        Ok(())
    }
}

/// Context for per-line schema checks applied while loading.
#[derive(Debug, Clone, Copy, Default)]
pub struct SchemaContext {
    /// When set, embedding vectors must have exactly this length.
    pub embedding_dim: Option<usize>,
}

/// A record type that can be persisted as one JSONL line.
pub trait Record: Serialize + DeserializeOwned {
    /// Checks applied at load time beyond what deserialization enforces.
    fn check_schema(&self, _ctx: &SchemaContext) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl Record for FeatureSnapshot {}
impl Record for Judgment {}
impl Record for SlateExample {}
impl Record for ContentItem {}

impl Record for EmbeddingRecord {
    fn check_schema(&self, ctx: &SchemaContext) -> std::result::Result<(), String> {
        match ctx.embedding_dim {
            Some(dim) if self.vector.len() != dim => Err(format!(
                "vector length {} does not match embedding dim {dim}",
                self.vector.len()
            )),
            _ => Ok(()),
        }
    }
}

/// Streaming JSONL reader yielding `(line_number, record)` in file order.
pub struct JsonlReader<T> {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    ctx: SchemaContext,
    _marker: PhantomData<T>,
}

impl<T: Record> JsonlReader<T> {
    pub fn open(path: impl AsRef<Path>, ctx: SchemaContext) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(JsonlReader {
            lines: BufReader::new(file).lines(),
            path,
            line_no: 0,
            ctx,
            _marker: PhantomData,
        })
    }
}

impl<T: Record> Iterator for JsonlReader<T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        path: self.path.clone(),
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let record: T = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    let message = e.to_string();
                    // serde reports data-shape problems (unknown keys, bad ids)
                    // separately from syntax errors.
                    let err = if e.is_data() {
                        Error::Schema {
                            path: self.path.clone(),
                            line: self.line_no,
                            message,
                        }
                    } else {
                        Error::Parse {
                            path: self.path.clone(),
                            line: self.line_no,
                            message,
                        }
                    };
                    return Some(Err(err));
                }
            };
            if let Err(message) = record.check_schema(&self.ctx) {
                return Some(Err(Error::Schema {
                    path: self.path.clone(),
                    line: self.line_no,
                    message,
                }));
            }
            return Some(Ok((self.line_no, record)));
        }
    }
}

/// Loads every record of a JSONL file, keeping source line numbers.
pub fn load_jsonl_lines<T: Record>(
    path: impl AsRef<Path>,
    ctx: SchemaContext,
) -> Result<Vec<(usize, T)>> {
    JsonlReader::open(path, ctx)?.collect()
}

/// Loads every record of a JSONL file in file order.
pub fn load_jsonl<T: Record>(path: impl AsRef<Path>, ctx: SchemaContext) -> Result<Vec<T>> {
    JsonlReader::open(path, ctx)?
        .map(|r| r.map(|(_, rec)| rec))
        .collect()
}

/// Serializes one record per line in canonical form.
pub fn to_jsonl_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)
            .map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes `records` to `path` (via a sibling temp file and rename) and
/// returns the number of records written.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<usize> {
    let bytes = to_jsonl_bytes(records)?;
    write_atomic(path.as_ref(), &bytes)?;
    Ok(records.len())
}

/// Replaces `path` with `bytes` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("not a file path")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let file = File::create(&tmp).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    InvalidSnapshot,
    DuplicateSnapshot,
    InvalidEmbedding,
    DuplicateEmbedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// The offending row key, e.g. `(p, t, en-US, 2024-01-01)`.
    pub subject: String,
    pub detail: String,
    /// Source line numbers of the rows involved.
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CatalogReport {
    pub snapshot_rows: usize,
    pub embedding_rows: usize,
    pub providers: usize,
    pub topics: usize,
    pub locales: usize,
    pub violations: Vec<Violation>,
}

impl CatalogReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks snapshot and embedding rows against their typed invariants.
///
/// Inputs are `(line_number, record)` pairs. Violations are sorted by
/// kind, subject and detail so the report does not depend on row order.
pub fn validate_catalog<S, E>(snapshots: S, embeddings: E, embedding_dim: usize) -> CatalogReport
where
    S: IntoIterator<Item = (usize, FeatureSnapshot)>,
    E: IntoIterator<Item = (usize, EmbeddingRecord)>,
{
    let mut report = CatalogReport::default();
    let mut providers = BTreeSet::new();
    let mut topics = BTreeSet::new();
    let mut locales = BTreeSet::new();
    let mut rows: HashMap<(CellKey, NaiveDate), Vec<usize>> = HashMap::new();

    for (line, snap) in snapshots {
        report.snapshot_rows += 1;
        providers.insert(snap.provider.clone());
        topics.insert(snap.topic.clone());
        locales.insert(snap.locale.clone());
        let subject = format!(
            "({}, {}, {}, {})",
            snap.provider, snap.topic, snap.locale, snap.date
        );
        for detail in snap.violations() {
            report.violations.push(Violation {
                kind: ViolationKind::InvalidSnapshot,
                subject: subject.clone(),
                detail,
                lines: vec![line],
            });
        }
        rows.entry((snap.cell(), snap.date)).or_default().push(line);
    }
    for ((cell, date), mut lines) in rows {
        if lines.len() > 1 {
            lines.sort_unstable();
            report.violations.push(Violation {
                kind: ViolationKind::DuplicateSnapshot,
                subject: format!(
                    "({}, {}, {}, {date})",
                    cell.provider, cell.topic, cell.locale
                ),
                detail: format!("{} rows share this key", lines.len()),
                lines,
            });
        }
    }

    let mut subjects: HashMap<(String, EmbeddingKind), Vec<usize>> = HashMap::new();
    for (line, emb) in embeddings {
        report.embedding_rows += 1;
        let subject = format!("({}, {})", emb.subject_id, emb.kind);
        for detail in emb.violations(embedding_dim) {
            report.violations.push(Violation {
                kind: ViolationKind::InvalidEmbedding,
                subject: subject.clone(),
                detail,
                lines: vec![line],
            });
        }
        subjects
            .entry((emb.subject_id.clone(), emb.kind))
            .or_default()
            .push(line);
    }
    for ((id, kind), mut lines) in subjects {
        if lines.len() > 1 {
            lines.sort_unstable();
            report.violations.push(Violation {
                kind: ViolationKind::DuplicateEmbedding,
                subject: format!("({id}, {kind})"),
                detail: format!("{} rows share this key", lines.len()),
                lines,
            });
        }
    }

    report.providers = providers.len();
    report.topics = topics.len();
    report.locales = locales.len();
    report
        .violations
        .sort_by(|a, b| (&a.kind, &a.subject, &a.detail).cmp(&(&b.kind, &b.subject, &b.detail)));
    report
}
