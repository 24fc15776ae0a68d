//! Flat TOML configuration shared by every subcommand.
//!
//! Command-line flags and `--set key=value` pairs are applied on top of the
//! file through [`Settings::set`], so a flag and a config key with the same
//! name always mean the same thing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::DEFAULT_SLATE_CAPACITY;
use crate::error::{Error, Result};
use crate::features::{FeatureParams, DEFAULT_DECAY, DEFAULT_WINDOW_DAYS};
use crate::metrics::DEFAULT_NDCG_K;
use crate::nn::optim::AdamConfig;
use crate::signal::DEFAULT_FLOOR;
use crate::trainer::{ModelKind, TrainingConfig};
use crate::truth::{Quorum, DEFAULT_POSITIVES, MIN_NEGATIVES};
use crate::weak::WeightProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub parallelism: usize,

    pub decay: f64,
    pub window_days: u32,
    pub embedding_dim: usize,
    pub as_of: Option<NaiveDate>,

    /// Feature name → weight; all eight features when present.
    pub weights: Option<BTreeMap<String, f64>>,

    pub positives: usize,
    pub negatives: usize,
    pub quorum_agree: u32,
    pub quorum_total: u32,
    pub template: Option<PathBuf>,
    pub max_attempts: usize,
    pub in_flight: usize,
    pub timeout_secs: u64,

    pub batch_size: usize,
    pub slate_capacity: usize,
    pub epochs: usize,
    pub negative_sampling: bool,
    pub model: ModelKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub validation_fraction: f64,
    pub max_pairs: usize,
    pub group_width: usize,
    pub hidden: usize,
    pub residual: bool,

    pub k: usize,
    pub floor: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let adam = AdamConfig::default();
        Settings {
            seed: 42,
            parallelism: 1,
            decay: DEFAULT_DECAY,
            window_days: DEFAULT_WINDOW_DAYS,
            embedding_dim: crate::catalog::DEFAULT_EMBEDDING_DIM,
            as_of: None,
            weights: None,
            positives: DEFAULT_POSITIVES,
            negatives: MIN_NEGATIVES,
            quorum_agree: 2,
            quorum_total: 3,
            template: None,
            max_attempts: 3,
            in_flight: 4,
            timeout_secs: 30,
            batch_size: t.batch_size,
            slate_capacity: DEFAULT_SLATE_CAPACITY,
            epochs: t.epochs,
            negative_sampling: t.negative_sampling,
            model: t.model,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            validation_fraction: t.validation_fraction,
            max_pairs: t.max_pairs,
            group_width: t.group_width,
            hidden: t.hidden,
            residual: t.residual,
            k: DEFAULT_NDCG_K,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Defaults overlaid with the file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Overrides one key. `value` is read as a TOML value, falling back to
    /// a plain string.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let toml::Value::Table(mut table) =
            toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?
        else {
            return Err(Error::Config("settings did not serialize to a table".into()));
        };
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        if !Settings::known_key(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        table.insert(key.to_string(), parsed);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {}", e.message())))?;
        Ok(())
    }

    /// Applies `key=value` strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for pair in pairs {
            let pair = pair.as_ref();
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn known_key(key: &str) -> bool {
        const KEYS: &[&str] = &[
            "seed", "parallelism", "decay", "window_days", "embedding_dim", "as_of", "weights",
            "positives", "negatives", "quorum_agree", "quorum_total", "template", "max_attempts",
            "in_flight", "timeout_secs", "batch_size", "slate_capacity", "epochs",
            "negative_sampling", "model", "lr", "beta1", "beta2", "eps", "validation_fraction",
            "max_pairs", "group_width", "hidden", "residual", "k", "floor",
        ];
        KEYS.contains(&key)
    }

    /// Canonical TOML of the effective settings.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn digest(&self) -> Result<String> {
        Ok(format!("{:x}", Sha256::digest(self.canonical()?.as_bytes())))
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            decay: self.decay,
            window_days: self.window_days,
            embedding_dim: self.embedding_dim,
            as_of: self.as_of,
        }
    }

    pub fn weight_profile(&self) -> Result<WeightProfile> {
        match &self.weights {
            None => Ok(WeightProfile::default()),
            Some(map) => WeightProfile::from_map(map),
        }
    }

    pub fn quorum(&self) -> Result<Quorum> {
        if self.quorum_total == 0 || self.quorum_agree == 0 || self.quorum_agree > self.quorum_total
        {
            return Err(Error::Config(format!(
                "quorum {}/{} is not a valid fraction",
                self.quorum_agree, self.quorum_total
            )));
        }
        Ok(Quorum {
            agree: self.quorum_agree,
            total: self.quorum_total,
        })
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            slate_capacity: self.slate_capacity,
            epochs: self.epochs,
            seed: self.seed,
            negative_sampling: self.negative_sampling,
            model: self.model,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            validation_fraction: self.validation_fraction,
            max_pairs: self.max_pairs,
            group_width: self.group_width,
            hidden: self.hidden,
            residual: self.residual,
            ndcg_k: self.k,
            parallelism: self.parallelism,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let s = Settings::default();
        assert_eq!(Settings::from_toml(&s.canonical().unwrap()).unwrap(), s);
        assert_eq!(Settings::from_toml("").unwrap(), s);
    }

    #[test]
    fn file_keys_and_overrides() {
        let mut s = Settings::from_toml("decay = 0.5\nmodel = \"pairwise\"\n").unwrap();
        assert_eq!(s.decay, 0.5);
        assert_eq!(s.model, ModelKind::Pairwise);
        s.apply_overrides(&["seed=7", "model=listwise", "negative_sampling=false", "as_of=2024-01-02"])
            .unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.model, ModelKind::Listwise);
        assert!(!s.negative_sampling);
        assert_eq!(s.as_of, NaiveDate::from_ymd_opt(2024, 1, 2));
        assert_eq!(s.training_config().seed, 7);
    }

    #[test]
    fn bad_keys_and_values_are_config_errors() {
        assert!(matches!(Settings::from_toml("colour = 1"), Err(Error::Config(_))));
        let mut s = Settings::default();
        assert!(matches!(s.set("colour", "1"), Err(Error::Config(_))));
        assert!(matches!(s.set("epochs", "many"), Err(Error::Config(_))));
        assert!(s.apply_overrides(&["epochs"]).is_err());
        assert_eq!(s, Settings::default());
    }

    #[test]
    fn weights_table() {
        let s = Settings::from_toml(
            "[weights]\npopularity = 1.0\nbrand_mission_alignment = 0\neligible_article_count_7d = 0\n\
             high_quality_doc_ratio = 0\nprovider_doc_ratio = 0\nclick_dwell_time = 0\nctr = 0\nuser_feedback = 0\n",
        )
        .unwrap();
        let w = s.weight_profile().unwrap();
        assert_eq!(w.get(crate::catalog::Feature::Popularity), 1.0);
        let partial = Settings::from_toml("[weights]\npopularity = 1.0\n").unwrap();
        assert!(partial.weight_profile().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = Settings::default();
        let mut b = a.clone();
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.set("floor", "0.2").unwrap();
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
