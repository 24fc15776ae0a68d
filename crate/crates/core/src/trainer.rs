//! Slate building, training loops for both rankers, evaluation and inference.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{CellKey, Locale, ProviderId, SlateExample, TopicId, DEFAULT_SLATE_CAPACITY};
use crate::error::{Error, Result};
use crate::features::{AssembledInput, FeatureStore};
use crate::metrics::{ndcg_checked, DEFAULT_NDCG_K};
use crate::nn::checkpoint::{Checkpoint, TrainingMeta};
use crate::nn::model::{
    ListwiseHyper, ListwiseNet, PairwiseHyper, PairwiseNet, RankerModel,
    SlateInput,
};
use crate::nn::optim::{adam_step, AdamConfig, AdamState, Parameterized};
use crate::weak::RankedSlate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Listwise,
    Pairwise,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Listwise => "listwise",
            ModelKind::Pairwise => "pairwise",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "listwise" => Ok(ModelKind::Listwise),
            "pairwise" => Ok(ModelKind::Pairwise),
            other => Err(Error::Config(format!(
                "model must be `listwise` or `pairwise`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Slates (topics) per optimizer step.
    pub batch_size: usize,
    pub slate_capacity: usize,
    pub epochs: usize,
    pub seed: u64,
    pub negative_sampling: bool,
    pub model: ModelKind,
    pub adam: AdamConfig,
    pub validation_fraction: f64,
    pub max_pairs: usize,
    pub group_width: usize,
    pub hidden: usize,
    pub residual: bool,
    pub ndcg_k: usize,
    /// Worker threads for validation scoring.
    pub parallelism: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 64,
            slate_capacity: DEFAULT_SLATE_CAPACITY,
            epochs: 15,
            seed: 42,
            negative_sampling: true,
            model: ModelKind::Listwise,
            adam: AdamConfig::default(),
            validation_fraction: 0.2,
            max_pairs: 200,
            group_width: 32,
            hidden: 32,
            residual: false,
            ndcg_k: DEFAULT_NDCG_K,
            parallelism: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.slate_capacity < 2 {
            return bad("slate_capacity must be at least 2".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction {} must lie in (0, 1)",
                self.validation_fraction
            ));
        }
        if self.max_pairs == 0 || self.ndcg_k == 0 || self.group_width == 0 || self.hidden == 0 {
            return bad("max_pairs, ndcg_k, group_width and hidden must be positive".into());
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.adam.lr));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        Ok(())
    }
}

/// One graded slate with its stacked model input.
#[derive(Debug, Clone)]
pub struct TrainingSlate {
    pub topic: TopicId,
    pub locale: Locale,
    pub providers: Vec<ProviderId>,
    pub relevance: Vec<f64>,
    pub input: SlateInput,
}

impl TrainingSlate {
    pub fn len(&self) -> usize {
        self.providers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.providers.is_empty()
    }

    /// The slate restricted to items with positive relevance, if at least
    /// two remain.
    pub fn positives_only(&self) -> Result<Option<TrainingSlate>> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.relevance[i] > 0.0).collect();
        if keep.len() < 2 {
            return Ok(None);
        }
        Ok(Some(TrainingSlate {
            topic: self.topic.clone(),
            locale: self.locale.clone(),
            providers: keep.iter().map(|&i| self.providers[i].clone()).collect(),
            relevance: keep.iter().map(|&i| self.relevance[i]).collect(),
            input: self.input.reordered(&keep)?,
        }))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildReport {
    /// Items without a usable model input: (cell, reason).
    pub dropped_items: Vec<(String, String)>,
    /// Slates left with fewer than two items.
    pub skipped_slates: Vec<String>,
}

/// Turns graded slates into model-ready slates.
///
/// Items without an assembled input are dropped and reported. With
/// `negative_sampling` off only positive items are kept. Slates longer than
/// `capacity` keep their highest-graded items (ties by provider id).
pub fn build_slates(
    examples: &[SlateExample],
    store: &FeatureStore,
    negative_sampling: bool,
    capacity: usize,
) -> Result<(Vec<TrainingSlate>, BuildReport)> {
    let mut report = BuildReport::default();
    let mut out = Vec::with_capacity(examples.len());
    for ex in examples {
        let mut items: Vec<(ProviderId, f64, AssembledInput)> = Vec::with_capacity(ex.items.len());
        for item in &ex.items {
            if !negative_sampling && item.relevance == 0 {
                continue;
            }
            let cell = CellKey {
                provider: item.provider.clone(),
                topic: ex.topic.clone(),
                locale: ex.locale.clone(),
            };
            match store.assemble(&cell) {
                Ok(input) => items.push((item.provider.clone(), f64::from(item.relevance), input)),
                Err(e @ (Error::MissingEmbedding { .. } | Error::Data(_))) => {
                    report.dropped_items.push((cell.to_string(), e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
        if items.len() > capacity {
            items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            items.truncate(capacity);
        }
        if items.len() < 2 {
            report
                .skipped_slates
                .push(format!("({}, {}) has {} usable items", ex.topic, ex.locale, items.len()));
            continue;
        }
        let inputs: Vec<&AssembledInput> = items.iter().map(|i| &i.2).collect();
        let input = SlateInput::from_inputs(&inputs)?;
        out.push(TrainingSlate {
            topic: ex.topic.clone(),
            locale: ex.locale.clone(),
            providers: items.iter().map(|i| i.0.clone()).collect(),
            relevance: items.iter().map(|i| i.1).collect(),
            input,
        });
    }
    Ok((out, report))
}

/// Topics held out for validation: the `ceil(fraction · n)` topics with the
/// smallest seeded hash.
pub fn validation_topics(topics: &BTreeSet<TopicId>, fraction: f64, seed: u64) -> BTreeSet<TopicId> {
    let mut keyed: Vec<([u8; 32], &TopicId)> = topics
        .iter()
        .map(|t| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(t.as_str().as_bytes());
            (h.finalize().into(), t)
        })
        .collect();
    keyed.sort();
    let n = ((topics.len() as f64) * fraction).ceil() as usize;
    keyed.into_iter().take(n).map(|(_, t)| t.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub ndcg10: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace(pub Vec<EpochStats>);

impl EpochTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,ndcg10\n");
        for e in &self.0 {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.ndcg10));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.0.last()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: EpochTrace,
    pub train_topics: BTreeSet<TopicId>,
    pub validation_topics: BTreeSet<TopicId>,
    /// Training slates dropped by the positives-only filter.
    pub skipped: Vec<String>,
}

enum Net {
    Listwise(ListwiseNet),
    Pairwise(PairwiseNet),
}

/// Every index pair `(better, worse)` with unequal grades, subsampled to
/// at most `cap` pairs.
fn slate_pairs(relevance: &[f64], cap: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..relevance.len() {
        for j in 0..relevance.len() {
            if relevance[i] > relevance[j] {
                pairs.push((i, j));
            }
        }
    }
    if pairs.len() > cap {
        let mut picked = sample(rng, pairs.len(), cap).into_vec();
        picked.sort_unstable();
        pairs = picked.into_iter().map(|k| pairs[k]).collect();
    }
    pairs
}

fn batch_step<M: Parameterized + Clone>(
    model: &mut M,
    state: &mut AdamState,
    cfg: &AdamConfig,
    mut per_slate: impl FnMut(&M, usize) -> Result<Option<(f64, M)>>,
    batch: &[usize],
) -> Result<(f64, usize)> {
    let mut grad: Option<M> = None;
    let mut loss_sum = 0.0;
    let mut used = 0usize;
    for &idx in batch {
        let Some((loss, g)) = per_slate(model, idx)? else {
            continue;
        };
        loss_sum += loss;
        used += 1;
        match grad.as_mut() {
            None => grad = Some(g),
            Some(acc) => {
                for ((_, a), (_, b)) in acc.tensors_mut().into_iter().zip(g.tensors()) {
                    a.add_assign(b);
                }
            }
        }
    }
    if let Some(mut g) = grad {
        let scale = 1.0 / used as f64;
        for (_, t) in g.tensors_mut() {
            t.scale(scale);
        }
        adam_step(model, &g, state, cfg)?;
    }
    Ok((loss_sum, used))
}

/// Trains a ranker on `slates`, which must include their zero-graded
/// negatives. Validation slates always keep them; the training part drops
/// them when `negative_sampling` is off.
pub fn train(config: &TrainingConfig, slates: &[TrainingSlate]) -> Result<TrainOutcome> {
    config.validate()?;
    let first = slates
        .first()
        .ok_or_else(|| Error::Training("no training slates".into()))?;
    let embedding_dim = first.input.mission.cols();
    let numeric_dim = first.input.numeric.cols();

    let topics: BTreeSet<TopicId> = slates.iter().map(|s| s.topic.clone()).collect();
    if topics.len() < 2 {
        return Err(Error::Training(
            "need slates from at least two topics to hold out validation".into(),
        ));
    }
    let held_out = validation_topics(&topics, config.validation_fraction, config.seed);
    let validation: Vec<&TrainingSlate> =
        slates.iter().filter(|s| held_out.contains(&s.topic)).collect();
    let mut skipped = Vec::new();
    let mut training: Vec<TrainingSlate> = Vec::new();
    for s in slates.iter().filter(|s| !held_out.contains(&s.topic)) {
        if config.negative_sampling {
            training.push(s.clone());
        } else {
            match s.positives_only()? {
                Some(p) => training.push(p),
                None => skipped.push(format!("({}, {}) has fewer than 2 positives", s.topic, s.locale)),
            }
        }
    }
    if training.is_empty() {
        return Err(Error::Training("no usable training slates after the split".into()));
    }
    let train_topics: BTreeSet<TopicId> = training.iter().map(|s| s.topic.clone()).collect();

    let mut net = match config.model {
        ModelKind::Listwise => Net::Listwise(ListwiseNet::init(
            ListwiseHyper {
                embedding_dim,
                numeric_dim,
                group_width: config.group_width,
                hidden: config.hidden,
                residual: config.residual,
            },
            config.seed,
        )),
        ModelKind::Pairwise => Net::Pairwise(PairwiseNet::init(
            PairwiseHyper {
                embedding_dim,
                numeric_dim,
                hidden: config.hidden,
            },
            config.seed,
        )),
    };
    let mut state = match &net {
        Net::Listwise(m) => AdamState::for_model(m),
        Net::Pairwise(m) => AdamState::for_model(m),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_5107);
    let mut order: Vec<usize> = (0..training.len()).collect();
    let mut trace = EpochTrace::default();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in order.chunks(config.batch_size) {
            let (l, n) = match &mut net {
                Net::Listwise(m) => batch_step(
                    m,
                    &mut state,
                    &config.adam,
                    |m, i| {
                        let s = &training[i];
                        let ev = m.listnet_objective(&s.input, &s.relevance)?;
                        Ok(Some((ev.loss, ev.grad)))
                    },
                    batch,
                ),
                Net::Pairwise(m) => {
                    let pairs: Vec<Vec<(usize, usize)>> = batch
                        .iter()
                        .map(|&i| slate_pairs(&training[i].relevance, config.max_pairs, &mut rng))
                        .collect();
                    let pos = |i: usize| batch.iter().position(|&b| b == i).expect("in batch");
                    batch_step(
                        m,
                        &mut state,
                        &config.adam,
                        |m, i| {
                            let p = &pairs[pos(i)];
                            if p.is_empty() {
                                return Ok(None);
                            }
                            let ev = m.pairwise_objective(&training[i].input, p)?;
                            Ok(Some((ev.loss, ev.grad)))
                        },
                        batch,
                    )
                }
            }
            .map_err(|e| match e {
                Error::Training(message) => Error::Divergence { epoch, message },
                other => other,
            })?;
            if !l.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("training loss became {l}"),
                });
            }
            loss_sum += l;
            count += n;
        }
        let model = match &net {
            Net::Listwise(m) => RankerModel::Listwise(m.clone()),
            Net::Pairwise(m) => RankerModel::Pairwise(m.clone()),
        };
        let ndcg10 = evaluate(&model, &validation, config.ndcg_k, config.parallelism)?.mean;
        let loss = if count > 0 { loss_sum / count as f64 } else { 0.0 };
        log::info!("epoch {epoch}: loss {loss:.6} ndcg@{} {ndcg10:.4}", config.ndcg_k);
        trace.0.push(EpochStats {
            epoch,
            loss,
            ndcg10,
        });
    }

    let model = match net {
        Net::Listwise(m) => RankerModel::Listwise(m),
        Net::Pairwise(m) => RankerModel::Pairwise(m),
    };
    let final_loss = trace.last().map(|e| e.loss).unwrap_or(0.0);
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            training: TrainingMeta {
                epochs_run: trace.0.len(),
                final_loss,
                seed: config.seed,
            },
        },
        trace,
        train_topics,
        validation_topics: held_out,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlateScore {
    pub topic: TopicId,
    pub locale: Locale,
    /// `None` when every grade is zero.
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_slate: Vec<SlateScore>,
    /// Mean over slates with a defined NDCG.
    pub mean: f64,
    pub skipped: usize,
}

fn score_slate(model: &RankerModel, s: &TrainingSlate, k: usize) -> Result<SlateScore> {
    let scores = model.score(&s.input)?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| s.providers[a].cmp(&s.providers[b]))
    });
    let rel: Vec<f64> = order.iter().map(|&i| s.relevance[i]).collect();
    Ok(SlateScore {
        topic: s.topic.clone(),
        locale: s.locale.clone(),
        ndcg: ndcg_checked(&rel, k),
    })
}

/// NDCG@k of the model's ordering for each slate, scored on up to
/// `parallelism` threads. Results keep the input order.
pub fn evaluate(
    model: &RankerModel,
    slates: &[&TrainingSlate],
    k: usize,
    parallelism: usize,
) -> Result<Evaluation> {
    let per_slate: Vec<SlateScore> = if parallelism <= 1 || slates.len() < 2 {
        slates
            .iter()
            .map(|s| score_slate(model, s, k))
            .collect::<Result<_>>()?
    } else {
        let chunk = slates.len().div_ceil(parallelism);
        std::thread::scope(|scope| {
            let handles: Vec<_> = slates
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|s| score_slate(model, s, k))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut out = Vec::with_capacity(slates.len());
            for h in handles {
                out.extend(h.join().expect("scoring thread panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    };
    let defined: Vec<f64> = per_slate.iter().filter_map(|s| s.ndcg).collect();
    let mean = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(Evaluation {
        skipped: per_slate.len() - defined.len(),
        per_slate,
        mean,
    })
}

/// Ranks candidates by model score, descending, ties by provider id.
pub fn predict_slate(
    model: &RankerModel,
    topic: TopicId,
    locale: Locale,
    candidates: &[(ProviderId, AssembledInput)],
) -> Result<RankedSlate> {
    if candidates.is_empty() {
        return Err(Error::Input(format!("no candidates for ({topic}, {locale})")));
    }
    let inputs: Vec<&AssembledInput> = candidates.iter().map(|c| &c.1).collect();
    let scores = model.score(&SlateInput::from_inputs(&inputs)?)?;
    RankedSlate::from_scores(
        topic,
        locale,
        candidates.iter().map(|c| c.0.clone()).zip(scores).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::make_synthetic_dataset;

    fn dataset(n_topics: usize, seed: u64) -> (Vec<TrainingSlate>, FeatureStore, Vec<SlateExample>) {
        let d = make_synthetic_dataset(n_topics, 9, 8, seed).unwrap();
        let store = d.feature_store().unwrap();
        let (slates, report) = build_slates(&d.slates, &store, true, 30).unwrap();
        assert!(report.dropped_items.is_empty());
        (slates, store, d.slates)
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            batch_size: 4,
            epochs: 2,
            group_width: 4,
            hidden: 6,
            adam: AdamConfig {
                lr: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn negative_filter_and_capacity() {
        let (_, store, examples) = dataset(3, 1);
        let (with, _) = build_slates(&examples, &store, true, 30).unwrap();
        let (without, _) = build_slates(&examples, &store, false, 30).unwrap();
        assert!(with.iter().all(|s| s.len() == 9));
        assert!(without.iter().all(|s| s.len() == 6 && s.relevance.iter().all(|&r| r > 0.0)));
        let (capped, _) = build_slates(&examples, &store, true, 4).unwrap();
        for s in &capped {
            let mut r = s.relevance.clone();
            r.sort_by(|a, b| b.total_cmp(a));
            assert_eq!(r, vec![6.0, 5.0, 4.0, 3.0]);
        }
    }

    #[test]
    fn items_without_inputs_are_dropped_and_flagged() {
        let (_, store, mut examples) = dataset(3, 1);
        examples[0].items[0].provider = ProviderId::new("ghost").unwrap();
        examples[1].items.truncate(2);
        examples[1].items[1].provider = ProviderId::new("ghost").unwrap();
        let (slates, report) = build_slates(&examples, &store, true, 30).unwrap();
        assert_eq!(report.dropped_items.len(), 2);
        assert!(report.dropped_items[0].0.contains("ghost"));
        assert_eq!(report.skipped_slates.len(), 1);
        assert_eq!(slates.len(), 2);
        assert_eq!(slates[0].len(), 8);
    }

    #[test]
    fn training_is_reproducible() {
        let (slates, _, _) = dataset(5, 2);
        for model in [ModelKind::Listwise, ModelKind::Pairwise] {
            let cfg = TrainingConfig {
                model,
                ..small_config()
            };
            let a = train(&cfg, &slates).unwrap();
            let b = train(&cfg, &slates).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.checkpoint, b.checkpoint);
            assert_eq!(a.trace.0.len(), 2);
        }
    }

    #[test]
    fn listwise_loss_falls_on_synthetic_data() {
        let (slates, _, _) = dataset(20, 3);
        let cfg = TrainingConfig {
            epochs: 8,
            ..small_config()
        };
        let out = train(&cfg, &slates).unwrap();
        let first = out.trace.0[0].loss;
        assert!(out.trace.0[1..].iter().all(|e| e.loss <= first), "{:?}", out.trace);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let topics: BTreeSet<TopicId> = (0..10)
            .map(|i| TopicId::new(format!("t{i}")).unwrap())
            .collect();
        let a = validation_topics(&topics, 0.2, 7);
        assert_eq!(a.len(), 2);
        assert_eq!(a, validation_topics(&topics, 0.2, 7));
        assert_eq!(validation_topics(&topics, 0.25, 7).len(), 3);
        let (slates, _, _) = dataset(5, 4);
        let out = train(&small_config(), &slates).unwrap();
        assert!(out.train_topics.is_disjoint(&out.validation_topics));
        assert_eq!(out.validation_topics.len(), 1);
    }

    #[test]
    fn predict_single_and_duplicate_candidates() {
        let (slates, store, _) = dataset(3, 5);
        let out = train(&small_config(), &slates).unwrap();
        let model = &out.checkpoint.model;
        let cell = CellKey {
            provider: slates[0].providers[0].clone(),
            topic: slates[0].topic.clone(),
            locale: slates[0].locale.clone(),
        };
        let input = store.assemble(&cell).unwrap();
        let one = predict_slate(
            model,
            cell.topic.clone(),
            cell.locale.clone(),
            &[(cell.provider.clone(), input.clone())],
        )
        .unwrap();
        assert_eq!(one.rank_of(&cell.provider), Some(1));
        let twins = predict_slate(
            model,
            cell.topic.clone(),
            cell.locale.clone(),
            &[
                (ProviderId::new("zz").unwrap(), input.clone()),
                (ProviderId::new("aa").unwrap(), input),
            ],
        )
        .unwrap();
        assert_eq!(twins.items[0].score.to_bits(), twins.items[1].score.to_bits());
        assert_eq!(twins.items[0].provider.as_str(), "aa");
    }

    #[test]
    fn predictions_survive_checkpoint_reload() {
        let (slates, _, _) = dataset(3, 6);
        let out = train(&small_config(), &slates).unwrap();
        let back = Checkpoint::from_json(&out.checkpoint.to_json().unwrap()).unwrap();
        for s in &slates {
            let a = out.checkpoint.model.score(&s.input).unwrap();
            let b = back.model.score(&s.input).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn parallel_evaluation_matches_serial() {
        let (slates, _, _) = dataset(9, 7);
        let out = train(&small_config(), &slates).unwrap();
        let refs: Vec<&TrainingSlate> = slates.iter().collect();
        let serial = evaluate(&out.checkpoint.model, &refs, 10, 1).unwrap();
        let parallel = evaluate(&out.checkpoint.model, &refs, 10, 4).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig {
            batch_size: 0,
            ..TrainingConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainingConfig::default().validate().is_ok());
        assert_eq!("pairwise".parse::<ModelKind>().unwrap(), ModelKind::Pairwise);
        assert!("trees".parse::<ModelKind>().is_err());
    }
}
