//! The two rankers: a listwise self-attention network and a pointwise MLP
//! used as the pairwise baseline. Gradients are derived by hand for these
//! fixed architectures.
//!
//! Listwise forward pass for one slate of `n` providers:
//!
//! ```text
//! mission (n×D) ─ dense+ReLU ─┐
//! topic   (n×D) ─ dense+ReLU ─┼─ concat (n×3w) ─ self-attention ─ dense+ReLU ─ dense ─ scores (n)
//! numeric (n×8) ─ dense+ReLU ─┘
//! ```
//!
//! Each slate is processed at its own length, so absent tokens never enter
//! the attention softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gradcheck::Evaluation;
use super::layers::{Activation, AttentionBlock, AttentionCache, DenseLayer};
use super::loss::{listnet_loss, pairwise_logistic_loss};
use super::optim::Parameterized;
use super::tensor::Tensor2;
use crate::catalog::Feature;
use crate::error::{Error, Result};
use crate::features::AssembledInput;

/// Stacked features of the providers in one slate, one row per provider.
#[derive(Debug, Clone, PartialEq)]
pub struct SlateInput {
    pub mission: Tensor2,
    pub topic: Tensor2,
    pub numeric: Tensor2,
}

impl SlateInput {
    pub fn from_inputs(items: &[&AssembledInput]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Input("slate input needs at least one provider".into()));
        }
        let mission: Vec<&[f64]> = items.iter().map(|i| &*i.mission_embedding).collect();
        let topic: Vec<&[f64]> = items.iter().map(|i| &*i.topic_embedding).collect();
        let numeric: Vec<&[f64]> = items.iter().map(|i| i.numeric.as_slice()).collect();
        Ok(SlateInput {
            mission: Tensor2::from_rows(&mission)?,
            topic: Tensor2::from_rows(&topic)?,
            numeric: Tensor2::from_rows(&numeric)?,
        })
    }

    pub fn len(&self) -> usize {
        self.mission.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows reordered so that row `i` of the result is row `order[i]` of `self`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let pick = |t: &Tensor2| {
            let rows: Vec<&[f64]> = order.iter().map(|&i| t.row(i)).collect();
            Tensor2::from_rows(&rows)
        };
        Ok(SlateInput {
            mission: pick(&self.mission)?,
            topic: pick(&self.topic)?,
            numeric: pick(&self.numeric)?,
        })
    }

    fn check_dims(&self, embedding_dim: usize, numeric_dim: usize) -> Result<()> {
        if self.mission.cols() != embedding_dim || self.topic.cols() != embedding_dim {
            return Err(Error::Inference(format!(
                "model expects embeddings of width {embedding_dim}, got {} and {}",
                self.mission.cols(),
                self.topic.cols()
            )));
        }
        if self.numeric.cols() != numeric_dim {
            return Err(Error::Inference(format!(
                "model expects {numeric_dim} numeric features, got {}",
                self.numeric.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListwiseHyper {
    pub embedding_dim: usize,
    pub numeric_dim: usize,
    /// Output width of each feature-group dense layer.
    pub group_width: usize,
    pub hidden: usize,
    /// Adds the attention input back onto its output.
    pub residual: bool,
}

impl Default for ListwiseHyper {
    fn default() -> Self {
        ListwiseHyper {
            embedding_dim: crate::catalog::DEFAULT_EMBEDDING_DIM,
            numeric_dim: Feature::COUNT,
            group_width: 32,
            hidden: 32,
            residual: false,
        }
    }
}

impl ListwiseHyper {
    pub fn token_width(&self) -> usize {
        3 * self.group_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListwiseNet {
    pub hyper: ListwiseHyper,
    pub mission: DenseLayer,
    pub topic: DenseLayer,
    pub numeric: DenseLayer,
    pub attention: AttentionBlock,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

/// Forward intermediates for [`ListwiseNet::backward`].
#[derive(Debug, Clone)]
pub struct ListwiseCache {
    mission_pre: Tensor2,
    topic_pre: Tensor2,
    numeric_pre: Tensor2,
    tokens: Tensor2,
    attention: AttentionCache,
    mixed: Tensor2,
    hidden_pre: Tensor2,
    hidden: Tensor2,
    scores: Tensor2,
}

impl ListwiseCache {
    pub fn scores(&self) -> &[f64] {
        self.scores.data()
    }

    /// Sign pattern of every ReLU pre-activation.
    pub fn activation_pattern(&self) -> Vec<bool> {
        [
            &self.mission_pre,
            &self.topic_pre,
            &self.numeric_pre,
            &self.hidden_pre,
        ]
        .iter()
        .flat_map(|t| t.data().iter().map(|&v| v > 0.0))
        .collect()
    }
}

impl ListwiseNet {
    pub fn init(hyper: ListwiseHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = hyper.group_width;
        ListwiseNet {
            mission: DenseLayer::init(hyper.embedding_dim, w, Activation::Relu, &mut rng),
            topic: DenseLayer::init(hyper.embedding_dim, w, Activation::Relu, &mut rng),
            numeric: DenseLayer::init(hyper.numeric_dim, w, Activation::Relu, &mut rng),
            attention: AttentionBlock::init(hyper.token_width(), &mut rng),
            hidden: DenseLayer::init(hyper.token_width(), hyper.hidden, Activation::Relu, &mut rng),
            output: DenseLayer::init(hyper.hidden, 1, Activation::Linear, &mut rng),
            hyper,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ListwiseNet {
            hyper: self.hyper,
            mission: self.mission.zeros_like(),
            topic: self.topic.zeros_like(),
            numeric: self.numeric.zeros_like(),
            attention: self.attention.zeros_like(),
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn forward(&self, input: &SlateInput) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.scores.into_data())
    }

    pub fn forward_cached(&self, input: &SlateInput) -> Result<ListwiseCache> {
        input.check_dims(self.hyper.embedding_dim, self.hyper.numeric_dim)?;
        let mission_pre = self.mission.affine(&input.mission)?;
        let topic_pre = self.topic.affine(&input.topic)?;
        let numeric_pre = self.numeric.affine(&input.numeric)?;
        let tokens = Tensor2::hcat(&[
            &self.mission.activate(&mission_pre),
            &self.topic.activate(&topic_pre),
            &self.numeric.activate(&numeric_pre),
        ])?;
        let (mut mixed, attention) = self.attention.forward_cached(&tokens)?;
        if self.hyper.residual {
            mixed.add_assign(&tokens);
        }
        let hidden_pre = self.hidden.affine(&mixed)?;
        let hidden = self.hidden.activate(&hidden_pre);
        let scores = self.output.affine(&hidden)?;
        Ok(ListwiseCache {
            mission_pre,
            topic_pre,
            numeric_pre,
            tokens,
            attention,
            mixed,
            hidden_pre,
            hidden,
            scores,
        })
    }

    /// Parameter gradients given `∂L/∂scores`.
    pub fn backward(
        &self,
        input: &SlateInput,
        cache: &ListwiseCache,
        d_scores: &[f64],
    ) -> Result<ListwiseNet> {
        let mut g = self.zeros_like();
        let d_scores = Tensor2::new(d_scores.len(), 1, d_scores.to_vec())?;
        let d_hidden = self
            .output
            .backward(&cache.hidden, &cache.scores, &d_scores, &mut g.output)?;
        let d_mixed = self
            .hidden
            .backward(&cache.mixed, &cache.hidden_pre, &d_hidden, &mut g.hidden)?;
        let mut d_tokens =
            self.attention
                .backward(&cache.tokens, &cache.attention, &d_mixed, &mut g.attention)?;
        if self.hyper.residual {
            d_tokens.add_assign(&d_mixed);
        }
        let w = self.hyper.group_width;
        let _ = self.mission.backward_params(
            &input.mission,
            &cache.mission_pre,
            &d_tokens.column_slice(0, w),
            &mut g.mission,
        )?;
        let _ = self.topic.backward_params(
            &input.topic,
            &cache.topic_pre,
            &d_tokens.column_slice(w, w),
            &mut g.topic,
        )?;
        let _ = self.numeric.backward_params(
            &input.numeric,
            &cache.numeric_pre,
            &d_tokens.column_slice(2 * w, w),
            &mut g.numeric,
        )?;
        Ok(g)
    }

    /// ListNet loss on one graded slate, with parameter gradients.
    pub fn listnet_objective(&self, input: &SlateInput, relevance: &[f64]) -> Result<Evaluation<Self>> {
        let cache = self.forward_cached(input)?;
        let (loss, d_scores) = listnet_loss(cache.scores(), relevance)?;
        let grad = self.backward(input, &cache, &d_scores)?;
        Ok(Evaluation {
            loss,
            grad,
            pattern: cache.activation_pattern(),
        })
    }
}

impl Parameterized for ListwiseNet {
    fn tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        vec![
            ("mission.weight", &self.mission.weight),
            ("mission.bias", &self.mission.bias),
            ("topic.weight", &self.topic.weight),
            ("topic.bias", &self.topic.bias),
            ("numeric.weight", &self.numeric.weight),
            ("numeric.bias", &self.numeric.bias),
            ("attention.wq", &self.attention.wq),
            ("attention.wk", &self.attention.wk),
            ("attention.wv", &self.attention.wv),
            ("hidden.weight", &self.hidden.weight),
            ("hidden.bias", &self.hidden.bias),
            ("output.weight", &self.output.weight),
            ("output.bias", &self.output.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)> {
        vec![
            ("mission.weight", &mut self.mission.weight),
            ("mission.bias", &mut self.mission.bias),
            ("topic.weight", &mut self.topic.weight),
            ("topic.bias", &mut self.topic.bias),
            ("numeric.weight", &mut self.numeric.weight),
            ("numeric.bias", &mut self.numeric.bias),
            ("attention.wq", &mut self.attention.wq),
            ("attention.wk", &mut self.attention.wk),
            ("attention.wv", &mut self.attention.wv),
            ("hidden.weight", &mut self.hidden.weight),
            ("hidden.bias", &mut self.hidden.bias),
            ("output.weight", &mut self.output.weight),
            ("output.bias", &mut self.output.bias),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseHyper {
    pub embedding_dim: usize,
    pub numeric_dim: usize,
    pub hidden: usize,
}

impl Default for PairwiseHyper {
    fn default() -> Self {
        PairwiseHyper {
            embedding_dim: crate::catalog::DEFAULT_EMBEDDING_DIM,
            numeric_dim: Feature::COUNT,
            hidden: 32,
        }
    }
}

/// Scores each provider independently from `[mission | topic | numeric]`
/// through one ReLU hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseNet {
    pub hyper: PairwiseHyper,
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct PairwiseCache {
    features: Tensor2,
    hidden_pre: Tensor2,
    hidden: Tensor2,
    scores: Tensor2,
}

impl PairwiseCache {
    pub fn scores(&self) -> &[f64] {
        self.scores.data()
    }

    pub fn activation_pattern(&self) -> Vec<bool> {
        self.hidden_pre.data().iter().map(|&v| v > 0.0).collect()
    }
}

impl PairwiseNet {
    pub fn init(hyper: PairwiseHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = 2 * hyper.embedding_dim + hyper.numeric_dim;
        PairwiseNet {
            hidden: DenseLayer::init(inputs, hyper.hidden, Activation::Relu, &mut rng),
            output: DenseLayer::init(hyper.hidden, 1, Activation::Linear, &mut rng),
            hyper,
        }
    }

    pub fn zeros_like(&self) -> Self {
        PairwiseNet {
            hyper: self.hyper,
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn forward(&self, input: &SlateInput) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.scores.into_data())
    }

    pub fn forward_cached(&self, input: &SlateInput) -> Result<PairwiseCache> {
        input.check_dims(self.hyper.embedding_dim, self.hyper.numeric_dim)?;
        let features = Tensor2::hcat(&[&input.mission, &input.topic, &input.numeric])?;
        let hidden_pre = self.hidden.affine(&features)?;
        let hidden = self.hidden.activate(&hidden_pre);
        let scores = self.output.affine(&hidden)?;
        Ok(PairwiseCache {
            features,
            hidden_pre,
            hidden,
            scores,
        })
    }

    pub fn backward(&self, cache: &PairwiseCache, d_scores: &[f64]) -> Result<PairwiseNet> {
        let mut g = self.zeros_like();
        let d_scores = Tensor2::new(d_scores.len(), 1, d_scores.to_vec())?;
        let d_hidden = self
            .output
            .backward(&cache.hidden, &cache.scores, &d_scores, &mut g.output)?;
        self.hidden
            .backward_params(&cache.features, &cache.hidden_pre, &d_hidden, &mut g.hidden)?;
        Ok(g)
    }

    /// Mean logistic loss over the given `(better, worse)` index pairs.
    pub fn pairwise_objective(
        &self,
        input: &SlateInput,
        pairs: &[(usize, usize)],
    ) -> Result<Evaluation<Self>> {
        let cache = self.forward_cached(input)?;
        let (loss, d_scores) = pairwise_slate_loss(cache.scores(), pairs)?;
        let grad = self.backward(&cache, &d_scores)?;
        Ok(Evaluation {
            loss,
            grad,
            pattern: cache.activation_pattern(),
        })
    }
}

/// Mean pairwise logistic loss over `pairs` and its gradient w.r.t. scores.
pub fn pairwise_slate_loss(scores: &[f64], pairs: &[(usize, usize)]) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Input("pairwise loss needs at least one pair".into()));
    }
    let norm = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; scores.len()];
    for &(i, j) in pairs {
        let (l, gi, gj) = pairwise_logistic_loss(scores[i], scores[j]);
        loss += l * norm;
        grad[i] += gi * norm;
        grad[j] += gj * norm;
    }
    Ok((loss, grad))
}

impl Parameterized for PairwiseNet {
    fn tensors(&self) -> Vec<(&'static str, &Tensor2)> {
        vec![
            ("hidden.weight", &self.hidden.weight),
            ("hidden.bias", &self.hidden.bias),
            ("output.weight", &self.output.weight),
            ("output.bias", &self.output.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)> {
        vec![
            ("hidden.weight", &mut self.hidden.weight),
            ("hidden.bias", &mut self.hidden.bias),
            ("output.weight", &mut self.output.weight),
            ("output.bias", &mut self.output.bias),
        ]
    }
}

/// Either trained ranker.
#[derive(Debug, Clone, PartialEq)]
pub enum RankerModel {
    Listwise(ListwiseNet),
    Pairwise(PairwiseNet),
}

impl RankerModel {
    pub fn score(&self, input: &SlateInput) -> Result<Vec<f64>> {
        match self {
            RankerModel::Listwise(m) => m.forward(input),
            RankerModel::Pairwise(m) => m.forward(input),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            RankerModel::Listwise(m) => m.hyper.embedding_dim,
            RankerModel::Pairwise(m) => m.hyper.embedding_dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RankerModel::Listwise(_) => "listwise",
            RankerModel::Pairwise(_) => "pairwise",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::Rng;

    fn random_input(n: usize, d: usize, seed: u64) -> SlateInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |cols: usize| {
            Tensor2::new(n, cols, (0..n * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        SlateInput {
            mission: t(d),
            topic: t(d),
            numeric: t(8),
        }
    }

    fn small_hyper(residual: bool) -> ListwiseHyper {
        ListwiseHyper {
            embedding_dim: 6,
            numeric_dim: 8,
            group_width: 4,
            hidden: 5,
            residual,
        }
    }

    #[test]
    fn listwise_gradients_match_finite_differences() {
        for residual in [false, true] {
            let net = ListwiseNet::init(small_hyper(residual), 5);
            let input = random_input(5, 6, 9);
            let rel = [3.0, 0.0, 1.0, 2.0, 0.0];
            let report = grad_check(&net, |m| m.listnet_objective(&input, &rel), 200, 1, 1e-4)
                .unwrap();
            assert!(report.checked >= 150, "{report:?}");
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn pairwise_gradients_match_finite_differences() {
        let net = PairwiseNet::init(
            PairwiseHyper {
                embedding_dim: 6,
                numeric_dim: 8,
                hidden: 5,
            },
            2,
        );
        let input = random_input(4, 6, 3);
        let pairs = [(0, 1), (0, 2), (3, 1)];
        let report =
            grad_check(&net, |m| m.pairwise_objective(&input, &pairs), 100, 4, 1e-4).unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn listwise_is_permutation_equivariant() {
        let net = ListwiseNet::init(small_hyper(false), 1);
        let input = random_input(6, 6, 2);
        let order = [3, 0, 5, 1, 4, 2];
        let scores = net.forward(&input).unwrap();
        let permuted = net.forward(&input.reordered(&order).unwrap()).unwrap();
        for (i, &src) in order.iter().enumerate() {
            assert!((permuted[i] - scores[src]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_inference_error() {
        let net = ListwiseNet::init(small_hyper(false), 1);
        let input = random_input(3, 7, 2);
        assert!(matches!(net.forward(&input), Err(Error::Inference(_))));
    }

    #[test]
    fn identical_rows_score_identically() {
        let net = ListwiseNet::init(small_hyper(false), 8);
        let one = random_input(1, 6, 4);
        let twice = one.reordered(&[0, 0, 0]).unwrap();
        let s = net.forward(&twice).unwrap();
        assert_eq!(s[0].to_bits(), s[1].to_bits());
        assert_eq!(s[1].to_bits(), s[2].to_bits());
    }
}
