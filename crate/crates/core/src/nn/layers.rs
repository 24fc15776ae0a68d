use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

/// `x·W + b`, optionally followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor2,
    /// 1×out.
    pub bias: Tensor2,
    pub activation: Activation,
}

/// Uniform Glorot initialization: `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor2::new(rows, cols, data).expect("shape matches data")
}

impl DenseLayer {
    pub fn new(weight: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::Dimension(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weight.cols()
            )));
        }
        let n = bias.len();
        Ok(DenseLayer {
            weight,
            bias: Tensor2::new(1, n, bias)?,
            activation,
        })
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        DenseLayer {
            weight: glorot_uniform(inputs, outputs, rng),
            bias: Tensor2::zeros(1, outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn zeros_like(&self) -> Self {
        DenseLayer {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
            activation: self.activation,
        }
    }

    /// Pre-activation `x·W + b`.
    pub fn affine(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.cols() != self.inputs() {
            return Err(Error::Dimension(format!(
                "layer expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut out = x.matmul(&self.weight)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(self.bias.data()) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn activate(&self, pre: &Tensor2) -> Tensor2 {
        match self.activation {
            Activation::Linear => pre.clone(),
            Activation::Relu => relu(pre),
        }
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`, given the layer
    /// input, its pre-activation and the gradient w.r.t. the layer output.
    pub fn backward(
        &self,
        input: &Tensor2,
        pre: &Tensor2,
        d_out: &Tensor2,
        grad: &mut DenseLayer,
    ) -> Result<Tensor2> {
        let d_pre = self.backward_params(input, pre, d_out, grad)?;
        d_pre.matmul_t(&self.weight)
    }

    /// Like [`DenseLayer::backward`] but returns the pre-activation gradient
    /// instead of `dx`. Used for layers fed directly by model inputs.
    pub fn backward_params(
        &self,
        input: &Tensor2,
        pre: &Tensor2,
        d_out: &Tensor2,
        grad: &mut DenseLayer,
    ) -> Result<Tensor2> {
        let d_pre = match self.activation {
            Activation::Linear => d_out.clone(),
            Activation::Relu => relu_backward(pre, d_out),
        };
        grad.weight.add_assign(&input.t_matmul(&d_pre)?);
        grad.bias.add_assign(&d_pre.column_sums());
        Ok(d_pre)
    }
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Gradient through ReLU; the derivative at exactly 0 is taken as 0.
pub fn relu_backward(pre: &Tensor2, d_out: &Tensor2) -> Tensor2 {
    let mut out = d_out.clone();
    for (g, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

pub fn dense_forward(x: &Tensor2, layer: &DenseLayer) -> Result<Tensor2> {
    Ok(layer.activate(&layer.affine(x)?))
}

/// Numerically stable softmax of one row.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn row_softmax(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let s = softmax(x.row(r));
        out.row_mut(r).copy_from_slice(&s);
    }
    out
}

/// Single-head scaled dot-product self-attention over slate tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub wq: Tensor2,
    pub wk: Tensor2,
    pub wv: Tensor2,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub q: Tensor2,
    pub k: Tensor2,
    pub v: Tensor2,
    /// Row-stochastic attention weights, S×S.
    pub weights: Tensor2,
}

impl AttentionBlock {
    pub fn new(wq: Tensor2, wk: Tensor2, wv: Tensor2) -> Result<Self> {
        let d = wq.rows();
        for w in [&wq, &wk, &wv] {
            if w.shape() != (d, d) {
                return Err(Error::Dimension(format!(
                    "attention projections must all be {d}x{d}, got {:?}",
                    w.shape()
                )));
            }
        }
        Ok(AttentionBlock { wq, wk, wv })
    }

    pub fn init<R: Rng>(d: usize, rng: &mut R) -> Self {
        AttentionBlock {
            wq: glorot_uniform(d, d, rng),
            wk: glorot_uniform(d, d, rng),
            wv: glorot_uniform(d, d, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn zeros_like(&self) -> Self {
        AttentionBlock {
            wq: self.wq.zeros_like(),
            wk: self.wk.zeros_like(),
            wv: self.wv.zeros_like(),
        }
    }

    pub fn forward_cached(&self, x: &Tensor2) -> Result<(Tensor2, AttentionCache)> {
        if x.cols() != self.dim() {
            return Err(Error::Dimension(format!(
                "attention over width {} applied to tokens of width {}",
                self.dim(),
                x.cols()
            )));
        }
        let q = x.matmul(&self.wq)?;
        let k = x.matmul(&self.wk)?;
        let v = x.matmul(&self.wv)?;
        let mut logits = q.matmul_t(&k)?;
        logits.scale(1.0 / (self.dim() as f64).sqrt());
        let weights = row_softmax(&logits);
        let out = weights.matmul(&v)?;
        Ok((out, AttentionCache { q, k, v, weights }))
    }

    /// Accumulates projection gradients into `grad` and returns `dx`.
    pub fn backward(
        &self,
        x: &Tensor2,
        cache: &AttentionCache,
        d_out: &Tensor2,
        grad: &mut AttentionBlock,
    ) -> Result<Tensor2> {
        let a = &cache.weights;
        let d_a = d_out.matmul_t(&cache.v)?;
        let d_v = a.t_matmul(d_out)?;
        // softmax Jacobian row by row: dL = A ⊙ (dA − rowsum(dA ⊙ A))
        let mut d_logits = a.zeros_like();
        for r in 0..a.rows() {
            let ar = a.row(r);
            let gr = d_a.row(r);
            let dot: f64 = ar.iter().zip(gr).map(|(p, g)| p * g).sum();
            for ((o, p), g) in d_logits.row_mut(r).iter_mut().zip(ar).zip(gr) {
                *o = p * (g - dot);
            }
        }
        d_logits.scale(1.0 / (self.dim() as f64).sqrt());
        let d_q = d_logits.matmul(&cache.k)?;
        let d_k = d_logits.t_matmul(&cache.q)?;
        grad.wq.add_assign(&x.t_matmul(&d_q)?);
        grad.wk.add_assign(&x.t_matmul(&d_k)?);
        grad.wv.add_assign(&x.t_matmul(&d_v)?);
        let mut d_x = d_q.matmul_t(&self.wq)?;
        d_x.add_assign(&d_k.matmul_t(&self.wk)?);
        d_x.add_assign(&d_v.matmul_t(&self.wv)?);
        Ok(d_x)
    }
}

pub fn self_attention(x: &Tensor2, block: &AttentionBlock) -> Result<Tensor2> {
    block.forward_cached(x).map(|(out, _)| out)
}
