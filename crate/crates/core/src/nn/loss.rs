//! Listwise (top-one probability cross-entropy) and pairwise logistic losses.

use super::layers::softmax;
use crate::error::{Error, Result};

/// Target distribution for a graded slate: softmax of grades divided by the
/// slate maximum. All-zero grades give the uniform distribution.
pub fn listnet_target(relevance: &[f64]) -> Vec<f64> {
    let max = relevance.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        let n = relevance.len() as f64;
        return vec![1.0 / n; relevance.len()];
    }
    let scaled: Vec<f64> = relevance.iter().map(|r| r / max).collect();
    softmax(&scaled)
}

/// Cross-entropy `-Σ p log q` between the target `p` and `q = softmax(scores)`,
/// with gradient `q - p` w.r.t. the scores.
pub fn listnet_loss(scores: &[f64], relevance: &[f64]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != relevance.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} relevance grades",
            scores.len(),
            relevance.len()
        )));
    }
    if scores.len() < 2 {
        return Err(Error::Input("listwise loss needs at least 2 items".into()));
    }
    let p = listnet_target(relevance);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (s, pi) in scores.iter().zip(&p) {
        let log_q = s - log_sum;
        loss -= pi * log_q;
        grad.push(log_q.exp() - pi);
    }
    Ok((loss, grad))
}

/// `ln(1 + e^x)` without overflow or cancellation.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss for "item i should outrank item j":
/// `ln(1 + exp(-(s_i - s_j)))`, returned with `(∂/∂s_i, ∂/∂s_j)`.
pub fn pairwise_logistic_loss(s_i: f64, s_j: f64) -> (f64, f64, f64) {
    let margin = s_i - s_j;
    let loss = softplus(-margin);
    let g = sigmoid(-margin);
    (loss, -g, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entropy(p: &[f64]) -> f64 {
        -p.iter().map(|x| x * x.ln()).sum::<f64>()
    }

    #[test]
    fn minimum_at_target() {
        let rel = [3.0, 1.0, 0.0, 2.0];
        // scores equal to the scaled grades reproduce the target exactly
        let scores: Vec<f64> = rel.iter().map(|r| r / 3.0 + 7.0).collect();
        let (loss, grad) = listnet_loss(&scores, &rel).unwrap();
        assert!((loss - entropy(&listnet_target(&rel))).abs() < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn two_uniform_items() {
        let (loss, grad) = listnet_loss(&[0.4, 0.4], &[1.0, 1.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(grad, vec![0.0, 0.0]);
        let (loss, _) = listnet_loss(&[0.4, 0.4], &[0.0, 0.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn listnet_errors() {
        assert!(listnet_loss(&[1.0], &[1.0]).is_err());
        assert!(listnet_loss(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn listnet_matches_finite_differences() {
        let scores = [0.3, -1.2, 2.0, 0.7, 0.0];
        let rel = [2.0, 0.0, 5.0, 1.0, 0.0];
        let (_, grad) = listnet_loss(&scores, &rel).unwrap();
        let h = 1e-5;
        for i in 0..scores.len() {
            let mut up = scores;
            let mut down = scores;
            up[i] += h;
            down[i] -= h;
            let fd = (listnet_loss(&up, &rel).unwrap().0 - listnet_loss(&down, &rel).unwrap().0)
                / (2.0 * h);
            let rel_err = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-12);
            assert!(rel_err < 1e-6, "coord {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn pairwise_examples() {
        let (loss, gi, gj) = pairwise_logistic_loss(1.5, 1.5);
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!((gi, gj), (-0.5, 0.5));
        let (loss, _, _) = pairwise_logistic_loss(20.0, 0.0);
        assert!((loss - 2.061153620314381e-9).abs() < 1e-20);
        let (loss, _, _) = pairwise_logistic_loss(0.0, 800.0);
        assert!((loss - 800.0).abs() < 1e-9);
    }

    #[test]
    fn pairwise_matches_finite_differences() {
        let h = 1e-5;
        for (si, sj) in [(0.3, -0.8), (-2.0, 1.0), (4.0, 3.9)] {
            let (_, gi, gj) = pairwise_logistic_loss(si, sj);
            let fi = (pairwise_logistic_loss(si + h, sj).0 - pairwise_logistic_loss(si - h, sj).0) / (2.0 * h);
            let fj = (pairwise_logistic_loss(si, sj + h).0 - pairwise_logistic_loss(si, sj - h).0) / (2.0 * h);
            assert!((fi - gi).abs() / gi.abs() < 1e-6);
            assert!((fj - gj).abs() / gj.abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn loss_dominates_target_entropy(
            pairs in proptest::collection::vec((-5.0f64..5.0, 0u8..6), 2..12)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let rel: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            let (loss, grad) = listnet_loss(&scores, &rel).unwrap();
            let h = entropy(&listnet_target(&rel));
            prop_assert!(loss >= 0.0);
            prop_assert!(loss >= h - 1e-12);
            prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
