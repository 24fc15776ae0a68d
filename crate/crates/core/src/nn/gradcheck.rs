//! Central finite-difference check of analytic parameter gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::Parameterized;
use crate::error::{Error, Result};

/// Loss, parameter gradient and ReLU activation pattern at one point.
#[derive(Debug, Clone)]
pub struct Evaluation<M> {
    pub loss: f64,
    pub grad: M,
    /// Sign of every ReLU pre-activation; empty for smooth models.
    pub pattern: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Largest `|analytic - numeric|` over the checked coordinates.
    pub max_abs_error: f64,
    pub checked: usize,
    /// Coordinates where a `±h` step flips some ReLU, named `tensor[index]`.
    pub skipped: Vec<String>,
}

/// Denominator floor: below this the comparison is effectively absolute.
const REL_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_FLOOR)
}

/// Compares the analytic gradient of `objective` at `model` against central
/// differences with step `h` on `samples` coordinates drawn with `seed`
/// (all coordinates when there are fewer).
pub fn grad_check<M, F>(
    model: &M,
    objective: F,
    samples: usize,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport>
where
    M: Parameterized + Clone,
    F: Fn(&M) -> Result<Evaluation<M>>,
{
    if model.tensors().iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::Training("grad check on non-finite parameters".into()));
    }
    let base = objective(model)?;
    let analytic: Vec<(&'static str, Vec<f64>)> = base
        .grad
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.data().to_vec()))
        .collect();
    let coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, g))| (0..g.len()).map(move |i| (ti, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = if samples >= coords.len() {
        (0..coords.len()).collect()
    } else {
        sample(&mut rng, coords.len(), samples).into_vec()
    };
    picked.sort_unstable();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
        skipped: Vec::new(),
    };
    let mut probe = model.clone();
    for ci in picked {
        let (ti, i) = coords[ci];
        let original = model.tensors()[ti].1.data()[i];
        let mut at = |value: f64| -> Result<Evaluation<M>> {
            probe.tensors_mut()[ti].1.data_mut()[i] = value;
            objective(&probe)
        };
        let up = at(original + h)?;
        let down = at(original - h)?;
        at(original)?;
        if up.pattern != base.pattern || down.pattern != base.pattern {
            report.skipped.push(format!("{}[{i}]", analytic[ti].0));
            continue;
        }
        let numeric = (up.loss - down.loss) / (2.0 * h);
        let err = relative_error(analytic[ti].1[i], numeric);
        report.max_rel_error = report.max_rel_error.max(err);
        report.max_abs_error = report.max_abs_error.max((analytic[ti].1[i] - numeric).abs());
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Activation, DenseLayer};
    use crate::nn::tensor::Tensor2;

    impl Parameterized for DenseLayer {
        fn tensors(&self) -> Vec<(&'static str, &Tensor2)> {
            vec![("weight", &self.weight), ("bias", &self.bias)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor2)> {
            vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
        }
    }

    // 0.5·Σ(y − target)² for y = layer(x)
    fn quadratic(layer: &DenseLayer, x: &Tensor2, target: &[f64]) -> Result<Evaluation<DenseLayer>> {
        let pre = layer.affine(x)?;
        let y = layer.activate(&pre);
        let diff: Vec<f64> = y.data().iter().zip(target).map(|(a, b)| a - b).collect();
        let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        let mut grad = layer.zeros_like();
        layer.backward(x, &pre, &Tensor2::new(y.rows(), y.cols(), diff)?, &mut grad)?;
        Ok(Evaluation {
            loss,
            grad,
            pattern: match layer.activation {
                Activation::Relu => pre.data().iter().map(|&v| v > 0.0).collect(),
                Activation::Linear => Vec::new(),
            },
        })
    }

    #[test]
    fn linear_model_quadratic_loss() {
        let layer = DenseLayer::new(
            Tensor2::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]]).unwrap(),
            vec![0.1, -0.2],
            Activation::Linear,
        )
        .unwrap();
        let x = Tensor2::from_rows(&[[1.0, 2.0, -1.0], [0.5, -0.5, 3.0]]).unwrap();
        let target = [1.0, 0.0, -2.0, 0.5];
        let report = grad_check(&layer, |l| quadratic(l, &x, &target), 100, 0, 1e-4).unwrap();
        assert_eq!(report.checked, 8);
        assert!(report.skipped.is_empty());
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn relu_kink_is_skipped_and_reported() {
        // pre-activation of the single unit is exactly 0 at x = [1]
        let layer = DenseLayer::new(
            Tensor2::from_rows(&[[1.0]]).unwrap(),
            vec![-1.0],
            Activation::Relu,
        )
        .unwrap();
        let x = Tensor2::from_rows(&[[1.0]]).unwrap();
        let report = grad_check(&layer, |l| quadratic(l, &x, &[1.0]), 10, 0, 1e-4).unwrap();
        assert_eq!(report.checked, 0);
        assert_eq!(report.skipped, vec!["weight[0]".to_string(), "bias[0]".to_string()]);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.0, 3.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-4);
    }
}
