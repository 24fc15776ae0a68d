//! Small dense networks with hand-written backpropagation.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, TrainingMeta};
pub use gradcheck::{grad_check, Evaluation, GradCheckReport};
pub use layers::{Activation, AttentionBlock, DenseLayer};
pub use loss::{listnet_loss, listnet_target, pairwise_logistic_loss};
pub use model::{ListwiseHyper, ListwiseNet, PairwiseHyper, PairwiseNet, RankerModel, SlateInput};
pub use optim::{adam_step, AdamConfig, AdamState, Parameterized};
pub use tensor::Tensor2;
