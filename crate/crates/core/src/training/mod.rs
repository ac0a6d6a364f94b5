//! Loss, backpropagation, optimisation and the training loop.

pub mod adam;
pub mod backward;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use backward::{backward, backward_from_output, Gradients};
pub use loss::{
    log_var_grad, loss_polarity, loss_spatial, loss_temporal, loss_total, loss_with_grad, LossBreakdown,
    LossState,
};
pub use trainer::{
    batch_gradients, prepare, split_indices, train, train_with, validate_sample, EpochRecord, PreparedSample,
    SamplePair, TrainConfig, TrainReport,
};
