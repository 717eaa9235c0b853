//! Undefinable true target learning: a small patch classifier trained on a
//! weighted multi-target surrogate loss, with checkpoints chosen by logical
//! assessment.

mod loss;
mod model;
mod train;

pub use loss::{
    surrogate_loss, surrogate_loss_and_grad, uniform_alpha, validate_alpha, Gradient,
    ALPHA_SUM_TOLERANCE,
};
pub use model::{forward, patch_len, Model};
pub use train::{
    check_stop, evaluate_dataset, smoothed_liou, train_uttl, train_uttl_with, HistoryRecord,
    InstanceEval, TrainConfig, TrainHistory, TrainProgress,
};
