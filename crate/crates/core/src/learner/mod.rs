//! Classifier and level-set OOD detector trained on `S_in` plus human labels,
//! and the evaluation metrics.

mod metrics;
mod model;
mod train;

pub use metrics::{auroc, evaluate, fpr_at_tpr, tpr_threshold, MetricsReport};
pub use model::{classify, ClassifierParams, DetectorParams, JointParams};
pub use train::{train_classifier, train_joint, JointObjective, LossRecord, TrainConfig, TrainOutcome};
