//! Comparison methods: statistical-feature logistic regression, self-training
//! and pseudo-label fine-tuning.

mod features;
mod logreg;
mod pseudo;
mod selftrain;

pub use features::{extract_features, feature_len, feature_matrix, feature_names};
pub use logreg::{train_logreg, LogReg, LogRegConfig};
pub use pseudo::{pseudo_label, ramp_alpha, PseudoLabelConfig, PseudoLabelOutcome};
pub use selftrain::{self_train, Classifier, Promotion, SelfTrainConfig, SelfTrainOutcome};
