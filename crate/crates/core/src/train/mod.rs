//! Losses, RMSprop, the training loop with validation selection, and the
//! evaluation metrics.

mod checkpoint;
mod fit;
mod gradcheck;
mod loss;
pub mod metrics;
mod optim;
mod report;

pub use checkpoint::{Checkpoint, EpochRecord};
pub use fit::{batch_gradients, predict, readmission_scores, selection_metric, train, TrainContext, TrainOutcome};
pub use gradcheck::{model_gradcheck, GradCheckSetup, GRADCHECK_STEP};
pub use loss::{example_loss, loss};
pub use metrics::{pr_auc, precision_at_k, random_precision_at_k};
pub use optim::{rmsprop_update, RmsProp, TrainConfig};
pub use report::{config_digest, evaluate, MetricsReport, DEFAULT_KS};
