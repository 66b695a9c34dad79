//! Multi-step prediction from the tiling model, the random-walk baseline
//! and stream evaluation.

mod baseline;
pub mod eval;
mod mixture;
mod snapshot;

pub use baseline::{random_walk_log_prob, RandomWalkBaseline, BASELINE_RATE, BASELINE_VARIANCE_FLOOR};
pub use eval::{eval_range, eval_stream, init_stream, summarize, Clock, Evaluation, HorizonSummary, MeanStd, MetricsRecord, NoClock};
pub use mixture::{entropy, log_pred_prob, predict_mixture, predict_weights, predict_weights_many, Entropy, Mixture};
pub use snapshot::{ModelSnapshot, Predictive};
