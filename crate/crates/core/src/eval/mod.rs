//! Evaluation: primitive matching, PF1/CF1, token accuracy, chamfer
//! distance, QA scoring and the batch runners built on them.

mod chamfer;
mod matching;
mod metrics;
mod qa;
mod runner;

pub use chamfer::{chamfer, chamfer_with, squared_distance_transform, MetricError};
pub use matching::{assignment, match_primitives, pair_cost, Matching, TYPE_MISMATCH_COST};
pub use metrics::{
    accuracy, cf1, constraint_counts, pf1, primitive_counts, true_positive_pairs, AccuracyMode, Counts, PF1_TOLERANCE,
};
pub use qa::{parse_qa_jsonl, score_qa, Gold, QaError, QaItem, QaReport};
pub use runner::{
    dataset_names, load_autoconstrain_dir, load_param_dir, run_autoconstrain_eval, run_param_eval, AutoconstrainItem,
    Dataset, EvalConfig, EvalReport, ItemReport, ParamItem,
};
