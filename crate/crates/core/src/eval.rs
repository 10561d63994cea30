pub mod cv;
pub mod metrics;
pub mod ranking;
pub mod report;
pub mod special;
pub mod stats;

pub use cv::{kfold, Fold, Grouping};
pub use metrics::{accuracy, auc, f1_binary, mcc_binary, mcc_multiclass, weighted_f1, Scores};
pub use ranking::{binder_match, cumulative_match_curve, trimmed_mean, Curve, HitRow};
pub use report::EvalReport;
pub use stats::{chi_squared, kruskal_wallis, welch_t, SpecificityReport};
