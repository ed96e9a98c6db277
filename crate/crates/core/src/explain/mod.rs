//! Risk-ratio explanation of outliers by attribute combinations.

mod batch;
mod fpgrowth;
mod record;
mod risk;

pub use batch::{
    brute_force_explain, count_single_attributes, explain_batch, two_pass_explain, AttributeCounts,
    BatchExplainer, ExplainOutput, ExplainParams, ExplainStats, BRUTE_FORCE_LIMIT,
};
pub(crate) use batch::{count_candidates, filter_combinations, mine_combinations};
pub use fpgrowth::{fpgrowth, fpgrowth_weighted, fpgrowth_with_stats, MiningStats, Transactions};
pub use record::{rank_explanations, rank_order, ExplanationRecord, RecordFlag};
pub use risk::{confidence_interval, critical_z, normal_quantile, risk_ratio};
