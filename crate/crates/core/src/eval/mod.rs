//! Evaluation protocols and metrics: rank correlations against simulation
//! truth, leave-last-one-out top-K metrics, cold-start ranking, the price
//! treatment experiment, and a BPR-MF baseline.

mod bprmf;
mod cold;
mod metrics;
mod protocols;
mod recommender;
mod split;
mod treatment;

pub use bprmf::BprMf;
pub use metrics::{
    hit_at, hit_ratio, kendall_tau, ndcg, ndcg_at, position_of, rank_by_scores, spearman_rho,
};
pub use recommender::{reference_set, ArcRecRanker, Recommender};
pub use split::{candidates_excluding, leave_last_one_out, Split};
pub use cold::{cold_start_protocol, hold_out_products, split_products, ColdQuery, ColdSplit, ColdStartReport};
pub use protocols::{
    correlation_protocol, leave_last_one_out_protocol, rank_candidates, CorrelationReport, RankedList, TopKReport,
};
pub use treatment::{
    mean_rank_change, sensitivity_groups, treatment_experiment, SensitivityGroup, TreatmentConfig, TreatmentReport,
    TreatmentRow, TreatmentSummary,
};
