//! Retrieval metrics, the method ablation harness and per-frame weight
//! inspection.

mod ablation;
mod metrics;
mod report;
mod weights;

pub use ablation::{
    ablate, ablate_on, ablate_with, encode, evaluate, rankings, thread_pool, AblationConfig, AblationReport,
    AblationRow, RunRecord, THREADS_ENV,
};
pub use metrics::{average_precision, cmc, mean_ap, rank_gallery, retrieve, Metrics, Ranking};
pub use report::{
    ablation_table, metrics_csv, metrics_table, runs_csv, weights_csv, METRICS_CSV_HEADER, WEIGHTS_CSV_HEADER,
};
pub use weights::{average_ranks, dump_weights, occlusion_probes, spearman, WeightDump, WeightRow};
