//! Variance-constrained distributed clustering.
//!
//! Every site clusters its own data into a relatively large number of
//! sub-clusters and ships only `(count, center, SSE)` per sub-cluster to a
//! merging site. The merging site greedily joins the pair of global clusters
//! with the smallest variance increase, as long as the union's variance stays
//! below `sigma_factor` times the larger of the two variances, and then moves
//! border sub-clusters between global clusters when that lowers the total
//! SSE. The number of global clusters is not fixed in advance.
//!
//! ```
//! use vbdc::experiment::{run_experiment, ExperimentConfig};
//!
//! let out = run_experiment(&ExperimentConfig::synthetic3(7)).unwrap();
//! assert_eq!(out.result.metrics.k_global, 3);
//! ```

pub mod cli;
pub mod csvio;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod harness;
pub mod local;
pub mod merge;
pub mod metrics;
pub mod stats;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use harness::{run_pipeline, CommLedger, PipelineOptions, RunResult};
pub use local::{Algorithm, LocalClusteringConfig, LocalResult};
pub use merge::{greedy_merge, merge_predicate, perturb, ConstraintMode, MergeConfig, MergeTrace};
pub use stats::{
    merge_stats, remove_stats, summarize, total_sse, variance_increase, ClusterStats, GlobalCluster,
    SubClusterId, SubClusterSummary,
};
