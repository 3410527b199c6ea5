//! Leave-one-out Recall@K and grouped Recall@K for embedding retrieval.
//!
//! Grouped recall partitions the label set into disjoint groups of `S`
//! labels, evaluates Recall@K inside each group and averages the results.
//! Its expected value does not depend on how many classes the dataset has,
//! and the per-group values are i.i.d., which gives normal confidence
//! intervals, generalization gaps, and bounds for comparing two splits.

pub mod dataset;
pub mod error;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod report;
pub mod scaling;
pub mod stats;
pub mod synth;

pub use dataset::{validate_dataset, EmbeddingSet, LabelId};
pub use error::{Error, Result};
pub use knn::{build_index, Backend, Distance, Neighbor, NeighborIndex};
pub use metrics::{
    build_partition, grouped_recall, grouped_recall_repeated, grouped_recall_with_partition, recall_at_k, EvalConfig,
    GroupPartition, RemainderPolicy, SingletonPolicy,
};
pub use report::{compare_splits, confidence_interval, generalization_gap, GapReport, MetricReport, SplitComparison};
pub use synth::{CorrelationReport, CoverageReport, SweepReport, SyntheticSpec};
