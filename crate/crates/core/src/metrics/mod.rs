//! Recall@K and grouped Recall@K under the leave-one-out protocol.
//!
//! Every row is a query against all other rows. A query scores a hit when any
//! of its `k` nearest neighbors carries the same label. Grouped recall splits
//! the label set into disjoint groups of `S` labels, evaluates recall inside
//! each group's rows only, and averages the per-group values unweighted.

mod partition;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::partition::{build_partition, GroupPartition, RemainderPolicy};
use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{build_index, Backend, Distance};
use crate::report::{check_alpha, MetricReport, Timing};

pub const RECALL_METRIC: &str = "recall_at_k";
pub const GROUPED_RECALL_METRIC: &str = "grouped_recall_at_k";

/// Handling of rows whose label has no second sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingletonPolicy {
    #[default]
    Skip,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    /// Labels per group; `None` puts every label in a single group.
    pub group_size: Option<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub remainder_policy: RemainderPolicy,
    pub singleton_policy: SingletonPolicy,
    pub backend: Backend,
    pub distance: Distance,
    /// Independent repartitions, seeds `seed, seed + 1, ...`.
    pub repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 1,
            group_size: None,
            seed: 0,
            alpha: 0.05,
            remainder_policy: RemainderPolicy::Drop,
            singleton_policy: SingletonPolicy::Skip,
            backend: Backend::VpTree,
            distance: Distance::SquaredEuclidean,
            repeats: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroK);
        }
        if self.group_size == Some(0) {
            return Err(Error::ZeroGroupSize);
        }
        if self.repeats == 0 {
            return Err(Error::InvalidExperiment("repeats must be at least 1".into()));
        }
        check_alpha(self.alpha)
    }
}

/// Raw leave-one-out counts for one (sub-)dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RecallCounts {
    hits: usize,
    evaluated: usize,
    skipped: usize,
    /// `k` after clamping to the gallery size.
    effective_k: usize,
    timing: Timing,
}

impl RecallCounts {
    fn value(&self) -> f64 {
        self.hits as f64 / self.evaluated as f64
    }
}

fn recall_counts(
    dataset: &EmbeddingSet,
    k: usize,
    backend: Backend,
    distance: Distance,
    singleton_policy: SingletonPolicy,
) -> Result<RecallCounts> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let counts = dataset.label_counts();
    if singleton_policy == SingletonPolicy::Error {
        if let Some(id) = counts.iter().position(|&c| c < 2) {
            return Err(Error::SingletonLabel {
                label: dataset.label_names()[id].clone(),
            });
        }
    }
    let queries: Vec<usize> = (0..n).filter(|&i| counts[dataset.label_id(i) as usize] >= 2).collect();
    if queries.is_empty() {
        return Err(Error::NoEvaluableQueries);
    }
    let effective_k = k.min(n - 1);

    let started = Instant::now();
    let index = build_index(dataset, backend, distance)?;
    let built = Instant::now();
    let labels = dataset.label_ids();
    let hits = queries
        .par_iter()
        .map(|&q| -> Result<usize> {
            let neighbors = index.query_knn(q, effective_k, true)?;
            Ok(usize::from(neighbors.iter().any(|&id| labels[id] == labels[q])))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let done = Instant::now();

    Ok(RecallCounts {
        hits,
        evaluated: queries.len(),
        skipped: n - queries.len(),
        effective_k,
        timing: Timing {
            build_ms: (built - started).as_secs_f64() * 1e3,
            query_ms: (done - built).as_secs_f64() * 1e3,
        },
    })
}

fn clamp_warning(k: usize, effective_k: usize) -> String {
    format!("k = {k} exceeds the gallery size, clamped to {effective_k}")
}

fn skip_warning(skipped: usize) -> String {
    format!("skipped {skipped} queries whose label has a single sample")
}

/// Leave-one-out Recall@K over the whole dataset, reported as a single group.
pub fn recall_at_k(
    dataset: &EmbeddingSet,
    k: usize,
    backend: Backend,
    distance: Distance,
    singleton_policy: SingletonPolicy,
) -> Result<MetricReport> {
    let counts = recall_counts(dataset, k, backend, distance, singleton_policy)?;
    let mut report = MetricReport::from_group_values(RECALL_METRIC, k, None, 0, vec![counts.value()], 0.05)?;
    if counts.effective_k < k {
        report.warnings.push(clamp_warning(k, counts.effective_k));
    }
    if counts.skipped > 0 {
        report.warnings.push(skip_warning(counts.skipped));
    }
    report.skipped_queries = counts.skipped;
    report.timing = counts.timing;
    Ok(report)
}

/// Grouped Recall@K with a partition drawn from `config.seed`.
///
/// Without `config.group_size` every label lands in one group and the value
/// equals [`recall_at_k`] on the full dataset.
pub fn grouped_recall(dataset: &EmbeddingSet, config: &EvalConfig) -> Result<MetricReport> {
    config.validate()?;
    let group_size = config.group_size.unwrap_or(dataset.num_labels());
    let partition = build_partition(dataset.label_names(), group_size, config.seed, config.remainder_policy)?;
    grouped_recall_with_partition(dataset, &partition, config)
}

/// One report per repartition seed `config.seed + r`, `r < config.repeats`.
pub fn grouped_recall_repeated(dataset: &EmbeddingSet, config: &EvalConfig) -> Result<Vec<MetricReport>> {
    config.validate()?;
    (0..config.repeats as u64)
        .map(|r| {
            grouped_recall(
                dataset,
                &EvalConfig {
                    seed: config.seed.wrapping_add(r),
                    ..config.clone()
                },
            )
        })
        .collect()
}

/// Row ids of each group, ascending. Labels absent from the dataset are an
/// error; dataset labels missing from the partition are ignored.
pub fn group_rows(dataset: &EmbeddingSet, partition: &GroupPartition) -> Result<Vec<Vec<usize>>> {
    let mut owner = vec![usize::MAX; dataset.num_labels()];
    for (g, group) in partition.groups.iter().enumerate() {
        for name in group {
            let id = dataset
                .label_to_id(name)
                .ok_or_else(|| Error::InvalidExperiment(format!("partition label {name:?} is not in the dataset")))?;
            owner[id as usize] = g;
        }
    }
    let mut rows = vec![Vec::new(); partition.groups.len()];
    for (i, &label) in dataset.label_ids().iter().enumerate() {
        let g = owner[label as usize];
        if g != usize::MAX {
            rows[g].push(i);
        }
    }
    Ok(rows)
}

/// Grouped Recall@K over an explicit partition.
pub fn grouped_recall_with_partition(
    dataset: &EmbeddingSet,
    partition: &GroupPartition,
    config: &EvalConfig,
) -> Result<MetricReport> {
    config.validate()?;
    let rows = group_rows(dataset, partition)?;
    let counts: Vec<RecallCounts> = rows
        .par_iter()
        .enumerate()
        .map(|(index, rows)| {
            let annotate = |source| Error::Group {
                index,
                source: Box::new(source),
            };
            let sub = dataset.subset(rows).map_err(annotate)?;
            recall_counts(&sub, config.k, config.backend, config.distance, config.singleton_policy).map_err(annotate)
        })
        .collect::<Result<_>>()?;

    let group_values = counts.iter().map(RecallCounts::value).collect();
    let mut report = MetricReport::from_group_values(
        GROUPED_RECALL_METRIC,
        config.k,
        Some(partition.group_size),
        partition.seed,
        group_values,
        config.alpha,
    )?;

    let mut warnings = Vec::new();
    if !partition.dropped_labels.is_empty() {
        warnings.push(format!(
            "dropped {} labels that do not fill a group of {}: {}",
            partition.dropped_labels.len(),
            partition.group_size,
            partition.dropped_labels.join(", ")
        ));
    }
    let clamped: Vec<usize> = counts
        .iter()
        .filter(|c| c.effective_k < config.k)
        .map(|c| c.effective_k)
        .collect();
    if let Some(&min_k) = clamped.iter().min() {
        warnings.push(format!(
            "{} in {} of {} groups",
            clamp_warning(config.k, min_k),
            clamped.len(),
            counts.len()
        ));
    }
    let skipped = counts.iter().map(|c| c.skipped).sum();
    if skipped > 0 {
        warnings.push(skip_warning(skipped));
    }
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    report.skipped_queries = skipped;
    report.timing = counts.iter().fold(Timing::default(), |t, c| Timing {
        build_ms: t.build_ms + c.timing.build_ms,
        query_ms: t.query_ms + c.timing.query_ms,
    });
    Ok(report)
}
