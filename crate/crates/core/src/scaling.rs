//! Wall-clock scaling of full versus grouped evaluation.
//!
//! Full leave-one-out recall with a linear-scan backend costs `O(n^2)`. With
//! a fixed group size every group has a fixed number of rows, so grouped
//! recall costs `O(n)`: the group count grows linearly and per-group work is
//! constant. Timings run on a single thread so the slopes reflect work done.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{Backend, Distance};
use crate::metrics::{grouped_recall, recall_at_k, EvalConfig, SingletonPolicy};
use crate::stats;
use crate::synth::{derive_seed, generate, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Dataset row counts, strictly increasing.
    pub sizes: Vec<usize>,
    pub group_size: usize,
    pub backend: Backend,
    /// Timed repetitions per size; the median is reported.
    pub trials: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub cluster_std: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![5000, 10000, 20000],
            group_size: 10,
            backend: Backend::BruteForce,
            trials: 3,
            samples_per_class: 10,
            dim: 16,
            cluster_std: 0.25,
            k: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub rows: usize,
    pub full_ms: f64,
    pub grouped_ms: f64,
    pub full_value: f64,
    pub grouped_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log time against log rows; needs two sizes.
    pub full_slope: Option<f64>,
    pub grouped_slope: Option<f64>,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(f64, T)> {
    let start = Instant::now();
    let out = f()?;
    Ok((start.elapsed().as_secs_f64() * 1e3, out))
}

pub fn run_scaling(config: &BenchConfig) -> Result<BenchReport> {
    if config.sizes.is_empty() {
        return Err(Error::InvalidExperiment("no sizes given".into()));
    }
    if config.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidExperiment("sizes must be strictly increasing".into()));
    }
    if config.trials == 0 {
        return Err(Error::InvalidExperiment("trials must be at least 1".into()));
    }
    let min_rows = config.samples_per_class * config.group_size;
    if config.sizes[0] < min_rows {
        return Err(Error::InvalidExperiment(format!(
            "size {} is below one group of {} classes x {} samples",
            config.sizes[0], config.group_size, config.samples_per_class
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;

    let points = pool.install(|| {
        config
            .sizes
            .iter()
            .map(|&rows| {
                let spec = SyntheticSpec {
                    num_classes: rows / config.samples_per_class,
                    samples_per_class: config.samples_per_class,
                    dim: config.dim,
                    class_center_scale: 1.0,
                    cluster_std: config.cluster_std,
                    seed: derive_seed(config.seed, rows as u64, 0),
                };
                let set = generate(&spec)?;
                let eval = EvalConfig {
                    k: config.k,
                    group_size: Some(config.group_size),
                    seed: spec.seed,
                    backend: config.backend,
                    ..EvalConfig::default()
                };
                let mut full_ms = Vec::with_capacity(config.trials);
                let mut grouped_ms = Vec::with_capacity(config.trials);
                let (mut full_value, mut grouped_value) = (0.0, 0.0);
                for _ in 0..config.trials {
                    let (ms, report) = timed(|| {
                        recall_at_k(
                            &set,
                            config.k,
                            config.backend,
                            Distance::SquaredEuclidean,
                            SingletonPolicy::Skip,
                        )
                    })?;
                    full_ms.push(ms);
                    full_value = report.value;
                    let (ms, report) = timed(|| grouped_recall(&set, &eval))?;
                    grouped_ms.push(ms);
                    grouped_value = report.value;
                }
                Ok(BenchPoint {
                    rows: set.len(),
                    full_ms: median(full_ms),
                    grouped_ms: median(grouped_ms),
                    full_value,
                    grouped_value,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rows: Vec<f64> = points.iter().map(|p| p.rows as f64).collect();
    let full: Vec<f64> = points.iter().map(|p| p.full_ms).collect();
    let grouped: Vec<f64> = points.iter().map(|p| p.grouped_ms).collect();
    Ok(BenchReport {
        config: config.clone(),
        full_slope: stats::log_log_slope(&rows, &full),
        grouped_slope: stats::log_log_slope(&rows, &grouped),
        points,
    })
}
