//! Seeded Gaussian-cluster embeddings and the experiments built on them.
//!
//! Class centers are uniform in `[-scale, scale]^d`; each sample is its
//! center plus isotropic Gaussian noise. Centers and noise come from two
//! separate RNG streams so the centers of a seed never depend on `m`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::knn::{Backend, Distance};
use crate::metrics::{grouped_recall, recall_at_k, EvalConfig, SingletonPolicy};
use crate::report::{compare_splits, SplitComparison};
use crate::stats;

pub const DEFAULT_DIM: usize = 16;
pub const DEFAULT_PER_CLASS: usize = 8;
/// Class count at which the default noise level is calibrated.
pub const CALIBRATION_CLASSES: usize = 64;
/// Recall@1 targeted by the default noise level.
pub const CALIBRATION_TARGET: f64 = 0.6;

const CENTER_STREAM: u64 = 0x6365_6e74;
const NOISE_STREAM: u64 = 0x6e6f_6973;
const PARTITION_STREAM: u64 = 0x7061_7274;
const SPLIT_STREAM: u64 = 0x7370_6c74;
const TRIAL_STREAM: u64 = 0x7472_6961;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` from `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)) ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Half-width of the hypercube the centers are drawn from.
    pub class_center_scale: f64,
    pub cluster_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: CALIBRATION_CLASSES,
            samples_per_class: DEFAULT_PER_CLASS,
            dim: DEFAULT_DIM,
            class_center_scale: 1.0,
            cluster_std: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.num_classes == 0 {
            return fail("num_classes must be at least 1");
        }
        if self.samples_per_class < 2 {
            return fail("samples_per_class must be at least 2");
        }
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if !(self.class_center_scale.is_finite() && self.class_center_scale > 0.0) {
            return fail("class_center_scale must be positive and finite");
        }
        if !(self.cluster_std.is_finite() && self.cluster_std >= 0.0) {
            return fail("cluster_std must be non-negative and finite");
        }
        Ok(())
    }

    fn with(&self, num_classes: usize, seed: u64) -> Self {
        Self {
            num_classes,
            seed,
            ..self.clone()
        }
    }
}

/// Draws `C * m` rows, class-major, labelled `"0".."C-1"`.
pub fn generate(spec: &SyntheticSpec) -> Result<EmbeddingSet> {
    spec.validate()?;
    let (c, m, d) = (spec.num_classes, spec.samples_per_class, spec.dim);
    let mut centers_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, CENTER_STREAM, 0));
    let scale = spec.class_center_scale;
    let centers: Vec<f64> = (0..c * d).map(|_| centers_rng.random_range(-scale..scale)).collect();

    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, NOISE_STREAM, 0));
    let mut values = Vec::with_capacity(c * m * d);
    let mut labels = Vec::with_capacity(c * m);
    for (class, center) in centers.chunks_exact(d).enumerate() {
        for _ in 0..m {
            values.extend(center.iter().map(|&x| {
                let z: f64 = noise_rng.sample(StandardNormal);
                x + spec.cluster_std * z
            }));
            labels.push(class.to_string());
        }
    }
    EmbeddingSet::from_flat(values, d, labels)
}

fn plain_recall(set: &EmbeddingSet, k: usize, backend: Backend) -> Result<f64> {
    Ok(recall_at_k(set, k, backend, Distance::SquaredEuclidean, SingletonPolicy::Skip)?.value)
}

fn grouped_value(set: &EmbeddingSet, group_size: usize, k: usize, seed: u64, backend: Backend) -> Result<f64> {
    let config = EvalConfig {
        k,
        group_size: Some(group_size),
        seed: derive_seed(seed, PARTITION_STREAM, 0),
        backend,
        ..EvalConfig::default()
    };
    Ok(grouped_recall(set, &config)?.value)
}

/// Finds the noise level at which the trial-averaged Recall@1 of `base` (at
/// its class count) equals `target`, by bisection over `cluster_std`.
pub fn calibrate_noise(base: &SyntheticSpec, target: f64, trials: usize) -> Result<f64> {
    base.validate()?;
    if !(target > 0.0 && target < 1.0) || trials == 0 {
        return Err(Error::InvalidExperiment(
            "target must lie in (0, 1) and trials be positive".into(),
        ));
    }
    let recall_at = |std: f64| -> Result<f64> {
        let values = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let spec = SyntheticSpec {
                    cluster_std: std,
                    seed: derive_seed(base.seed, TRIAL_STREAM, t),
                    ..base.clone()
                };
                plain_recall(&generate(&spec)?, 1, Backend::VpTree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(stats::mean(&values).expect("trials > 0"))
    };

    let (mut lo, mut hi) = (0.0, base.class_center_scale);
    while recall_at(hi)? > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 * base.class_center_scale {
            return Err(Error::InvalidExperiment("recall never drops to the target".into()));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if recall_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Desk-scale operating point: `d = 16`, `m = 8`, noise calibrated so that
/// Recall@1 is about 0.6 at 64 classes.
pub fn default_operating_point(seed: u64) -> Result<SyntheticSpec> {
    let base = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let cluster_std = calibrate_noise(&base, CALIBRATION_TARGET, 8)?;
    Ok(SyntheticSpec { cluster_std, ..base })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub classes: usize,
    pub plain_mean: f64,
    pub plain_se: Option<f64>,
    pub grouped_mean: f64,
    pub grouped_se: Option<f64>,
    /// Per-trial values, trial order.
    pub plain_values: Vec<f64>,
    pub grouped_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub spec: SyntheticSpec,
    pub group_size: usize,
    pub k: usize,
    pub trials: usize,
    pub points: Vec<SweepPoint>,
}

/// Plain and grouped recall as the class count grows.
pub fn sweep_class_count(
    base: &SyntheticSpec,
    class_counts: &[usize],
    group_size: usize,
    k: usize,
    trials: usize,
) -> Result<SweepReport> {
    base.validate()?;
    if trials == 0 {
        return Err(Error::InvalidExperiment("trials must be at least 1".into()));
    }
    if group_size == 0 {
        return Err(Error::ZeroGroupSize);
    }
    if let Some(&c) = class_counts.iter().find(|&&c| c < group_size) {
        return Err(Error::NotEnoughLabels { labels: c, group_size });
    }
    let points = class_counts
        .iter()
        .map(|&classes| {
            let pairs = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let spec = base.with(classes, derive_seed(base.seed, classes as u64, t));
                    let set = generate(&spec)?;
                    Ok((
                        plain_recall(&set, k, Backend::VpTree)?,
                        grouped_value(&set, group_size, k, spec.seed, Backend::VpTree)?,
                    ))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let (plain_values, grouped_values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(SweepPoint {
                classes,
                plain_mean: stats::mean(&plain_values).expect("trials > 0"),
                plain_se: stats::standard_error(&plain_values),
                grouped_mean: stats::mean(&grouped_values).expect("trials > 0"),
                grouped_se: stats::standard_error(&grouped_values),
                plain_values,
                grouped_values,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport {
        spec: base.clone(),
        group_size,
        k,
        trials,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec: SyntheticSpec,
    pub group_size: usize,
    pub k: usize,
    pub alpha: f64,
    pub trials: usize,
    pub covered: usize,
    /// Fraction of trials with `difference <= bound`.
    pub coverage: f64,
    pub differences: Vec<f64>,
    pub bounds: Vec<f64>,
}

pub const MIN_COVERAGE_TRIALS: usize = 100;

/// Splits one trial's labels uniformly at random into two halves and
/// compares grouped recall on each.
pub fn split_trial(spec: &SyntheticSpec, group_size: usize, k: usize, alpha: f64) -> Result<SplitComparison> {
    let set = generate(spec)?;
    let mut names: Vec<&String> = set.label_names().iter().collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, SPLIT_STREAM, 0)));
    let half = names.len() / 2;
    let mut side = vec![false; set.num_labels()];
    for name in &names[half..] {
        side[set.label_to_id(name).expect("own label") as usize] = true;
    }
    let (a_rows, b_rows): (Vec<usize>, Vec<usize>) = (0..set.len()).partition(|&i| !side[set.label_id(i) as usize]);
    let config = |stream_index| EvalConfig {
        k,
        alpha,
        group_size: Some(group_size),
        seed: derive_seed(spec.seed, PARTITION_STREAM, stream_index),
        ..EvalConfig::default()
    };
    let a = grouped_recall(&set.subset(&a_rows)?, &config(1))?;
    let b = grouped_recall(&set.subset(&b_rows)?, &config(2))?;
    compare_splits(&a, &b, alpha)
}

/// Monte Carlo coverage of the two-split difference bound.
pub fn coverage_experiment(
    spec: &SyntheticSpec,
    group_size: usize,
    k: usize,
    alpha: f64,
    trials: usize,
) -> Result<CoverageReport> {
    spec.validate()?;
    if !spec.num_classes.is_multiple_of(2) || spec.num_classes / 2 < group_size {
        return Err(Error::InvalidExperiment(format!(
            "need an even class count with at least {group_size} classes per half, got {}",
            spec.num_classes
        )));
    }
    if trials < MIN_COVERAGE_TRIALS {
        return Err(Error::InvalidExperiment(format!(
            "coverage needs at least {MIN_COVERAGE_TRIALS} trials"
        )));
    }
    let comparisons = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            split_trial(
                &spec.with(spec.num_classes, derive_seed(spec.seed, TRIAL_STREAM, t)),
                group_size,
                k,
                alpha,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let covered = comparisons.iter().filter(|c| c.consistent).count();
    Ok(CoverageReport {
        spec: spec.clone(),
        group_size,
        k,
        alpha,
        trials,
        covered,
        coverage: covered as f64 / trials as f64,
        differences: comparisons.iter().map(|c| c.difference).collect(),
        bounds: comparisons.iter().map(|c| c.bound).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub group_size: usize,
    pub k: usize,
    pub cluster_std: Vec<f64>,
    pub plain: Vec<f64>,
    pub grouped: Vec<f64>,
    /// `None` when either coordinate has zero variance.
    pub pearson: Option<f64>,
}

pub const MIN_CORRELATION_POINTS: usize = 5;

/// Plain vs grouped recall across specs sharing one class count.
pub fn correlation_experiment(specs: &[SyntheticSpec], group_size: usize, k: usize) -> Result<CorrelationReport> {
    if specs.len() < MIN_CORRELATION_POINTS {
        return Err(Error::InvalidExperiment(format!(
            "correlation needs at least {MIN_CORRELATION_POINTS} specs, got {}",
            specs.len()
        )));
    }
    if specs.iter().any(|s| s.num_classes != specs[0].num_classes) {
        return Err(Error::InvalidExperiment("all specs must share one class count".into()));
    }
    let pairs = specs
        .par_iter()
        .map(|spec| {
            let set = generate(spec)?;
            Ok((
                plain_recall(&set, k, Backend::VpTree)?,
                grouped_value(&set, group_size, k, spec.seed, Backend::VpTree)?,
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (plain, grouped): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(CorrelationReport {
        group_size,
        k,
        cluster_std: specs.iter().map(|s| s.cluster_std).collect(),
        pearson: stats::pearson(&plain, &grouped),
        plain,
        grouped,
    })
}

/// `points` specs with noise spaced evenly over `[0, max_std]`.
pub fn noise_ladder(base: &SyntheticSpec, max_std: f64, points: usize) -> Vec<SyntheticSpec> {
    (0..points)
        .map(|i| {
            let frac = if points > 1 {
                i as f64 / (points - 1) as f64
            } else {
                0.0
            };
            SyntheticSpec {
                cluster_std: max_std * frac,
                seed: derive_seed(base.seed, TRIAL_STREAM, i as u64),
                ..base.clone()
            }
        })
        .collect()
}
