//! Result records produced by the metrics module.
//!
//! Field order of [`MetricReport`] is the key order of the JSON report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const SCHEMA_VERSION: u32 = 1;

/// Groups below this count get a warning: the normal approximation is weak.
pub const LOW_GROUP_COUNT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub alpha: f64,
    /// `None` when fewer than two groups were evaluated.
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub build_ms: f64,
    pub query_ms: f64,
}

/// A metric value with its per-group breakdown and confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    #[serde(rename = "metric")]
    pub metric_name: String,
    pub k: usize,
    /// Labels per group; `None` for plain (ungrouped) recall.
    pub group_size: Option<usize>,
    pub seed: u64,
    pub value: f64,
    pub group_values: Vec<f64>,
    pub group_count: usize,
    pub sample_variance: Option<f64>,
    pub ci: ConfidenceInterval,
    pub skipped_queries: usize,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl MetricReport {
    /// Builds a report from per-group values: mean, Bessel variance and the
    /// normal interval are derived here.
    pub fn from_group_values(
        metric_name: impl Into<String>,
        k: usize,
        group_size: Option<usize>,
        seed: u64,
        group_values: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let value = stats::mean(&group_values).ok_or(Error::TooFewGroups(0))?;
        let group_count = group_values.len();
        let sample_variance = stats::sample_variance(&group_values);
        let half_width = match confidence_interval(&group_values, alpha) {
            Ok((_, hw)) => Some(hw),
            Err(Error::TooFewGroups(_)) => None,
            Err(e) => return Err(e),
        };
        let mut warnings = Vec::new();
        if group_size.is_some() {
            if group_count < 2 {
                warnings.push(format!("confidence interval unavailable with {group_count} group"));
            } else if group_count < LOW_GROUP_COUNT {
                warnings.push(format!(
                    "low group count: {group_count} < {LOW_GROUP_COUNT}, normal interval may be unreliable"
                ));
            }
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            metric_name: metric_name.into(),
            k,
            group_size,
            seed,
            value,
            group_values,
            group_count,
            sample_variance,
            ci: ConfidenceInterval { alpha, half_width },
            skipped_queries: 0,
            warnings,
            timing: Timing::default(),
        })
    }

    /// Checks that two reports measure the same thing.
    pub fn ensure_comparable(&self, other: &MetricReport) -> Result<()> {
        if self.metric_name != other.metric_name {
            return Err(Error::ReportMismatch(format!(
                "metric {:?} vs {:?}",
                self.metric_name, other.metric_name
            )));
        }
        if self.k != other.k {
            return Err(Error::ReportMismatch(format!("k {} vs {}", self.k, other.k)));
        }
        if self.group_size != other.group_size {
            return Err(Error::ReportMismatch(format!(
                "group size {:?} vs {:?}",
                self.group_size, other.group_size
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Mean and normal-approximation half-width `z_{1-alpha/2} * sqrt(s^2 / r)`
/// over i.i.d. per-group values.
pub fn confidence_interval(group_values: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let r = group_values.len();
    if r < 2 {
        return Err(Error::TooFewGroups(r));
    }
    let mean = stats::mean(group_values).expect("non-empty");
    let variance = stats::sample_variance(group_values).expect("two or more values");
    Ok((mean, stats::two_sided_z(alpha) * (variance / r as f64).sqrt()))
}

/// Train-minus-test difference for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub metric: String,
    pub k: usize,
    pub group_size: Option<usize>,
    pub train_value: f64,
    pub test_value: f64,
    /// `train_value - test_value`; negative means the test split scored higher.
    pub gap: f64,
    pub train_half_width: Option<f64>,
    pub test_half_width: Option<f64>,
}

pub fn generalization_gap(train: &MetricReport, test: &MetricReport) -> Result<GapReport> {
    train.ensure_comparable(test)?;
    Ok(GapReport {
        metric: train.metric_name.clone(),
        k: train.k,
        group_size: train.group_size,
        train_value: train.value,
        test_value: test.value,
        gap: train.value - test.value,
        train_half_width: train.ci.half_width,
        test_half_width: test.ci.half_width,
    })
}

/// Difference between two independent splits and its normal bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitComparison {
    pub metric: String,
    pub k: usize,
    pub group_size: Option<usize>,
    pub alpha: f64,
    pub value_a: f64,
    pub value_b: f64,
    pub group_count_a: usize,
    pub group_count_b: usize,
    /// `|value_a - value_b|`.
    pub difference: f64,
    /// `z_{1-alpha/2} * sqrt(s_a^2 / r_a + s_b^2 / r_b)`.
    pub bound: f64,
    /// `difference <= bound`.
    pub consistent: bool,
}

pub fn compare_splits(a: &MetricReport, b: &MetricReport, alpha: f64) -> Result<SplitComparison> {
    check_alpha(alpha)?;
    a.ensure_comparable(b)?;
    let (ra, rb) = (a.group_values.len(), b.group_values.len());
    if ra < 2 || rb < 2 {
        return Err(Error::TooFewGroups(ra.min(rb)));
    }
    let va = stats::sample_variance(&a.group_values).expect("two or more values");
    let vb = stats::sample_variance(&b.group_values).expect("two or more values");
    let bound = stats::two_sided_z(alpha) * (va / ra as f64 + vb / rb as f64).sqrt();
    let difference = (a.value - b.value).abs();
    Ok(SplitComparison {
        metric: a.metric_name.clone(),
        k: a.k,
        group_size: a.group_size,
        alpha,
        value_a: a.value,
        value_b: b.value,
        group_count_a: ra,
        group_count_b: rb,
        difference,
        bound,
        consistent: difference <= bound,
    })
}
