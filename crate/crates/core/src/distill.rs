//! MMD-driven dataset distillation: exact data adaptivity as a brute-force
//! oracle, the fast proxy ranking that reproduces its order, the per-step
//! pruning rule and the epoch schedule with a pluggable per-epoch hook.
//!
//! Data adaptivity of a sample is the change in dataset distance to the
//! target caused by removing it; pruning keeps the highest-adaptivity rows.
//! Computing adaptivity exactly costs `O((m+n)^2)` kernel evaluations per
//! row, while the proxy scores every row in `O(m+n)`, turning the full
//! ranking from `O(2m(m+n)^2)` into `O(m(m+n))`.

use crate::metrics::{kernel_unchecked, mmd_squared, FeatureMatrix, KernelConfig, MetricsError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("row index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("{scores} scores for a dataset of size {size}")]
    LengthMismatch { scores: usize, size: usize },
    #[error("source dataset needs at least 2 rows, has {0}")]
    SourceTooSmall(usize),
    #[error("invalid distillation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Pruning schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    /// Fraction of rows kept per pruning step, in (0, 1).
    pub retention_ratio: f64,
    /// Never prune below this size.
    pub size_threshold: usize,
    /// Number of epochs.
    pub epochs: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            retention_ratio: 0.7,
            size_threshold: 10_000,
            epochs: 5,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        if !(self.retention_ratio > 0.0 && self.retention_ratio < 1.0) {
            return Err(DistillError::InvalidConfig(format!(
                "retention ratio {} must lie in (0, 1)",
                self.retention_ratio
            )));
        }
        if self.size_threshold == 0 {
            return Err(DistillError::InvalidConfig(
                "size threshold must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(DistillError::InvalidConfig("epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Exact,
    Proxy,
}

/// Per-row adaptivity scores aligned with the source matrix rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivityScores {
    pub row_ids: Vec<u64>,
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
}

impl AdaptivityScores {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

fn mmd_distance(d: &FeatureMatrix, t: &FeatureMatrix, cfg: &KernelConfig) -> Result<f64, MetricsError> {
    Ok(mmd_squared(d, t, cfg)?.max(0.0).sqrt())
}

/// Exact data adaptivity of row `index`:
/// `d(D \ {x_i}, T) - d(D, T)` with `d` the (clamped) MMD. Two full MMD
/// evaluations per call; this is the oracle the proxy is checked against.
pub fn adaptivity_exact(
    index: usize,
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
) -> Result<f64, DistillError> {
    if d.rows() < 2 {
        return Err(DistillError::SourceTooSmall(d.rows()));
    }
    if index >= d.rows() {
        return Err(DistillError::IndexOutOfRange {
            index,
            rows: d.rows(),
        });
    }
    let full = mmd_distance(d, t, cfg)?;
    let rest: Vec<usize> = (0..d.rows()).filter(|i| *i != index).collect();
    let without = mmd_distance(&d.select(&rest), t, cfg)?;
    Ok(without - full)
}

/// Exact adaptivity of every row, by repeated [`adaptivity_exact`] calls
/// (`O(m (m+n)^2)` total). Oracle use only; rows are independent so the
/// loop parallelizes without changing any value.
pub fn adaptivity_exact_all(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
) -> Result<AdaptivityScores, DistillError> {
    let scores: Vec<f64> = (0..d.rows())
        .into_par_iter()
        .map(|i| adaptivity_exact(i, d, t, cfg))
        .collect::<Result<_, _>>()?;
    Ok(AdaptivityScores {
        row_ids: d.row_ids().to_vec(),
        scores,
        kind: ScoreKind::Exact,
    })
}

fn proxy_scores(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
    include_self: bool,
) -> Result<AdaptivityScores, DistillError> {
    if d.rows() < 2 {
        return Err(DistillError::SourceTooSmall(d.rows()));
    }
    if d.cols() != t.cols() {
        return Err(DistillError::Metrics(MetricsError::DimensionMismatch {
            left: d.cols(),
            right: t.cols(),
        }));
    }
    let m = d.rows();
    let n = t.rows();
    let scores: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let row = d.row(i);
            let mut target_sum = 0.0;
            for j in 0..n {
                target_sum += kernel_unchecked(row, t.row(j), cfg);
            }
            let mut source_sum = 0.0;
            for j in 0..m {
                if include_self || j != i {
                    source_sum += kernel_unchecked(row, d.row(j), cfg);
                }
            }
            target_sum / n as f64 - source_sum / (m - 1) as f64
        })
        .collect();
    Ok(AdaptivityScores {
        row_ids: d.row_ids().to_vec(),
        scores,
        kind: ScoreKind::Proxy,
    })
}

/// Adaptivity proxy: for each row,
/// `(1/n) sum_{t in T} k(x, t) - (1/(m-1)) sum_{x' in D, x' != x} k(x, x')`.
/// `O(m+n)` kernel evaluations per row. Sorting these descending reproduces
/// the exact-adaptivity order whenever single removals perturb the distance
/// only slightly.
pub fn adaptivity_proxy(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
) -> Result<AdaptivityScores, DistillError> {
    proxy_scores(d, t, cfg, false)
}

/// Literal-sum variant that keeps the self term (denominator still `m-1`);
/// for a stationary kernel every score shifts by the constant `1/(m-1)`, so
/// the induced order is identical to [`adaptivity_proxy`].
pub fn adaptivity_proxy_inclusive(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
) -> Result<AdaptivityScores, DistillError> {
    proxy_scores(d, t, cfg, true)
}

/// Indices sorted by descending score, ties broken by ascending row id.
pub fn descending_order(scores: &AdaptivityScores) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores[b]
            .total_cmp(&scores.scores[a])
            .then(scores.row_ids[a].cmp(&scores.row_ids[b]))
    });
    order
}

/// One pruning step: keeps the `max(floor(r * size), size_threshold)`
/// highest-score row ids, or everything when `size <= size_threshold`.
/// Returned ids are in ascending order.
pub fn distill_step(
    size: usize,
    scores: &AdaptivityScores,
    cfg: &DistillConfig,
) -> Result<Vec<u64>, DistillError> {
    cfg.validate()?;
    if scores.len() != size {
        return Err(DistillError::LengthMismatch {
            scores: scores.len(),
            size,
        });
    }
    if size <= cfg.size_threshold {
        return Ok(scores.row_ids.clone());
    }
    let keep = ((cfg.retention_ratio * size as f64).floor() as usize).max(cfg.size_threshold);
    let order = descending_order(scores);
    let mut ids: Vec<u64> = order[..keep].iter().map(|&i| scores.row_ids[i]).collect();
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub size_before: usize,
    pub size_after: usize,
    pub retained_ids: Vec<u64>,
    /// Squared MMD between the retained subset and the target.
    pub mmd_after: f64,
}

/// Wall-clock measurements, kept apart from the deterministic sections.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DistillTiming {
    pub per_epoch_secs: Vec<f64>,
    pub total_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillReport {
    pub config: DistillConfig,
    pub bandwidths: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    pub timing: DistillTiming,
}

/// Runs the epoch schedule: each epoch invokes `epoch_hook` (the stand-in
/// for a training step; a no-op hook is valid), then, while the current size
/// exceeds the threshold, recomputes proxy scores on the retained rows
/// against the fixed target and prunes.
pub fn run_distillation(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    kcfg: &KernelConfig,
    dcfg: &DistillConfig,
    mut epoch_hook: impl FnMut(usize, &[u64]),
) -> Result<DistillReport, DistillError> {
    dcfg.validate()?;
    if d.cols() != t.cols() {
        return Err(DistillError::Metrics(MetricsError::DimensionMismatch {
            left: d.cols(),
            right: t.cols(),
        }));
    }
    let started = Instant::now();
    let mut current = d.clone();
    let mut epochs = Vec::with_capacity(dcfg.epochs);
    let mut timing = DistillTiming::default();
    let mut cached_mmd: Option<f64> = None;

    for epoch in 1..=dcfg.epochs {
        let t0 = Instant::now();
        epoch_hook(epoch, current.row_ids());
        let size_before = current.rows();
        if size_before > dcfg.size_threshold {
            let scores = adaptivity_proxy(&current, t, kcfg)?;
            let keep = distill_step(size_before, &scores, dcfg)?;
            let keep_set: HashSet<u64> = keep.iter().copied().collect();
            current = current.select_by_ids(&keep_set);
            cached_mmd = None;
        }
        let mmd_after = match cached_mmd {
            Some(v) => v,
            None => {
                let v = mmd_squared(&current, t, kcfg)?;
                cached_mmd = Some(v);
                v
            }
        };
        epochs.push(EpochRecord {
            epoch,
            size_before,
            size_after: current.rows(),
            retained_ids: current.row_ids().to_vec(),
            mmd_after,
        });
        timing.per_epoch_secs.push(t0.elapsed().as_secs_f64());
    }
    timing.total_secs = started.elapsed().as_secs_f64();
    Ok(DistillReport {
        config: dcfg.clone(),
        bandwidths: kcfg.bandwidths.clone(),
        epochs,
        timing,
    })
}
