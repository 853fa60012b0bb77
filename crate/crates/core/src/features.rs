//! Deterministic fixed-length shape descriptors for normalized point
//! clouds: a D2 pairwise-distance histogram, optionally the normalized
//! covariance eigenvalue triple and the semantic-label frequencies.
//!
//! These stand in for learned global features as input to the MMD
//! machinery; externally computed feature matrices plug into the same
//! pipeline through the feature-file format.

use crate::metrics::{FeatureMatrix, MetricsError};
use crate::sampler::LabeledPointCloud;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cloud is not normalized (max point norm {0})")]
    UnnormalizedInput(f64),
    #[error("cloud has too few points ({0})")]
    TooFewPoints(usize),
    #[error("cloud has no spatial spread")]
    DegenerateCloud,
    #[error("invalid descriptor config: {0}")]
    InvalidConfig(String),
    #[error("row {index}: {source}")]
    Row {
        index: usize,
        #[source]
        source: Box<FeatureError>,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Descriptor layout parameters. The output dimension is fixed by the
/// config: `d2_bins` histogram entries, plus 3 eigenvalue entries and 5
/// label frequencies when enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub d2_bins: usize,
    pub d2_pairs: usize,
    pub include_eigen: bool,
    pub include_label_hist: bool,
    pub pair_seed: u64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            d2_bins: 64,
            d2_pairs: 4096,
            include_eigen: true,
            include_label_hist: false,
            pair_seed: 0,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.d2_bins < 2 {
            return Err(FeatureError::InvalidConfig(format!(
                "d2_bins {} must be at least 2",
                self.d2_bins
            )));
        }
        if self.d2_pairs == 0 {
            return Err(FeatureError::InvalidConfig("d2_pairs must be positive".into()));
        }
        Ok(())
    }

    pub fn descriptor_len(&self) -> usize {
        self.d2_bins
            + if self.include_eigen { 3 } else { 0 }
            + if self.include_label_hist { 5 } else { 0 }
    }
}

/// Extracts the descriptor of one normalized cloud.
///
/// Point order never matters: pair indices are drawn against the cloud
/// sorted lexicographically by coordinates, so any permutation of the input
/// produces the identical vector.
pub fn extract_descriptor(
    cloud: &LabeledPointCloud,
    cfg: &DescriptorConfig,
) -> Result<Vec<f64>, FeatureError> {
    cfg.validate()?;
    let n = cloud.len();
    if n < 2 {
        return Err(FeatureError::TooFewPoints(n));
    }
    let max_norm = cloud.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if max_norm > 1.0 + 1e-6 {
        return Err(FeatureError::UnnormalizedInput(max_norm));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        let (p, q) = (&cloud.points[a], &cloud.points[b]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
    });

    let mut out = Vec::with_capacity(cfg.descriptor_len());

    // D2 shape distribution over seeded pseudo-random point pairs, binned
    // uniformly on [0, 2] (the diameter bound of a normalized cloud).
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pair_seed);
    let mut hist = vec![0u64; cfg.d2_bins];
    for _ in 0..cfg.d2_pairs {
        let i = rng.random_range(0..n);
        let j = loop {
            let j = rng.random_range(0..n);
            if j != i {
                break j;
            }
        };
        let dist = (cloud.points[order[i]] - cloud.points[order[j]]).norm();
        let bin = ((dist / 2.0) * cfg.d2_bins as f64) as usize;
        hist[bin.min(cfg.d2_bins - 1)] += 1;
    }
    out.extend(hist.iter().map(|c| *c as f64 / cfg.d2_pairs as f64));

    if cfg.include_eigen {
        // Accumulate in canonical point order so the block is exactly
        // permutation invariant, not merely up to rounding.
        let mut mean = Vector3::zeros();
        for &i in &order {
            mean += cloud.points[i];
        }
        mean /= n as f64;
        let mut cov = Matrix3::zeros();
        for &i in &order {
            let d = cloud.points[i] - mean;
            cov += d * d.transpose();
        }
        cov /= n as f64;
        let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let sum: f64 = eig.iter().sum();
        if sum < 1e-12 {
            return Err(FeatureError::DegenerateCloud);
        }
        out.extend(eig.iter().map(|e| e / sum));
    }

    if cfg.include_label_hist {
        let mut counts = [0u64; 5];
        for s in &cloud.semantic {
            counts[(*s).min(4) as usize] += 1;
        }
        out.extend(counts.iter().map(|c| *c as f64 / n as f64));
    }

    Ok(out)
}

/// Row-per-cloud feature matrix; row ids are the object indices.
pub fn batch_features(
    clouds: &[LabeledPointCloud],
    cfg: &DescriptorConfig,
) -> Result<FeatureMatrix, FeatureError> {
    cfg.validate()?;
    let rows: Vec<Vec<f64>> = clouds
        .par_iter()
        .enumerate()
        .map(|(index, cloud)| {
            extract_descriptor(cloud, cfg).map_err(|source| FeatureError::Row {
                index,
                source: Box::new(source),
            })
        })
        .collect::<Result<_, _>>()?;
    let row_ids = clouds.iter().map(|c| c.source.object_index).collect();
    Ok(FeatureMatrix::from_rows(rows, row_ids)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prim::{sample_canonical_surface, ShapeParams};
    use crate::rct::{sample_rct, Provenance, RctSpec};
    use crate::sampler::{normalize_cloud, sample_labeled_cloud, SamplerConfig};

    fn sphere_cloud(n: usize, seed: u64) -> LabeledPointCloud {
        let params = ShapeParams::Sphere { radius: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vector3<f64>> = (0..n)
            .map(|_| sample_canonical_surface(&params, &mut rng).unwrap().point)
            .collect();
        let (points, _, _) = normalize_cloud(&points).unwrap();
        LabeledPointCloud {
            semantic: vec![0; n],
            instance: vec![0; n],
            normals: None,
            points,
            source: Provenance {
                master_seed: 0,
                object_index: 0,
            },
        }
    }

    fn generated_cloud(master_seed: u64, index: u64) -> LabeledPointCloud {
        let spec = RctSpec {
            master_seed,
            ..RctSpec::default()
        };
        let obj = sample_rct(&spec, index).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(index);
        sample_labeled_cloud(&obj, &SamplerConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn descriptor_is_deterministic() {
        let cloud = generated_cloud(1, 0);
        let cfg = DescriptorConfig::default();
        let a = extract_descriptor(&cloud, &cfg).unwrap();
        let b = extract_descriptor(&cloud, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), cfg.descriptor_len());
    }

    #[test]
    fn descriptor_blocks_are_normalized() {
        let cloud = generated_cloud(2, 3);
        let cfg = DescriptorConfig {
            include_label_hist: true,
            ..DescriptorConfig::default()
        };
        let d = extract_descriptor(&cloud, &cfg).unwrap();
        let hist_sum: f64 = d[..cfg.d2_bins].iter().sum();
        assert!((hist_sum - 1.0).abs() < 1e-9);
        let eig_sum: f64 = d[cfg.d2_bins..cfg.d2_bins + 3].iter().sum();
        assert!((eig_sum - 1.0).abs() < 1e-9);
        let label_sum: f64 = d[cfg.d2_bins + 3..].iter().sum();
        assert!((label_sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_surface_is_isotropic() {
        let cloud = sphere_cloud(8192, 7);
        let cfg = DescriptorConfig::default();
        let d = extract_descriptor(&cloud, &cfg).unwrap();
        for e in &d[cfg.d2_bins..cfg.d2_bins + 3] {
            assert!((e - 1.0 / 3.0).abs() < 0.02, "eigenvalue share {e}");
        }
    }

    #[test]
    fn descriptor_is_permutation_invariant() {
        let cloud = generated_cloud(3, 1);
        let cfg = DescriptorConfig::default();
        let base = extract_descriptor(&cloud, &cfg).unwrap();

        // reverse the point order (labels track their points)
        let mut shuffled = cloud.clone();
        shuffled.points.reverse();
        shuffled.semantic.reverse();
        shuffled.instance.reverse();
        let got = extract_descriptor(&shuffled, &cfg).unwrap();
        assert_eq!(base, got);
    }

    #[test]
    fn translation_before_normalization_is_removed() {
        let spec = RctSpec {
            master_seed: 11,
            ..RctSpec::default()
        };
        let obj = sample_rct(&spec, 2).unwrap();
        let raw_cfg = SamplerConfig {
            normalize: false,
            ..SamplerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = sample_labeled_cloud(&obj, &raw_cfg, &mut rng).unwrap();

        let shift = Vector3::new(5.0, -3.0, 2.0);
        let mut shifted = raw.clone();
        for p in &mut shifted.points {
            *p += shift;
        }

        let mut a = raw.clone();
        a.points = normalize_cloud(&raw.points).unwrap().0;
        let mut b = shifted.clone();
        b.points = normalize_cloud(&shifted.points).unwrap().0;

        let cfg = DescriptorConfig::default();
        let da = extract_descriptor(&a, &cfg).unwrap();
        let db = extract_descriptor(&b, &cfg).unwrap();
        let l_inf = da
            .iter()
            .zip(&db)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(l_inf < 1e-6, "descriptor moved by {l_inf}");
    }

    #[test]
    fn distinct_shapes_produce_distinct_descriptors() {
        let sphere = sphere_cloud(2048, 1);
        let multi = generated_cloud(4, 5);
        let cfg = DescriptorConfig::default();
        let a = extract_descriptor(&sphere, &cfg).unwrap();
        let b = extract_descriptor(&multi, &cfg).unwrap();
        let l2: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(l2 > 0.01, "descriptors too close: {l2}");
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let mut cloud = sphere_cloud(128, 2);
        for p in &mut cloud.points {
            *p *= 3.0;
        }
        assert!(matches!(
            extract_descriptor(&cloud, &DescriptorConfig::default()),
            Err(FeatureError::UnnormalizedInput(_))
        ));
    }

    #[test]
    fn batch_rows_track_row_ids() {
        let clouds: Vec<LabeledPointCloud> = (0..4).map(|i| {
            let mut c = generated_cloud(9, i);
            c.source.object_index = 100 + i;
            c
        })
        .collect();
        let cfg = DescriptorConfig::default();
        let m = batch_features(&clouds, &cfg).unwrap();
        assert_eq!(m.rows(), 4);
        assert_eq!(m.row_ids(), &[100, 101, 102, 103]);
        let single = extract_descriptor(&clouds[2], &cfg).unwrap();
        assert_eq!(m.row(2), single.as_slice());

        // permuting the dataset permutes rows identically
        let mut rev: Vec<LabeledPointCloud> = clouds.clone();
        rev.reverse();
        let mrev = batch_features(&rev, &cfg).unwrap();
        assert_eq!(mrev.row_ids(), &[103, 102, 101, 100]);
        assert_eq!(mrev.row(1), m.row(2));
    }
}
