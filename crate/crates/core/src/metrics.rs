//! Point-cloud and feature-space metrics: Chamfer distances, the
//! multi-bandwidth Gaussian RBF kernel and the biased (diagonal-inclusive)
//! empirical MMD estimator.
//!
//! All reductions run in a fixed order (per-row sequential sums combined by
//! pairwise reduction), so results do not depend on thread count or block
//! partitioning.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

/// Fixed seed of the median-heuristic subsample.
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d_6d_64;
const MEDIAN_SUBSAMPLE_ROWS: usize = 1000;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptySet,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid kernel bandwidths: {0}")]
    InvalidBandwidth(String),
    #[error("feature matrix is malformed: {0}")]
    MalformedMatrix(String),
}

/// Dense row-per-sample feature matrix with opaque row identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    row_ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        row_ids: Vec<u64>,
    ) -> Result<FeatureMatrix, MetricsError> {
        if rows == 0 || cols == 0 {
            return Err(MetricsError::MalformedMatrix(format!(
                "{rows}x{cols} matrix must be at least 1x1"
            )));
        }
        if data.len() != rows * cols {
            return Err(MetricsError::MalformedMatrix(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if row_ids.len() != rows {
            return Err(MetricsError::MalformedMatrix(format!(
                "{} row ids for {rows} rows",
                row_ids.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(MetricsError::MalformedMatrix("non-finite entry".into()));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            row_ids,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, row_ids: Vec<u64>) -> Result<FeatureMatrix, MetricsError> {
        let m = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(MetricsError::DimensionMismatch {
                left: d,
                right: bad.len(),
            });
        }
        FeatureMatrix::new(m, d, rows.into_iter().flatten().collect(), row_ids)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Sub-matrix of the given row indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            ids.push(self.row_ids[i]);
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
            row_ids: ids,
        }
    }

    /// Sub-matrix of the rows whose ids appear in `ids`, preserving the
    /// matrix row order.
    pub fn select_by_ids(&self, ids: &std::collections::HashSet<u64>) -> FeatureMatrix {
        let indices: Vec<usize> = (0..self.rows)
            .filter(|i| ids.contains(&self.row_ids[*i]))
            .collect();
        self.select(&indices)
    }
}

/// Combination of Gaussian RBF kernels; the combined kernel is the
/// arithmetic mean of the per-bandwidth components.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelConfig {
    pub bandwidths: Vec<f64>,
}

impl KernelConfig {
    pub fn new(bandwidths: Vec<f64>) -> Result<KernelConfig, MetricsError> {
        if bandwidths.is_empty() {
            return Err(MetricsError::InvalidBandwidth("empty bandwidth list".into()));
        }
        if !bandwidths.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(MetricsError::InvalidBandwidth(format!("{bandwidths:?}")));
        }
        Ok(KernelConfig { bandwidths })
    }

    pub fn single(sigma: f64) -> Result<KernelConfig, MetricsError> {
        KernelConfig::new(vec![sigma])
    }

    /// Default bandwidth rule: the median pairwise distance over a seeded
    /// subsample of up to 1000 rows of `D ∪ T`, times {0.25, 0.5, 1, 2, 4}.
    /// Deterministic for identical inputs.
    pub fn median_heuristic(d: &FeatureMatrix, t: &FeatureMatrix) -> Result<KernelConfig, MetricsError> {
        if d.cols() != t.cols() {
            return Err(MetricsError::DimensionMismatch {
                left: d.cols(),
                right: t.cols(),
            });
        }
        let total = d.rows() + t.rows();
        let take = total.min(MEDIAN_SUBSAMPLE_ROWS);
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        let picked = rand::seq::index::sample(&mut rng, total, take);
        let row_of = |i: usize| -> &[f64] {
            if i < d.rows() {
                d.row(i)
            } else {
                t.row(i - d.rows())
            }
        };
        let mut dists = Vec::with_capacity(take * take.saturating_sub(1) / 2);
        let idx: Vec<usize> = picked.into_iter().collect();
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                dists.push(squared_distance(row_of(idx[a]), row_of(idx[b])).sqrt());
            }
        }
        dists.sort_by(f64::total_cmp);
        let median = if dists.is_empty() {
            0.0
        } else if dists.len() % 2 == 1 {
            dists[dists.len() / 2]
        } else {
            0.5 * (dists[dists.len() / 2 - 1] + dists[dists.len() / 2])
        };
        let sigma = if median > 1e-300 { median } else { 1.0 };
        KernelConfig::new([0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|f| f * sigma).collect())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn kernel_unchecked(a: &[f64], b: &[f64], cfg: &KernelConfig) -> f64 {
    let d2 = squared_distance(a, b);
    let mut acc = 0.0;
    for sigma in &cfg.bandwidths {
        acc += (-d2 / (2.0 * sigma * sigma)).exp();
    }
    acc / cfg.bandwidths.len() as f64
}

/// Mean-of-Gaussians kernel value in `(0, 1]`.
pub fn kernel(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(kernel_unchecked(a, b, cfg))
}

/// Deterministic pairwise (tree) reduction; independent of chunking.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Biased empirical squared MMD: all three double sums keep their diagonal
/// terms. Tiny negative rounding is clamped to zero.
pub fn mmd_squared(
    d: &FeatureMatrix,
    t: &FeatureMatrix,
    cfg: &KernelConfig,
) -> Result<f64, MetricsError> {
    if d.cols() != t.cols() {
        return Err(MetricsError::DimensionMismatch {
            left: d.cols(),
            right: t.cols(),
        });
    }
    let m = d.rows() as f64;
    let n = t.rows() as f64;
    let row_sums = |a: &FeatureMatrix, b: &FeatureMatrix| -> Vec<f64> {
        (0..a.rows())
            .into_par_iter()
            .map(|i| {
                let ra = a.row(i);
                let mut acc = 0.0;
                for j in 0..b.rows() {
                    acc += kernel_unchecked(ra, b.row(j), cfg);
                }
                acc
            })
            .collect()
    };
    let dd = pairwise_sum(&row_sums(d, d)) / (m * m);
    let tt = pairwise_sum(&row_sums(t, t)) / (n * n);
    let dt = pairwise_sum(&row_sums(d, t)) / (m * n);
    Ok((dd - 2.0 * dt + tt).max(0.0))
}

// --- Chamfer distances --------------------------------------------------

fn directed_sum_brute(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> f64 {
    let mins: Vec<f64> = x
        .par_iter()
        .map(|p| {
            y.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    pairwise_sum(&mins)
}

/// Sum-of-minima Chamfer distance, added over both directions. Brute force
/// `O(|X||Y|)`; the reference path for [`chamfer_accelerated`].
pub fn chamfer(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(directed_sum_brute(x, y) + directed_sum_brute(y, x))
}

/// Augmented Chamfer distance: the maximum of the two directed sums.
pub fn augmented_chamfer(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(directed_sum_brute(x, y).max(directed_sum_brute(y, x)))
}

/// Uniform-grid bucket index over a point set for exact nearest-neighbor
/// distance queries.
pub struct PointGrid {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Vector3<f64>>,
    key_lo: (i64, i64, i64),
    key_hi: (i64, i64, i64),
}

impl PointGrid {
    pub fn build(points: &[Vector3<f64>]) -> PointGrid {
        assert!(!points.is_empty(), "grid needs at least one point");
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let diag = (hi - lo).norm();
        let cell = if diag > 0.0 {
            diag / (points.len() as f64).cbrt().max(1.0)
        } else {
            1.0
        };
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let k = Self::key(p, cell);
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1), key_lo.2.min(k.2));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1), key_hi.2.max(k.2));
            buckets.entry(k).or_default().push(i as u32);
        }
        PointGrid {
            cell,
            buckets,
            points: points.to_vec(),
            key_lo,
            key_hi,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Exact distance from `q` to its nearest stored point: rings of cells
    /// are scanned outward until the best distance beats the lower bound of
    /// the next ring.
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        let (cx, cy, cz) = Self::key(q, self.cell);
        let mut best2 = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            if ring > 0 {
                let lower = (ring - 1) as f64 * self.cell;
                if best2.is_finite() && lower * lower > best2 {
                    break;
                }
            }
            for ix in cx - ring..=cx + ring {
                for iy in cy - ring..=cy + ring {
                    for iz in cz - ring..=cz + ring {
                        let cheb = (ix - cx).abs().max((iy - cy).abs()).max((iz - cz).abs());
                        if cheb != ring {
                            continue;
                        }
                        if let Some(bucket) = self.buckets.get(&(ix, iy, iz)) {
                            for &pi in bucket {
                                best2 = best2.min((q - self.points[pi as usize]).norm_squared());
                            }
                        }
                    }
                }
            }
            // Once the ring swallows every occupied bucket there is nothing
            // further out to scan.
            let covered = cx - ring <= self.key_lo.0
                && cx + ring >= self.key_hi.0
                && cy - ring <= self.key_lo.1
                && cy + ring >= self.key_hi.1
                && cz - ring <= self.key_lo.2
                && cz + ring >= self.key_hi.2;
            if covered {
                break;
            }
            ring += 1;
        }
        best2.sqrt()
    }
}

fn directed_sum_grid(x: &[Vector3<f64>], grid: &PointGrid) -> f64 {
    let mins: Vec<f64> = x.par_iter().map(|p| grid.nearest_distance(p)).collect();
    pairwise_sum(&mins)
}

/// Grid-accelerated Chamfer distance; agrees with [`chamfer`] to 1e-9.
pub fn chamfer_accelerated(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let gx = PointGrid::build(x);
    let gy = PointGrid::build(y);
    Ok(directed_sum_grid(x, &gy) + directed_sum_grid(y, &gx))
}

/// Grid-accelerated augmented Chamfer distance.
pub fn augmented_chamfer_accelerated(
    x: &[Vector3<f64>],
    y: &[Vector3<f64>],
) -> Result<f64, MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let gx = PointGrid::build(x);
    let gy = PointGrid::build(y);
    Ok(directed_sum_grid(x, &gy).max(directed_sum_grid(y, &gx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn chamfer_examples() {
        let a = vec![v(0.0, 0.0, 0.0)];
        let b = vec![v(1.0, 0.0, 0.0)];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!((chamfer(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let c = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)];
        assert!((chamfer(&c, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(chamfer(&[], &a), Err(MetricsError::EmptySet)));
    }

    #[test]
    fn augmented_chamfer_examples() {
        let a = vec![v(0.0, 0.0, 0.0)];
        let b = vec![v(1.0, 0.0, 0.0)];
        assert_eq!(augmented_chamfer(&a, &a).unwrap(), 0.0);
        assert!((augmented_chamfer(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)];
        assert!((augmented_chamfer(&c, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_examples() {
        let cfg = KernelConfig::single(1.0).unwrap();
        let a = [0.0, 0.0];
        let b = [1.0, 0.0];
        assert_eq!(kernel(&a, &a, &cfg).unwrap(), 1.0);
        assert!((kernel(&a, &b, &cfg).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((kernel(&a, &b, &cfg).unwrap() - 0.606531).abs() < 1e-6);
        assert!(matches!(
            kernel(&a, &[1.0], &cfg),
            Err(MetricsError::DimensionMismatch { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let multi = KernelConfig::new(vec![0.3, 1.0, 2.5]).unwrap();
        for _ in 0..1000 {
            let a: [f64; 4] = rng.random();
            let b: [f64; 4] = rng.random();
            assert_eq!(
                kernel(&a, &b, &multi).unwrap(),
                kernel(&b, &a, &multi).unwrap()
            );
        }
    }

    #[test]
    fn kernel_config_validation() {
        assert!(KernelConfig::new(vec![]).is_err());
        assert!(KernelConfig::new(vec![1.0, -2.0]).is_err());
        assert!(KernelConfig::new(vec![0.0]).is_err());
    }

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64, shift: f64) -> FeatureMatrix {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x + shift
            })
            .collect();
        FeatureMatrix::new(rows, cols, data, (0..rows as u64).collect()).unwrap()
    }

    #[test]
    fn mmd_identical_datasets_vanish() {
        let d = gaussian_matrix(40, 6, 1, 0.0);
        let cfg = KernelConfig::new(vec![0.5, 1.0, 2.0]).unwrap();
        assert!(mmd_squared(&d, &d, &cfg).unwrap() <= 1e-12);
    }

    #[test]
    fn mmd_singleton_hand_value() {
        // D = {a}, T = {b}, |a-b| = 1, sigma = 1:
        // 1 - 2 exp(-1/2) + 1.
        let d = FeatureMatrix::new(1, 1, vec![0.0], vec![0]).unwrap();
        let t = FeatureMatrix::new(1, 1, vec![1.0], vec![0]).unwrap();
        let cfg = KernelConfig::single(1.0).unwrap();
        let expect = 2.0 - 2.0 * (-0.5f64).exp();
        let got = mmd_squared(&d, &t, &cfg).unwrap();
        assert!((got - expect).abs() < 1e-9, "got {got}, want {expect}");
        assert!((got - 0.786939).abs() < 1e-6);
    }

    #[test]
    fn mmd_symmetric_and_nonnegative() {
        let cfg = KernelConfig::new(vec![0.7, 1.3]).unwrap();
        for seed in 0..50 {
            let d = gaussian_matrix(17, 5, seed, 0.0);
            let t = gaussian_matrix(11, 5, seed + 1000, 0.4);
            let ab = mmd_squared(&d, &t, &cfg).unwrap();
            let ba = mmd_squared(&t, &d, &cfg).unwrap();
            assert!(ab >= 0.0);
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn median_heuristic_is_deterministic() {
        let d = gaussian_matrix(300, 8, 7, 0.0);
        let t = gaussian_matrix(200, 8, 8, 1.0);
        let a = KernelConfig::median_heuristic(&d, &t).unwrap();
        let b = KernelConfig::median_heuristic(&d, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bandwidths.len(), 5);
        // multipliers preserved
        let base = a.bandwidths[2];
        assert!((a.bandwidths[0] - 0.25 * base).abs() < 1e-12);
        assert!((a.bandwidths[4] - 4.0 * base).abs() < 1e-12);
    }

    #[test]
    fn feature_matrix_validation() {
        assert!(FeatureMatrix::new(0, 3, vec![], vec![]).is_err());
        assert!(FeatureMatrix::new(1, 1, vec![f64::NAN], vec![0]).is_err());
        assert!(FeatureMatrix::new(2, 2, vec![0.0; 4], vec![0]).is_err());
        let m = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![10, 20]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        let sel = m.select(&[1]);
        assert_eq!(sel.row_ids(), &[20]);
        assert_eq!(sel.row(0), &[3.0, 4.0]);
    }

    proptest! {
        #[test]
        fn chamfer_bounds_hold(
            xs in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..40),
            ys in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..40),
        ) {
            let x: Vec<_> = xs.iter().map(|(a,b,c)| v(*a,*b,*c)).collect();
            let y: Vec<_> = ys.iter().map(|(a,b,c)| v(*a,*b,*c)).collect();
            let cd = chamfer(&x, &y).unwrap();
            let acd = augmented_chamfer(&x, &y).unwrap();
            let acd_rev = augmented_chamfer(&y, &x).unwrap();
            prop_assert_eq!(acd, acd_rev);
            prop_assert!(acd <= cd + 1e-12);
            prop_assert!(cd <= 2.0 * acd + 1e-12);
        }

        #[test]
        fn grid_accelerated_paths_agree(
            xs in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), 1..60),
            ys in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), 1..60),
        ) {
            let x: Vec<_> = xs.iter().map(|(a,b,c)| v(*a,*b,*c)).collect();
            let y: Vec<_> = ys.iter().map(|(a,b,c)| v(*a,*b,*c)).collect();
            let brute = chamfer(&x, &y).unwrap();
            let fast = chamfer_accelerated(&x, &y).unwrap();
            prop_assert!((brute - fast).abs() < 1e-9);
            let brute_acd = augmented_chamfer(&x, &y).unwrap();
            let fast_acd = augmented_chamfer_accelerated(&x, &y).unwrap();
            prop_assert!((brute_acd - fast_acd).abs() < 1e-9);
        }
    }
}
