//! Regularized-boolean membership over whole constructive trees and
//! extraction of labeled boundary point clouds.
//!
//! Membership is evaluated point-wise: leaf classifications are combined
//! bottom-up with three-valued in/on/out tables, so the composed solid never
//! has to be meshed. A surface candidate drawn on leaf `i` belongs to the
//! composed boundary iff the tree still evaluates to `On` when leaf `i`'s own
//! test is pinned to `On`.

use crate::prim::{sample_canonical_surface, Membership, PrimitiveInstance};
use crate::rct::{BoolOp, Provenance, RctSample, TreeShape};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("retained only {retained} of {needed} points after {candidates} candidates")]
    SamplingExhausted {
        retained: usize,
        needed: usize,
        candidates: usize,
    },
    #[error("cloud is degenerate (spread {0:.3e})")]
    DegenerateCloud(f64),
    #[error("cloud has no points")]
    EmptyCloud,
    #[error(transparent)]
    Prim(#[from] crate::prim::PrimError),
}

/// Extraction parameters for one labeled cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Exact number of retained points.
    pub n_points: usize,
    /// World-space boundary tolerance for retention tests.
    pub tol: f64,
    /// Center at the centroid and scale so the max point norm is 1.
    pub normalize: bool,
    /// Candidate budget as a multiple of `n_points`.
    pub max_attempts_factor: usize,
    /// Emit per-point outward normals.
    pub with_normals: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_points: 1024,
            tol: 1e-7,
            normalize: true,
            max_attempts_factor: 64,
            with_normals: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n_points == 0 || self.max_attempts_factor == 0 || !(self.tol >= 0.0) {
            return Err(SamplerError::EmptyCloud);
        }
        Ok(())
    }
}

/// N boundary points with per-point semantic (primitive kind) and instance
/// (leaf index) labels, plus optional outward unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub semantic: Vec<u8>,
    pub instance: Vec<u8>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub source: Provenance,
}

impl LabeledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Combines two child memberships under a regularized boolean operation.
/// For `Difference` the right child is the minuend: the node solid is
/// `right - left`, matching the construction order of anchor translations.
pub fn combine_membership(op: BoolOp, left: Membership, right: Membership) -> Membership {
    use Membership::{In, On, Out};
    match op {
        BoolOp::Union => match (left, right) {
            (In, _) | (_, In) => In,
            (Out, Out) => Out,
            _ => On,
        },
        BoolOp::Intersection => match (left, right) {
            (In, In) => In,
            (Out, _) | (_, Out) => Out,
            _ => On,
        },
        BoolOp::Difference => match (right, left) {
            (In, Out) => In,
            (Out, _) | (_, In) => Out,
            _ => On,
        },
    }
}

/// Resolved per-node evaluation view over a (possibly partially built)
/// constructive tree.
pub(crate) struct SolidView<'a> {
    shape: &'a TreeShape,
    leaves: &'a [PrimitiveInstance],
    node_ops: Vec<Option<BoolOp>>,
    leaf_of_node: Vec<Option<u32>>,
}

impl<'a> SolidView<'a> {
    pub(crate) fn from_sample(sample: &'a RctSample) -> SolidView<'a> {
        let mut node_ops = vec![None; sample.shape.node_count()];
        for (pos, node) in sample.shape.internal_postorder().into_iter().enumerate() {
            node_ops[node as usize] = Some(sample.internal_ops[pos]);
        }
        let mut leaf_of_node = vec![None; sample.shape.node_count()];
        for (idx, node) in sample.shape.leaves_in_order().into_iter().enumerate() {
            leaf_of_node[node as usize] = Some(idx as u32);
        }
        SolidView {
            shape: &sample.shape,
            leaves: &sample.leaves,
            node_ops,
            leaf_of_node,
        }
    }

    pub(crate) fn partial(
        shape: &'a TreeShape,
        leaves: &'a [PrimitiveInstance],
        node_ops: &[Option<BoolOp>],
        leaf_of_node: &[Option<u32>],
    ) -> SolidView<'a> {
        SolidView {
            shape,
            leaves,
            node_ops: node_ops.to_vec(),
            leaf_of_node: leaf_of_node.to_vec(),
        }
    }

    pub(crate) fn leaf_of_node(&self, node: u32) -> Option<u32> {
        self.leaf_of_node[node as usize]
    }

    pub(crate) fn membership(&self, node: u32, p: Vector3<f64>, tol: f64) -> Membership {
        self.membership_forced(node, p, tol, None)
    }

    pub(crate) fn membership_forced(
        &self,
        node: u32,
        p: Vector3<f64>,
        tol: f64,
        forced_on_leaf: Option<u32>,
    ) -> Membership {
        match self.shape.children(node) {
            None => {
                let leaf = self.leaf_of_node[node as usize].expect("leaf index");
                if forced_on_leaf == Some(leaf) {
                    Membership::On
                } else {
                    self.leaves[leaf as usize].classify(p, tol)
                }
            }
            Some((l, r)) => {
                let op = self.node_ops[node as usize].expect("operation set for subtree");
                combine_membership(
                    op,
                    self.membership_forced(l, p, tol, forced_on_leaf),
                    self.membership_forced(r, p, tol, forced_on_leaf),
                )
            }
        }
    }
}

/// Three-valued membership of a world point in the composed solid.
pub fn classify_membership(sample: &RctSample, p: Vector3<f64>, tol: f64) -> Membership {
    classify_membership_at(sample, sample.shape.root(), p, tol)
}

/// Same, but against the solid rooted at an arbitrary tree node.
pub fn classify_membership_at(sample: &RctSample, node: u32, p: Vector3<f64>, tol: f64) -> Membership {
    SolidView::from_sample(sample).membership(node, p, tol)
}

/// True for each leaf that sits on the subtrahend side of an odd number of
/// difference nodes; such leaves contribute boundary points with flipped
/// normals.
pub fn subtrahend_parity(sample: &RctSample) -> Vec<bool> {
    let shape = &sample.shape;
    let mut op_of_node = vec![None; shape.node_count()];
    for (pos, node) in shape.internal_postorder().into_iter().enumerate() {
        op_of_node[node as usize] = Some(sample.internal_ops[pos]);
    }
    shape
        .leaves_in_order()
        .into_iter()
        .map(|leaf_node| {
            let mut flip = false;
            let mut child = leaf_node;
            while let Some(parent) = shape.parent(child) {
                let (left, _) = shape.children(parent).expect("internal");
                if op_of_node[parent as usize] == Some(BoolOp::Difference) && left == child {
                    flip = !flip;
                }
                child = parent;
            }
            flip
        })
        .collect()
}

/// Centers a cloud at its centroid and scales it so the maximum point norm
/// is exactly 1; returns the transform for invertibility.
pub fn normalize_cloud(
    points: &[Vector3<f64>],
) -> Result<(Vec<Vector3<f64>>, Vector3<f64>, f64), SamplerError> {
    if points.is_empty() {
        return Err(SamplerError::EmptyCloud);
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let scale = points
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(0.0, f64::max);
    if scale < 1e-12 {
        return Err(SamplerError::DegenerateCloud(scale));
    }
    let normalized = points.iter().map(|p| (p - centroid) / scale).collect();
    Ok((normalized, centroid, scale))
}

/// Extracts exactly `cfg.n_points` labeled boundary points.
///
/// Candidates are drawn per leaf with probability proportional to total leaf
/// boundary area; after a first wave the per-leaf allocation is re-weighted
/// by the observed acceptance rate, correcting for hidden area. A candidate
/// survives iff the composed tree evaluates to `On` with its own leaf pinned
/// to `On`.
pub fn sample_labeled_cloud<R: Rng + ?Sized>(
    sample: &RctSample,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<LabeledPointCloud, SamplerError> {
    cfg.validate()?;
    let leaf_count = sample.leaf_count();
    let view = SolidView::from_sample(sample);
    let root = sample.shape.root();
    let flip = subtrahend_parity(sample);
    let areas: Vec<f64> = sample
        .leaves
        .iter()
        .map(PrimitiveInstance::world_surface_area)
        .collect();

    let budget = cfg.max_attempts_factor * cfg.n_points;
    let mut weights = areas.clone();
    let mut allocated = vec![0u64; leaf_count];
    let mut accepted = vec![0u64; leaf_count];

    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(cfg.n_points);
    let mut semantic = Vec::with_capacity(cfg.n_points);
    let mut instance = Vec::with_capacity(cfg.n_points);
    let mut normals = cfg.with_normals.then(|| Vec::with_capacity(cfg.n_points));
    let mut drawn = 0usize;
    let mut first_wave = true;

    while points.len() < cfg.n_points {
        if drawn >= budget {
            return Err(SamplerError::SamplingExhausted {
                retained: points.len(),
                needed: cfg.n_points,
                candidates: drawn,
            });
        }
        let need = cfg.n_points - points.len();
        let wave = if first_wave {
            (2 * cfg.n_points).min(budget - drawn)
        } else {
            let acceptance = (points.len() as f64 / drawn as f64).max(0.02);
            (((need as f64 / acceptance) * 1.2).ceil() as usize).clamp(need, budget - drawn)
        };

        for _ in 0..wave {
            if points.len() == cfg.n_points {
                break;
            }
            let leaf = crate::prim::pick_weighted(&weights, rng);
            allocated[leaf] += 1;
            drawn += 1;
            let leaf_inst = &sample.leaves[leaf];
            let surf = sample_canonical_surface(&leaf_inst.params, rng)?;
            let world = leaf_inst.pose.apply(surf.point);
            if view.membership_forced(root, world, cfg.tol, Some(leaf as u32)) == Membership::On {
                accepted[leaf] += 1;
                points.push(world);
                semantic.push(leaf_inst.kind().label());
                instance.push(leaf as u8);
                if let Some(ns) = normals.as_mut() {
                    let mut n = leaf_inst.pose.rotate_dir(surf.normal);
                    if flip[leaf] {
                        n = -n;
                    }
                    ns.push(n);
                }
            }
        }

        if first_wave {
            first_wave = false;
            let mut any = false;
            for i in 0..leaf_count {
                let rate = if allocated[i] > 0 {
                    accepted[i] as f64 / allocated[i] as f64
                } else {
                    1.0
                };
                weights[i] = areas[i] * rate;
                any |= weights[i] > 0.0;
            }
            if !any {
                weights.copy_from_slice(&areas);
            }
        }
    }

    let points = if cfg.normalize {
        normalize_cloud(&points)?.0
    } else {
        points
    };

    Ok(LabeledPointCloud {
        points,
        semantic,
        instance,
        normals,
        source: sample.provenance,
    })
}
