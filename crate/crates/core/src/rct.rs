//! Randomized constructive trees: uniform binary tree shapes, uniform
//! primitive draws, Haar-uniform rotations, and anchor translations that pull
//! the two child solids of every boolean node into contact.
//!
//! All randomness for object `i` comes from one ChaCha stream seeded by a
//! SplitMix-style hash of `(master_seed, i)`, so any number of objects can be
//! generated concurrently and still come out bit-identical.

use crate::prim::{Membership, Pose, PrimitiveInstance, PrimitiveKind, ShapeParams};
use crate::sampler::SolidView;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejection cap for one interior-point draw.
const VOLUME_REJECTION_CAP: u32 = 100_000;
/// Strict-interior tolerance used by volume draws.
const VOLUME_TOL: f64 = 1e-9;
/// Full re-draws of an object before giving up on a non-empty solid.
const MAX_OBJECT_REDRAWS: u32 = 20;

/// Stream salt for the geometry (tree/leaf/anchor) randomness of an object.
pub const SEED_STREAM_GEOMETRY: u64 = 0x5243_5447_454F_4D31;
/// Stream salt for the surface-extraction randomness of an object.
pub const SEED_STREAM_CLOUD: u64 = 0x5243_5443_4C4F_5544;
/// Stream salt for validation probes.
pub const SEED_STREAM_VALIDATE: u64 = 0x5243_5456_414C_4944;

#[derive(Debug, Error)]
pub enum RctError {
    #[error("leaf count {0} outside the supported range")]
    LeafCountOutOfRange(u32),
    #[error("tree shape count overflows u64 for {0} leaves")]
    Overflow(u32),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("subtree evaluates to an empty solid ({0} consecutive rejections)")]
    EmptySolid(u32),
    #[error("object {object_index} still degenerate after {attempts} full re-draws")]
    DegenerateObject { object_index: u64, attempts: u32 },
    #[error(transparent)]
    Prim(#[from] crate::prim::PrimError),
}

/// Regularized boolean set operations. At an internal node the composed
/// solid is `right op (left + delta)`; for `Difference` the right child is
/// the minuend and the translated left child the subtrahend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolOp {
    Union,
    Intersection,
    Difference,
}

impl BoolOp {
    pub const ALL: [BoolOp; 3] = [BoolOp::Union, BoolOp::Intersection, BoolOp::Difference];

    pub fn name(self) -> &'static str {
        match self {
            BoolOp::Union => "union",
            BoolOp::Intersection => "intersection",
            BoolOp::Difference => "difference",
        }
    }
}

/// Everything the generator needs to know: leaf-count interval, allowed
/// primitive kinds, uniform scale range, allowed boolean operations and the
/// master seed all object streams derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctSpec {
    /// Inclusive `[min, max]` leaf-count interval.
    pub leaf_range: (u32, u32),
    pub kinds: Vec<PrimitiveKind>,
    /// Inclusive positive interval for the per-leaf uniform scale.
    pub scale_range: (f64, f64),
    pub ops: Vec<BoolOp>,
    pub master_seed: u64,
}

impl Default for RctSpec {
    fn default() -> Self {
        RctSpec {
            leaf_range: (1, 6),
            kinds: PrimitiveKind::ALL.to_vec(),
            scale_range: (0.5, 1.0),
            ops: vec![BoolOp::Union],
            master_seed: 0,
        }
    }
}

impl RctSpec {
    pub fn validate(&self) -> Result<(), RctError> {
        let fail = |msg: String| Err(RctError::InvalidSpec(msg));
        let (lo, hi) = self.leaf_range;
        if lo < 1 || lo > hi {
            return fail(format!("leaf range {lo}..{hi} must satisfy 1 <= min <= max"));
        }
        if hi > 255 {
            // Instance labels are stored as u8 in dataset records.
            return fail(format!("leaf range max {hi} exceeds the label limit of 255"));
        }
        if self.kinds.is_empty() {
            return fail("kind set must be nonempty".into());
        }
        for (i, k) in self.kinds.iter().enumerate() {
            if self.kinds[..i].contains(k) {
                return fail(format!("duplicate kind {k:?}"));
            }
        }
        if self.ops.is_empty() {
            return fail("operation set must be nonempty".into());
        }
        for (i, o) in self.ops.iter().enumerate() {
            if self.ops[..i].contains(o) {
                return fail(format!("duplicate operation {o:?}"));
            }
        }
        let (slo, shi) = self.scale_range;
        if !(slo > 0.0 && slo <= shi && shi.is_finite()) {
            return fail(format!("scale range ({slo}, {shi}) must be positive and ordered"));
        }
        Ok(())
    }
}

/// Identifies where an object came from; together with the generator spec it
/// fully determines the object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub object_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed of one per-object random stream.
pub fn derive_stream_seed(master_seed: u64, object_index: u64, stream_salt: u64) -> u64 {
    splitmix64(
        splitmix64(master_seed ^ stream_salt)
            .wrapping_add(object_index.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

/// A full binary tree stored as per-node child pairs; leaves have no
/// children and every internal node has exactly two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    children: Vec<Option<(u32, u32)>>,
    parent: Vec<Option<u32>>,
    root: u32,
}

impl TreeShape {
    pub fn single_leaf() -> TreeShape {
        TreeShape {
            children: vec![None],
            parent: vec![None],
            root: 0,
        }
    }

    /// Rebuilds a shape from child pairs, validating full-binary structure.
    pub fn from_children(children: Vec<Option<(u32, u32)>>, root: u32) -> Result<TreeShape, RctError> {
        let n = children.len();
        let fail = |msg: String| Err(RctError::InvalidSpec(msg));
        if n == 0 || n % 2 == 0 {
            return fail(format!("node count {n} is not of the form 2l-1"));
        }
        if root as usize >= n {
            return fail(format!("root {root} out of bounds"));
        }
        let mut parent: Vec<Option<u32>> = vec![None; n];
        for (id, ch) in children.iter().enumerate() {
            if let Some((a, b)) = ch {
                for c in [a, b] {
                    if *c as usize >= n {
                        return fail(format!("child {c} out of bounds"));
                    }
                    if parent[*c as usize].is_some() {
                        return fail(format!("node {c} has two parents"));
                    }
                    parent[*c as usize] = Some(id as u32);
                }
            }
        }
        for (id, p) in parent.iter().enumerate() {
            if p.is_none() && id as u32 != root {
                return fail(format!("node {id} is unreachable"));
            }
        }
        if parent[root as usize].is_some() {
            return fail("root has a parent".into());
        }
        let shape = TreeShape {
            children,
            parent,
            root,
        };
        if shape.leaves_in_order().len() != (n + 1) / 2 {
            return fail("tree is not a full binary tree".into());
        }
        Ok(shape)
    }

    pub fn node_count(&self) -> usize {
        self.children.len()
    }

    pub fn leaf_count(&self) -> usize {
        (self.children.len() + 1) / 2
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn children(&self, node: u32) -> Option<(u32, u32)> {
        self.children[node as usize]
    }

    pub fn parent(&self, node: u32) -> Option<u32> {
        self.parent[node as usize]
    }

    pub fn is_leaf(&self, node: u32) -> bool {
        self.children[node as usize].is_none()
    }

    /// Leaf node ids left to right; position in this order is the leaf
    /// (instance-label) index.
    pub fn leaves_in_order(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.leaf_count());
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            match self.children(node) {
                None => out.push(node),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// Internal node ids in post order (children before parents); this is
    /// the bottom-up execution order and the storage order of per-node data.
    pub fn internal_postorder(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.node_count() - self.leaf_count());
        self.postorder_visit(self.root, &mut out);
        out
    }

    fn postorder_visit(&self, node: u32, out: &mut Vec<u32>) {
        if let Some((l, r)) = self.children(node) {
            self.postorder_visit(l, out);
            self.postorder_visit(r, out);
            out.push(node);
        }
    }

    /// All node ids in the subtree rooted at `node`.
    pub fn subtree_nodes(&self, node: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            out.push(n);
            if let Some((l, r)) = self.children(n) {
                stack.push(l);
                stack.push(r);
            }
        }
        out
    }

    /// Canonical encoding of the plane tree shape, used to compare shapes.
    pub fn structure_key(&self) -> String {
        fn rec(shape: &TreeShape, node: u32, out: &mut String) {
            match shape.children(node) {
                None => out.push('L'),
                Some((l, r)) => {
                    out.push('(');
                    rec(shape, l, out);
                    rec(shape, r, out);
                    out.push(')');
                }
            }
        }
        let mut s = String::new();
        rec(self, self.root, &mut s);
        s
    }

    /// Per-node child pairs, indexed by node id.
    pub fn child_pairs(&self) -> &[Option<(u32, u32)>] {
        &self.children
    }
}

/// Number of plane binary tree shapes with `l` leaves: Catalan(l-1),
/// computed exactly. Serves as the uniformity oracle for the tree sampler.
pub fn count_tree_shapes(l: u32) -> Result<u64, RctError> {
    if l < 1 {
        return Err(RctError::LeafCountOutOfRange(l));
    }
    if l > 30 {
        return Err(RctError::Overflow(l));
    }
    let mut c: u128 = 1;
    for k in 0..u128::from(l) - 1 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    Ok(c as u64)
}

/// Uniform plane binary tree with `l` leaves by Rémy insertion: splice a new
/// internal node above a uniformly chosen existing node and hang a new leaf
/// on a uniformly chosen side, `l - 1` times. O(l).
pub fn sample_tree_shape<R: Rng + ?Sized>(l: u32, rng: &mut R) -> TreeShape {
    assert!(l >= 1, "leaf count must be at least 1");
    let mut shape = TreeShape::single_leaf();
    for _ in 1..l {
        let n = shape.children.len() as u32;
        let target = rng.random_range(0..n);
        let new_leaf_on_left = rng.random_range(0..2u8) == 0;
        let internal = n;
        let leaf = n + 1;
        shape.children.push(None);
        shape.parent.push(None);
        shape.children.push(None);
        shape.parent.push(None);
        match shape.parent[target as usize] {
            Some(p) => {
                let (a, b) = shape.children[p as usize].unwrap();
                shape.children[p as usize] = Some(if a == target {
                    (internal, b)
                } else {
                    (a, internal)
                });
                shape.parent[internal as usize] = Some(p);
            }
            None => shape.root = internal,
        }
        shape.children[internal as usize] = Some(if new_leaf_on_left {
            (leaf, target)
        } else {
            (target, leaf)
        });
        shape.parent[target as usize] = Some(internal);
        shape.parent[leaf as usize] = Some(internal);
    }
    shape
}

/// Haar-uniform rotation from a normalized 4-dimensional Gaussian.
pub fn sample_rotation_uniform<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    loop {
        let w: f64 = StandardNormal.sample(rng);
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let q = Quaternion::new(w, x, y, z);
        if q.norm() > 1e-12 {
            return UnitQuaternion::from_quaternion(q);
        }
    }
}

/// A realized constructive tree. Leaf poses carry the accumulated anchor
/// translations, so the composed solid is evaluated directly against the
/// stored leaves; the tree is never meshed.
#[derive(Debug, Clone, PartialEq)]
pub struct RctSample {
    pub shape: TreeShape,
    /// Per leaf index (left-to-right order).
    pub leaves: Vec<PrimitiveInstance>,
    /// Per internal node, in post order.
    pub internal_ops: Vec<BoolOp>,
    /// The translation `delta = p_r - p_l` applied to the left child of each
    /// internal node, in post order.
    pub anchor_offsets: Vec<Vector3<f64>>,
    /// The recorded right-child anchor point of each internal node, kept in
    /// final world coordinates (ancestor translations folded in).
    pub anchor_points: Vec<Vector3<f64>>,
    pub provenance: Provenance,
}

impl RctSample {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Positions of internal node ids within the post-order storage.
    pub fn internal_positions(&self) -> Vec<(u32, usize)> {
        self.shape
            .internal_postorder()
            .into_iter()
            .enumerate()
            .map(|(pos, node)| (node, pos))
            .collect()
    }

    /// Structural and per-leaf validity (used when loading from disk).
    pub fn validate(&self) -> Result<(), RctError> {
        let l = self.shape.leaf_count();
        if self.leaves.len() != l {
            return Err(RctError::InvalidSpec(format!(
                "{} leaves for a shape with {l} leaf slots",
                self.leaves.len()
            )));
        }
        let internal = self.shape.node_count() - l;
        if self.internal_ops.len() != internal
            || self.anchor_offsets.len() != internal
            || self.anchor_points.len() != internal
        {
            return Err(RctError::InvalidSpec(
                "per-internal-node arrays disagree with the tree shape".into(),
            ));
        }
        for leaf in &self.leaves {
            leaf.validate()?;
        }
        Ok(())
    }

    /// An enclosing sphere radius around the origin, from the leaf bounding
    /// spheres.
    pub fn enclosing_radius(&self) -> f64 {
        self.leaves
            .iter()
            .map(|leaf| {
                let (c, r) = leaf.bounding_sphere();
                c.norm() + r
            })
            .fold(0.0, f64::max)
    }
}

/// Validity report for the closure property: a sampled tree must evaluate to
/// a non-empty bounded solid.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub non_empty: bool,
    pub bounded: bool,
    pub leaf_count: usize,
    /// Counts of union / intersection / difference internal nodes.
    pub op_histogram: [u64; 3],
}

/// Draws a point uniformly over the volume of the solid rooted at `node`,
/// by rejection inside the axis-aligned box around the subtree's leaf
/// bounding spheres. The returned point classifies strictly `In`.
pub fn sample_volume_point<R: Rng + ?Sized>(
    sample: &RctSample,
    node: u32,
    rng: &mut R,
) -> Result<Vector3<f64>, RctError> {
    let view = SolidView::from_sample(sample);
    volume_point_in_view(&view, &sample.shape, &sample.leaves, node, rng)
}

pub(crate) fn volume_point_in_view<R: Rng + ?Sized>(
    view: &SolidView<'_>,
    shape: &TreeShape,
    leaves: &[PrimitiveInstance],
    node: u32,
    rng: &mut R,
) -> Result<Vector3<f64>, RctError> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for n in shape.subtree_nodes(node) {
        if shape.is_leaf(n) {
            let leaf_idx = view.leaf_of_node(n).expect("leaf index");
            let (c, r) = leaves[leaf_idx as usize].bounding_sphere();
            for axis in 0..3 {
                lo[axis] = lo[axis].min(c[axis] - r);
                hi[axis] = hi[axis].max(c[axis] + r);
            }
        }
    }
    for _ in 0..VOLUME_REJECTION_CAP {
        let p = Vector3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        if view.membership(node, p, VOLUME_TOL) == Membership::In {
            return Ok(p);
        }
    }
    Err(RctError::EmptySolid(VOLUME_REJECTION_CAP))
}

/// Samples one constructive tree. Pure function of `(spec, object_index)`:
/// leaf count, tree shape, per-leaf kind/parameters/rotation/scale and
/// per-node operation and anchor points all come from the object's derived
/// stream in a fixed order. Objects whose composed solid comes out empty
/// (possible with intersection or difference) are fully re-drawn, up to a
/// bounded number of attempts.
pub fn sample_rct(spec: &RctSpec, object_index: u64) -> Result<RctSample, RctError> {
    spec.validate()?;
    let seed = derive_stream_seed(spec.master_seed, object_index, SEED_STREAM_GEOMETRY);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let may_be_empty = spec.ops.iter().any(|op| *op != BoolOp::Union);

    'attempt: for _ in 0..MAX_OBJECT_REDRAWS {
        let l = rng.random_range(spec.leaf_range.0..=spec.leaf_range.1);
        let shape = sample_tree_shape(l, &mut rng);
        let leaf_nodes = shape.leaves_in_order();

        let mut leaves = Vec::with_capacity(l as usize);
        for _ in 0..l {
            let kind = spec.kinds[rng.random_range(0..spec.kinds.len())];
            let params = ShapeParams::sample(kind, &mut rng);
            let rotation = sample_rotation_uniform(&mut rng);
            let scale = rng.random_range(spec.scale_range.0..=spec.scale_range.1);
            leaves.push(PrimitiveInstance::new(
                params,
                Pose::new(rotation, Vector3::zeros(), scale),
            ));
        }

        let internal = shape.internal_postorder();
        let mut node_ops: Vec<Option<BoolOp>> = vec![None; shape.node_count()];
        let mut pos_of_node = vec![usize::MAX; shape.node_count()];
        let mut internal_ops = Vec::with_capacity(internal.len());
        let mut anchor_offsets = Vec::with_capacity(internal.len());
        let mut anchor_points = Vec::with_capacity(internal.len());
        let leaf_idx_of_node: Vec<Option<u32>> = {
            let mut v = vec![None; shape.node_count()];
            for (idx, node) in leaf_nodes.iter().enumerate() {
                v[*node as usize] = Some(idx as u32);
            }
            v
        };

        for (pos, &node) in internal.iter().enumerate() {
            let (lchild, rchild) = shape.children(node).expect("internal node");
            let op = spec.ops[rng.random_range(0..spec.ops.len())];

            let view = SolidView::partial(&shape, &leaves, &node_ops, &leaf_idx_of_node);
            let p_l = match volume_point_in_view(&view, &shape, &leaves, lchild, &mut rng) {
                Ok(p) => p,
                Err(RctError::EmptySolid(_)) => continue 'attempt,
                Err(e) => return Err(e),
            };
            let p_r = match volume_point_in_view(&view, &shape, &leaves, rchild, &mut rng) {
                Ok(p) => p,
                Err(RctError::EmptySolid(_)) => continue 'attempt,
                Err(e) => return Err(e),
            };
            let delta = p_r - p_l;

            // Fold the translation into every leaf under the left child and
            // into the already-recorded anchor points below it.
            for sub in shape.subtree_nodes(lchild) {
                if let Some(idx) = leaf_idx_of_node[sub as usize] {
                    leaves[idx as usize].pose.translation += delta;
                } else if pos_of_node[sub as usize] != usize::MAX {
                    anchor_points[pos_of_node[sub as usize]] += delta;
                }
            }

            node_ops[node as usize] = Some(op);
            pos_of_node[node as usize] = pos;
            internal_ops.push(op);
            anchor_offsets.push(delta);
            anchor_points.push(p_r);
        }

        let sample = RctSample {
            shape,
            leaves,
            internal_ops,
            anchor_offsets,
            anchor_points,
            provenance: Provenance {
                master_seed: spec.master_seed,
                object_index,
            },
        };

        if may_be_empty {
            let root = sample.shape.root();
            let view = SolidView::from_sample(&sample);
            if volume_point_in_view(&view, &sample.shape, &sample.leaves, root, &mut rng).is_err() {
                continue 'attempt;
            }
        }
        return Ok(sample);
    }

    Err(RctError::DegenerateObject {
        object_index,
        attempts: MAX_OBJECT_REDRAWS,
    })
}

/// Executable surrogate of the closure property: the composed solid must be
/// non-empty (one successful interior draw from a seed derived off the
/// object's provenance) and bounded (finite enclosing radius).
pub fn validate_rct(sample: &RctSample) -> ValidityReport {
    let seed = derive_stream_seed(
        sample.provenance.master_seed,
        sample.provenance.object_index,
        SEED_STREAM_VALIDATE,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let non_empty = sample_volume_point(sample, sample.shape.root(), &mut rng).is_ok();
    let bounded = sample.enclosing_radius().is_finite();
    let mut op_histogram = [0u64; 3];
    for op in &sample.internal_ops {
        op_histogram[*op as usize] += 1;
    }
    ValidityReport {
        non_empty,
        bounded,
        leaf_count: sample.leaf_count(),
        op_histogram,
    }
}

/// Hand-built two-leaf sample for boolean-semantics tests: node 0 is the
/// root, node 1 the left child, node 2 the right child.
#[cfg(test)]
pub(crate) fn two_leaf_sample(
    left: PrimitiveInstance,
    right: PrimitiveInstance,
    op: BoolOp,
) -> RctSample {
    let shape = TreeShape::from_children(vec![Some((1, 2)), None, None], 0).unwrap();
    RctSample {
        shape,
        leaves: vec![left, right],
        internal_ops: vec![op],
        anchor_offsets: vec![Vector3::zeros()],
        anchor_points: vec![Vector3::zeros()],
        provenance: Provenance {
            master_seed: 0,
            object_index: 0,
        },
    }
}

// --- serialization -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// Unit quaternion as [w, x, y, z].
    rotation: [f64; 4],
    translation: [f64; 3],
    scale: f64,
}

impl From<&Pose> for PoseRepr {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [p.translation.x, p.translation.y, p.translation.z],
            scale: p.scale,
        }
    }
}

impl PoseRepr {
    fn into_pose(self) -> Pose {
        let [w, x, y, z] = self.rotation;
        // Stored quaternions are already unit; renormalizing would perturb
        // the bits and break exact roundtrips. Validity is re-checked by
        // Pose::validate on load.
        Pose::new(
            UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z)),
            Vector3::new(self.translation[0], self.translation[1], self.translation[2]),
            self.scale,
        )
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum NodeRepr {
    Leaf {
        params: ShapeParams,
        pose: PoseRepr,
    },
    Op {
        op: BoolOp,
        left: u32,
        right: u32,
        delta: [f64; 3],
        anchor: [f64; 3],
    },
}

/// On-disk form of an [`RctSample`]: a flat node array indexed by node id.
#[derive(Serialize, Deserialize)]
struct RctSampleRepr {
    master_seed: u64,
    object_index: u64,
    root: u32,
    nodes: Vec<NodeRepr>,
}

impl Serialize for RctSample {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let leaf_nodes = self.shape.leaves_in_order();
        let mut leaf_idx = vec![u32::MAX; self.shape.node_count()];
        for (idx, node) in leaf_nodes.iter().enumerate() {
            leaf_idx[*node as usize] = idx as u32;
        }
        let mut pos = vec![usize::MAX; self.shape.node_count()];
        for (p, node) in self.shape.internal_postorder().into_iter().enumerate() {
            pos[node as usize] = p;
        }
        let nodes = (0..self.shape.node_count() as u32)
            .map(|node| match self.shape.children(node) {
                None => {
                    let leaf = &self.leaves[leaf_idx[node as usize] as usize];
                    NodeRepr::Leaf {
                        params: leaf.params,
                        pose: (&leaf.pose).into(),
                    }
                }
                Some((left, right)) => {
                    let p = pos[node as usize];
                    let d = self.anchor_offsets[p];
                    let a = self.anchor_points[p];
                    NodeRepr::Op {
                        op: self.internal_ops[p],
                        left,
                        right,
                        delta: [d.x, d.y, d.z],
                        anchor: [a.x, a.y, a.z],
                    }
                }
            })
            .collect();
        RctSampleRepr {
            master_seed: self.provenance.master_seed,
            object_index: self.provenance.object_index,
            root: self.shape.root(),
            nodes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RctSample {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = RctSampleRepr::deserialize(deserializer)?;
        let children = repr
            .nodes
            .iter()
            .map(|n| match n {
                NodeRepr::Leaf { .. } => None,
                NodeRepr::Op { left, right, .. } => Some((*left, *right)),
            })
            .collect();
        let shape = TreeShape::from_children(children, repr.root).map_err(D::Error::custom)?;
        let mut leaves = Vec::with_capacity(shape.leaf_count());
        for node in shape.leaves_in_order() {
            match &repr.nodes[node as usize] {
                NodeRepr::Leaf { params, pose } => {
                    leaves.push(PrimitiveInstance::new(
                        *params,
                        PoseRepr {
                            rotation: pose.rotation,
                            translation: pose.translation,
                            scale: pose.scale,
                        }
                        .into_pose(),
                    ));
                }
                NodeRepr::Op { .. } => unreachable!("leaf slot holds an op node"),
            }
        }
        let mut internal_ops = Vec::new();
        let mut anchor_offsets = Vec::new();
        let mut anchor_points = Vec::new();
        for node in shape.internal_postorder() {
            match &repr.nodes[node as usize] {
                NodeRepr::Op { op, delta, anchor, .. } => {
                    internal_ops.push(*op);
                    anchor_offsets.push(Vector3::new(delta[0], delta[1], delta[2]));
                    anchor_points.push(Vector3::new(anchor[0], anchor[1], anchor[2]));
                }
                NodeRepr::Leaf { .. } => unreachable!("op slot holds a leaf node"),
            }
        }
        let sample = RctSample {
            shape,
            leaves,
            internal_ops,
            anchor_offsets,
            anchor_points,
            provenance: Provenance {
                master_seed: repr.master_seed,
                object_index: repr.object_index,
            },
        };
        sample.validate().map_err(D::Error::custom)?;
        Ok(sample)
    }
}
