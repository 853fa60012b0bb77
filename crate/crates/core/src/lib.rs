//! Procedural generation of part-annotated 3D point clouds from randomly
//! assembled solid primitives, and MMD-based dataset distillation that
//! prunes a generated set toward a target dataset.
//!
//! The pipeline, end to end:
//!
//! 1. [`rct`] samples a random constructive tree: a uniform binary tree
//!    whose leaves are posed primitives ([`prim`]) and whose internal nodes
//!    are regularized boolean operations, with anchor translations keeping
//!    every operation non-degenerate.
//! 2. [`sampler`] classifies points against the composed solid and extracts
//!    exactly-N labeled boundary clouds (per-point primitive kind and
//!    instance labels, optional normals).
//! 3. [`features`] turns normalized clouds into deterministic descriptor
//!    vectors; [`metrics`] supplies Chamfer distances, the RBF kernel and
//!    the empirical MMD between feature matrices.
//! 4. [`distill`] ranks samples by data adaptivity (exact oracle and the
//!    fast proxy) and prunes the generated set across epochs.
//! 5. [`io`] and [`pipeline`] persist datasets, manifests, feature files
//!    and PLY exports, with seed-deterministic parallel batch generation.

pub mod distill;
pub mod features;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod prim;
pub mod rct;
pub mod sampler;
pub mod stats;

pub use distill::{AdaptivityScores, DistillConfig, DistillReport, ScoreKind};
pub use features::DescriptorConfig;
pub use io::Manifest;
pub use metrics::{FeatureMatrix, KernelConfig};
pub use prim::{Membership, Pose, PrimitiveInstance, PrimitiveKind, ShapeParams};
pub use rct::{BoolOp, Provenance, RctSample, RctSpec, TreeShape};
pub use sampler::{LabeledPointCloud, SamplerConfig};
