//! Analytic solid primitives: canonical parameterizations, exact point
//! classification, closed-form surface areas and area-uniform boundary
//! sampling.
//!
//! Every canonical primitive is centered at the origin and contained in the
//! closed unit ball; world-space instances are produced by a rigid-similarity
//! pose `p -> scale * (rotation * p) + translation`.

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Iteration cap for the bounded-expectation rejection loops.
const REJECTION_CAP: u32 = 10_000;

#[derive(Debug, Error)]
pub enum PrimError {
    #[error("invalid shape parameters: {0}")]
    InvalidParams(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("surface rejection sampling exceeded {0} iterations")]
    InternalSamplingFailure(u32),
}

/// The five primitive types. This enumeration is also the semantic label
/// space of generated point clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [
        PrimitiveKind::Sphere,
        PrimitiveKind::Box,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Cone,
        PrimitiveKind::Torus,
    ];

    /// Stable small-integer label used in dataset files.
    pub fn label(self) -> u8 {
        match self {
            PrimitiveKind::Sphere => 0,
            PrimitiveKind::Box => 1,
            PrimitiveKind::Cylinder => 2,
            PrimitiveKind::Cone => 3,
            PrimitiveKind::Torus => 4,
        }
    }

    pub fn from_label(label: u8) -> Option<PrimitiveKind> {
        PrimitiveKind::ALL.get(label as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Box => "box",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Cone => "cone",
            PrimitiveKind::Torus => "torus",
        }
    }
}

/// Kind-specific canonical shape parameters, all in unit-ball units.
///
/// Conventions: cylinder axis is z with caps at `±half_height`; the cone has
/// its apex at `+half_height` on the z axis and its base disk at
/// `-half_height`; the torus ring lies in the xy plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeParams {
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    Cone {
        radius: f64,
        half_height: f64,
    },
    Torus {
        major_radius: f64,
        minor_radius: f64,
    },
}

impl ShapeParams {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            ShapeParams::Sphere { .. } => PrimitiveKind::Sphere,
            ShapeParams::Box { .. } => PrimitiveKind::Box,
            ShapeParams::Cylinder { .. } => PrimitiveKind::Cylinder,
            ShapeParams::Cone { .. } => PrimitiveKind::Cone,
            ShapeParams::Torus { .. } => PrimitiveKind::Torus,
        }
    }

    /// Checks positivity, unit-ball containment and (for the torus) the
    /// ring condition `minor < major`.
    pub fn validate(&self) -> Result<(), PrimError> {
        let fail = |msg: String| Err(PrimError::InvalidParams(msg));
        match *self {
            ShapeParams::Sphere { radius } => {
                if !(radius > 0.0) {
                    return fail(format!("sphere radius {radius} must be positive"));
                }
                if radius > 1.0 {
                    return fail(format!("sphere radius {radius} exceeds the unit ball"));
                }
            }
            ShapeParams::Box { half_extents: h } => {
                if !h.iter().all(|&e| e > 0.0) {
                    return fail(format!("box half-extents {h:?} must be positive"));
                }
                let diag = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
                if diag > 1.0 {
                    return fail(format!("box half-diagonal {diag} exceeds the unit ball"));
                }
            }
            ShapeParams::Cylinder {
                radius,
                half_height,
            }
            | ShapeParams::Cone {
                radius,
                half_height,
            } => {
                if !(radius > 0.0 && half_height > 0.0) {
                    return fail(format!(
                        "radius {radius} and half-height {half_height} must be positive"
                    ));
                }
                let reach = (radius * radius + half_height * half_height).sqrt();
                if reach > 1.0 {
                    return fail(format!("rim reach {reach} exceeds the unit ball"));
                }
            }
            ShapeParams::Torus {
                major_radius,
                minor_radius,
            } => {
                if !(major_radius > 0.0 && minor_radius > 0.0) {
                    return fail(format!(
                        "torus radii ({major_radius}, {minor_radius}) must be positive"
                    ));
                }
                if minor_radius >= major_radius {
                    return fail(format!(
                        "torus minor radius {minor_radius} must be below major radius {major_radius}"
                    ));
                }
                if major_radius + minor_radius > 1.0 {
                    return fail(format!(
                        "torus outer radius {} exceeds the unit ball",
                        major_radius + minor_radius
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws canonical parameters uniformly over the declared per-kind
    /// domains. All domains keep shapes non-degenerate and inside the unit
    /// ball; the cylinder/cone draw re-samples in the (unreachable with the
    /// current ranges) event the rim would leave the ball.
    pub fn sample<R: Rng + ?Sized>(kind: PrimitiveKind, rng: &mut R) -> ShapeParams {
        match kind {
            PrimitiveKind::Sphere => ShapeParams::Sphere {
                radius: rng.random_range(0.5..=1.0),
            },
            PrimitiveKind::Box => ShapeParams::Box {
                half_extents: [
                    rng.random_range(0.2..=0.577),
                    rng.random_range(0.2..=0.577),
                    rng.random_range(0.2..=0.577),
                ],
            },
            PrimitiveKind::Cylinder | PrimitiveKind::Cone => loop {
                let radius = rng.random_range(0.2..=0.7);
                let half_height = rng.random_range(0.2..=0.7);
                if radius * radius + half_height * half_height <= 1.0 {
                    break if kind == PrimitiveKind::Cylinder {
                        ShapeParams::Cylinder {
                            radius,
                            half_height,
                        }
                    } else {
                        ShapeParams::Cone {
                            radius,
                            half_height,
                        }
                    };
                }
            },
            PrimitiveKind::Torus => {
                let major_radius: f64 = rng.random_range(0.4..=0.8);
                let hi = (major_radius - 0.05).min(1.0 - major_radius).min(0.3);
                ShapeParams::Torus {
                    major_radius,
                    minor_radius: rng.random_range(0.1..=hi),
                }
            }
        }
    }
}

/// Rigid-similarity transform: rotate, then uniformly scale, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Pose {
        Pose {
            rotation,
            translation,
            scale,
        }
    }

    pub fn validate(&self) -> Result<(), PrimError> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(PrimError::InvalidPose(format!(
                "scale {} must be a positive finite number",
                self.scale
            )));
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(PrimError::InvalidPose("non-finite translation".into()));
        }
        let m = self.rotation.to_rotation_matrix();
        let gram = m.matrix().transpose() * m.matrix();
        let ortho_err = (gram - nalgebra::Matrix3::identity()).norm();
        let det_err = (m.matrix().determinant() - 1.0).abs();
        if ortho_err > 1e-9 || det_err > 1e-9 {
            return Err(PrimError::InvalidPose(format!(
                "rotation fails orthonormality ({ortho_err:.2e}) or det (+1 off by {det_err:.2e})"
            )));
        }
        Ok(())
    }

    /// `scale * (rotation * p) + translation`.
    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Inverse map into the canonical frame.
    pub fn apply_inverse(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * ((p - self.translation) / self.scale)
    }

    /// Rotates a canonical direction into world space (normals are invariant
    /// under the uniform scale and translation).
    pub fn rotate_dir(&self, d: Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }
}

/// One placed primitive. The canonical unit-ball invariant guarantees the
/// world-space solid stays inside the ball of radius `pose.scale` around
/// `pose.translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveInstance {
    pub params: ShapeParams,
    pub pose: Pose,
}

impl PrimitiveInstance {
    pub fn new(params: ShapeParams, pose: Pose) -> PrimitiveInstance {
        PrimitiveInstance { params, pose }
    }

    pub fn canonical(params: ShapeParams) -> PrimitiveInstance {
        PrimitiveInstance::new(params, Pose::identity())
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.params.kind()
    }

    pub fn validate(&self) -> Result<(), PrimError> {
        self.params.validate()?;
        self.pose.validate()
    }

    /// Enclosing sphere `(center, radius)`; containment follows from the
    /// canonical unit-ball invariant.
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        (self.pose.translation, self.pose.scale)
    }

    /// Exact three-valued classification of a world-space point at world
    /// tolerance `tol`.
    pub fn classify(&self, p: Vector3<f64>, tol: f64) -> Membership {
        let q = self.pose.apply_inverse(p);
        let s = canonical_signed_distance(&self.params, q);
        let canon_tol = tol / self.pose.scale;
        if s.abs() <= canon_tol {
            Membership::On
        } else if s < 0.0 {
            Membership::In
        } else {
            Membership::Out
        }
    }

    /// World-space boundary area (`canonical area * scale^2`).
    pub fn world_surface_area(&self) -> f64 {
        surface_area(&self.params) * self.pose.scale * self.pose.scale
    }
}

/// Point-membership value of the three-valued classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    In,
    On,
    Out,
}

/// A point on a canonical primitive boundary with its outward unit normal
/// and the boundary patch it came from (box face, cylinder cap, ...).
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub patch: u8,
}

/// Closed-form boundary area of the canonical solid, all patches included.
pub fn surface_area(params: &ShapeParams) -> f64 {
    match *params {
        ShapeParams::Sphere { radius } => 4.0 * PI * radius * radius,
        ShapeParams::Box { half_extents: h } => {
            8.0 * (h[0] * h[1] + h[1] * h[2] + h[2] * h[0])
        }
        ShapeParams::Cylinder {
            radius,
            half_height,
        } => 4.0 * PI * radius * half_height + 2.0 * PI * radius * radius,
        ShapeParams::Cone {
            radius,
            half_height,
        } => {
            let slant = (radius * radius + 4.0 * half_height * half_height).sqrt();
            PI * radius * (slant + radius)
        }
        ShapeParams::Torus {
            major_radius,
            minor_radius,
        } => 4.0 * PI * PI * major_radius * minor_radius,
    }
}

/// Exact signed distance from a canonical-frame point to the solid's
/// boundary: negative inside, positive outside. Piecewise-exact for every
/// kind (no smoothing), so `|s| <= tol` is a true boundary-band test.
pub fn canonical_signed_distance(params: &ShapeParams, q: Vector3<f64>) -> f64 {
    match *params {
        ShapeParams::Sphere { radius } => q.norm() - radius,
        ShapeParams::Box { half_extents: h } => {
            let d = Vector3::new(q.x.abs() - h[0], q.y.abs() - h[1], q.z.abs() - h[2]);
            let outside = Vector3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).norm();
            if outside > 0.0 {
                outside
            } else {
                d.x.max(d.y).max(d.z)
            }
        }
        ShapeParams::Cylinder {
            radius,
            half_height,
        } => {
            let dr = (q.x * q.x + q.y * q.y).sqrt() - radius;
            let dz = q.z.abs() - half_height;
            if dr <= 0.0 && dz <= 0.0 {
                dr.max(dz)
            } else {
                (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt()
            }
        }
        ShapeParams::Cone {
            radius,
            half_height,
        } => {
            // Work in the (rho, z) half-plane: the boundary is the lateral
            // segment apex->rim plus the base segment rim->axis.
            let rho = (q.x * q.x + q.y * q.y).sqrt();
            let apex = [0.0, half_height];
            let rim = [radius, -half_height];
            let base_center = [0.0, -half_height];
            let p2 = [rho, q.z];
            let d = dist_point_segment(p2, apex, rim).min(dist_point_segment(p2, rim, base_center));
            let inside = q.z >= -half_height
                && q.z <= half_height
                && 2.0 * half_height * rho <= radius * (half_height - q.z);
            if inside {
                -d
            } else {
                d
            }
        }
        ShapeParams::Torus {
            major_radius,
            minor_radius,
        } => {
            let ring = (q.x * q.x + q.y * q.y).sqrt() - major_radius;
            (ring * ring + q.z * q.z).sqrt() - minor_radius
        }
    }
}

fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = p[0] - (a[0] + t * ab[0]);
    let dy = p[1] - (a[1] + t * ab[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Draws a boundary point of the canonical solid, uniform with respect to
/// surface area over the whole boundary. Patches are selected proportionally
/// to their area; the torus tube angle uses rejection with acceptance
/// probability `(R + r cos v) / (R + r)`.
pub fn sample_canonical_surface<R: Rng + ?Sized>(
    params: &ShapeParams,
    rng: &mut R,
) -> Result<SurfaceSample, PrimError> {
    match *params {
        ShapeParams::Sphere { radius } => {
            let dir: [f64; 3] = UnitSphere.sample(rng);
            let n = Vector3::new(dir[0], dir[1], dir[2]);
            Ok(SurfaceSample {
                point: radius * n,
                normal: n,
                patch: 0,
            })
        }
        ShapeParams::Box { half_extents: h } => {
            // Face order +x, -x, +y, -y, +z, -z; weights drop the common
            // factor 4 from the full face areas.
            let weights = [
                h[1] * h[2],
                h[1] * h[2],
                h[0] * h[2],
                h[0] * h[2],
                h[0] * h[1],
                h[0] * h[1],
            ];
            let face = pick_weighted(&weights, rng);
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let (u_axis, v_axis) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut point = Vector3::zeros();
            point[axis] = sign * h[axis];
            point[u_axis] = rng.random_range(-h[u_axis]..=h[u_axis]);
            point[v_axis] = rng.random_range(-h[v_axis]..=h[v_axis]);
            let mut normal = Vector3::zeros();
            normal[axis] = sign;
            Ok(SurfaceSample {
                point,
                normal,
                patch: face as u8,
            })
        }
        ShapeParams::Cylinder {
            radius,
            half_height,
        } => {
            let lateral = 4.0 * PI * radius * half_height;
            let cap = PI * radius * radius;
            let patch = pick_weighted(&[lateral, cap, cap], rng);
            let phi = rng.random_range(0.0..2.0 * PI);
            let (sin_phi, cos_phi) = phi.sin_cos();
            match patch {
                0 => Ok(SurfaceSample {
                    point: Vector3::new(
                        radius * cos_phi,
                        radius * sin_phi,
                        rng.random_range(-half_height..=half_height),
                    ),
                    normal: Vector3::new(cos_phi, sin_phi, 0.0),
                    patch: 0,
                }),
                cap_idx => {
                    let z_sign = if cap_idx == 1 { 1.0 } else { -1.0 };
                    let rho = radius * rng.random_range(0.0..=1.0f64).sqrt();
                    Ok(SurfaceSample {
                        point: Vector3::new(rho * cos_phi, rho * sin_phi, z_sign * half_height),
                        normal: Vector3::new(0.0, 0.0, z_sign),
                        patch: cap_idx as u8,
                    })
                }
            }
        }
        ShapeParams::Cone {
            radius,
            half_height,
        } => {
            let slant = (radius * radius + 4.0 * half_height * half_height).sqrt();
            let lateral = PI * radius * slant;
            let base = PI * radius * radius;
            let patch = pick_weighted(&[lateral, base], rng);
            let phi = rng.random_range(0.0..2.0 * PI);
            let (sin_phi, cos_phi) = phi.sin_cos();
            if patch == 0 {
                // Area grows linearly with slant distance from the apex.
                let f = rng.random_range(0.0..=1.0f64).sqrt();
                let rho = radius * f;
                let z = half_height - 2.0 * half_height * f;
                let normal = Vector3::new(
                    2.0 * half_height * cos_phi,
                    2.0 * half_height * sin_phi,
                    radius,
                ) / slant;
                Ok(SurfaceSample {
                    point: Vector3::new(rho * cos_phi, rho * sin_phi, z),
                    normal,
                    patch: 0,
                })
            } else {
                let rho = radius * rng.random_range(0.0..=1.0f64).sqrt();
                Ok(SurfaceSample {
                    point: Vector3::new(rho * cos_phi, rho * sin_phi, -half_height),
                    normal: Vector3::new(0.0, 0.0, -1.0),
                    patch: 1,
                })
            }
        }
        ShapeParams::Torus {
            major_radius: big_r,
            minor_radius: small_r,
        } => {
            let u = rng.random_range(0.0..2.0 * PI);
            let mut v = None;
            for _ in 0..REJECTION_CAP {
                let cand = rng.random_range(0.0..2.0 * PI);
                let accept = (big_r + small_r * cand.cos()) / (big_r + small_r);
                if rng.random_range(0.0..1.0) < accept {
                    v = Some(cand);
                    break;
                }
            }
            let v = v.ok_or(PrimError::InternalSamplingFailure(REJECTION_CAP))?;
            let (sin_u, cos_u) = u.sin_cos();
            let (sin_v, cos_v) = v.sin_cos();
            let ring = big_r + small_r * cos_v;
            Ok(SurfaceSample {
                point: Vector3::new(ring * cos_u, ring * sin_u, small_r * sin_v),
                normal: Vector3::new(cos_v * cos_u, cos_v * sin_u, sin_v),
                patch: 0,
            })
        }
    }
}

pub(crate) fn pick_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}
