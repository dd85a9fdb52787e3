use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};

/// Solid primitive in its local frame.
///
/// Spheres and boxes are centred on the local origin. A capsule's axis runs
/// from the origin to `(0, -length, 0)`, so the pose translation is the joint
/// the capsule hangs from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "primitive", rename_all = "lowercase")]
pub enum Primitive {
    Sphere { radius: f64 },
    Capsule { radius: f64, length: f64 },
    Box { half_extents: Vec3 },
}

/// Rigid placement: rotate by Euler XYZ angles in degrees, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation_deg: Vec3,
}

impl Pose {
    pub fn at(translation: Vec3) -> Self {
        Pose { translation, rotation_deg: [0.0; 3] }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        geom::rotation_xyz_deg(self.rotation_deg)
    }

    pub fn apply(&self, local: Vec3) -> Vec3 {
        geom::add(geom::mat_vec(&self.rotation(), local), self.translation)
    }
}

impl Primitive {
    pub(crate) fn is_valid(&self) -> bool {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Primitive::Sphere { radius } => pos(radius),
            Primitive::Capsule { radius, length } => pos(radius) && length.is_finite() && length >= 0.0,
            Primitive::Box { half_extents } => half_extents.iter().all(|&h| pos(h)),
        }
    }

    /// Signed distance in the local frame; negative inside.
    pub fn sdf(&self, p: Vec3) -> f64 {
        match *self {
            Primitive::Sphere { radius } => geom::norm(p) - radius,
            Primitive::Capsule { radius, length } => {
                let y = p[1].clamp(-length, 0.0);
                geom::norm([p[0], p[1] - y, p[2]]) - radius
            }
            Primitive::Box { half_extents } => {
                let q = [
                    p[0].abs() - half_extents[0],
                    p[1].abs() - half_extents[1],
                    p[2].abs() - half_extents[2],
                ];
                let outside = geom::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                outside + q[0].max(q[1]).max(q[2]).min(0.0)
            }
        }
    }

    /// Local-frame axis-aligned bounds.
    fn local_bounds(&self) -> (Vec3, Vec3) {
        match *self {
            Primitive::Sphere { radius: r } => ([-r; 3], [r; 3]),
            Primitive::Capsule { radius: r, length } => ([-r, -length - r, -r], [r, r, r]),
            Primitive::Box { half_extents: h } => ([-h[0], -h[1], -h[2]], h),
        }
    }
}

/// World-space bounds of a posed primitive (the box around its rotated local bounds).
pub(crate) fn world_bounds(prim: &Primitive, pose: &Pose) -> (Vec3, Vec3) {
    let (lo, hi) = prim.local_bounds();
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for corner in 0..8 {
        let c = [
            if corner & 1 == 0 { lo[0] } else { hi[0] },
            if corner & 2 == 0 { lo[1] } else { hi[1] },
            if corner & 4 == 0 { lo[2] } else { hi[2] },
        ];
        let w = pose.apply(c);
        for d in 0..3 {
            min[d] = min[d].min(w[d]);
            max[d] = max[d].max(w[d]);
        }
    }
    (min, max)
}

/// Signed distance of a posed primitive at world point `p`.
pub(crate) fn posed_sdf(prim: &Primitive, pose: &Pose, rot: &[[f64; 3]; 3], p: Vec3) -> f64 {
    prim.sdf(geom::mat_t_vec(rot, geom::sub(p, pose.translation)))
}
