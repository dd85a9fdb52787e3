//! Labeled toy shapes built from posed primitives.
//!
//! A shape is the union of spheres, capsules and boxes. The union's signed
//! distance field is polygonized with surface nets, giving one closed,
//! connected mesh wherever parts overlap. Every vertex is labeled with the
//! part nearest to it.

mod nets;
mod sdf;

pub use sdf::{Pose, Primitive};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh};

/// Number of classes in the [`toy_humanoid`] preset.
pub const HUMANOID_CLASSES: usize = 10;

/// Label names of the [`toy_humanoid`] preset, indexed by `label - 1`.
pub const HUMANOID_LABELS: [&str; HUMANOID_CLASSES] = [
    "head", "torso", "right arm", "right hand", "right leg", "right foot", "left arm", "left hand",
    "left leg", "left foot",
];

/// Surface projection steps applied to each extracted vertex.
const PROJECTION_STEPS: usize = 4;
/// Upper bound on sampled grid points.
const MAX_GRID_POINTS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    #[serde(flatten)]
    pub primitive: Primitive,
    #[serde(default)]
    pub pose: Pose,
    /// 1-based class.
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    /// Seed the parts were drawn from. Generation itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub parts: Vec<Part>,
    /// Edge length of the polygonization grid; smaller means denser meshes.
    pub cell_size: f64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.parts.len() < 2 {
            return Err(Error::Validation("a shape needs at least two parts".into()));
        }
        if let Some(i) = self.parts.iter().position(|p| p.label == 0) {
            return Err(Error::Validation(format!("part {i} has label 0; labels start at 1")));
        }
        let first = self.parts[0].label;
        if self.parts.iter().all(|p| p.label == first) {
            return Err(Error::Validation("parts must cover at least two labels".into()));
        }
        if let Some(i) = self.parts.iter().position(|p| !p.primitive.is_valid()) {
            return Err(Error::Validation(format!("part {i} has a non-positive or non-finite size")));
        }
        if let Some(i) = self
            .parts
            .iter()
            .position(|p| !p.pose.translation.iter().chain(&p.pose.rotation_deg).all(|x| x.is_finite()))
        {
            return Err(Error::Validation(format!("part {i} has a non-finite pose")));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::Validation("cell_size must be positive".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.parts.iter().map(|p| p.label).max().unwrap_or(0) as usize
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ShapeSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

struct PosedPart {
    primitive: Primitive,
    pose: Pose,
    rot: [[f64; 3]; 3],
}

impl PosedPart {
    fn sdf(&self, p: Vec3) -> f64 {
        sdf::posed_sdf(&self.primitive, &self.pose, &self.rot, p)
    }
}

fn union_sdf(parts: &[PosedPart], p: Vec3) -> f64 {
    parts.iter().map(|q| q.sdf(p)).fold(f64::INFINITY, f64::min)
}

/// Index of the part with the smallest signed distance; later parts win ties.
fn nearest_part(parts: &[PosedPart], p: Vec3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in parts.iter().enumerate() {
        let d = q.sdf(p);
        if d <= best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Pull `p` towards the zero level set with Newton steps on a finite-difference gradient.
fn project(parts: &[PosedPart], mut p: Vec3, h: f64) -> Vec3 {
    let eps = 1e-4 * h;
    for _ in 0..PROJECTION_STEPS {
        let f = union_sdf(parts, p);
        let mut g = [0.0; 3];
        for d in 0..3 {
            let mut a = p;
            let mut b = p;
            a[d] += eps;
            b[d] -= eps;
            g[d] = (union_sdf(parts, a) - union_sdf(parts, b)) / (2.0 * eps);
        }
        let g2 = geom::dot(g, g);
        if g2 < 1e-12 {
            break;
        }
        let mut step = geom::scale(g, -f / g2);
        let len = geom::norm(step);
        if len > 0.5 * h {
            step = geom::scale(step, 0.5 * h / len);
        }
        p = geom::add(p, step);
    }
    p
}

/// Polygonize a shape spec into a labeled mesh with normals.
pub fn generate(spec: &ShapeSpec) -> Result<Mesh> {
    spec.validate()?;
    let parts: Vec<PosedPart> = spec
        .parts
        .iter()
        .map(|p| PosedPart { primitive: p.primitive, pose: p.pose, rot: p.pose.rotation() })
        .collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &spec.parts {
        let (a, b) = sdf::world_bounds(&p.primitive, &p.pose);
        for d in 0..3 {
            lo[d] = lo[d].min(a[d]);
            hi[d] = hi[d].max(b[d]);
        }
    }
    let h = spec.cell_size;
    // two empty cells of margin on every side keep the outer grid layer outside the shape
    let origin = geom::sub(lo, [2.0 * h; 3]);
    let dims: [usize; 3] = std::array::from_fn(|d| ((hi[d] - lo[d]) / h).ceil() as usize + 4);
    let grid = nets::Grid { origin, cell: h, dims };
    if grid.point_count() > MAX_GRID_POINTS {
        return Err(Error::Validation(format!(
            "cell_size {h} needs {} grid points (limit {MAX_GRID_POINTS})",
            grid.point_count()
        )));
    }
    let (raw, faces) = nets::extract(&grid, |p| union_sdf(&parts, p));
    if faces.is_empty() {
        return Err(Error::Validation("shape is smaller than one grid cell".into()));
    }
    let vertices: Vec<Vec3> = raw.iter().map(|&p| project(&parts, p, h)).collect();
    let labels = vertices.iter().map(|&p| spec.parts[nearest_part(&parts, p)].label).collect();
    Mesh::new(vertices, faces)?.with_labels(labels)?.with_computed_normals()
}

/// Two disjoint spheres of radius 0.5 labeled 1 and 2.
pub fn two_spheres(cell_size: f64) -> ShapeSpec {
    let sphere = Primitive::Sphere { radius: 0.5 };
    ShapeSpec {
        seed: 0,
        parts: vec![
            Part { primitive: sphere, pose: Pose::at([-0.8, 0.0, 0.0]), label: 1 },
            Part { primitive: sphere, pose: Pose::at([0.8, 0.0, 0.0]), label: 2 },
        ],
        cell_size,
    }
}

/// Grid cell size of the humanoid preset; gives roughly 1 300 vertices.
pub const HUMANOID_CELL_SIZE: f64 = 0.05;

/// A standing figure about two units tall, facing +z with +y up.
///
/// Labels follow [`HUMANOID_LABELS`]. The seed varies arm spread, hand bend,
/// stride, leg spread and torso lean, so every seed gives a different pose of
/// the same body.
pub fn toy_humanoid(seed: u64) -> ShapeSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(HUMANOID_CLASSES);
    let lean = [rng.gen_range(-6.0..6.0), 0.0, rng.gen_range(-4.0..4.0)];
    let torso = Pose { translation: [0.0, 1.42, 0.0], rotation_deg: lean };
    let neck = torso.apply([0.0, 0.24, 0.0]);
    parts.push(Part { primitive: Primitive::Sphere { radius: 0.2 }, pose: Pose::at(neck), label: 1 });
    parts.push(Part { primitive: Primitive::Capsule { radius: 0.2, length: 0.62 }, pose: torso, label: 2 });

    let arm = Primitive::Capsule { radius: 0.075, length: 0.5 };
    let hand = Primitive::Capsule { radius: 0.085, length: 0.14 };
    let leg = Primitive::Capsule { radius: 0.095, length: 0.62 };
    let foot = Primitive::Box { half_extents: [0.07, 0.05, 0.13] };
    for (side, first_label) in [(-1.0, 3u32), (1.0, 7u32)] {
        let shoulder = torso.apply([side * 0.25, -0.06, 0.0]);
        let spread = rng.gen_range(20.0..45.0);
        let swing = rng.gen_range(-20.0..20.0);
        let arm_pose = Pose { translation: shoulder, rotation_deg: [swing, 0.0, side * spread] };
        let wrist = arm_pose.apply([0.0, -0.5, 0.0]);
        let bend = spread + rng.gen_range(-15.0..15.0);
        let hand_pose = Pose { translation: wrist, rotation_deg: [swing, 0.0, side * bend] };

        let hip = [side * 0.11, 0.8, 0.0];
        let stride = rng.gen_range(-18.0..18.0);
        let leg_spread = rng.gen_range(2.0..10.0);
        let leg_pose = Pose { translation: hip, rotation_deg: [stride, 0.0, side * leg_spread] };
        let ankle = leg_pose.apply([0.0, -0.62, 0.0]);
        let toe_turn = rng.gen_range(-15.0..15.0);
        let foot_pose = Pose {
            translation: geom::add(ankle, [0.0, -0.04, 0.07]),
            rotation_deg: [0.0, side * toe_turn, 0.0],
        };

        parts.push(Part { primitive: arm, pose: arm_pose, label: first_label });
        parts.push(Part { primitive: hand, pose: hand_pose, label: first_label + 1 });
        parts.push(Part { primitive: leg, pose: leg_pose, label: first_label + 2 });
        parts.push(Part { primitive: foot, pose: foot_pose, label: first_label + 3 });
    }
    ShapeSpec { seed, parts, cell_size: HUMANOID_CELL_SIZE }
}

/// Displace every vertex along its normal by a uniform amount in
/// `[-noise_scale, noise_scale] * mean_edge_length`. Topology and labels are
/// kept; stored normals are recomputed.
pub fn perturb(mesh: &Mesh, seed: u64, noise_scale: f64) -> Result<Mesh> {
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        return Err(Error::Config(format!("noise_scale must be finite and >= 0, got {noise_scale}")));
    }
    if noise_scale == 0.0 {
        return Ok(mesh.clone());
    }
    let bound = noise_scale * mesh.mean_edge_length();
    let normals: Vec<Option<Vec3>> = match mesh.normals() {
        Some(n) => n.iter().copied().map(Some).collect(),
        None => mesh::accumulate_normals(mesh.vertices(), mesh.faces()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moved: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(&p, n)| {
            let amount = bound * rng.gen_range(-1.0..=1.0);
            match n {
                Some(n) => geom::add(p, geom::scale(*n, amount)),
                None => p,
            }
        })
        .collect();
    let fresh = mesh::accumulate_normals(&moved, mesh.faces());
    let mut out = Mesh::new(moved, mesh.faces().to_vec())?;
    if let Some(l) = mesh.labels() {
        out = out.with_labels(l.to_vec())?;
    }
    if mesh.normals().is_some() {
        let n = fresh
            .into_iter()
            .zip(&normals)
            .map(|(f, old)| f.or(*old).expect("stored normals are present"))
            .collect();
        out = out.with_normals(n)?;
    }
    Ok(out)
}

/// Icosahedron subdivided `subdivisions` times, projected onto a sphere of
/// `radius` about the origin, wound outward.
pub fn icosphere(subdivisions: usize, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = vec![
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ];
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache = std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(geom::scale(geom::add(v[a], v[b]), 0.5));
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(f.len() * 4);
        for &[a, b, c] in &f {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = next;
    }
    let v = v
        .into_iter()
        .map(|p| geom::scale(geom::normalize(p).expect("icosphere vertex is nonzero"), radius))
        .collect();
    Mesh::new(v, f).expect("icosphere topology is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::EdgeGraph;

    fn components(mesh: &Mesh) -> Vec<usize> {
        let graph = EdgeGraph::new(mesh);
        let mut comp = vec![usize::MAX; mesh.vertex_count()];
        let mut next = 0;
        for s in 0..mesh.vertex_count() {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = next;
            while let Some(v) = stack.pop() {
                for &(w, _) in graph.neighbors(v) {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    #[test]
    fn icosphere_counts_and_radius() {
        for s in 0..4 {
            let m = icosphere(s, 2.0);
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s as u32) + 2);
            assert_eq!(m.face_count(), 20 * 4usize.pow(s as u32));
            for p in m.vertices() {
                assert!((geom::norm(*p) - 2.0).abs() < 1e-12);
            }
            let n = mesh::vertex_normals(&m).unwrap();
            for (p, q) in m.vertices().iter().zip(&n) {
                assert!(geom::dot(*p, *q) > 0.0);
            }
        }
    }

    #[test]
    fn two_spheres_have_one_label_per_sphere() {
        let mesh = generate(&two_spheres(0.1)).unwrap();
        let labels = mesh.labels().unwrap();
        let comp = components(&mesh);
        assert_eq!(comp.iter().max(), Some(&1));
        let mut distinct: Vec<u32> = labels.to_vec();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct, vec![1, 2]);
        for k in 0..2 {
            let size = comp.iter().filter(|&&c| c == k).count();
            let label = labels[comp.iter().position(|&c| c == k).unwrap()];
            assert_eq!(labels.iter().filter(|&&l| l == label).count(), size);
        }
        for p in mesh.vertices() {
            let d = (geom::norm(geom::sub(*p, [-0.8, 0.0, 0.0])) - 0.5)
                .abs()
                .min((geom::norm(geom::sub(*p, [0.8, 0.0, 0.0])) - 0.5).abs());
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn same_seed_gives_identical_meshes() {
        let a = generate(&toy_humanoid(3)).unwrap();
        let b = generate(&toy_humanoid(3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.vertices(), generate(&toy_humanoid(4)).unwrap().vertices());
    }

    #[test]
    fn humanoid_is_one_piece_with_all_ten_labels() {
        for seed in 0..5 {
            let mesh = generate(&toy_humanoid(seed)).unwrap();
            assert!((800..=2500).contains(&mesh.vertex_count()), "{}", mesh.vertex_count());
            assert_eq!(components(&mesh).iter().max(), Some(&0), "seed {seed}");
            mesh.check_labels(HUMANOID_CLASSES).unwrap();
            let labels = mesh.labels().unwrap();
            for l in 1..=HUMANOID_CLASSES as u32 {
                assert!(labels.contains(&l), "seed {seed} lacks label {l}");
            }
            mesh::vertex_normals(&mesh).unwrap();
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = two_spheres(0.1);
        spec.parts[1].label = 1;
        assert!(generate(&spec).is_err());
        let mut spec = two_spheres(0.1);
        spec.parts.pop();
        assert!(generate(&spec).is_err());
        let mut spec = two_spheres(0.1);
        spec.cell_size = 0.0;
        assert!(generate(&spec).is_err());
        let mut spec = two_spheres(0.1);
        spec.parts[0].primitive = Primitive::Sphere { radius: -1.0 };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = toy_humanoid(11);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"primitive\":\"capsule\""));
        let back: ShapeSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.json");
        spec.save(&path).unwrap();
        assert_eq!(ShapeSpec::load(&path).unwrap(), spec);
    }

    #[test]
    fn perturb_preserves_labels_and_bounds_jitter() {
        let mesh = generate(&two_spheres(0.1)).unwrap();
        assert_eq!(perturb(&mesh, 5, 0.0).unwrap(), mesh);
        let bound = 0.3 * mesh.mean_edge_length();
        let mut max_seen: f64 = 0.0;
        for seed in 0..1000 {
            let p = perturb(&mesh, seed, 0.3).unwrap();
            assert_eq!(p.labels(), mesh.labels());
            assert_eq!(p.faces(), mesh.faces());
            for (a, b) in p.vertices().iter().zip(mesh.vertices()) {
                let d = geom::distance(*a, *b);
                assert!(d <= bound * (1.0 + 1e-12));
                max_seen = max_seen.max(d);
            }
        }
        assert!(max_seen > 0.9 * bound);
        assert_eq!(perturb(&mesh, 9, 0.2).unwrap(), perturb(&mesh, 9, 0.2).unwrap());
        assert!(perturb(&mesh, 9, -0.1).is_err());
    }
}
