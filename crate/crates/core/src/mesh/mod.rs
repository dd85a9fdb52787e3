//! Indexed triangle meshes, vertex normals, file I/O and graph geodesics.

mod geodesic;
mod io;

pub use geodesic::{all_pairs_geodesics, geodesic_distances, EdgeGraph, GeodesicField, GeodesicOptions};
pub use io::{
    labels_sidecar_path, load_mesh, load_mesh_auto, save_mesh, save_obj, save_ply, MeshFormat,
    PlyEncoding, PlyWriteOptions,
};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Tolerance on the Euclidean norm of stored unit normals.
pub const NORMAL_TOLERANCE: f64 = 1e-6;

/// An immutable indexed triangle mesh.
///
/// Labels, when present, are 1-based class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Option<Vec<Vec3>>,
    labels: Option<Vec<u32>>,
}

impl Mesh {
    /// Build a mesh, checking face indices and degeneracy.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((i, _)) = vertices
            .iter()
            .enumerate()
            .find(|(_, v)| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Validation(format!("vertex {i} has a non-finite coordinate")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation(format!(
                    "face {fi} is degenerate ({}, {}, {})",
                    f[0], f[1], f[2]
                )));
            }
        }
        Ok(Mesh {
            vertices,
            faces,
            normals: None,
            labels: None,
        })
    }

    /// Attach per-vertex labels (each must be >= 1).
    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.vertices.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l == 0) {
            return Err(Error::Validation(format!("vertex {i} has label 0; labels start at 1")));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Attach per-vertex unit normals.
    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(Error::Validation(format!(
                "{} normals for {} vertices",
                normals.len(),
                self.vertices.len()
            )));
        }
        for (i, nrm) in normals.iter().enumerate() {
            if (geom::norm(*nrm) - 1.0).abs() > NORMAL_TOLERANCE {
                return Err(Error::Validation(format!("normal {i} is not unit length")));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Compute area-weighted normals and attach them.
    pub fn with_computed_normals(self) -> Result<Self> {
        let normals = vertex_normals(&self)?;
        self.with_normals(normals)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Check that all labels lie in `1..=num_classes`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|&l| l == 0 || l as usize > num_classes) {
                return Err(Error::Validation(format!(
                    "vertex {i} has label {} outside 1..={num_classes}",
                    labels[i]
                )));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        let sum = self.vertices.iter().fold([0.0; 3], |acc, &v| geom::add(acc, v));
        geom::scale(sum, 1.0 / n)
    }

    /// Radius of the smallest sphere centred at `center` containing every vertex.
    pub fn radius_about(&self, center: Vec3) -> f64 {
        self.vertices
            .iter()
            .map(|&v| geom::distance(v, center))
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.bounds();
        geom::distance(lo, hi)
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        geom::distance(self.vertices[a], self.vertices[b])
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&(a, b)| self.edge_length(a, b))
            .fold(0.0, f64::max)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges.iter().map(|&(a, b)| self.edge_length(a, b)).sum::<f64>() / edges.len() as f64
    }

    pub fn face_areas(&self) -> Vec<f64> {
        self.faces
            .iter()
            .map(|f| geom::triangle_area(self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]))
            .collect()
    }

    /// One third of the summed area of the faces incident to each vertex.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        for (f, area) in self.faces.iter().zip(self.face_areas()) {
            for &i in f {
                out[i] += area / 3.0;
            }
        }
        out
    }

    /// Map every vertex through `f`, keeping topology and labels. Normals are dropped.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Mesh> {
        let mesh = Mesh::new(self.vertices.iter().map(|&v| f(v)).collect(), self.faces.clone())?;
        match &self.labels {
            Some(l) => mesh.with_labels(l.clone()),
            None => Ok(mesh),
        }
    }
}

/// Area-weighted unit normal per vertex, or `None` for vertices whose incident
/// faces all have zero area (or that have no incident face).
pub(crate) fn accumulate_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Option<Vec3>> {
    let mut sums = vec![[0.0; 3]; vertices.len()];
    for f in faces {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        // |cross| is twice the area, so the raw cross product is already area-weighted.
        let n = geom::cross(geom::sub(b, a), geom::sub(c, a));
        for &i in f {
            sums[i] = geom::add(sums[i], n);
        }
    }
    sums.into_iter().map(geom::normalize).collect()
}

/// Per-vertex unit normals: the normalized sum of incident face normals
/// weighted by face area, oriented by face winding.
pub fn vertex_normals(mesh: &Mesh) -> Result<Vec<Vec3>> {
    if mesh.faces.is_empty() {
        return Err(Error::Validation("vertex normals need at least one face".into()));
    }
    let mut incident = vec![false; mesh.vertex_count()];
    for f in &mesh.faces {
        for &i in f {
            incident[i] = true;
        }
    }
    let orphans: Vec<usize> = (0..mesh.vertex_count()).filter(|&i| !incident[i]).collect();
    if !orphans.is_empty() {
        return Err(Error::Validation(format!(
            "{} vertices have no incident face: {:?}",
            orphans.len(),
            &orphans[..orphans.len().min(20)]
        )));
    }
    accumulate_normals(&mesh.vertices, &mesh.faces)
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            n.ok_or_else(|| Error::Validation(format!("vertex {i} only touches zero-area faces")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn cube() -> Mesh {
        let v = (0..8)
            .map(|i| [(i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64])
            .collect();
        // outward winding
        let f = vec![
            [0, 2, 1], [1, 2, 3], // z = 0
            [4, 5, 6], [5, 7, 6], // z = 1
            [0, 1, 4], [1, 5, 4], // y = 0
            [2, 6, 3], [3, 6, 7], // y = 1
            [0, 4, 2], [2, 4, 6], // x = 0
            [1, 3, 5], [3, 7, 5], // x = 1
        ];
        Mesh::new(v, f).unwrap()
    }

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(Mesh::new(v.clone(), vec![[0, 1, 7]]), Err(Error::Validation(_))));
        assert!(matches!(Mesh::new(v.clone(), vec![[0, 1, 1]]), Err(Error::Validation(_))));
        assert!(Mesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn label_and_normal_invariants() {
        let m = square();
        assert!(m.clone().with_labels(vec![1, 2, 0, 1]).is_err());
        assert!(m.clone().with_labels(vec![1, 2]).is_err());
        let m = m.with_labels(vec![1, 2, 3, 1]).unwrap();
        assert!(m.check_labels(3).is_ok());
        assert!(m.check_labels(2).is_err());
        assert!(m.clone().with_normals(vec![[0.0, 0.0, 2.0]; 4]).is_err());
    }

    #[test]
    fn flat_square_normals_point_up() {
        for n in vertex_normals(&square()).unwrap() {
            assert!(geom::distance(n, [0.0, 0.0, 1.0]) < 1e-15);
        }
    }

    #[test]
    fn single_triangle_normals_equal_face_normal() {
        let m = Mesh::new(vec![[0.0; 3], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        for n in vertex_normals(&m).unwrap() {
            assert!(geom::distance(n, [0.0, -1.0, 0.0]) < 1e-15);
        }
    }

    #[test]
    fn cube_corner_normal_is_area_weighted_sum() {
        // Corner 0 touches one triangle on each of z=0, y=0 and x=0, each of area 1/2, so the
        // area-weighted sum is (-1,-1,-1)/2 and the normal is -(1,1,1)/sqrt(3).
        let n = vertex_normals(&cube()).unwrap();
        let s = -1.0 / 3f64.sqrt();
        assert!(geom::distance(n[0], [s, s, s]) < 1e-12);
        // Corner 1 touches [0,2,1],[1,2,3] on z=0, [0,1,4],[1,5,4] on y=0 and only [1,3,5] on x=1:
        // sum = (1,-2,-2), normal (1,-2,-2)/3.
        assert!(geom::distance(n[1], [1.0 / 3.0, -2.0 / 3.0, -2.0 / 3.0]) < 1e-12);
    }

    #[test]
    fn orphan_vertices_are_an_error() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0; 3]], vec![[0, 1, 2]])
            .unwrap();
        let err = vertex_normals(&m).unwrap_err().to_string();
        assert!(err.contains("[3]"), "{err}");
    }

    #[test]
    fn vertex_areas_split_faces_in_thirds() {
        let a = square().vertex_areas();
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn normals_rotate_with_the_mesh(ax in -180.0..180.0f64, ay in -180.0..180.0f64, az in -180.0..180.0f64) {
            let r = geom::rotation_xyz_deg([ax, ay, az]);
            let m = cube();
            let rotated = m.map_vertices(|v| geom::mat_vec(&r, v)).unwrap();
            let n0 = vertex_normals(&m).unwrap();
            let n1 = vertex_normals(&rotated).unwrap();
            for (a, b) in n0.iter().zip(&n1) {
                prop_assert!(geom::distance(geom::mat_vec(&r, *a), *b) < 1e-9);
            }
        }
    }
}
