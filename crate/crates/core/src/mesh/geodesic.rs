//! Graph geodesics: Dijkstra over the mesh edge graph with Euclidean edge
//! weights. This approximates surface geodesics from above and is exact along
//! edges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Error, Result};
use crate::exec;

/// Distances from one source vertex. Unreachable vertices (and vertices beyond
/// a cutoff) hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub source: usize,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeodesicOptions {
    /// Distances strictly greater than this radius are reported as infinite.
    pub cutoff: Option<f64>,
    /// Divide all finite distances by the largest finite pairwise distance.
    pub normalize_by_diameter: bool,
}

/// Compressed adjacency of the mesh edge graph.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    targets: Vec<(usize, f64)>,
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl EdgeGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let edges = mesh.edges();
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![(0usize, 0.0); offsets[n]];
        for &(a, b) in &edges {
            let w = mesh.edge_length(a, b);
            targets[fill[a]] = (b, w);
            fill[a] += 1;
            targets[fill[b]] = (a, w);
            fill[b] += 1;
        }
        EdgeGraph { offsets, targets }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Single-source shortest paths, optionally bounded by `cutoff`.
    pub fn distances_from(&self, source: usize, cutoff: Option<f64>) -> Vec<f64> {
        let limit = cutoff.unwrap_or(f64::INFINITY);
        let mut dist = vec![f64::INFINITY; self.vertex_count()];
        let mut done = vec![false; self.vertex_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry { dist: 0.0, node: source });
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for &(next, w) in self.neighbors(node) {
                let nd = d + w;
                if nd <= limit && nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Entry { dist: nd, node: next });
                }
            }
        }
        dist
    }
}

pub fn geodesic_distances(mesh: &Mesh, source: usize, cutoff: Option<f64>) -> Result<GeodesicField> {
    if source >= mesh.vertex_count() {
        return Err(Error::Validation(format!(
            "source vertex {source} out of range for {} vertices",
            mesh.vertex_count()
        )));
    }
    Ok(GeodesicField {
        source,
        distances: EdgeGraph::new(mesh).distances_from(source, cutoff),
    })
}

/// Dense `N x N` row-major matrix of graph geodesics from every vertex.
pub fn all_pairs_geodesics(mesh: &Mesh, options: GeodesicOptions) -> Vec<f64> {
    let graph = EdgeGraph::new(mesh);
    let n = mesh.vertex_count();
    let rows = exec::map_range(n, |s| graph.distances_from(s, options.cutoff));
    let mut out: Vec<f64> = rows.into_iter().flatten().collect();
    // Path sums accumulate in opposite orders from the two ends; keep the
    // upper-triangle value so the matrix is exactly symmetric.
    for s in 0..n {
        for t in 0..s {
            out[s * n + t] = out[t * n + s];
        }
    }
    if options.normalize_by_diameter {
        let diameter = out.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
        if diameter > 0.0 {
            for d in out.iter_mut().filter(|d| d.is_finite()) {
                *d /= diameter;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 3x3 grid with unit spacing, each cell split along its main diagonal.
    fn grid3() -> Mesh {
        let mut v = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                v.push([c as f64, r as f64, 0.0]);
            }
        }
        let mut f = Vec::new();
        for r in 0..2 {
            for c in 0..2 {
                let a = r * 3 + c;
                f.push([a, a + 1, a + 4]);
                f.push([a, a + 4, a + 3]);
            }
        }
        Mesh::new(v, f).unwrap()
    }

    /// Exhaustive search over all simple paths.
    fn brute_force(mesh: &Mesh, source: usize) -> Vec<f64> {
        let n = mesh.vertex_count();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in mesh.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut best = vec![f64::INFINITY; n];
        let mut visited = vec![false; n];
        fn walk(
            v: usize,
            len: f64,
            mesh: &Mesh,
            adj: &[Vec<usize>],
            visited: &mut [bool],
            best: &mut [f64],
        ) {
            if len < best[v] {
                best[v] = len;
            }
            visited[v] = true;
            for &w in &adj[v] {
                if !visited[w] {
                    walk(w, len + mesh.edge_length(v, w), mesh, adj, visited, best);
                }
            }
            visited[v] = false;
        }
        walk(source, 0.0, mesh, &adj, &mut visited, &mut best);
        best
    }

    #[test]
    fn single_edge_and_self() {
        let m = Mesh::new(vec![[0.0; 3], [0.5, 0.0, 0.0], [0.0, 0.5, 0.0]], vec![[0, 1, 2]]).unwrap();
        let g = geodesic_distances(&m, 0, None).unwrap();
        assert_eq!(g.distances[0], 0.0);
        assert_eq!(g.distances[1], 0.5);
    }

    #[test]
    fn grid_corner_to_corner_matches_enumeration() {
        let m = grid3();
        let d = geodesic_distances(&m, 0, None).unwrap().distances;
        let oracle = brute_force(&m, 0);
        // The diagonal edges make the corner-to-corner path 2*sqrt(2).
        assert!((oracle[8] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        for (a, b) in d.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn matches_exhaustive_search_on_small_random_meshes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let n = rng.gen_range(4..=12);
            let v: Vec<_> = (0..n)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let mut f = Vec::new();
            for _ in 0..rng.gen_range(1..=n) {
                let a = rng.gen_range(0..n);
                let b = (a + rng.gen_range(1..n)) % n;
                let mut c = rng.gen_range(0..n);
                while c == a || c == b {
                    c = rng.gen_range(0..n);
                }
                f.push([a, b, c]);
            }
            let m = Mesh::new(v, f).unwrap();
            for s in 0..n {
                let d = geodesic_distances(&m, s, None).unwrap().distances;
                let oracle = brute_force(&m, s);
                for (a, b) in d.iter().zip(&oracle) {
                    assert!(a == b || (a - b).abs() <= 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn cutoff_and_disconnected_vertices_are_infinite() {
        let m = Mesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [5.0, 1.0, 0.0]],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let d = geodesic_distances(&m, 0, None).unwrap().distances;
        assert!(d[3].is_infinite() && d[4].is_infinite());
        let d = geodesic_distances(&m, 1, Some(1.2)).unwrap().distances;
        assert_eq!(d[0], 1.0);
        assert!(d[2].is_infinite()); // sqrt(2) > 1.2
        assert!(geodesic_distances(&m, 6, None).is_err());
    }

    #[test]
    fn edge_triangle_inequality_and_normalization() {
        let m = grid3();
        let opts = GeodesicOptions { cutoff: None, normalize_by_diameter: true };
        let all = all_pairs_geodesics(&m, opts);
        let max = all.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
        let raw = all_pairs_geodesics(&m, GeodesicOptions::default());
        for s in 0..9 {
            for (a, b) in m.edges() {
                let (da, db) = (raw[s * 9 + a], raw[s * 9 + b]);
                assert!((da - db).abs() <= m.edge_length(a, b) + 1e-9);
            }
            // symmetry
            for t in 0..9 {
                assert_eq!(raw[s * 9 + t], raw[t * 9 + s]);
            }
        }
    }
}
