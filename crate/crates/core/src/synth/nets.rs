//! Naive surface nets: one vertex per grid cell crossed by the zero level set,
//! one quad per crossed grid edge.

use crate::exec;
use crate::geom::{self, Vec3};

/// Regular sampling lattice with `dims` cells per axis.
pub(crate) struct Grid {
    pub origin: Vec3,
    pub cell: f64,
    pub dims: [usize; 3],
}

impl Grid {
    fn point_index(&self, p: [usize; 3]) -> usize {
        (p[2] * (self.dims[1] + 1) + p[1]) * (self.dims[0] + 1) + p[0]
    }

    fn cell_index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn position(&self, p: [usize; 3]) -> Vec3 {
        [
            self.origin[0] + p[0] as f64 * self.cell,
            self.origin[1] + p[1] as f64 * self.cell,
            self.origin[2] + p[2] as f64 * self.cell,
        ]
    }

    pub fn point_count(&self) -> usize {
        (self.dims[0] + 1) * (self.dims[1] + 1) * (self.dims[2] + 1)
    }
}

const CUBE_EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// Extract the `sdf < 0` boundary. Triangles wind counter-clockwise seen from
/// outside. Every vertex belongs to at least one triangle as long as the field
/// is positive on the outer layer of grid points.
pub(crate) fn extract<F>(grid: &Grid, sdf: F) -> (Vec<Vec3>, Vec<[usize; 3]>)
where
    F: Fn(Vec3) -> f64 + Sync + Send,
{
    let [nx, ny, nz] = grid.dims;
    let values = exec::map_range(grid.point_count(), |i| {
        let x = i % (nx + 1);
        let y = (i / (nx + 1)) % (ny + 1);
        let z = i / ((nx + 1) * (ny + 1));
        sdf(grid.position([x, y, z]))
    });
    let inside = |p: [usize; 3]| values[grid.point_index(p)] < 0.0;

    let mut cell_vertex = vec![usize::MAX; nx * ny * nz];
    let mut vertices = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let corners: [[usize; 3]; 8] =
                    std::array::from_fn(|k| [x + (k & 1), y + ((k >> 1) & 1), z + ((k >> 2) & 1)]);
                let vals = corners.map(|c| values[grid.point_index(c)]);
                let n_in = vals.iter().filter(|&&v| v < 0.0).count();
                if n_in == 0 || n_in == 8 {
                    continue;
                }
                let mut sum = [0.0; 3];
                let mut count = 0.0;
                for &(a, b) in &CUBE_EDGES {
                    if (vals[a] < 0.0) == (vals[b] < 0.0) {
                        continue;
                    }
                    let t = vals[a] / (vals[a] - vals[b]);
                    let pa = grid.position(corners[a]);
                    let pb = grid.position(corners[b]);
                    sum = geom::add(sum, geom::add(pa, geom::scale(geom::sub(pb, pa), t)));
                    count += 1.0;
                }
                cell_vertex[grid.cell_index([x, y, z])] = vertices.len();
                vertices.push(geom::scale(sum, 1.0 / count));
            }
        }
    }

    let mut faces = Vec::new();
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for z in 0..=nz {
            for y in 0..=ny {
                for x in 0..=nx {
                    let p = [x, y, z];
                    if p[axis] >= grid.dims[axis] || p[b] == 0 || p[b] >= grid.dims[b] || p[c] == 0 || p[c] >= grid.dims[c] {
                        continue;
                    }
                    let mut q = p;
                    q[axis] += 1;
                    let (in0, in1) = (inside(p), inside(q));
                    if in0 == in1 {
                        continue;
                    }
                    let cell = |db: usize, dc: usize| {
                        let mut k = p;
                        k[b] = k[b] - 1 + db;
                        k[c] = k[c] - 1 + dc;
                        cell_vertex[grid.cell_index(k)]
                    };
                    // counter-clockwise around +axis since b x c = axis
                    let mut quad = [cell(0, 0), cell(1, 0), cell(1, 1), cell(0, 1)];
                    if !in0 {
                        quad.reverse();
                    }
                    let d02 = geom::distance(vertices[quad[0]], vertices[quad[2]]);
                    let d13 = geom::distance(vertices[quad[1]], vertices[quad[3]]);
                    if d02 <= d13 {
                        faces.push([quad[0], quad[1], quad[2]]);
                        faces.push([quad[0], quad[2], quad[3]]);
                    } else {
                        faces.push([quad[0], quad[1], quad[3]]);
                        faces.push([quad[1], quad[2], quad[3]]);
                    }
                }
            }
        }
    }
    (vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_is_closed_and_outward() {
        let grid = Grid { origin: [-1.5; 3], cell: 0.25, dims: [12; 3] };
        let (v, f) = extract(&grid, |p| geom::norm(p) - 1.0);
        assert!(!v.is_empty());
        // closed: every undirected edge is shared by exactly two faces, in opposite directions
        let mut directed = std::collections::HashMap::new();
        for t in &f {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &n) in &directed {
            assert_eq!(n, 1);
            assert_eq!(directed.get(&(b, a)), Some(&1));
        }
        // signed volume is positive for outward winding
        let vol: f64 = f
            .iter()
            .map(|t| geom::dot(v[t[0]], geom::cross(v[t[1]], v[t[2]])) / 6.0)
            .sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!(vol > 0.0 && (vol - exact).abs() / exact < 0.15, "{vol}");
    }
}
