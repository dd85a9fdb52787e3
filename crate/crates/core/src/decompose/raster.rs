use super::{CameraFrame, Viewpoint, FRUSTUM_MARGIN};
use crate::error::Result;
use crate::exec;
use crate::geom::Vec3;
use crate::mesh::Mesh;

/// Rows per parallel work band.
const BAND_ROWS: usize = 8;

/// One z-buffer cell. Background pixels have infinite depth and no hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub depth: f64,
    pub vertex: Option<usize>,
    pub face: Option<usize>,
}

impl Pixel {
    const BACKGROUND: Pixel = Pixel {
        depth: f64::INFINITY,
        vertex: None,
        face: None,
    };

    pub fn is_foreground(&self) -> bool {
        self.vertex.is_some()
    }
}

/// Orthographic depth image. Pixel `(row, col)` lives at `row * width + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub width: usize,
    pub height: usize,
    /// Half side of the square image plane in model units.
    pub half_extent: f64,
    pub pixels: Vec<Pixel>,
}

impl RangeScan {
    pub fn pixel(&self, row: usize, col: usize) -> &Pixel {
        &self.pixels[row * self.width + col]
    }

    pub fn depth(&self, row: usize, col: usize) -> f64 {
        self.pixel(row, col).depth
    }

    /// Camera-plane coordinates `(x, y)` of a pixel centre.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        pixel_center(self.half_extent, self.width, self.height, row, col)
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_foreground()).count()
    }

    /// Pixel spacing along columns and rows.
    pub fn pixel_size(&self) -> (f64, f64) {
        (
            2.0 * self.half_extent / self.width as f64,
            2.0 * self.half_extent / self.height as f64,
        )
    }
}

#[inline]
pub(crate) fn pixel_center(h: f64, width: usize, height: usize, row: usize, col: usize) -> (f64, f64) {
    let x = -h + (col as f64 + 0.5) * (2.0 * h / width as f64);
    let y = h - (row as f64 + 0.5) * (2.0 * h / height as f64);
    (x, y)
}

/// Half side of the image plane for a mesh seen from `vp`.
pub(crate) fn frustum_half_extent(mesh: &Mesh, vp: &Viewpoint) -> f64 {
    (1.0 + FRUSTUM_MARGIN) * mesh.radius_about(vp.look_at)
}

struct ProjectedTriangle {
    face: usize,
    ids: [usize; 3],
    cam: [Vec3; 3],
    area: f64,
    rows: (usize, usize),
    cols: (usize, usize),
}

#[inline]
fn edge(a: Vec3, b: Vec3, px: f64, py: f64) -> f64 {
    (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
}

/// Render a range scan of `mesh` from `vp` with `width x height` pixels.
///
/// Every pixel centre is tested against every triangle covering it; the
/// strictly smallest positive camera depth wins, so equal depths keep the
/// lowest face index. The recorded vertex is the triangle corner with the
/// largest barycentric weight (ties to the lowest vertex index).
pub fn render_range_scan(mesh: &Mesh, vp: &Viewpoint, width: usize, height: usize) -> Result<RangeScan> {
    let frame = vp.frame()?;
    let h = frustum_half_extent(mesh, vp);
    let scan = RangeScan {
        width,
        height,
        half_extent: h,
        pixels: vec![Pixel::BACKGROUND; width * height],
    };
    if h <= 0.0 || width == 0 || height == 0 {
        return Ok(scan);
    }
    let triangles = project(mesh, &frame, h, width, height);
    let mut scan = scan;
    exec::for_each_chunk_mut(&mut scan.pixels, width, BAND_ROWS, |first_row, band| {
        let last_row = first_row + band.len() / width;
        for tri in &triangles {
            if tri.rows.1 < first_row || tri.rows.0 >= last_row {
                continue;
            }
            let r0 = tri.rows.0.max(first_row);
            let r1 = tri.rows.1.min(last_row - 1);
            for row in r0..=r1 {
                for col in tri.cols.0..=tri.cols.1 {
                    let (px, py) = pixel_center(h, width, height, row, col);
                    let [a, b, c] = tri.cam;
                    let l0 = edge(b, c, px, py) / tri.area;
                    let l1 = edge(c, a, px, py) / tri.area;
                    let l2 = edge(a, b, px, py) / tri.area;
                    if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                        continue;
                    }
                    let depth = l0 * a[2] + l1 * b[2] + l2 * c[2];
                    let cell = &mut band[(row - first_row) * width + col];
                    if depth < 0.0 || depth >= cell.depth {
                        continue;
                    }
                    *cell = Pixel {
                        depth,
                        vertex: Some(dominant_vertex([l0, l1, l2], tri.ids)),
                        face: Some(tri.face),
                    };
                }
            }
        }
    });
    Ok(scan)
}

/// Corner with the largest barycentric weight; ties go to the lowest vertex index.
pub(crate) fn dominant_vertex(weights: [f64; 3], ids: [usize; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if weights[k] > weights[best] || (weights[k] == weights[best] && ids[k] < ids[best]) {
            best = k;
        }
    }
    ids[best]
}

fn project(mesh: &Mesh, frame: &CameraFrame, h: f64, width: usize, height: usize) -> Vec<ProjectedTriangle> {
    let cam: Vec<Vec3> = mesh.vertices().iter().map(|&p| frame.to_camera(p)).collect();
    let to_col = |x: f64| (x + h) / (2.0 * h) * width as f64 - 0.5;
    let to_row = |y: f64| (h - y) / (2.0 * h) * height as f64 - 0.5;
    mesh.faces()
        .iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let p = [cam[f[0]], cam[f[1]], cam[f[2]]];
            let area = edge(p[0], p[1], p[2][0], p[2][1]);
            if area == 0.0 || p.iter().all(|q| q[2] < 0.0) {
                return None;
            }
            let xs = p.map(|q| q[0]);
            let ys = p.map(|q| q[1]);
            let min = |v: [f64; 3]| v[0].min(v[1]).min(v[2]);
            let max = |v: [f64; 3]| v[0].max(v[1]).max(v[2]);
            // widen by one pixel; the exact inside test decides coverage
            let c0 = (to_col(min(xs)).floor() - 1.0).max(0.0);
            let c1 = (to_col(max(xs)).ceil() + 1.0).min(width as f64 - 1.0);
            let r0 = (to_row(max(ys)).floor() - 1.0).max(0.0);
            let r1 = (to_row(min(ys)).ceil() + 1.0).min(height as f64 - 1.0);
            if c0 > c1 || r0 > r1 {
                return None;
            }
            Some(ProjectedTriangle {
                face: fi,
                ids: *f,
                cam: p,
                area,
                rows: (r0 as usize, r1 as usize),
                cols: (c0 as usize, c1 as usize),
            })
        })
        .collect()
}
