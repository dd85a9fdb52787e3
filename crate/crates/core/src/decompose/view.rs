use std::path::Path;

use serde::Serialize;

use super::raster::RangeScan;
use super::Viewpoint;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh, PlyWriteOptions};

/// Auto threshold = this multiple of the median foreground depth step.
const DISCONTINUITY_MEDIAN_FACTOR: f64 = 5.0;
/// Lower bound on the auto threshold, in pixel spacings. A surface facing the
/// camera has zero depth steps and still has to be meshed.
const DISCONTINUITY_FLOOR_PIXELS: f64 = 2.0;

/// A grid-connected sub-mesh lifted from one range scan.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub mesh: Mesh,
    /// `(x, y, z, nx, ny, nz)` per view vertex.
    pub signal: Vec<[f64; 6]>,
    /// Source-mesh vertex for every view vertex.
    pub correspondence: Vec<usize>,
    /// `(row, col)` scan pixel of every view vertex.
    pub grid_pos: Vec<(usize, usize)>,
    pub viewpoint: Viewpoint,
    pub width: usize,
    pub height: usize,
}

impl View {
    pub fn len(&self) -> usize {
        self.correspondence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondence.is_empty()
    }

    /// Flattened `len x 6` signal matrix.
    pub fn signal_matrix(&self) -> Vec<f64> {
        self.signal.iter().flatten().copied().collect()
    }

    /// Ground-truth labels pulled back from the source mesh through the correspondence.
    pub fn pull_labels(&self, source_labels: &[u32]) -> Vec<u32> {
        self.correspondence.iter().map(|&t| source_labels[t]).collect()
    }

    /// Debug dump: `<stem>.ply` with the view mesh and `<stem>.json` with
    /// `{"t": [...], "grid": [[r, c], ...]}`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Dump<'a> {
            t: &'a [usize],
            grid: Vec<[usize; 2]>,
        }
        mesh::save_ply(&dir.join(format!("{stem}.ply")), &self.mesh, &PlyWriteOptions::default())?;
        let dump = Dump {
            t: &self.correspondence,
            grid: self.grid_pos.iter().map(|&(r, c)| [r, c]).collect(),
        };
        let path = dir.join(format!("{stem}.json"));
        std::fs::write(&path, serde_json::to_string(&dump)?).map_err(|e| Error::io(&path, e))
    }
}

/// Median absolute depth step between 4-adjacent foreground pixels.
fn median_depth_step(scan: &RangeScan) -> f64 {
    let mut steps = Vec::new();
    for r in 0..scan.height {
        for c in 0..scan.width {
            let d = scan.depth(r, c);
            if !d.is_finite() {
                continue;
            }
            if c + 1 < scan.width && scan.depth(r, c + 1).is_finite() {
                steps.push((scan.depth(r, c + 1) - d).abs());
            }
            if r + 1 < scan.height && scan.depth(r + 1, c).is_finite() {
                steps.push((scan.depth(r + 1, c) - d).abs());
            }
        }
    }
    if steps.is_empty() {
        return 0.0;
    }
    let mid = steps.len() / 2;
    *steps.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// The depth-spread threshold used when none is given: five times the median
/// foreground depth step, but never below two pixel spacings.
pub(crate) fn auto_threshold(scan: &RangeScan) -> f64 {
    let (du, dv) = scan.pixel_size();
    (DISCONTINUITY_MEDIAN_FACTOR * median_depth_step(scan)).max(DISCONTINUITY_FLOOR_PIXELS * du.max(dv))
}

/// Lift a range scan to a grid mesh.
///
/// View vertices are the foreground pixels in row-major order, placed at the
/// back-projected hit points. Each 2x2 block of foreground pixels whose depth
/// spread (max - min) is below `threshold` contributes two triangles wound
/// towards the camera. Normals are area-weighted normals of the view mesh;
/// vertices without any face fall back to the direction towards the camera.
pub fn build_view(scan: &RangeScan, mesh: &Mesh, vp: &Viewpoint, threshold: Option<f64>) -> Result<View> {
    let frame = vp.frame()?;
    let n_src = mesh.vertex_count();
    let (w, h) = (scan.width, scan.height);
    if scan.pixels.len() != w * h {
        return Err(Error::Dimension("scan pixel buffer does not match its size".into()));
    }

    let mut index = vec![usize::MAX; w * h];
    let mut positions = Vec::new();
    let mut correspondence = Vec::new();
    let mut grid_pos = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let px = scan.pixel(r, c);
            let Some(t) = px.vertex else { continue };
            if t >= n_src {
                return Err(Error::Validation(format!(
                    "scan pixel ({r}, {c}) maps to vertex {t} but the mesh has {n_src}"
                )));
            }
            let (x, y) = scan.pixel_center(r, c);
            index[r * w + c] = positions.len();
            positions.push(frame.to_world([x, y, px.depth]));
            correspondence.push(t);
            grid_pos.push((r, c));
        }
    }

    let threshold = threshold.unwrap_or_else(|| auto_threshold(scan));
    let mut faces = Vec::new();
    for r in 0..h.saturating_sub(1) {
        for c in 0..w.saturating_sub(1) {
            let ids = [r * w + c, r * w + c + 1, (r + 1) * w + c, (r + 1) * w + c + 1];
            if ids.iter().any(|&p| index[p] == usize::MAX) {
                continue;
            }
            let depths = ids.map(|p| scan.pixels[p].depth);
            let spread = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - depths.iter().copied().fold(f64::INFINITY, f64::min);
            if !(spread < threshold) {
                continue;
            }
            let [tl, tr, bl, br] = ids.map(|p| index[p]);
            faces.push([tl, bl, tr]);
            faces.push([tr, bl, br]);
        }
    }

    let toward_camera = geom::scale(frame.forward, -1.0);
    let normals: Vec<Vec3> = mesh::accumulate_normals(&positions, &faces)
        .into_iter()
        .map(|n| n.unwrap_or(toward_camera))
        .collect();
    let signal = positions
        .iter()
        .zip(&normals)
        .map(|(p, n)| [p[0], p[1], p[2], n[0], n[1], n[2]])
        .collect();
    let view_mesh = Mesh::new(positions, faces)?.with_normals(normals)?;

    Ok(View {
        mesh: view_mesh,
        signal,
        correspondence,
        grid_pos,
        viewpoint: *vp,
        width: w,
        height: h,
    })
}
