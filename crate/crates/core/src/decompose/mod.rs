//! Shape decomposition into 3D augmented views.
//!
//! Cameras sit on a ring around the shape and look at its centroid. Each
//! camera renders an orthographic range scan with a software z-buffer; the
//! foreground pixels are lifted back to 3D and connected in the image grid
//! pattern, giving a sub-mesh with uniform vertex density, a per-vertex
//! `(position, normal)` signal and a map back to source-mesh vertices.

mod raster;
mod view;

pub use raster::{render_range_scan, Pixel, RangeScan};
pub use view::{build_view, View};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::geom::{self, Vec3};
use crate::mesh::Mesh;

/// Camera ring radius as a multiple of the bounding-sphere radius.
pub const RING_RADIUS_FACTOR: f64 = 1.5;
/// Relative margin added around the bounding sphere when sizing the image plane.
pub const FRUSTUM_MARGIN: f64 = 0.05;

/// One camera of the ring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    /// 1-based index `m` on the ring.
    pub index: usize,
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
}

/// Orthonormal camera basis. `forward` points from the camera into the scene;
/// image columns grow along `right` and image rows grow along `-up`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
}

impl Viewpoint {
    pub fn new(index: usize, position: Vec3, look_at: Vec3, up: Vec3) -> Result<Self> {
        let vp = Viewpoint {
            index,
            position,
            look_at,
            up,
        };
        vp.frame()?;
        Ok(vp)
    }

    pub fn frame(&self) -> Result<CameraFrame> {
        let forward = geom::normalize(geom::sub(self.look_at, self.position))
            .ok_or_else(|| Error::Validation("viewpoint coincides with its look-at point".into()))?;
        let up = geom::normalize(self.up).ok_or_else(|| Error::Validation("zero up vector".into()))?;
        let right = geom::normalize(geom::cross(forward, up))
            .ok_or_else(|| Error::Validation("up vector is parallel to the viewing direction".into()))?;
        Ok(CameraFrame {
            origin: self.position,
            right,
            up: geom::cross(right, forward),
            forward,
        })
    }
}

impl CameraFrame {
    /// `(x, y, depth)` of a world point in camera coordinates.
    #[inline]
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = geom::sub(p, self.origin);
        [geom::dot(d, self.right), geom::dot(d, self.up), geom::dot(d, self.forward)]
    }

    #[inline]
    pub fn to_world(&self, c: Vec3) -> Vec3 {
        geom::add(
            self.origin,
            geom::add(
                geom::add(geom::scale(self.right, c[0]), geom::scale(self.up, c[1])),
                geom::scale(self.forward, c[2]),
            ),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeOptions {
    /// Number of views `M`.
    pub views: usize,
    /// Scan width `U` in pixels (columns).
    pub width: usize,
    /// Scan height `V` in pixels (rows).
    pub height: usize,
    /// Normal of the camera ring plane.
    pub up_axis: Vec3,
    /// Maximum depth spread inside a 2x2 pixel block that still yields faces.
    /// `None` picks it from the scan (see [`build_view`]).
    pub discontinuity_threshold: Option<f64>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            views: 10,
            width: 128,
            height: 128,
            up_axis: [0.0, 1.0, 0.0],
            discontinuity_threshold: None,
        }
    }
}

/// `M` cameras equally spaced on a horizontal ring of radius 1.5x the
/// bounding-sphere radius around the centroid, all looking at the centroid.
/// Camera `m` sits at azimuth `360 (m - 1) / M` degrees.
pub fn generate_viewpoints(mesh: &Mesh, count: usize, up_axis: Vec3) -> Result<Vec<Viewpoint>> {
    if count == 0 {
        return Err(Error::Config("at least one view is required".into()));
    }
    if mesh.is_empty() {
        return Err(Error::Validation("cannot place viewpoints around an empty mesh".into()));
    }
    let center = mesh.centroid();
    let radius = mesh.radius_about(center);
    if !(radius > 0.0) {
        return Err(Error::Validation("mesh has zero spatial extent".into()));
    }
    let up = geom::normalize(up_axis).ok_or_else(|| Error::Config("zero up axis".into()))?;
    let helper = if up[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let a = geom::normalize(geom::sub(helper, geom::scale(up, geom::dot(helper, up))))
        .expect("helper axis is not parallel to up");
    let b = geom::cross(up, a);
    let ring = RING_RADIUS_FACTOR * radius;
    (0..count)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let offset = geom::add(geom::scale(a, ring * theta.cos()), geom::scale(b, ring * theta.sin()));
            Viewpoint::new(k + 1, geom::add(center, offset), center, up)
        })
        .collect()
}

/// Render and lift all `M` views. Views are independent and built in parallel.
pub fn decompose_shape(mesh: &Mesh, options: &DecomposeOptions) -> Result<Vec<View>> {
    if options.width < 2 || options.height < 2 {
        return Err(Error::Config("scan resolution must be at least 2x2".into()));
    }
    let viewpoints = generate_viewpoints(mesh, options.views, options.up_axis)?;
    exec::map_range(viewpoints.len(), |m| {
        let scan = render_range_scan(mesh, &viewpoints[m], options.width, options.height)?;
        build_view(&scan, mesh, &viewpoints[m], options.discontinuity_threshold)
    })
    .into_iter()
    .collect()
}

/// Fraction of source vertices matched by at least one view vertex.
pub fn coverage(views: &[View], vertex_count: usize) -> f64 {
    let mut hit = vec![false; vertex_count];
    for v in views {
        for &t in &v.correspondence {
            hit[t] = true;
        }
    }
    hit.iter().filter(|&&h| h).count() as f64 / vertex_count.max(1) as f64
}
