use serde::{Deserialize, Serialize};

use super::CrfParams;
use crate::error::{Error, Result};
use crate::exec;
use crate::mesh::{all_pairs_geodesics, vertex_normals, GeodesicOptions, Mesh};

/// A kernel bandwidth, either in absolute units or as a fraction of a
/// per-mesh reference scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Absolute(f64),
    /// Fraction of the geodesic diameter for distance kernels, or of the
    /// feature standard deviation for the feature kernel.
    Relative(f64),
}

impl Bandwidth {
    pub fn resolve(self, reference: f64) -> f64 {
        match self {
            Bandwidth::Absolute(s) => s,
            Bandwidth::Relative(f) => f * if reference > 0.0 { reference } else { 1.0 },
        }
    }

    pub(crate) fn is_valid(self) -> bool {
        let v = match self {
            Bandwidth::Absolute(s) | Bandwidth::Relative(s) => s,
        };
        v.is_finite() && v > 0.0
    }
}

/// Dense kernel matrices over the vertices of one mesh, row-major `N x N`.
/// Diagonals hold the literal kernel values; message passing skips them.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrices {
    pub n: usize,
    pub near: Vec<f64>,
    pub far: Vec<f64>,
    pub feat: Vec<f64>,
    /// `f(x) = (position, normal)` of every vertex.
    pub features: Vec<[f64; 6]>,
    /// Resolved `sigma_near, sigma_far, sigma_feat`.
    pub sigma: [f64; 3],
    /// Multipliers of the near, far and feature terms. All ones unless the
    /// kernels were normalized.
    pub scale: [f64; 3],
}

impl KernelMatrices {
    /// Kernels from explicit distances and features. `distances` is row-major
    /// `N x N`; infinite entries are allowed.
    pub fn from_parts(distances: &[f64], features: Vec<[f64; 6]>, sigma: [f64; 3], normalize: bool) -> Result<Self> {
        let n = features.len();
        if distances.len() != n * n {
            return Err(Error::Dimension(format!("{} distances for {n} vertices", distances.len())));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation(format!("kernel bandwidths must be positive, got {sigma:?}")));
        }
        let rows = exec::map_chunks(n, exec::CHUNK / 4, |range| {
            let mut near = Vec::with_capacity(range.len() * n);
            let mut far = Vec::with_capacity(range.len() * n);
            let mut feat = Vec::with_capacity(range.len() * n);
            for i in range {
                for j in 0..n {
                    let d = distances[i * n + j];
                    near.push((-d / sigma[0]).exp());
                    far.push(1.0 - (-d / sigma[1]).exp());
                    let fd = features[i].iter().zip(&features[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    feat.push((-fd / sigma[2]).exp());
                }
            }
            (near, far, feat)
        });
        let mut near = Vec::with_capacity(n * n);
        let mut far = Vec::with_capacity(n * n);
        let mut feat = Vec::with_capacity(n * n);
        for (a, b, c) in rows {
            near.extend(a);
            far.extend(b);
            feat.extend(c);
        }
        let mut out = KernelMatrices { n, near, far, feat, features, sigma, scale: [1.0; 3] };
        if normalize {
            out.scale = [
                inverse_mean_row_sum(&out.near, n),
                inverse_mean_row_sum(&out.far, n),
                inverse_mean_row_sum(&out.feat, n),
            ];
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(near, far, feat)` at `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> [f64; 3] {
        let k = i * self.n + j;
        [self.near[k], self.far[k], self.feat[k]]
    }

    /// Unscaled messages `sum_{j != i} K_k(i, j) x(j, .)` for the three
    /// kernels, each `N x width` row-major.
    pub(crate) fn messages(&self, x: &[f64], width: usize) -> [Vec<f64>; 3] {
        let n = self.n;
        let parts = exec::map_chunks(n, exec::CHUNK / 4, |range| {
            let mut out = [vec![0.0; range.len() * width], vec![0.0; range.len() * width], vec![0.0; range.len() * width]];
            for (r, i) in range.enumerate() {
                let row = i * n;
                let (m0, rest) = out.split_at_mut(1);
                let (m1, m2) = rest.split_at_mut(1);
                let m0 = &mut m0[0][r * width..(r + 1) * width];
                let m1 = &mut m1[0][r * width..(r + 1) * width];
                let m2 = &mut m2[0][r * width..(r + 1) * width];
                for j in (0..i).chain(i + 1..n) {
                    let (a, b, c) = (self.near[row + j], self.far[row + j], self.feat[row + j]);
                    let xj = &x[j * width..(j + 1) * width];
                    for l in 0..width {
                        m0[l] += a * xj[l];
                        m1[l] += b * xj[l];
                        m2[l] += c * xj[l];
                    }
                }
            }
            out
        });
        let mut out = [Vec::with_capacity(n * width), Vec::with_capacity(n * width), Vec::with_capacity(n * width)];
        for [a, b, c] in parts {
            out[0].extend(a);
            out[1].extend(b);
            out[2].extend(c);
        }
        out
    }
}

/// One over the mean off-diagonal row sum, or 1 for an all-zero kernel.
fn inverse_mean_row_sum(k: &[f64], n: usize) -> f64 {
    if n < 2 {
        return 1.0;
    }
    let total: f64 = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() - k[i * n + i]).sum();
    let mean = total / n as f64;
    if mean > 0.0 {
        1.0 / mean
    } else {
        1.0
    }
}

/// Per-vertex features `(x, n(x))`; normals are computed when missing.
pub fn vertex_features(mesh: &Mesh) -> Result<Vec<[f64; 6]>> {
    let computed;
    let normals = match mesh.normals() {
        Some(n) => n,
        None => {
            computed = vertex_normals(mesh)?;
            &computed
        }
    };
    Ok(mesh
        .vertices()
        .iter()
        .zip(normals)
        .map(|(p, n)| [p[0], p[1], p[2], n[0], n[1], n[2]])
        .collect())
}

/// Root mean squared distance of the features from their mean.
fn feature_spread(features: &[[f64; 6]]) -> f64 {
    if features.is_empty() {
        return 0.0;
    }
    let n = features.len() as f64;
    let mut mean = [0.0; 6];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x / n;
        }
    }
    let var: f64 = features
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Build the near, far and feature kernels of `mesh` from graph geodesics.
/// Vertex pairs that are disconnected or beyond the cutoff get `d = inf`.
pub fn build_kernels(mesh: &Mesh, params: &CrfParams) -> Result<KernelMatrices> {
    params.validate()?;
    let features = vertex_features(mesh)?;
    let mut d = all_pairs_geodesics(mesh, GeodesicOptions::default());
    let diameter = d.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
    if let Some(c) = params.cutoff {
        let c = c.resolve(diameter);
        for x in d.iter_mut().filter(|x| **x > c) {
            *x = f64::INFINITY;
        }
    }
    let sigma = [
        params.sigma_near.resolve(diameter),
        params.sigma_far.resolve(diameter),
        params.sigma_feat.resolve(feature_spread(&features)),
    ];
    KernelMatrices::from_parts(&d, features, sigma, params.normalize_kernels)
}
