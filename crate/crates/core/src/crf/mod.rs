//! Dense mesh CRF: energy, mean-field inference and parameter learning.
//!
//! The pairwise potential between vertices `i != j` with labels `a, b` is
//! `mu(a, b) * (w_near s_near K_near + far_sign w_far s_far K_far + w_feat s_feat K_feat)`
//! where `s_*` are the kernel scales of [`KernelMatrices`] (all one unless the
//! kernels are normalized).

mod inference;
mod kernels;
mod train;

use serde::{Deserialize, Serialize};

pub use inference::{mean_field_backward, mean_field_forward, mean_field_infer, CrfGradient, MeanFieldTrace};
pub use kernels::{build_kernels, vertex_features, Bandwidth, KernelMatrices};
pub use train::{crf_loss_and_gradient, train_crf, CrfSample, CrfTrainOptions};

use crate::aggregate::AggregateResult;
use crate::error::{Error, Result};
use crate::optim::Params;
use crate::prob::ProbabilityField;
use crate::viewnet::LOG_CLAMP;

pub const MU_BLOCK: &str = "crf.mu";
pub const WEIGHT_BLOCK: &str = "crf.w";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub classes: usize,
    /// Row-major `L x L` label compatibility.
    pub mu: Vec<f64>,
    pub w_near: f64,
    pub w_far: f64,
    pub w_feat: f64,
    pub sigma_near: Bandwidth,
    pub sigma_far: Bandwidth,
    pub sigma_feat: Bandwidth,
    /// Geodesic radius beyond which vertex pairs count as infinitely far.
    #[serde(default)]
    pub cutoff: Option<Bandwidth>,
    pub iterations: usize,
    /// Sign of the far-kernel term, `-1` or `+1`.
    pub far_sign: f64,
    /// Scale each kernel so its mean off-diagonal row sum is one.
    pub normalize_kernels: bool,
}

impl CrfParams {
    /// Identity compatibility, unit weights and the default bandwidths.
    pub fn identity(classes: usize) -> Self {
        let mut mu = vec![0.0; classes * classes];
        for l in 0..classes {
            mu[l * classes + l] = 1.0;
        }
        CrfParams {
            classes,
            mu,
            w_near: 1.0,
            w_far: 1.0,
            w_feat: 1.0,
            sigma_near: Bandwidth::Relative(0.05),
            sigma_far: Bandwidth::Relative(0.5),
            sigma_feat: Bandwidth::Relative(0.5),
            cutoff: None,
            iterations: 5,
            far_sign: -1.0,
            normalize_kernels: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::Validation("CRF needs at least one class".into()));
        }
        if self.mu.len() != self.classes * self.classes {
            return Err(Error::Validation(format!(
                "compatibility has {} entries, expected {}",
                self.mu.len(),
                self.classes * self.classes
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Validation("mean-field iterations must be at least 1".into()));
        }
        if self.far_sign != 1.0 && self.far_sign != -1.0 {
            return Err(Error::Validation(format!("far_sign must be -1 or +1, got {}", self.far_sign)));
        }
        for (name, b) in [("sigma_near", self.sigma_near), ("sigma_far", self.sigma_far), ("sigma_feat", self.sigma_feat)] {
            if !b.is_valid() {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if self.cutoff.is_some_and(|c| !c.is_valid()) {
            return Err(Error::Validation("cutoff must be positive".into()));
        }
        if self.mu.iter().chain([&self.w_near, &self.w_far, &self.w_feat]).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("CRF parameters".into()));
        }
        Ok(())
    }

    pub fn mu(&self, a: u32, b: u32) -> f64 {
        self.mu[(a as usize - 1) * self.classes + b as usize - 1]
    }

    /// Effective multipliers of the near, far and feature kernels.
    pub fn coefficients(&self, kernels: &KernelMatrices) -> [f64; 3] {
        [
            self.w_near * kernels.scale[0],
            self.far_sign * self.w_far * kernels.scale[1],
            self.w_feat * kernels.scale[2],
        ]
    }

    /// The learnable values as blocks `crf.mu` and `crf.w = (near, far, feat)`.
    pub fn learnable(&self) -> Params {
        let mut p = Params::new();
        p.push(MU_BLOCK, self.mu.clone());
        p.push(WEIGHT_BLOCK, vec![self.w_near, self.w_far, self.w_feat]);
        p
    }

    pub fn set_learnable(&mut self, p: &Params) -> Result<()> {
        let mu = p.by_name(MU_BLOCK).ok_or_else(|| Error::Validation(format!("missing block '{MU_BLOCK}'")))?;
        let w = p.by_name(WEIGHT_BLOCK).ok_or_else(|| Error::Validation(format!("missing block '{WEIGHT_BLOCK}'")))?;
        if mu.len() != self.mu.len() || w.len() != 3 {
            return Err(Error::Dimension("CRF parameter blocks have the wrong size".into()));
        }
        self.mu.copy_from_slice(mu);
        [self.w_near, self.w_far, self.w_feat] = [w[0], w[1], w[2]];
        Ok(())
    }

    /// Symmetrized near-kernel affinity `-w_near (mu + mu^T) / 2`, row-major
    /// `L x L`. Larger values make the two labels cheaper to place side by side.
    pub fn near_affinity(&self) -> Vec<f64> {
        let l = self.classes;
        let mut out = vec![0.0; l * l];
        for a in 0..l {
            for b in 0..l {
                out[a * l + b] = -self.w_near * 0.5 * (self.mu[a * l + b] + self.mu[b * l + a]);
            }
        }
        out
    }
}

/// Per-vertex, per-label unary costs, row-major `N x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Unary {
    vertex_count: usize,
    classes: usize,
    values: Vec<f64>,
}

impl Unary {
    pub fn new(vertex_count: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != vertex_count * classes || classes == 0 {
            return Err(Error::Dimension(format!("{} unary costs for {vertex_count} x {classes}", values.len())));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("unary costs".into()));
        }
        Ok(Unary { vertex_count, classes, values })
    }

    /// `-ln(max(p, 1e-12))` of every probability.
    pub fn from_pdf(pdf: &ProbabilityField) -> Self {
        Unary {
            vertex_count: pdf.vertex_count(),
            classes: pdf.classes(),
            values: pdf.values().iter().map(|&p| -p.max(LOG_CLAMP).ln()).collect(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.values[v * self.classes..(v + 1) * self.classes]
    }
}

pub fn unary_from_aggregate(agg: &AggregateResult) -> Unary {
    Unary::from_pdf(&agg.pdf)
}

/// Pairwise potential of labels `a` at vertex `i` and `b` at vertex `j`.
pub fn pairwise_potential(a: u32, b: u32, i: usize, j: usize, params: &CrfParams, kernels: &KernelMatrices) -> Result<f64> {
    if i == j {
        return Err(Error::Validation(format!("pairwise potential of vertex {i} with itself")));
    }
    if i >= kernels.n || j >= kernels.n {
        return Err(Error::Dimension(format!("vertex pair ({i}, {j}) outside {} vertices", kernels.n)));
    }
    check_label(a, params.classes)?;
    check_label(b, params.classes)?;
    let c = params.coefficients(kernels);
    let k = kernels.at(i, j);
    Ok(params.mu(a, b) * (c[0] * k[0] + c[1] * k[1] + c[2] * k[2]))
}

fn check_label(l: u32, classes: usize) -> Result<()> {
    if l == 0 || l as usize > classes {
        return Err(Error::Validation(format!("label {l} is outside 1..={classes}")));
    }
    Ok(())
}

/// Unary costs plus the pairwise potential of every unordered vertex pair.
pub fn crf_energy(labels: &[u32], unary: &Unary, params: &CrfParams, kernels: &KernelMatrices) -> Result<f64> {
    let n = labels.len();
    if unary.vertex_count() != n || kernels.n != n || unary.classes() != params.classes {
        return Err(Error::Dimension("labeling, unary, kernels and parameters disagree in size".into()));
    }
    for &l in labels {
        check_label(l, params.classes)?;
    }
    let c = params.coefficients(kernels);
    let mut e: f64 = labels.iter().enumerate().map(|(v, &l)| unary.row(v)[l as usize - 1]).sum();
    for i in 0..n {
        for j in i + 1..n {
            let k = kernels.at(i, j);
            e += params.mu(labels[i], labels[j]) * (c[0] * k[0] + c[1] * k[1] + c[2] * k[2]);
        }
    }
    Ok(e)
}

/// Most probable label per vertex, lowest label on ties.
pub fn map_labeling(q: &ProbabilityField) -> Vec<u32> {
    q.argmax()
}
