//! Per-view classifier: intrinsic-convolution layers over grid pseudo-coordinates,
//! per-vertex fully connected layers and a softmax, trained with Adam.
//!
//! One network is shared by every view. Parameters live in a flat
//! [`Params`] vector with named blocks (`ic0.means`, `ic0.raw_precision`,
//! `ic0.mixing`, `fc0.weight`, `fc0.bias`, ...).

mod checkpoint;
mod layers;
mod pseudo;
mod train;

pub use checkpoint::{Checkpoint, CrfSection};
pub use pseudo::PseudoCoords;
pub use train::{train, Sample, StepRecord, TrainOptions};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use layers::{FcShape, IcCache, IcParams, IcShape};

use crate::decompose::View;
use crate::error::{Error, Result};
use crate::optim::Params;
use crate::prob::ProbabilityField;

/// Probabilities below this are clamped before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;
/// Channels of the view signal: position and normal.
pub const SIGNAL_CHANNELS: usize = 6;
/// Gaussian precision at initialization.
const INITIAL_PRECISION: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcSpec {
    pub channels: usize,
    /// Number of Gaussian weighting functions `J`.
    pub gaussians: usize,
    /// Neighbourhood radius in grid cells.
    pub radius: usize,
}

/// Layer sizes of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_channels: usize,
    pub ic_layers: Vec<IcSpec>,
    /// Widths of the hidden fully connected layers; the output layer has `classes` units.
    pub fc_hidden: Vec<usize>,
    pub classes: usize,
    /// Apply ReLU after the last IC layer.
    #[serde(default = "default_true")]
    pub relu_last_ic: bool,
}

fn default_true() -> bool {
    true
}

impl Architecture {
    /// `IC(6->16, J=8, r=2) -> IC(16->32, J=16, r=2) -> FC(32->64) -> FC(64->L)`.
    pub fn default_for(classes: usize) -> Self {
        Architecture {
            input_channels: SIGNAL_CHANNELS,
            ic_layers: vec![
                IcSpec { channels: 16, gaussians: 8, radius: 2 },
                IcSpec { channels: 32, gaussians: 16, radius: 2 },
            ],
            fc_hidden: vec![64],
            classes,
            relu_last_ic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.classes == 0 {
            return Err(Error::Config("input channels and classes must be positive".into()));
        }
        if self.ic_layers.iter().any(|l| l.channels == 0 || l.gaussians == 0 || l.radius == 0) {
            return Err(Error::Config("IC layers need positive channels, gaussians and radius".into()));
        }
        if self.fc_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    fn ic_shapes(&self) -> Vec<IcShape> {
        let mut cin = self.input_channels;
        let last = self.ic_layers.len().saturating_sub(1);
        self.ic_layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let s = IcShape { cin, cout: l.channels, gaussians: l.gaussians, relu: i < last || self.relu_last_ic };
                cin = l.channels;
                s
            })
            .collect()
    }

    fn fc_shapes(&self) -> Vec<FcShape> {
        let mut cin = self.ic_layers.last().map_or(self.input_channels, |l| l.channels);
        let mut out = Vec::new();
        for &w in &self.fc_hidden {
            out.push(FcShape { cin, cout: w, relu: true });
            cin = w;
        }
        out.push(FcShape { cin, cout: self.classes, relu: false });
        out
    }

    /// Exact number of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        let ic: usize = self.ic_shapes().iter().map(|s| s.gaussians * (s.cin * s.cout + 4)).sum();
        let fc: usize = self.fc_shapes().iter().map(|s| s.cout * (s.cin + 1)).sum();
        ic + fc
    }

    fn radii(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.ic_layers.iter().map(|l| l.radius).collect();
        r.sort_unstable();
        r.dedup();
        r
    }
}

/// A view prepared for the network: its signal and neighbourhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewInput {
    /// `n x input_channels`.
    pub signal: Vec<f64>,
    /// One neighbourhood set per distinct IC radius, sorted by radius.
    pub coords: Vec<PseudoCoords>,
}

impl ViewInput {
    pub fn new(view: &View, arch: &Architecture) -> Result<Self> {
        if view.is_empty() {
            return Err(Error::Validation("view has no vertices".into()));
        }
        if arch.input_channels != SIGNAL_CHANNELS {
            return Err(Error::Config(format!(
                "views carry {SIGNAL_CHANNELS} signal channels but the network expects {}",
                arch.input_channels
            )));
        }
        let coords = arch.radii().into_iter().map(|r| PseudoCoords::build(view, r)).collect::<Result<_>>()?;
        Ok(ViewInput { signal: view.signal_matrix(), coords })
    }

    pub fn vertex_count(&self) -> usize {
        self.signal.len() / SIGNAL_CHANNELS
    }

    fn coords_for(&self, radius: usize) -> &PseudoCoords {
        self.coords
            .iter()
            .find(|c| c.radius == radius)
            .expect("pseudo-coordinates exist for every IC radius")
    }

    /// Stack two inputs; neighbourhoods never cross between them.
    pub fn concat(&self, other: &ViewInput) -> ViewInput {
        let mut signal = self.signal.clone();
        signal.extend_from_slice(&other.signal);
        let coords = self.coords.iter().zip(&other.coords).map(|(a, b)| a.concat(b)).collect();
        ViewInput { signal, coords }
    }
}

/// Network weights plus their architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewNet {
    arch: Architecture,
    params: Params,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    /// Input of every layer, IC layers first.
    inputs: Vec<Vec<f64>>,
    ic: Vec<IcCache>,
    fc_pre: Vec<Vec<f64>>,
    /// Output probabilities.
    pub probs: ProbabilityField,
}

impl ViewNet {
    /// Randomly initialized network. Gaussian centres are uniform in
    /// `[-1, 1]^2`, mixing and FC weights are He-normal, biases zero.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let unit = Uniform::new_inclusive(-1.0, 1.0);
        for (i, s) in arch.ic_shapes().iter().enumerate() {
            let means = (0..2 * s.gaussians).map(|_| unit.sample(&mut rng)).collect();
            params.push(format!("ic{i}.means"), means);
            params.push(
                format!("ic{i}.raw_precision"),
                vec![layers::softplus_inverse(INITIAL_PRECISION); 2 * s.gaussians],
            );
            let std = (2.0 / (s.gaussians * s.cin) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let mixing = (0..s.gaussians * s.cin * s.cout).map(|_| normal.sample(&mut rng)).collect();
            params.push(format!("ic{i}.mixing"), mixing);
        }
        for (i, s) in arch.fc_shapes().iter().enumerate() {
            let normal = Normal::new(0.0, (2.0 / s.cin as f64).sqrt()).expect("positive std");
            params.push(format!("fc{i}.weight"), (0..s.cin * s.cout).map(|_| normal.sample(&mut rng)).collect());
            params.push(format!("fc{i}.bias"), vec![0.0; s.cout]);
        }
        debug_assert_eq!(params.len(), arch.parameter_count());
        Ok(ViewNet { arch, params })
    }

    /// Wrap existing parameters, checking their layout against the architecture.
    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        let template = ViewNet::new(arch.clone(), 0)?;
        if !template.params.same_layout(&params) {
            return Err(Error::Config("parameter blocks do not match the architecture".into()));
        }
        Ok(ViewNet { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    fn ic_params(&self, i: usize) -> IcParams<'_> {
        IcParams {
            means: self.params.block(3 * i),
            raw_precision: self.params.block(3 * i + 1),
            mixing: self.params.block(3 * i + 2),
        }
    }

    fn fc_blocks(&self, i: usize) -> (usize, usize) {
        let base = 3 * self.arch.ic_layers.len() + 2 * i;
        (base, base + 1)
    }

    fn check_input(&self, input: &ViewInput) -> Result<usize> {
        let c = self.arch.input_channels;
        let n = input.signal.len() / c;
        if n == 0 {
            return Err(Error::Validation("view has no vertices".into()));
        }
        if input.signal.len() != n * c {
            return Err(Error::Dimension(format!(
                "signal of {} values is not a multiple of {c} channels",
                input.signal.len()
            )));
        }
        for r in self.arch.radii() {
            if !input.coords.iter().any(|c| c.radius == r && c.vertex_count() == n) {
                return Err(Error::Config(format!("input lacks neighbourhoods of radius {r}")));
            }
        }
        Ok(n)
    }

    /// Forward pass keeping everything the backward pass needs.
    pub fn forward_cached(&self, input: &ViewInput) -> Result<ForwardCache> {
        let n = self.check_input(input)?;
        let mut inputs = vec![input.signal.clone()];
        let mut ic = Vec::new();
        for (i, s) in self.arch.ic_shapes().into_iter().enumerate() {
            let pc = input.coords_for(self.arch.ic_layers[i].radius);
            let (out, cache) = layers::ic_forward(inputs.last().unwrap(), pc, &self.ic_params(i), s);
            ic.push(cache);
            inputs.push(out);
        }
        let mut fc_pre = Vec::new();
        let shapes = self.arch.fc_shapes();
        let last = shapes.len() - 1;
        let mut logits = Vec::new();
        for (i, s) in shapes.into_iter().enumerate() {
            let (w, b) = self.fc_blocks(i);
            let (out, pre) = layers::fc_forward(inputs.last().unwrap(), n, self.params.block(w), self.params.block(b), s);
            fc_pre.push(pre);
            if i == last {
                logits = out;
            } else {
                inputs.push(out);
            }
        }
        let probs = ProbabilityField::from_logits(n, self.arch.classes, logits)?;
        Ok(ForwardCache { inputs, ic, fc_pre, probs })
    }

    pub fn forward(&self, input: &ViewInput) -> Result<ProbabilityField> {
        Ok(self.forward_cached(input)?.probs)
    }

    /// Prepare `view` and run the forward pass.
    pub fn forward_view(&self, view: &View) -> Result<ProbabilityField> {
        self.forward(&ViewInput::new(view, &self.arch)?)
    }

    /// Smallest `|pre-activation|` over all ReLU units for this input. Finite
    /// differences are only meaningful when it is well above the step size.
    pub fn relu_margin(&self, input: &ViewInput) -> Result<f64> {
        let cache = self.forward_cached(input)?;
        let mut margin = f64::INFINITY;
        for (s, c) in self.arch.ic_shapes().iter().zip(&cache.ic) {
            if s.relu {
                margin = c.pre.iter().fold(margin, |m, z| m.min(z.abs()));
            }
        }
        for (s, pre) in self.arch.fc_shapes().iter().zip(&cache.fc_pre) {
            if s.relu {
                margin = pre.iter().fold(margin, |m, z| m.min(z.abs()));
            }
        }
        Ok(margin)
    }

    /// Parameter gradients given `dL/dlogits` (`n x classes`).
    pub fn backward_logits(&self, input: &ViewInput, cache: &ForwardCache, grad_logits: &[f64]) -> Params {
        let n = cache.probs.vertex_count();
        let mut grads = self.params.zeros_like();
        let shapes = self.arch.fc_shapes();
        let n_ic = self.arch.ic_layers.len();
        let mut grad = grad_logits.to_vec();
        for (i, s) in shapes.iter().enumerate().rev() {
            let (w, b) = self.fc_blocks(i);
            let layer_input = &cache.inputs[n_ic + i];
            let g = layers::fc_backward(&grad, layer_input, &cache.fc_pre[i], n, self.params.block(w), *s);
            grads.block_mut(w).copy_from_slice(&g.weight);
            grads.block_mut(b).copy_from_slice(&g.bias);
            grad = g.input;
        }
        for (i, s) in self.arch.ic_shapes().into_iter().enumerate().rev() {
            let pc = input.coords_for(self.arch.ic_layers[i].radius);
            let g = layers::ic_backward(&grad, &cache.inputs[i], pc, &self.ic_params(i), s, &cache.ic[i], i > 0);
            grads.block_mut(3 * i).copy_from_slice(&g.means);
            grads.block_mut(3 * i + 1).copy_from_slice(&g.raw_precision);
            grads.block_mut(3 * i + 2).copy_from_slice(&g.mixing);
            grad = g.input;
        }
        grads
    }

    /// Parameter gradients given `dL/dprobabilities`.
    pub fn backward_probs(&self, input: &ViewInput, cache: &ForwardCache, grad_probs: &[f64]) -> Params {
        let l = self.arch.classes;
        let mut grad_logits = vec![0.0; grad_probs.len()];
        for ((dz, p), dp) in grad_logits.chunks_mut(l).zip(cache.probs.rows()).zip(grad_probs.chunks(l)) {
            let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
            for k in 0..l {
                dz[k] = p[k] * (dp[k] - inner);
            }
        }
        self.backward_logits(input, cache, &grad_logits)
    }

    /// Cross-entropy loss and its exact parameter gradient.
    pub fn loss_and_gradient(
        &self,
        input: &ViewInput,
        labels: &[u32],
        mask: Option<&[bool]>,
        reduction: Reduction,
    ) -> Result<(f64, Params)> {
        let cache = self.forward_cached(input)?;
        let loss = cross_entropy_loss_with(&cache.probs, labels, mask, reduction)?;
        let grad_logits = cross_entropy_logit_grad(&cache.probs, labels, mask, reduction);
        Ok((loss, self.backward_logits(input, &cache, &grad_logits)))
    }
}

/// How per-vertex losses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

fn check_labels(pred: &ProbabilityField, gt: &[u32], mask: Option<&[bool]>) -> Result<usize> {
    if gt.len() != pred.vertex_count() {
        return Err(Error::Dimension(format!("{} labels for {} vertices", gt.len(), pred.vertex_count())));
    }
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::Dimension(format!("mask of {} for {} vertices", m.len(), gt.len())));
        }
    }
    let l = pred.classes();
    if let Some((v, &bad)) = gt.iter().enumerate().find(|(_, &x)| x == 0 || x as usize > l) {
        return Err(Error::Validation(format!("label {bad} at vertex {v} is outside 1..={l}")));
    }
    let count = mask.map_or(gt.len(), |m| m.iter().filter(|&&b| b).count());
    if count == 0 {
        return Err(Error::Validation("loss mask selects no vertices".into()));
    }
    Ok(count)
}

/// Mean over unmasked vertices of `-ln max(p[v, gt(v)], 1e-12)`.
pub fn cross_entropy_loss(pred: &ProbabilityField, gt: &[u32], mask: Option<&[bool]>) -> Result<f64> {
    cross_entropy_loss_with(pred, gt, mask, Reduction::Mean)
}

pub fn cross_entropy_loss_with(
    pred: &ProbabilityField,
    gt: &[u32],
    mask: Option<&[bool]>,
    reduction: Reduction,
) -> Result<f64> {
    let count = check_labels(pred, gt, mask)?;
    let sum: f64 = (0..gt.len())
        .filter(|&v| mask.is_none_or(|m| m[v]))
        .map(|v| -pred.row(v)[gt[v] as usize - 1].max(LOG_CLAMP).ln())
        .sum();
    Ok(match reduction {
        Reduction::Mean => sum / count as f64,
        Reduction::Sum => sum,
    })
}

/// `dL/dlogits = p - onehot`, scaled by the reduction; zero for masked
/// vertices and for vertices whose probability sits below the clamp.
fn cross_entropy_logit_grad(pred: &ProbabilityField, gt: &[u32], mask: Option<&[bool]>, reduction: Reduction) -> Vec<f64> {
    let l = pred.classes();
    let count = mask.map_or(gt.len(), |m| m.iter().filter(|&&b| b).count());
    let scale = match reduction {
        Reduction::Mean => 1.0 / count as f64,
        Reduction::Sum => 1.0,
    };
    let mut out = vec![0.0; pred.vertex_count() * l];
    for v in 0..gt.len() {
        if mask.is_some_and(|m| !m[v]) {
            continue;
        }
        let row = pred.row(v);
        let t = gt[v] as usize - 1;
        if row[t] < LOG_CLAMP {
            continue;
        }
        for k in 0..l {
            out[v * l + k] = scale * (row[k] - if k == t { 1.0 } else { 0.0 });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_input(n_side: usize, seed: u64, radius: usize) -> ViewInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = Vec::new();
        for r in 0..n_side {
            for c in 0..n_side {
                if rng.gen_bool(0.85) {
                    grid.push((r, c));
                }
            }
        }
        let signal = (0..grid.len() * SIGNAL_CHANNELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coords = vec![PseudoCoords::from_grid(&grid, n_side, n_side, radius).unwrap()];
        ViewInput { signal, coords }
    }

    fn small_arch(classes: usize) -> Architecture {
        Architecture {
            input_channels: 6,
            ic_layers: vec![IcSpec { channels: 4, gaussians: 2, radius: 1 }, IcSpec { channels: 3, gaussians: 2, radius: 1 }],
            fc_hidden: vec![5],
            classes,
            relu_last_ic: true,
        }
    }

    #[test]
    fn parameter_counts() {
        let single = Architecture { input_channels: 6, ic_layers: vec![], fc_hidden: vec![], classes: 10, relu_last_ic: true };
        assert_eq!(single.parameter_count(), 70);
        let ic = Architecture {
            input_channels: 6,
            ic_layers: vec![IcSpec { channels: 16, gaussians: 8, radius: 2 }],
            fc_hidden: vec![],
            classes: 1,
            relu_last_ic: true,
        };
        assert_eq!(ic.parameter_count() - 17, 800);
        let net = ViewNet::new(Architecture::default_for(10), 1).unwrap();
        assert_eq!(net.parameter_count(), 11_818);
        assert_eq!(Architecture::default_for(10).parameter_count(), 11_818);
    }

    #[test]
    fn block_names() {
        let net = ViewNet::new(small_arch(3), 0).unwrap();
        let names: Vec<&str> = net.params().blocks().iter().map(|b| b.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "ic0.means", "ic0.raw_precision", "ic0.mixing", "ic1.means", "ic1.raw_precision", "ic1.mixing",
                "fc0.weight", "fc0.bias", "fc1.weight", "fc1.bias"
            ]
        );
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let mut net = ViewNet::new(small_arch(4), 3).unwrap();
        let (w, b) = net.fc_blocks(1);
        net.params_mut().block_mut(w).fill(0.0);
        net.params_mut().block_mut(b).fill(0.0);
        let p = net.forward(&toy_input(5, 1, 1)).unwrap();
        assert!(p.values().iter().all(|&x| x == 0.25));
    }

    #[test]
    fn cross_entropy_examples() {
        let onehot = ProbabilityField::one_hot(&[2, 1], 3).unwrap();
        assert_eq!(cross_entropy_loss(&onehot, &[2, 1], None).unwrap(), 0.0);
        let uniform = ProbabilityField::uniform(4, 10);
        assert!((cross_entropy_loss(&uniform, &[1, 5, 7, 10], None).unwrap() - 10f64.ln()).abs() < 1e-12);
        let half = ProbabilityField::uniform(2, 2);
        assert!((cross_entropy_loss(&half, &[1, 2], None).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(cross_entropy_loss(&half, &[1, 2], Some(&[false, false])).is_err());
        assert!(cross_entropy_loss(&half, &[1, 3], None).is_err());
        // the clamp keeps the loss finite
        let sure = ProbabilityField::one_hot(&[1], 2).unwrap();
        assert!((cross_entropy_loss(&sure, &[2], None).unwrap() + LOG_CLAMP.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic_and_permutation_equivariant() {
        let net = ViewNet::new(small_arch(3), 9).unwrap();
        let input = toy_input(6, 2, 1);
        assert_eq!(net.forward(&input).unwrap(), net.forward(&input).unwrap());

        // reverse the vertex order through the grid positions
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut grid = Vec::new();
        for r in 0..6 {
            for c in 0..6 {
                if rng.gen_bool(0.85) {
                    grid.push((r, c));
                }
            }
        }
        let n = grid.len();
        let rev_grid: Vec<_> = grid.iter().rev().copied().collect();
        let rev_signal: Vec<f64> = (0..n).rev().flat_map(|v| input.signal[v * 6..(v + 1) * 6].to_vec()).collect();
        let rev = ViewInput { signal: rev_signal, coords: vec![PseudoCoords::from_grid(&rev_grid, 6, 6, 1).unwrap()] };
        let a = net.forward(&input).unwrap();
        let b = net.forward(&rev).unwrap();
        for v in 0..n {
            for (x, y) in a.row(v).iter().zip(b.row(n - 1 - v)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concatenated_views_match_separate_runs() {
        let net = ViewNet::new(small_arch(3), 4).unwrap();
        let a = toy_input(5, 10, 1);
        let b = toy_input(4, 11, 1);
        let both = net.forward(&a.concat(&b)).unwrap();
        let pa = net.forward(&a).unwrap();
        let pb = net.forward(&b).unwrap();
        let na = a.vertex_count();
        for v in 0..na {
            assert_eq!(both.row(v), pa.row(v));
        }
        for v in 0..b.vertex_count() {
            assert_eq!(both.row(na + v), pb.row(v));
        }
    }

    #[test]
    fn confident_correct_prediction_has_no_gradient() {
        let mut net = ViewNet::new(small_arch(3), 5).unwrap();
        let (w, b) = net.fc_blocks(1);
        net.params_mut().block_mut(w).fill(0.0);
        net.params_mut().block_mut(b).copy_from_slice(&[40.0, 0.0, 0.0]);
        let input = toy_input(4, 3, 1);
        let labels = vec![1; input.vertex_count()];
        let (_, g) = net.loss_and_gradient(&input, &labels, None, Reduction::Mean).unwrap();
        assert!(g.norm() < 1e-8, "{}", g.norm());
    }

    #[test]
    fn duplicated_vertex_doubles_its_summed_gradient() {
        let net = ViewNet::new(Architecture { input_channels: 6, ic_layers: vec![], fc_hidden: vec![4], classes: 3, relu_last_ic: true }, 8).unwrap();
        let one = ViewInput { signal: vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4], coords: vec![] };
        let two = ViewInput { signal: [one.signal.clone(), one.signal.clone()].concat(), coords: vec![] };
        let (_, g1) = net_loss(&net, &one, &[2]);
        let (_, g2) = net_loss(&net, &two, &[2, 2]);
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    fn net_loss(net: &ViewNet, input: &ViewInput, labels: &[u32]) -> (f64, Params) {
        net.loss_and_gradient(input, labels, None, Reduction::Sum).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let arch = Architecture { relu_last_ic: false, ..small_arch(3) };
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for seed in 0..20 {
            let net = ViewNet::new(arch.clone(), seed).unwrap();
            let input = toy_input(5, 100 + seed, 1);
            if net.relu_margin(&input).unwrap() < 1e-4 {
                continue;
            }
            checked += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels: Vec<u32> = (0..input.vertex_count()).map(|_| rng.gen_range(1..=3)).collect();
            let (_, g) = net.loss_and_gradient(&input, &labels, None, Reduction::Mean).unwrap();
            for i in 0..net.parameter_count() {
                let eval = |d: f64| {
                    let mut n2 = net.clone();
                    n2.params_mut().values_mut()[i] += d;
                    cross_entropy_loss(&n2.forward(&input).unwrap(), &labels, None).unwrap()
                };
                let fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
                let a = g.values()[i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(checked >= 5);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }
}
