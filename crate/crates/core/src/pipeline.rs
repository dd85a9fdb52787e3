//! End-to-end orchestration: run configuration, training of both stages,
//! inference and reproducibility manifests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{project_with_maps, AggregateResult};
use crate::crf::{
    self, build_kernels, crf_loss_and_gradient, mean_field_backward, mean_field_forward, Bandwidth, CrfParams,
    CrfSample, CrfTrainOptions, KernelMatrices, Unary,
};
use crate::decompose::{decompose_shape, DecomposeOptions, View};
use crate::error::{Error, Result};
use crate::exec;
use crate::mesh::Mesh;
use crate::optim::{Adam, AdamState, Params};
use crate::prob::ProbabilityField;
use crate::synth::{HUMANOID_CLASSES, HUMANOID_LABELS};
use crate::viewnet::{self, cross_entropy_loss, Architecture, Sample, StepRecord, TrainOptions, ViewInput, ViewNet, LOG_CLAMP};

/// Version string embedded in manifests and config hashes.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrfConfig {
    pub enabled: bool,
    pub iterations: usize,
    pub sigma_near: Bandwidth,
    pub sigma_far: Bandwidth,
    pub sigma_feat: Bandwidth,
    pub far_sign: f64,
    pub cutoff: Option<Bandwidth>,
    pub normalize_kernels: bool,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        let p = CrfParams::identity(1);
        CrfConfig {
            enabled: true,
            iterations: p.iterations,
            sigma_near: p.sigma_near,
            sigma_far: p.sigma_far,
            sigma_feat: p.sigma_feat,
            far_sign: p.far_sign,
            cutoff: p.cutoff,
            normalize_kernels: p.normalize_kernels,
            learning_rate: CrfTrainOptions::default().adam.learning_rate,
            epochs: CrfTrainOptions::default().epochs,
        }
    }
}

impl CrfConfig {
    /// Identity-initialized parameters with these hyperparameters.
    pub fn initial_params(&self, classes: usize) -> CrfParams {
        CrfParams {
            iterations: self.iterations,
            sigma_near: self.sigma_near,
            sigma_far: self.sigma_far,
            sigma_feat: self.sigma_feat,
            far_sign: self.far_sign,
            cutoff: self.cutoff,
            normalize_kernels: self.normalize_kernels,
            ..CrfParams::identity(classes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of views `M`, scan size `U x V`, up axis and depth threshold.
    pub decompose: DecomposeOptions,
    /// Network layout; `None` uses [`Architecture::default_for`] with `classes`.
    pub architecture: Option<Architecture>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub crf: CrfConfig,
    pub seed: u64,
    pub classes: usize,
    pub label_names: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            decompose: DecomposeOptions::default(),
            architecture: None,
            learning_rate: 1e-3,
            epochs: 20,
            crf: CrfConfig::default(),
            seed: 0,
            classes: HUMANOID_CLASSES,
            label_names: HUMANOID_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.decompose;
        if d.views == 0 || d.width < 2 || d.height < 2 {
            return Err(Error::Config("views must be at least 1 and the scan at least 2x2".into()));
        }
        if self.classes == 0 {
            return Err(Error::Config("classes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !self.label_names.is_empty() && self.label_names.len() != self.classes {
            return Err(Error::Config(format!("{} label names for {} classes", self.label_names.len(), self.classes)));
        }
        let arch = self.architecture();
        arch.validate()?;
        if arch.classes != self.classes {
            return Err(Error::Config(format!("architecture has {} classes, config has {}", arch.classes, self.classes)));
        }
        if !(self.crf.learning_rate > 0.0) {
            return Err(Error::Config("CRF learning rate must be positive".into()));
        }
        self.crf.initial_params(self.classes).validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture.clone().unwrap_or_else(|| Architecture::default_for(self.classes))
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { epochs: self.epochs, adam: Adam::with_learning_rate(self.learning_rate), seed: self.seed }
    }

    pub fn crf_train_options(&self) -> CrfTrainOptions {
        CrfTrainOptions { epochs: self.crf.epochs, adam: Adam::with_learning_rate(self.crf.learning_rate), seed: self.seed }
    }

    /// SHA-256 of the canonical JSON of this config and the code version.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(format!("{json}\n{CODE_VERSION}").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of one file.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command run: what was read, what was written, with which
/// configuration and code version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            command: command.into(),
            code_version: CODE_VERSION.into(),
            config_hash: config.hash(),
            seed: config.seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Hash `path` and list it under `name`.
    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest { path: name.into(), sha256: file_sha256(path)? });
        Ok(())
    }

    pub fn add_output(&mut self, name: &str, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest { path: name.into(), sha256: file_sha256(path)? });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A shape decomposed into views whose inputs are ready for the network.
#[derive(Debug, Clone)]
pub struct PreparedShape {
    pub vertex_count: usize,
    pub inputs: Vec<ViewInput>,
    pub maps: Vec<Vec<usize>>,
}

impl PreparedShape {
    /// Decompose `mesh` and build network inputs; empty views are dropped.
    pub fn new(mesh: &Mesh, options: &DecomposeOptions, arch: &Architecture) -> Result<Self> {
        Self::from_views(&decompose_shape(mesh, options)?, mesh.vertex_count(), arch)
    }

    pub fn from_views(views: &[View], vertex_count: usize, arch: &Architecture) -> Result<Self> {
        let kept: Vec<&View> = views.iter().filter(|v| !v.is_empty()).collect();
        let inputs = exec::map_range(kept.len(), |i| ViewInput::new(kept[i], arch)).into_iter().collect::<Result<_>>()?;
        Ok(PreparedShape { vertex_count, inputs, maps: kept.iter().map(|v| v.correspondence.clone()).collect() })
    }

    /// Training samples with labels pulled back from the source labels.
    pub fn samples(&self, source_labels: &[u32]) -> Result<Vec<Sample>> {
        if source_labels.len() != self.vertex_count {
            return Err(Error::Dimension(format!("{} labels for {} vertices", source_labels.len(), self.vertex_count)));
        }
        Ok(self
            .inputs
            .iter()
            .zip(&self.maps)
            .map(|(input, map)| Sample { input: input.clone(), labels: map.iter().map(|&t| source_labels[t]).collect() })
            .collect())
    }

    /// Classify every view and average the predictions onto the mesh.
    pub fn aggregate(&self, net: &ViewNet) -> Result<AggregateResult> {
        let pdfs = self.inputs.iter().map(|i| net.forward(i)).collect::<Result<Vec<_>>>()?;
        let maps: Vec<&[usize]> = self.maps.iter().map(Vec::as_slice).collect();
        project_with_maps(&pdfs, &maps, self.vertex_count, net.classes())
    }
}

/// Per-vertex outputs of the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub aggregate: AggregateResult,
    /// Mean-field marginals, when the CRF ran.
    pub refined: Option<ProbabilityField>,
    pub labels: Vec<u32>,
}

impl Segmentation {
    /// The distribution the labels were taken from.
    pub fn final_pdf(&self) -> &ProbabilityField {
        self.refined.as_ref().unwrap_or(&self.aggregate.pdf)
    }
}

/// Refine an aggregated prediction with the CRF, or take its argmax when
/// `crf` is `None`.
pub fn refine(mesh: &Mesh, aggregate: AggregateResult, crf: Option<&CrfParams>) -> Result<Segmentation> {
    match crf {
        None => {
            let labels = aggregate.pdf.argmax();
            Ok(Segmentation { aggregate, refined: None, labels })
        }
        Some(p) => {
            let kernels = build_kernels(mesh, p)?;
            let q = crf::mean_field_infer(&Unary::from_pdf(&aggregate.pdf), p, &kernels)?;
            let labels = crf::map_labeling(&q);
            Ok(Segmentation { aggregate, refined: Some(q), labels })
        }
    }
}

/// Decompose, classify, aggregate and optionally refine one mesh.
pub fn segment(net: &ViewNet, crf: Option<&CrfParams>, mesh: &Mesh, options: &DecomposeOptions) -> Result<Segmentation> {
    let shape = PreparedShape::new(mesh, options, net.architecture())?;
    refine(mesh, shape.aggregate(net)?, crf)
}

fn labels_of(mesh: &Mesh) -> Result<&[u32]> {
    mesh.labels().ok_or_else(|| Error::Validation("training mesh has no vertex labels".into()))
}

/// Train the view network on the views of labeled meshes.
pub fn train_network(
    net: &mut ViewNet,
    meshes: &[Mesh],
    config: &RunConfig,
    state: &mut AdamState,
    on_step: impl FnMut(&StepRecord),
) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for mesh in meshes {
        let shape = PreparedShape::new(mesh, &config.decompose, net.architecture())?;
        samples.extend(shape.samples(labels_of(mesh)?)?);
    }
    viewnet::train(net, &samples, &config.train_options(), state, on_step)
}

/// Fixed unaries from a trained network plus kernels, for CRF training.
pub fn crf_samples(net: &ViewNet, meshes: &[Mesh], params: &CrfParams, options: &DecomposeOptions) -> Result<Vec<CrfSample>> {
    meshes
        .iter()
        .map(|mesh| {
            let shape = PreparedShape::new(mesh, options, net.architecture())?;
            Ok(CrfSample {
                unary: Unary::from_pdf(&shape.aggregate(net)?.pdf),
                kernels: build_kernels(mesh, params)?,
                labels: labels_of(mesh)?.to_vec(),
            })
        })
        .collect()
}

/// Train the CRF on frozen network predictions, starting from identity.
pub fn train_crf_stage(
    net: &ViewNet,
    meshes: &[Mesh],
    config: &RunConfig,
    on_step: impl FnMut(&StepRecord),
) -> Result<(CrfParams, Vec<f64>)> {
    let mut params = config.crf.initial_params(config.classes);
    let samples = crf_samples(net, meshes, &params, &config.decompose)?;
    let mut state = AdamState::new(params.learnable().len());
    let losses = crf::train_crf(&mut params, &samples, &config.crf_train_options(), &mut state, on_step)?;
    Ok((params, losses))
}

/// One shape for joint fine-tuning: prepared views, kernels and labels.
#[derive(Debug, Clone)]
pub struct JointShape {
    pub shape: PreparedShape,
    pub kernels: KernelMatrices,
    pub labels: Vec<u32>,
}

/// Cross-entropy of the refined marginals and its gradient with respect to
/// both the network and the CRF, back through averaging onto the mesh.
pub fn joint_loss_and_gradient(net: &ViewNet, crf: &CrfParams, shape: &JointShape) -> Result<(f64, Params, Params)> {
    let s = &shape.shape;
    let l = net.classes();
    let caches = s.inputs.iter().map(|i| net.forward_cached(i)).collect::<Result<Vec<_>>>()?;
    let maps: Vec<&[usize]> = s.maps.iter().map(Vec::as_slice).collect();
    let pdfs: Vec<ProbabilityField> = caches.iter().map(|c| c.probs.clone()).collect();
    let agg = project_with_maps(&pdfs, &maps, s.vertex_count, l)?;
    let unary = Unary::from_pdf(&agg.pdf);
    let trace = mean_field_forward(&unary, crf, &shape.kernels)?;
    let q = trace.output(l);
    let loss = cross_entropy_loss(&q, &shape.labels, None)?;
    let n = shape.labels.len() as f64;
    let mut grad_q = vec![0.0; q.values().len()];
    for (v, &g) in shape.labels.iter().enumerate() {
        let p = q.row(v)[g as usize - 1];
        if p >= LOG_CLAMP {
            grad_q[v * l + g as usize - 1] = -1.0 / (n * p);
        }
    }
    let crf_grad = mean_field_backward(&trace, crf, &shape.kernels, &grad_q)?;
    // U = -ln g and g is the plain mean of the covering view predictions.
    let mut grad_g = vec![0.0; grad_q.len()];
    for (t, &c) in agg.coverage.iter().enumerate() {
        if c == 0 {
            continue;
        }
        for a in 0..l {
            let p = agg.pdf.row(t)[a];
            if p >= LOG_CLAMP {
                grad_g[t * l + a] = -crf_grad.unary[t * l + a] / (p * c as f64);
            }
        }
    }
    let mut net_grad = net.params().zeros_like();
    for ((input, cache), map) in s.inputs.iter().zip(&caches).zip(&s.maps) {
        let grad_probs: Vec<f64> = map.iter().flat_map(|&t| grad_g[t * l..(t + 1) * l].iter().copied()).collect();
        net_grad.add_assign(&net.backward_probs(input, cache, &grad_probs));
    }
    Ok((loss, net_grad, crf_grad.params))
}

/// Fine-tune network and CRF together, one shape per step.
#[allow(clippy::too_many_arguments)]
pub fn joint_finetune(
    net: &mut ViewNet,
    crf: &mut CrfParams,
    shapes: &[JointShape],
    epochs: usize,
    net_adam: Adam,
    crf_adam: Adam,
    net_state: &mut AdamState,
    crf_state: &mut AdamState,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(epochs);
    let mut learnable = crf.learnable();
    for _ in 0..epochs {
        let mut total = 0.0;
        for shape in shapes {
            let (loss, g_net, g_crf) = joint_loss_and_gradient(net, crf, shape)?;
            net_adam.step(net.params_mut(), &g_net, net_state)?;
            crf_adam.step(&mut learnable, &g_crf, crf_state)?;
            crf.set_learnable(&learnable)?;
            total += loss;
        }
        losses.push(total / shapes.len().max(1) as f64);
    }
    Ok(losses)
}

/// CRF loss on fixed unaries, for monitoring.
pub fn crf_loss(params: &CrfParams, sample: &CrfSample) -> Result<f64> {
    Ok(crf_loss_and_gradient(params, &sample.unary, &sample.kernels, &sample.labels)?.0)
}
