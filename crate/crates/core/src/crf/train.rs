use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mean_field_backward, mean_field_forward, CrfGradient, CrfParams, KernelMatrices, Unary};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamState};
use crate::viewnet::{cross_entropy_loss, StepRecord, LOG_CLAMP};

/// One shape with fixed unaries, precomputed kernels and ground truth.
#[derive(Debug, Clone)]
pub struct CrfSample {
    pub unary: Unary,
    pub kernels: KernelMatrices,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfTrainOptions {
    pub epochs: usize,
    pub adam: Adam,
    pub seed: u64,
}

impl Default for CrfTrainOptions {
    fn default() -> Self {
        CrfTrainOptions { epochs: 30, adam: Adam::with_learning_rate(0.02), seed: 0 }
    }
}

/// Mean cross-entropy of `Q^T` against `labels` and its gradient.
pub fn crf_loss_and_gradient(
    params: &CrfParams,
    unary: &Unary,
    kernels: &KernelMatrices,
    labels: &[u32],
) -> Result<(f64, CrfGradient)> {
    let trace = mean_field_forward(unary, params, kernels)?;
    let q = trace.output(params.classes);
    let loss = cross_entropy_loss(&q, labels, None)?;
    let l = params.classes;
    let n = labels.len() as f64;
    let mut grad_q = vec![0.0; q.values().len()];
    for (v, &g) in labels.iter().enumerate() {
        let p = q.row(v)[g as usize - 1];
        if p >= LOG_CLAMP {
            grad_q[v * l + g as usize - 1] = -1.0 / (n * p);
        }
    }
    Ok((loss, mean_field_backward(&trace, params, kernels, &grad_q)?))
}

/// Fit `mu` and the kernel weights with Adam, one shape per step, visiting
/// the shapes in a seeded random order each epoch. Returns per-epoch mean losses.
pub fn train_crf(
    params: &mut CrfParams,
    samples: &[CrfSample],
    options: &CrfTrainOptions,
    state: &mut AdamState,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Validation("no CRF training shapes".into()));
    }
    let mut learnable = params.learnable();
    if state.m.len() != learnable.len() {
        return Err(Error::Dimension("optimizer state does not match the CRF".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &samples[i];
            let (loss, grad) = crf_loss_and_gradient(params, &s.unary, &s.kernels, &s.labels)?;
            options.adam.step(&mut learnable, &grad.params, state)?;
            params.set_learnable(&learnable)?;
            total += loss;
            on_step(&StepRecord { epoch, step: state.step, loss });
        }
        losses.push(total / samples.len() as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::mean_field_infer;
    use crate::prob::ProbabilityField;

    /// A path of `n` vertices, left half label 1 and right half label 2, with
    /// unaries that flip every third vertex.
    fn path_sample(n: usize) -> CrfSample {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (i as f64 - j as f64).abs();
            }
        }
        let f: Vec<[f64; 6]> = (0..n).map(|i| [i as f64, 0.0, 0.0, 0.0, 0.0, 1.0]).collect();
        let kernels = KernelMatrices::from_parts(&d, f, [1.5, 0.5 * n as f64, 0.5 * n as f64], true).unwrap();
        let labels: Vec<u32> = (0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect();
        let mut probs = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let noisy = if i % 3 == 1 { 3 - l } else { l };
            probs.extend(if noisy == 1 { [0.7, 0.3] } else { [0.3, 0.7] });
        }
        let pdf = ProbabilityField::new(n, 2, probs).unwrap();
        CrfSample { unary: Unary::from_pdf(&pdf), kernels, labels }
    }

    #[test]
    fn zero_weights_loss_is_unary_cross_entropy() {
        let s = path_sample(12);
        let mut p = CrfParams::identity(2);
        [p.w_near, p.w_far, p.w_feat] = [0.0; 3];
        let (loss, _) = crf_loss_and_gradient(&p, &s.unary, &s.kernels, &s.labels).unwrap();
        let q = ProbabilityField::from_logits(12, 2, s.unary.values().iter().map(|u| -u).collect()).unwrap();
        assert!((loss - cross_entropy_loss(&q, &s.labels, None).unwrap()).abs() < 1e-15);
    }

    /// Identity `mu` with positive weights penalizes equal labels on near
    /// vertices. Learning smoothness flips the diagonal of `mu` and grows
    /// `w_near`, so equal labels end up with the larger near affinity.
    #[test]
    fn learning_smoothness_raises_w_near() {
        let samples = vec![path_sample(20)];
        let mut p = CrfParams::identity(2);
        let mut state = AdamState::new(p.learnable().len());
        let opts = CrfTrainOptions { epochs: 100, ..Default::default() };
        let losses = train_crf(&mut p, &samples, &opts, &mut state, |_| {}).unwrap();
        assert_eq!(state.step, 100);
        assert!(losses[99] < losses[0], "{} -> {}", losses[0], losses[99]);
        assert!(p.w_near > 1.0, "w_near = {}", p.w_near);
        let aff = p.near_affinity();
        assert!(aff[0] > aff[1] && aff[3] > aff[2], "{aff:?}");
        let before = samples[0].unary.values().chunks(2).zip(&samples[0].labels).filter(|(u, &l)| {
            let best = if u[0] <= u[1] { 1 } else { 2 };
            best == l
        });
        let q = mean_field_infer(&samples[0].unary, &p, &samples[0].kernels).unwrap();
        let after = q.argmax().iter().zip(&samples[0].labels).filter(|(a, b)| a == b).count();
        let before = before.count();
        assert!(after > before, "{before} -> {after}, {p:?}");
    }
}
