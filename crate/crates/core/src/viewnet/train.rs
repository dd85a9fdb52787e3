use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Reduction, ViewInput, ViewNet};
use crate::decompose::View;
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamState};

/// One training view with its ground-truth labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: ViewInput,
    pub labels: Vec<u32>,
}

impl Sample {
    /// Prepare a view; labels are pulled back from the source mesh labels.
    pub fn from_view(net: &ViewNet, view: &View, source_labels: &[u32]) -> Result<Self> {
        if let Some(&t) = view.correspondence.iter().find(|&&t| t >= source_labels.len()) {
            return Err(Error::Dimension(format!(
                "view maps to vertex {t} but only {} labels were given",
                source_labels.len()
            )));
        }
        Ok(Sample { input: ViewInput::new(view, net.architecture())?, labels: view.pull_labels(source_labels) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub adam: Adam,
    /// Seed of the epoch shuffles.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 20, adam: Adam::default(), seed: 0 }
    }
}

/// Loss of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
}

/// Train on one sample per Adam step, visiting all samples once per epoch in
/// a seeded random order. Returns the mean loss of every epoch.
pub fn train(
    net: &mut ViewNet,
    samples: &[Sample],
    options: &TrainOptions,
    state: &mut AdamState,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Validation("no training samples".into()));
    }
    if state.m.len() != net.parameter_count() {
        return Err(Error::Dimension("optimizer state does not match the network".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &samples[i];
            let (loss, grads) = net.loss_and_gradient(&s.input, &s.labels, None, Reduction::Mean)?;
            options.adam.step(net.params_mut(), &grads, state)?;
            total += loss;
            on_step(&StepRecord { epoch, step: state.step, loss });
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    Ok(epoch_losses)
}
