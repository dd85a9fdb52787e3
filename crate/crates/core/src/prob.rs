//! Per-vertex categorical distributions.

use crate::error::{Error, Result};

/// Allowed deviation of a row sum from one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// A `vertex_count x classes` row-stochastic matrix. Column `l` holds the
/// probability of label `l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    vertex_count: usize,
    classes: usize,
    values: Vec<f64>,
}

impl ProbabilityField {
    /// Wrap row-major values after checking shape, sign and row sums.
    pub fn new(vertex_count: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::Dimension("a distribution needs at least one class".into()));
        }
        if values.len() != vertex_count * classes {
            return Err(Error::Dimension(format!(
                "{} values for {vertex_count} x {classes} probabilities",
                values.len()
            )));
        }
        for (v, row) in values.chunks(classes).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Validation(format!("row {v} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!("row {v} sums to {s}")));
            }
        }
        Ok(ProbabilityField { vertex_count, classes, values })
    }

    pub fn uniform(vertex_count: usize, classes: usize) -> Self {
        assert!(classes > 0, "a distribution needs at least one class");
        ProbabilityField {
            vertex_count,
            classes,
            values: vec![1.0 / classes as f64; vertex_count * classes],
        }
    }

    /// Row-wise softmax of `vertex_count x classes` logits.
    pub fn from_logits(vertex_count: usize, classes: usize, mut logits: Vec<f64>) -> Result<Self> {
        if classes == 0 || logits.len() != vertex_count * classes {
            return Err(Error::Dimension(format!(
                "{} logits for {vertex_count} x {classes} probabilities",
                logits.len()
            )));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        for row in logits.chunks_mut(classes) {
            softmax_in_place(row);
        }
        Ok(ProbabilityField { vertex_count, classes, values: logits })
    }

    /// One-hot rows for 1-based labels.
    pub fn one_hot(labels: &[u32], classes: usize) -> Result<Self> {
        let mut values = vec![0.0; labels.len() * classes];
        for (v, &l) in labels.iter().enumerate() {
            if l == 0 || l as usize > classes {
                return Err(Error::Validation(format!("label {l} at vertex {v} is outside 1..={classes}")));
            }
            values[v * classes + l as usize - 1] = 1.0;
        }
        Ok(ProbabilityField { vertex_count: labels.len(), classes, values })
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, v: usize) -> &[f64] {
        &self.values[v * self.classes..(v + 1) * self.classes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.classes)
    }

    /// Most probable 1-based label per vertex; ties go to the lowest label.
    pub fn argmax(&self) -> Vec<u32> {
        self.rows().map(argmax_row).collect()
    }

    /// Shannon entropy per vertex in nats.
    pub fn entropy(&self) -> Vec<f64> {
        self.rows()
            .map(|row| -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
            .collect()
    }
}

/// 1-based index of the largest entry, lowest index on ties.
pub(crate) fn argmax_row(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best as u32 + 1
}

/// Numerically stable softmax.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
