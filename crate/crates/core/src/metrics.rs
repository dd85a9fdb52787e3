//! Segmentation accuracy, intersection over union and uncertainty maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::prob::ProbabilityField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Accuracy with vertices weighted by a third of their incident face area.
    pub area_weighted_accuracy: Option<f64>,
    /// IoU of each class `1..=L`; `None` for classes absent from both labelings.
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    /// Ground-truth vertex count per class.
    pub class_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<usize>,
}

fn check_lengths(pred: &[u32], gt: &[u32]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!("{} predicted labels for {} ground-truth labels", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::Validation("no labels to compare".into()));
    }
    Ok(())
}

/// Fraction of matching labels, optionally weighted per vertex.
pub fn accuracy(pred: &[u32], gt: &[u32], weights: Option<&[f64]>) -> Result<f64> {
    check_lengths(pred, gt)?;
    match weights {
        None => Ok(pred.iter().zip(gt).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64),
        Some(w) => {
            if w.len() != pred.len() {
                return Err(Error::Dimension(format!("{} weights for {} vertices", w.len(), pred.len())));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Validation("weights sum to zero".into()));
            }
            let hit: f64 = pred.iter().zip(gt).zip(w).filter(|((a, b), _)| a == b).map(|(_, w)| w).sum();
            Ok(hit / total)
        }
    }
}

/// Per-class IoU and their mean over classes present in either labeling.
pub fn mean_iou(pred: &[u32], gt: &[u32], classes: usize) -> Result<(Vec<Option<f64>>, f64)> {
    check_lengths(pred, gt)?;
    if let Some(&bad) = pred.iter().chain(gt).find(|&&l| l == 0 || l as usize > classes) {
        return Err(Error::Validation(format!("label {bad} is outside 1..={classes}")));
    }
    let mut inter = vec![0usize; classes];
    let mut union = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p as usize - 1, g as usize - 1);
        if p == g {
            inter[p] += 1;
            union[p] += 1;
        } else {
            union[p] += 1;
            union[g] += 1;
        }
    }
    let per: Vec<Option<f64>> = (0..classes)
        .map(|c| (union[c] > 0).then(|| inter[c] as f64 / union[c] as f64))
        .collect();
    let present: Vec<f64> = per.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Validation("no class is present".into()));
    }
    Ok((per, present.iter().sum::<f64>() / present.len() as f64))
}

/// Full report; `mesh` enables the area-weighted accuracy.
pub fn evaluate(pred: &[u32], gt: &[u32], classes: usize, mesh: Option<&Mesh>) -> Result<EvalReport> {
    let (per_class_iou, miou) = mean_iou(pred, gt, classes)?;
    let area_weighted_accuracy = match mesh {
        Some(m) => Some(accuracy(pred, gt, Some(&m.vertex_areas()))?),
        None => None,
    };
    let mut class_counts = vec![0usize; classes];
    for &g in gt {
        class_counts[g as usize - 1] += 1;
    }
    Ok(EvalReport {
        accuracy: accuracy(pred, gt, None)?,
        area_weighted_accuracy,
        per_class_iou,
        mean_iou: miou,
        class_counts,
        parameter_count: None,
    })
}

/// Shannon entropy divided by `ln L`: 0 for a certain prediction, 1 for uniform.
pub fn entropy_map(pdf: &ProbabilityField) -> Vec<f64> {
    let l = pdf.classes();
    if l < 2 {
        return vec![0.0; pdf.vertex_count()];
    }
    let norm = (l as f64).ln();
    pdf.entropy().into_iter().map(|h| (h / norm).clamp(0.0, 1.0)).collect()
}

/// Vertices that share an edge with a vertex of a different label.
pub fn boundary_vertices(mesh: &Mesh, labels: &[u32]) -> Vec<bool> {
    let mut out = vec![false; mesh.vertex_count()];
    for (a, b) in mesh.edges() {
        if labels[a] != labels[b] {
            out[a] = true;
            out[b] = true;
        }
    }
    out
}
