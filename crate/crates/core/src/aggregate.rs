//! Pooling of per-view predictions back onto the source mesh.

use crate::decompose::View;
use crate::error::{Error, Result};
use crate::prob::ProbabilityField;

/// Per-vertex mean of all view predictions, plus the number of
/// contributing `(view, view vertex)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub pdf: ProbabilityField,
    pub coverage: Vec<u32>,
}

/// Average every view-vertex distribution onto the source vertex it maps to.
///
/// Several vertices of one view may map to the same source vertex; each pair
/// counts once. Vertices that no view reaches get the uniform distribution.
pub fn project_predictions(
    view_pdfs: &[ProbabilityField],
    views: &[View],
    vertex_count: usize,
    classes: usize,
) -> Result<AggregateResult> {
    let maps: Vec<&[usize]> = views.iter().map(|v| v.correspondence.as_slice()).collect();
    project_with_maps(view_pdfs, &maps, vertex_count, classes)
}

/// [`project_predictions`] on bare correspondence maps.
pub fn project_with_maps(
    view_pdfs: &[ProbabilityField],
    maps: &[&[usize]],
    vertex_count: usize,
    classes: usize,
) -> Result<AggregateResult> {
    if classes == 0 {
        return Err(Error::Dimension("at least one class is required".into()));
    }
    if view_pdfs.len() != maps.len() {
        return Err(Error::Dimension(format!("{} predictions for {} views", view_pdfs.len(), maps.len())));
    }
    for (m, (pdf, map)) in view_pdfs.iter().zip(maps).enumerate() {
        if pdf.classes() != classes {
            return Err(Error::Dimension(format!("view {m} predicts {} classes, expected {classes}", pdf.classes())));
        }
        if pdf.vertex_count() != map.len() {
            return Err(Error::Dimension(format!(
                "view {m} has {} vertices but {} predictions",
                map.len(),
                pdf.vertex_count()
            )));
        }
        if let Some(&t) = map.iter().find(|&&t| t >= vertex_count) {
            return Err(Error::Dimension(format!("view {m} maps to vertex {t} of {vertex_count}")));
        }
    }
    let mut sums = vec![0.0; vertex_count * classes];
    let mut coverage = vec![0u32; vertex_count];
    for (pdf, map) in view_pdfs.iter().zip(maps) {
        for (row, &t) in pdf.rows().zip(map.iter()) {
            coverage[t] += 1;
            for (s, p) in sums[t * classes..(t + 1) * classes].iter_mut().zip(row) {
                *s += p;
            }
        }
    }
    let uniform = 1.0 / classes as f64;
    for (t, &c) in coverage.iter().enumerate() {
        let row = &mut sums[t * classes..(t + 1) * classes];
        if c == 0 {
            row.fill(uniform);
        } else {
            let total: f64 = row.iter().sum();
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }
    Ok(AggregateResult { pdf: ProbabilityField::new(vertex_count, classes, sums)?, coverage })
}
