use std::path::Path;

use anyhow::Result;
use meshannot_core::mesh::{FaceLabelMap, MeshError, PixelLabelMask};
use meshannot_core::metrics::{
    boundary_iou, default_band, face_boundary_iou, segmentation_scores, ConfusionMatrix, MetricsError,
    SegmentationScores,
};
use meshannot_core::sampling::SamplingError;
use meshannot_core::segmentation::SegmentationError;
use meshannot_core::session::SessionError;
use meshannot_core::{ClassId, LabelTaxonomy, TexturedMesh, UNCLASSIFIED};
use serde::Serialize;

/// A user-input problem; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

fn mesh_code(e: &MeshError) -> u8 {
    if matches!(e, MeshError::Io(_)) { 1 } else { 2 }
}

/// Exit status for an error: 2 for validation failures, 1 otherwise.
pub fn classify(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() || cause.is::<MetricsError>() || cause.is::<SegmentationError>() {
            return 2;
        }
        if let Some(m) = cause.downcast_ref::<MeshError>() {
            return mesh_code(m);
        }
        if let Some(s) = cause.downcast_ref::<SamplingError>() {
            return match s {
                SamplingError::Mesh(m) => mesh_code(m),
                _ => 2,
            };
        }
        if let Some(s) = cause.downcast_ref::<SessionError>() {
            return if s.is_validation() { 2 } else { 1 };
        }
    }
    1
}

#[derive(Debug, Serialize)]
pub struct TrackReport {
    pub scores: SegmentationScores,
    pub biou: f64,
}

#[derive(Debug, Serialize)]
pub struct ClassRow {
    pub class: ClassId,
    pub name: String,
    pub face_iou: Option<f64>,
    pub pixel_iou: Option<f64>,
    pub face_truth_weight: f64,
    pub pixel_truth_weight: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub faces: TrackReport,
    /// `None` when no covered texel carries a truth label.
    pub pixels: Option<TrackReport>,
    pub per_class: Vec<ClassRow>,
}

impl EvalReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.per_class {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Face scores are area-weighted, pixel scores count covered texels;
/// entries whose truth is unclassified are ignored.
pub fn evaluate(
    mesh: &TexturedMesh,
    truth: (&FaceLabelMap, &PixelLabelMask),
    pred: (&FaceLabelMap, &PixelLabelMask),
    band: Option<u32>,
) -> Result<EvalReport> {
    let taxonomy = LabelTaxonomy::urban();
    let classes: Vec<ClassId> = taxonomy.classes().iter().map(|c| c.id).collect();
    let fm = ConfusionMatrix::from_faces(mesh, truth.0, pred.0, classes.clone(), Some(UNCLASSIFIED))?;
    let faces = TrackReport { scores: segmentation_scores(&fm)?, biou: face_boundary_iou(mesh, pred.0, truth.0)? };

    let pm = ConfusionMatrix::from_pixels(mesh, truth.1, pred.1, classes.clone(), Some(UNCLASSIFIED))?;
    let pixels = match segmentation_scores(&pm) {
        Ok(scores) => {
            let mut per_page = Vec::new();
            for (t, p) in truth.1.pages.iter().zip(&pred.1.pages) {
                per_page.push(boundary_iou(p, t, band.unwrap_or_else(|| default_band(t.width, t.height)))?);
            }
            let biou = per_page.iter().sum::<f64>() / per_page.len().max(1) as f64;
            Some(TrackReport { scores, biou })
        }
        Err(MetricsError::Empty) => None,
        Err(e) => return Err(e.into()),
    };

    let per_class = taxonomy
        .classes()
        .iter()
        .enumerate()
        .map(|(i, c)| ClassRow {
            class: c.id,
            name: c.name.clone(),
            face_iou: faces.scores.per_class[i].iou,
            pixel_iou: pixels.as_ref().and_then(|p| p.scores.per_class[i].iou),
            face_truth_weight: faces.scores.per_class[i].truth_weight,
            pixel_truth_weight: pixels.as_ref().map_or(0.0, |p| p.scores.per_class[i].truth_weight),
        })
        .collect();
    Ok(EvalReport { faces, pixels, per_class })
}
