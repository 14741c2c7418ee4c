//! Face-based annotation: gesture selection, protrusion extraction and 3D
//! template matching.

mod matching;
mod protrusion;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyError;
use crate::geometry::GeometryError;
use crate::mesh::TexturedMesh;
use crate::segmentation::Segmentation;

pub use matching::{
    match_planar_segments, match_protrusions, protrusion_feature_vector, segment_feature_vector, support_segment,
    MatchParams, ProtrusionFeatureVector, ProtrusionMatch, SegmentFeatureVector,
};
pub use protrusion::{extract_protrusions, protrusion_score, FaceScore, ProtrusionParams, ProtrusionProblem};

/// Endpoint-distance ratio at or below which a gesture is a lasso.
pub const LASSO_RATIO: f64 = 0.2;
/// Fraction of a segment's visible faces a lasso must hit.
pub const LASSO_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FaceError {
    #[error("a gesture needs at least two points")]
    TooFewPoints,
    #[error("gesture has a zero-size bounding box")]
    DegenerateGesture,
    #[error("gesture hit no faces")]
    EmptyHits,
    #[error("face {0} out of range")]
    UnknownFace(usize),
    #[error("no candidate faces")]
    EmptyCandidates,
    #[error("template segment has zero area")]
    ZeroAreaTemplate,
    #[error("empty protrusion")]
    EmptyProtrusion,
    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureKind {
    Lasso,
    Stroke,
}

/// A screen-space gesture with the faces the UI's ID buffer reported under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gesture {
    pub points: Vec<[f64; 2]>,
    pub hits: Vec<usize>,
    /// Faces visible in the viewport when the gesture was drawn; `None`
    /// treats every face as visible.
    #[serde(default)]
    pub visible: Option<Vec<usize>>,
    pub kind: GestureKind,
    pub ratio: f64,
}

/// ‖first − last‖ / bbox-diagonal of the polyline.
pub fn gesture_ratio(points: &[[f64; 2]]) -> Result<f64, FaceError> {
    if points.len() < 2 {
        return Err(FaceError::TooFewPoints);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diag = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    if !(diag > 0.0) {
        return Err(FaceError::DegenerateGesture);
    }
    let (a, b) = (points[0], points[points.len() - 1]);
    Ok((a[0] - b[0]).hypot(a[1] - b[1]) / diag)
}

pub fn classify_gesture(points: Vec<[f64; 2]>, hits: Vec<usize>) -> Result<Gesture, FaceError> {
    let ratio = gesture_ratio(&points)?;
    let kind = if ratio <= LASSO_RATIO { GestureKind::Lasso } else { GestureKind::Stroke };
    Ok(Gesture { points, hits, visible: None, kind, ratio })
}

/// Faces selected by a gesture, as whole planar segments, sorted.
///
/// A lasso keeps every segment with at least half of its visible faces
/// hit; a stroke keeps the segments of the hit faces and their 1-ring.
pub fn candidate_faces(mesh: &TexturedMesh, segments: &Segmentation, gesture: &Gesture) -> Result<Vec<usize>, FaceError> {
    if gesture.hits.is_empty() {
        return Err(FaceError::EmptyHits);
    }
    let n = mesh.face_count();
    for &f in gesture.hits.iter().chain(gesture.visible.iter().flatten()) {
        if f >= n {
            return Err(FaceError::UnknownFace(f));
        }
    }
    let hits: BTreeSet<usize> = gesture.hits.iter().copied().collect();
    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    match gesture.kind {
        GestureKind::Lasso => {
            let visible: Option<BTreeSet<usize>> = gesture.visible.as_ref().map(|v| v.iter().copied().collect());
            let touched: BTreeSet<usize> = hits.iter().map(|&f| segments.segment_of(f)).collect();
            for s in touched {
                let faces = &segments.segments[s].faces;
                let vis: Vec<usize> = match &visible {
                    Some(v) => faces.iter().copied().filter(|f| v.contains(f) || hits.contains(f)).collect(),
                    None => faces.clone(),
                };
                let hit = vis.iter().filter(|f| hits.contains(f)).count();
                if hit as f64 >= LASSO_COVERAGE * vis.len() as f64 {
                    chosen.insert(s);
                }
            }
        }
        GestureKind::Stroke => {
            for &f in &hits {
                chosen.insert(segments.segment_of(f));
                for &g in mesh.neighbors(f) {
                    chosen.insert(segments.segment_of(g as usize));
                }
            }
        }
    }
    let mut out: Vec<usize> = chosen.iter().flat_map(|&s| segments.segments[s].faces.iter().copied()).collect();
    out.sort_unstable();
    Ok(out)
}
