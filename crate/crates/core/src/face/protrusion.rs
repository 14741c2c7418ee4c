use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FaceError;
use crate::energy::{solve_binary_labeling, BinaryLabelingProblem};
use crate::geometry::Plane;
use crate::mesh::TexturedMesh;
use crate::segmentation::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtrusionParams {
    /// Sensitivity η of the data term.
    pub eta: f64,
    /// Balance λ^f of the smoothness term.
    pub lambda: f64,
}

impl Default for ProtrusionParams {
    fn default() -> Self {
        Self { eta: 1.0, lambda: 0.5 }
    }
}

/// Distance, angle, weight and score of one face against a support plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceScore {
    pub d: f64,
    pub theta: f64,
    pub omega: f64,
    pub p: f64,
}

/// `p = d + ωθ` with `d` the largest vertex distance to the plane (m),
/// `θ = min(θ̂, 180°−θ̂)/90°` and `ω = 1` beyond one metre, else `1 − d`.
pub fn protrusion_score(mesh: &TexturedMesh, face: usize, support: &Plane) -> FaceScore {
    let d = mesh.face_vertices(face).iter().map(|v| support.signed_distance(v).abs()).fold(0.0, f64::max);
    let cos = mesh.face_normal(face).dot(&support.normal).clamp(-1.0, 1.0);
    let hat = cos.acos().to_degrees();
    let theta = (hat.min(180.0 - hat) / 90.0).clamp(0.0, 1.0);
    let omega = if d > 1.0 { 1.0 } else { 1.0 - d };
    FaceScore { d, theta, omega, p: d + omega * theta }
}

/// Binary support/protrusion labeling over a candidate face set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtrusionProblem {
    /// Sorted candidate faces.
    pub faces: Vec<usize>,
    pub support_segment: usize,
    pub support: Plane,
    pub scores: Vec<FaceScore>,
    /// Shrinking-ball radius per candidate (m).
    pub radii: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    /// Adjacent candidate pairs as positions into `faces`.
    pub edges: Vec<(usize, usize)>,
    pub params: ProtrusionParams,
}

impl ProtrusionProblem {
    /// `radii` holds one shrinking-ball radius per mesh face. The support is
    /// the segment with the largest candidate area (ties → lowest id).
    pub fn build(
        mesh: &TexturedMesh,
        segments: &Segmentation,
        candidates: &[usize],
        radii: &[f64],
        params: ProtrusionParams,
    ) -> Result<Self, FaceError> {
        if !(params.eta.is_finite() && params.eta >= 0.0 && params.lambda.is_finite() && params.lambda >= 0.0) {
            return Err(FaceError::InvalidParams("η and λ must be finite and non-negative"));
        }
        let faces: Vec<usize> = candidates.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if faces.is_empty() {
            return Err(FaceError::EmptyCandidates);
        }
        if let Some(&f) = faces.iter().find(|&&f| f >= mesh.face_count() || f >= radii.len()) {
            return Err(FaceError::UnknownFace(f));
        }
        let mut area: BTreeMap<usize, f64> = BTreeMap::new();
        for &f in &faces {
            *area.entry(segments.segment_of(f)).or_insert(0.0) += mesh.face_area(f);
        }
        let support_segment = area
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&s, _)| s)
            .expect("non-empty candidates");
        let support = segments.segments[support_segment].plane;

        let scores = faces.iter().map(|&f| protrusion_score(mesh, f, &support)).collect();
        let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &f in &faces {
            for v in mesh.face_vertices(f) {
                z_min = z_min.min(v.z);
                z_max = z_max.max(v.z);
            }
        }
        let pos: BTreeMap<usize, usize> = faces.iter().enumerate().map(|(i, &f)| (f, i)).collect();
        let mut edges = Vec::new();
        for (i, &f) in faces.iter().enumerate() {
            for &g in mesh.neighbors(f) {
                if let Some(&j) = pos.get(&(g as usize)) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        Ok(Self {
            radii: faces.iter().map(|&f| radii[f]).collect(),
            faces,
            support_segment,
            support,
            scores,
            z_min,
            z_max,
            edges,
            params,
        })
    }

    /// Geometric consistency `R = 1 − min(1, 2|r_i − r_j| / (z_max − z_min))`.
    pub fn consistency(&self, i: usize, j: usize) -> f64 {
        let span = self.z_max - self.z_min;
        if !(span > 0.0) {
            return 1.0;
        }
        1.0 - (2.0 * (self.radii[i] - self.radii[j]).abs() / span).min(1.0)
    }

    /// Label 0 = support, label 1 = protrusion.
    pub fn labeling_problem(&self) -> BinaryLabelingProblem {
        let eta = self.params.eta;
        let costs = self.scores.iter().map(|s| [eta * s.p, eta * (1.0 - s.p)]).collect();
        let edges = self.edges.iter().map(|&(i, j)| (i, j, self.consistency(i, j))).collect();
        BinaryLabelingProblem::new(costs, edges, self.params.lambda)
    }
}

/// Faces labeled protrusion by the exact min-cut, sorted.
pub fn extract_protrusions(problem: &ProtrusionProblem) -> Result<Vec<usize>, FaceError> {
    if problem.faces.is_empty() {
        return Err(FaceError::EmptyCandidates);
    }
    let labeling = solve_binary_labeling(&problem.labeling_problem())?;
    Ok(problem.faces.iter().zip(&labeling.labels).filter(|(_, &l)| l).map(|(&f, _)| f).collect())
}
