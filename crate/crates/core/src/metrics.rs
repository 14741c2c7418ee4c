//! Segmentation scores, boundary IoU and user-study aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mesh::{ClassId, FaceLabelMap, LabelRaster, PixelLabelMask, TexturedMesh};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    Empty,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {0} is not in the confusion matrix")]
    UnknownClass(ClassId),
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("duplicate record for scene {scene}, user {user}")]
    DuplicateRecord { scene: String, user: String },
    #[error("no records")]
    NoRecords,
}

/// Rows are truth, columns prediction; weights are face areas or texel
/// counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    weights: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<ClassId>) -> Self {
        let n = classes.len();
        Self { classes, weights: vec![0.0; n * n] }
    }

    pub fn from_weights(classes: Vec<ClassId>, weights: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let n = classes.len();
        if weights.len() != n || weights.iter().any(|r| r.len() != n) {
            return Err(MetricsError::ShapeMismatch(format!("expected {n}×{n}")));
        }
        let flat: Vec<f64> = weights.into_iter().flatten().collect();
        if let Some(&w) = flat.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(MetricsError::InvalidWeight(w));
        }
        Ok(Self { classes, weights: flat })
    }

    fn index(&self, c: ClassId) -> Result<usize, MetricsError> {
        self.classes.iter().position(|&k| k == c).ok_or(MetricsError::UnknownClass(c))
    }

    pub fn get(&self, truth: usize, pred: usize) -> f64 {
        self.weights[truth * self.classes.len() + pred]
    }

    pub fn add(&mut self, truth: ClassId, pred: ClassId, weight: f64) -> Result<(), MetricsError> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(MetricsError::InvalidWeight(weight));
        }
        let (t, p) = (self.index(truth)?, self.index(pred)?);
        let n = self.classes.len();
        self.weights[t * n + p] += weight;
        Ok(())
    }

    /// Area-weighted confusion of two face labelings over `classes`. Faces
    /// whose truth is `ignore` are skipped.
    pub fn from_faces(
        mesh: &TexturedMesh,
        truth: &FaceLabelMap,
        pred: &FaceLabelMap,
        classes: Vec<ClassId>,
        ignore: Option<ClassId>,
    ) -> Result<Self, MetricsError> {
        let n = mesh.face_count();
        if truth.labels.len() != n || pred.labels.len() != n {
            return Err(MetricsError::ShapeMismatch(format!("label maps must have {n} faces")));
        }
        let mut m = Self::new(classes);
        for f in (0..n).filter(|&f| Some(truth.labels[f]) != ignore) {
            m.add(truth.labels[f], pred.labels[f], mesh.face_area(f))?;
        }
        Ok(m)
    }

    /// Texel-count confusion over covered texels whose truth is not
    /// `ignore`.
    pub fn from_pixels(
        mesh: &TexturedMesh,
        truth: &PixelLabelMask,
        pred: &PixelLabelMask,
        classes: Vec<ClassId>,
        ignore: Option<ClassId>,
    ) -> Result<Self, MetricsError> {
        if truth.pages.len() != mesh.pages().len() || pred.pages.len() != truth.pages.len() {
            return Err(MetricsError::ShapeMismatch("page count".into()));
        }
        let mut m = Self::new(classes);
        for (p, (t, q)) in truth.pages.iter().zip(&pred.pages).enumerate() {
            if (t.width, t.height) != (q.width, q.height) {
                return Err(MetricsError::ShapeMismatch(format!("page {p}")));
            }
            for y in 0..t.height {
                for x in 0..t.width {
                    if mesh.texel_owner(p, x, y).is_some() && Some(t.get(x, y)) != ignore {
                        m.add(t.get(x, y), q.get(x, y), 1.0)?;
                    }
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: ClassId,
    /// `None` when the class is absent from truth and prediction.
    pub iou: Option<f64>,
    pub truth_weight: f64,
    pub pred_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub per_class: Vec<ClassScore>,
    pub oa: f64,
    pub macc: f64,
    pub miou: f64,
}

pub fn segmentation_scores(m: &ConfusionMatrix) -> Result<SegmentationScores, MetricsError> {
    let n = m.classes.len();
    let total: f64 = m.weights.iter().sum();
    if !(total > 0.0) {
        return Err(MetricsError::Empty);
    }
    let mut per_class = Vec::with_capacity(n);
    let (mut trace, mut recalls, mut ious) = (0.0, Vec::new(), Vec::new());
    for c in 0..n {
        let tp = m.get(c, c);
        let truth: f64 = (0..n).map(|p| m.get(c, p)).sum();
        let pred: f64 = (0..n).map(|t| m.get(t, c)).sum();
        trace += tp;
        if truth > 0.0 {
            recalls.push(tp / truth);
        }
        let union = truth + pred - tp;
        let iou = (union > 0.0).then(|| tp / union);
        if let Some(v) = iou {
            ious.push(v);
        }
        per_class.push(ClassScore { class: m.classes[c], iou, truth_weight: truth, pred_weight: pred });
    }
    Ok(SegmentationScores { per_class, oa: trace / total, macc: mean(&recalls), miou: mean(&ious) })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 }
}

/// Mean of per-class IoUs as reported in result tables.
pub fn mean_iou(per_class: &[f64]) -> f64 {
    mean(per_class)
}

/// Default raster band: 2 % of the image diagonal, at least one texel.
pub fn default_band(width: u32, height: u32) -> u32 {
    ((0.02 * (width as f64).hypot(height as f64)).round() as u32).max(1)
}

/// Texels of `mask` within chessboard distance `band` of a texel outside it
/// (the image border counts as outside).
fn inner_band(mask: &[bool], w: usize, h: usize, band: u32) -> Vec<bool> {
    // chessboard distance to the nearest outside texel, two-pass
    let inf = u32::MAX / 2;
    let mut d = vec![inf; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask[i] {
                d[i] = 0;
                continue;
            }
            let mut v = if x == 0 || y == 0 { 1 } else { inf };
            if x > 0 {
                v = v.min(d[i - 1] + 1);
            }
            if y > 0 {
                v = v.min(d[i - w] + 1);
                if x > 0 {
                    v = v.min(d[i - w - 1] + 1);
                }
                if x + 1 < w {
                    v = v.min(d[i - w + 1] + 1);
                }
            }
            d[i] = v;
        }
    }
    for y in (0..h).rev() {
        for x in (0..w).rev() {
            let i = y * w + x;
            if d[i] == 0 {
                continue;
            }
            let mut v = d[i];
            if x + 1 == w || y + 1 == h {
                v = v.min(1);
            }
            if x + 1 < w {
                v = v.min(d[i + 1] + 1);
            }
            if y + 1 < h {
                v = v.min(d[i + w] + 1);
                if x + 1 < w {
                    v = v.min(d[i + w + 1] + 1);
                }
                if x > 0 {
                    v = v.min(d[i + w - 1] + 1);
                }
            }
            d[i] = v;
        }
    }
    d.iter().map(|&v| v > 0 && v <= band).collect()
}

/// Boundary IoU of two label rasters: per class, IoU of the masks'
/// inner boundary bands; averaged over classes present in either raster.
pub fn boundary_iou(pred: &LabelRaster, truth: &LabelRaster, band: u32) -> Result<f64, MetricsError> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(MetricsError::ShapeMismatch(format!(
            "{}×{} vs {}×{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let (w, h) = (truth.width as usize, truth.height as usize);
    let classes: BTreeSet<ClassId> = pred.data.iter().chain(&truth.data).copied().collect();
    let mut scores = Vec::new();
    for c in classes {
        let g: Vec<bool> = truth.data.iter().map(|&v| v == c).collect();
        let p: Vec<bool> = pred.data.iter().map(|&v| v == c).collect();
        let (gb, pb) = (inner_band(&g, w, h, band), inner_band(&p, w, h, band));
        let inter = gb.iter().zip(&pb).filter(|(a, b)| **a && **b).count();
        let union = gb.iter().zip(&pb).filter(|(a, b)| **a || **b).count();
        if union > 0 {
            scores.push(inter as f64 / union as f64);
        }
    }
    Ok(mean(&scores))
}

/// Mesh boundary IoU: a face is in a labeling's band when an adjacent face
/// carries a different label; per-class area IoU of the bands, averaged
/// over classes present in either labeling.
pub fn face_boundary_iou(mesh: &TexturedMesh, pred: &FaceLabelMap, truth: &FaceLabelMap) -> Result<f64, MetricsError> {
    let n = mesh.face_count();
    if pred.labels.len() != n || truth.labels.len() != n {
        return Err(MetricsError::ShapeMismatch(format!("label maps must have {n} faces")));
    }
    let band = |l: &FaceLabelMap| -> Vec<bool> {
        (0..n).map(|f| mesh.neighbors(f).iter().any(|&g| l.labels[g as usize] != l.labels[f])).collect()
    };
    let (gb, pb) = (band(truth), band(pred));
    let classes: BTreeSet<ClassId> = pred.labels.iter().chain(&truth.labels).copied().collect();
    let mut scores = Vec::new();
    for c in classes {
        let (mut inter, mut union) = (0.0, 0.0);
        for f in 0..n {
            let g = gb[f] && truth.labels[f] == c;
            let p = pb[f] && pred.labels[f] == c;
            let a = mesh.face_area(f);
            if g && p {
                inter += a;
            }
            if g || p {
                union += a;
            }
        }
        if union > 0.0 {
            scores.push(inter / union);
        }
    }
    Ok(mean(&scores))
}

/// One user's session on one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserStudyRecord {
    pub scene: String,
    pub user: String,
    #[serde(default)]
    pub class_iou: Vec<f64>,
    #[serde(default)]
    pub class_biou: Vec<f64>,
    pub operations: f64,
    pub time_s: f64,
    /// Share of smart-tool interactions in `[0, 1]`.
    #[serde(default)]
    pub smart_ratio: Option<f64>,
}

/// Scene-averaged study results. Quality and smart-ratio means are `None`
/// when no record reports them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserStudySummary {
    pub m: Option<f64>,
    pub b: Option<f64>,
    pub o: f64,
    pub t: f64,
    pub s: Option<f64>,
}

fn mean_opt(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.into_iter().flatten().collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// Per-scene means over users (class IoUs are first averaged per record),
/// then the unweighted mean over scenes.
pub fn aggregate_user_study(records: &[UserStudyRecord]) -> Result<UserStudySummary, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut scenes: BTreeMap<&str, Vec<&UserStudyRecord>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert((&r.scene, &r.user)) {
            return Err(MetricsError::DuplicateRecord { scene: r.scene.clone(), user: r.user.clone() });
        }
        scenes.entry(&r.scene).or_default().push(r);
    }
    let per_scene: Vec<(Option<f64>, Option<f64>, f64, f64, Option<f64>)> = scenes
        .values()
        .map(|rs| {
            let m = mean_opt(rs.iter().map(|r| (!r.class_iou.is_empty()).then(|| mean(&r.class_iou))));
            let b = mean_opt(rs.iter().map(|r| (!r.class_biou.is_empty()).then(|| mean(&r.class_biou))));
            let o = mean(&rs.iter().map(|r| r.operations).collect::<Vec<_>>());
            let t = mean(&rs.iter().map(|r| r.time_s).collect::<Vec<_>>());
            let s = mean_opt(rs.iter().map(|r| r.smart_ratio));
            (m, b, o, t, s)
        })
        .collect();
    Ok(UserStudySummary {
        m: mean_opt(per_scene.iter().map(|s| s.0)),
        b: mean_opt(per_scene.iter().map(|s| s.1)),
        o: mean(&per_scene.iter().map(|s| s.2).collect::<Vec<_>>()),
        t: mean(&per_scene.iter().map(|s| s.3).collect::<Vec<_>>()),
        s: mean_opt(per_scene.iter().map(|s| s.4)),
    })
}
