//! Undoable annotation state over one mesh.
//!
//! A session owns the planar segmentation, the face labels and the pixel
//! masks of a mesh plus every user-tunable threshold. Proposals (gesture
//! candidates, extractions, matches, texture regions) are computed from the
//! current state without touching it; only [`Action`]s mutate it, and each
//! one pushes an exact inverse onto the undo stack.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::face::{
    candidate_faces, extract_protrusions, gesture_ratio, match_planar_segments, match_protrusions, FaceError,
    Gesture, GestureKind, MatchParams, ProtrusionMatch, ProtrusionParams, ProtrusionProblem, LASSO_RATIO,
};
use crate::geometry::{GeometryError, ShrinkingBall};
use crate::mesh::{
    load_annotations, save_annotations, AnnotationManifest, ClassId, FaceLabelMap, LabelTaxonomy, MeshError,
    PixelLabelMask, TexturedMesh,
};
use crate::segmentation::{oversegment, SegmentParams, Segmentation, SegmentationError};
use crate::texture::{
    build_canvas, compute_superpixels, fine_segment, local_expand, match_regions, ExpandParams, GrabCutParams,
    MatchRegionParams, Region, SuperpixelParams, Superpixels, TextureCanvas, TextureError,
};

pub const SESSION_FILE: &str = "session.json";

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("class {class} cannot label {track}")]
    ClassNotAllowed { class: ClassId, track: &'static str },
    #[error("face {0} out of range")]
    UnknownFace(usize),
    #[error("segment {0} out of range")]
    UnknownSegment(usize),
    #[error("nothing to {0}")]
    EmptyStack(&'static str),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl SessionError {
    /// Whether the error stems from the request rather than the server.
    pub fn is_validation(&self) -> bool {
        !matches!(self, SessionError::Mesh(MeshError::Io(_)) | SessionError::Geometry(_))
    }
}

/// Every user-tunable threshold of the workflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionParams {
    pub segmentation: SegmentParams,
    /// η and λ^f.
    pub protrusion: ProtrusionParams,
    /// ε^(seg) for planar-segment matching.
    pub eps_seg: f64,
    /// ε^(str), structural scale s and matching switches.
    pub matching: MatchParams,
    pub superpixels: SuperpixelParams,
    /// α and λ^s.
    pub expand: ExpandParams,
    pub grabcut: GrabCutParams,
    /// ε^(seed), ε^(reg) and s^(reg).
    pub regions: MatchRegionParams,
    /// Endpoint ratio at or below which a gesture is a lasso.
    pub lasso_ratio: f64,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            segmentation: SegmentParams::default(),
            protrusion: ProtrusionParams::default(),
            eps_seg: 30.0,
            matching: MatchParams::default(),
            superpixels: SuperpixelParams::default(),
            expand: ExpandParams::default(),
            grabcut: GrabCutParams::default(),
            regions: MatchRegionParams::default(),
            lasso_ratio: LASSO_RATIO,
        }
    }
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidPayload(m.to_string()));
        if !(self.eps_seg > 0.0) {
            return bad("eps_seg must be positive");
        }
        if !(self.lasso_ratio >= 0.0 && self.lasso_ratio <= 1.0) {
            return bad("lasso_ratio must lie in [0, 1]");
        }
        if !(self.protrusion.eta >= 0.0 && self.protrusion.lambda >= 0.0) {
            return bad("protrusion weights must be non-negative");
        }
        if !(self.matching.scale >= 1.0 && self.matching.eps_str > 0.0) {
            return bad("matching scale must be ≥ 1 and eps_str positive");
        }
        if !(self.expand.alpha > 0.0 && self.expand.lambda >= 0.0) {
            return bad("expansion alpha must be positive and lambda non-negative");
        }
        if self.superpixels.region_size == 0 {
            return bad("superpixel region size must be positive");
        }
        if !(self.regions.scale >= 1.0) {
            return bad("region scale must be ≥ 1");
        }
        Ok(())
    }
}

/// A committed user edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    LabelFaces { faces: Vec<usize>, class: ClassId },
    /// Texels in the canvas coordinates of `segment`.
    LabelPixels { segment: usize, texels: Vec<[u32; 2]>, class: ClassId },
    MergeSegments { segments: Vec<usize> },
    SplitSegment { segment: usize, parts: Vec<Vec<usize>> },
    SetParams { params: SessionParams },
}

/// Reversible form of an applied action.
#[derive(Debug, Clone)]
enum Edit {
    Faces { faces: Vec<usize>, before: Vec<ClassId>, after: ClassId },
    Pixels { texels: Vec<(usize, u32, u32)>, before: Vec<ClassId>, after: ClassId },
    Segments { before: Arc<Segmentation>, after: Arc<Segmentation> },
    Params { before: Box<SessionParams>, after: Box<SessionParams> },
}

/// Comparable snapshot of everything an action can change.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub face_labels: FaceLabelMap,
    pub masks: PixelLabelMask,
    pub face_segment: Vec<usize>,
    pub params: SessionParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub version: u64,
    pub faces: usize,
    pub segments: usize,
    pub pages: usize,
    pub can_undo: bool,
    pub can_redo: bool,
    pub params: SessionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureProposal {
    pub kind: GestureKind,
    pub ratio: f64,
    pub candidate_faces: Vec<usize>,
}

/// Texture canvas of one segment with its superpixels.
#[derive(Debug)]
pub struct SegmentCanvas {
    pub segment: usize,
    pub canvas: TextureCanvas,
    pub superpixels: Superpixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProposal {
    pub texels: Vec<[u32; 2]>,
    pub norm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionFile {
    format_version: u32,
    params: SessionParams,
    segments: Vec<Vec<usize>>,
}

pub struct AnnotationSession {
    id: String,
    mesh: Arc<TexturedMesh>,
    taxonomy: LabelTaxonomy,
    segments: Arc<Segmentation>,
    face_labels: FaceLabelMap,
    masks: PixelLabelMask,
    params: SessionParams,
    initial: (Arc<Segmentation>, SessionParams, FaceLabelMap, PixelLabelMask),
    undo: Vec<Edit>,
    redo: Vec<Edit>,
    version: u64,
    radii: OnceLock<Arc<Vec<f64>>>,
    canvases: Mutex<BTreeMap<usize, Arc<SegmentCanvas>>>,
}

impl std::fmt::Debug for AnnotationSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationSession").field("id", &self.id).field("version", &self.version).finish()
    }
}

fn to_texels(t: &[(u32, u32)]) -> Vec<[u32; 2]> {
    t.iter().map(|&(x, y)| [x, y]).collect()
}

fn from_texels(t: &[[u32; 2]]) -> Vec<(u32, u32)> {
    t.iter().map(|p| (p[0], p[1])).collect()
}

impl AnnotationSession {
    /// New session with default-segmented mesh and all labels unclassified.
    pub fn new(id: impl Into<String>, mesh: Arc<TexturedMesh>, params: SessionParams) -> Result<Self, SessionError> {
        params.validate()?;
        let segments = Arc::new(oversegment(&mesh, &params.segmentation)?);
        let face_labels = FaceLabelMap::unclassified(mesh.face_count());
        let masks = PixelLabelMask::unclassified(&mesh);
        Ok(Self::assemble(id.into(), mesh, LabelTaxonomy::urban(), segments, face_labels, masks, params))
    }

    fn assemble(
        id: String,
        mesh: Arc<TexturedMesh>,
        taxonomy: LabelTaxonomy,
        segments: Arc<Segmentation>,
        face_labels: FaceLabelMap,
        masks: PixelLabelMask,
        params: SessionParams,
    ) -> Self {
        Self {
            id,
            mesh,
            taxonomy,
            initial: (segments.clone(), params, face_labels.clone(), masks.clone()),
            segments,
            face_labels,
            masks,
            params,
            undo: Vec::new(),
            redo: Vec::new(),
            version: 0,
            radii: OnceLock::new(),
            canvases: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn mesh(&self) -> &TexturedMesh {
        &self.mesh
    }

    pub fn taxonomy(&self) -> &LabelTaxonomy {
        &self.taxonomy
    }

    pub fn segmentation(&self) -> &Segmentation {
        &self.segments
    }

    pub fn face_labels(&self) -> &FaceLabelMap {
        &self.face_labels
    }

    pub fn masks(&self) -> &PixelLabelMask {
        &self.masks
    }

    pub fn params(&self) -> &SessionParams {
        &self.params
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            version: self.version,
            faces: self.mesh.face_count(),
            segments: self.segments.len(),
            pages: self.mesh.pages().len(),
            can_undo: !self.undo.is_empty(),
            can_redo: !self.redo.is_empty(),
            params: self.params,
        }
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            face_labels: self.face_labels.clone(),
            masks: self.masks.clone(),
            face_segment: self.segments.face_segment.clone(),
            params: self.params,
        }
    }

    fn segment(&self, id: usize) -> Result<&crate::segmentation::PlanarSegment, SessionError> {
        self.segments.get(id).ok_or(SessionError::UnknownSegment(id))
    }

    fn check_faces(&self, faces: &[usize]) -> Result<(), SessionError> {
        match faces.iter().find(|&&f| f >= self.mesh.face_count()) {
            Some(&f) => Err(SessionError::UnknownFace(f)),
            None => Ok(()),
        }
    }

    // ---- proposals ----

    pub fn gesture(
        &self,
        polyline: Vec<[f64; 2]>,
        hits: Vec<usize>,
        visible: Option<Vec<usize>>,
    ) -> Result<GestureProposal, SessionError> {
        let ratio = gesture_ratio(&polyline)?;
        let kind = if ratio <= self.params.lasso_ratio { GestureKind::Lasso } else { GestureKind::Stroke };
        let g = Gesture { points: polyline, hits, visible, kind, ratio };
        let candidate_faces = candidate_faces(&self.mesh, &self.segments, &g)?;
        Ok(GestureProposal { kind, ratio, candidate_faces })
    }

    fn radii(&self) -> Result<Arc<Vec<f64>>, SessionError> {
        if let Some(r) = self.radii.get() {
            return Ok(r.clone());
        }
        let r = Arc::new(ShrinkingBall::compute(&self.mesh)?.radii);
        Ok(self.radii.get_or_init(|| r).clone())
    }

    /// Protrusion faces among the candidates.
    pub fn extract(&self, candidates: &[usize]) -> Result<Vec<usize>, SessionError> {
        self.check_faces(candidates)?;
        let radii = self.radii()?;
        let p = ProtrusionProblem::build(&self.mesh, &self.segments, candidates, &radii, self.params.protrusion)?;
        Ok(extract_protrusions(&p)?)
    }

    pub fn match_segments(&self, template: usize) -> Result<Vec<(usize, f64)>, SessionError> {
        let t = self.segment(template)?;
        Ok(match_planar_segments(t, &self.segments.segments, self.params.eps_seg, self.params.matching.use_color)?)
    }

    pub fn match_protrusions(&self, template: &[usize]) -> Result<Vec<ProtrusionMatch>, SessionError> {
        self.check_faces(template)?;
        Ok(match_protrusions(&self.mesh, &self.segments, template, &self.params.matching)?)
    }

    /// Canvas and superpixels of a segment, cached until the segmentation
    /// or the superpixel parameters change.
    pub fn canvas(&self, segment: usize) -> Result<Arc<SegmentCanvas>, SessionError> {
        if let Some(c) = self.canvases.lock().expect("canvas cache").get(&segment) {
            return Ok(c.clone());
        }
        let canvas = build_canvas(&self.mesh, self.segment(segment)?)?;
        let superpixels = compute_superpixels(&canvas, &self.params.superpixels)?;
        let entry = Arc::new(SegmentCanvas { segment, canvas, superpixels });
        Ok(self.canvases.lock().expect("canvas cache").entry(segment).or_insert(entry).clone())
    }

    pub fn expand(&self, segment: usize, texel: [u32; 2]) -> Result<Vec<[u32; 2]>, SessionError> {
        let c = self.canvas(segment)?;
        let r = local_expand(&c.canvas, &c.superpixels, (texel[0], texel[1]), &self.params.expand)?;
        Ok(to_texels(&r.texels))
    }

    fn region(&self, c: &SegmentCanvas, texels: &[[u32; 2]]) -> Result<Region, SessionError> {
        if let Some(p) = texels.iter().find(|p| p[0] >= c.canvas.width() || p[1] >= c.canvas.height()) {
            return Err(TextureError::Uncovered(p[0], p[1]).into());
        }
        Ok(Region::new(&c.canvas, &c.superpixels, from_texels(texels), self.params.regions.seed)?)
    }

    pub fn refine(&self, segment: usize, region: &[[u32; 2]]) -> Result<Vec<[u32; 2]>, SessionError> {
        let c = self.canvas(segment)?;
        let r = self.region(&c, region)?;
        Ok(to_texels(&fine_segment(&c.canvas, &r, &self.params.grabcut)?))
    }

    pub fn match_regions(&self, segment: usize, template: &[[u32; 2]]) -> Result<Vec<RegionProposal>, SessionError> {
        let c = self.canvas(segment)?;
        let t = self.region(&c, template)?;
        Ok(match_regions(&c.canvas, &c.superpixels, &t, &self.params.regions)?
            .into_iter()
            .map(|m| RegionProposal { texels: to_texels(&m.region.texels), norm: m.norm })
            .collect())
    }

    // ---- mutations ----

    fn class_for(&self, class: ClassId, face: bool) -> Result<(), SessionError> {
        let c = self.taxonomy.get(class).ok_or(SessionError::UnknownClass(class))?;
        match face {
            true if !c.role.allows_face() => Err(SessionError::ClassNotAllowed { class, track: "faces" }),
            false if !c.role.allows_pixel() => Err(SessionError::ClassNotAllowed { class, track: "pixels" }),
            _ => Ok(()),
        }
    }

    fn build_edit(&self, action: &Action) -> Result<Edit, SessionError> {
        Ok(match action {
            Action::LabelFaces { faces, class } => {
                self.class_for(*class, true)?;
                self.check_faces(faces)?;
                let faces: Vec<usize> = faces.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
                if faces.is_empty() {
                    return Err(SessionError::InvalidPayload("no faces".into()));
                }
                let before = faces.iter().map(|&f| self.face_labels.labels[f]).collect();
                Edit::Faces { faces, before, after: *class }
            }
            Action::LabelPixels { segment, texels, class } => {
                self.class_for(*class, false)?;
                let c = self.canvas(*segment)?;
                let mut page: BTreeSet<(usize, u32, u32)> = BTreeSet::new();
                for p in texels {
                    let hit = (p[0] < c.canvas.width() && p[1] < c.canvas.height())
                        .then(|| c.canvas.to_page(p[0], p[1]))
                        .flatten()
                        .filter(|_| c.canvas.is_covered(p[0], p[1]));
                    page.insert(hit.ok_or(TextureError::Uncovered(p[0], p[1]))?);
                }
                if page.is_empty() {
                    return Err(SessionError::InvalidPayload("no texels".into()));
                }
                let texels: Vec<(usize, u32, u32)> = page.into_iter().collect();
                let before = texels.iter().map(|&(pg, x, y)| self.masks.pages[pg].get(x, y)).collect();
                Edit::Pixels { texels, before, after: *class }
            }
            Action::MergeSegments { segments } => {
                let (after, _) = self.segments.merge(&self.mesh, segments)?;
                Edit::Segments { before: self.segments.clone(), after: Arc::new(after) }
            }
            Action::SplitSegment { segment, parts } => {
                let after = self.segments.split(&self.mesh, *segment, parts)?;
                Edit::Segments { before: self.segments.clone(), after: Arc::new(after) }
            }
            Action::SetParams { params } => {
                params.validate()?;
                Edit::Params { before: Box::new(self.params), after: Box::new(*params) }
            }
        })
    }

    fn apply_edit(&mut self, edit: &Edit, forward: bool) {
        match edit {
            Edit::Faces { faces, before, after } => {
                for (i, &f) in faces.iter().enumerate() {
                    self.face_labels.labels[f] = if forward { *after } else { before[i] };
                }
            }
            Edit::Pixels { texels, before, after } => {
                for (i, &(p, x, y)) in texels.iter().enumerate() {
                    self.masks.pages[p].set(x, y, if forward { *after } else { before[i] });
                }
            }
            Edit::Segments { before, after } => {
                self.segments = if forward { after.clone() } else { before.clone() };
                self.canvases.lock().expect("canvas cache").clear();
            }
            Edit::Params { before, after } => {
                let next = if forward { **after } else { **before };
                if next.superpixels != self.params.superpixels {
                    self.canvases.lock().expect("canvas cache").clear();
                }
                self.params = next;
            }
        }
    }

    /// Commits an action and returns the new version.
    pub fn apply(&mut self, action: &Action) -> Result<u64, SessionError> {
        let edit = self.build_edit(action)?;
        self.apply_edit(&edit, true);
        self.undo.push(edit);
        self.redo.clear();
        self.version += 1;
        Ok(self.version)
    }

    pub fn undo(&mut self) -> Result<u64, SessionError> {
        let edit = self.undo.pop().ok_or(SessionError::EmptyStack("undo"))?;
        self.apply_edit(&edit, false);
        self.redo.push(edit);
        self.version += 1;
        Ok(self.version)
    }

    pub fn redo(&mut self) -> Result<u64, SessionError> {
        let edit = self.redo.pop().ok_or(SessionError::EmptyStack("redo"))?;
        self.apply_edit(&edit, true);
        self.undo.push(edit);
        self.version += 1;
        Ok(self.version)
    }

    /// State obtained by replaying the undo stack on the initial state.
    pub fn replay(&self) -> SessionState {
        let (segments, params, face_labels, masks) = self.initial.clone();
        let mut s = Self::assemble(String::new(), self.mesh.clone(), self.taxonomy.clone(), segments, face_labels, masks, params);
        for e in &self.undo {
            s.apply_edit(e, true);
        }
        s.state()
    }

    // ---- persistence ----

    /// Writes the annotation files plus the session's segmentation and
    /// parameters.
    pub fn export(&self, dir: &Path) -> Result<AnnotationManifest, SessionError> {
        let manifest = save_annotations(&self.mesh, &self.taxonomy, &self.face_labels, &self.masks, dir)?;
        let file = SessionFile { format_version: 1, params: self.params, segments: self.segments.groups() };
        let mut w = BufWriter::new(File::create(dir.join(SESSION_FILE)).map_err(MeshError::from)?);
        serde_json::to_writer_pretty(&mut w, &file).map_err(|e| MeshError::Parse(e.to_string()))?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(MeshError::from)?;
        Ok(manifest)
    }

    /// Session restored from an export of the same mesh. Without a session
    /// file the mesh is segmented with default parameters.
    pub fn import(id: impl Into<String>, mesh: Arc<TexturedMesh>, dir: &Path) -> Result<Self, SessionError> {
        let (taxonomy, face_labels, masks) = load_annotations(&mesh, dir)?;
        let path = dir.join(SESSION_FILE);
        let (params, segments) = if path.exists() {
            let f: SessionFile = serde_json::from_reader(BufReader::new(File::open(&path).map_err(MeshError::from)?))
                .map_err(|e| MeshError::Parse(format!("{SESSION_FILE}: {e}")))?;
            f.params.validate()?;
            let mut seen = vec![false; mesh.face_count()];
            for &face in f.segments.iter().flatten() {
                if face >= seen.len() || std::mem::replace(&mut seen[face], true) {
                    return Err(SessionError::InvalidPayload(format!("segment groups reuse or exceed face {face}")));
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(SessionError::InvalidPayload("segment groups do not cover the mesh".into()));
            }
            (f.params, Segmentation::from_groups(&mesh, f.segments))
        } else {
            let p = SessionParams::default();
            (p, oversegment(&mesh, &p.segmentation)?)
        };
        Ok(Self::assemble(id.into(), mesh, taxonomy, Arc::new(segments), face_labels, masks, params))
    }
}
