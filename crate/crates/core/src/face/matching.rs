use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FaceError;
use crate::color::ciede2000;
use crate::geometry::{convex_hull_volume, eigen_features, point_triangle_distance, EigenFeatures, KdTree, Plane};
use crate::mesh::TexturedMesh;
use crate::segmentation::{PlanarSegment, Segmentation};
use crate::Vec3;

/// Differences between a template and a candidate planar segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatureVector {
    pub area: f64,
    /// Metres.
    pub height: f64,
    pub verticality: f64,
    pub sphericity: f64,
    /// CIEDE2000 of mean Lab colours and |Δ excess green|, when enabled.
    pub color: Option<[f64; 2]>,
}

impl SegmentFeatureVector {
    pub fn norm(&self) -> f64 {
        let mut s = self.area.powi(2) + self.height.powi(2) + self.verticality.powi(2) + self.sphericity.powi(2);
        if let Some([de, dg]) = self.color {
            s += de * de + dg * dg;
        }
        s.sqrt()
    }
}

pub fn segment_feature_vector(
    template: &PlanarSegment,
    candidate: &PlanarSegment,
    use_color: bool,
) -> Result<SegmentFeatureVector, FaceError> {
    if !(template.area > 0.0) {
        return Err(FaceError::ZeroAreaTemplate);
    }
    Ok(SegmentFeatureVector {
        area: (candidate.area - template.area).abs() / template.area,
        height: (candidate.mean_height - template.mean_height).abs(),
        verticality: (candidate.verticality - template.verticality).abs(),
        sphericity: (candidate.eigen.sphericity - template.eigen.sphericity).abs(),
        color: use_color.then(|| {
            [ciede2000(candidate.mean_lab, template.mean_lab), (candidate.mean_exg - template.mean_exg).abs()]
        }),
    })
}

/// Scene segments other than the template (by id) with ‖F‖ < ε, as
/// `(id, norm)` sorted by norm then id.
pub fn match_planar_segments(
    template: &PlanarSegment,
    scene: &[PlanarSegment],
    eps: f64,
    use_color: bool,
) -> Result<Vec<(usize, f64)>, FaceError> {
    if !(eps > 0.0) {
        return Err(FaceError::InvalidParams("ε^(seg) must be positive"));
    }
    let scored: Vec<(usize, f64)> = scene
        .par_iter()
        .filter(|c| c.id != template.id)
        .map(|c| segment_feature_vector(template, c, use_color).map(|f| (c.id, f.norm())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out: Vec<(usize, f64)> = scored.into_iter().filter(|&(_, n)| n < eps).collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Differences between two protrusions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtrusionFeatureVector {
    /// Difference of convex-hull / bounding-box volume ratios.
    pub volume: f64,
    /// `(max(n_t,n_c)/min(n_t,n_c))^min(n_t,n_c)` over planar segment counts.
    pub count: f64,
    pub linearity: f64,
    pub planarity: f64,
    pub sphericity: f64,
}

impl ProtrusionFeatureVector {
    pub fn norm(&self) -> f64 {
        (self.volume.powi(2) + self.count.powi(2) + self.linearity.powi(2) + self.planarity.powi(2) + self.sphericity.powi(2))
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
struct ProtrusionShape {
    fill: f64,
    segments: usize,
    eigen: EigenFeatures,
}

fn protrusion_shape(mesh: &TexturedMesh, segments: &Segmentation, faces: &[usize]) -> Result<ProtrusionShape, FaceError> {
    if faces.is_empty() {
        return Err(FaceError::EmptyProtrusion);
    }
    let verts: BTreeSet<u32> = faces.iter().flat_map(|&f| mesh.faces()[f]).collect();
    let pts: Vec<Vec3> = verts.iter().map(|&v| mesh.vertices()[v as usize]).collect();
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let box_vol = ext.x * ext.y * ext.z;
    let scale = ext.norm().max(1e-12);
    let fill = if box_vol > 1e-9 * scale.powi(3) { convex_hull_volume(&pts) / box_vol } else { 0.0 };
    let segs: BTreeSet<usize> = faces.iter().map(|&f| segments.segment_of(f)).collect();
    let eigen = eigen_features(&pts).unwrap_or(EigenFeatures { linearity: 0.0, planarity: 0.0, sphericity: 1.0 });
    Ok(ProtrusionShape { fill, segments: segs.len(), eigen })
}

pub fn protrusion_feature_vector(
    mesh: &TexturedMesh,
    segments: &Segmentation,
    template: &[usize],
    candidate: &[usize],
) -> Result<ProtrusionFeatureVector, FaceError> {
    let t = protrusion_shape(mesh, segments, template)?;
    let c = protrusion_shape(mesh, segments, candidate)?;
    Ok(feature_from_shapes(&t, &c))
}

fn feature_from_shapes(t: &ProtrusionShape, c: &ProtrusionShape) -> ProtrusionFeatureVector {
    let (lo, hi) = (t.segments.min(c.segments) as f64, t.segments.max(c.segments) as f64);
    ProtrusionFeatureVector {
        volume: (c.fill - t.fill).abs(),
        count: (hi / lo).powf(lo),
        linearity: (c.eigen.linearity - t.eigen.linearity).abs(),
        planarity: (c.eigen.planarity - t.eigen.planarity).abs(),
        sphericity: (c.eigen.sphericity - t.eigen.sphericity).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Structural scale `s` of the expansion constraints.
    pub scale: f64,
    pub eps_str: f64,
    pub topology_constrained: bool,
    pub use_color: bool,
    /// Distance (m) at which two surfaces count as touching.
    pub contact_tol: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { scale: 4.0, eps_str: 2.0, topology_constrained: true, use_color: false, contact_tol: 0.1 }
    }
}

impl MatchParams {
    /// ε used to match the template's planar segments when seeding.
    pub fn eps_seed(&self) -> f64 {
        0.5 * self.eps_str
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtrusionMatch {
    pub faces: Vec<usize>,
    pub segments: Vec<usize>,
    pub norm: f64,
}

/// Contact structure shared by support queries.
struct Contact<'a> {
    mesh: &'a TexturedMesh,
    tree: KdTree,
    incident: Vec<Vec<usize>>,
    reach: f64,
}

impl<'a> Contact<'a> {
    fn new(mesh: &'a TexturedMesh, tol: f64) -> Self {
        let mut incident = vec![Vec::new(); mesh.vertices().len()];
        let mut max_edge: f64 = 0.0;
        for (f, tri) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                incident[tri[k] as usize].push(f);
                let (a, b) = (mesh.vertices()[tri[k] as usize], mesh.vertices()[tri[(k + 1) % 3] as usize]);
                max_edge = max_edge.max((a - b).norm());
            }
        }
        Self { mesh, tree: KdTree::new(mesh.vertices().to_vec()), incident, reach: tol + max_edge }
    }

    /// Faces within `tol` of any vertex of `faces`.
    fn touching(&self, faces: &[usize], tol: f64) -> BTreeSet<usize> {
        let verts: BTreeSet<u32> = faces.iter().flat_map(|&f| self.mesh.faces()[f]).collect();
        let mut out = BTreeSet::new();
        for &v in &verts {
            let p = self.mesh.vertices()[v as usize];
            for q in self.tree.within(&p, self.reach) {
                for &g in &self.incident[q] {
                    if !out.contains(&g) && point_triangle_distance(&p, self.mesh.face_vertices(g)) <= tol {
                        out.insert(g);
                    }
                }
            }
        }
        out
    }

    fn support(&self, segments: &Segmentation, faces: &[usize], exclude: &BTreeSet<usize>, tol: f64) -> Option<usize> {
        let touched: BTreeSet<usize> = self
            .touching(faces, tol)
            .into_iter()
            .map(|g| segments.segment_of(g))
            .filter(|s| !exclude.contains(s))
            .collect();
        touched
            .into_iter()
            .max_by(|&a, &b| segments.segments[a].area.total_cmp(&segments.segments[b].area).then(b.cmp(&a)))
    }
}

/// Largest-area segment (not containing any of `faces`) within `tol` of
/// the face set; ties go to the lowest id.
pub fn support_segment(mesh: &TexturedMesh, segments: &Segmentation, faces: &[usize], tol: f64) -> Option<usize> {
    let own: BTreeSet<usize> = faces.iter().map(|&f| segments.segment_of(f)).collect();
    Contact::new(mesh, tol).support(segments, faces, &own, tol)
}

fn lies_on(mesh: &TexturedMesh, seg: &PlanarSegment, plane: &Plane, tol: f64) -> bool {
    seg.faces.iter().all(|&f| mesh.face_vertices(f).iter().all(|v| plane.signed_distance(v).abs() <= tol))
}

/// 3D template matching of a protrusion.
///
/// The template's planar parts seed the search; each seed grows over
/// adjacent segments while every face centre stays within
/// `√s · max_i ‖O^t − O^t_i‖` of the seed centre and the neighbour/seed
/// area ratio stays below `s · max A^t / min A^t`. Segments lying on the
/// template's support plane are never entered. Grown candidates with
/// `‖F^(str)‖ < ε^(str)` (and, when topology-constrained, the same support
/// segment as the template) are returned, disjoint, best first.
pub fn match_protrusions(
    mesh: &TexturedMesh,
    segments: &Segmentation,
    template: &[usize],
    params: &MatchParams,
) -> Result<Vec<ProtrusionMatch>, FaceError> {
    if !(params.scale >= 1.0) {
        return Err(FaceError::InvalidParams("structural scale must be ≥ 1"));
    }
    if !(params.eps_str > 0.0) {
        return Err(FaceError::InvalidParams("ε^(str) must be positive"));
    }
    let template: Vec<usize> = template.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if template.is_empty() {
        return Err(FaceError::EmptyProtrusion);
    }
    if let Some(&f) = template.iter().find(|&&f| f >= mesh.face_count()) {
        return Err(FaceError::UnknownFace(f));
    }

    // template decomposition
    let mut parts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &f in &template {
        parts.entry(segments.segment_of(f)).or_default().push(f);
    }
    let template_segs: BTreeSet<usize> = parts.keys().copied().collect();
    let part_stats: Vec<PlanarSegment> =
        parts.iter().map(|(&id, faces)| segments.part(mesh, id, faces.clone())).collect();
    let areas: Vec<f64> = part_stats.iter().map(|p| p.area).collect();
    if areas.iter().any(|a| !(*a > 0.0)) {
        return Err(FaceError::ZeroAreaTemplate);
    }
    let area_ratio = areas.iter().cloned().fold(0.0, f64::max) / areas.iter().cloned().fold(f64::INFINITY, f64::min);
    let total: f64 = areas.iter().sum();
    let center = template.iter().fold(Vec3::zeros(), |acc, &f| acc + mesh.face_centroid(f) * mesh.face_area(f)) / total;
    let spread = template.iter().map(|&f| (mesh.face_centroid(f) - center).norm()).fold(0.0, f64::max);
    let reach = params.scale.sqrt() * spread;
    let scale_limit = params.scale * area_ratio;

    let contact = Contact::new(mesh, params.contact_tol);
    let support = contact.support(segments, &template, &template_segs, params.contact_tol);
    let support_plane = support.map(|s| segments.segments[s].plane);
    let on_support = |s: usize| {
        Some(s) == support || support_plane.is_some_and(|pl| lies_on(mesh, &segments.segments[s], &pl, params.contact_tol))
    };
    let template_shape = protrusion_shape(mesh, segments, &template)?;

    // seeds
    let mut seeds: Vec<(f64, usize)> = Vec::new();
    for part in &part_stats {
        for (id, norm) in match_planar_segments(part, &segments.segments, params.eps_seed(), params.use_color)? {
            if !template_segs.contains(&id) && !on_support(id) {
                seeds.push((norm, id));
            }
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    seeds.dedup_by_key(|s| s.1);
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut used: BTreeSet<usize> = template_segs.clone();
    let mut tried: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut out = Vec::new();
    for &(_, seed) in &seeds {
        if used.contains(&seed) {
            continue;
        }
        let seed_seg = &segments.segments[seed];
        let mut members = BTreeSet::from([seed]);
        let mut queue = VecDeque::from([seed]);
        while let Some(s) = queue.pop_front() {
            for (&a, _) in segments.neighbors(mesh, s).iter() {
                if members.contains(&a) || used.contains(&a) || on_support(a) {
                    continue;
                }
                let nb = &segments.segments[a];
                if nb.area / seed_seg.area >= scale_limit {
                    continue;
                }
                if nb.faces.iter().any(|&f| (mesh.face_centroid(f) - seed_seg.centroid).norm() >= reach) {
                    continue;
                }
                members.insert(a);
                queue.push_back(a);
            }
        }
        let member_list: Vec<usize> = members.iter().copied().collect();
        if !tried.insert(member_list.clone()) {
            continue;
        }
        let faces: Vec<usize> = {
            let mut v: Vec<usize> = members.iter().flat_map(|&s| segments.segments[s].faces.iter().copied()).collect();
            v.sort_unstable();
            v
        };
        if params.topology_constrained && support.is_some() {
            let own: BTreeSet<usize> = members.clone();
            if contact.support(segments, &faces, &own, params.contact_tol) != support {
                continue;
            }
        }
        let f = feature_from_shapes(&template_shape, &protrusion_shape(mesh, segments, &faces)?);
        let norm = f.norm();
        if norm < params.eps_str {
            used.extend(&members);
            out.push(ProtrusionMatch { faces, segments: member_list, norm });
        }
    }
    out.sort_by(|a, b| a.norm.total_cmp(&b.norm).then(a.faces[0].cmp(&b.faces[0])));
    Ok(out)
}
