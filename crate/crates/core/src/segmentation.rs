//! Planar over-segmentation by region growing, with merge/split edits.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::color::{excess_green, rgb_to_lab, LabColor};
use crate::geometry::{eigen_features, fit_plane, EigenFeatures, Plane};
use crate::mesh::TexturedMesh;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentationError {
    #[error("unknown segment {0}")]
    UnknownSegment(usize),
    #[error("faces do not form an edge-connected set")]
    Disconnected,
    #[error("partition does not cover segment {0} exactly")]
    NotCovering(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

/// Region-growing thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    pub angle_deg: f64,
    pub dist: f64,
    pub min_faces: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self { angle_deg: 20.0, dist: 0.3, min_faces: 3 }
    }
}

/// Connected near-planar face set with cached statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarSegment {
    pub id: usize,
    /// Sorted face indices.
    pub faces: Vec<usize>,
    pub plane: Plane,
    pub area: f64,
    /// Area-weighted mean of face-centroid heights.
    pub mean_height: f64,
    pub verticality: f64,
    pub eigen: EigenFeatures,
    pub mean_lab: LabColor,
    pub mean_exg: f64,
    /// Area-weighted centroid.
    pub centroid: Vec3,
}

/// Per-face texel colour sums used for segment colour statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FaceColor {
    pub lab_sum: [f64; 3],
    pub exg_sum: f64,
    pub count: f64,
}

/// Texel colour sums per face; faces without texels fall back to the
/// colour under their UV centroid.
pub fn face_colors(mesh: &TexturedMesh) -> Vec<FaceColor> {
    let texels = mesh.texels_by_face();
    (0..mesh.face_count())
        .map(|f| {
            let mut c = FaceColor::default();
            let Some(t) = mesh.face_texture(f) else { return c };
            let img = &mesh.pages()[t.page];
            let add = |c: &mut FaceColor, rgb: [u8; 3]| {
                let lab = rgb_to_lab(rgb);
                c.lab_sum[0] += lab.l;
                c.lab_sum[1] += lab.a;
                c.lab_sum[2] += lab.b;
                c.exg_sum += excess_green(rgb);
                c.count += 1.0;
            };
            for &(x, y) in &texels[f] {
                add(&mut c, img.get_pixel(x, y).0);
            }
            if c.count == 0.0 {
                if let Some(rgb) = mesh.face_centroid_color(f) {
                    add(&mut c, rgb);
                }
            }
            c
        })
        .collect()
}

impl PlanarSegment {
    /// Computes all statistics of a face set from scratch.
    pub fn from_faces(mesh: &TexturedMesh, colors: &[FaceColor], id: usize, mut faces: Vec<usize>) -> Self {
        faces.sort_unstable();
        faces.dedup();
        let area: f64 = faces.iter().map(|&f| mesh.face_area(f)).sum();
        let centroid = faces.iter().fold(Vec3::zeros(), |acc, &f| acc + mesh.face_centroid(f) * mesh.face_area(f)) / area;
        let mean_height = centroid.z;
        let plane = segment_plane(mesh, &faces);
        let verticality = 1.0 - plane.normal.z.abs().min(1.0);

        let verts: BTreeSet<u32> = faces.iter().flat_map(|&f| mesh.faces()[f]).collect();
        let pts: Vec<Vec3> = verts.iter().map(|&v| mesh.vertices()[v as usize]).collect();
        let eigen = eigen_features(&pts).unwrap_or(EigenFeatures { linearity: 0.0, planarity: 1.0, sphericity: 0.0 });

        let mut lab = [0.0; 3];
        let mut exg = 0.0;
        let mut n = 0.0;
        for &f in &faces {
            let c = &colors[f];
            for k in 0..3 {
                lab[k] += c.lab_sum[k];
            }
            exg += c.exg_sum;
            n += c.count;
        }
        let (mean_lab, mean_exg) = if n > 0.0 {
            (LabColor::new(lab[0] / n, lab[1] / n, lab[2] / n), exg / n)
        } else {
            (LabColor::default(), 0.0)
        };
        Self { id, faces, plane, area, mean_height, verticality, eigen, mean_lab, mean_exg, centroid }
    }
}

/// Area-weighted plane through the faces' vertices; falls back to the mean
/// face normal when the fit is degenerate.
fn segment_plane(mesh: &TexturedMesh, faces: &[usize]) -> Plane {
    let mut pts = Vec::with_capacity(faces.len() * 3);
    let mut mean_n = Vec3::zeros();
    for &f in faces {
        let a = mesh.face_area(f) / 3.0;
        for v in mesh.face_vertices(f) {
            pts.push((v, a));
        }
        mean_n += mesh.face_normal(f) * mesh.face_area(f);
    }
    let fitted = fit_plane(&pts).ok();
    let reference = if mean_n.norm() > 0.0 { mean_n.normalize() } else { mesh.face_normal(faces[0]) };
    match fitted {
        Some(mut p) => {
            // keep the side the faces point to
            if p.normal.dot(&reference) < 0.0 {
                p.normal = -p.normal;
                p.offset = -p.offset;
            }
            p
        }
        None => {
            let total: f64 = pts.iter().map(|(_, w)| w).sum();
            let c = pts.iter().fold(Vec3::zeros(), |acc, (p, w)| acc + p * *w) / total;
            Plane { normal: reference, offset: reference.dot(&c), rms: 0.0 }
        }
    }
}

/// A partition of the mesh faces into planar segments. Segment ids are
/// positions in `segments`, ordered by smallest face index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<PlanarSegment>,
    pub face_segment: Vec<usize>,
    #[serde(skip)]
    colors: Vec<FaceColor>,
}

impl Segmentation {
    /// Builds a segmentation from face groups, canonicalising ids.
    pub fn from_groups(mesh: &TexturedMesh, groups: Vec<Vec<usize>>) -> Self {
        Self::from_groups_with_colors(mesh, face_colors(mesh), groups)
    }

    fn from_groups_with_colors(mesh: &TexturedMesh, colors: Vec<FaceColor>, groups: Vec<Vec<usize>>) -> Self {
        let mut groups: Vec<Vec<usize>> = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|mut g| {
                g.sort_unstable();
                g.dedup();
                g
            })
            .collect();
        groups.sort_by_key(|g| g[0]);
        let mut face_segment = vec![usize::MAX; mesh.face_count()];
        let segments: Vec<PlanarSegment> = groups
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                for &f in &g {
                    face_segment[f] = id;
                }
                PlanarSegment::from_faces(mesh, &colors, id, g)
            })
            .collect();
        Self { segments, face_segment, colors }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&PlanarSegment> {
        self.segments.get(id)
    }

    pub fn segment_of(&self, face: usize) -> usize {
        self.face_segment[face]
    }

    pub fn groups(&self) -> Vec<Vec<usize>> {
        self.segments.iter().map(|s| s.faces.clone()).collect()
    }

    /// Segments sharing at least one edge with `id`, with shared edge counts.
    pub fn neighbors(&self, mesh: &TexturedMesh, id: usize) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for &f in &self.segments[id].faces {
            for &n in mesh.neighbors(f) {
                let s = self.face_segment[n as usize];
                if s != id {
                    *out.entry(s).or_insert(0) += 1;
                }
            }
        }
        out
    }

    /// Replaces the listed segments by their union.
    pub fn merge(&self, mesh: &TexturedMesh, ids: &[usize]) -> Result<(Self, usize), SegmentationError> {
        let ids: BTreeSet<usize> = ids.iter().copied().collect();
        for &id in &ids {
            if id >= self.len() {
                return Err(SegmentationError::UnknownSegment(id));
            }
        }
        let union: Vec<usize> = ids.iter().flat_map(|&id| self.segments[id].faces.iter().copied()).collect();
        if union.is_empty() {
            return Err(SegmentationError::UnknownSegment(usize::MAX));
        }
        if !is_connected(mesh, &union) {
            return Err(SegmentationError::Disconnected);
        }
        let first = *union.iter().min().unwrap();
        let mut groups: Vec<Vec<usize>> =
            self.segments.iter().filter(|s| !ids.contains(&s.id)).map(|s| s.faces.clone()).collect();
        groups.push(union);
        let next = Self::from_groups_with_colors(mesh, self.colors_or_compute(mesh), groups);
        let new_id = next.face_segment[first];
        Ok((next, new_id))
    }

    /// Splits one segment into the given connected parts.
    pub fn split(&self, mesh: &TexturedMesh, id: usize, parts: &[Vec<usize>]) -> Result<Self, SegmentationError> {
        let seg = self.segments.get(id).ok_or(SegmentationError::UnknownSegment(id))?;
        let mut covered: Vec<usize> = parts.iter().flatten().copied().collect();
        covered.sort_unstable();
        if covered != seg.faces || parts.iter().any(|p| p.is_empty()) {
            return Err(SegmentationError::NotCovering(id));
        }
        if parts.iter().any(|p| !is_connected(mesh, p)) {
            return Err(SegmentationError::Disconnected);
        }
        let mut groups: Vec<Vec<usize>> = self.segments.iter().filter(|s| s.id != id).map(|s| s.faces.clone()).collect();
        groups.extend(parts.iter().cloned());
        Ok(Self::from_groups_with_colors(mesh, self.colors_or_compute(mesh), groups))
    }

    fn colors_or_compute(&self, mesh: &TexturedMesh) -> Vec<FaceColor> {
        if self.colors.len() == mesh.face_count() {
            self.colors.clone()
        } else {
            face_colors(mesh)
        }
    }

    /// Statistics of an arbitrary face subset, computed with this
    /// segmentation's cached colours.
    pub fn part(&self, mesh: &TexturedMesh, id: usize, faces: Vec<usize>) -> PlanarSegment {
        if self.colors.len() == mesh.face_count() {
            PlanarSegment::from_faces(mesh, &self.colors, id, faces)
        } else {
            PlanarSegment::from_faces(mesh, &face_colors(mesh), id, faces)
        }
    }

    /// Per-face segment ids as `i64` for PLY export.
    pub fn face_ids(&self) -> Vec<i64> {
        self.face_segment.iter().map(|&s| s as i64).collect()
    }
}

/// True if the faces form one edge-connected component.
pub fn is_connected(mesh: &TexturedMesh, faces: &[usize]) -> bool {
    let set: BTreeSet<usize> = faces.iter().copied().collect();
    let Some(&start) = set.iter().next() else { return false };
    let mut seen = BTreeSet::from([start]);
    let mut q = VecDeque::from([start]);
    while let Some(f) = q.pop_front() {
        for &n in mesh.neighbors(f) {
            let n = n as usize;
            if set.contains(&n) && seen.insert(n) {
                q.push_back(n);
            }
        }
    }
    seen.len() == set.len()
}

/// Region-growing over-segmentation.
///
/// Seeds are taken in descending face-area order (ties by index). A face
/// joins a growing segment when its normal is within `angle_deg` of the
/// segment plane normal and all its vertices lie within `dist` of the plane;
/// the plane is refitted whenever the segment doubles in size. Segments
/// smaller than `min_faces` are then merged into the neighbour they share
/// most edges with.
pub fn oversegment(mesh: &TexturedMesh, params: &SegmentParams) -> Result<Segmentation, SegmentationError> {
    if !(params.angle_deg > 0.0 && params.dist > 0.0) {
        return Err(SegmentationError::InvalidParams("thresholds must be positive"));
    }
    let n = mesh.face_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mesh.face_area(b).total_cmp(&mesh.face_area(a)).then(a.cmp(&b)));
    let cos_thresh = params.angle_deg.to_radians().cos();

    let mut label = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &seed in &order {
        if label[seed] != usize::MAX {
            continue;
        }
        let gid = groups.len();
        let mut faces = vec![seed];
        label[seed] = gid;
        let mut normal = mesh.face_normal(seed);
        let mut offset = normal.dot(&mesh.face_centroid(seed));
        let mut next_refit = 2;
        let mut q = VecDeque::from([seed]);
        while let Some(f) = q.pop_front() {
            for &nb in mesh.neighbors(f) {
                let nb = nb as usize;
                if label[nb] != usize::MAX {
                    continue;
                }
                if mesh.face_normal(nb).dot(&normal) <= cos_thresh {
                    continue;
                }
                if mesh.face_vertices(nb).iter().any(|v| (normal.dot(v) - offset).abs() > params.dist) {
                    continue;
                }
                label[nb] = gid;
                faces.push(nb);
                q.push_back(nb);
                if faces.len() >= next_refit {
                    let p = segment_plane(mesh, &faces);
                    normal = p.normal;
                    offset = p.offset;
                    next_refit *= 2;
                }
            }
        }
        groups.push(faces);
    }

    merge_small_fragments(mesh, &mut groups, &mut label, params.min_faces);
    Ok(Segmentation::from_groups(mesh, groups))
}

fn merge_small_fragments(mesh: &TexturedMesh, groups: &mut [Vec<usize>], label: &mut [usize], min_faces: usize) {
    loop {
        let mut changed = false;
        for gid in 0..groups.len() {
            let size = groups[gid].len();
            if size == 0 || size >= min_faces {
                continue;
            }
            let mut shared: BTreeMap<usize, usize> = BTreeMap::new();
            for &f in &groups[gid] {
                for &nb in mesh.neighbors(f) {
                    let g = label[nb as usize];
                    if g != gid {
                        *shared.entry(g).or_insert(0) += 1;
                    }
                }
            }
            let Some((&target, _)) = shared.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) else {
                continue;
            };
            let moved = std::mem::take(&mut groups[gid]);
            for &f in &moved {
                label[f] = target;
            }
            groups[target].extend(moved);
            changed = true;
        }
        if !changed {
            break;
        }
    }
}
