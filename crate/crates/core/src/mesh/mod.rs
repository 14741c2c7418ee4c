//! Textured triangle mesh model, label taxonomy and annotation file formats.

mod annotations;
mod io;
pub mod ply;
mod taxonomy;

use std::collections::HashMap;
use std::path::PathBuf;

use image::RgbImage;

use crate::Vec3;

pub use annotations::{
    encode_indexed_png, load_annotations, save_annotations, AnnotationManifest, FaceLabelMap, LabelRaster, MaskEntry,
    PixelLabelMask,
};
pub use io::{load_mesh, save_obj, write_face_property_ply, LoadReport};
pub use taxonomy::{ClassId, LabelClass, LabelRole, LabelTaxonomy, UNCLASSIFIED};

/// Faces with less area than this (m²) are dropped at load.
pub const DEGENERATE_AREA: f64 = 1e-12;

const NOT_COVERED: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("face {face} references vertex {index}, mesh has {count} vertices")]
    VertexOutOfRange { face: usize, index: i64, count: usize },
    #[error("missing texture page: {0}")]
    MissingTexture(String),
    #[error("image error: {0}")]
    Image(String),
    #[error("face {face} has texture coordinates outside its atlas page")]
    UvOutOfBounds { face: usize },
    #[error("face {face} references unknown atlas page {page}")]
    UnknownPage { face: usize, page: usize },
    #[error("texel ({x}, {y}) outside page {page}")]
    TexelOutOfBounds { page: usize, x: i64, y: i64 },
    #[error("taxonomy mismatch: {0}")]
    TaxonomyMismatch(String),
    #[error("class {class} is not valid for {context}")]
    InvalidLabel { class: ClassId, context: String },
    #[error("face label count {found} does not match mesh face count {expected}")]
    FaceCountMismatch { expected: usize, found: usize },
    #[error("mask for page {page} is {found:?}, page is {expected:?}")]
    MaskResolution { page: usize, expected: (u32, u32), found: (u32, u32) },
    #[error("missing mask for page {0}")]
    MissingMask(usize),
}

impl From<image::ImageError> for MeshError {
    fn from(e: image::ImageError) -> Self {
        MeshError::Image(e.to_string())
    }
}

/// Texture assignment of one face: atlas page and OBJ-style UVs (v up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceTexture {
    pub page: usize,
    pub uv: [[f64; 2]; 3],
}

/// Result of lifting a covered texel onto the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelHit {
    pub face: usize,
    pub position: Vec3,
    pub barycentric: [f64; 3],
}

/// Indexed triangle mesh with per-face UV charts on RGB atlas pages.
///
/// Immutable once built. Construction drops degenerate faces, builds the
/// edge adjacency and rasterises every UV triangle into a per-page ownership
/// map used by [`TexturedMesh::lift_texel`].
#[derive(Debug, Clone)]
pub struct TexturedMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_tex: Vec<Option<FaceTexture>>,
    pages: Vec<RgbImage>,
    page_names: Vec<String>,
    adjacency: Vec<Vec<u32>>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    coverage: Vec<Vec<u32>>,
}

impl TexturedMesh {
    /// Builds a mesh, returning it together with the number of dropped faces.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        face_tex: Vec<Option<FaceTexture>>,
        pages: Vec<RgbImage>,
    ) -> Result<(Self, usize), MeshError> {
        let names = (0..pages.len()).map(|i| format!("page{i}.png")).collect();
        Self::with_page_names(vertices, faces, face_tex, pages, names)
    }

    pub fn with_page_names(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        mut face_tex: Vec<Option<FaceTexture>>,
        pages: Vec<RgbImage>,
        page_names: Vec<String>,
    ) -> Result<(Self, usize), MeshError> {
        if face_tex.is_empty() {
            face_tex = vec![None; faces.len()];
        }
        assert_eq!(face_tex.len(), faces.len(), "one texture slot per face");
        let nv = vertices.len();
        let mut kept_faces = Vec::with_capacity(faces.len());
        let mut kept_tex = Vec::with_capacity(faces.len());
        let mut dropped = 0;
        for (fi, (f, t)) in faces.into_iter().zip(face_tex).enumerate() {
            for &i in &f {
                if i as usize >= nv {
                    return Err(MeshError::VertexOutOfRange { face: fi, index: i as i64, count: nv });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                dropped += 1;
                continue;
            }
            let a = vertices[f[0] as usize];
            let b = vertices[f[1] as usize];
            let c = vertices[f[2] as usize];
            if 0.5 * (b - a).cross(&(c - a)).norm() < DEGENERATE_AREA {
                dropped += 1;
                continue;
            }
            if let Some(t) = &t {
                if t.page >= pages.len() {
                    return Err(MeshError::UnknownPage { face: fi, page: t.page });
                }
                let eps = 1e-9;
                if t.uv.iter().flatten().any(|&c| !(-eps..=1.0 + eps).contains(&c)) {
                    return Err(MeshError::UvOutOfBounds { face: fi });
                }
            }
            kept_faces.push(f);
            kept_tex.push(t);
        }

        let mut normals = Vec::with_capacity(kept_faces.len());
        let mut areas = Vec::with_capacity(kept_faces.len());
        for f in &kept_faces {
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            areas.push(0.5 * len);
            normals.push(n / len);
        }

        let adjacency = build_adjacency(&kept_faces);
        let mut mesh = Self {
            vertices,
            faces: kept_faces,
            face_tex: kept_tex,
            pages,
            page_names,
            adjacency,
            normals,
            areas,
            coverage: Vec::new(),
        };
        mesh.coverage = mesh.rasterize_coverage();
        Ok((mesh, dropped))
    }

    fn rasterize_coverage(&self) -> Vec<Vec<u32>> {
        let mut cov: Vec<Vec<u32>> = self
            .pages
            .iter()
            .map(|p| vec![NOT_COVERED; (p.width() * p.height()) as usize])
            .collect();
        for (fi, t) in self.face_tex.iter().enumerate() {
            let Some(t) = t else { continue };
            let (w, h) = self.pages[t.page].dimensions();
            let px = t.uv.map(|uv| uv_to_pixel(uv, w, h));
            let min_x = px.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let max_x = px.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let min_y = px.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let max_y = px.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let x0 = (min_x - 0.5).floor().max(0.0) as u32;
            let x1 = ((max_x - 0.5).ceil().max(0.0) as u32).min(w.saturating_sub(1));
            let y0 = (min_y - 0.5).floor().max(0.0) as u32;
            let y1 = ((max_y - 0.5).ceil().max(0.0) as u32).min(h.saturating_sub(1));
            let page = &mut cov[t.page];
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let idx = (y * w + x) as usize;
                    if page[idx] != NOT_COVERED {
                        continue;
                    }
                    if let Some(b) = barycentric_2d(&px, [x as f64 + 0.5, y as f64 + 0.5]) {
                        if b.iter().all(|&c| c >= -1e-9) {
                            page[idx] = fi as u32;
                        }
                    }
                }
            }
        }
        cov
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_texture(&self, face: usize) -> Option<&FaceTexture> {
        self.face_tex[face].as_ref()
    }

    pub fn face_textures(&self) -> &[Option<FaceTexture>] {
        &self.face_tex
    }

    pub fn pages(&self) -> &[RgbImage] {
        &self.pages
    }

    pub fn page_names(&self) -> &[String] {
        &self.page_names
    }

    pub fn is_textured(&self) -> bool {
        !self.pages.is_empty() && self.face_tex.iter().any(Option::is_some)
    }

    /// Edge-adjacent faces of `face`, sorted ascending.
    pub fn neighbors(&self, face: usize) -> &[u32] {
        &self.adjacency[face]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn face_vertices(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.normals[face]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.areas[face]
    }

    pub fn face_centroid(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(face);
        (a + b + c) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Owning face of a texel, if any.
    pub fn texel_owner(&self, page: usize, x: u32, y: u32) -> Option<usize> {
        let img = self.pages.get(page)?;
        if x >= img.width() || y >= img.height() {
            return None;
        }
        let f = self.coverage[page][(y * img.width() + x) as usize];
        (f != NOT_COVERED).then_some(f as usize)
    }

    /// Texels owned by each face, in row-major page order.
    pub fn texels_by_face(&self) -> Vec<Vec<(u32, u32)>> {
        let mut out = vec![Vec::new(); self.faces.len()];
        for (p, img) in self.pages.iter().enumerate() {
            let w = img.width();
            for (i, &f) in self.coverage[p].iter().enumerate() {
                if f != NOT_COVERED {
                    out[f as usize].push((i as u32 % w, i as u32 / w));
                }
            }
        }
        out
    }

    /// Number of covered texels over all pages.
    pub fn covered_texel_count(&self) -> usize {
        self.coverage.iter().map(|c| c.iter().filter(|&&f| f != NOT_COVERED).count()).sum()
    }

    /// Lifts the centre of a texel to the 3D surface.
    ///
    /// Returns `Ok(None)` for texels no UV triangle covers. Texels on a shared
    /// UV edge belong to the lowest-index covering face.
    pub fn lift_texel(&self, page: usize, x: i64, y: i64) -> Result<Option<TexelHit>, MeshError> {
        let img = self.pages.get(page).ok_or(MeshError::TexelOutOfBounds { page, x, y })?;
        if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            return Err(MeshError::TexelOutOfBounds { page, x, y });
        }
        let Some(face) = self.texel_owner(page, x as u32, y as u32) else {
            return Ok(None);
        };
        Ok(Some(self.lift_in_face(face, [x as f64 + 0.5, y as f64 + 0.5])))
    }

    /// Maps a pixel-space point inside `face`'s UV triangle to 3D.
    pub fn lift_in_face(&self, face: usize, pixel: [f64; 2]) -> TexelHit {
        let t = self.face_tex[face].expect("lift_in_face on untextured face");
        let (w, h) = self.pages[t.page].dimensions();
        let px = t.uv.map(|uv| uv_to_pixel(uv, w, h));
        let b = barycentric_2d(&px, pixel).unwrap_or([1.0 / 3.0; 3]);
        let [a, bb, c] = self.face_vertices(face);
        TexelHit { face, position: a * b[0] + bb * b[1] + c * b[2], barycentric: b }
    }

    /// Pixel-space UV triangle of a textured face.
    pub fn face_uv_pixels(&self, face: usize) -> Option<(usize, [[f64; 2]; 3])> {
        let t = self.face_tex[face]?;
        let (w, h) = self.pages[t.page].dimensions();
        Some((t.page, t.uv.map(|uv| uv_to_pixel(uv, w, h))))
    }

    /// Colour of the texel under the UV centroid of a face.
    pub fn face_centroid_color(&self, face: usize) -> Option<[u8; 3]> {
        let (page, px) = self.face_uv_pixels(face)?;
        let img = &self.pages[page];
        let cx = (px[0][0] + px[1][0] + px[2][0]) / 3.0;
        let cy = (px[0][1] + px[1][1] + px[2][1]) / 3.0;
        let x = (cx.floor().max(0.0) as u32).min(img.width() - 1);
        let y = (cy.floor().max(0.0) as u32).min(img.height() - 1);
        Some(img.get_pixel(x, y).0)
    }

    /// Axis-aligned bounding box of all vertices.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let mut seen = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                seen.entry(key).or_insert_with(|| {
                    (self.vertices[a as usize] - self.vertices[b as usize]).norm()
                });
            }
        }
        if seen.is_empty() {
            return 0.0;
        }
        seen.values().sum::<f64>() / seen.len() as f64
    }

    /// Copy of the mesh with vertices replaced; topology and UVs unchanged.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<(Self, usize), MeshError> {
        Self::with_page_names(
            vertices,
            self.faces.clone(),
            self.face_tex.clone(),
            self.pages.clone(),
            self.page_names.clone(),
        )
    }
}

/// OBJ-style UV (v up) to pixel coordinates (y down, texel centres at +0.5).
pub fn uv_to_pixel(uv: [f64; 2], width: u32, height: u32) -> [f64; 2] {
    [uv[0] * width as f64, (1.0 - uv[1]) * height as f64]
}

pub fn pixel_to_uv(px: [f64; 2], width: u32, height: u32) -> [f64; 2] {
    [px[0] / width as f64, 1.0 - px[1] / height as f64]
}

fn barycentric_2d(tri: &[[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let [a, b, c] = tri;
    let v0 = [b[0] - a[0], b[1] - a[1]];
    let v1 = [c[0] - a[0], c[1] - a[1]];
    let v2 = [p[0] - a[0], p[1] - a[1]];
    let den = v0[0] * v1[1] - v1[0] * v0[1];
    if den.abs() < 1e-300 {
        return None;
    }
    let l1 = (v2[0] * v1[1] - v1[0] * v2[1]) / den;
    let l2 = (v0[0] * v2[1] - v2[0] * v0[1]) / den;
    Some([1.0 - l1 - l2, l1, l2])
}

fn build_adjacency(faces: &[[u32; 3]]) -> Vec<Vec<u32>> {
    let mut edges: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            edges.entry((a.min(b), a.max(b))).or_default().push(fi as u32);
        }
    }
    let mut adj = vec![Vec::new(); faces.len()];
    for owners in edges.values() {
        for &i in owners {
            for &j in owners {
                if i != j {
                    adj[i as usize].push(j);
                }
            }
        }
    }
    for n in &mut adj {
        n.sort_unstable();
        n.dedup();
    }
    adj
}
