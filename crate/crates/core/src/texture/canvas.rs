use std::collections::{BTreeMap, BTreeSet};

use image::{Rgb, RgbImage};

use super::TextureError;
use crate::mesh::{TexelHit, TexturedMesh};
use crate::segmentation::PlanarSegment;

const NO_FACE: u32 = u32::MAX;

/// A rectangle of an atlas page copied into the canvas at `canvas_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanvasBlock {
    pub page: usize,
    pub page_x: u32,
    pub page_y: u32,
    pub width: u32,
    pub height: u32,
    pub canvas_x: u32,
}

/// The texture of one planar segment as a single image with per-texel
/// back-references to the owning faces.
#[derive(Debug, Clone)]
pub struct TextureCanvas {
    pub segment: usize,
    pub image: RgbImage,
    pub blocks: Vec<CanvasBlock>,
    covered: Vec<bool>,
    owner: Vec<u32>,
}

/// Copies the tight bounding box of the segment's UV footprint on each
/// atlas page; pages are laid side by side in page order.
pub fn build_canvas(mesh: &TexturedMesh, segment: &PlanarSegment) -> Result<TextureCanvas, TextureError> {
    let faces: BTreeSet<usize> = segment.faces.iter().copied().collect();
    let mut boxes: BTreeMap<usize, [f64; 4]> = BTreeMap::new();
    for &f in &faces {
        if let Some((page, px)) = mesh.face_uv_pixels(f) {
            let b = boxes.entry(page).or_insert([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]);
            for p in px {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].min(p[1]);
                b[2] = b[2].max(p[0]);
                b[3] = b[3].max(p[1]);
            }
        }
    }
    if boxes.is_empty() {
        return Err(TextureError::Untextured);
    }
    let mut blocks = Vec::new();
    let mut x = 0u32;
    for (&page, b) in &boxes {
        let (w, h) = mesh.pages()[page].dimensions();
        let x0 = ((b[0] + 1e-6).floor().max(0.0) as u32).min(w);
        let y0 = ((b[1] + 1e-6).floor().max(0.0) as u32).min(h);
        let x1 = ((b[2] - 1e-6).ceil().max(0.0) as u32).min(w);
        let y1 = ((b[3] - 1e-6).ceil().max(0.0) as u32).min(h);
        if x1 <= x0 || y1 <= y0 {
            continue;
        }
        blocks.push(CanvasBlock { page, page_x: x0, page_y: y0, width: x1 - x0, height: y1 - y0, canvas_x: x });
        x += x1 - x0;
    }
    let width = x;
    let height = blocks.iter().map(|b| b.height).max().unwrap_or(0);
    if width == 0 || height == 0 {
        return Err(TextureError::Untextured);
    }
    let mut image = RgbImage::from_pixel(width, height, Rgb([0, 0, 0]));
    let mut covered = vec![false; (width * height) as usize];
    let mut owner = vec![NO_FACE; (width * height) as usize];
    for b in &blocks {
        let page = &mesh.pages()[b.page];
        for dy in 0..b.height {
            for dx in 0..b.width {
                let (px, py) = (b.page_x + dx, b.page_y + dy);
                let (cx, cy) = (b.canvas_x + dx, dy);
                image.put_pixel(cx, cy, *page.get_pixel(px, py));
                if let Some(f) = mesh.texel_owner(b.page, px, py) {
                    if faces.contains(&f) {
                        let i = (cy * width + cx) as usize;
                        covered[i] = true;
                        owner[i] = f as u32;
                    }
                }
            }
        }
    }
    Ok(TextureCanvas { segment: segment.id, image, blocks, covered, owner })
}

impl TextureCanvas {
    /// A canvas over a bare image, every texel covered and no mesh behind it.
    pub fn from_image(image: RgbImage) -> Self {
        let n = (image.width() * image.height()) as usize;
        let block = CanvasBlock { page: 0, page_x: 0, page_y: 0, width: image.width(), height: image.height(), canvas_x: 0 };
        Self { segment: 0, image, blocks: vec![block], covered: vec![true; n], owner: vec![NO_FACE; n] }
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    fn index(&self, x: u32, y: u32) -> Option<usize> {
        (x < self.width() && y < self.height()).then(|| (y * self.width() + x) as usize)
    }

    pub fn is_covered(&self, x: u32, y: u32) -> bool {
        self.index(x, y).is_some_and(|i| self.covered[i])
    }

    pub fn owner(&self, x: u32, y: u32) -> Option<usize> {
        let i = self.index(x, y)?;
        (self.owner[i] != NO_FACE).then_some(self.owner[i] as usize)
    }

    pub fn color(&self, x: u32, y: u32) -> [u8; 3] {
        self.image.get_pixel(x, y).0
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    /// Covered texels in row-major order.
    pub fn covered_texels(&self) -> Vec<(u32, u32)> {
        let w = self.width();
        self.covered.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| (i as u32 % w, i as u32 / w)).collect()
    }

    /// Atlas page texel behind a canvas texel.
    pub fn to_page(&self, x: u32, y: u32) -> Option<(usize, u32, u32)> {
        let b = self.blocks.iter().find(|b| x >= b.canvas_x && x < b.canvas_x + b.width && y < b.height)?;
        Some((b.page, b.page_x + x - b.canvas_x, b.page_y + y))
    }

    pub fn from_page(&self, page: usize, px: u32, py: u32) -> Option<(u32, u32)> {
        let b = self.blocks.iter().find(|b| {
            b.page == page && px >= b.page_x && px < b.page_x + b.width && py >= b.page_y && py < b.page_y + b.height
        })?;
        Some((b.canvas_x + px - b.page_x, py - b.page_y))
    }

    /// Surface point under a covered canvas texel.
    pub fn lift(&self, mesh: &TexturedMesh, x: u32, y: u32) -> Option<TexelHit> {
        let face = self.owner(x, y)?;
        let (_, px, py) = self.to_page(x, y)?;
        Some(mesh.lift_in_face(face, [px as f64 + 0.5, py as f64 + 0.5]))
    }

    /// Copy of a rectangle, clipped to the canvas.
    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> RgbImage {
        let x1 = (x + w).min(self.width());
        let y1 = (y + h).min(self.height());
        image::imageops::crop_imm(&self.image, x, y, x1.saturating_sub(x), y1.saturating_sub(y)).to_image()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{flat_canvas, Fixture, FixtureSpec};
    use crate::segmentation::oversegment;

    #[test]
    fn single_chart_canvas_is_the_page() {
        let mut img = RgbImage::new(40, 30);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([x as u8 * 5, y as u8 * 7, 100]);
        }
        let mesh = flat_canvas(img.clone(), 0.1);
        let seg = oversegment(&mesh, &Default::default()).unwrap();
        let c = build_canvas(&mesh, &seg.segments[0]).unwrap();
        assert_eq!(c.image, img);
        assert_eq!(c.covered_count(), 1200);
        // every covered texel lifts into the segment
        for (x, y) in c.covered_texels() {
            let hit = c.lift(&mesh, x, y).unwrap();
            assert!(seg.segments[0].faces.contains(&hit.face));
        }
    }

    #[test]
    fn wall_canvas_back_references() {
        let f = Fixture::generate(&FixtureSpec::cube_on_plane()).unwrap();
        let seg = oversegment(&f.mesh, &Default::default()).unwrap();
        let wall = seg.segment_of(f.truth.boxes[0].wall_faces[1][0]);
        let c = build_canvas(&f.mesh, &seg.segments[wall]).unwrap();
        // 4 m at 16 texels/m
        assert_eq!((c.width(), c.height()), (64, 64));
        assert_eq!(c.covered_count(), 64 * 64);
        for (x, y) in c.covered_texels() {
            let (page, px, py) = c.to_page(x, y).unwrap();
            assert_eq!(c.from_page(page, px, py), Some((x, y)));
            let hit = c.lift(&f.mesh, x, y).unwrap();
            assert!((hit.position.x - 2.0).abs() < 1e-9);
            assert_eq!(c.color(x, y), f.mesh.pages()[page].get_pixel(px, py).0);
        }
    }

    #[test]
    fn two_pages_side_by_side() {
        // one segment whose two triangles live on different pages
        let a = RgbImage::from_pixel(8, 8, Rgb([255, 0, 0]));
        let b = RgbImage::from_pixel(6, 6, Rgb([0, 0, 255]));
        let v = vec![
            crate::Vec3::zeros(),
            crate::Vec3::new(1.0, 0.0, 0.0),
            crate::Vec3::new(1.0, 1.0, 0.0),
            crate::Vec3::new(0.0, 1.0, 0.0),
        ];
        let faces = vec![[0u32, 1, 2], [0, 2, 3]];
        let tex = vec![
            Some(crate::mesh::FaceTexture { page: 0, uv: [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]] }),
            Some(crate::mesh::FaceTexture { page: 1, uv: [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]] }),
        ];
        let mesh = TexturedMesh::new(v, faces, tex, vec![a, b]).unwrap().0;
        let seg = crate::segmentation::Segmentation::from_groups(&mesh, vec![vec![0, 1]]);
        let c = build_canvas(&mesh, &seg.segments[0]).unwrap();
        assert_eq!((c.width(), c.height()), (14, 8));
        assert_eq!(c.blocks.len(), 2);
        assert_eq!(c.owner(13, 0), Some(1));
        assert_eq!(c.owner(7, 7), Some(0));
        assert_eq!(c.color(10, 2), [0, 0, 255]);
    }

    #[test]
    fn untextured_segment_fails() {
        let v = vec![crate::Vec3::zeros(), crate::Vec3::x(), crate::Vec3::y()];
        let mesh = TexturedMesh::new(v, vec![[0, 1, 2]], vec![None], vec![]).unwrap().0;
        let seg = crate::segmentation::Segmentation::from_groups(&mesh, vec![vec![0]]);
        assert_eq!(build_canvas(&mesh, &seg.segments[0]).unwrap_err(), TextureError::Untextured);
    }
}
