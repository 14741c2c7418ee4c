//! Synthetic textured urban scenes with exact ground truth.
//!
//! A scene is a set of ground patches and axis-aligned boxes (buildings).
//! Every planar side is tessellated into a regular grid and gets its own
//! chart in the texture atlas, so texel ↔ surface correspondences and label
//! masks are known exactly.

use std::collections::HashMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::mesh::{
    save_annotations, save_obj, ClassId, FaceLabelMap, FaceTexture, LabelRaster, LabelTaxonomy, MeshError,
    PixelLabelMask, TexturedMesh,
};
use crate::Vec3;

pub const TERRAIN: ClassId = 1;
pub const ROOF: ClassId = 7;
pub const FACADE: ClassId = 8;
pub const WINDOW: ClassId = 13;
pub const ROAD: ClassId = 17;
pub const ROAD_MARKING: ClassId = 18;

const ASPHALT: [u8; 3] = [88, 90, 96];
const MARKING: [u8; 3] = [235, 235, 225];
const PLASTER: [u8; 3] = [205, 185, 145];
const ROOF_TILE: [u8; 3] = [150, 62, 48];
const GLASS: [u8; 3] = [45, 62, 84];
const BASE: [u8; 3] = [70, 70, 70];

const PAGE_WIDTH: u32 = 2048;
const MAX_PAGE_HEIGHT: u32 = 2048;
const CHART_PADDING: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPatch {
    pub origin: [f64; 2],
    pub size: [f64; 2],
    #[serde(default)]
    pub markings: bool,
}

/// Regular grid of windows on every wall of a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub width: f64,
    pub height: f64,
    pub spacing: [f64; 2],
}

/// One window drawn at an explicit place on a wall; `side` 0..4 is
/// −y, +x, +y, −x. `center` is in wall coordinates (metres from the
/// lower-left corner seen from outside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub side: usize,
    pub center: [f64; 2],
    pub size: [f64; 2],
    #[serde(default)]
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    /// Footprint centre (x, y); the box stands on z = 0.
    pub center: [f64; 2],
    pub size: [f64; 3],
    #[serde(default)]
    pub patch: usize,
    #[serde(default)]
    pub closed_bottom: bool,
    #[serde(default)]
    pub windows: Option<WindowGrid>,
    #[serde(default)]
    pub motifs: Vec<Motif>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub seed: u64,
    pub ground: Vec<GroundPatch>,
    pub boxes: Vec<BoxSpec>,
    /// Target edge length of the tessellation (m).
    pub cell: f64,
    /// Texels per metre.
    pub texel_density: f64,
    /// Standard deviation of Gaussian texel noise (8-bit units).
    pub texel_noise: f64,
    /// Standard deviation of Gaussian vertex noise (m).
    pub vertex_noise: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            ground: vec![GroundPatch { origin: [-10.0, -10.0], size: [20.0, 20.0], markings: false }],
            boxes: vec![],
            cell: 1.0,
            texel_density: 8.0,
            texel_noise: 0.0,
            vertex_noise: 0.0,
        }
    }
}

impl FixtureSpec {
    /// A closed 4 m cube on a 16 m × 16 m ground plane, 0.25 m cells.
    pub fn cube_on_plane() -> Self {
        Self {
            ground: vec![GroundPatch { origin: [-8.0, -8.0], size: [16.0, 16.0], markings: false }],
            cell: 0.25,
            texel_density: 16.0,
            boxes: vec![BoxSpec {
                center: [0.0, 0.0],
                size: [4.0, 4.0, 4.0],
                patch: 0,
                closed_bottom: true,
                windows: None,
                motifs: vec![],
            }],
            ..Self::default()
        }
    }

    /// Five identical houses and three ×4-volume distractors on one ground
    /// plane with road markings; every wall carries a window grid.
    pub fn box_village() -> Self {
        let grid = WindowGrid { width: 1.2, height: 1.6, spacing: [3.0, 3.0] };
        let house = |x: f64, y: f64| BoxSpec {
            center: [x, y],
            size: [6.0, 6.0, 6.0],
            patch: 0,
            closed_bottom: false,
            windows: Some(grid.clone()),
            motifs: vec![],
        };
        let big = |x: f64, y: f64| BoxSpec {
            center: [x, y],
            size: [12.0, 6.0, 12.0],
            patch: 0,
            closed_bottom: false,
            windows: Some(grid.clone()),
            motifs: vec![],
        };
        Self {
            seed: 7,
            ground: vec![GroundPatch { origin: [0.0, 0.0], size: [80.0, 50.0], markings: true }],
            boxes: vec![
                house(8.0, 10.0),
                house(24.0, 10.0),
                house(40.0, 10.0),
                house(56.0, 10.0),
                house(72.0, 10.0),
                big(12.0, 38.0),
                big(40.0, 38.0),
                big(66.0, 38.0),
            ],
            cell: 1.0,
            texel_density: 8.0,
            texel_noise: 2.0,
            vertex_noise: 0.0,
        }
    }

    /// One long building whose front wall carries 12 windows at two scales
    /// and two orientations.
    pub fn facade_windows() -> Self {
        let mut motifs = Vec::new();
        let base = [1.0, 1.6];
        let mut x = 2.5;
        for (k, (scale, rot)) in [(1.0, 0.0), (1.5, 0.0), (1.0, 90.0), (1.5, 90.0)].into_iter().enumerate() {
            for j in 0..3 {
                let y = if j % 2 == 0 { 3.5 } else { 7.5 };
                motifs.push(Motif {
                    side: 0,
                    center: [x, y + if k % 2 == 1 { 0.3 } else { 0.0 }],
                    size: [base[0] * scale, base[1] * scale],
                    rotation_deg: rot,
                });
                x += 3.4;
            }
        }
        Self {
            seed: 11,
            ground: vec![GroundPatch { origin: [-5.0, -10.0], size: [55.0, 25.0], markings: false }],
            boxes: vec![BoxSpec {
                center: [22.0, 2.0],
                size: [44.0, 6.0, 11.0],
                patch: 0,
                closed_bottom: false,
                windows: None,
                motifs,
            }],
            cell: 1.0,
            texel_density: 16.0,
            texel_noise: 2.0,
            vertex_noise: 0.0,
        }
    }
}

/// Ground truth of one box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTruth {
    /// All faces including a closed bottom.
    pub faces: Vec<usize>,
    /// Walls and roof.
    pub visible_faces: Vec<usize>,
    pub bottom_faces: Vec<usize>,
    pub roof_faces: Vec<usize>,
    pub wall_faces: [Vec<usize>; 4],
    pub patch: usize,
}

/// A window's covered texels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub page: usize,
    pub box_index: usize,
    pub side: usize,
    /// Width and height in wall coordinates before rotation (m).
    pub size: [f64; 2],
    pub rotation_deg: f64,
    pub texels: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureTruth {
    pub ground_faces: Vec<Vec<usize>>,
    pub boxes: Vec<BoxTruth>,
    pub windows: Vec<WindowTruth>,
    /// Planar segments a correct over-segmentation yields.
    pub expected_segments: usize,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub spec: FixtureSpec,
    pub mesh: TexturedMesh,
    pub face_labels: FaceLabelMap,
    pub pixel_labels: PixelLabelMask,
    pub truth: FixtureTruth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Ground { patch: usize },
    Wall { box_index: usize, side: usize },
    Roof { box_index: usize },
    Bottom { box_index: usize },
}

struct Panel {
    object: usize,
    surface: Surface,
    origin: Vec3,
    u: Vec3,
    v: Vec3,
}

struct Chart {
    page: usize,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

impl Fixture {
    pub fn generate(spec: &FixtureSpec) -> Result<Self, MeshError> {
        let panels = build_panels(spec)?;
        let density = spec.texel_density.max(1e-3);

        // charts: shelf packing, tallest first
        let sizes: Vec<(u32, u32)> = panels
            .iter()
            .map(|p| (((p.u.norm() * density).round() as u32).max(1), ((p.v.norm() * density).round() as u32).max(1)))
            .collect();
        let (charts, page_dims) = pack_charts(&sizes)?;

        // tessellate
        let mut vertices: Vec<Vec3> = Vec::new();
        let mut faces: Vec<[u32; 3]> = Vec::new();
        let mut tex: Vec<Option<FaceTexture>> = Vec::new();
        let mut face_panel: Vec<usize> = Vec::new();
        let mut weld: HashMap<(usize, i64, i64, i64), u32> = HashMap::new();
        for (pi, p) in panels.iter().enumerate() {
            let nu = ((p.u.norm() / spec.cell).ceil() as usize).max(1);
            let nv = ((p.v.norm() / spec.cell).ceil() as usize).max(1);
            let chart = &charts[pi];
            let (pw, ph) = page_dims[chart.page];
            let mut idx = vec![0u32; (nu + 1) * (nv + 1)];
            let mut uvs = vec![[0.0; 2]; (nu + 1) * (nv + 1)];
            for j in 0..=nv {
                for i in 0..=nu {
                    let (a, b) = (i as f64 / nu as f64, j as f64 / nv as f64);
                    let pos = p.origin + p.u * a + p.v * b;
                    let key = (p.object, (pos.x * 1e6).round() as i64, (pos.y * 1e6).round() as i64, (pos.z * 1e6).round() as i64);
                    let id = *weld.entry(key).or_insert_with(|| {
                        vertices.push(pos);
                        (vertices.len() - 1) as u32
                    });
                    idx[j * (nu + 1) + i] = id;
                    let px = chart.x as f64 + a * chart.w as f64;
                    let py = chart.y as f64 + (1.0 - b) * chart.h as f64;
                    uvs[j * (nu + 1) + i] = [px / pw as f64, 1.0 - py / ph as f64];
                }
            }
            let at = |i: usize, j: usize| j * (nu + 1) + i;
            for j in 0..nv {
                for i in 0..nu {
                    for tri in [[at(i, j), at(i + 1, j), at(i + 1, j + 1)], [at(i, j), at(i + 1, j + 1), at(i, j + 1)]] {
                        faces.push(tri.map(|k| idx[k]));
                        tex.push(Some(FaceTexture { page: chart.page, uv: tri.map(|k| uvs[k]) }));
                        face_panel.push(pi);
                    }
                }
            }
        }

        if spec.vertex_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0001);
            let n = Normal::new(0.0, spec.vertex_noise).expect("finite sigma");
            for v in &mut vertices {
                *v += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
            }
        }

        // paint textures and pixel truth
        let mut pages: Vec<RgbImage> = page_dims.iter().map(|&(w, h)| RgbImage::from_pixel(w, h, Rgb([0, 0, 0]))).collect();
        let mut rasters: Vec<LabelRaster> = page_dims.iter().map(|&(w, h)| LabelRaster::new(w, h)).collect();
        let mut windows: Vec<WindowTruth> = Vec::new();
        let mut window_index: HashMap<(usize, usize), usize> = HashMap::new();
        for (pi, p) in panels.iter().enumerate() {
            let c = &charts[pi];
            let (lu, lv) = (p.u.norm(), p.v.norm());
            for ty in 0..c.h {
                for tx in 0..c.w {
                    let s = (tx as f64 + 0.5) / c.w as f64 * lu;
                    let t = (1.0 - (ty as f64 + 0.5) / c.h as f64) * lv;
                    let (rgb, label, motif) = shade(spec, p.surface, s, t, lu, lv);
                    let (x, y) = (c.x + tx, c.y + ty);
                    pages[c.page].put_pixel(x, y, Rgb(rgb));
                    rasters[c.page].set(x, y, label);
                    if let (Some(m), Surface::Wall { box_index, side }) = (motif, p.surface) {
                        let key = (pi, m.id);
                        let wi = *window_index.entry(key).or_insert_with(|| {
                            windows.push(WindowTruth {
                                page: c.page,
                                box_index,
                                side,
                                size: m.size,
                                rotation_deg: m.rotation_deg,
                                texels: Vec::new(),
                            });
                            windows.len() - 1
                        });
                        windows[wi].texels.push((x, y));
                    }
                }
            }
        }
        if spec.texel_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_0002);
            let n = Normal::new(0.0, spec.texel_noise).expect("finite sigma");
            for (pi, _) in panels.iter().enumerate() {
                let c = &charts[pi];
                for y in c.y..c.y + c.h {
                    for x in c.x..c.x + c.w {
                        let px = pages[c.page].get_pixel_mut(x, y);
                        for ch in px.0.iter_mut() {
                            *ch = (*ch as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            }
        }

        let (mesh, dropped) = TexturedMesh::new(vertices, faces, tex, pages)?;
        if dropped > 0 {
            return Err(MeshError::Parse(format!("fixture produced {dropped} degenerate faces")));
        }
        for w in &mut windows {
            w.texels.sort_unstable_by_key(|&(x, y)| (y, x));
        }

        // face truth
        let mut labels = Vec::with_capacity(face_panel.len());
        let mut truth = FixtureTruth {
            ground_faces: vec![Vec::new(); spec.ground.len()],
            boxes: spec
                .boxes
                .iter()
                .map(|b| BoxTruth {
                    faces: vec![],
                    visible_faces: vec![],
                    bottom_faces: vec![],
                    roof_faces: vec![],
                    wall_faces: Default::default(),
                    patch: b.patch,
                })
                .collect(),
            windows,
            expected_segments: 0,
        };
        for (f, &pi) in face_panel.iter().enumerate() {
            let label = match panels[pi].surface {
                Surface::Ground { patch } => {
                    truth.ground_faces[patch].push(f);
                    TERRAIN
                }
                Surface::Wall { box_index, side } => {
                    let b = &mut truth.boxes[box_index];
                    b.faces.push(f);
                    b.visible_faces.push(f);
                    b.wall_faces[side].push(f);
                    FACADE
                }
                Surface::Roof { box_index } => {
                    let b = &mut truth.boxes[box_index];
                    b.faces.push(f);
                    b.visible_faces.push(f);
                    b.roof_faces.push(f);
                    ROOF
                }
                Surface::Bottom { box_index } => {
                    let b = &mut truth.boxes[box_index];
                    b.faces.push(f);
                    b.bottom_faces.push(f);
                    FACADE
                }
            };
            labels.push(label);
        }
        truth.expected_segments = panels.len();

        Ok(Self {
            spec: spec.clone(),
            mesh,
            face_labels: FaceLabelMap { labels },
            pixel_labels: PixelLabelMask { pages: rasters },
            truth,
        })
    }

    /// Writes `scene.obj` (+ MTL, PNG pages), the truth annotations under
    /// `truth/` and `truth.json`.
    pub fn write(&self, dir: &Path) -> Result<std::path::PathBuf, MeshError> {
        std::fs::create_dir_all(dir)?;
        let obj = save_obj(&self.mesh, dir, "scene")?;
        save_annotations(&self.mesh, &LabelTaxonomy::urban(), &self.face_labels, &self.pixel_labels, &dir.join("truth"))?;
        let json = serde_json::to_string_pretty(&self.truth).map_err(|e| MeshError::Parse(e.to_string()))?;
        std::fs::write(dir.join("truth.json"), json + "\n")?;
        let spec = serde_json::to_string_pretty(&self.spec).map_err(|e| MeshError::Parse(e.to_string()))?;
        std::fs::write(dir.join("spec.json"), spec + "\n")?;
        Ok(obj)
    }
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma` (m) to every
/// vertex coordinate.
pub fn perturb_vertices(mesh: &TexturedMesh, sigma: f64, seed: u64) -> Result<TexturedMesh, MeshError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma.max(0.0)).map_err(|e| MeshError::Parse(e.to_string()))?;
    let verts = mesh
        .vertices()
        .iter()
        .map(|v| v + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)))
        .collect();
    Ok(mesh.with_vertices(verts)?.0)
}

/// A flat quad textured with `image` over its whole page; one planar
/// segment whose canvas is the image itself.
pub fn flat_canvas(image: RgbImage, texel_size: f64) -> TexturedMesh {
    let (w, h) = image.dimensions();
    let (sx, sy) = (w as f64 * texel_size, h as f64 * texel_size);
    let verts = vec![Vec3::zeros(), Vec3::new(sx, 0.0, 0.0), Vec3::new(sx, sy, 0.0), Vec3::new(0.0, sy, 0.0)];
    let uv = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let faces = vec![[0u32, 1, 2], [0, 2, 3]];
    let tex = faces.iter().map(|f| Some(FaceTexture { page: 0, uv: f.map(|i| uv[i as usize]) })).collect();
    TexturedMesh::new(verts, faces, tex, vec![image]).expect("valid quad").0
}

fn build_panels(spec: &FixtureSpec) -> Result<Vec<Panel>, MeshError> {
    if !(spec.cell > 0.0) {
        return Err(MeshError::Parse("cell size must be positive".into()));
    }
    let mut panels = Vec::new();
    for (k, g) in spec.ground.iter().enumerate() {
        panels.push(Panel {
            object: k,
            surface: Surface::Ground { patch: k },
            origin: Vec3::new(g.origin[0], g.origin[1], 0.0),
            u: Vec3::new(g.size[0], 0.0, 0.0),
            v: Vec3::new(0.0, g.size[1], 0.0),
        });
    }
    for (bi, b) in spec.boxes.iter().enumerate() {
        if b.patch >= spec.ground.len() && !spec.ground.is_empty() {
            return Err(MeshError::Parse(format!("box {bi} references ground patch {}", b.patch)));
        }
        let object = spec.ground.len() + bi;
        let [w, d, h] = b.size;
        let (x0, y0) = (b.center[0] - w / 2.0, b.center[1] - d / 2.0);
        let (x1, y1) = (x0 + w, y0 + d);
        let up = Vec3::new(0.0, 0.0, h);
        let walls = [
            (Vec3::new(x0, y0, 0.0), Vec3::new(w, 0.0, 0.0)),
            (Vec3::new(x1, y0, 0.0), Vec3::new(0.0, d, 0.0)),
            (Vec3::new(x1, y1, 0.0), Vec3::new(-w, 0.0, 0.0)),
            (Vec3::new(x0, y1, 0.0), Vec3::new(0.0, -d, 0.0)),
        ];
        for (side, (origin, u)) in walls.into_iter().enumerate() {
            panels.push(Panel { object, surface: Surface::Wall { box_index: bi, side }, origin, u, v: up });
        }
        panels.push(Panel {
            object,
            surface: Surface::Roof { box_index: bi },
            origin: Vec3::new(x0, y0, h),
            u: Vec3::new(w, 0.0, 0.0),
            v: Vec3::new(0.0, d, 0.0),
        });
        if b.closed_bottom {
            panels.push(Panel {
                object,
                surface: Surface::Bottom { box_index: bi },
                origin: Vec3::new(x0, y1, 0.0),
                u: Vec3::new(w, 0.0, 0.0),
                v: Vec3::new(0.0, -d, 0.0),
            });
        }
    }
    Ok(panels)
}

fn pack_charts(sizes: &[(u32, u32)]) -> Result<(Vec<Chart>, Vec<(u32, u32)>), MeshError> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(a.cmp(&b)));
    let mut charts: Vec<Option<Chart>> = (0..sizes.len()).map(|_| None).collect();
    let mut pages: Vec<(u32, u32)> = Vec::new();
    let (mut page, mut x, mut y, mut shelf_h) = (0usize, CHART_PADDING, CHART_PADDING, 0u32);
    let mut width_used = 0u32;
    pages.push((0, 0));
    for i in order {
        let (w, h) = sizes[i];
        if w + 2 * CHART_PADDING > PAGE_WIDTH || h + 2 * CHART_PADDING > MAX_PAGE_HEIGHT {
            return Err(MeshError::Parse(format!("chart {w}×{h} does not fit an atlas page")));
        }
        if x + w + CHART_PADDING > PAGE_WIDTH {
            x = CHART_PADDING;
            y += shelf_h + CHART_PADDING;
            shelf_h = 0;
        }
        if y + h + CHART_PADDING > MAX_PAGE_HEIGHT {
            pages[page] = (width_used, y);
            page += 1;
            pages.push((0, 0));
            x = CHART_PADDING;
            y = CHART_PADDING;
            shelf_h = 0;
            width_used = 0;
        }
        charts[i] = Some(Chart { page, x, y, w, h });
        x += w + CHART_PADDING;
        width_used = width_used.max(x);
        shelf_h = shelf_h.max(h);
        pages[page] = (width_used, y + shelf_h + CHART_PADDING);
    }
    Ok((charts.into_iter().map(|c| c.expect("every chart placed")).collect(), pages))
}

struct MotifHit {
    id: usize,
    size: [f64; 2],
    rotation_deg: f64,
}

/// Colour, pixel label and window membership at wall/roof/ground point (s, t).
fn shade(spec: &FixtureSpec, surface: Surface, s: f64, t: f64, lu: f64, lv: f64) -> ([u8; 3], ClassId, Option<MotifHit>) {
    match surface {
        Surface::Ground { patch } => {
            let g = &spec.ground[patch];
            if g.markings {
                // dashed centre line along x plus a solid edge line
                let mid = lv / 2.0;
                let dashed = (t - mid).abs() <= 0.1 && (s.rem_euclid(4.0)) < 2.0;
                let edge = (t - 1.0).abs() <= 0.1;
                if dashed || edge {
                    return (MARKING, ROAD_MARKING, None);
                }
            }
            (ASPHALT, ROAD, None)
        }
        Surface::Roof { .. } => (ROOF_TILE, ROOF, None),
        Surface::Bottom { .. } => (BASE, FACADE, None),
        Surface::Wall { box_index, side } => {
            let b = &spec.boxes[box_index];
            let mut motifs: Vec<(usize, Motif)> =
                b.motifs.iter().enumerate().filter(|(_, m)| m.side == side).map(|(i, m)| (i, m.clone())).collect();
            if let Some(g) = &b.windows {
                let cols = ((lu - g.spacing[0] / 2.0) / g.spacing[0]).floor().max(0.0) as usize;
                let rows = ((lv - g.spacing[1] / 2.0) / g.spacing[1]).floor().max(0.0) as usize;
                let x_start = (lu - (cols.saturating_sub(1)) as f64 * g.spacing[0]) / 2.0;
                let y_start = (lv - (rows.saturating_sub(1)) as f64 * g.spacing[1]) / 2.0;
                for r in 0..rows {
                    for c in 0..cols {
                        motifs.push((
                            1000 + r * cols + c,
                            Motif {
                                side,
                                center: [x_start + c as f64 * g.spacing[0], y_start + r as f64 * g.spacing[1]],
                                size: [g.width, g.height],
                                rotation_deg: 0.0,
                            },
                        ));
                    }
                }
            }
            for (id, m) in motifs {
                let (sn, cs) = m.rotation_deg.to_radians().sin_cos();
                let (dx, dy) = (s - m.center[0], t - m.center[1]);
                let (lx, ly) = (dx * cs + dy * sn, -dx * sn + dy * cs);
                let (hw, hh) = (m.size[0] / 2.0, m.size[1] / 2.0);
                if lx.abs() <= hw && ly.abs() <= hh {
                    let hit = MotifHit { id, size: m.size, rotation_deg: m.rotation_deg };
                    return (GLASS, WINDOW, Some(hit));
                }
            }
            (PLASTER, FACADE, None)
        }
    }
}

/// Orthographic face-id rendering of a mesh, standing in for the viewer's
/// ID-buffer picking.
#[derive(Debug, Clone)]
pub struct IdBuffer {
    pub width: u32,
    pub height: u32,
    ids: Vec<Option<u32>>,
    right: Vec3,
    up: Vec3,
    origin: [f64; 2],
    scale: f64,
}

impl IdBuffer {
    /// Renders front faces seen along `view` (pointing into the scene),
    /// framing the whole mesh.
    pub fn render(mesh: &TexturedMesh, view: Vec3, width: u32, height: u32) -> Self {
        let dir = view.normalize();
        let right = {
            let r = dir.cross(&Vec3::z());
            if r.norm() < 1e-9 { Vec3::x() } else { r.normalize() }
        };
        let up = right.cross(&dir);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in mesh.vertices() {
            let q = [v.dot(&right), v.dot(&up)];
            for k in 0..2 {
                lo[k] = lo[k].min(q[k]);
                hi[k] = hi[k].max(q[k]);
            }
        }
        let margin = 0.02 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = ((width as f64) / (hi[0] - lo[0] + 2.0 * margin)).min((height as f64) / (hi[1] - lo[1] + 2.0 * margin));
        let mut buf = Self {
            width,
            height,
            ids: vec![None; (width * height) as usize],
            right,
            up,
            origin: [lo[0] - margin, hi[1] + margin],
            scale,
        };
        let mut depth = vec![f64::INFINITY; (width * height) as usize];
        for f in 0..mesh.face_count() {
            if mesh.face_normal(f).dot(&dir) >= 0.0 {
                continue;
            }
            let tri = mesh.face_vertices(f);
            let p = tri.map(|v| buf.project(&v));
            let z = tri.map(|v| v.dot(&dir));
            let area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            if area.abs() < 1e-12 {
                continue;
            }
            let x0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
            let x1 = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(width as f64) as u32;
            let y0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
            let y1 = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(height as f64) as u32;
            for y in y0..y1 {
                for x in x0..x1 {
                    let c = [x as f64 + 0.5, y as f64 + 0.5];
                    let w0 = ((p[1][0] - c[0]) * (p[2][1] - c[1]) - (p[2][0] - c[0]) * (p[1][1] - c[1])) / area;
                    let w1 = ((p[2][0] - c[0]) * (p[0][1] - c[1]) - (p[0][0] - c[0]) * (p[2][1] - c[1])) / area;
                    let w2 = 1.0 - w0 - w1;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    let d = w0 * z[0] + w1 * z[1] + w2 * z[2];
                    let i = (y * width + x) as usize;
                    if d < depth[i] {
                        depth[i] = d;
                        buf.ids[i] = Some(f as u32);
                    }
                }
            }
        }
        buf
    }

    /// Screen position (pixels, y down) of a world point.
    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        [(p.dot(&self.right) - self.origin[0]) * self.scale, (self.origin[1] - p.dot(&self.up)) * self.scale]
    }

    pub fn id_at(&self, x: u32, y: u32) -> Option<usize> {
        if x < self.width && y < self.height {
            self.ids[(y * self.width + x) as usize].map(|f| f as usize)
        } else {
            None
        }
    }

    /// Distinct visible faces, sorted.
    pub fn visible(&self) -> Vec<usize> {
        let set: std::collections::BTreeSet<usize> = self.ids.iter().flatten().map(|&f| f as usize).collect();
        set.into_iter().collect()
    }

    /// Faces under a polyline, in drawing order without repeats.
    pub fn pick_polyline(&self, points: &[[f64; 2]]) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        let mut visit = |q: [f64; 2]| {
            if q[0] >= 0.0 && q[1] >= 0.0 {
                if let Some(f) = self.id_at(q[0] as u32, q[1] as u32) {
                    if seen.insert(f) {
                        out.push(f);
                    }
                }
            }
        };
        if let Some(&first) = points.first() {
            visit(first);
        }
        for w in points.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            let steps = (len * 2.0).ceil().max(1.0) as usize;
            for k in 1..=steps {
                let t = k as f64 / steps as f64;
                visit([w[0][0] + (w[1][0] - w[0][0]) * t, w[0][1] + (w[1][1] - w[0][1]) * t]);
            }
        }
        out
    }

    /// Faces with at least one pixel centre inside the closed polygon, sorted.
    pub fn pick_polygon(&self, points: &[[f64; 2]]) -> Vec<usize> {
        let mut set = std::collections::BTreeSet::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(f) = self.id_at(x, y) {
                    if point_in_polygon([x as f64 + 0.5, y as f64 + 0.5], points) {
                        set.insert(f);
                    }
                }
            }
        }
        set.into_iter().collect()
    }
}

/// Screen-space stroke over a box seen from above: ground → across the roof
/// in x → ground → across the roof in y → ground, `margin` metres beyond
/// the walls.
pub fn cross_stroke(buf: &IdBuffer, b: &BoxSpec, margin: f64) -> Vec<[f64; 2]> {
    let (cx, cy, z) = (b.center[0], b.center[1], b.size[2]);
    let (ax, ay) = (0.5 * b.size[0] + margin, 0.5 * b.size[1] + margin);
    [[cx - ax, cy], [cx + ax, cy], [cx, cy + ay], [cx, cy - ay]]
        .iter()
        .map(|p| buf.project(&Vec3::new(p[0], p[1], z)))
        .collect()
}

/// Even-odd rule.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + n - 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
    }
    inside
}
