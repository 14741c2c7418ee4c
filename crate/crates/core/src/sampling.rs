//! Point clouds sampled from textured meshes and label transfer back to
//! faces and texels.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::KdTree;
use crate::mesh::ply::{PlyData, PlyElement, PlyFormat, PlyValue, PropertyDef, ScalarType};
use crate::mesh::{ClassId, FaceLabelMap, LabelTaxonomy, MeshError, PixelLabelMask, TexturedMesh, UNCLASSIFIED};
use crate::segmentation::{oversegment, SegmentParams};
use crate::texture::{build_canvas, compute_superpixels, SuperpixelParams, TextureError};
use crate::Vec3;

/// Poisson dart budget per disc of radius r/2 that fits the surface area.
const DARTS_PER_SAMPLE: f64 = 30.0;
const MAX_DARTS: f64 = 5e7;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("invalid sampling parameter: {0}")]
    InvalidParams(&'static str),
    #[error("mesh has no textured faces")]
    Untextured,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("point {0} has no class")]
    Unlabeled(usize),
    #[error("point {point} references face {face} of a {faces}-face mesh")]
    FaceOutOfRange { point: usize, face: usize, faces: usize },
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("malformed point cloud: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SamplingStrategy {
    FaceCentered,
    Random { count: usize },
    Poisson { radius: f64 },
    Superpixel { region_size: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub color: [u8; 3],
    pub face: usize,
    /// Atlas texel `(page, x, y)` under the point.
    pub texel: Option<(usize, u32, u32)>,
    pub class: Option<ClassId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<SamplePoint>,
}

fn texel_at(mesh: &TexturedMesh, face: usize, bary: [f64; 3]) -> Option<(usize, u32, u32)> {
    let (page, px) = mesh.face_uv_pixels(face)?;
    let (w, h) = mesh.pages()[page].dimensions();
    let x = (0..3).map(|k| bary[k] * px[k][0]).sum::<f64>().floor().clamp(0.0, (w - 1) as f64);
    let y = (0..3).map(|k| bary[k] * px[k][1]).sum::<f64>().floor().clamp(0.0, (h - 1) as f64);
    Some((page, x as u32, y as u32))
}

fn point_on_face(mesh: &TexturedMesh, face: usize, bary: [f64; 3]) -> SamplePoint {
    let [a, b, c] = mesh.face_vertices(face);
    let texel = texel_at(mesh, face, bary);
    let color = texel.map_or([128, 128, 128], |(p, x, y)| mesh.pages()[p].get_pixel(x, y).0);
    SamplePoint {
        position: a * bary[0] + b * bary[1] + c * bary[2],
        normal: mesh.face_normal(face),
        color,
        face,
        texel,
        class: None,
    }
}

fn uniform_barycentric(rng: &mut impl Rng) -> [f64; 3] {
    let (r1, r2): (f64, f64) = (rng.random(), rng.random());
    let s = r1.sqrt();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

pub fn sample_points(mesh: &TexturedMesh, strategy: &SamplingStrategy, seed: u64) -> Result<PointCloud, SamplingError> {
    let n = mesh.face_count();
    let points = match *strategy {
        SamplingStrategy::FaceCentered => {
            (0..n).into_par_iter().map(|f| point_on_face(mesh, f, [1.0 / 3.0; 3])).collect()
        }
        SamplingStrategy::Random { count } => {
            if count == 0 {
                return Err(SamplingError::InvalidParams("random sampling needs a positive count"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let areas: Vec<f64> = (0..n).map(|f| mesh.face_area(f)).collect();
            let pick = WeightedIndex::new(&areas).map_err(|_| SamplingError::InvalidParams("mesh has no area"))?;
            (0..count)
                .map(|_| {
                    let f = pick.sample(&mut rng);
                    let b = uniform_barycentric(&mut rng);
                    point_on_face(mesh, f, b)
                })
                .collect()
        }
        SamplingStrategy::Poisson { radius } => poisson(mesh, radius, seed)?,
        SamplingStrategy::Superpixel { region_size } => superpixel_points(mesh, region_size, seed)?,
    };
    Ok(PointCloud { points })
}

/// Dart throwing: area-uniform candidates, accepted when no earlier point
/// lies within `radius`.
fn poisson(mesh: &TexturedMesh, radius: f64, seed: u64) -> Result<Vec<SamplePoint>, SamplingError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(SamplingError::InvalidParams("poisson radius must be positive"));
    }
    let n = mesh.face_count();
    let areas: Vec<f64> = (0..n).map(|f| mesh.face_area(f)).collect();
    let pick = WeightedIndex::new(&areas).map_err(|_| SamplingError::InvalidParams("mesh has no area"))?;
    let slots = mesh.total_area() / (std::f64::consts::PI * radius * radius / 4.0);
    let darts = (DARTS_PER_SAMPLE * slots).ceil();
    if darts > MAX_DARTS {
        return Err(SamplingError::InvalidParams("poisson radius too small for the mesh"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = |p: &Vec3| [(p.x / radius).floor() as i64, (p.y / radius).floor() as i64, (p.z / radius).floor() as i64];
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut out: Vec<SamplePoint> = Vec::new();
    let r2 = radius * radius;
    for _ in 0..darts as usize {
        let f = pick.sample(&mut rng);
        let b = uniform_barycentric(&mut rng);
        let [a, bb, c] = mesh.face_vertices(f);
        let p = a * b[0] + bb * b[1] + c * b[2];
        let k = cell(&p);
        let mut clear = true;
        'outer: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list.iter().any(|&i| (out[i].position - p).norm_squared() < r2) {
                            clear = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        if clear {
            grid.entry(k).or_default().push(out.len());
            out.push(point_on_face(mesh, f, b));
        }
    }
    Ok(out)
}

/// One point per SLIC superpixel of every textured segment canvas, at the
/// covered texel nearest the superpixel centroid.
fn superpixel_points(mesh: &TexturedMesh, region_size: u32, seed: u64) -> Result<Vec<SamplePoint>, SamplingError> {
    if !mesh.is_textured() {
        return Err(SamplingError::Untextured);
    }
    let segs = oversegment(mesh, &SegmentParams::default()).map_err(|_| SamplingError::InvalidParams("segmentation failed"))?;
    let params = SuperpixelParams { region_size, seed, ..Default::default() };
    let per_segment: Vec<Vec<SamplePoint>> = segs
        .segments
        .par_iter()
        .map(|seg| {
            let canvas = match build_canvas(mesh, seg) {
                Ok(c) => c,
                Err(TextureError::Untextured) => return Ok(Vec::new()),
                Err(e) => return Err(e.into()),
            };
            if canvas.covered_count() == 0 {
                return Ok(Vec::new());
            }
            let sp = compute_superpixels(&canvas, &params)?;
            let mut pts = Vec::with_capacity(sp.len());
            for (k, texels) in sp.texels.iter().enumerate() {
                let m = texels.len() as f64;
                let cx = texels.iter().map(|t| t.0 as f64 + 0.5).sum::<f64>() / m;
                let cy = texels.iter().map(|t| t.1 as f64 + 0.5).sum::<f64>() / m;
                let &(x, y) = texels
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.0 as f64 + 0.5 - cx).powi(2) + (a.1 as f64 + 0.5 - cy).powi(2);
                        let db = (b.0 as f64 + 0.5 - cx).powi(2) + (b.1 as f64 + 0.5 - cy).powi(2);
                        da.total_cmp(&db)
                    })
                    .expect("superpixels are non-empty");
                let Some(hit) = canvas.lift(mesh, x, y) else { continue };
                let c = sp.stats[k].mean_rgb;
                pts.push(SamplePoint {
                    position: hit.position,
                    normal: mesh.face_normal(hit.face),
                    color: c.map(|v| v.round().clamp(0.0, 255.0) as u8),
                    face: hit.face,
                    texel: canvas.to_page(x, y),
                    class: None,
                });
            }
            Ok(pts)
        })
        .collect::<Result<_, SamplingError>>()?;
    Ok(per_segment.into_iter().flatten().collect())
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Labels every point with its source face's class.
    pub fn label_from_faces(&mut self, labels: &FaceLabelMap) {
        for p in &mut self.points {
            p.class = labels.labels.get(p.face).copied();
        }
    }

    /// Labels every point with the class of its source texel; points on
    /// untextured faces are left unlabelled.
    pub fn label_from_pixels(&mut self, mask: &PixelLabelMask) {
        for p in &mut self.points {
            p.class = p.texel.and_then(|(page, x, y)| mask.pages.get(page).map(|r| r.get(x, y)));
        }
    }

    fn checked_classes(&self, faces: usize) -> Result<Vec<ClassId>, SamplingError> {
        if self.points.is_empty() {
            return Err(SamplingError::EmptyCloud);
        }
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.face >= faces {
                    return Err(SamplingError::FaceOutOfRange { point: i, face: p.face, faces });
                }
                p.class.ok_or(SamplingError::Unlabeled(i))
            })
            .collect()
    }

    /// Binary PLY with x,y,z,nx,ny,nz,red,green,blue,label,face_id.
    /// Unlabelled points are written as class 0.
    pub fn write_ply(&self, path: &Path) -> Result<(), SamplingError> {
        let f = ScalarType::F64;
        let u = ScalarType::U8;
        let mut el = PlyElement::new(
            "vertex",
            vec![
                PropertyDef::scalar("x", f),
                PropertyDef::scalar("y", f),
                PropertyDef::scalar("z", f),
                PropertyDef::scalar("nx", ScalarType::F32),
                PropertyDef::scalar("ny", ScalarType::F32),
                PropertyDef::scalar("nz", ScalarType::F32),
                PropertyDef::scalar("red", u),
                PropertyDef::scalar("green", u),
                PropertyDef::scalar("blue", u),
                PropertyDef::scalar("label", u),
                PropertyDef::scalar("face_id", ScalarType::I32),
            ],
        );
        for p in &self.points {
            let mut row: Vec<f64> = vec![p.position.x, p.position.y, p.position.z];
            row.extend([p.normal.x as f32 as f64, p.normal.y as f32 as f64, p.normal.z as f32 as f64]);
            row.extend(p.color.map(f64::from));
            row.push(p.class.unwrap_or(UNCLASSIFIED) as f64);
            row.push(p.face as f64);
            el.rows.push(row.into_iter().map(PlyValue::Scalar).collect());
        }
        let data = PlyData { format: PlyFormat::BinaryLittleEndian, comments: vec![], elements: vec![el] };
        let file = File::create(path).map_err(MeshError::from)?;
        data.write(BufWriter::new(file))?;
        Ok(())
    }

    /// Reads a cloud written by [`PointCloud::write_ply`]; texels are not
    /// stored and come back as `None`.
    pub fn read_ply(path: &Path) -> Result<Self, SamplingError> {
        let file = File::open(path).map_err(|_| MeshError::MissingFile(path.to_path_buf()))?;
        let data = PlyData::read(BufReader::new(file))?;
        let el = data.element("vertex").ok_or_else(|| SamplingError::Format("no vertex element".into()))?;
        let col = |name: &str| el.scalars(name).ok_or_else(|| SamplingError::Format(format!("missing property {name}")));
        let cols: Vec<Vec<f64>> = ["x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", "label", "face_id"]
            .iter()
            .map(|n| col(n))
            .collect::<Result<_, _>>()?;
        let points = (0..el.rows.len())
            .map(|i| SamplePoint {
                position: Vec3::new(cols[0][i], cols[1][i], cols[2][i]),
                normal: Vec3::new(cols[3][i], cols[4][i], cols[5][i]),
                color: [cols[6][i] as u8, cols[7][i] as u8, cols[8][i] as u8],
                class: Some(cols[9][i] as ClassId),
                face: cols[10][i] as usize,
                texel: None,
            })
            .collect();
        Ok(Self { points })
    }
}

/// Per-face majority vote over face-track classes (ties → lowest class);
/// faces without such votes take the class of the nearest face-track point,
/// or stay unclassified when the cloud has none.
pub fn transfer_to_faces(mesh: &TexturedMesh, cloud: &PointCloud) -> Result<FaceLabelMap, SamplingError> {
    let n = mesh.face_count();
    let classes = cloud.checked_classes(n)?;
    let taxonomy = LabelTaxonomy::urban();
    let allowed: Vec<usize> = (0..classes.len()).filter(|&i| taxonomy.is_face_class(classes[i])).collect();
    let mut votes: Vec<[u32; 256]> = vec![[0; 256]; 0];
    votes.resize(n, [0; 256]);
    for &i in &allowed {
        votes[cloud.points[i].face][classes[i] as usize] += 1;
    }
    let tree = KdTree::new(allowed.iter().map(|&i| cloud.points[i].position).collect());
    let labels = (0..n)
        .into_par_iter()
        .map(|f| {
            let v = &votes[f];
            let best = (0..256).max_by(|&a, &b| v[a].cmp(&v[b]).then(b.cmp(&a))).unwrap();
            if v[best] > 0 {
                best as ClassId
            } else {
                tree.nearest(&mesh.face_centroid(f)).map_or(UNCLASSIFIED, |(j, _)| classes[allowed[j]])
            }
        })
        .collect();
    Ok(FaceLabelMap { labels })
}

/// Every covered texel takes the class of the nearest point to its lifted
/// position, or 0 when that class is face-only; uncovered texels stay 0.
pub fn transfer_to_pixels(mesh: &TexturedMesh, cloud: &PointCloud) -> Result<PixelLabelMask, SamplingError> {
    let classes = cloud.checked_classes(mesh.face_count())?;
    let taxonomy = LabelTaxonomy::urban();
    let classes: Vec<ClassId> =
        classes.into_iter().map(|c| if taxonomy.is_pixel_class(c) { c } else { UNCLASSIFIED }).collect();
    let tree = KdTree::new(cloud.points.iter().map(|p| p.position).collect());
    let mut mask = PixelLabelMask::unclassified(mesh);
    for (page, raster) in mask.pages.iter_mut().enumerate() {
        let w = raster.width;
        raster.data.par_chunks_mut(w as usize).enumerate().for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                if let Some(f) = mesh.texel_owner(page, x as u32, y as u32) {
                    let hit = mesh.lift_in_face(f, [x as f64 + 0.5, y as f64 + 0.5]);
                    let (i, _) = tree.nearest(&hit.position).expect("non-empty cloud");
                    *out = classes[i];
                }
            }
        });
    }
    Ok(mask)
}
