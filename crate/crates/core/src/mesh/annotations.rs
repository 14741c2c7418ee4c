use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::face_property_ply;
use super::ply::PlyData;
use super::{ClassId, LabelClass, LabelTaxonomy, MeshError, TexturedMesh, UNCLASSIFIED};

/// Per-face class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceLabelMap {
    pub labels: Vec<ClassId>,
}

impl FaceLabelMap {
    pub fn unclassified(faces: usize) -> Self {
        Self { labels: vec![UNCLASSIFIED; faces] }
    }

    pub fn validate(&self, mesh: &TexturedMesh, taxonomy: &LabelTaxonomy) -> Result<(), MeshError> {
        if self.labels.len() != mesh.face_count() {
            return Err(MeshError::FaceCountMismatch {
                expected: mesh.face_count(),
                found: self.labels.len(),
            });
        }
        if let Some((f, &c)) = self.labels.iter().enumerate().find(|(_, &c)| !taxonomy.is_face_class(c)) {
            return Err(MeshError::InvalidLabel { class: c, context: format!("face {f}") });
        }
        Ok(())
    }
}

/// One class-id raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRaster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<ClassId>,
}

impl LabelRaster {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![UNCLASSIFIED; (width * height) as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.data[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: ClassId) {
        self.data[(y * self.width + x) as usize] = c;
    }
}

/// One raster per atlas page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelLabelMask {
    pub pages: Vec<LabelRaster>,
}

impl PixelLabelMask {
    pub fn unclassified(mesh: &TexturedMesh) -> Self {
        Self { pages: mesh.pages().iter().map(|p| LabelRaster::new(p.width(), p.height())).collect() }
    }

    pub fn validate(&self, mesh: &TexturedMesh, taxonomy: &LabelTaxonomy) -> Result<(), MeshError> {
        for (i, page) in mesh.pages().iter().enumerate() {
            let r = self.pages.get(i).ok_or(MeshError::MissingMask(i))?;
            if (r.width, r.height) != page.dimensions() {
                return Err(MeshError::MaskResolution {
                    page: i,
                    expected: page.dimensions(),
                    found: (r.width, r.height),
                });
            }
            if let Some(&c) = r.data.iter().find(|&&c| !taxonomy.is_pixel_class(c)) {
                return Err(MeshError::InvalidLabel { class: c, context: format!("mask page {i}") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub page: usize,
    pub file: String,
    pub width: u32,
    pub height: u32,
}

/// JSON manifest describing an annotation export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationManifest {
    pub format_version: u32,
    pub classes: Vec<LabelClass>,
    pub face_count: usize,
    pub face_labels: String,
    pub masks: Vec<MaskEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const FACE_LABEL_FILE: &str = "face_labels.ply";

/// Writes face labels (PLY), per-page indexed PNG masks and the manifest.
pub fn save_annotations(
    mesh: &TexturedMesh,
    taxonomy: &LabelTaxonomy,
    face_labels: &FaceLabelMap,
    masks: &PixelLabelMask,
    dir: &Path,
) -> Result<AnnotationManifest, MeshError> {
    face_labels.validate(mesh, taxonomy)?;
    masks.validate(mesh, taxonomy)?;
    std::fs::create_dir_all(dir)?;

    let values: Vec<i64> = face_labels.labels.iter().map(|&c| c as i64).collect();
    face_property_ply(mesh, "label", &values).write(BufWriter::new(File::create(dir.join(FACE_LABEL_FILE))?))?;

    let palette = taxonomy.palette();
    let mut entries = Vec::new();
    for (i, raster) in masks.pages.iter().enumerate().take(mesh.pages().len()) {
        let file = format!("mask_page{i}.png");
        write_indexed_png(&dir.join(&file), raster, &palette)?;
        entries.push(MaskEntry { page: i, file, width: raster.width, height: raster.height });
    }
    let manifest = AnnotationManifest {
        format_version: 1,
        classes: taxonomy.classes().to_vec(),
        face_count: mesh.face_count(),
        face_labels: FACE_LABEL_FILE.to_string(),
        masks: entries,
    };
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| MeshError::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

/// Inverse of [`save_annotations`].
pub fn load_annotations(
    mesh: &TexturedMesh,
    dir: &Path,
) -> Result<(LabelTaxonomy, FaceLabelMap, PixelLabelMask), MeshError> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.exists() {
        return Err(MeshError::MissingFile(mpath));
    }
    let manifest: AnnotationManifest = serde_json::from_reader(BufReader::new(File::open(&mpath)?))
        .map_err(|e| MeshError::Parse(format!("manifest: {e}")))?;
    let taxonomy = LabelTaxonomy::from_classes(manifest.classes.clone())?;
    if manifest.face_count != mesh.face_count() {
        return Err(MeshError::FaceCountMismatch { expected: mesh.face_count(), found: manifest.face_count });
    }
    let fpath = dir.join(&manifest.face_labels);
    if !fpath.exists() {
        return Err(MeshError::MissingFile(fpath));
    }
    let labels = read_face_property(&fpath, "label")?;
    let face_labels = FaceLabelMap {
        labels: labels
            .into_iter()
            .map(|v| {
                if (0..=ClassId::MAX as i64).contains(&v) {
                    Ok(v as ClassId)
                } else {
                    Err(MeshError::InvalidLabel { class: ClassId::MAX, context: format!("label value {v}") })
                }
            })
            .collect::<Result<_, _>>()?,
    };
    face_labels.validate(mesh, &taxonomy)?;

    let mut pages = Vec::new();
    for (i, page) in mesh.pages().iter().enumerate() {
        let entry = manifest.masks.iter().find(|e| e.page == i).ok_or(MeshError::MissingMask(i))?;
        let path = dir.join(&entry.file);
        if !path.exists() {
            return Err(MeshError::MissingMask(i));
        }
        let raster = read_indexed_png(&path)?;
        if (raster.width, raster.height) != page.dimensions() {
            return Err(MeshError::MaskResolution {
                page: i,
                expected: page.dimensions(),
                found: (raster.width, raster.height),
            });
        }
        pages.push(raster);
    }
    let masks = PixelLabelMask { pages };
    masks.validate(mesh, &taxonomy)?;
    Ok((taxonomy, face_labels, masks))
}

/// Reads an integer per-face property (`label`, `segment`, ...) from a PLY.
pub fn read_face_property(path: &Path, property: &str) -> Result<Vec<i64>, MeshError> {
    let data = PlyData::read(BufReader::new(File::open(path)?))?;
    let face = data.element("face").ok_or_else(|| MeshError::Parse("no face element".into()))?;
    let col = face
        .scalars(property)
        .ok_or_else(|| MeshError::Parse(format!("face property {property:?} missing")))?;
    Ok(col.into_iter().map(|v| v as i64).collect())
}

pub(crate) fn write_indexed_png(path: &Path, raster: &LabelRaster, palette: &[u8]) -> Result<(), MeshError> {
    let bytes = encode_indexed_png(raster, palette)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// 8-bit indexed PNG, palette index = class id.
pub fn encode_indexed_png(raster: &LabelRaster, palette: &[u8]) -> Result<Vec<u8>, MeshError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width, raster.height);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette.to_vec());
        let mut w = enc.write_header().map_err(|e| MeshError::Image(e.to_string()))?;
        w.write_image_data(&raster.data).map_err(|e| MeshError::Image(e.to_string()))?;
    }
    Ok(out)
}

pub(crate) fn read_indexed_png(path: &Path) -> Result<LabelRaster, MeshError> {
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| MeshError::Image(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(MeshError::Image(format!("{} is not an 8-bit indexed PNG", path.display())));
    }
    let (width, height) = (info.width, info.height);
    let mut buf = vec![0u8; (width * height) as usize];
    reader.next_frame(&mut buf).map_err(|e| MeshError::Image(e.to_string()))?;
    Ok(LabelRaster { width, height, data: buf })
}
