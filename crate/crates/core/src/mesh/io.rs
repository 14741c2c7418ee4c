use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::ply::{PlyData, PlyElement, PlyFormat, PlyValue, PropertyDef, ScalarType};
use super::{FaceTexture, MeshError, TexturedMesh};
use crate::Vec3;

/// Summary of what `load_mesh` had to discard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub faces_read: usize,
    pub degenerate_dropped: usize,
}

/// Loads an OBJ (+MTL, PNG/JPEG pages) or PLY mesh.
pub fn load_mesh(path: &Path) -> Result<(TexturedMesh, LoadReport), MeshError> {
    if !path.exists() {
        return Err(MeshError::MissingFile(path.to_path_buf()));
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "obj" => load_obj(path),
        "ply" => load_ply(path),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

fn load_image(path: &Path) -> Result<RgbImage, MeshError> {
    if !path.exists() {
        return Err(MeshError::MissingTexture(path.display().to_string()));
    }
    Ok(image::open(path)?.to_rgb8())
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| MeshError::Parse(format!("line {line}: expected a number")))
}

fn resolve_index(raw: &str, len: usize, line: usize) -> Result<i64, MeshError> {
    let i: i64 = raw
        .parse()
        .map_err(|_| MeshError::Parse(format!("line {line}: bad index {raw:?}")))?;
    Ok(if i < 0 { len as i64 + i } else { i - 1 })
}

fn load_obj(path: &Path) -> Result<(TexturedMesh, LoadReport), MeshError> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reader = BufReader::new(File::open(path)?);
    let mut vertices = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<[i64; 3]> = Vec::new();
    let mut face_uv: Vec<Option<[i64; 3]>> = Vec::new();
    let mut face_mtl: Vec<Option<String>> = Vec::new();
    let mut mtl_files: Vec<PathBuf> = Vec::new();
    let mut current_mtl: Option<String> = None;

    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = ln + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let x = parse_f64(toks.next(), line_no)?;
                let y = parse_f64(toks.next(), line_no)?;
                let z = parse_f64(toks.next(), line_no)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("vt") => {
                let u = parse_f64(toks.next(), line_no)?;
                let v = parse_f64(toks.next(), line_no)?;
                texcoords.push([u, v]);
            }
            Some("f") => {
                let mut corners = Vec::new();
                for tok in toks {
                    let mut parts = tok.split('/');
                    let vi = resolve_index(parts.next().unwrap_or(""), vertices.len(), line_no)?;
                    let ti = match parts.next() {
                        Some(t) if !t.is_empty() => Some(resolve_index(t, texcoords.len(), line_no)?),
                        _ => None,
                    };
                    corners.push((vi, ti));
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse(format!("line {line_no}: face with < 3 corners")));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push(tri.map(|c| c.0));
                    let uv = match tri.map(|c| c.1) {
                        [Some(a), Some(b), Some(c)] => Some([a, b, c]),
                        _ => None,
                    };
                    face_uv.push(uv);
                    face_mtl.push(current_mtl.clone());
                }
            }
            Some("usemtl") => current_mtl = toks.next().map(str::to_string),
            Some("mtllib") => {
                let rest: Vec<&str> = toks.collect();
                mtl_files.push(dir.join(rest.join(" ")));
            }
            _ => {}
        }
    }

    let mut material_maps: HashMap<String, PathBuf> = HashMap::new();
    for mtl in &mtl_files {
        let mtl_dir = mtl.parent().map(Path::to_path_buf).unwrap_or_default();
        let f = File::open(mtl).map_err(|_| MeshError::MissingTexture(mtl.display().to_string()))?;
        let mut current = None;
        for line in BufReader::new(f).lines() {
            let line = line?;
            let mut toks = line.split_whitespace();
            match toks.next() {
                Some("newmtl") => current = toks.next().map(str::to_string),
                Some("map_Kd") => {
                    if let Some(name) = &current {
                        let file: Vec<&str> = toks.collect();
                        if let Some(last) = file.last() {
                            material_maps.insert(name.clone(), mtl_dir.join(last));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    // pages in first-use order of textured materials
    let mut page_of: HashMap<String, usize> = HashMap::new();
    let mut pages = Vec::new();
    let mut page_names = Vec::new();
    for m in face_mtl.iter().flatten() {
        if page_of.contains_key(m) {
            continue;
        }
        if let Some(p) = material_maps.get(m) {
            page_of.insert(m.clone(), pages.len());
            pages.push(load_image(p)?);
            page_names.push(p.file_name().and_then(|n| n.to_str()).unwrap_or("page.png").to_string());
        }
    }

    let nv = vertices.len();
    let mut tri = Vec::with_capacity(faces.len());
    let mut tex = Vec::with_capacity(faces.len());
    for (fi, f) in faces.iter().enumerate() {
        for &i in f {
            if i < 0 || i as usize >= nv {
                return Err(MeshError::VertexOutOfRange { face: fi, index: i, count: nv });
            }
        }
        tri.push(f.map(|i| i as u32));
        let t = match (&face_uv[fi], face_mtl[fi].as_ref().and_then(|m| page_of.get(m))) {
            (Some(uv), Some(&page)) => {
                let mut coords = [[0.0; 2]; 3];
                for k in 0..3 {
                    let ti = uv[k];
                    if ti < 0 || ti as usize >= texcoords.len() {
                        return Err(MeshError::Parse(format!("face {fi}: texcoord index out of range")));
                    }
                    coords[k] = texcoords[ti as usize];
                }
                Some(FaceTexture { page, uv: coords })
            }
            _ => None,
        };
        tex.push(t);
    }
    let faces_read = tri.len();
    let (mesh, dropped) = TexturedMesh::with_page_names(vertices, tri, tex, pages, page_names)?;
    Ok((mesh, LoadReport { faces_read, degenerate_dropped: dropped }))
}

fn load_ply(path: &Path) -> Result<(TexturedMesh, LoadReport), MeshError> {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let data = PlyData::read(BufReader::new(File::open(path)?))?;
    let vert = data
        .element("vertex")
        .ok_or_else(|| MeshError::Parse("PLY has no vertex element".into()))?;
    let xs = vert.scalars("x").ok_or_else(|| MeshError::Parse("vertex.x missing".into()))?;
    let ys = vert.scalars("y").ok_or_else(|| MeshError::Parse("vertex.y missing".into()))?;
    let zs = vert.scalars("z").ok_or_else(|| MeshError::Parse("vertex.z missing".into()))?;
    let vertices: Vec<Vec3> = (0..xs.len()).map(|i| Vec3::new(xs[i], ys[i], zs[i])).collect();

    let mut page_names = Vec::new();
    let mut pages = Vec::new();
    for c in &data.comments {
        if let Some(name) = c.strip_prefix("TextureFile ") {
            pages.push(load_image(&dir.join(name.trim()))?);
            page_names.push(name.trim().to_string());
        }
    }

    let face_el = data.element("face").ok_or_else(|| MeshError::Parse("PLY has no face element".into()))?;
    let vi = face_el
        .prop_index("vertex_indices")
        .or_else(|| face_el.prop_index("vertex_index"))
        .ok_or_else(|| MeshError::Parse("face.vertex_indices missing".into()))?;
    let tci = face_el.prop_index("texcoord");
    let tni = face_el.prop_index("texnumber");
    let nv = vertices.len();
    let mut faces = Vec::new();
    let mut tex = Vec::new();
    for (fi, row) in face_el.rows.iter().enumerate() {
        let idx = row[vi].as_list().ok_or_else(|| MeshError::Parse("vertex_indices must be a list".into()))?;
        if idx.len() < 3 {
            return Err(MeshError::Parse(format!("face {fi} has < 3 vertices")));
        }
        for &i in idx {
            if i < 0.0 || i as usize >= nv {
                return Err(MeshError::VertexOutOfRange { face: fi, index: i as i64, count: nv });
            }
        }
        let uv = tci.and_then(|t| row[t].as_list()).filter(|l| l.len() == 2 * idx.len());
        let page = tni.and_then(|t| row[t].as_scalar()).map(|p| p as usize).unwrap_or(0);
        for k in 1..idx.len() - 1 {
            faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
            tex.push(match uv {
                Some(l) if !pages.is_empty() => Some(FaceTexture {
                    page,
                    uv: [[l[0], l[1]], [l[2 * k], l[2 * k + 1]], [l[2 * k + 2], l[2 * k + 3]]],
                }),
                _ => None,
            });
        }
    }
    let faces_read = faces.len();
    let (mesh, dropped) = TexturedMesh::with_page_names(vertices, faces, tex, pages, page_names)?;
    Ok((mesh, LoadReport { faces_read, degenerate_dropped: dropped }))
}

/// Writes the mesh as OBJ + MTL + PNG pages into `dir` using `stem` for
/// file names. Output is byte-stable for identical meshes.
pub fn save_obj(mesh: &TexturedMesh, dir: &Path, stem: &str) -> Result<PathBuf, MeshError> {
    std::fs::create_dir_all(dir)?;
    let obj_path = dir.join(format!("{stem}.obj"));
    let mtl_name = format!("{stem}.mtl");
    let mut page_files = Vec::new();
    for (i, page) in mesh.pages().iter().enumerate() {
        let name = format!("{stem}_page{i}.png");
        page.save_with_format(dir.join(&name), image::ImageFormat::Png)?;
        page_files.push(name);
    }
    {
        let mut mtl = BufWriter::new(File::create(dir.join(&mtl_name))?);
        for (i, name) in page_files.iter().enumerate() {
            writeln!(mtl, "newmtl page{i}\nKd 1 1 1\nmap_Kd {name}\n")?;
        }
    }
    let mut w = BufWriter::new(File::create(&obj_path)?);
    if !page_files.is_empty() {
        writeln!(w, "mtllib {mtl_name}")?;
    }
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in mesh.face_textures().iter().flatten() {
        for uv in &t.uv {
            writeln!(w, "vt {} {}", uv[0], uv[1])?;
        }
    }
    let mut vt = 1usize;
    let mut current_page: Option<usize> = None;
    for (fi, f) in mesh.faces().iter().enumerate() {
        match mesh.face_texture(fi) {
            Some(t) => {
                if current_page != Some(t.page) {
                    writeln!(w, "usemtl page{}", t.page)?;
                    current_page = Some(t.page);
                }
                writeln!(
                    w,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    vt,
                    f[1] + 1,
                    vt + 1,
                    f[2] + 1,
                    vt + 2
                )?;
                vt += 3;
            }
            None => {
                if current_page.is_some() {
                    writeln!(w, "usemtl none")?;
                    current_page = None;
                }
                writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
            }
        }
    }
    w.flush()?;
    Ok(obj_path)
}

/// Mesh geometry plus one integer per-face property, as binary PLY.
pub fn write_face_property_ply(
    mesh: &TexturedMesh,
    property: &str,
    values: &[i64],
    path: &Path,
) -> Result<(), MeshError> {
    face_property_ply(mesh, property, values).write(BufWriter::new(File::create(path)?))
}

pub(crate) fn face_property_ply(mesh: &TexturedMesh, property: &str, values: &[i64]) -> PlyData {
    let mut v = PlyElement::new(
        "vertex",
        vec![
            PropertyDef::scalar("x", ScalarType::F64),
            PropertyDef::scalar("y", ScalarType::F64),
            PropertyDef::scalar("z", ScalarType::F64),
        ],
    );
    v.rows = mesh
        .vertices()
        .iter()
        .map(|p| vec![PlyValue::Scalar(p.x), PlyValue::Scalar(p.y), PlyValue::Scalar(p.z)])
        .collect();
    let mut f = PlyElement::new(
        "face",
        vec![
            PropertyDef::list("vertex_indices", ScalarType::U8, ScalarType::I32),
            PropertyDef::scalar(property, ScalarType::I32),
        ],
    );
    f.rows = mesh
        .faces()
        .iter()
        .zip(values)
        .map(|(t, &l)| {
            vec![PlyValue::List(t.iter().map(|&i| i as f64).collect()), PlyValue::Scalar(l as f64)]
        })
        .collect();
    PlyData { format: PlyFormat::BinaryLittleEndian, comments: Vec::new(), elements: vec![v, f] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file() {
        let err = load_mesh(Path::new("/nonexistent/mesh.obj")).unwrap_err();
        assert!(matches!(err, MeshError::MissingFile(_)));
    }

    #[test]
    fn obj_with_zero_area_face() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        std::fs::write(
            &p,
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\nf 2 3 1\n",
        )
        .unwrap();
        let (m, rep) = load_mesh(&p).unwrap();
        assert_eq!(rep.faces_read, 3);
        assert_eq!(rep.degenerate_dropped, 1);
        assert_eq!(m.face_count(), 2);
    }

    #[test]
    fn obj_out_of_range_vertex() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap();
        assert!(matches!(load_mesh(&p), Err(MeshError::VertexOutOfRange { .. })));
    }

    #[test]
    fn obj_missing_texture_page() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.mtl"), "newmtl a\nmap_Kd nothere.png\n").unwrap();
        let p = dir.path().join("m.obj");
        std::fs::write(&p, "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nusemtl a\nf 1/1 2/2 3/3\n")
            .unwrap();
        assert!(matches!(load_mesh(&p), Err(MeshError::MissingTexture(_))));
    }

    #[test]
    fn unparseable_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        std::fs::write(&p, "v 0 zero 0\n").unwrap();
        assert!(matches!(load_mesh(&p), Err(MeshError::Parse(_))));
    }
}
