//! OBJ export/import and per-keyframe texturing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::Vec3;
use crate::mesh::SurfaceMesh;
use crate::slam::{Keyframe, Pose};

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no keyframes to choose from")]
    NoKeyframes,
    #[error("keyframe {0} has no image reference")]
    NoImage(u64),
}

/// Serializes `mesh` as OBJ text. Coordinates use six decimals; texture
/// coordinates, when present, share the vertex indices.
pub fn obj_string(mesh: &SurfaceMesh) -> String {
    let mut s = String::with_capacity(64 + mesh.vertices.len() * 40 + mesh.triangles.len() * 24);
    let _ = writeln!(s, "# meshtwin surface version {}", mesh.version);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    if let Some(uvs) = &mesh.uvs {
        for uv in uvs {
            let _ = writeln!(s, "vt {:.6} {:.6}", uv[0], uv[1]);
        }
        for t in &mesh.triangles {
            let (a, b, c) = (t[0] + 1, t[1] + 1, t[2] + 1);
            let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
        }
    } else {
        for t in &mesh.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    s
}

/// Writes `mesh` to `path`; returns the byte count.
pub fn export_obj(mesh: &SurfaceMesh, path: &Path) -> Result<u64, MeshIoError> {
    let s = obj_string(mesh);
    std::fs::write(path, &s).map_err(|source| MeshIoError::Io { path: path.to_path_buf(), source })?;
    Ok(s.len() as u64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
    /// Texture index per triangle corner, when faces carry them.
    pub tex_triangles: Vec<[u32; 3]>,
}

impl ObjMesh {
    pub fn into_surface(self, version: u64) -> SurfaceMesh {
        let mut m = SurfaceMesh::from_triangles(version, self.vertices, self.triangles);
        if !self.uvs.is_empty() && self.tex_triangles == m.triangles {
            m.uvs = Some(self.uvs);
        }
        m
    }
}

/// Parses the v/vt/f subset. Polygons are fan-triangulated; normals and
/// other records are ignored.
pub fn parse_obj(text: &str) -> Result<ObjMesh, MeshIoError> {
    let mut out = ObjMesh::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        let mut it = body.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let err = |msg: String| MeshIoError::Parse { line, msg };
        let num = |s: Option<&str>| -> Result<f64, MeshIoError> {
            s.ok_or_else(|| err("missing coordinate".into()))?
                .parse()
                .map_err(|_| err(format!("bad number in {body:?}")))
        };
        match tag {
            "v" => out.vertices.push(Vec3::new(num(it.next())?, num(it.next())?, num(it.next())?)),
            "vt" => out.uvs.push([num(it.next())?, num(it.next())?]),
            "f" => {
                let mut corners = Vec::new();
                for c in it {
                    let mut parts = c.split('/');
                    let vi = index(parts.next(), out.vertices.len()).map_err(|m| err(m))?;
                    let ti = match parts.next() {
                        Some(s) if !s.is_empty() => Some(index(Some(s), out.uvs.len()).map_err(|m| err(m))?),
                        _ => None,
                    };
                    corners.push((vi, ti));
                }
                if corners.len() < 3 {
                    return Err(err("face with fewer than 3 vertices".into()));
                }
                for k in 1..corners.len() - 1 {
                    let (a, b, c) = (corners[0], corners[k], corners[k + 1]);
                    out.triangles.push([a.0, b.0, c.0]);
                    if let (Some(x), Some(y), Some(z)) = (a.1, b.1, c.1) {
                        out.tex_triangles.push([x, y, z]);
                    }
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn index(s: Option<&str>, len: usize) -> Result<u32, String> {
    let s = s.ok_or("missing index")?;
    let i: i64 = s.parse().map_err(|_| format!("bad index {s:?}"))?;
    let resolved = if i > 0 { i - 1 } else { len as i64 + i };
    if i == 0 || resolved < 0 || resolved >= len as i64 {
        return Err(format!("index {i} out of range (have {len})"));
    }
    Ok(resolved as u32)
}

pub fn load_obj(path: &Path) -> Result<SurfaceMesh, MeshIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshIoError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_obj(&text)?.into_surface(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    NotVisible,
}

/// Pinhole projection into normalized image coordinates.
pub fn project_vertex(kf: &Keyframe, p: &Vec3) -> Projection {
    match kf.project(p) {
        Some((px, py, depth)) => Projection::Visible {
            u: px / kf.intrinsics.width as f64,
            v: py / kf.intrinsics.height as f64,
            depth,
        },
        None => Projection::NotVisible,
    }
}

/// Texture-selection score of `kf` for `query`: viewing-direction cosine
/// minus `lambda` times centre distance over `diameter`.
pub fn texture_score(query: &Pose, kf: &Keyframe, diameter: f64, lambda: f64) -> f64 {
    let cos = query.forward().dot(&kf.pose.forward());
    let dist = (query.translation - kf.pose.translation).norm();
    cos - lambda * dist / diameter
}

pub const TEXTURE_LAMBDA: f64 = 0.5;

/// Keyframe with the best score; ties go to the highest id.
pub fn select_texture_keyframe(query: &Pose, keyframes: &[Keyframe], diameter: f64) -> Result<u64, MeshIoError> {
    select_texture_keyframe_with(query, keyframes, diameter, TEXTURE_LAMBDA)
}

pub fn select_texture_keyframe_with(query: &Pose, keyframes: &[Keyframe], diameter: f64, lambda: f64) -> Result<u64, MeshIoError> {
    keyframes
        .iter()
        .map(|k| (texture_score(query, k, diameter, lambda), k.id))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(MeshIoError::NoKeyframes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturedSubmesh {
    pub keyframe: u64,
    /// Compacted submesh with `uvs` set.
    pub mesh: SurfaceMesh,
    pub image_ref: String,
}

/// Triangles facing the keyframe camera with all three corners inside its
/// frustum, with texture coordinates from the projection. Occlusion is not
/// considered.
pub fn build_textured_submesh(mesh: &SurfaceMesh, kf: &Keyframe) -> Result<TexturedSubmesh, MeshIoError> {
    let image_ref = kf.image_ref.clone().ok_or(MeshIoError::NoImage(kf.id))?;
    let proj: Vec<Option<[f64; 2]>> = mesh
        .vertices
        .iter()
        .map(|p| match project_vertex(kf, p) {
            Projection::Visible { u, v, .. } => Some([u, v]),
            Projection::NotVisible => None,
        })
        .collect();
    let eye = kf.pose.translation;
    let mut remap = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    let mut triangles = Vec::new();
    let mut normals = Vec::new();
    for (i, t) in mesh.triangles.iter().enumerate() {
        if t.iter().any(|&v| proj[v as usize].is_none()) {
            continue;
        }
        let [a, b, c] = mesh.triangle(i);
        let centroid = (a + b + c) / 3.0;
        if mesh.normals[i].dot(&(eye - centroid)) <= 0.0 {
            continue;
        }
        let nt = t.map(|v| {
            let slot = &mut remap[v as usize];
            if *slot == u32::MAX {
                *slot = vertices.len() as u32;
                vertices.push(mesh.vertices[v as usize]);
                uvs.push(proj[v as usize].expect("visible"));
            }
            *slot
        });
        triangles.push(nt);
        normals.push(mesh.normals[i]);
    }
    Ok(TexturedSubmesh {
        keyframe: kf.id,
        mesh: SurfaceMesh {
            version: mesh.version,
            vertices,
            triangles,
            normals,
            uvs: Some(uvs),
            texture: Some(PathBuf::from(&image_ref)),
        },
        image_ref,
    })
}

/// Writes `<stem>.obj` and a copy of the keyframe image into `dir`.
/// A relative `image_ref` is resolved against `image_root`.
pub fn export_textured(sub: &TexturedSubmesh, dir: &Path, stem: &str, image_root: &Path) -> Result<(PathBuf, PathBuf), MeshIoError> {
    let src = {
        let p = Path::new(&sub.image_ref);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            image_root.join(p)
        }
    };
    let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("img");
    let img = dir.join(format!("{stem}.{ext}"));
    std::fs::copy(&src, &img).map_err(|source| MeshIoError::Io { path: src.clone(), source })?;
    let obj = dir.join(format!("{stem}.obj"));
    export_obj(&sub.mesh, &obj)?;
    Ok((obj, img))
}
