//! Immutable, versioned triangle meshes.

use std::path::PathBuf;

use crate::geometry::{triangle_area, Aabb, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub version: u64,
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Unit normal per triangle.
    pub normals: Vec<Vec3>,
    pub uvs: Option<Vec<[f64; 2]>>,
    pub texture: Option<PathBuf>,
}

impl SurfaceMesh {
    pub fn empty(version: u64) -> Self {
        SurfaceMesh {
            version,
            vertices: Vec::new(),
            triangles: Vec::new(),
            normals: Vec::new(),
            uvs: None,
            texture: None,
        }
    }

    /// Builds a mesh whose normals follow the right-hand winding of each
    /// triangle. Zero-area triangles get a zero normal.
    pub fn from_triangles(version: u64, vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let normals = triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| vertices[i as usize]);
                (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
            })
            .collect();
        SurfaceMesh { version, vertices, triangles, normals, uvs: None, texture: None }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn triangle(&self, i: usize) -> [&Vec3; 3] {
        let t = &self.triangles[i];
        [
            &self.vertices[t[0] as usize],
            &self.vertices[t[1] as usize],
            &self.vertices[t[2] as usize],
        ]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                triangle_area(a, b, c)
            })
            .sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Closed axis-aligned box with outward normals.
    pub fn cuboid(center: Vec3, half: Vec3) -> Self {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            vertices.push(center + half.component_mul(&s));
        }
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let mut triangles = Vec::with_capacity(12);
        for q in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        SurfaceMesh::from_triangles(0, vertices, triangles)
    }

    /// Regular grid over `[0, size] x [0, size]` at height `z`, normals +z.
    /// An `n x m` grid has `2 n m` triangles.
    pub fn grid(n: usize, m: usize, size: f64, z: f64) -> Self {
        let mut vertices = Vec::with_capacity((n + 1) * (m + 1));
        for j in 0..=m {
            for i in 0..=n {
                vertices.push(Vec3::new(size * i as f64 / n as f64, size * j as f64 / m as f64, z));
            }
        }
        let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut triangles = Vec::with_capacity(2 * n * m);
        for j in 0..m {
            for i in 0..n {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        SurfaceMesh::from_triangles(0, vertices, triangles)
    }

    /// Concatenation of several meshes into one.
    pub fn merged(version: u64, parts: &[SurfaceMesh]) -> Self {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut normals = Vec::new();
        for p in parts {
            let off = vertices.len() as u32;
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| t.map(|i| i + off)));
            normals.extend_from_slice(&p.normals);
        }
        SurfaceMesh { version, vertices, triangles, normals, uvs: None, texture: None }
    }
}
