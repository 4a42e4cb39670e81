//! AABB tree over the triangles of one mesh version.

use crate::geometry::{closest_point_on_triangle, Aabb, Vec3};
use crate::mesh::SurfaceMesh;

pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub bounds: Aabb,
    /// Leaf: range into `order`. Inner: children in `left`, `right`.
    pub start: u32,
    pub count: u32,
    pub left: u32,
    pub right: u32,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub triangle: u32,
    pub witness: Vec3,
    pub distance: f64,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Proximity {
    NoMesh,
    Nearest { nearest: Nearest, gap: f64 },
}

/// Zero-area triangles carry no normal and are left out of the tree.
#[derive(Debug, Clone)]
pub struct Bvh {
    version: u64,
    nodes: Vec<Node>,
    order: Vec<u32>,
    corners: Vec<[Vec3; 3]>,
    normals: Vec<Vec3>,
}

pub(crate) fn usable(mesh: &SurfaceMesh, i: usize) -> bool {
    let n = mesh.normals[i];
    n.x != 0.0 || n.y != 0.0 || n.z != 0.0
}

impl Bvh {
    pub fn build(mesh: &SurfaceMesh) -> Bvh {
        let corners: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|i| mesh.triangle(i).map(|p| *p)).collect();
        let mut order: Vec<u32> = (0..mesh.triangles.len() as u32).filter(|&i| usable(mesh, i as usize)).collect();
        let centroids: Vec<Vec3> = corners.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            let n = order.len();
            build_node(&mut nodes, &mut order, 0, n, &corners, &centroids);
        }
        Bvh { version: mesh.version, nodes, order, corners, normals: mesh.normals.clone() }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// Closest triangle to `p`; ties go to the lowest triangle id.
    pub fn nearest(&self, p: &Vec3) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, u32, Vec3)> = None;
        let mut stack: Vec<(f64, u32)> = Vec::with_capacity(64);
        stack.push((self.nodes[0].bounds.distance_sq(p), 0));
        while let Some((d, ni)) = stack.pop() {
            if let Some((bd, _, _)) = best {
                // Slack keeps equal-distance candidates reachable under rounding.
                if d > bd * (1.0 + 1e-9) {
                    continue;
                }
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = &self.corners[t as usize];
                    let w = closest_point_on_triangle(p, a, b, c);
                    let dt = (w - p).norm_squared();
                    let better = match best {
                        None => true,
                        Some((bd, bt, _)) => dt < bd || (dt == bd && t < bt),
                    };
                    if better {
                        best = Some((dt, t, w));
                    }
                }
            } else {
                let dl = self.nodes[node.left as usize].bounds.distance_sq(p);
                let dr = self.nodes[node.right as usize].bounds.distance_sq(p);
                // Push the farther child first so the nearer one is popped next.
                if dl <= dr {
                    stack.push((dr, node.right));
                    stack.push((dl, node.left));
                } else {
                    stack.push((dl, node.left));
                    stack.push((dr, node.right));
                }
            }
        }
        best.map(|(d, t, w)| Nearest { triangle: t, witness: w, distance: d.sqrt(), normal: self.normals[t as usize] })
    }

    /// Nearest triangle to a sphere: gap = distance − radius.
    pub fn query_proximity(&self, center: &Vec3, radius: f64) -> Proximity {
        match self.nearest(center) {
            None => Proximity::NoMesh,
            Some(n) => Proximity::Nearest { gap: n.distance - radius, nearest: n },
        }
    }

    /// Structural check: each usable triangle in exactly one leaf, leaves
    /// hold at most `LEAF_SIZE`, parents contain children and triangles.
    pub fn validate(&self, mesh: &SurfaceMesh) -> Result<(), String> {
        let mut seen = vec![0u32; mesh.triangles.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                if n.count as usize > LEAF_SIZE {
                    return Err(format!("leaf {i} holds {}", n.count));
                }
                for &t in &self.order[n.start as usize..(n.start + n.count) as usize] {
                    seen[t as usize] += 1;
                    let tb = Aabb::from_points(self.corners[t as usize].iter());
                    if !n.bounds.contains_box(&tb) {
                        return Err(format!("leaf {i} does not contain triangle {t}"));
                    }
                }
            } else {
                for c in [n.left, n.right] {
                    if !n.bounds.contains_box(&self.nodes[c as usize].bounds) {
                        return Err(format!("node {i} does not contain child {c}"));
                    }
                }
            }
        }
        for (t, &k) in seen.iter().enumerate() {
            let want = u32::from(usable(mesh, t));
            if k != want {
                return Err(format!("triangle {t} appears in {k} leaves"));
            }
        }
        Ok(())
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    start: usize,
    end: usize,
    corners: &[[Vec3; 3]],
    centroids: &[Vec3],
) -> u32 {
    let idx = nodes.len() as u32;
    let mut bounds = Aabb::empty();
    for &t in &order[start..end] {
        for p in &corners[t as usize] {
            bounds.grow(p);
        }
    }
    nodes.push(Node { bounds, start: start as u32, count: (end - start) as u32, left: 0, right: 0 });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let cb = Aabb::from_points(order[start..end].iter().map(|&t| &centroids[t as usize]));
    let axis = cb.longest_axis();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b))
    });
    let left = build_node(nodes, order, start, mid, corners, centroids);
    let right = build_node(nodes, order, mid, end, corners, centroids);
    let n = &mut nodes[idx as usize];
    n.count = 0;
    n.left = left;
    n.right = right;
    idx
}
