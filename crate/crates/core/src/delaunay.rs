//! Incremental 3D Delaunay tetrahedralization inside a bounding box.
//!
//! The structure starts as a decomposition of an axis-aligned box and grows
//! by Bowyer–Watson insertion. Removal retriangulates the star of a vertex by
//! Delaunay gift-wrapping over its link, so an insertion followed by the
//! removal of the same vertex restores the original finite tetrahedra.
//!
//! All topological decisions go through the exact predicates in
//! [`crate::predicates`]; cospherical ties are broken by symbolic perturbation
//! keyed on [`VertexId`], which makes the triangulation of a point set unique
//! for a fixed id assignment.
//!
//! Tetrahedron `t` stores vertices `v[0..4]` with positive orientation and
//! neighbours `n[0..4]`, where `n[i]` is across the facet opposite `v[i]`.
//! Facets on the box hull have no neighbour.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::geometry::{signed_volume, Aabb, Vec3};
use crate::predicates::{insphere_perturbed, orient_replaced, Sign};

/// Stable vertex handle. Ids are assigned in insertion order and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub u32);

/// Stable tetrahedron handle; never reused within an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TetId(pub u32);

pub(crate) const NONE: u32 = u32::MAX;

/// Number of synthetic bounding-box vertices (ids `0..8`).
pub const BOUNDING_VERTICES: u32 = 8;

/// Points closer than this to an existing vertex are rejected as duplicates.
pub const MERGE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelaunayError {
    #[error("degenerate bounding box")]
    DegenerateBox,
    #[error("point ({0}, {1}, {2}) is not strictly inside the bounding box")]
    OutsideBox(f64, f64, f64),
    #[error("non-finite point coordinates")]
    NonFinite,
    #[error("point duplicates existing vertex {0:?}")]
    DuplicatePoint(VertexId),
    #[error("vertex {0:?} belongs to the bounding box")]
    BoundingVertex(VertexId),
    #[error("unknown or deleted vertex {0:?}")]
    UnknownVertex(VertexId),
    #[error("internal triangulation error: {0}")]
    Internal(&'static str),
}

#[derive(Debug, Clone)]
pub(crate) struct Vertex {
    pub pos: Vec3,
    pub source: Option<u64>,
    pub alive: bool,
    /// Some live tetrahedron incident to this vertex.
    pub tet: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct Tet {
    pub v: [u32; 4],
    pub n: [u32; 4],
    pub alive: bool,
}

/// Tetrahedra destroyed and created by one mutation.
#[derive(Debug, Clone, Default)]
pub struct Change {
    pub destroyed: Vec<TetId>,
    pub created: Vec<TetId>,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub(crate) vertices: Vec<Vertex>,
    pub(crate) tets: Vec<Tet>,
    /// Deleted tetrahedra. Ids are not handed out again within an epoch.
    free: Vec<u32>,
    epoch: u64,
    bounds: Aabb,
    live_tets: usize,
    live_vertices: usize,
    hint: u32,
}

/// Vertex slots of the facet opposite slot `i`, in an order whose normal
/// (right-hand rule) points away from `v[i]`.
pub(crate) const FACET_OUT: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

impl Triangulation {
    /// Decomposes the box `[min, max]` into positively oriented tetrahedra.
    pub fn init_bounding(min: Vec3, max: Vec3) -> Result<Self, DelaunayError> {
        if !(min.iter().chain(max.iter()).all(|c| c.is_finite())) {
            return Err(DelaunayError::NonFinite);
        }
        if !(0..3).all(|i| min[i] < max[i]) {
            return Err(DelaunayError::DegenerateBox);
        }
        let corner = |i: u32| {
            Vec3::new(
                if i & 1 != 0 { max.x } else { min.x },
                if i & 2 != 0 { max.y } else { min.y },
                if i & 4 != 0 { max.z } else { min.z },
            )
        };
        let vertices: Vec<Vertex> = (0..BOUNDING_VERTICES)
            .map(|i| Vertex { pos: corner(i), source: None, alive: true, tet: 0 })
            .collect();
        let mut t = Triangulation {
            vertices,
            tets: Vec::new(),
            free: Vec::new(),
            epoch: 0,
            bounds: Aabb { min, max },
            live_tets: 0,
            live_vertices: BOUNDING_VERTICES as usize,
            hint: 0,
        };
        // All eight corners are cospherical, so the box decomposition is
        // whichever one the symbolic perturbation selects: every 4-subset whose
        // perturbed circumsphere is empty of the remaining corners. This keeps
        // the hull facets consistent with later retriangulations.
        for a in 0..8u32 {
            for b in a + 1..8 {
                for c in b + 1..8 {
                    for d in c + 1..8 {
                        let mut v = [a, b, c, d];
                        match t.orient_of(&v) {
                            Sign::Zero => continue,
                            Sign::Negative => v.swap(0, 1),
                            Sign::Positive => {}
                        }
                        let empty = (0..8u32)
                            .filter(|x| !v.contains(x))
                            .all(|x| !t.conflicts_raw(&v, &t.vertices[x as usize].pos, x as u64));
                        if empty {
                            t.tets.push(Tet { v, n: [NONE; 4], alive: true });
                        }
                    }
                }
            }
        }
        t.live_tets = t.tets.len();
        let ids: Vec<u32> = (0..t.tets.len() as u32).collect();
        t.link_among(&ids);
        for (ti, tet) in t.tets.iter().enumerate() {
            for &v in &tet.v {
                t.vertices[v as usize].tet = ti as u32;
            }
        }
        Ok(t)
    }

    /// Box whose edge is ten times the scene diameter, centred on the scene.
    pub fn for_scene(scene: &Aabb) -> Result<Self, DelaunayError> {
        let d = scene.diagonal().max(1e-3);
        let c = scene.center();
        let h = Vec3::repeat(5.0 * d);
        Self::init_bounding(c - h, c + h)
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn num_tets(&self) -> usize {
        self.live_tets
    }

    /// Number of live vertices, including the eight box corners.
    pub fn num_vertices(&self) -> usize {
        self.live_vertices
    }

    /// One past the largest tetrahedron id handed out so far.
    pub fn tet_id_bound(&self) -> u32 {
        self.tets.len() as u32
    }

    pub fn vertex_id_bound(&self) -> u32 {
        self.vertices.len() as u32
    }

    pub fn tets(&self) -> impl Iterator<Item = TetId> + '_ {
        self.tets
            .iter()
            .enumerate()
            .filter(|(_, t)| t.alive)
            .map(|(i, _)| TetId(i as u32))
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.alive)
            .map(|(i, _)| VertexId(i as u32))
    }

    pub fn is_live_tet(&self, t: TetId) -> bool {
        self.tets.get(t.0 as usize).is_some_and(|t| t.alive)
    }

    pub fn is_live_vertex(&self, v: VertexId) -> bool {
        self.vertices.get(v.0 as usize).is_some_and(|v| v.alive)
    }

    pub fn tet_vertices(&self, t: TetId) -> [VertexId; 4] {
        self.tets[t.0 as usize].v.map(VertexId)
    }

    /// Neighbour across the facet opposite each vertex slot.
    pub fn tet_neighbors(&self, t: TetId) -> [Option<TetId>; 4] {
        self.tets[t.0 as usize].n.map(|n| (n != NONE).then_some(TetId(n)))
    }

    pub fn position(&self, v: VertexId) -> &Vec3 {
        &self.vertices[v.0 as usize].pos
    }

    /// Originating map point of a vertex; `None` for box corners.
    pub fn source(&self, v: VertexId) -> Option<u64> {
        self.vertices[v.0 as usize].source
    }

    pub fn is_bounding(v: VertexId) -> bool {
        v.0 < BOUNDING_VERTICES
    }

    /// A tetrahedron with no box-corner vertex.
    pub fn is_finite_tet(&self, t: TetId) -> bool {
        self.tets[t.0 as usize].v.iter().all(|&v| v >= BOUNDING_VERTICES)
    }

    pub fn tet_points(&self, t: TetId) -> [&Vec3; 4] {
        self.points_of(&self.tets[t.0 as usize].v)
    }

    pub fn tet_volume(&self, t: TetId) -> f64 {
        let p = self.tet_points(t);
        signed_volume(p[0], p[1], p[2], p[3])
    }

    pub fn tet_aabb(&self, t: TetId) -> Aabb {
        Aabb::from_points(self.tet_points(t))
    }

    #[inline]
    pub(crate) fn points_of(&self, v: &[u32; 4]) -> [&Vec3; 4] {
        [
            &self.vertices[v[0] as usize].pos,
            &self.vertices[v[1] as usize].pos,
            &self.vertices[v[2] as usize].pos,
            &self.vertices[v[3] as usize].pos,
        ]
    }

    fn orient_of(&self, v: &[u32; 4]) -> Sign {
        let p = self.points_of(v);
        crate::predicates::orient3d(p[0], p[1], p[2], p[3])
    }

    /// Sign of `p` relative to the facet opposite slot `i` of `t`; positive
    /// on the inner side.
    #[inline]
    pub(crate) fn side(&self, t: u32, i: usize, p: &Vec3) -> Sign {
        orient_replaced(self.points_of(&self.tets[t as usize].v), i, p)
    }

    /// Closed containment of `p` in tetrahedron `t`.
    pub fn contains(&self, t: TetId, p: &Vec3) -> bool {
        (0..4).all(|i| !self.side(t.0, i, p).is_negative())
    }

    fn inside_box_closed(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.bounds.min[i] && p[i] <= self.bounds.max[i])
    }

    fn inside_box_open(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] > self.bounds.min[i] && p[i] < self.bounds.max[i])
    }

    fn any_live_tet(&self) -> u32 {
        if self.tets.get(self.hint as usize).is_some_and(|t| t.alive) {
            return self.hint;
        }
        self.tets.iter().position(|t| t.alive).expect("triangulation has no tetrahedra") as u32
    }

    /// Visibility walk from `start` to a tetrahedron containing `p`.
    /// `p` must be inside the closed box.
    pub(crate) fn walk(&self, p: &Vec3, start: u32) -> u32 {
        let mut t = if self.tets.get(start as usize).is_some_and(|t| t.alive) {
            start
        } else {
            self.any_live_tet()
        };
        let limit = 4 * self.live_tets + 64;
        let mut rot: u32 = 0x9e37_79b9;
        'walk: for _ in 0..limit {
            rot ^= rot << 13;
            rot ^= rot >> 17;
            rot ^= rot << 5;
            let off = (rot & 3) as usize;
            for k in 0..4 {
                let i = (k + off) & 3;
                if self.side(t, i, p).is_negative() {
                    let n = self.tets[t as usize].n[i];
                    if n == NONE {
                        break;
                    }
                    t = n;
                    continue 'walk;
                }
            }
            return t;
        }
        // Unreachable for a valid Delaunay structure; scan as a last resort.
        log::warn!("point location walk did not terminate, scanning");
        self.tets()
            .find(|&c| self.contains(c, p))
            .map(|c| c.0)
            .unwrap_or(t)
    }

    /// All live tetrahedra whose closure contains `p`, found by spreading
    /// across facets on which `p` lies. `seed` must contain `p`.
    pub(crate) fn containing_set(&self, p: &Vec3, seed: u32) -> Vec<u32> {
        let mut out = vec![seed];
        let mut i = 0;
        while i < out.len() {
            let t = out[i];
            i += 1;
            for f in 0..4 {
                if self.side(t, f, p).is_zero() {
                    let n = self.tets[t as usize].n[f];
                    if n != NONE && !out.contains(&n) {
                        out.push(n);
                    }
                }
            }
        }
        out
    }

    /// Locates a tetrahedron containing `p` (closed). When `p` lies on a
    /// shared facet, edge or vertex, the lowest id among the containing
    /// tetrahedra is returned.
    pub fn locate(&self, p: &Vec3) -> Result<TetId, DelaunayError> {
        self.locate_from(p, self.hint)
    }

    pub fn locate_from(&self, p: &Vec3, hint: u32) -> Result<TetId, DelaunayError> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(DelaunayError::NonFinite);
        }
        if !self.inside_box_closed(p) {
            return Err(DelaunayError::OutsideBox(p.x, p.y, p.z));
        }
        let t = self.walk(p, hint);
        let set = self.containing_set(p, t);
        Ok(TetId(*set.iter().min().expect("non-empty")))
    }

    fn conflicts(&self, t: u32, p: &Vec3, key: u64) -> bool {
        self.conflicts_raw(&self.tets[t as usize].v, p, key)
    }

    fn conflicts_raw(&self, v: &[u32; 4], p: &Vec3, key: u64) -> bool {
        let pts = self.points_of(v);
        insphere_perturbed(
            [
                (pts[0], v[0] as u64),
                (pts[1], v[1] as u64),
                (pts[2], v[2] as u64),
                (pts[3], v[3] as u64),
            ],
            (p, key),
        )
    }

    /// Inserts `p` (Bowyer–Watson). `source` is the originating map point.
    pub fn insert_point(&mut self, p: Vec3, source: Option<u64>) -> Result<VertexId, DelaunayError> {
        self.insert_with_change(p, source).map(|(v, _)| v)
    }

    pub fn insert_with_change(
        &mut self,
        p: Vec3,
        source: Option<u64>,
    ) -> Result<(VertexId, Change), DelaunayError> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(DelaunayError::NonFinite);
        }
        if !self.inside_box_open(&p) {
            return Err(DelaunayError::OutsideBox(p.x, p.y, p.z));
        }
        let start = self.walk(&p, self.hint);
        let key = self.vertices.len() as u64;
        let containing = self.containing_set(&p, start);

        let mut in_cavity: HashSet<u32> = HashSet::new();
        let mut cavity: Vec<u32> = Vec::new();
        for &t in &containing {
            if self.conflicts(t, &p, key) {
                in_cavity.insert(t);
                cavity.push(t);
            }
        }
        if cavity.is_empty() {
            // p coincides with an existing vertex.
            return Err(self.nearest_duplicate(&p, &containing).unwrap_or(DelaunayError::Internal(
                "inserted point conflicts with no tetrahedron",
            )));
        }
        let mut i = 0;
        while i < cavity.len() {
            let t = cavity[i];
            i += 1;
            for f in 0..4 {
                let n = self.tets[t as usize].n[f];
                if n != NONE && !in_cavity.contains(&n) && self.conflicts(n, &p, key) {
                    in_cavity.insert(n);
                    cavity.push(n);
                }
            }
        }

        // Boundary facets must be strictly visible from p; a facet coplanar
        // with p would produce a flat tetrahedron, so absorb its outer tet.
        let boundary = loop {
            let mut boundary: Vec<(u32, usize, u32)> = Vec::new();
            let mut grow = None;
            for &t in &cavity {
                for f in 0..4 {
                    let n = self.tets[t as usize].n[f];
                    if n != NONE && in_cavity.contains(&n) {
                        continue;
                    }
                    if !self.side(t, f, &p).is_positive() {
                        if n == NONE {
                            return Err(DelaunayError::Internal("cavity facet on hull not visible"));
                        }
                        grow = Some(n);
                        break;
                    }
                    boundary.push((t, f, n));
                }
                if grow.is_some() {
                    break;
                }
            }
            match grow {
                Some(n) => {
                    in_cavity.insert(n);
                    cavity.push(n);
                }
                None => break boundary,
            }
        };

        // Every cavity vertex must survive on the boundary.
        let on_boundary: HashSet<u32> = boundary
            .iter()
            .flat_map(|&(t, f, _)| facet_key(&self.tets[t as usize].v, f))
            .collect();
        if cavity
            .iter()
            .flat_map(|&t| self.tets[t as usize].v)
            .any(|v| !on_boundary.contains(&v))
        {
            return Err(DelaunayError::Internal("cavity swallows a vertex"));
        }

        // Nearest neighbour of p is a cavity boundary vertex.
        let mut nearest: Option<(f64, u32)> = None;
        for &(t, f, _) in &boundary {
            for (slot, &v) in self.tets[t as usize].v.iter().enumerate() {
                if slot == f {
                    continue;
                }
                let d = (self.vertices[v as usize].pos - p).norm();
                if nearest.map_or(true, |(bd, bv)| d < bd || (d == bd && v < bv)) {
                    nearest = Some((d, v));
                }
            }
        }
        if let Some((d, v)) = nearest {
            if d < MERGE_TOLERANCE {
                return Err(DelaunayError::DuplicatePoint(VertexId(v)));
            }
        }

        let nv = self.vertices.len() as u32;
        self.vertices.push(Vertex { pos: p, source, alive: true, tet: NONE });
        self.live_vertices += 1;

        let base = self.tets.len() as u32;
        let mut edge_faces: HashMap<(u32, u32), (u32, usize)> = HashMap::with_capacity(boundary.len() * 3);
        let mut created = Vec::with_capacity(boundary.len());
        for (k, &(t, f, n)) in boundary.iter().enumerate() {
            let id = base + k as u32;
            let mut v = self.tets[t as usize].v;
            v[f] = nv;
            let mut nb = [NONE; 4];
            nb[f] = n;
            if n != NONE {
                let back = self.facet_index_toward(n, &v, f);
                self.tets[n as usize].n[back] = id;
            }
            for j in 0..4 {
                if j == f {
                    continue;
                }
                let (a, b) = other_two(j, f);
                let e = ordered(v[a], v[b]);
                if let Some((ot, oj)) = edge_faces.remove(&e) {
                    nb[j] = ot;
                    let oidx = (ot - base) as usize;
                    debug_assert!(oidx < k);
                    self.tets[ot as usize].n[oj] = id;
                } else {
                    edge_faces.insert(e, (id, j));
                }
            }
            self.tets.push(Tet { v, n: nb, alive: true });
            created.push(TetId(id));
        }
        debug_assert!(edge_faces.is_empty());

        for &t in &cavity {
            self.tets[t as usize].alive = false;
            self.free.push(t);
        }
        for c in &created {
            for &v in &self.tets[c.0 as usize].v {
                self.vertices[v as usize].tet = c.0;
            }
        }
        self.live_tets = self.live_tets + created.len() - cavity.len();
        self.hint = base;
        self.epoch += 1;
        Ok((
            VertexId(nv),
            Change { destroyed: cavity.into_iter().map(TetId).collect(), created },
        ))
    }

    fn nearest_duplicate(&self, p: &Vec3, tets: &[u32]) -> Option<DelaunayError> {
        tets.iter()
            .flat_map(|&t| self.tets[t as usize].v)
            .map(|v| ((self.vertices[v as usize].pos - p).norm(), v))
            .filter(|(d, _)| *d < MERGE_TOLERANCE)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, v)| DelaunayError::DuplicatePoint(VertexId(v)))
    }

    /// Index in `n` of the facet shared with a tet whose vertices are `v`
    /// and whose facet toward `n` is opposite slot `f`.
    fn facet_index_toward(&self, n: u32, v: &[u32; 4], f: usize) -> usize {
        let nv = &self.tets[n as usize].v;
        (0..4)
            .find(|&k| !v.iter().enumerate().any(|(s, &x)| s != f && x == nv[k]))
            .expect("neighbour shares a facet")
    }

    /// Sets neighbour pointers among the given tetrahedra by facet matching.
    fn link_among(&mut self, ids: &[u32]) {
        let mut faces: HashMap<[u32; 3], (u32, usize)> = HashMap::new();
        for &t in ids {
            for f in 0..4 {
                let k = facet_key(&self.tets[t as usize].v, f);
                if let Some((o, of)) = faces.remove(&k) {
                    self.tets[t as usize].n[f] = o;
                    self.tets[o as usize].n[of] = t;
                } else {
                    faces.insert(k, (t, f));
                }
            }
        }
    }

    /// Tetrahedra incident to `v`.
    pub fn star(&self, v: VertexId) -> Vec<TetId> {
        self.star_raw(v.0).into_iter().map(TetId).collect()
    }

    fn star_raw(&self, v: u32) -> Vec<u32> {
        let seed = self.vertices[v as usize].tet;
        debug_assert!(self.tets[seed as usize].alive && self.tets[seed as usize].v.contains(&v));
        let mut out = vec![seed];
        let mut i = 0;
        while i < out.len() {
            let t = out[i];
            i += 1;
            let tet = &self.tets[t as usize];
            for f in 0..4 {
                if tet.v[f] == v {
                    continue;
                }
                let n = tet.n[f];
                if n != NONE && !out.contains(&n) {
                    out.push(n);
                }
            }
        }
        out
    }

    /// Removes a finite vertex and retriangulates its star.
    pub fn remove_point(&mut self, v: VertexId) -> Result<(), DelaunayError> {
        self.remove_with_change(v).map(|_| ())
    }

    pub fn remove_with_change(&mut self, v: VertexId) -> Result<Change, DelaunayError> {
        if Self::is_bounding(v) {
            return Err(DelaunayError::BoundingVertex(v));
        }
        if !self.is_live_vertex(v) {
            return Err(DelaunayError::UnknownVertex(v));
        }
        let star = self.star_raw(v.0);

        struct Open {
            tmpl: [u32; 4],
            slot: usize,
            owner: u32,
            owner_slot: usize,
        }
        let mut front: HashMap<[u32; 3], Open> = HashMap::new();
        let mut queue: VecDeque<[u32; 3]> = VecDeque::new();
        let mut link: Vec<u32> = Vec::new();
        for &s in &star {
            let tet = &self.tets[s as usize];
            let k = tet.v.iter().position(|&x| x == v.0).expect("star tet holds v");
            let n = tet.n[k];
            let owner_slot = if n == NONE { 0 } else { self.facet_index_toward(n, &tet.v, k) };
            let key = facet_key(&tet.v, k);
            for &x in &key {
                if !link.contains(&x) {
                    link.push(x);
                }
            }
            front.insert(key, Open { tmpl: tet.v, slot: k, owner: n, owner_slot });
            queue.push_back(key);
        }
        link.sort_unstable();

        let base = self.tets.len() as u32;
        let mut new_tets: Vec<Tet> = Vec::new();
        // Outer neighbour back-pointer updates: (tet, slot, new id).
        let mut back: Vec<(u32, usize, u32)> = Vec::new();
        let mut budget = 64 * star.len() + 64;
        while let Some(key) = queue.pop_front() {
            let Some(open) = front.remove(&key) else { continue };
            budget -= 1;
            if budget == 0 {
                return Err(DelaunayError::Internal("gift-wrapping did not converge"));
            }
            let pts = self.points_of(&open.tmpl);
            let mut best: Option<u32> = None;
            for &c in &link {
                if key.contains(&c) {
                    continue;
                }
                let cp = &self.vertices[c as usize].pos;
                if !orient_replaced(pts, open.slot, cp).is_positive() {
                    continue;
                }
                best = match best {
                    None => Some(c),
                    Some(b) => {
                        let mut tv = open.tmpl;
                        tv[open.slot] = b;
                        let tp = self.points_of(&tv);
                        let inside = insphere_perturbed(
                            [
                                (tp[0], tv[0] as u64),
                                (tp[1], tv[1] as u64),
                                (tp[2], tv[2] as u64),
                                (tp[3], tv[3] as u64),
                            ],
                            (cp, c as u64),
                        );
                        Some(if inside { c } else { b })
                    }
                };
            }
            let Some(apex) = best else {
                return Err(DelaunayError::Internal("no apex for hole facet"));
            };
            let id = base + new_tets.len() as u32;
            let mut w = open.tmpl;
            w[open.slot] = apex;
            let mut nb = [NONE; 4];
            nb[open.slot] = open.owner;
            if open.owner != NONE {
                if open.owner >= base {
                    new_tets[(open.owner - base) as usize].n[open.owner_slot] = id;
                } else {
                    back.push((open.owner, open.owner_slot, id));
                }
            }
            for j in 0..4 {
                if j == open.slot {
                    continue;
                }
                let fk = facet_key(&w, j);
                if let Some(g) = front.remove(&fk) {
                    nb[j] = g.owner;
                    if g.owner != NONE {
                        if g.owner >= base {
                            new_tets[(g.owner - base) as usize].n[g.owner_slot] = id;
                        } else {
                            back.push((g.owner, g.owner_slot, id));
                        }
                    }
                } else {
                    let mut tmpl = w;
                    let (a, b) = other_two_any(j);
                    tmpl.swap(a, b);
                    front.insert(fk, Open { tmpl, slot: j, owner: id, owner_slot: j });
                    queue.push_back(fk);
                }
            }
            new_tets.push(Tet { v: w, n: nb, alive: true });
        }
        if !front.is_empty() {
            return Err(DelaunayError::Internal("hole not closed"));
        }

        // Commit.
        for (t, s, id) in back {
            self.tets[t as usize].n[s] = id;
        }
        for &s in &star {
            self.tets[s as usize].alive = false;
            self.free.push(s);
        }
        let created: Vec<TetId> = (0..new_tets.len() as u32).map(|k| TetId(base + k)).collect();
        self.tets.extend(new_tets);
        for c in &created {
            for &x in &self.tets[c.0 as usize].v {
                self.vertices[x as usize].tet = c.0;
            }
        }
        let vx = &mut self.vertices[v.0 as usize];
        vx.alive = false;
        vx.tet = NONE;
        self.live_vertices -= 1;
        self.live_tets = self.live_tets + created.len() - star.len();
        self.hint = created.first().map(|c| c.0).unwrap_or(self.hint);
        self.epoch += 1;
        Ok(Change { destroyed: star.into_iter().map(TetId).collect(), created })
    }

    /// Structural check: adjacency symmetry, facet sharing and positive
    /// orientation. Returns a description of the first violation.
    pub fn check_structure(&self) -> Result<(), String> {
        let mut faces: HashMap<[u32; 3], usize> = HashMap::new();
        for t in self.tets() {
            let tet = &self.tets[t.0 as usize];
            if !self.orient_of(&tet.v).is_positive() {
                return Err(format!("{t:?} is not positively oriented"));
            }
            for f in 0..4 {
                *faces.entry(facet_key(&tet.v, f)).or_default() += 1;
                let n = tet.n[f];
                if n == NONE {
                    continue;
                }
                let nt = &self.tets[n as usize];
                if !nt.alive {
                    return Err(format!("{t:?} points at dead neighbour {n}"));
                }
                let k = facet_key(&tet.v, f);
                let Some(back) = (0..4).find(|&g| nt.n[g] == t.0) else {
                    return Err(format!("{t:?} -> {n} is not symmetric"));
                };
                if facet_key(&nt.v, back) != k {
                    return Err(format!("{t:?} and {n} disagree on the shared facet"));
                }
            }
        }
        for (k, c) in faces {
            if c > 2 {
                return Err(format!("facet {k:?} shared by {c} tetrahedra"));
            }
        }
        for v in self.vertices() {
            let h = self.vertices[v.0 as usize].tet;
            if !self.tets[h as usize].alive || !self.tets[h as usize].v.contains(&v.0) {
                return Err(format!("{v:?} has a stale incident-tet hint"));
            }
        }
        Ok(())
    }
}

/// Sorted vertex ids of the facet opposite slot `f`.
#[inline]
pub(crate) fn facet_key(v: &[u32; 4], f: usize) -> [u32; 3] {
    let mut k = [0u32; 3];
    let mut i = 0;
    for (s, &x) in v.iter().enumerate() {
        if s != f {
            k[i] = x;
            i += 1;
        }
    }
    k.sort_unstable();
    k
}

#[inline]
fn ordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// The two slots other than `j` and `f`.
#[inline]
fn other_two(j: usize, f: usize) -> (usize, usize) {
    let mut r = [0usize; 2];
    let mut i = 0;
    for s in 0..4 {
        if s != j && s != f {
            r[i] = s;
            i += 1;
        }
    }
    (r[0], r[1])
}

/// Two slots other than `j` (any pair; used to flip parity).
#[inline]
fn other_two_any(j: usize) -> (usize, usize) {
    match j {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => (0, 1),
    }
}
