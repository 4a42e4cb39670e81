//! Free-space carving over the incremental triangulation.
//!
//! Every observation contributes a visibility ray from the keyframe's camera
//! centre to the observed vertex. A tetrahedron is FREE once at least `k`
//! distinct rays meet it (bounding tetrahedra are always FREE); the surface
//! is the set of facets between OCCUPIED and FREE tetrahedra.
//!
//! Each tetrahedron keeps the ids of the rays meeting it, so its counter is
//! the list length. When a mutation destroys tetrahedra, exactly the rays in
//! their lists can meet the replacement tetrahedra (which cover the same
//! region), and only those are re-tested against the new cells.
//!
//! Ray/tet incidence is decided from orientation signs alone. For a
//! positively oriented tet with barycentric-scaled face values `A_i` at the
//! camera `p` and `B_i` at the target `q`, the closed tet meets the open
//! segment iff no face has both values non-positive (unless both are zero),
//! and every entry crossing `t_i` is no later than every exit crossing `t_j`.
//! The comparison `t_i <= t_j` reduces to
//! `sign(A_i B_j - A_j B_i) = orient(p, q, v_k, v_l) * parity(i, j, k, l)`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::delaunay::{Change, DelaunayError, TetId, Triangulation, VertexId, FACET_OUT};
use crate::geometry::{Aabb, Vec3};
use crate::mesh::SurfaceMesh;
use crate::par::{self, ExecPolicy};
use crate::predicates::{orient3d, orient_replaced, Sign};
use crate::slam::Keyframe;

#[derive(Debug, Error)]
pub enum CarveError {
    #[error("keyframe {0} was already integrated")]
    DuplicateKeyframe(u64),
    #[error("unknown map point {0}")]
    UnknownPoint(u64),
    #[error("map point {0} was already introduced")]
    DuplicatePointId(u64),
    #[error("camera centre of keyframe {0} is outside the bounding box")]
    CameraOutsideBox(u64),
    #[error(transparent)]
    Delaunay(#[from] DelaunayError),
}

/// Parity of the permutation `[i, j, k, l]` of `0..4`.
#[inline]
fn parity(p: [usize; 4]) -> Sign {
    let mut inv = 0;
    for a in 0..4 {
        for b in a + 1..4 {
            if p[a] > p[b] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

/// Exact test: does the closed tetrahedron `v` (positively oriented) meet
/// the open segment `(p, q)`?
pub fn segment_meets_tet(v: [&Vec3; 4], p: &Vec3, q: &Vec3) -> bool {
    let mut a = [Sign::Zero; 4];
    let mut b = [Sign::Zero; 4];
    let mut lower = [false; 4];
    let mut upper = [false; 4];
    for i in 0..4 {
        a[i] = orient_replaced(v, i, p);
        b[i] = orient_replaced(v, i, q);
        match (a[i], b[i]) {
            (Sign::Zero, Sign::Zero) => {}
            (x, y) if !x.is_positive() && !y.is_positive() => return false,
            (Sign::Negative, Sign::Positive) => lower[i] = true,
            (Sign::Positive, Sign::Negative) => upper[i] = true,
            _ => {}
        }
    }
    for i in (0..4).filter(|&i| lower[i]) {
        for j in (0..4).filter(|&j| upper[j]) {
            let mut kl = (0..4).filter(|&s| s != i && s != j);
            let (k, l) = (kl.next().unwrap(), kl.next().unwrap());
            let d = orient3d(p, q, v[k], v[l]).times(parity([i, j, k, l]));
            if d.is_positive() {
                return false;
            }
        }
    }
    true
}

/// Tetrahedra whose closure meets the open segment from `camera` to the
/// vertex `target`, in ascending id order. Empty for a zero-length segment.
pub fn ray_traversal(tri: &Triangulation, camera: &Vec3, target: VertexId) -> Result<Vec<TetId>, DelaunayError> {
    let start = tri.locate(camera)?;
    let cset = tri.containing_set(camera, start.0);
    Ok(traverse_from(tri, camera, &cset, target))
}

/// Breadth-first search over the tets meeting the segment plus the tets
/// containing the camera (`cset`), which together are facet-connected.
pub(crate) fn traverse_from(tri: &Triangulation, camera: &Vec3, cset: &[u32], target: VertexId) -> Vec<TetId> {
    let q = *tri.position(target);
    if q == *camera {
        return Vec::new();
    }
    let mut seen: HashSet<u32> = cset.iter().copied().collect();
    let mut queue: Vec<u32> = cset.to_vec();
    let mut out = Vec::new();
    for &t in cset {
        if segment_meets_tet(tri.points_of(&tri.tets[t as usize].v), camera, &q) {
            out.push(t);
        }
    }
    while let Some(t) = queue.pop() {
        for n in tri.tets[t as usize].n {
            if n == crate::delaunay::NONE || !seen.insert(n) {
                continue;
            }
            if segment_meets_tet(tri.points_of(&tri.tets[n as usize].v), camera, &q) {
                out.push(n);
                queue.push(n);
            }
        }
    }
    out.sort_unstable();
    out.into_iter().map(TetId).collect()
}

/// One registered visibility ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    pub keyframe: u64,
    pub point: u64,
    pub camera: Vec3,
    pub target: VertexId,
}

pub type RayId = u32;

/// Per-tetrahedron free-space evidence and the ray registry behind it.
#[derive(Debug, Clone)]
pub struct CarvedLabeling {
    threshold: usize,
    rays: Vec<Option<Ray>>,
    by_keyframe: BTreeMap<u64, Vec<RayId>>,
    by_point: BTreeMap<u64, Vec<RayId>>,
    tet_rays: Vec<Vec<RayId>>,
    transitions: u64,
}

impl CarvedLabeling {
    pub fn new(threshold: usize) -> Self {
        CarvedLabeling {
            threshold: threshold.max(1),
            rays: Vec::new(),
            by_keyframe: BTreeMap::new(),
            by_point: BTreeMap::new(),
            tet_rays: Vec::new(),
            transitions: 0,
        }
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Number of distinct rays meeting `t`.
    pub fn counter(&self, t: TetId) -> usize {
        self.tet_rays.get(t.0 as usize).map_or(0, Vec::len)
    }

    pub fn is_free(&self, tri: &Triangulation, t: TetId) -> bool {
        !tri.is_finite_tet(t) || self.counter(t) >= self.threshold
    }

    pub fn ray(&self, r: RayId) -> Option<&Ray> {
        self.rays.get(r as usize).and_then(Option::as_ref)
    }

    pub fn rays(&self) -> impl Iterator<Item = (RayId, &Ray)> {
        self.rays.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|r| (i as RayId, r)))
    }

    pub fn num_rays(&self) -> usize {
        self.by_keyframe.values().map(Vec::len).sum()
    }

    pub fn keyframe_rays(&self, kf: u64) -> &[RayId] {
        self.by_keyframe.get(&kf).map_or(&[], Vec::as_slice)
    }

    /// Count of FREE/OCCUPIED transitions caused so far (diagnostic).
    pub fn transitions(&self) -> u64 {
        self.transitions
    }

    fn grow(&mut self, tri: &Triangulation) {
        let n = tri.tet_id_bound() as usize;
        if self.tet_rays.len() < n {
            self.tet_rays.resize_with(n, Vec::new);
        }
    }

    fn push(&mut self, t: u32, r: RayId) {
        let l = &mut self.tet_rays[t as usize];
        l.push(r);
        if l.len() == self.threshold {
            self.transitions += 1;
        }
    }

    fn detach(&mut self, t: TetId, r: RayId) {
        let l = &mut self.tet_rays[t.0 as usize];
        if let Some(i) = l.iter().position(|&x| x == r) {
            l.swap_remove(i);
            if l.len() + 1 == self.threshold {
                self.transitions += 1;
            }
        }
    }

    /// Registers a ray and counts it on every tet it meets. Returns the tets.
    pub fn carve_ray(&mut self, tri: &Triangulation, keyframe: u64, point: u64, camera: Vec3, target: VertexId) -> Result<Vec<TetId>, DelaunayError> {
        let trav = ray_traversal(tri, &camera, target)?;
        self.register(tri, Ray { keyframe, point, camera, target }, &trav);
        Ok(trav)
    }

    fn register(&mut self, tri: &Triangulation, ray: Ray, trav: &[TetId]) -> RayId {
        self.grow(tri);
        let id = self.rays.len() as RayId;
        self.by_keyframe.entry(ray.keyframe).or_default().push(id);
        self.by_point.entry(ray.point).or_default().push(id);
        self.rays.push(Some(ray));
        for t in trav {
            self.push(t.0, id);
        }
        id
    }

    /// Re-derives the lists of the tets created by `change` from the rays
    /// that met the destroyed ones.
    pub fn apply_change(&mut self, tri: &Triangulation, change: &Change) {
        self.grow(tri);
        let mut affected: Vec<RayId> = Vec::new();
        for d in &change.destroyed {
            affected.append(&mut self.tet_rays[d.0 as usize]);
        }
        if affected.is_empty() || change.created.is_empty() {
            return;
        }
        affected.sort_unstable();
        affected.dedup();
        let margin = tri.bounds().diagonal() * 1e-12;
        let boxes: Vec<Aabb> = change.created.iter().map(|&c| tri.tet_aabb(c)).collect();
        for r in affected {
            let ray = self.rays[r as usize].as_ref().expect("listed rays are live");
            let (p, q) = (ray.camera, *tri.position(ray.target));
            let seg = Aabb::from_points([&p, &q]);
            for (c, bx) in change.created.iter().zip(&boxes) {
                if !overlaps(bx, &seg, margin) || !bx.overlaps_segment(&p, &q, margin) {
                    continue;
                }
                if segment_meets_tet(tri.tet_points(*c), &p, &q) {
                    self.push(c.0, r);
                }
            }
        }
    }

    /// Removes the counts of the rays targeting `point` (their registry
    /// entries stay). Must be called while the traversals are still valid.
    fn detach_point_rays(&mut self, tri: &Triangulation, point: u64) -> Result<Vec<RayId>, DelaunayError> {
        let ids = self.by_point.get(&point).cloned().unwrap_or_default();
        for &r in &ids {
            let ray = self.rays[r as usize].as_ref().expect("live ray");
            for t in ray_traversal(tri, &ray.camera, ray.target)? {
                self.detach(t, r);
            }
        }
        Ok(ids)
    }

    fn forget(&mut self, r: RayId) {
        if let Some(ray) = self.rays[r as usize].take() {
            if let Some(l) = self.by_keyframe.get_mut(&ray.keyframe) {
                l.retain(|&x| x != r);
            }
            if let Some(l) = self.by_point.get_mut(&ray.point) {
                l.retain(|&x| x != r);
                if l.is_empty() {
                    self.by_point.remove(&ray.point);
                }
            }
        }
    }
}

#[inline]
fn overlaps(a: &Aabb, b: &Aabb, margin: f64) -> bool {
    (0..3).all(|i| a.min[i] <= b.max[i] + margin && b.min[i] <= a.max[i] + margin)
}

/// Summary of one reconstruction step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReconstructionDelta {
    pub keyframe: Option<u64>,
    pub inserted: usize,
    pub removed: usize,
    pub rays: usize,
    pub tets_created: usize,
    pub tets_destroyed: usize,
    pub label_flips: u64,
}

impl ReconstructionDelta {
    pub fn is_empty(&self) -> bool {
        self.inserted == 0 && self.removed == 0 && self.rays == 0 && self.tets_created == 0 && self.tets_destroyed == 0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReconParams {
    /// Rays needed to free a tetrahedron.
    pub threshold: usize,
    pub policy: ExecPolicy,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams { threshold: 1, policy: ExecPolicy::default() }
    }
}

/// Triangulation, labeling and map-point bookkeeping for one session.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    tri: Triangulation,
    labels: CarvedLabeling,
    points: BTreeMap<u64, VertexId>,
    keyframes: BTreeMap<u64, Vec3>,
    scene: Aabb,
    version: u64,
    params: ReconParams,
}

impl Reconstruction {
    /// `scene` should cover all points and camera centres; the bounding box
    /// is ten times its diameter.
    pub fn new(scene: Aabb, params: ReconParams) -> Result<Self, CarveError> {
        Ok(Reconstruction {
            tri: Triangulation::for_scene(&scene)?,
            labels: CarvedLabeling::new(params.threshold),
            points: BTreeMap::new(),
            keyframes: BTreeMap::new(),
            scene,
            version: 0,
            params,
        })
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn labeling(&self) -> &CarvedLabeling {
        &self.labels
    }

    pub fn scene_bounds(&self) -> &Aabb {
        &self.scene
    }

    pub fn diameter(&self) -> f64 {
        self.scene.diagonal().max(1e-3)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn vertex_of(&self, point: u64) -> Option<VertexId> {
        self.points.get(&point).copied()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn is_free(&self, t: TetId) -> bool {
        self.labels.is_free(&self.tri, t)
    }

    fn replay(&mut self, change: &Change, delta: &mut ReconstructionDelta) {
        delta.tets_created += change.created.len();
        delta.tets_destroyed += change.destroyed.len();
        self.labels.apply_change(&self.tri, change);
    }

    /// Inserts the keyframe's new points, then carves one ray per
    /// observation.
    pub fn integrate_keyframe(&mut self, kf: &Keyframe, new_points: &[(u64, Vec3)]) -> Result<ReconstructionDelta, CarveError> {
        if self.keyframes.contains_key(&kf.id) {
            return Err(CarveError::DuplicateKeyframe(kf.id));
        }
        let camera = kf.pose.translation;
        let b = self.tri.bounds();
        if !(0..3).all(|i| camera[i] > b.min[i] && camera[i] < b.max[i]) {
            return Err(CarveError::CameraOutsideBox(kf.id));
        }
        let before = self.labels.transitions();
        let mut delta = ReconstructionDelta { keyframe: Some(kf.id), ..Default::default() };
        self.keyframes.insert(kf.id, camera);

        for &(id, p) in new_points {
            if self.points.contains_key(&id) {
                return Err(CarveError::DuplicatePointId(id));
            }
            match self.tri.insert_with_change(p, Some(id)) {
                Ok((v, change)) => {
                    self.points.insert(id, v);
                    delta.inserted += 1;
                    self.replay(&change, &mut delta);
                }
                Err(e @ (DelaunayError::DuplicatePoint(_) | DelaunayError::OutsideBox(..))) => {
                    log::warn!("map point {id} skipped: {e}");
                }
                Err(e) => return Err(e.into()),
            }
        }

        let targets: Vec<(u64, VertexId)> = kf
            .observations
            .iter()
            .filter_map(|id| self.points.get(id).map(|&v| (*id, v)))
            .collect();
        if !targets.is_empty() {
            let start = self.tri.locate(&camera)?;
            let cset = self.tri.containing_set(&camera, start.0);
            let tri = &self.tri;
            let travs = par::map(self.params.policy, &targets, |&(_, v)| traverse_from(tri, &camera, &cset, v));
            for ((point, target), trav) in targets.into_iter().zip(travs) {
                self.labels.register(&self.tri, Ray { keyframe: kf.id, point, camera, target }, &trav);
                delta.rays += 1;
            }
        }
        delta.label_flips = self.labels.transitions() - before;
        Ok(delta)
    }

    /// Moves a map point: remove, reinsert, and replay the affected rays.
    pub fn handle_point_update(&mut self, id: u64, position: Vec3) -> Result<ReconstructionDelta, CarveError> {
        let v = *self.points.get(&id).ok_or(CarveError::UnknownPoint(id))?;
        let mut delta = ReconstructionDelta::default();
        if *self.tri.position(v) == position {
            return Ok(delta);
        }
        let before = self.labels.transitions();
        let rays = self.labels.detach_point_rays(&self.tri, id)?;
        let change = self.tri.remove_with_change(v)?;
        delta.removed += 1;
        self.replay(&change, &mut delta);
        match self.tri.insert_with_change(position, Some(id)) {
            Ok((nv, change)) => {
                delta.inserted += 1;
                self.replay(&change, &mut delta);
                self.points.insert(id, nv);
                for r in rays {
                    let ray = self.labels.rays[r as usize].as_mut().expect("live ray");
                    ray.target = nv;
                    let camera = ray.camera;
                    let trav = ray_traversal(&self.tri, &camera, nv)?;
                    self.labels.grow(&self.tri);
                    for t in trav {
                        self.labels.push(t.0, r);
                    }
                    delta.rays += 1;
                }
            }
            Err(e @ (DelaunayError::DuplicatePoint(_) | DelaunayError::OutsideBox(..))) => {
                log::warn!("map point {id} dropped after update: {e}");
                self.points.remove(&id);
                for r in rays {
                    self.labels.forget(r);
                }
            }
            Err(e) => return Err(e.into()),
        }
        delta.label_flips = self.labels.transitions() - before;
        Ok(delta)
    }

    pub fn handle_point_removal(&mut self, id: u64) -> Result<ReconstructionDelta, CarveError> {
        let v = *self.points.get(&id).ok_or(CarveError::UnknownPoint(id))?;
        let before = self.labels.transitions();
        let mut delta = ReconstructionDelta::default();
        let rays = self.labels.detach_point_rays(&self.tri, id)?;
        for r in rays {
            self.labels.forget(r);
        }
        let change = self.tri.remove_with_change(v)?;
        self.points.remove(&id);
        delta.removed += 1;
        self.replay(&change, &mut delta);
        delta.label_flips = self.labels.transitions() - before;
        Ok(delta)
    }

    /// Canonical key of a vertex: box corners keep their index, map-point
    /// vertices are `8 + point id`.
    pub fn canonical_vertex(&self, v: VertexId) -> u64 {
        match self.tri.source(v) {
            Some(s) if !Triangulation::is_bounding(v) => 8 + s,
            _ => v.0 as u64,
        }
    }

    pub fn canonical_tet(&self, t: TetId) -> [u64; 4] {
        let mut k = self.tri.tet_vertices(t).map(|v| self.canonical_vertex(v));
        k.sort_unstable();
        k
    }

    /// FREE tetrahedra as canonical vertex tuples.
    pub fn free_set(&self) -> BTreeSet<[u64; 4]> {
        self.tri.tets().filter(|&t| self.is_free(t)).map(|t| self.canonical_tet(t)).collect()
    }

    /// From-scratch recompute: fresh triangulation over the live points in
    /// vertex-id order, then every registered ray replayed.
    pub fn rebuild(&self) -> Result<Reconstruction, CarveError> {
        let b = self.tri.bounds();
        let mut out = Reconstruction {
            tri: Triangulation::init_bounding(b.min, b.max)?,
            labels: CarvedLabeling::new(self.params.threshold),
            points: BTreeMap::new(),
            keyframes: self.keyframes.clone(),
            scene: self.scene,
            version: self.version,
            params: self.params,
        };
        let mut order: Vec<(VertexId, u64)> = self.points.iter().map(|(&id, &v)| (v, id)).collect();
        order.sort_unstable();
        let mut remap = HashMap::new();
        for (v, id) in order {
            let nv = out.tri.insert_point(*self.tri.position(v), Some(id))?;
            out.points.insert(id, nv);
            remap.insert(v, nv);
        }
        for (_, ray) in self.labels.rays() {
            let target = remap[&ray.target];
            out.labels.carve_ray(&out.tri, ray.keyframe, ray.point, ray.camera, target)?;
        }
        Ok(out)
    }

    /// Oriented OCCUPIED/FREE boundary as a fresh snapshot with the next
    /// version number.
    pub fn extract_surface(&mut self) -> SurfaceMesh {
        self.version += 1;
        extract_surface(&self.tri, &self.labels, self.version)
    }
}

/// One triangle per facet between an OCCUPIED and a FREE tetrahedron,
/// wound so its normal points into the FREE side.
pub fn extract_surface(tri: &Triangulation, labels: &CarvedLabeling, version: u64) -> SurfaceMesh {
    let mut index: HashMap<u32, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for t in tri.tets() {
        if labels.is_free(tri, t) {
            continue;
        }
        let tet = &tri.tets[t.0 as usize];
        for f in 0..4 {
            let n = tet.n[f];
            if n == crate::delaunay::NONE || !labels.is_free(tri, TetId(n)) {
                continue;
            }
            let tri_idx = FACET_OUT[f].map(|s| {
                let v = tet.v[s];
                *index.entry(v).or_insert_with(|| {
                    vertices.push(tri.vertices[v as usize].pos);
                    (vertices.len() - 1) as u32
                })
            });
            triangles.push(tri_idx);
        }
    }
    SurfaceMesh::from_triangles(version, vertices, triangles)
}
