//! Test-only oracles, written independently of the library's predicates.
#![allow(dead_code)]

use meshtwin_core::delaunay::{TetId, Triangulation, VertexId};
use meshtwin_core::geometry::Vec3;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn rvec(p: &Vec3) -> [BigRational; 3] {
    [rat(p.x), rat(p.y), rat(p.z)]
}

fn sub(a: &[BigRational; 3], b: &[BigRational; 3]) -> [BigRational; 3] {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn det3(a: &[BigRational; 3], b: &[BigRational; 3], c: &[BigRational; 3]) -> BigRational {
    &a[0] * (&b[1] * &c[2] - &b[2] * &c[1]) - &a[1] * (&b[0] * &c[2] - &b[2] * &c[0])
        + &a[2] * (&b[0] * &c[1] - &b[1] * &c[0])
}

/// det[b - a, c - a, d - a] in exact arithmetic.
pub fn orient_exact(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> BigRational {
    let (a, b, c, d) = (rvec(a), rvec(b), rvec(c), rvec(d));
    det3(&sub(&b, &a), &sub(&c, &a), &sub(&d, &a))
}

/// Does the closed tetrahedron `v` meet the open segment `(p, q)`?
/// Solves the barycentric interval constraints exactly.
pub fn segment_meets_tet_exact(v: [&Vec3; 4], p: &Vec3, q: &Vec3) -> bool {
    let zero = BigRational::zero();
    let one = BigRational::from_integer(BigInt::from(1));
    let mut lo: Option<BigRational> = None;
    let mut hi: Option<BigRational> = None;
    for i in 0..4 {
        let mut vp = v;
        vp[i] = p;
        let a = orient_exact(vp[0], vp[1], vp[2], vp[3]);
        let mut vq = v;
        vq[i] = q;
        let b = orient_exact(vq[0], vq[1], vq[2], vq[3]);
        // (1 - t) a + t b >= 0 for t in (0, 1)
        if a >= zero && b >= zero {
            continue;
        }
        if a <= zero && b <= zero {
            return false;
        }
        let t = &a / (&a - &b);
        if a < zero {
            lo = Some(lo.map_or(t.clone(), |l: BigRational| if t > l { t.clone() } else { l }));
        } else {
            hi = Some(hi.map_or(t.clone(), |h: BigRational| if t < h { t.clone() } else { h }));
        }
    }
    let lo = lo.unwrap_or(zero.clone());
    let hi = hi.unwrap_or(one.clone());
    if lo == zero && hi == one {
        return true;
    }
    lo <= hi && lo < one && hi > zero
}

/// Every live tetrahedron that meets the open segment, by exhaustive scan.
pub fn brute_traversal(tri: &Triangulation, camera: &Vec3, target: VertexId) -> Vec<TetId> {
    let q = *tri.position(target);
    if q == *camera {
        return vec![];
    }
    let mut out: Vec<TetId> = tri.tets().filter(|&t| segment_meets_tet_exact(tri.tet_points(t), camera, &q)).collect();
    out.sort();
    out
}

/// Sign of the insphere determinant of `e` against positively oriented
/// `abcd`: +1 strictly inside. Floating filter with exact fallback.
pub fn insphere_sign(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> i32 {
    let rows = [a - e, b - e, c - e, d - e];
    let m = nalgebra::Matrix4::from_fn(|i, j| if j < 3 { rows[i][j] } else { rows[i].norm_squared() });
    let det = m.determinant();
    // Generous forward-error bound: a multiple of the permanent.
    let perm = permanent4(&m.abs());
    let bound = 1e-11 * perm;
    // For positive orientation the lifted determinant is negative inside.
    if det > bound {
        return -1;
    }
    if det < -bound {
        return 1;
    }
    let pts = [a, b, c, d].map(rvec);
    let ee = rvec(e);
    let exact: Vec<[BigRational; 4]> = pts
        .iter()
        .map(|p| {
            let x = sub(p, &ee);
            let l = &x[0] * &x[0] + &x[1] * &x[1] + &x[2] * &x[2];
            [x[0].clone(), x[1].clone(), x[2].clone(), l]
        })
        .collect();
    let det4 = det4(&exact);
    if det4.is_positive() {
        -1
    } else if det4.is_negative() {
        1
    } else {
        0
    }
}

fn permanent4(m: &nalgebra::Matrix4<f64>) -> f64 {
    let p3 = |r: [usize; 3], c: [usize; 3]| {
        m[(r[0], c[0])] * (m[(r[1], c[1])] * m[(r[2], c[2])] + m[(r[1], c[2])] * m[(r[2], c[1])])
            + m[(r[0], c[1])] * (m[(r[1], c[0])] * m[(r[2], c[2])] + m[(r[1], c[2])] * m[(r[2], c[0])])
            + m[(r[0], c[2])] * (m[(r[1], c[0])] * m[(r[2], c[1])] + m[(r[1], c[1])] * m[(r[2], c[0])])
    };
    let cols = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    (0..4).map(|c| m[(0, c)] * p3([1, 2, 3], cols[c])).sum()
}

fn det4(m: &[[BigRational; 4]]) -> BigRational {
    let mut total = BigRational::zero();
    for col in 0..4 {
        let minor: Vec<[BigRational; 3]> = (1..4)
            .map(|r| {
                let mut row = Vec::with_capacity(3);
                for c in 0..4 {
                    if c != col {
                        row.push(m[r][c].clone());
                    }
                }
                [row[0].clone(), row[1].clone(), row[2].clone()]
            })
            .collect();
        let d = det3(&minor[0], &minor[1], &minor[2]);
        let term = &m[0][col] * d;
        if col % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// Exhaustive empty-circumsphere sweep: no live vertex may lie strictly
/// inside the circumsphere of any live tetrahedron.
pub fn check_delaunay(tri: &Triangulation) -> Result<(), String> {
    let verts: Vec<VertexId> = tri.vertices().collect();
    for t in tri.tets() {
        let tv = tri.tet_vertices(t);
        let p = tri.tet_points(t);
        for &v in &verts {
            if tv.contains(&v) {
                continue;
            }
            if insphere_sign(p[0], p[1], p[2], p[3], tri.position(v)) > 0 {
                return Err(format!("{v:?} lies inside the circumsphere of {t:?}"));
            }
        }
    }
    Ok(())
}

/// Canonical finite-tet set keyed by vertex ids.
pub fn finite_tets(tri: &Triangulation) -> std::collections::BTreeSet<[u32; 4]> {
    tri.tets()
        .filter(|&t| tri.is_finite_tet(t))
        .map(|t| {
            let mut k = tri.tet_vertices(t).map(|v| v.0);
            k.sort_unstable();
            k
        })
        .collect()
}

/// Sign of det[b - a, c - a, d - a]: float filter, exact fallback.
pub fn orient_sign(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    let (u, v, w) = (b - a, c - a, d - a);
    let det = u.dot(&v.cross(&w));
    let (u, v, w) = (u.abs(), v.abs(), w.abs());
    let perm = u.x * (v.y * w.z + v.z * w.y) + u.y * (v.x * w.z + v.z * w.x) + u.z * (v.x * w.y + v.y * w.x);
    let bound = 1e-12 * perm + f64::MIN_POSITIVE;
    if det > bound {
        1
    } else if det < -bound {
        -1
    } else {
        let e = orient_exact(a, b, c, d);
        if e.is_positive() {
            1
        } else if e.is_negative() {
            -1
        } else {
            0
        }
    }
}

/// Closed containment by signed volumes.
pub fn contains_exact(tri: &Triangulation, t: TetId, p: &Vec3) -> bool {
    let v = tri.tet_points(t);
    (0..4).all(|i| {
        let mut w = v;
        w[i] = p;
        orient_sign(w[0], w[1], w[2], w[3]) >= 0
    })
}

/// Unsigned distance from `p` to the surface of the axis-aligned cube
/// `[-h, h]^3`.
pub fn cube_distance(p: &Vec3, h: f64) -> f64 {
    let q = p.map(|c| c.abs() - h);
    let outside = q.map(|c| c.max(0.0)).norm();
    let inside = q.x.max(q.y).max(q.z).min(0.0);
    outside + inside.abs()
}
