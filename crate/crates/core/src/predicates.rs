//! Exact-sign geometric predicates.
//!
//! Orientation and insphere signs come from Shewchuk's adaptive-precision
//! expansions (the `robust` crate). The sign conventions here are:
//!
//! * `orient3d(a, b, c, d) > 0` iff `det[b - a, c - a, d - a] > 0`, i.e. the
//!   tetrahedron `abcd` has positive signed volume.
//! * `insphere(a, b, c, d, e) > 0` iff `e` lies strictly inside the sphere
//!   through a positively oriented `abcd`.
//!
//! Degenerate insphere results are resolved by symbolic perturbation ordered
//! by a caller-supplied key (vertex id), following the lifting perturbation
//! used by CGAL's 3D Delaunay triangulation.

use crate::geometry::Vec3;
use robust::Coord3D;

/// Sign of an exact predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    #[inline]
    pub fn of(v: f64) -> Self {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self == Sign::Positive
    }

    #[inline]
    pub fn is_negative(self) -> bool {
        self == Sign::Negative
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self == Sign::Zero
    }

    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
            Sign::Positive => Sign::Negative,
        }
    }

    #[inline]
    pub fn times(self, other: Sign) -> Sign {
        match (self, other) {
            (Sign::Zero, _) | (_, Sign::Zero) => Sign::Zero,
            (a, b) if a == b => Sign::Positive,
            _ => Sign::Negative,
        }
    }
}

#[inline]
fn c3(p: &Vec3) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Exact orientation of `d` with respect to the plane through `a, b, c`.
#[inline]
pub fn orient3d(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> Sign {
    // robust::orient3d is det[a - d, b - d, c - d], the negation of ours.
    Sign::of(-robust::orient3d(c3(a), c3(b), c3(c), c3(d)))
}

/// Exact insphere test; meaningful when `abcd` is positively oriented.
#[inline]
pub fn insphere(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3, e: &Vec3) -> Sign {
    // robust::insphere is positive for "inside" when its own orient3d is
    // positive, which is our negative orientation.
    Sign::of(-robust::insphere(c3(a), c3(b), c3(c), c3(d), c3(e)))
}

/// Orientation of the tetrahedron `tet` with slot `slot` replaced by `p`.
#[inline]
pub fn orient_replaced(tet: [&Vec3; 4], slot: usize, p: &Vec3) -> Sign {
    let mut t = tet;
    t[slot] = p;
    orient3d(t[0], t[1], t[2], t[3])
}

/// Insphere with symbolic perturbation.
///
/// `tet` must be positively oriented. Each point carries a perturbation key;
/// a larger key means a larger (more dominant) perturbation. Returns `true`
/// iff `query` is inside the perturbed circumsphere. Never returns a tie.
pub fn insphere_perturbed(tet: [(&Vec3, u64); 4], query: (&Vec3, u64)) -> bool {
    let pts = [tet[0].0, tet[1].0, tet[2].0, tet[3].0];
    match insphere(pts[0], pts[1], pts[2], pts[3], query.0) {
        Sign::Positive => return true,
        Sign::Negative => return false,
        Sign::Zero => {}
    }
    // Slots 0..4 are the tet vertices, 4 is the query.
    let mut order = [0usize, 1, 2, 3, 4];
    let key = |i: usize| if i == 4 { query.1 } else { tet[i].1 };
    order.sort_by_key(|&i| key(i));
    for &slot in order[2..].iter().rev() {
        if slot == 4 {
            return false;
        }
        let o = orient_replaced(pts, slot, query.0);
        if !o.is_zero() {
            return o.is_positive();
        }
    }
    // Only reachable when the tet itself is flat, which callers exclude.
    false
}
