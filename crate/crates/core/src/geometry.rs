//! Exact geometry on the unit cube and its grid subdivisions.
//!
//! Coordinates are arbitrary-precision rationals and cube symmetries are
//! signed axis permutations, so everything in this module is exact; floating
//! point never appears here. Distances in the Euclidean norm are carried as
//! squared rationals to stay exact.

use num::{BigInt, BigRational, FromPrimitive, One, Signed, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Exact rational scalar used throughout the crate.
pub type Rat = BigRational;

/// Shorthand for `n/d` as a [`Rat`]. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Shorthand for an integer [`Rat`].
pub fn rat_int(n: i64) -> Rat {
    BigRational::from_i64(n).expect("i64 always converts")
}

/// A point with exact rational coordinates, usually inside `[0,1]^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point(pub Vec<Rat>);

impl Point {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn zero(dim: usize) -> Point {
        Point(vec![Rat::zero(); dim])
    }

    /// Componentwise sum.
    pub fn add(&self, other: &Point) -> Point {
        Point(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Scales every coordinate by `f`.
    pub fn scale(&self, f: &Rat) -> Point {
        Point(self.0.iter().map(|a| a * f).collect())
    }

    /// True if every coordinate lies in `[0,1]`.
    pub fn in_unit_cube(&self) -> bool {
        self.0
            .iter()
            .all(|c| !c.is_negative() && *c <= Rat::one())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Where a point sits on the boundary structure of the unit cube.
///
/// `free_axes` are the axes whose coordinate is strictly between 0 and 1;
/// `fixed` records the axes pinned to a cube side together with the side
/// (`true` = the coordinate is 1). The dimension of the open face containing
/// the point is `free_axes.len()`: 0 for a vertex, 1 for an edge point,
/// `d - 1` for a facet point and `d` for an interior point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryClass {
    pub free_axes: Vec<usize>,
    pub fixed: Vec<(usize, bool)>,
}

impl BoundaryClass {
    pub fn face_dim(&self) -> usize {
        self.free_axes.len()
    }

    pub fn is_vertex(&self) -> bool {
        self.free_axes.is_empty()
    }

    pub fn is_interior(&self) -> bool {
        self.fixed.is_empty()
    }

    /// Human-readable tag: `vertex`, `edge`, `face`, ... `interior`.
    pub fn tag(&self, dim: usize) -> &'static str {
        if self.is_interior() {
            return "interior";
        }
        match self.face_dim() {
            0 => "vertex",
            1 => "edge",
            2 if dim == 3 => "face",
            _ => "facet",
        }
    }
}

/// Classifies `p` against the boundary of the unit cube.
///
/// Coordinates outside `[0,1]` are rejected with `None`.
pub fn boundary_class(p: &Point) -> Option<BoundaryClass> {
    let mut free_axes = Vec::new();
    let mut fixed = Vec::new();
    for (axis, c) in p.0.iter().enumerate() {
        if c.is_zero() {
            fixed.push((axis, false));
        } else if c.is_one() {
            fixed.push((axis, true));
        } else if c.is_negative() || *c > Rat::one() {
            return None;
        } else {
            free_axes.push(axis);
        }
    }
    Some(BoundaryClass { free_axes, fixed })
}

/// A symmetry of the unit cube: a signed permutation of the axes.
///
/// Axis `j` of the argument is sent to axis `perm[j]` of the image; when
/// `neg[j]` is set the coordinate is reflected first, i.e. `x ↦ 1 − x`, which
/// keeps the unit cube in place. There is no translation component.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Isometry {
    pub perm: Vec<usize>,
    pub neg: Vec<bool>,
}

impl fmt::Debug for Isometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.perm.len() {
            write!(
                f,
                "{}{}",
                if self.neg[j] { '-' } else { '+' },
                (b'x' + self.perm[j] as u8) as char
            )?;
        }
        Ok(())
    }
}

impl Isometry {
    pub fn identity(dim: usize) -> Isometry {
        Isometry {
            perm: (0..dim).collect(),
            neg: vec![false; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(j, &p)| j == p) && self.neg.iter().all(|&n| !n)
    }

    /// Applies the map to a point of the unit cube.
    pub fn apply(&self, p: &Point) -> Point {
        let mut out = vec![Rat::zero(); self.dim()];
        for j in 0..self.dim() {
            let c = if self.neg[j] {
                Rat::one() - &p.0[j]
            } else {
                p.0[j].clone()
            };
            out[self.perm[j]] = c;
        }
        Point(out)
    }

    /// Applies only the linear part to a lattice offset (reflections flip
    /// signs but do not translate).
    pub fn apply_offset(&self, delta: &[i64]) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for j in 0..self.dim() {
            out[self.perm[j]] = if self.neg[j] { -delta[j] } else { delta[j] };
        }
        out
    }

    /// Image of a grid cell of the `b`-fold subdivision under the map.
    pub fn apply_cell(&self, coords: &[i64], b: i64) -> Vec<i64> {
        let mut out = vec![0; self.dim()];
        for j in 0..self.dim() {
            out[self.perm[j]] = if self.neg[j] {
                b - 1 - coords[j]
            } else {
                coords[j]
            };
        }
        out
    }

    /// Composition `self ∘ other`: `other` is applied first.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let d = self.dim();
        let mut perm = vec![0; d];
        let mut neg = vec![false; d];
        for j in 0..d {
            perm[j] = self.perm[other.perm[j]];
            neg[j] = other.neg[j] ^ self.neg[other.perm[j]];
        }
        Isometry { perm, neg }
    }

    pub fn inverse(&self) -> Isometry {
        let d = self.dim();
        let mut perm = vec![0; d];
        let mut neg = vec![false; d];
        for j in 0..d {
            perm[self.perm[j]] = j;
            neg[self.perm[j]] = self.neg[j];
        }
        Isometry { perm, neg }
    }

    /// Sign of the determinant: `true` for rotations (orientation preserved),
    /// `false` for reflections.
    pub fn orientation_preserving(&self) -> bool {
        let mut perm = self.perm.clone();
        let mut transpositions = 0;
        for i in 0..perm.len() {
            while perm[i] != i {
                let j = perm[i];
                perm.swap(i, j);
                transpositions += 1;
            }
        }
        let flips = self.neg.iter().filter(|&&n| n).count();
        (transpositions + flips) % 2 == 0
    }
}

/// All `2^d · d!` signed permutations of `d` axes, in a stable order with the
/// identity first.
pub fn all_isometries(dim: usize) -> Vec<Isometry> {
    use itertools::Itertools;
    let mut out = Vec::new();
    for perm in (0..dim).permutations(dim) {
        for mask in 0..(1u32 << dim) {
            let neg = (0..dim).map(|j| mask >> j & 1 == 1).collect();
            out.push(Isometry {
                perm: perm.clone(),
                neg,
            });
        }
    }
    out.sort_by_key(|g| (!g.is_identity(), g.perm.clone(), g.neg.clone()));
    out
}

/// Precomputed multiplication structure for the symmetry group of the
/// `d`-cube, with elements addressed by dense indices. Index 0 is the
/// identity. Used by the search and measure code, which composes symmetries
/// in tight loops.
pub struct GroupTable {
    pub dim: usize,
    pub elems: Vec<Isometry>,
    /// `mult[a][b]` is the index of `elems[a] ∘ elems[b]`.
    pub mult: Vec<Vec<u16>>,
    pub inv: Vec<u16>,
    pub orientation: Vec<bool>,
    /// Action on the cells of the 2-fold subdivision, cells encoded as bit
    /// masks (bit `j` = coordinate of axis `j`).
    pub cell2: Vec<Vec<u8>>,
}

impl GroupTable {
    pub fn new(dim: usize) -> GroupTable {
        assert!(dim >= 1 && dim <= 4, "group tables cover dimensions 1..=4");
        let elems = all_isometries(dim);
        let n = elems.len();
        let index: std::collections::HashMap<&Isometry, u16> =
            elems.iter().zip(0u16..).collect();
        let mut mult = vec![vec![0u16; n]; n];
        let mut inv = vec![0u16; n];
        for (a, ga) in elems.iter().enumerate() {
            inv[a] = index[&ga.inverse()];
            for (b, gb) in elems.iter().enumerate() {
                mult[a][b] = index[&ga.compose(gb)];
            }
        }
        let orientation = elems.iter().map(|g| g.orientation_preserving()).collect();
        let cells = 1u8 << dim;
        let mut cell2 = vec![vec![0u8; cells as usize]; n];
        for (a, g) in elems.iter().enumerate() {
            for c in 0..cells {
                let coords: Vec<i64> = (0..dim).map(|j| (c >> j & 1) as i64).collect();
                let img = g.apply_cell(&coords, 2);
                let mut bits = 0u8;
                for (j, &v) in img.iter().enumerate() {
                    bits |= (v as u8) << j;
                }
                cell2[a][c as usize] = bits;
            }
        }
        GroupTable {
            dim,
            elems,
            mult,
            inv,
            orientation,
            cell2,
        }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, g: &Isometry) -> u16 {
        self.elems
            .iter()
            .position(|e| e == g)
            .expect("isometry of matching dimension") as u16
    }
}

/// Cached group tables per dimension; building one is cheap but the search
/// code asks for them in inner loops.
pub fn group(dim: usize) -> &'static GroupTable {
    use std::sync::OnceLock;
    static TABLES: [OnceLock<GroupTable>; 5] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    assert!(dim >= 1 && dim <= 4, "group tables cover dimensions 1..=4");
    TABLES[dim].get_or_init(|| GroupTable::new(dim))
}

/// Exact affine map `x ↦ M·x + t` on rational vectors.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Affine {
    pub mat: Vec<Vec<Rat>>,
    pub off: Vec<Rat>,
}

impl Affine {
    pub fn identity(dim: usize) -> Affine {
        let mut mat = vec![vec![Rat::zero(); dim]; dim];
        for (j, row) in mat.iter_mut().enumerate() {
            row[j] = Rat::one();
        }
        Affine {
            mat,
            off: vec![Rat::zero(); dim],
        }
    }

    /// The affine form of an isometry of the unit cube.
    pub fn from_isometry(g: &Isometry) -> Affine {
        let d = g.dim();
        let mut mat = vec![vec![Rat::zero(); d]; d];
        let mut off = vec![Rat::zero(); d];
        for j in 0..d {
            if g.neg[j] {
                mat[g.perm[j]][j] = -Rat::one();
                off[g.perm[j]] = Rat::one();
            } else {
                mat[g.perm[j]][j] = Rat::one();
            }
        }
        Affine { mat, off }
    }

    pub fn dim(&self) -> usize {
        self.off.len()
    }

    pub fn apply(&self, p: &Point) -> Point {
        let d = self.dim();
        let mut out = self.off.clone();
        for i in 0..d {
            for j in 0..d {
                if !self.mat[i][j].is_zero() {
                    out[i] += &self.mat[i][j] * &p.0[j];
                }
            }
        }
        Point(out)
    }

    /// Composition `self ∘ other` (`other` first).
    pub fn compose(&self, other: &Affine) -> Affine {
        let d = self.dim();
        let mut mat = vec![vec![Rat::zero(); d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = Rat::zero();
                for k in 0..d {
                    if !self.mat[i][k].is_zero() && !other.mat[k][j].is_zero() {
                        acc += &self.mat[i][k] * &other.mat[k][j];
                    }
                }
                mat[i][j] = acc;
            }
        }
        let off = self.apply(&Point(other.off.clone())).0;
        Affine { mat, off }
    }

    /// Solves `x = self(x)` by Gaussian elimination on `(I − M) x = t`.
    /// Returns `None` when the fixed point is not unique.
    pub fn fixed_point(&self) -> Option<Point> {
        let d = self.dim();
        let mut a = vec![vec![Rat::zero(); d + 1]; d];
        for i in 0..d {
            for j in 0..d {
                a[i][j] = -self.mat[i][j].clone();
            }
            a[i][i] += Rat::one();
            a[i][d] = self.off[i].clone();
        }
        for col in 0..d {
            let pivot = (col..d).find(|&r| !a[r][col].is_zero())?;
            a.swap(col, pivot);
            let div = a[col][col].clone();
            for j in col..=d {
                a[col][j] = &a[col][j] / &div;
            }
            for r in 0..d {
                if r != col && !a[r][col].is_zero() {
                    let f = a[r][col].clone();
                    for j in col..=d {
                        a[r][j] = &a[r][j] - &f * &a[col][j];
                    }
                }
            }
        }
        Some(Point((0..d).map(|i| a[i][d].clone()).collect()))
    }
}

/// Reference to one cell of the depth-`depth` grid: coordinates count cells
/// per axis, each in `0..b^depth`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct CellRef {
    pub depth: u32,
    pub coords: Vec<i64>,
}

impl CellRef {
    pub fn root(dim: usize) -> CellRef {
        CellRef {
            depth: 0,
            coords: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The child cell obtained by descending into subcell `sub` of the
    /// `b`-fold subdivision.
    pub fn child(&self, sub: &[i64], b: i64) -> CellRef {
        CellRef {
            depth: self.depth + 1,
            coords: self
                .coords
                .iter()
                .zip(sub)
                .map(|(c, s)| c * b + s)
                .collect(),
        }
    }

    /// Closed axis-aligned box covered by the cell, in unit-cube coordinates.
    pub fn to_box(&self, b: i64) -> RatBox {
        let w = Rat::one() / rat_int(b.pow(self.depth));
        let lo: Vec<Rat> = self.coords.iter().map(|&c| rat_int(c) * &w).collect();
        let hi: Vec<Rat> = lo.iter().map(|l| l + &w).collect();
        RatBox {
            lo: Point(lo),
            hi: Point(hi),
        }
    }

    /// Center point of the cell.
    pub fn center(&self, b: i64) -> Point {
        let w = Rat::one() / rat_int(2 * b.pow(self.depth));
        Point(
            self.coords
                .iter()
                .map(|&c| rat_int(2 * c + 1) * &w)
                .collect(),
        )
    }
}

/// Closed axis-aligned box with exact rational corners.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RatBox {
    pub lo: Point,
    pub hi: Point,
}

impl RatBox {
    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|j| self.lo.0[j] <= p.0[j] && p.0[j] <= self.hi.0[j])
    }

    pub fn unit(dim: usize) -> RatBox {
        RatBox {
            lo: Point(vec![Rat::zero(); dim]),
            hi: Point(vec![Rat::one(); dim]),
        }
    }
}

/// Norms the distance and diameter computations support. Values in the
/// Euclidean norm are reported squared so they stay rational.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn parse(s: &str) -> Option<Norm> {
        match s {
            "1" | "l1" | "L1" | "manhattan" => Some(Norm::L1),
            "2" | "l2" | "L2" | "euclidean" => Some(Norm::L2),
            "inf" | "linf" | "Linf" | "max" | "chebyshev" => Some(Norm::Linf),
            _ => None,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::L1 => write!(f, "L1"),
            Norm::L2 => write!(f, "L2"),
            Norm::Linf => write!(f, "Linf"),
        }
    }
}

/// Distance between two points in the given norm; squared for [`Norm::L2`].
pub fn point_distance(norm: Norm, p: &Point, q: &Point) -> Rat {
    let diffs = p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs());
    match norm {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| &d * &d).sum(),
        Norm::Linf => diffs.max().unwrap_or_else(Rat::zero),
    }
}

/// Certified range of distances between any point of `a` and any point of
/// `b`: `(min, max)` in the given norm, squared for [`Norm::L2`].
///
/// The per-axis gap (0 when the intervals overlap) yields the minimum and the
/// per-axis span the maximum; both are attained because the boxes are
/// axis-aligned.
pub fn box_distance_bounds(norm: Norm, a: &RatBox, b: &RatBox) -> (Rat, Rat) {
    let d = a.dim();
    let mut gap = Vec::with_capacity(d);
    let mut span = Vec::with_capacity(d);
    for j in 0..d {
        let g1 = &b.lo.0[j] - &a.hi.0[j];
        let g2 = &a.lo.0[j] - &b.hi.0[j];
        let g = g1.max(g2);
        gap.push(if g.is_negative() { Rat::zero() } else { g });
        let s1 = &b.hi.0[j] - &a.lo.0[j];
        let s2 = &a.hi.0[j] - &b.lo.0[j];
        span.push(s1.max(s2).abs());
    }
    let fold = |v: Vec<Rat>| -> Rat {
        match norm {
            Norm::L1 => v.into_iter().sum(),
            Norm::L2 => v.into_iter().map(|d| &d * &d).sum(),
            Norm::Linf => v.into_iter().max().unwrap_or_else(Rat::zero),
        }
    };
    (fold(gap), fold(span))
}

/// Total order on rationals for use as sort keys.
pub fn rat_cmp(a: &Rat, b: &Rat) -> Ordering {
    a.cmp(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_sizes() {
        assert_eq!(all_isometries(1).len(), 2);
        assert_eq!(all_isometries(2).len(), 8);
        assert_eq!(all_isometries(3).len(), 48);
    }

    #[test]
    fn composition_matches_application() {
        let isos = all_isometries(3);
        let p = Point(vec![rat(1, 3), rat(1, 7), rat(2, 5)]);
        for a in isos.iter().take(12) {
            for b in isos.iter().rev().take(12) {
                let via_compose = a.compose(b).apply(&p);
                let via_apply = a.apply(&b.apply(&p));
                assert_eq!(via_compose, via_apply);
            }
        }
    }

    #[test]
    fn inverse_roundtrip() {
        for g in all_isometries(3) {
            assert!(g.compose(&g.inverse()).is_identity());
            assert!(g.inverse().compose(&g).is_identity());
        }
    }

    #[test]
    fn orientation_multiplicative() {
        let isos = all_isometries(2);
        for a in &isos {
            for b in &isos {
                assert_eq!(
                    a.compose(b).orientation_preserving(),
                    a.orientation_preserving() == b.orientation_preserving()
                );
            }
        }
    }

    #[test]
    fn cell_action_consistent_with_point_action() {
        for g in all_isometries(3) {
            for c in 0..8u8 {
                let coords: Vec<i64> = (0..3).map(|j| (c >> j & 1) as i64).collect();
                let cell = CellRef {
                    depth: 1,
                    coords: coords.clone(),
                };
                let center = cell.center(2);
                let img_center = g.apply(&center);
                let img_cell = CellRef {
                    depth: 1,
                    coords: g.apply_cell(&coords, 2),
                };
                assert_eq!(img_cell.center(2), img_center);
            }
        }
    }

    #[test]
    fn boundary_classes() {
        let v = Point(vec![Rat::zero(), Rat::one(), Rat::zero()]);
        assert_eq!(boundary_class(&v).unwrap().face_dim(), 0);
        let e = Point(vec![rat(1, 3), Rat::zero(), Rat::zero()]);
        let bc = boundary_class(&e).unwrap();
        assert_eq!(bc.face_dim(), 1);
        assert_eq!(bc.tag(3), "edge");
        let f = Point(vec![rat(1, 3), rat(1, 2), Rat::one()]);
        assert_eq!(boundary_class(&f).unwrap().tag(3), "face");
        let i = Point(vec![rat(1, 2), rat(1, 2), rat(1, 2)]);
        assert!(boundary_class(&i).unwrap().is_interior());
        let out = Point(vec![rat(3, 2), Rat::zero(), Rat::zero()]);
        assert!(boundary_class(&out).is_none());
    }

    /// Independent oracle for box distances: alternating clamp projections
    /// for the minimum (exact for axis-aligned boxes after two rounds) and
    /// corner pairs for the maximum.
    fn oracle_bounds(norm: Norm, a: &RatBox, b: &RatBox) -> (Rat, Rat) {
        let d = a.dim();
        let clamp = |p: &Point, bx: &RatBox| -> Point {
            Point(
                (0..d)
                    .map(|j| p.0[j].clone().max(bx.lo.0[j].clone()).min(bx.hi.0[j].clone()))
                    .collect(),
            )
        };
        let corners = |bx: &RatBox| -> Vec<Point> {
            (0..(1u32 << d))
                .map(|m| {
                    Point(
                        (0..d)
                            .map(|j| {
                                if m >> j & 1 == 1 {
                                    bx.hi.0[j].clone()
                                } else {
                                    bx.lo.0[j].clone()
                                }
                            })
                            .collect(),
                    )
                })
                .collect()
        };
        let mut min: Option<Rat> = None;
        let mut max: Option<Rat> = None;
        for c in corners(a).into_iter().chain(corners(b)) {
            let p = clamp(&c, a);
            let q = clamp(&p, b);
            let p = clamp(&q, a);
            let dmin = point_distance(norm, &p, &q);
            min = Some(match min {
                None => dmin,
                Some(m) => m.min(dmin),
            });
        }
        for ca in corners(a) {
            for cb in corners(b) {
                let dmax = point_distance(norm, &ca, &cb);
                max = Some(match max {
                    None => dmax,
                    Some(m) => m.max(dmax),
                });
            }
        }
        (min.unwrap(), max.unwrap())
    }

    #[test]
    fn box_distance_bounds_match_oracle() {
        // Deterministic pseudo-random boxes over a small rational lattice.
        let mut seed = 0x9e37u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as i64
        };
        for _ in 0..400 {
            for norm in [Norm::L1, Norm::L2, Norm::Linf] {
                let mk = |next: &mut dyn FnMut() -> i64| {
                    let lo: Vec<Rat> = (0..3).map(|_| rat(next().rem_euclid(24), 12)).collect();
                    let hi: Vec<Rat> = lo
                        .iter()
                        .map(|l| l + rat(1 + next().rem_euclid(12), 12))
                        .collect();
                    RatBox {
                        lo: Point(lo),
                        hi: Point(hi),
                    }
                };
                let a = mk(&mut next);
                let b = mk(&mut next);
                assert_eq!(box_distance_bounds(norm, &a, &b), oracle_bounds(norm, &a, &b));
            }
        }
    }
}
