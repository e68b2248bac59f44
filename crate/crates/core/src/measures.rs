//! Certified two-sided bounds on the worst-case quality measures of a
//! validated rule system.
//!
//! Six measures are covered: worst-case locality in the L1, L2 and Linf
//! norms (the d-th power of the distance between two curve points divided
//! by the curve volume between them), the worst-case surface ratio of a
//! curve section, and the worst-case volume and surface ratios of a
//! section's bounding box.  All are suprema over the uncountable set of
//! point pairs on the curve, so they are bracketed rather than computed:
//! a lower bound comes from concrete witness pairs with exactly known
//! positions and parameters, an upper bound from branch-and-bound over
//! relative configurations of leaf cells.  Congruent configurations are
//! collapsed by canonicalizing over the symmetries of the cube, which is
//! what keeps refinement to useful depths affordable.
//!
//! Arithmetic discipline: cell geometry is tracked in exact integers at
//! the current refinement scale; conversion to `f64` happens only at the
//! boundary and is nudged outward by a few ulps, so `lower` never
//! overshoots and `upper` never undershoots the exact value it rounds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use num::{BigInt, Integer, One, ToPrimitive};
use thiserror::Error;

use crate::engine::{Engine, State};
use crate::geometry::{Norm, Point, Rat};
use crate::rules::{code_cell, validate_system, RuleSystem, ValidationError};

/// Hard ceiling on queued configurations per run; beyond it the run stops
/// early with the bracket it has, which stays valid but uncertified.
const MAX_NODES: usize = 3_000_000;

/// Hard ceiling on refinement steps per run, a backstop against slow
/// convergence on adversarial inputs.
const MAX_POPS: usize = 50_000_000;

/// A certified bracket around a measure value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    /// Witnessed from below by a concrete point pair or section.
    pub lower: f64,
    /// Proven from above at the reached refinement depth.
    pub upper: f64,
    /// Deepest refinement level that contributed to the bracket.
    pub depth: usize,
    /// Whether the bracket met the requested relative tolerance.
    pub certified: bool,
}

impl Bounds {
    fn unbounded() -> Bounds {
        Bounds {
            lower: f64::INFINITY,
            upper: f64::INFINITY,
            depth: 0,
            certified: true,
        }
    }
}

/// A concrete pair of curve points realizing a reported lower bound.  For
/// the locality measures the ratio of the pair itself is `value`; for the
/// section measures the pair delimits the witness section.
#[derive(Clone, Debug)]
pub struct Witness {
    pub p: Point,
    pub q: Point,
    pub value: f64,
}

/// Which bounding-box ratio [`bbox_ratio_bounds`] computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxMeasure {
    Volume,
    Surface,
}

/// The six measures of a full report, in conventional reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    LocalityLinf,
    LocalityL2,
    LocalityL1,
    SurfaceRatio,
    BoxVolume,
    BoxSurface,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 6] = [
        MeasureKind::LocalityLinf,
        MeasureKind::LocalityL2,
        MeasureKind::LocalityL1,
        MeasureKind::SurfaceRatio,
        MeasureKind::BoxVolume,
        MeasureKind::BoxSurface,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeasureKind::LocalityLinf => "wlinf",
            MeasureKind::LocalityL2 => "wl2",
            MeasureKind::LocalityL1 => "wl1",
            MeasureKind::SurfaceRatio => "ws",
            MeasureKind::BoxVolume => "wbv",
            MeasureKind::BoxSurface => "wbs",
        }
    }
}

/// One measure of a report: its bracket and, when the lower bound was
/// improved past zero, a witness pair that realizes it.
#[derive(Clone, Debug)]
pub struct MeasureRow {
    pub kind: MeasureKind,
    pub bounds: Bounds,
    pub witness: Option<Witness>,
}

/// All six measures of one system under a shared refinement budget.
#[derive(Clone, Debug)]
pub struct MeasureReport {
    pub rows: Vec<MeasureRow>,
}

impl MeasureReport {
    pub fn row(&self, kind: MeasureKind) -> &MeasureRow {
        self.rows
            .iter()
            .find(|r| r.kind == kind)
            .expect("report holds all six measures")
    }
}

#[derive(Error, Debug)]
pub enum MeasureError {
    #[error("invalid rule system: {0}")]
    Invalid(#[from] ValidationError),
    #[error("surface measures need dimension at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("tolerance must be a positive number, got {0}")]
    BadTolerance(f64),
}

// ---------------------------------------------------------------------------
// Directed rounding.

/// Nudges a value down far enough to absorb the rounding error of the
/// short f64 chains used here (each basic operation errs by at most half
/// an ulp, and no chain is longer than a dozen operations).
fn round_down(x: f64) -> f64 {
    let mut y = x;
    for _ in 0..16 {
        y = y.next_down();
    }
    y
}

fn round_up(x: f64) -> f64 {
    let mut y = x;
    for _ in 0..16 {
        y = y.next_up();
    }
    y
}

/// `x^(d/(d-1))` for `d >= 2`, used by the surface-flavored measures.
fn power_d_over_d1(x: f64, d: usize) -> f64 {
    match d {
        2 => x * x,
        3 => x * x.sqrt(),
        4 => x * x.cbrt(),
        _ => unreachable!("validated systems have dimension 1..=4"),
    }
}

/// `x^(d/2)`, the d-th power of a distance given as its square.
fn power_d_half(x: f64, d: usize) -> f64 {
    match d {
        1 => x.sqrt(),
        2 => x,
        3 => x * x.sqrt(),
        4 => x * x,
        _ => unreachable!("validated systems have dimension 1..=4"),
    }
}

// ---------------------------------------------------------------------------
// Shared geometry plumbing.  All hot-loop vectors are fixed [i64; 4]
// arrays with unused axes zero; dimensions above 4 are rejected upstream.

type V4 = [i64; 4];

fn v4(v: &[i64]) -> V4 {
    let mut out = [0i64; 4];
    out[..v.len()].copy_from_slice(v);
    out
}

/// Gates of every reachable state as f64 coordinates (exact for dyadic
/// and similar short gate positions; consumers nudge outward anyway).
struct StateGeom {
    ent: [f64; 4],
    exit: [f64; 4],
}

fn state_geoms(engine: &Engine) -> HashMap<State, StateGeom> {
    let mut out = HashMap::new();
    for s in engine.reachable_states() {
        let gates = engine.state_gates(s);
        let mut ent = [0f64; 4];
        let mut exit = [0f64; 4];
        for j in 0..engine.dim() {
            ent[j] = gates.entrance.0[j].to_f64().expect("gate coordinate");
            exit[j] = gates.exit.0[j].to_f64().expect("gate coordinate");
        }
        out.insert(s, StateGeom { ent, exit });
    }
    out
}

/// One concrete occurrence (depth and cell corner) of every reachable
/// state, used to anchor witness reports in absolute coordinates.
fn occurrences(engine: &Engine) -> HashMap<State, (u32, V4)> {
    let b = engine.sys.base;
    let d = engine.dim();
    let mut out: HashMap<State, (u32, V4)> = HashMap::new();
    let mut queue = VecDeque::new();
    out.insert(engine.start(), (0, [0; 4]));
    queue.push_back(engine.start());
    while let Some(s) = queue.pop_front() {
        let (depth, corner) = out[&s];
        for (code, t) in engine.expand(s) {
            if out.contains_key(&t) {
                continue;
            }
            let sub = v4(&code_cell(code, b, d));
            let mut c = [0i64; 4];
            for j in 0..d {
                c[j] = corner[j].saturating_mul(b).saturating_add(sub[j]);
            }
            out.insert(t, (depth + 1, c));
            queue.push_back(t);
        }
    }
    out
}

/// Exact rational point of a cell-local gate: `(corner + gate) / b^level`.
fn absolute_point(corner: &V4, gate: &Point, base: i64, level: u32, dim: usize) -> Point {
    let scale = Rat::from_integer(BigInt::from(base).pow(level));
    let coords = (0..dim)
        .map(|j| (Rat::from_integer(BigInt::from(corner[j])) + &gate.0[j]) / &scale)
        .collect();
    Point(coords)
}

fn pack_state(iso: u16, s: State) -> u32 {
    ((s.rule as u32) << 20) | ((iso as u32) << 1) | (s.rev as u32)
}

/// Lexicographic key of a pair configuration, minimized over the symmetry
/// group of the cube.  `r` transforms by the linear part of the isometry
/// (the corner corrections of the two unit cells cancel), and each state's
/// accumulated isometry is composed with the group element.
fn canon_pair(engine: &Engine, r: &V4, sa: State, sb: State) -> (V4, u32, u32) {
    let g = engine.group;
    let d = engine.dim();
    let mut best: Option<(V4, u32, u32)> = None;
    for e in 0..g.elems.len() {
        let elem = &g.elems[e];
        let mut rr = [0i64; 4];
        for j in 0..d {
            let v = if elem.neg[j] { -r[j] } else { r[j] };
            rr[elem.perm[j]] = v;
        }
        let pa = pack_state(g.mult[e][sa.iso as usize], sa);
        let pb = pack_state(g.mult[e][sb.iso as usize], sb);
        let cand = (rr, pa, pb);
        if best.as_ref().map_or(true, |b| cand < *b) {
            best = Some(cand);
        }
    }
    best.expect("the group is non-empty")
}

// ---------------------------------------------------------------------------
// Exact low-depth scan over gate points.
//
// The curve enters its k-th leaf cell of depth L exactly at parameter
// k / b^(dL), at that cell's entrance gate.  Scanning all pairs of these
// points gives the best lower bound available from exactly positioned
// points at that depth, and doubles as the reference that brute-force
// oracle tests reproduce independently.

struct ScanResult {
    value: f64,
    p: Point,
    q: Point,
}

fn leaf_cells(engine: &Engine, depth: u32) -> Vec<(V4, State)> {
    let b = engine.sys.base;
    let d = engine.dim();
    let mut frontier: Vec<(V4, State)> = vec![([0; 4], engine.start())];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * engine.n);
        for (corner, s) in frontier {
            for (code, t) in engine.expand(s) {
                let sub = v4(&code_cell(code, b, d));
                let mut c = [0i64; 4];
                for j in 0..d {
                    c[j] = corner[j] * b + sub[j];
                }
                next.push((c, t));
            }
        }
        frontier = next;
    }
    frontier
}

/// Least common denominator of all gate coordinates, as a small integer
/// when possible.  Vertex-gated systems have denominator 1.
fn gate_denominator(engine: &Engine) -> Option<i64> {
    let mut lcm = BigInt::one();
    for gates in &engine.gates {
        for p in [&gates.entrance, &gates.exit] {
            for c in &p.0 {
                lcm = lcm.lcm(c.denom());
            }
        }
    }
    lcm.to_i64()
}

/// Depth for the exact pair scan: as deep as the budget allows while the
/// leaf count stays small enough for an all-pairs pass.
fn scan_depth(engine: &Engine, max_depth: u32) -> u32 {
    let n = engine.n as u64;
    let mut cells = 1u64;
    let mut depth = 0u32;
    while depth < max_depth.min(4) && cells.saturating_mul(n) <= 20_000 {
        cells *= n;
        depth += 1;
    }
    depth
}

/// All-pairs maximum of dist^d / (parameter gap) over the exactly
/// positioned gate points of the given depth.  Exact integer comparisons;
/// the result is converted once, rounded down.
fn gate_point_scan(engine: &Engine, norm: Norm, depth: u32) -> Option<ScanResult> {
    let d = engine.dim();
    let b = engine.sys.base;
    let den = gate_denominator(engine)?;
    let scale = den.checked_mul(b.checked_pow(depth)?)?;
    if scale > 1 << 14 {
        return None;
    }
    let cells = leaf_cells(engine, depth);
    let geoms: HashMap<State, (V4, V4)> = cells
        .iter()
        .map(|(_, s)| *s)
        .chain(std::iter::once(engine.start()))
        .map(|s| {
            let gates = engine.state_gates(s);
            let conv = |p: &Point| {
                let mut out = [0i64; 4];
                for j in 0..d {
                    let scaled = &p.0[j] * Rat::from_integer(BigInt::from(den));
                    debug_assert!(scaled.is_integer(), "gate denominators divide their lcm");
                    out[j] = scaled.to_integer().to_i64().expect("small gate coordinate");
                }
                out
            };
            (s, (conv(&gates.entrance), conv(&gates.exit)))
        })
        .collect();

    // Point k is the entrance gate of cell k; the final point is the exit
    // gate of the last cell.  Coordinates are in units of 1 / (den * b^depth).
    let mut pts: Vec<V4> = Vec::with_capacity(cells.len() + 1);
    for (corner, s) in &cells {
        let ent = geoms[s].0;
        let mut p = [0i64; 4];
        for j in 0..d {
            p[j] = corner[j] * den + ent[j];
        }
        pts.push(p);
    }
    let (corner, s) = cells.last().expect("at least one leaf cell");
    let exit = geoms[s].1;
    let mut p = [0i64; 4];
    for j in 0..d {
        p[j] = corner[j] * den + exit[j];
    }
    pts.push(p);

    // value(k, l) = fold(delta)^d / (den^d * (l - k)) in absolute units,
    // with the fold squared for L2, where the comparison must therefore
    // square the gap as well.
    let gap_pow = |g: i128| -> Option<i128> {
        if norm == Norm::L2 {
            g.checked_mul(g)
        } else {
            Some(g)
        }
    };
    let mut best: Option<(i128, i128, usize, usize)> = None;
    for k in 0..pts.len() {
        for l in (k + 1)..pts.len() {
            let mut fold: i128 = 0;
            for j in 0..d {
                let diff = (pts[l][j] - pts[k][j]).unsigned_abs() as i128;
                match norm {
                    Norm::L1 => fold += diff,
                    Norm::L2 => fold += diff * diff,
                    Norm::Linf => fold = fold.max(diff),
                }
            }
            let num = fold.checked_pow(d as u32)?;
            let gap = (l - k) as i128;
            let better = match &best {
                None => true,
                Some((bn, bg, _, _)) => {
                    let lhs = num.checked_mul(gap_pow(*bg)?)?;
                    let rhs = bn.checked_mul(gap_pow(gap)?)?;
                    lhs > rhs
                }
            };
            if better {
                best = Some((num, gap, k, l));
            }
        }
    }
    let (num, gap, k, l) = best?;
    // For L2 the fold is squared, so num = (delta^2)^d and the true value
    // carries a square root; den^d rescales the distance to absolute units.
    let den_pow = (den as f64).powi(d as i32);
    let value = match norm {
        Norm::L2 => round_down((num as f64).sqrt() / (den_pow * gap as f64)),
        _ => round_down(num as f64 / (den_pow * gap as f64)),
    };
    let full = Rat::from_integer(BigInt::from(den) * BigInt::from(b).pow(depth));
    let to_point = |v: &V4| {
        Point(
            (0..d)
                .map(|j| Rat::from_integer(BigInt::from(v[j])) / &full)
                .collect(),
        )
    };
    Some(ScanResult {
        value,
        p: to_point(&pts[k]),
        q: to_point(&pts[l]),
    })
}

// ---------------------------------------------------------------------------
// Branch-and-bound over pairs of leaf cells (locality measures).

/// Relative configuration of two leaf cells of the same depth: the second
/// cell's corner relative to the first in units of the cell width, the
/// count of whole cells strictly between them in traversal order, and the
/// two traversal states.  The anchor fields record one concrete
/// occurrence so witnesses can be reported in absolute coordinates.
struct PairNode {
    ub: f64,
    r: V4,
    gap: u128,
    sa: State,
    sb: State,
    level: u32,
    ca: V4,
    cb: V4,
    abs_level: u32,
}

struct HeapEntry<T> {
    ub: f64,
    seq: u64,
    node: T,
}

impl<T> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.ub == other.ub && self.seq == other.seq
    }
}
impl<T> Eq for HeapEntry<T> {}
impl<T> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ub
            .total_cmp(&other.ub)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn pair_ub(norm: Norm, d: usize, r: &V4, gap: u128) -> f64 {
    debug_assert!(gap > 0);
    // Largest per-axis separation of points in the two cells: |r| + 1.
    let mut fold = 0f64;
    for &rj in r.iter().take(d) {
        let s = (rj.abs() + 1) as f64;
        match norm {
            Norm::L1 => fold += s,
            Norm::L2 => fold += s * s,
            Norm::Linf => fold = fold.max(s),
        }
    }
    let num = match norm {
        Norm::L2 => power_d_half(fold, d),
        _ => fold.powi(d as i32),
    };
    round_up(num / gap as f64)
}

/// Ratio of the concrete pair (entrance gate of the first cell, exit gate
/// of the second): distance from the relative geometry, parameter gap
/// exactly `gap + 2` cell volumes.
fn pair_witness_value(
    norm: Norm,
    d: usize,
    r: &V4,
    gap: u128,
    ga: &StateGeom,
    gb: &StateGeom,
) -> f64 {
    let mut fold = 0f64;
    for j in 0..d {
        let delta = (r[j] as f64 + gb.exit[j] - ga.ent[j]).abs();
        match norm {
            Norm::L1 => fold += delta,
            Norm::L2 => fold += delta * delta,
            Norm::Linf => fold = fold.max(delta),
        }
    }
    let num = match norm {
        Norm::L2 => power_d_half(fold, d),
        _ => fold.powi(d as i32),
    };
    round_down(num / (gap as f64 + 2.0))
}

struct RunOutcome {
    bounds: Bounds,
    witness: Option<Witness>,
}

/// Deepest refinement level whose integer bookkeeping stays in range:
/// corners fit i64 and cell counts fit u128 with room to spare.
fn safe_level(base: i64, dim: usize) -> u32 {
    let logb = (base as f64).log2();
    let by_corner = (55.0 / logb).floor() as u32;
    let by_volume = (120.0 / (dim as f64 * logb)).floor() as u32;
    by_corner.min(by_volume)
}

fn run_locality(engine: &Engine, norm: Norm, tol: f64, max_depth: u32) -> RunOutcome {
    let d = engine.dim();
    let b = engine.sys.base;
    let n = engine.n;
    let geoms = state_geoms(engine);
    let anchors = occurrences(engine);
    let max_level = max_depth.min(safe_level(b, d));

    let mut lower = 0f64;
    let mut witness: Option<Witness> = None;
    let mut best_node: Option<(State, State, V4, V4, u32)> = None;
    let mut deepest = 0u32;

    let scan_l = scan_depth(engine, max_depth);
    if let Some(scan) = gate_point_scan(engine, norm, scan_l) {
        lower = scan.value;
        witness = Some(Witness {
            p: scan.p,
            q: scan.q,
            value: scan.value,
        });
        deepest = scan_l;
    }
    // Witness pairs harvested from branch-and-bound nodes live deeper
    // than the exact scan; they only count when the budget goes past the
    // scan's reach, so a depth-capped run stays comparable to an
    // independent scan of the same depth.
    let deep_witnesses = max_depth > 4;

    let mut heap: BinaryHeap<HeapEntry<PairNode>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut finite_seen: HashMap<(V4, u32, u32), u128> = HashMap::new();
    let mut zero_seen: HashSet<(V4, u32, u32)> = HashSet::new();

    let push = |node: PairNode,
                    heap: &mut BinaryHeap<HeapEntry<PairNode>>,
                    finite_seen: &mut HashMap<(V4, u32, u32), u128>,
                    zero_seen: &mut HashSet<(V4, u32, u32)>,
                    lower: &mut f64,
                    witness: &mut Option<Witness>,
                    best_node: &mut Option<(State, State, V4, V4, u32)>,
                    seq: &mut u64| {
        if node.gap == 0 {
            // Touching cells refine forever; the finite set of their
            // canonical classes is explored once each.
            let key = canon_pair(engine, &node.r, node.sa, node.sb);
            if !zero_seen.insert(key) {
                return;
            }
        } else {
            if deep_witnesses && node.gap < u128::MAX {
                let val = pair_witness_value(
                    norm,
                    d,
                    &node.r,
                    node.gap,
                    &geoms[&node.sa],
                    &geoms[&node.sb],
                );
                if val > *lower {
                    *lower = val;
                    *best_node = Some((node.sa, node.sb, node.ca, node.cb, node.abs_level));
                    *witness = None;
                }
            }
            if node.ub <= *lower {
                return;
            }
            // Among congruent configurations the smallest gap dominates:
            // matching refinements keep its gap pointwise smallest, hence
            // its values pointwise largest.
            let key = canon_pair(engine, &node.r, node.sa, node.sb);
            match finite_seen.get(&key) {
                Some(&g) if g <= node.gap => return,
                _ => {
                    finite_seen.insert(key, node.gap);
                }
            }
        }
        *seq += 1;
        heap.push(HeapEntry {
            ub: node.ub,
            seq: *seq,
            node,
        });
    };

    // Seeds: every ordered child pair of every reachable state.  Each
    // pair of distinct curve points separates at some level into exactly
    // such a configuration, scale-free, so the seeds' subtrees cover
    // every pair.
    for s in engine.reachable_states() {
        let children = engine.expand(s);
        let (a_depth, a_corner) = anchors[&s];
        for i in 0..n {
            for j in (i + 1)..n {
                let (ci, si) = children[i];
                let (cj, sj) = children[j];
                let gi = v4(&code_cell(ci, b, d));
                let gj = v4(&code_cell(cj, b, d));
                let mut r = [0i64; 4];
                let mut ca = [0i64; 4];
                let mut cb = [0i64; 4];
                for t in 0..d {
                    r[t] = gj[t] - gi[t];
                    ca[t] = a_corner[t].saturating_mul(b).saturating_add(gi[t]);
                    cb[t] = a_corner[t].saturating_mul(b).saturating_add(gj[t]);
                }
                let gap = (j - i - 1) as u128;
                let ub = if gap == 0 {
                    f64::INFINITY
                } else {
                    pair_ub(norm, d, &r, gap)
                };
                push(
                    PairNode {
                        ub,
                        r,
                        gap,
                        sa: si,
                        sb: sj,
                        level: 1,
                        ca,
                        cb,
                        abs_level: a_depth + 1,
                    },
                    &mut heap,
                    &mut finite_seen,
                    &mut zero_seen,
                    &mut lower,
                    &mut witness,
                    &mut best_node,
                    &mut seq,
                );
            }
        }
    }

    let mut pops = 0usize;
    let (upper, certified) = loop {
        let Some(entry) = heap.pop() else {
            // Everything was refined away or pruned against the witnesses:
            // the supremum is exactly the best witness.
            break (lower, true);
        };
        let node = entry.node;
        deepest = deepest.max(node.level);
        if node.gap > 0 {
            // A congruent configuration with a smaller gap dominates this
            // one; skip stale heap entries.
            let key = canon_pair(engine, &node.r, node.sa, node.sb);
            if finite_seen.get(&key).is_some_and(|&g| g < node.gap) {
                continue;
            }
            if node.ub <= lower {
                continue;
            }
            // Pops are non-increasing in bound (children are clamped to
            // their parent), so the first node below a stop threshold
            // bounds everything still unexplored.
            if node.ub <= lower * (1.0 + tol) {
                break (node.ub.max(lower), true);
            }
            if node.level >= max_level {
                break (node.ub.max(lower), false);
            }
        }
        pops += 1;
        if pops > MAX_POPS || heap.len() > MAX_NODES {
            break (node.ub.max(lower), false);
        }

        let a_children = engine.expand(node.sa);
        let b_children = engine.expand(node.sb);
        for (i, &(cai, sai)) in a_children.iter().enumerate() {
            let gi = v4(&code_cell(cai, b, d));
            for (j, &(cbj, sbj)) in b_children.iter().enumerate() {
                let gj = v4(&code_cell(cbj, b, d));
                let mut r = [0i64; 4];
                let mut ca = [0i64; 4];
                let mut cb = [0i64; 4];
                for t in 0..d {
                    r[t] = node.r[t] * b + gj[t] - gi[t];
                    ca[t] = node.ca[t].saturating_mul(b).saturating_add(gi[t]);
                    cb[t] = node.cb[t].saturating_mul(b).saturating_add(gj[t]);
                }
                let tail = (n - 1 - i) as u128;
                let head = j as u128;
                let gap = node
                    .gap
                    .saturating_mul(n as u128)
                    .saturating_add(tail + head);
                let ub = if gap == 0 {
                    f64::INFINITY
                } else {
                    pair_ub(norm, d, &r, gap).min(node.ub)
                };
                push(
                    PairNode {
                        ub,
                        r,
                        gap,
                        sa: sai,
                        sb: sbj,
                        level: node.level + 1,
                        ca,
                        cb,
                        abs_level: node.abs_level + 1,
                    },
                    &mut heap,
                    &mut finite_seen,
                    &mut zero_seen,
                    &mut lower,
                    &mut witness,
                    &mut best_node,
                    &mut seq,
                );
            }
        }
    };

    if witness.is_none() {
        if let Some((sa, sb, ca, cb, alev)) = best_node {
            let ga = engine.state_gates(sa);
            let gb = engine.state_gates(sb);
            witness = Some(Witness {
                p: absolute_point(&ca, &ga.entrance, b, alev, d),
                q: absolute_point(&cb, &gb.exit, b, alev, d),
                value: lower,
            });
        }
    }

    RunOutcome {
        bounds: Bounds {
            lower,
            upper: upper.max(lower),
            depth: deepest as usize,
            certified: certified && upper <= lower * (1.0 + tol),
        },
        witness,
    }
}

// ---------------------------------------------------------------------------
// Branch-and-bound over curve sections (surface and bounding-box measures).

/// Objective of a section run.
#[derive(Clone, Copy, PartialEq, Eq)]
enum SectionGoal {
    Surface,
    BoxVolume,
    BoxSurface,
}

/// A configuration of a partially refined curve section: a start cell
/// and an end cell of the current depth holding the section's loose
/// ends, and the aggregated run of whole cells strictly between the two
/// in traversal order.
///
/// `volume` counts the whole-cell run in units of the current cell; the
/// two loose ends each add between zero and one full cell volume on top
/// of it, which is exactly the slack the upper bounds account for.
/// `surface` is the exposed surface of the run in units of the current
/// cell's face.  `cover_start`/`cover_end` record which faces of the two
/// end cells the run covers completely (bit `2*axis + side`); the run
/// covers an end-cell face completely or not at all, because every cell
/// of the run is at least as large as the end cells are now and all are
/// aligned to the end cells' grid.
pub struct SectionState {
    /// End cell's corner relative to the start cell's corner.
    pub offset: V4,
    /// Bounding box of the whole-cell run, relative to the start corner;
    /// zeroed while the run is empty.
    pub bbox_lo: V4,
    pub bbox_hi: V4,
    pub volume: u128,
    pub surface: u128,
    pub cover_start: u8,
    pub cover_end: u8,
    pub start: State,
    pub end: State,
    pub level: u32,
    anchor_start: V4,
    anchor_end: V4,
    anchor_level: u32,
}

struct SectionNode {
    ub: f64,
    st: SectionState,
}

type SectionKey = (V4, V4, V4, u128, u128, u8, u8, u32, u32);

/// Key of a section configuration minimized over the cube symmetries.
/// Boxes transform per axis as `[lo, hi) -> [1 - hi, 1 - lo)` on negated
/// axes (the composite map keeps the start cell on the unit cube at the
/// origin); face masks permute accordingly.
fn canon_section(engine: &Engine, st: &SectionState) -> SectionKey {
    let g = engine.group;
    let d = engine.dim();
    let empty = st.volume == 0;
    let mut best: Option<SectionKey> = None;
    for e in 0..g.elems.len() {
        let elem = &g.elems[e];
        let mut r = [0i64; 4];
        let mut lo = [0i64; 4];
        let mut hi = [0i64; 4];
        let mut ma = 0u8;
        let mut mb = 0u8;
        for j in 0..d {
            let p = elem.perm[j];
            if elem.neg[j] {
                r[p] = -st.offset[j];
                if !empty {
                    lo[p] = 1 - st.bbox_hi[j];
                    hi[p] = 1 - st.bbox_lo[j];
                }
                ma |= ((st.cover_start >> (2 * j + 1)) & 1) << (2 * p);
                ma |= ((st.cover_start >> (2 * j)) & 1) << (2 * p + 1);
                mb |= ((st.cover_end >> (2 * j + 1)) & 1) << (2 * p);
                mb |= ((st.cover_end >> (2 * j)) & 1) << (2 * p + 1);
            } else {
                r[p] = st.offset[j];
                if !empty {
                    lo[p] = st.bbox_lo[j];
                    hi[p] = st.bbox_hi[j];
                }
                ma |= ((st.cover_start >> (2 * j)) & 1) << (2 * p);
                ma |= ((st.cover_start >> (2 * j + 1)) & 1) << (2 * p + 1);
                mb |= ((st.cover_end >> (2 * j)) & 1) << (2 * p);
                mb |= ((st.cover_end >> (2 * j + 1)) & 1) << (2 * p + 1);
            }
        }
        let pa = pack_state(g.mult[e][st.start.iso as usize], st.start);
        let pb = pack_state(g.mult[e][st.end.iso as usize], st.end);
        let cand = (r, lo, hi, st.volume, st.surface, ma, mb, pa, pb);
        if best.as_ref().map_or(true, |b| cand < *b) {
            best = Some(cand);
        }
    }
    best.expect("the group is non-empty")
}

/// Worst possible exposed surface of one loose end, in units of the
/// current cell's face: the end's material decomposes into at most n-1
/// whole cells per deeper level, whose total boundary forms a geometric
/// series.
fn end_surface_slack(base: i64, dim: usize, n: usize) -> f64 {
    let x = (base as f64).powi(1 - (dim as i32));
    2.0 * dim as f64 * (n - 1) as f64 * x / (1.0 - x)
}

/// Lower bound witnessed by the run itself: the section from the gate
/// entering the run to the gate leaving it covers exactly the run.
fn section_lb(goal: SectionGoal, d: usize, st: &SectionState) -> f64 {
    debug_assert!(st.volume > 0);
    let vol = st.volume as f64;
    match goal {
        SectionGoal::BoxVolume => {
            let mut prod = 1.0;
            for j in 0..d {
                prod *= (st.bbox_hi[j] - st.bbox_lo[j]) as f64;
            }
            round_down(prod / vol)
        }
        SectionGoal::BoxSurface => {
            let mut face = 0f64;
            for m in 0..d {
                let mut prod = 1.0;
                for j in 0..d {
                    if j != m {
                        prod *= (st.bbox_hi[j] - st.bbox_lo[j]) as f64;
                    }
                }
                face = face.max(prod);
            }
            round_down(power_d_over_d1(face, d) / vol)
        }
        SectionGoal::Surface => {
            let s = st.surface as f64 / (2.0 * d as f64);
            round_down(power_d_over_d1(s, d) / vol)
        }
    }
}

/// Upper bound over every section this configuration can refine into:
/// the box grows by at most the two end cells, the surface by at most
/// the two ends' worst-case boundaries, and the volume never drops below
/// the run's.
fn section_ub(goal: SectionGoal, d: usize, st: &SectionState, slack: f64) -> f64 {
    debug_assert!(st.volume > 0);
    let vol = st.volume as f64;
    match goal {
        SectionGoal::BoxVolume | SectionGoal::BoxSurface => {
            let mut prod = 1.0;
            let mut spans = [0f64; 4];
            for j in 0..d {
                let lo = st.bbox_lo[j].min(0).min(st.offset[j]);
                let hi = st.bbox_hi[j].max(1).max(st.offset[j] + 1);
                spans[j] = (hi - lo) as f64;
                prod *= spans[j];
            }
            match goal {
                SectionGoal::BoxVolume => round_up(prod / vol),
                SectionGoal::BoxSurface => {
                    let mut face = 0f64;
                    for m in 0..d {
                        let mut p = 1.0;
                        for (j, &s) in spans.iter().enumerate().take(d) {
                            if j != m {
                                p *= s;
                            }
                        }
                        face = face.max(p);
                    }
                    round_up(power_d_over_d1(face, d) / vol)
                }
                SectionGoal::Surface => unreachable!("handled by the outer arm"),
            }
        }
        SectionGoal::Surface => {
            let s = (st.surface as f64 + 2.0 * slack) / (2.0 * d as f64);
            round_up(power_d_over_d1(s, d) / vol)
        }
    }
}

fn run_sections(engine: &Engine, goal: SectionGoal, tol: f64, max_depth: u32) -> RunOutcome {
    let d = engine.dim();
    let b = engine.sys.base;
    let n = engine.n;
    let anchors = occurrences(engine);
    let slack = end_surface_slack(b, d, n);
    let track_surface = goal == SectionGoal::Surface;
    let max_level = max_depth.min(safe_level(b, d));

    let mut lower = 0f64;
    let mut best_node: Option<(State, State, V4, V4, u32)> = None;
    let mut deepest = 0u32;

    let mut heap: BinaryHeap<HeapEntry<SectionNode>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut seen: HashSet<SectionKey> = HashSet::new();

    let push = |st: SectionState,
                    parent_ub: f64,
                    heap: &mut BinaryHeap<HeapEntry<SectionNode>>,
                    seen: &mut HashSet<SectionKey>,
                    lower: &mut f64,
                    best_node: &mut Option<(State, State, V4, V4, u32)>,
                    seq: &mut u64| {
        let ub = if st.volume == 0 {
            f64::INFINITY
        } else {
            let lb = section_lb(goal, d, &st);
            if lb > *lower {
                *lower = lb;
                *best_node = Some((
                    st.start,
                    st.end,
                    st.anchor_start,
                    st.anchor_end,
                    st.anchor_level,
                ));
            }
            section_ub(goal, d, &st, slack).min(parent_ub)
        };
        if st.volume > 0 && ub <= *lower {
            return;
        }
        if !seen.insert(canon_section(engine, &st)) {
            return;
        }
        *seq += 1;
        heap.push(HeapEntry {
            ub,
            seq: *seq,
            node: SectionNode { ub, st },
        });
    };

    // Seeds: every ordered child pair of every reachable state, with the
    // children strictly between them as the initial run.
    for s in engine.reachable_states() {
        let children = engine.expand(s);
        let cells: Vec<V4> = children
            .iter()
            .map(|&(c, _)| v4(&code_cell(c, b, d)))
            .collect();
        let (a_depth, a_corner) = anchors[&s];
        for i in 0..n {
            for j in (i + 1)..n {
                let run = &cells[(i + 1)..j];
                let volume = run.len() as u128;
                let occupied = |spot: &V4| run.iter().any(|c| c[..d] == spot[..d]);
                let mut lo = [0i64; 4];
                let mut hi = [0i64; 4];
                if let Some(first) = run.first() {
                    lo = *first;
                    hi = *first;
                    for c in run {
                        for t in 0..d {
                            lo[t] = lo[t].min(c[t]);
                            hi[t] = hi[t].max(c[t]);
                        }
                    }
                    for t in 0..d {
                        hi[t] += 1;
                    }
                }
                let mut surface = 0u128;
                if track_surface {
                    for c in run {
                        let mut hidden = 0u128;
                        for t in 0..d {
                            for side in [-1i64, 1] {
                                let mut spot = *c;
                                spot[t] += side;
                                if occupied(&spot) {
                                    hidden += 1;
                                }
                            }
                        }
                        surface += 2 * d as u128 - hidden;
                    }
                }
                let mask_of = |cell: &V4| {
                    let mut mask = 0u8;
                    for t in 0..d {
                        for (side, bit) in [(-1i64, 0usize), (1, 1)] {
                            let mut spot = *cell;
                            spot[t] += side;
                            if occupied(&spot) {
                                mask |= 1 << (2 * t + bit);
                            }
                        }
                    }
                    mask
                };
                let mut offset = [0i64; 4];
                let mut lo_rel = [0i64; 4];
                let mut hi_rel = [0i64; 4];
                let mut anchor_start = [0i64; 4];
                let mut anchor_end = [0i64; 4];
                for t in 0..d {
                    offset[t] = cells[j][t] - cells[i][t];
                    if volume > 0 {
                        lo_rel[t] = lo[t] - cells[i][t];
                        hi_rel[t] = hi[t] - cells[i][t];
                    }
                    anchor_start[t] = a_corner[t].saturating_mul(b).saturating_add(cells[i][t]);
                    anchor_end[t] = a_corner[t].saturating_mul(b).saturating_add(cells[j][t]);
                }
                let st = SectionState {
                    offset,
                    bbox_lo: lo_rel,
                    bbox_hi: hi_rel,
                    volume,
                    surface,
                    cover_start: mask_of(&cells[i]),
                    cover_end: mask_of(&cells[j]),
                    start: children[i].1,
                    end: children[j].1,
                    level: 1,
                    anchor_start,
                    anchor_end,
                    anchor_level: a_depth + 1,
                };
                push(
                    st,
                    f64::INFINITY,
                    &mut heap,
                    &mut seen,
                    &mut lower,
                    &mut best_node,
                    &mut seq,
                );
            }
        }
    }

    let mut pops = 0usize;
    let (upper, certified) = loop {
        let Some(entry) = heap.pop() else {
            break (lower, true);
        };
        let node_ub = entry.node.ub;
        let st = entry.node.st;
        deepest = deepest.max(st.level);
        if st.volume > 0 {
            if node_ub <= lower {
                continue;
            }
            if node_ub <= lower * (1.0 + tol) {
                break (node_ub.max(lower), true);
            }
            if st.level >= max_level {
                break (node_ub.max(lower), false);
            }
        }
        // Empty runs refine regardless of depth: their geometry stays
        // unit-sized, and the finite set of their canonical classes
        // saturates, so the chains always terminate.
        pops += 1;
        if pops > MAX_POPS || heap.len() > MAX_NODES {
            break (node_ub.max(lower), false);
        }

        let a_children = engine.expand(st.start);
        let b_children = engine.expand(st.end);
        let ga: Vec<V4> = a_children
            .iter()
            .map(|&(c, _)| v4(&code_cell(c, b, d)))
            .collect();
        let gb: Vec<V4> = b_children
            .iter()
            .map(|&(c, _)| v4(&code_cell(c, b, d)))
            .collect();
        // End-cell corners in the refined frame: start children live in
        // [0, b)^d, end children in rp + [0, b)^d.
        let mut rp = [0i64; 4];
        for t in 0..d {
            rp[t] = st.offset[t] * b;
        }

        for i in 0..n {
            for j in 0..n {
                // Cells appended to the run this step: the start cell's
                // children after i and the end cell's children before j,
                // in refined units.
                let appended_a: Vec<V4> = ((i + 1)..n).map(|k| ga[k]).collect();
                let appended_b: Vec<V4> = (0..j)
                    .map(|k| {
                        let mut c = rp;
                        for t in 0..d {
                            c[t] += gb[k][t];
                        }
                        c
                    })
                    .collect();

                // Occupancy of a unit spot by the refined run, split into
                // (appended this step, material of the coarser run).  The
                // coarse run is a union of cells of size >= b aligned to
                // the b-grid, so the b-cube holding an out-of-end-cell
                // spot is occupied fully or not at all, and that b-cube
                // is face-adjacent to one of the end cells, where the
                // cover masks have the answer.
                let in_box = |spot: &V4, corner: &V4| {
                    (0..d).all(|t| spot[t] >= corner[t] && spot[t] < corner[t] + b)
                };
                let origin = [0i64; 4];
                let occ = |spot: &V4| -> (bool, bool) {
                    if in_box(spot, &origin) {
                        let k = (0..n)
                            .position(|k| ga[k][..d] == spot[..d])
                            .expect("spot inside the start cell is one of its children");
                        return (k > i, false);
                    }
                    if in_box(spot, &rp) {
                        let mut local = *spot;
                        for t in 0..d {
                            local[t] -= rp[t];
                        }
                        let k = (0..n)
                            .position(|k| gb[k][..d] == local[..d])
                            .expect("spot inside the end cell is one of its children");
                        return (k < j, false);
                    }
                    let mut cube = [0i64; 4];
                    for t in 0..d {
                        cube[t] = spot[t].div_euclid(b);
                    }
                    let from_start: i64 = (0..d).map(|t| cube[t].abs()).sum();
                    if from_start == 1 {
                        let t = (0..d).find(|&t| cube[t] != 0).expect("one axis is off");
                        let bit = if cube[t] < 0 { 0 } else { 1 };
                        return (false, st.cover_start >> (2 * t + bit) & 1 == 1);
                    }
                    let from_end: i64 = (0..d).map(|t| (cube[t] - st.offset[t]).abs()).sum();
                    if from_end == 1 {
                        let t = (0..d)
                            .find(|&t| cube[t] != st.offset[t])
                            .expect("one axis is off");
                        let bit = if cube[t] < st.offset[t] { 0 } else { 1 };
                        return (false, st.cover_end >> (2 * t + bit) & 1 == 1);
                    }
                    unreachable!("queried spots neighbor an end cell's child");
                };

                let volume = st
                    .volume
                    .saturating_mul(n as u128)
                    .saturating_add((appended_a.len() + appended_b.len()) as u128);

                // Rescale the run box and fold in the appended cells.
                let mut lo = [0i64; 4];
                let mut hi = [0i64; 4];
                let mut have_box = false;
                if st.volume > 0 {
                    for t in 0..d {
                        lo[t] = st.bbox_lo[t] * b;
                        hi[t] = st.bbox_hi[t] * b;
                    }
                    have_box = true;
                }
                for c in appended_a.iter().chain(appended_b.iter()) {
                    if !have_box {
                        for t in 0..d {
                            lo[t] = c[t];
                            hi[t] = c[t] + 1;
                        }
                        have_box = true;
                    } else {
                        for t in 0..d {
                            lo[t] = lo[t].min(c[t]);
                            hi[t] = hi[t].max(c[t] + 1);
                        }
                    }
                }

                let mut surface = 0u128;
                if track_surface {
                    let scale = (b as u128).pow(d as u32 - 1);
                    surface = st.surface.saturating_mul(scale);
                    for c in appended_a.iter().chain(appended_b.iter()) {
                        let mut exposed = 2 * d as i64;
                        for t in 0..d {
                            for side in [-1i64, 1] {
                                let mut spot = *c;
                                spot[t] += side;
                                let (appended, coarse) = occ(&spot);
                                if appended {
                                    exposed -= 1;
                                } else if coarse {
                                    // The appended cell's face and the
                                    // coarse run's matching patch both
                                    // stop being exposed.
                                    exposed -= 2;
                                }
                            }
                        }
                        surface = surface
                            .checked_add_signed(exposed.into())
                            .unwrap_or(u128::MAX);
                    }
                }

                let new_mask = |cell: &V4| {
                    let mut mask = 0u8;
                    for t in 0..d {
                        for (side, bit) in [(-1i64, 0usize), (1, 1)] {
                            let mut spot = *cell;
                            spot[t] += side;
                            let (appended, coarse) = occ(&spot);
                            if appended || coarse {
                                mask |= 1 << (2 * t + bit);
                            }
                        }
                    }
                    mask
                };
                let start_cell = ga[i];
                let mut end_cell = rp;
                for t in 0..d {
                    end_cell[t] += gb[j][t];
                }
                let cover_start = new_mask(&start_cell);
                let cover_end = new_mask(&end_cell);
                debug_assert!(
                    volume > 0 || (cover_start == 0 && cover_end == 0),
                    "an empty run covers nothing"
                );

                // Re-anchor at the new start cell.
                let mut offset = [0i64; 4];
                let mut lo_rel = [0i64; 4];
                let mut hi_rel = [0i64; 4];
                let mut anchor_start = [0i64; 4];
                let mut anchor_end = [0i64; 4];
                for t in 0..d {
                    offset[t] = end_cell[t] - start_cell[t];
                    if volume > 0 {
                        lo_rel[t] = lo[t] - start_cell[t];
                        hi_rel[t] = hi[t] - start_cell[t];
                    }
                    anchor_start[t] = st.anchor_start[t]
                        .saturating_mul(b)
                        .saturating_add(ga[i][t]);
                    anchor_end[t] = st.anchor_end[t].saturating_mul(b).saturating_add(gb[j][t]);
                }
                let child = SectionState {
                    offset,
                    bbox_lo: lo_rel,
                    bbox_hi: hi_rel,
                    volume,
                    surface,
                    cover_start,
                    cover_end,
                    start: a_children[i].1,
                    end: b_children[j].1,
                    level: st.level + 1,
                    anchor_start,
                    anchor_end,
                    anchor_level: st.anchor_level + 1,
                };
                push(
                    child,
                    node_ub,
                    &mut heap,
                    &mut seen,
                    &mut lower,
                    &mut best_node,
                    &mut seq,
                );
            }
        }
    };

    let witness = best_node.map(|(sa, sb, ca, cb, alev)| {
        let ga = engine.state_gates(sa);
        let gb = engine.state_gates(sb);
        Witness {
            p: absolute_point(&ca, &ga.exit, b, alev, d),
            q: absolute_point(&cb, &gb.entrance, b, alev, d),
            value: lower,
        }
    });

    RunOutcome {
        bounds: Bounds {
            lower,
            upper: upper.max(lower),
            depth: deepest as usize,
            certified: certified && upper <= lower * (1.0 + tol),
        },
        witness,
    }
}

// ---------------------------------------------------------------------------
// Public entry points.

fn check_tol(tol: f64) -> Result<(), MeasureError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(MeasureError::BadTolerance(tol))
    }
}

/// Validates and compiles, routing the gate-continuity failures to the
/// unbounded verdict: a system whose children do not hand over at a
/// shared point has a jump, and every measure here diverges on a jump.
fn engine_or_unbounded(sys: &RuleSystem) -> Result<Result<Engine, Bounds>, MeasureError> {
    match validate_system(sys) {
        Ok(gates) => Ok(Ok(Engine::with_gates(sys.clone(), gates))),
        Err(ValidationError::GateMismatch { .. } | ValidationError::GateOutsideCells { .. }) => {
            Ok(Err(Bounds::unbounded()))
        }
        Err(e) => Err(e.into()),
    }
}

/// Certified bracket for the worst-case locality ratio in the given
/// norm: the supremum over point pairs of `dist(p, q)^d` divided by the
/// curve volume between `p` and `q`.  Discontinuous systems score
/// infinity.  `max_depth` caps the refinement level; depths beyond the
/// exact-arithmetic range are clamped.
pub fn locality_bounds(
    sys: &RuleSystem,
    norm: Norm,
    tol: f64,
    max_depth: u32,
) -> Result<Bounds, MeasureError> {
    check_tol(tol)?;
    match engine_or_unbounded(sys)? {
        Ok(engine) => Ok(run_locality(&engine, norm, tol, max_depth).bounds),
        Err(b) => Ok(b),
    }
}

/// Certified bracket for the worst-case surface ratio: the supremum over
/// sections of `(surface / 2d)^(d/(d-1))` divided by the section volume.
pub fn surface_ratio_bounds(
    sys: &RuleSystem,
    tol: f64,
    max_depth: u32,
) -> Result<Bounds, MeasureError> {
    check_tol(tol)?;
    if sys.dim < 2 {
        return Err(MeasureError::DimensionTooSmall(sys.dim));
    }
    match engine_or_unbounded(sys)? {
        Ok(engine) => Ok(run_sections(&engine, SectionGoal::Surface, tol, max_depth).bounds),
        Err(b) => Ok(b),
    }
}

/// Certified bracket for a bounding-box ratio of curve sections: box
/// volume over section volume, or the surface flavor
/// `(surface(box) / 2d)^(d/(d-1))` over section volume.
pub fn bbox_ratio_bounds(
    sys: &RuleSystem,
    which: BoxMeasure,
    tol: f64,
    max_depth: u32,
) -> Result<Bounds, MeasureError> {
    check_tol(tol)?;
    let goal = match which {
        BoxMeasure::Volume => SectionGoal::BoxVolume,
        BoxMeasure::Surface => {
            if sys.dim < 2 {
                return Err(MeasureError::DimensionTooSmall(sys.dim));
            }
            SectionGoal::BoxSurface
        }
    };
    match engine_or_unbounded(sys)? {
        Ok(engine) => Ok(run_sections(&engine, goal, tol, max_depth).bounds),
        Err(b) => Ok(b),
    }
}

/// All six measures under one budget, with the witness pairs that realize
/// the reported lower bounds.
pub fn measure_report(
    sys: &RuleSystem,
    tol: f64,
    max_depth: u32,
) -> Result<MeasureReport, MeasureError> {
    check_tol(tol)?;
    if sys.dim < 2 {
        return Err(MeasureError::DimensionTooSmall(sys.dim));
    }
    let engine = match engine_or_unbounded(sys)? {
        Ok(engine) => engine,
        Err(b) => {
            return Ok(MeasureReport {
                rows: MeasureKind::ALL
                    .iter()
                    .map(|&kind| MeasureRow {
                        kind,
                        bounds: b,
                        witness: None,
                    })
                    .collect(),
            })
        }
    };
    let rows = MeasureKind::ALL
        .iter()
        .map(|&kind| {
            let outcome = match kind {
                MeasureKind::LocalityLinf => run_locality(&engine, Norm::Linf, tol, max_depth),
                MeasureKind::LocalityL2 => run_locality(&engine, Norm::L2, tol, max_depth),
                MeasureKind::LocalityL1 => run_locality(&engine, Norm::L1, tol, max_depth),
                MeasureKind::SurfaceRatio => {
                    run_sections(&engine, SectionGoal::Surface, tol, max_depth)
                }
                MeasureKind::BoxVolume => {
                    run_sections(&engine, SectionGoal::BoxVolume, tol, max_depth)
                }
                MeasureKind::BoxSurface => {
                    run_sections(&engine, SectionGoal::BoxSurface, tol, max_depth)
                }
            };
            MeasureRow {
                kind,
                bounds: outcome.bounds,
                witness: outcome.witness,
            }
        })
        .collect();
    Ok(MeasureReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{group, point_distance, Isometry};
    use crate::rules::{reverse_system, solve_gates, transform_system};
    use num::Zero;

    fn rat_pow(x: &Rat, e: usize) -> Rat {
        let mut out = Rat::one();
        for _ in 0..e {
            out = &out * x;
        }
        out
    }

    #[test]
    fn trivial_line_locality_is_one() {
        let sys = fixtures::trivial1d();
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let b = locality_bounds(&sys, norm, 0.01, 20).unwrap();
            assert!(b.lower <= 1.0 && 1.0 <= b.upper, "{norm}: {b:?}");
            assert!(b.lower > 0.99, "{norm}: {b:?}");
            assert!(b.upper < 1.02, "{norm}: {b:?}");
            assert!(b.certified, "{norm}: {b:?}");
        }
    }

    #[test]
    fn jumpy_system_is_unbounded() {
        let sys = fixtures::zorder2d();
        let b = locality_bounds(&sys, Norm::L2, 0.01, 8).unwrap();
        assert_eq!(b.lower, f64::INFINITY);
        assert_eq!(b.upper, f64::INFINITY);
        assert!(b.certified);
        let s = surface_ratio_bounds(&sys, 0.01, 8).unwrap();
        assert_eq!(s.upper, f64::INFINITY);
        let v = bbox_ratio_bounds(&sys, BoxMeasure::Volume, 0.01, 8).unwrap();
        assert_eq!(v.upper, f64::INFINITY);
        let report = measure_report(&sys, 0.01, 8).unwrap();
        for row in &report.rows {
            assert_eq!(row.bounds.upper, f64::INFINITY, "{:?}", row.kind);
        }
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        let sys = fixtures::hilbert2d();
        assert!(matches!(
            locality_bounds(&sys, Norm::L2, 0.0, 8),
            Err(MeasureError::BadTolerance(_))
        ));
        assert!(matches!(
            locality_bounds(&sys, Norm::L2, -1.0, 8),
            Err(MeasureError::BadTolerance(_))
        ));
    }

    #[test]
    fn surface_measures_reject_one_dimension() {
        let sys = fixtures::trivial1d();
        assert!(matches!(
            surface_ratio_bounds(&sys, 0.01, 8),
            Err(MeasureError::DimensionTooSmall(1))
        ));
        assert!(matches!(
            bbox_ratio_bounds(&sys, BoxMeasure::Surface, 0.01, 8),
            Err(MeasureError::DimensionTooSmall(1))
        ));
    }

    /// Independent computation of the depth-L gate points: descend the
    /// rule tree composing placements directly, without the engine state
    /// machinery the production scan is built on.
    fn naive_gate_points(sys: &RuleSystem, depth: u32) -> Vec<Point> {
        let gates = solve_gates(sys).unwrap();
        struct Ctx {
            corner: Vec<i64>,
            map: Isometry,
            rev: bool,
            rule: usize,
        }
        let mut frontier = vec![Ctx {
            corner: vec![0; sys.dim],
            map: Isometry::identity(sys.dim),
            rev: false,
            rule: sys.start,
        }];
        for _ in 0..depth {
            let mut next = Vec::new();
            for ctx in &frontier {
                let rule = &sys.rules[ctx.rule];
                let mut order: Vec<usize> = (0..rule.children.len()).collect();
                if ctx.rev {
                    order.reverse();
                }
                for slot_idx in order {
                    let slot = &rule.children[slot_idx];
                    let cell = ctx.map.apply_cell(&slot.cell, sys.base);
                    let corner = ctx
                        .corner
                        .iter()
                        .zip(cell.iter())
                        .map(|(&c, &s)| c * sys.base + s)
                        .collect();
                    next.push(Ctx {
                        corner,
                        map: ctx.map.compose(&slot.map),
                        rev: ctx.rev ^ slot.reversed,
                        rule: slot.rule,
                    });
                }
            }
            frontier = next;
        }
        let scale = Rat::from_integer(BigInt::from(sys.base).pow(depth));
        let mut points = Vec::new();
        for ctx in &frontier {
            let pair = &gates[ctx.rule];
            let ent = if ctx.rev { &pair.exit } else { &pair.entrance };
            let local = ctx.map.apply(ent);
            points.push(Point(
                (0..sys.dim)
                    .map(|j| {
                        (Rat::from_integer(BigInt::from(ctx.corner[j])) + &local.0[j]) / &scale
                    })
                    .collect(),
            ));
        }
        let last = frontier.last().unwrap();
        let pair = &gates[last.rule];
        let exit = if last.rev { &pair.entrance } else { &pair.exit };
        let local = last.map.apply(exit);
        points.push(Point(
            (0..sys.dim)
                .map(|j| (Rat::from_integer(BigInt::from(last.corner[j])) + &local.0[j]) / &scale)
                .collect(),
        ));
        points
    }

    /// Naive all-pairs maximum over the exactly positioned points, with
    /// the same once-off conversion the production scan uses.
    fn naive_scan_max(sys: &RuleSystem, norm: Norm, depth: u32) -> f64 {
        let pts = naive_gate_points(sys, depth);
        let d = sys.dim;
        let vol = Rat::from_integer(BigInt::from(sys.base).pow(depth * d as u32));
        let mut best: Option<Rat> = None;
        for k in 0..pts.len() {
            for l in (k + 1)..pts.len() {
                let fold = point_distance(norm, &pts[k], &pts[l]);
                let num = rat_pow(&fold, d);
                let gap = Rat::from_integer(BigInt::from((l - k) as i64)) / &vol;
                // The fold is the squared distance for L2, so the gap is
                // squared to keep the comparison order-faithful.
                let ratio = match norm {
                    Norm::L2 => num / (&gap * &gap),
                    _ => num / gap,
                };
                if best.as_ref().map_or(true, |b| ratio > *b) {
                    best = Some(ratio);
                }
            }
        }
        let best = best.unwrap().to_f64().unwrap();
        let value = match norm {
            Norm::L2 => best.sqrt(),
            _ => best,
        };
        round_down(value)
    }

    #[test]
    fn depth_limited_lower_bound_matches_naive_scan() {
        for depth in [2u32, 3, 4] {
            for norm in [Norm::L1, Norm::L2, Norm::Linf] {
                let sys = fixtures::hilbert2d();
                let mine = locality_bounds(&sys, norm, 1e-9, depth).unwrap();
                let naive = naive_scan_max(&sys, norm, depth);
                assert!(
                    (mine.lower - naive).abs() <= naive * 1e-12,
                    "depth {depth} {norm}: {} vs {naive}",
                    mine.lower
                );
            }
        }
    }

    #[test]
    fn hilbert_locality_brackets_known_values() {
        let sys = fixtures::hilbert2d();
        let cases = [(Norm::Linf, 6.0), (Norm::L2, 6.0), (Norm::L1, 9.0)];
        for (norm, expect) in cases {
            let b = locality_bounds(&sys, norm, 0.005, 24).unwrap();
            assert!(
                b.lower <= expect && expect <= b.upper,
                "{norm}: {b:?} should bracket {expect}"
            );
            assert!(b.certified, "{norm}: {b:?}");
            assert!(b.upper - b.lower <= expect * 0.006, "{norm}: {b:?}");
        }
    }

    #[test]
    fn norm_ordering_holds() {
        let sys = fixtures::hilbert2d();
        let li = locality_bounds(&sys, Norm::Linf, 0.01, 20).unwrap();
        let l2 = locality_bounds(&sys, Norm::L2, 0.01, 20).unwrap();
        let l1 = locality_bounds(&sys, Norm::L1, 0.01, 20).unwrap();
        assert!(li.lower <= l2.upper);
        assert!(l2.lower <= l1.upper);
    }

    #[test]
    fn bounds_are_monotone_in_depth() {
        let sys = fixtures::hilbert2d();
        let shallow = locality_bounds(&sys, Norm::L2, 1e-9, 6).unwrap();
        let deep = locality_bounds(&sys, Norm::L2, 1e-9, 10).unwrap();
        assert!(deep.lower >= shallow.lower);
        assert!(deep.upper <= shallow.upper);
        assert!(shallow.lower <= shallow.upper);
        assert!(deep.lower <= deep.upper);
    }

    #[test]
    fn measures_are_isometry_invariant() {
        let sys = fixtures::hilbert2d();
        let base = locality_bounds(&sys, Norm::L2, 0.01, 14).unwrap();
        for e in [1usize, 3, 5] {
            let g = &group(2).elems[e];
            let turned = transform_system(&sys, g);
            let b = locality_bounds(&turned, Norm::L2, 0.01, 14).unwrap();
            assert!(
                (b.lower - base.lower).abs() <= base.lower * 1e-9,
                "{e}: {b:?} vs {base:?}"
            );
            assert!(
                (b.upper - base.upper).abs() <= base.upper * 1e-9,
                "{e}: {b:?} vs {base:?}"
            );
        }
        let vb = bbox_ratio_bounds(&sys, BoxMeasure::Volume, 0.01, 12).unwrap();
        for e in [2usize, 6] {
            let g = &group(2).elems[e];
            let turned = transform_system(&sys, g);
            let v = bbox_ratio_bounds(&turned, BoxMeasure::Volume, 0.01, 12).unwrap();
            assert!((v.lower - vb.lower).abs() <= vb.lower * 1e-9, "{e}");
            assert!((v.upper - vb.upper).abs() <= vb.upper * 1e-9, "{e}");
        }
    }

    #[test]
    fn measures_are_reversal_invariant() {
        // Traversal order enters the exploration schedule, so the two
        // runs need not match bit for bit; both brackets must still
        // enclose the same true value.
        let sys = fixtures::hilbert2d();
        let rev = reverse_system(&sys);
        for norm in [Norm::L1, Norm::Linf] {
            let a = locality_bounds(&sys, norm, 1e-3, 20).unwrap();
            let b = locality_bounds(&rev, norm, 1e-3, 20).unwrap();
            assert!(
                a.lower.max(b.lower) <= a.upper.min(b.upper) * (1.0 + 1e-12),
                "{norm}"
            );
            assert!(
                (a.lower - b.lower).abs() <= a.lower * 3e-3,
                "{norm}: {a:?} vs {b:?}"
            );
        }
        let a = bbox_ratio_bounds(&sys, BoxMeasure::Volume, 1e-3, 16).unwrap();
        let b = bbox_ratio_bounds(&rev, BoxMeasure::Volume, 1e-3, 16).unwrap();
        assert!(a.lower.max(b.lower) <= a.upper.min(b.upper) * (1.0 + 1e-12));
        assert!((a.lower - b.lower).abs() <= a.lower * 3e-3, "{a:?} vs {b:?}");
    }

    #[test]
    fn hilbert_box_volume_brackets_known_value() {
        let sys = fixtures::hilbert2d();
        let b = bbox_ratio_bounds(&sys, BoxMeasure::Volume, 0.005, 24).unwrap();
        assert!(b.lower <= 2.41 && 2.39 <= b.upper, "{b:?}");
        assert!(b.certified, "{b:?}");
        assert!(b.upper - b.lower < 0.03, "{b:?}");
    }

    #[test]
    fn surface_ratio_at_least_single_cell() {
        let sys = fixtures::hilbert2d();
        let b = surface_ratio_bounds(&sys, 0.02, 16).unwrap();
        // A run of one fully exposed cell scores exactly 1.
        assert!(b.lower >= 0.999, "{b:?}");
        assert!(b.lower <= b.upper, "{b:?}");
    }

    #[test]
    fn report_covers_all_six() {
        let sys = fixtures::hilbert2d();
        let report = measure_report(&sys, 0.02, 14).unwrap();
        assert_eq!(report.rows.len(), 6);
        for row in &report.rows {
            assert!(row.bounds.lower <= row.bounds.upper, "{:?}", row.kind);
            assert!(row.bounds.lower > 0.0, "{:?}", row.kind);
            assert!(row.witness.is_some(), "{:?}", row.kind);
        }
        let li = report.row(MeasureKind::LocalityLinf).bounds;
        let l2 = report.row(MeasureKind::LocalityL2).bounds;
        let l1 = report.row(MeasureKind::LocalityL1).bounds;
        assert!(li.lower <= l2.upper && l2.lower <= l1.upper);
    }

    #[test]
    fn witnesses_lie_in_the_cube() {
        let sys = fixtures::hilbert2d();
        let report = measure_report(&sys, 0.02, 14).unwrap();
        for row in &report.rows {
            let w = row.witness.as_ref().unwrap();
            for p in [&w.p, &w.q] {
                assert!(p.in_unit_cube(), "{:?}: {:?}", row.kind, p);
            }
            assert!(
                w.value <= row.bounds.lower * (1.0 + 1e-12),
                "{:?}",
                row.kind
            );
        }
    }

    /// Whole-cell-section diameter scan and grid-vertex-pair scan at a
    /// fixed depth.  The two compute the same maximum: a section's
    /// diameter is realized between two cell corners, which are grid
    /// vertices whose containing cells lie in the section; conversely a
    /// vertex pair's containing cells span a section at least as wide
    /// and no longer.
    fn diameter_and_vertex_scans(sys: &RuleSystem, norm: Norm, depth: u32) -> (Rat, Rat) {
        let engine = Engine::new(sys.clone()).unwrap();
        let cells = engine.traverse(depth);
        let d = sys.dim;
        let n = cells.len();
        let mut best_diam: Option<Rat> = None;
        for k in 0..n {
            for l in k..n {
                let mut fold = Rat::zero();
                for j in 0..d {
                    let span =
                        Rat::from_integer(BigInt::from((cells[l][j] - cells[k][j]).abs() + 1));
                    match norm {
                        Norm::L1 => fold = fold + span,
                        Norm::L2 => fold = fold + &span * &span,
                        Norm::Linf => fold = fold.max(span),
                    }
                }
                let ratio = rat_pow(&fold, d) / Rat::from_integer(BigInt::from((l - k + 1) as i64));
                if best_diam.as_ref().map_or(true, |b| ratio > *b) {
                    best_diam = Some(ratio);
                }
            }
        }
        let mut incident: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (idx, c) in cells.iter().enumerate() {
            for corner in 0..(1usize << d) {
                let v: Vec<i64> = (0..d).map(|j| c[j] + ((corner >> j) & 1) as i64).collect();
                incident.entry(v).or_default().push(idx);
            }
        }
        let verts: Vec<(&Vec<i64>, &Vec<usize>)> = incident.iter().collect();
        let mut best_vert: Option<Rat> = None;
        for a in 0..verts.len() {
            for z in (a + 1)..verts.len() {
                let (va, ia) = verts[a];
                let (vz, iz) = verts[z];
                let mut gap = usize::MAX;
                for &i in ia {
                    for &j in iz {
                        gap = gap.min(i.abs_diff(j) + 1);
                    }
                }
                let mut fold = Rat::zero();
                for j in 0..d {
                    let diff = Rat::from_integer(BigInt::from((va[j] - vz[j]).abs()));
                    match norm {
                        Norm::L1 => fold = fold + diff,
                        Norm::L2 => fold = fold + &diff * &diff,
                        Norm::Linf => fold = fold.max(diff),
                    }
                }
                let ratio = rat_pow(&fold, d) / Rat::from_integer(BigInt::from(gap as i64));
                if best_vert.as_ref().map_or(true, |b| ratio > *b) {
                    best_vert = Some(ratio);
                }
            }
        }
        (best_diam.unwrap(), best_vert.unwrap())
    }

    #[test]
    fn diameter_sections_equal_vertex_pairs() {
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let sys = fixtures::hilbert2d();
            let (diam, vert) = diameter_and_vertex_scans(&sys, norm, 3);
            assert_eq!(diam, vert, "{norm}");
        }
        let sys = fixtures::peano2d();
        let (diam, vert) = diameter_and_vertex_scans(&sys, Norm::Linf, 2);
        assert_eq!(diam, vert);
    }
}
