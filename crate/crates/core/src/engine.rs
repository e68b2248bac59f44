//! Evaluation of a validated rule system at arbitrary refinement depth.
//!
//! Traversal states are triples (rule, accumulated isometry, direction).
//! Expanding a state yields the `b^d` child cells in visiting order
//! together with their states; iterating expansion enumerates the leaf
//! cells of any depth in curve order.  The engine also computes the
//! closure of all junctions (canonicalized pairs of consecutive leaf
//! cells across every depth), from which continuity and bend properties
//! follow, and compares points by their position along the curve.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use crate::geometry::{group, GroupTable, Point, Rat};
use crate::rules::{
    cell_code, code_cell, validate_system, GatePair, RuleSystem, ValidationError,
};

/// A traversal state: which rule continues here, the isometry accumulated
/// from the root, and whether this subtree is walked backwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub rule: u16,
    pub iso: u16,
    pub rev: bool,
}

#[derive(Clone, Copy, Debug)]
struct SlotC {
    cell: u16,
    map: u16,
    rev: bool,
    rule: u16,
}

/// A canonicalized junction: two states of consecutive leaf cells at some
/// depth and the lattice step between their cells.  The left state's
/// isometry is factored out, so `left.iso == 0` always holds.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Junction {
    pub left: State,
    pub right: State,
    pub delta: Vec<i64>,
}

pub struct Engine {
    pub sys: RuleSystem,
    pub group: &'static GroupTable,
    /// Children per rule.
    pub n: usize,
    /// Solved gates per rule.
    pub gates: Vec<GatePair>,
    slots: Vec<Vec<SlotC>>,
    /// Action of each group element on cell codes of the `b`-fold grid.
    cell_act: Vec<Vec<u16>>,
}

impl Engine {
    /// Validates the system and compiles its lookup tables.
    pub fn new(sys: RuleSystem) -> Result<Engine, ValidationError> {
        let gates = validate_system(&sys)?;
        Ok(Engine::with_gates(sys, gates))
    }

    /// Compiles without re-validating; `gates` must come from
    /// [`validate_system`] or [`crate::rules::solve_gates`].
    pub fn with_gates(sys: RuleSystem, gates: Vec<GatePair>) -> Engine {
        let group = group(sys.dim);
        let slots = sys
            .rules
            .iter()
            .map(|rule| {
                rule.children
                    .iter()
                    .map(|slot| SlotC {
                        cell: cell_code(&slot.cell, sys.base) as u16,
                        map: group.index_of(&slot.map),
                        rev: slot.reversed,
                        rule: slot.rule as u16,
                    })
                    .collect()
            })
            .collect();
        let codes = (sys.base as usize).pow(sys.dim as u32);
        let cell_act = group
            .elems
            .iter()
            .map(|g| {
                (0..codes)
                    .map(|c| {
                        let cell = code_cell(c, sys.base, sys.dim);
                        cell_code(&g.apply_cell(&cell, sys.base), sys.base) as u16
                    })
                    .collect()
            })
            .collect();
        let n = sys.children_per_rule();
        Engine {
            sys,
            group,
            n,
            gates,
            slots,
            cell_act,
        }
    }

    pub fn dim(&self) -> usize {
        self.sys.dim
    }

    pub fn start(&self) -> State {
        State {
            rule: self.sys.start as u16,
            iso: 0,
            rev: false,
        }
    }

    /// Children of a state in visiting order, as (cell code, child state).
    pub fn expand(&self, s: State) -> Vec<(usize, State)> {
        (0..self.n).map(|k| self.child(s, k)).collect()
    }

    /// The `k`-th visited child of a state.
    pub fn child(&self, s: State, k: usize) -> (usize, State) {
        let idx = if s.rev { self.n - 1 - k } else { k };
        let slot = self.slots[s.rule as usize][idx];
        let code = self.cell_act[s.iso as usize][slot.cell as usize] as usize;
        let state = State {
            rule: slot.rule,
            iso: self.group.mult[s.iso as usize][slot.map as usize],
            rev: s.rev ^ slot.rev,
        };
        (code, state)
    }

    /// All states reachable from the start state.
    pub fn reachable_states(&self) -> Vec<State> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        seen.insert(self.start());
        queue.push_back(self.start());
        while let Some(s) = queue.pop_front() {
            out.push(s);
            for (_, t) in self.expand(s) {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        out
    }

    /// Leaf cells of the given depth in curve order, as grid coordinates
    /// in `0..b^depth` per axis.
    pub fn traverse(&self, depth: u32) -> Vec<Vec<i64>> {
        let d = self.dim();
        let mut frontier: Vec<(Vec<i64>, State)> = vec![(vec![0; d], self.start())];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(frontier.len() * self.n);
            for (cell, s) in frontier {
                for (code, t) in self.expand(s) {
                    let sub = code_cell(code, self.sys.base, d);
                    let coords = cell
                        .iter()
                        .zip(sub.iter())
                        .map(|(&c, &s)| c * self.sys.base + s)
                        .collect();
                    next.push((coords, t));
                }
            }
            frontier = next;
        }
        frontier.into_iter().map(|(cell, _)| cell).collect()
    }

    /// Gates of a state in its own unit cube with the state's orientation
    /// and direction applied: where the curve piece enters and leaves.
    pub fn state_gates(&self, s: State) -> GatePair {
        let pair = &self.gates[s.rule as usize];
        let pair = if s.rev { pair.swapped() } else { pair.clone() };
        let g = &self.group.elems[s.iso as usize];
        GatePair {
            entrance: g.apply(&pair.entrance),
            exit: g.apply(&pair.exit),
        }
    }

    /// The chord of a state: exit minus entrance, a nonzero rational
    /// vector when the gates differ.
    pub fn state_chord(&self, s: State) -> Vec<Rat> {
        let gates = self.state_gates(s);
        gates
            .exit
            .0
            .iter()
            .zip(gates.entrance.0.iter())
            .map(|(x, e)| x - e)
            .collect()
    }

    /// Path of the traversal-earliest leaf cell incident to `p`, as child
    /// positions in visiting order.  `p` must lie in the closed unit cube.
    pub fn locate(&self, p: &Point, depth: u32) -> Vec<usize> {
        let mut path = Vec::with_capacity(depth as usize);
        let mut chain = self.locate_start(p);
        for _ in 0..depth {
            let (k, next) = self.locate_step(&chain);
            path.push(k);
            chain = next;
        }
        path
    }

    /// Compares two points by their position along the curve: descend both
    /// earliest-incident-cell chains and order by the first depth at which
    /// the chosen child positions differ.
    pub fn compare_points(&self, p: &Point, q: &Point) -> Ordering {
        if p == q {
            return Ordering::Equal;
        }
        let mut cp = self.locate_start(p);
        let mut cq = self.locate_start(q);
        loop {
            let (kp, np) = self.locate_step(&cp);
            let (kq, nq) = self.locate_step(&cq);
            match kp.cmp(&kq) {
                Ordering::Equal => {
                    cp = np;
                    cq = nq;
                }
                other => return other,
            }
        }
    }

    /// Current cell of an incident chain: the state plus the point in the
    /// cell's local coordinates.
    fn locate_start(&self, p: &Point) -> (State, Point) {
        assert!(
            p.in_unit_cube(),
            "locate expects a point of the closed unit cube"
        );
        (self.start(), p.clone())
    }

    /// Advances one depth: among the children in visiting order, picks the
    /// first whose closed cell contains the point.
    fn locate_step(&self, (s, p): &(State, Point)) -> (usize, (State, Point)) {
        let b = Rat::from_integer(self.sys.base.into());
        for (k, (code, t)) in self.expand(*s).into_iter().enumerate() {
            let cell = code_cell(code, self.sys.base, self.dim());
            let mut local = Vec::with_capacity(self.dim());
            let mut inside = true;
            for (x, &c) in p.0.iter().zip(cell.iter()) {
                let l = x * &b - Rat::from_integer(c.into());
                if l < Rat::from_integer(0.into()) || l > Rat::from_integer(1.into()) {
                    inside = false;
                    break;
                }
                local.push(l);
            }
            if inside {
                return (k, (t, Point(local)));
            }
        }
        unreachable!("point lies in the parent cell, so in some child");
    }

    fn canonical_junction(&self, left: State, right: State, delta: Vec<i64>) -> Junction {
        let h = self.group.inv[left.iso as usize];
        let hg = &self.group.elems[h as usize];
        Junction {
            left: State {
                rule: left.rule,
                iso: 0,
                rev: left.rev,
            },
            right: State {
                rule: right.rule,
                iso: self.group.mult[h as usize][right.iso as usize],
                rev: right.rev,
            },
            delta: hg.apply_offset(&delta),
        }
    }

    /// All junction classes over every depth: seeds are the consecutive
    /// child pairs of every reachable state, and each junction spawns the
    /// next-depth junction at its boundary (last leaf of the left side
    /// meets first leaf of the right side).  Finite because consecutive
    /// cells of a valid traversal stay within one lattice step.
    pub fn junction_closure(&self) -> Vec<Junction> {
        let d = self.dim();
        let mut seen: HashSet<Junction> = HashSet::new();
        let mut queue: VecDeque<Junction> = VecDeque::new();

        let push = |j: Junction, queue: &mut VecDeque<Junction>, seen: &mut HashSet<Junction>| {
            debug_assert!(
                j.delta.iter().all(|&x| x.abs() <= 1),
                "consecutive cells of a valid traversal are lattice neighbors"
            );
            if seen.insert(j.clone()) {
                queue.push_back(j);
            }
        };

        for s in self.reachable_states() {
            let children = self.expand(s);
            for pair in children.windows(2) {
                let (ca, sa) = &pair[0];
                let (cb, sb) = &pair[1];
                let a = code_cell(*ca, self.sys.base, d);
                let b = code_cell(*cb, self.sys.base, d);
                let delta: Vec<i64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
                let j = self.canonical_junction(*sa, *sb, delta);
                push(j, &mut queue, &mut seen);
            }
        }

        let mut out = Vec::new();
        while let Some(j) = queue.pop_front() {
            let (cl, sl) = self.child(j.left, self.n - 1);
            let (cr, sr) = self.child(j.right, 0);
            let cl = code_cell(cl, self.sys.base, d);
            let cr = code_cell(cr, self.sys.base, d);
            let delta: Vec<i64> = j
                .delta
                .iter()
                .zip(cr.iter().zip(cl.iter()))
                .map(|(&dd, (&r, &l))| self.sys.base * dd + r - l)
                .collect();
            let next = self.canonical_junction(sl, sr, delta);
            push(next, &mut queue, &mut seen);
            out.push(j);
        }
        out
    }

    /// Largest squared center distance between the first and third cell of
    /// any three consecutive leaf cells, over all depths, in units of the
    /// cell width.  A straight run of three cells scores 4; a curve that
    /// turns at every cell of every depth scores 2.  Triples within one
    /// parent are read off the reachable states; triples straddling two
    /// parents are read off the junction closure, so the maximum over all
    /// depths needs no explicit deep traversal.
    pub fn max_bend_squared(&self) -> i64 {
        let d = self.dim();
        let b = self.sys.base;
        let sq = |v: &[i64]| v.iter().map(|&x| x * x).sum::<i64>();
        let mut best = 0i64;
        for s in self.reachable_states() {
            let cells: Vec<Vec<i64>> = self
                .expand(s)
                .iter()
                .map(|&(c, _)| code_cell(c, b, d))
                .collect();
            for w in cells.windows(3) {
                let v: Vec<i64> = w[2].iter().zip(w[0].iter()).map(|(x, y)| x - y).collect();
                best = best.max(sq(&v));
            }
        }
        for j in self.junction_closure() {
            let la = code_cell(self.child(j.left, self.n - 2).0, b, d);
            let lb = code_cell(self.child(j.left, self.n - 1).0, b, d);
            let r0 = code_cell(self.child(j.right, 0).0, b, d);
            let r1 = code_cell(self.child(j.right, 1).0, b, d);
            // Triples (la, lb, r0) and (lb, r0, r1) straddle the junction;
            // the right parent's cells live `b * delta` away in fine units.
            let t1: Vec<i64> = (0..d).map(|i| b * j.delta[i] + r0[i] - la[i]).collect();
            let t2: Vec<i64> = (0..d).map(|i| b * j.delta[i] + r1[i] - lb[i]).collect();
            best = best.max(sq(&t1)).max(sq(&t2));
        }
        best
    }

    /// Continuity level: `dim - 1` when consecutive cells always share a
    /// facet, down to 0 when some pairs only share a corner.
    pub fn continuity_level(&self) -> usize {
        let worst = self
            .junction_closure()
            .iter()
            .map(|j| j.delta.iter().map(|&x| x.abs()).sum::<i64>() as usize)
            .max()
            .expect("a valid system has at least one junction");
        self.dim() - worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::rat;

    fn engine(sys: RuleSystem) -> Engine {
        Engine::new(sys).unwrap()
    }

    fn adjacent_steps(cells: &[Vec<i64>]) -> Vec<i64> {
        cells
            .windows(2)
            .map(|w| {
                w[1].iter()
                    .zip(w[0].iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn trivial_traverse() {
        let e = engine(fixtures::trivial1d());
        let cells = e.traverse(3);
        let expect: Vec<Vec<i64>> = (0..8).map(|i| vec![i]).collect();
        assert_eq!(cells, expect);
    }

    #[test]
    fn hilbert_traverse_depth2() {
        let e = engine(fixtures::hilbert2d());
        let cells = e.traverse(2);
        assert_eq!(cells.len(), 16);
        assert_eq!(cells[0], vec![0, 0]);
        assert_eq!(cells[15], vec![3, 0]);
        assert!(adjacent_steps(&cells).iter().all(|&s| s == 1));
        let mut sorted = cells.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
    }

    #[test]
    fn peano_traverse_depth2() {
        let e = engine(fixtures::peano2d());
        let cells = e.traverse(2);
        assert_eq!(cells.len(), 81);
        assert_eq!(cells[0], vec![0, 0]);
        assert_eq!(cells[80], vec![8, 8]);
        assert!(adjacent_steps(&cells).iter().all(|&s| s == 1));
    }

    #[test]
    fn locate_corners() {
        let e = engine(fixtures::hilbert2d());
        let origin = Point(vec![rat(0, 1), rat(0, 1)]);
        assert_eq!(e.locate(&origin, 4), vec![0, 0, 0, 0]);
        let exit = Point(vec![rat(1, 1), rat(0, 1)]);
        assert_eq!(e.locate(&exit, 4), vec![3, 3, 3, 3]);
    }

    #[test]
    fn compare_points_matches_traversal_order() {
        let e = engine(fixtures::hilbert2d());
        let cells = e.traverse(3);
        let centers: Vec<Point> = cells
            .iter()
            .map(|c| Point(c.iter().map(|&x| rat(2 * x + 1, 16)).collect()))
            .collect();
        for i in (0..centers.len()).step_by(7) {
            for j in (0..centers.len()).step_by(11) {
                assert_eq!(
                    e.compare_points(&centers[i], &centers[j]),
                    i.cmp(&j),
                    "centers {i} vs {j}"
                );
            }
        }
    }

    #[test]
    fn compare_points_shared_corner() {
        let e = engine(fixtures::hilbert2d());
        let p = Point(vec![rat(0, 1), rat(0, 1)]);
        let q = Point(vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(e.compare_points(&p, &q), Ordering::Less);
        assert_eq!(e.compare_points(&q, &p), Ordering::Greater);
        assert_eq!(e.compare_points(&q, &q), Ordering::Equal);
    }

    #[test]
    fn reversed_system_traverses_backwards() {
        for sys in [fixtures::hilbert2d(), fixtures::peano2d()] {
            let fwd = engine(sys.clone());
            let bwd = engine(crate::rules::reverse_system(&sys));
            for depth in 1..=3 {
                let mut cells = fwd.traverse(depth);
                cells.reverse();
                assert_eq!(bwd.traverse(depth), cells, "depth {depth}");
            }
        }
    }

    #[test]
    fn hilbert_junctions_face_continuous() {
        let e = engine(fixtures::hilbert2d());
        let closure = e.junction_closure();
        assert!(!closure.is_empty());
        for j in &closure {
            assert_eq!(j.left.iso, 0);
            let l1: i64 = j.delta.iter().map(|&x| x.abs()).sum();
            assert_eq!(l1, 1, "junction {j:?}");
        }
        assert_eq!(e.continuity_level(), 1);
    }

    #[test]
    fn peano_face_continuous() {
        let e = engine(fixtures::peano2d());
        assert_eq!(e.continuity_level(), 1);
    }

    #[test]
    fn straight_runs_dominate_bend() {
        // All three fixtures contain a straight run of three cells at some
        // depth, so the largest center-to-center distance squared is 4.
        for sys in [
            fixtures::trivial1d(),
            fixtures::hilbert2d(),
            fixtures::peano2d(),
        ] {
            assert_eq!(engine(sys).max_bend_squared(), 4);
        }
    }

    #[test]
    fn state_chords_are_unit_steps() {
        let e = engine(fixtures::hilbert2d());
        for s in e.reachable_states() {
            let chord = e.state_chord(s);
            let nonzero = chord.iter().filter(|c| !num::Zero::is_zero(*c)).count();
            assert_eq!(nonzero, 1);
        }
    }
}
