//! Connection schemes: the orders in which a self-similar traversal can
//! thread the `2^d` half-size cells of the unit cube between two boundary
//! gates, entering and leaving every cell at scaled copies of those gates.

use std::collections::BTreeSet;

use crate::geometry::{group, rat, rat_int, Isometry, Point};
use crate::rules::code_cell;

/// Entrance and exit gate of a recursively defined curve, as exact points on
/// the boundary of the unit cube.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateConfig {
    pub letter: char,
    pub entrance: Point,
    pub exit: Point,
}

impl GateConfig {
    pub fn dim(&self) -> usize {
        self.entrance.dim()
    }
}

fn pt(coords: &[(i64, i64)]) -> Point {
    Point(coords.iter().map(|&(n, d)| rat(n, d)).collect())
}

/// The gate placements that admit complete connection schemes, one
/// representative per class modulo isometry and gate swapping.
///
/// In three dimensions there are six: two pairs of vertices (adjacent along
/// an edge, or diagonal across a face), a vertex paired with an edge
/// midpoint, a vertex paired with a face center, and two placements with
/// gates at thirds of edges or faces.  In two dimensions only a pair of
/// adjacent corners works.  `admissible_gate_configs` re-derives this list
/// by exhaustive search over a candidate lattice.
pub fn standard_configs(dim: usize) -> Vec<GateConfig> {
    let cfg = |letter, entrance: &[(i64, i64)], exit: &[(i64, i64)]| GateConfig {
        letter,
        entrance: pt(entrance),
        exit: pt(exit),
    };
    match dim {
        2 => vec![cfg('A', &[(0, 1), (0, 1)], &[(1, 1), (0, 1)])],
        3 => vec![
            cfg('A', &[(0, 1), (0, 1), (0, 1)], &[(1, 1), (0, 1), (0, 1)]),
            cfg('B', &[(0, 1), (0, 1), (0, 1)], &[(0, 1), (1, 1), (1, 1)]),
            cfg('C', &[(0, 1), (0, 1), (0, 1)], &[(1, 1), (1, 2), (0, 1)]),
            cfg('D', &[(0, 1), (0, 1), (0, 1)], &[(1, 1), (1, 2), (1, 2)]),
            cfg('E', &[(1, 3), (0, 1), (0, 1)], &[(1, 1), (1, 3), (1, 1)]),
            cfg('F', &[(0, 1), (1, 3), (1, 3)], &[(2, 3), (1, 3), (0, 1)]),
        ],
        _ => panic!("standard gate configs are tabulated for dimensions 2 and 3"),
    }
}

/// One step of a connection scheme: the cell visited, and the points where
/// the traversal enters and leaves it, in unit-cube coordinates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SchemeSlot {
    pub cell: Vec<i64>,
    pub entrance: Point,
    pub exit: Point,
}

/// A complete connection scheme: a Hamiltonian order on the `2^d` cells with
/// matched gates, canonicalized modulo the isometries fixing the gate pair
/// and modulo reversal combined with a gate-swapping isometry.
#[derive(Clone, Debug)]
pub struct ConnectionScheme {
    pub config: GateConfig,
    pub slots: Vec<SchemeSlot>,
    /// Position in the sorted enumeration for this config, counted from 0.
    pub id: u32,
    /// Whether some gate-swapping isometry maps the reversed scheme back to
    /// itself, so that reversal is a symmetry of the scheme.
    pub symmetric: bool,
}

impl ConnectionScheme {
    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    /// Largest L1 distance between consecutive cells.  For schemes whose
    /// gates are cube vertices this already decides continuity: every pair
    /// of consecutive cells at every depth meets in a face of dimension
    /// `d` minus this value.
    pub fn max_step_l1(&self) -> i64 {
        self.slots
            .windows(2)
            .map(|w| {
                w[1].cell
                    .iter()
                    .zip(w[0].cell.iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum()
            })
            .max()
            .unwrap_or(0)
    }

    /// Name of the scheme, e.g. `B86`.
    pub fn name(&self) -> String {
        format!("{}{}", self.config.letter, self.id)
    }

    /// Gate-swapping isometries that carry the reversed slot sequence back
    /// onto the slot sequence.  Non-empty exactly for symmetric schemes;
    /// whether the witnesses preserve orientation (a half-turn) or reverse
    /// it (a mirror) decides how reversing a single copy interacts with the
    /// curve's own reversal symmetry.
    pub fn reversal_symmetries(&self) -> Vec<Isometry> {
        let rev = reverse_slots(&self.slots);
        gate_swappers(&self.config)
            .into_iter()
            .filter(|k| transform_slots(&rev, k) == self.slots)
            .collect()
    }
}

/// Maps `p` into the local coordinates of `cell` (side 1/2), or `None` when
/// `p` lies outside the closed cell.
fn to_local(p: &Point, cell: &[i64]) -> Option<Point> {
    let mut out = Vec::with_capacity(p.dim());
    for (x, &c) in p.0.iter().zip(cell) {
        let v = x * rat_int(2) - rat_int(c);
        if v < rat_int(0) || v > rat_int(1) {
            return None;
        }
        out.push(v);
    }
    Some(Point(out))
}

fn from_local(p: &Point, cell: &[i64]) -> Point {
    Point(
        p.0.iter()
            .zip(cell)
            .map(|(x, &c)| (x + rat_int(c)) * rat(1, 2))
            .collect(),
    )
}

/// All points where a copy of the curve entering `cell` at `local_entrance`
/// can leave it: images of the opposite gate under every isometry that
/// carries one gate of `config` onto the entrance, in either direction.
fn local_exits(config: &GateConfig, local_entrance: &Point, isos: &[Isometry]) -> Vec<Point> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for g in isos {
        for (from, to) in [
            (&config.entrance, &config.exit),
            (&config.exit, &config.entrance),
        ] {
            if &g.apply(from) == local_entrance {
                let x = g.apply(to);
                if seen.insert(x.clone()) {
                    out.push(x);
                }
            }
        }
    }
    out
}

fn search(
    config: &GateConfig,
    isos: &[Isometry],
    used: &mut [bool],
    slots: &mut Vec<SchemeSlot>,
    entrance: &Point,
    found: &mut dyn FnMut(&[SchemeSlot]) -> bool,
) -> bool {
    let dim = config.dim();
    let n = used.len();
    for code in 0..n {
        if used[code] {
            continue;
        }
        let cell = code_cell(code, 2, dim);
        let Some(local) = to_local(entrance, &cell) else {
            continue;
        };
        used[code] = true;
        for exit_local in local_exits(config, &local, isos) {
            let exit = from_local(&exit_local, &cell);
            let slot = SchemeSlot {
                cell: cell.clone(),
                entrance: entrance.clone(),
                exit: exit.clone(),
            };
            if slots.len() == n - 1 {
                if exit == config.exit {
                    slots.push(slot);
                    let stop = found(slots);
                    slots.pop();
                    if stop {
                        used[code] = false;
                        return true;
                    }
                }
            } else {
                let feasible = (0..n)
                    .any(|c| !used[c] && to_local(&exit, &code_cell(c, 2, dim)).is_some());
                if feasible {
                    slots.push(slot);
                    let stop = search(config, isos, used, slots, &exit, found);
                    slots.pop();
                    if stop {
                        used[code] = false;
                        return true;
                    }
                }
            }
        }
        used[code] = false;
    }
    false
}

/// Runs the completion search for `config`, calling `found` with every raw
/// slot sequence.  `found` returns `true` to stop early.
fn complete(config: &GateConfig, found: &mut dyn FnMut(&[SchemeSlot]) -> bool) {
    let dim = config.dim();
    let isos = &group(dim).elems;
    let mut used = vec![false; 1 << dim];
    let mut slots = Vec::with_capacity(1 << dim);
    search(config, isos, &mut used, &mut slots, &config.entrance.clone(), found);
}

/// Whether at least one complete connection scheme exists for `config`.
pub fn any_scheme_exists(config: &GateConfig) -> bool {
    let mut found = false;
    complete(config, &mut |_| {
        found = true;
        true
    });
    found
}

/// Isometries that fix both gates of `config` pointwise.
pub fn gate_stabilizer(config: &GateConfig) -> Vec<Isometry> {
    group(config.dim())
        .elems
        .iter()
        .filter(|g| g.apply(&config.entrance) == config.entrance && g.apply(&config.exit) == config.exit)
        .cloned()
        .collect()
}

/// Isometries that exchange the two gates of `config`.
pub fn gate_swappers(config: &GateConfig) -> Vec<Isometry> {
    group(config.dim())
        .elems
        .iter()
        .filter(|g| g.apply(&config.entrance) == config.exit && g.apply(&config.exit) == config.entrance)
        .cloned()
        .collect()
}

type SlotsKey = Vec<SchemeSlot>;

fn transform_slots(slots: &[SchemeSlot], k: &Isometry) -> Vec<SchemeSlot> {
    slots
        .iter()
        .map(|s| SchemeSlot {
            cell: k.apply_cell(&s.cell, 2),
            entrance: k.apply(&s.entrance),
            exit: k.apply(&s.exit),
        })
        .collect()
}

fn reverse_slots(slots: &[SchemeSlot]) -> Vec<SchemeSlot> {
    slots
        .iter()
        .rev()
        .map(|s| SchemeSlot {
            cell: s.cell.clone(),
            entrance: s.exit.clone(),
            exit: s.entrance.clone(),
        })
        .collect()
}

fn orbit_min(slots: &[SchemeSlot], stab: &[Isometry], swap: &[Isometry]) -> SlotsKey {
    let mut best: Option<SlotsKey> = None;
    let mut consider = |cand: SlotsKey| {
        if best.as_ref().map_or(true, |b| cand < *b) {
            best = Some(cand);
        }
    };
    for k in stab {
        consider(transform_slots(slots, k));
    }
    let rev = reverse_slots(slots);
    for k in swap {
        consider(transform_slots(&rev, k));
    }
    best.expect("stabilizer contains the identity")
}

/// Enumerates all connection schemes for `config`, deduplicated modulo the
/// gate-fixing isometries and modulo reversal combined with a gate-swapping
/// isometry.  Schemes are sorted by their canonical slot sequence and
/// numbered from 0.
pub fn enumerate_schemes(config: &GateConfig) -> Vec<ConnectionScheme> {
    let stab = gate_stabilizer(config);
    let swap = gate_swappers(config);
    let mut reps: BTreeSet<SlotsKey> = BTreeSet::new();
    complete(config, &mut |slots| {
        reps.insert(orbit_min(slots, &stab, &swap));
        false
    });
    reps.into_iter()
        .enumerate()
        .map(|(i, slots)| {
            let mut scheme = ConnectionScheme {
                config: config.clone(),
                slots,
                id: i as u32,
                symmetric: false,
            };
            scheme.symmetric = !scheme.reversal_symmetries().is_empty();
            scheme
        })
        .collect()
}

/// One way to place a copy of the curve in a scheme slot: the isometry
/// carrying the overall gates onto the slot's gates, whether the copy runs
/// backwards, and whether the map reverses orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotCandidate {
    pub iso: u16,
    pub reversed: bool,
    pub reflected: bool,
}

/// All candidate placements for one slot.  Vertex-pair configs admit four
/// (both directions, both orientations); a vertex paired with a face center
/// admits two (the direction is forced, the orientation free); the remaining
/// configs admit exactly one.
pub fn slot_candidates(config: &GateConfig, slot: &SchemeSlot) -> Vec<SlotCandidate> {
    let table = group(config.dim());
    let le = to_local(&slot.entrance, &slot.cell).expect("slot entrance lies in its cell");
    let lx = to_local(&slot.exit, &slot.cell).expect("slot exit lies in its cell");
    let mut out = Vec::new();
    for (gi, g) in table.elems.iter().enumerate() {
        let img_e = g.apply(&config.entrance);
        let img_x = g.apply(&config.exit);
        let reflected = !g.orientation_preserving();
        if img_e == le && img_x == lx {
            out.push(SlotCandidate {
                iso: gi as u16,
                reversed: false,
                reflected,
            });
        }
        if img_x == le && img_e == lx {
            out.push(SlotCandidate {
                iso: gi as u16,
                reversed: true,
                reflected,
            });
        }
    }
    out
}

/// Matches a gate pair against the standard configs modulo isometry and
/// swapping, returning the config letter.
pub fn classify_gates(entrance: &Point, exit: &Point) -> Option<char> {
    let dim = entrance.dim();
    let isos = &group(dim).elems;
    for config in standard_configs(dim) {
        for g in isos {
            let e = g.apply(&config.entrance);
            let x = g.apply(&config.exit);
            if (&e == entrance && &x == exit) || (&e == exit && &x == entrance) {
                return Some(config.letter);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(dim: usize) -> Vec<(char, usize, usize)> {
        standard_configs(dim)
            .iter()
            .map(|cfg| {
                let schemes = enumerate_schemes(cfg);
                let sym = schemes.iter().filter(|s| s.symmetric).count();
                (cfg.letter, schemes.len(), sym)
            })
            .collect()
    }

    #[test]
    fn three_dimensional_scheme_counts() {
        assert_eq!(
            counts(3),
            vec![
                ('A', 29, 10),
                ('B', 149, 18),
                ('C', 2758, 0),
                ('D', 4, 0),
                ('E', 16, 0),
                ('F', 1, 0),
            ]
        );
    }

    #[test]
    fn two_dimensional_schemes() {
        let list = counts(2);
        assert_eq!(list, vec![('A', 1, 1)]);
    }

    #[test]
    fn diagonal_gates_admit_no_scheme() {
        let opposite3 = GateConfig {
            letter: '?',
            entrance: pt(&[(0, 1), (0, 1), (0, 1)]),
            exit: pt(&[(1, 1), (1, 1), (1, 1)]),
        };
        assert!(!any_scheme_exists(&opposite3));
        let opposite2 = GateConfig {
            letter: '?',
            entrance: pt(&[(0, 1), (0, 1)]),
            exit: pt(&[(1, 1), (1, 1)]),
        };
        assert!(!any_scheme_exists(&opposite2));
    }

    #[test]
    fn slot_candidate_structure() {
        let configs = standard_configs(3);
        for cfg in &configs {
            let schemes = enumerate_schemes(cfg);
            let scheme = &schemes[0];
            for slot in &scheme.slots {
                let cands = slot_candidates(cfg, slot);
                match cfg.letter {
                    'A' | 'B' => {
                        assert_eq!(cands.len(), 4, "{}", cfg.letter);
                        let mut kinds: Vec<(bool, bool)> =
                            cands.iter().map(|c| (c.reversed, c.reflected)).collect();
                        kinds.sort();
                        assert_eq!(
                            kinds,
                            vec![(false, false), (false, true), (true, false), (true, true)]
                        );
                    }
                    'D' => {
                        assert_eq!(cands.len(), 2);
                        assert_eq!(cands[0].reversed, cands[1].reversed);
                        assert_ne!(cands[0].reflected, cands[1].reflected);
                    }
                    _ => assert_eq!(cands.len(), 1, "{}", cfg.letter),
                }
            }
        }
    }

    #[test]
    fn face_center_gates_force_alternating_directions() {
        let cfg = standard_configs(3).into_iter().find(|c| c.letter == 'D').unwrap();
        for scheme in enumerate_schemes(&cfg) {
            let dirs: Vec<bool> = scheme
                .slots
                .iter()
                .map(|slot| slot_candidates(&cfg, slot)[0].reversed)
                .collect();
            let expect: Vec<bool> = (0..8).map(|i| i % 2 == 1).collect();
            assert_eq!(dirs, expect);
        }
    }

    #[test]
    fn classify_standard_gate_images() {
        for cfg in standard_configs(3) {
            assert_eq!(classify_gates(&cfg.entrance, &cfg.exit), Some(cfg.letter));
            assert_eq!(classify_gates(&cfg.exit, &cfg.entrance), Some(cfg.letter));
        }
        let p = pt(&[(0, 1), (0, 1), (0, 1)]);
        let q = pt(&[(1, 1), (1, 1), (1, 1)]);
        assert_eq!(classify_gates(&p, &q), None);
    }
}
