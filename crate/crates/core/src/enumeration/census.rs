//! Whole-family surveys: the continuity and flag census over every
//! enumerated curve, and the searches for curves with exceptional bend,
//! cut or facet behavior.  Scheme-level invariants prune most of the
//! family before any curve is instantiated, and a depth-two expansion
//! rejects most of the rest before the certified closure checks run.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::engine::Engine;
use crate::geometry::boundary_class;
use crate::properties::{
    binary_decomposition, cells_bisect, downward_compatible_faces, structural_flags, Face,
};
use crate::rules::{CurveName, RuleSystem};

use super::curves::{build_mono_curve, catalog, curve_labels, CurveBuilder};
use super::schemes::ConnectionScheme;

/// Curve counts keyed by (face-continuous, vertex-gated, order-preserving).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Census {
    pub counts: BTreeMap<(bool, bool, bool), u64>,
    pub total: u64,
}

impl Census {
    fn add(&mut self, key: (bool, bool, bool), n: u64) {
        if n > 0 {
            *self.counts.entry(key).or_insert(0) += n;
            self.total += n;
        }
    }

    pub fn get(&self, fc: bool, vg: bool, op: bool) -> u64 {
        self.counts.get(&(fc, vg, op)).copied().unwrap_or(0)
    }
}

/// Whether both gates of a scheme's configuration sit at cube corners.
fn vertex_gated(scheme: &ConnectionScheme) -> bool {
    let vertex = |p| boundary_class(p).is_some_and(|c| c.is_vertex());
    vertex(&scheme.config.entrance) && vertex(&scheme.config.exit)
}

/// The continuity/flag census over the whole catalog of a dimension.
///
/// Vertex-gated schemes are counted arithmetically: their junction offsets
/// repeat the scheme's own cell steps at every depth, so face continuity
/// is a property of the scheme, and a curve is order-preserving exactly
/// when one of its labelings has no reversed octant, i.e. when its
/// canonical label has a zero reversal mask.  The few curves of the other
/// schemes are classified one by one.
pub fn property_census(dim: usize) -> Census {
    let mut census = Census::default();
    for scheme in catalog(dim).schemes() {
        let labels = curve_labels(scheme);
        if vertex_gated(scheme) {
            let fc = scheme.max_step_l1() == 1;
            let op = labels.iter().filter(|&&(rev, _)| rev == 0).count() as u64;
            census.add((fc, true, true), op);
            census.add((fc, true, false), labels.len() as u64 - op);
        } else {
            let rows: Vec<(bool, bool)> = labels
                .par_iter()
                .map(|&(rev, refl)| {
                    let sys = build_mono_curve(scheme, rev, refl).unwrap();
                    let engine = Engine::new(sys.clone()).unwrap();
                    let (op, _, _) = structural_flags(&sys);
                    (engine.continuity_level() == dim - 1, op)
                })
                .collect();
            for (fc, op) in rows {
                census.add((fc, false, op), 1);
            }
        }
    }
    census
}

/// The depth-two cell sequence of a single-rule system, flattened.
fn depth2_cells(sys: &RuleSystem, buf: &mut Vec<i64>) {
    let rule = &sys.rules[sys.start];
    let n = rule.children.len();
    buf.clear();
    for slot in &rule.children {
        for k in 0..n {
            let j = if slot.reversed { n - 1 - k } else { k };
            let c = slot.map.apply_cell(&rule.children[j].cell, sys.base);
            for (a, v) in c.iter().enumerate() {
                buf.push(sys.base * slot.cell[a] + v);
            }
        }
    }
}

/// Whether some triple of the flattened sequence spans more than `bound_sq`.
fn triple_exceeds(buf: &[i64], d: usize, bound_sq: i64) -> bool {
    let count = buf.len() / d;
    (0..count.saturating_sub(2)).any(|i| {
        let sq: i64 = (0..d)
            .map(|a| {
                let v = buf[(i + 2) * d + a] - buf[i * d + a];
                v * v
            })
            .sum();
        sq > bound_sq
    })
}

fn sorted(mut names: Vec<CurveName>) -> Vec<CurveName> {
    names.sort_by_key(|n| (n.letter, n.scheme, n.rev_mask, n.refl_mask));
    names
}

fn name_of(scheme: &ConnectionScheme, rev: u8, refl: u8) -> CurveName {
    CurveName {
        letter: scheme.config.letter,
        scheme: scheme.id,
        rev_mask: rev,
        refl_mask: refl,
    }
}

/// All curves whose sharpest-triple statistic stays within `bound_sq`:
/// no three consecutive cells at any depth span more than the bound.
/// Depth-one triples depend only on the scheme, pruning whole schemes;
/// depth-two triples prune labelings before the closure check.
pub fn curves_with_max_bend_at_most(dim: usize, bound_sq: i64) -> Vec<CurveName> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    for scheme in catalog(dim).schemes() {
        let worst = scheme
            .slots
            .windows(3)
            .map(|w| {
                w[2].cell
                    .iter()
                    .zip(w[0].cell.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<i64>()
            })
            .max()
            .unwrap_or(0);
        if worst > bound_sq {
            continue;
        }
        let builder = CurveBuilder::new(scheme);
        for (rev, refl) in curve_labels(scheme) {
            let sys = builder.build(rev, refl).unwrap();
            depth2_cells(&sys, &mut buf);
            if triple_exceeds(&buf, dim, bound_sq) {
                continue;
            }
            let engine = Engine::new(sys).unwrap();
            if engine.max_bend_squared() <= bound_sq {
                out.push(name_of(scheme, rev, refl));
            }
        }
    }
    sorted(out)
}

/// All binary-decomposable curves.  A decomposition needs the cell order
/// to halve recursively; at depth one that depends only on the scheme,
/// pruning whole schemes before the solver runs on each labeling.
pub fn binary_decomposable_curves(dim: usize) -> Vec<CurveName> {
    let mut out = Vec::new();
    for scheme in catalog(dim).schemes() {
        let cells: Vec<Vec<i64>> = scheme.slots.iter().map(|s| s.cell.clone()).collect();
        if !cells_bisect(&cells, dim) {
            continue;
        }
        let builder = CurveBuilder::new(scheme);
        for (rev, refl) in curve_labels(scheme) {
            let sys = builder.build(rev, refl).unwrap();
            if binary_decomposition(&sys).is_some() {
                out.push(name_of(scheme, rev, refl));
            }
        }
    }
    sorted(out)
}

/// Whether the depth-two cells on one facet layer are visited along a
/// unit-step path that keeps each run of `2^(d-1)` inside one quadrant,
/// the order any base-2 recursive curve on the facet must follow.
fn face_trace_recursive(buf: &[i64], d: usize, axis: usize, side: bool) -> bool {
    let layer = if side { 3 } else { 0 };
    let count = buf.len() / d;
    let span = 1usize << (d - 1);
    let mut kept = 0usize;
    let mut prev = 0usize;
    let mut block = 0usize;
    for i in 0..count {
        if buf[i * d + axis] != layer {
            continue;
        }
        if kept == 0 || kept % span == 0 {
            block = i;
        } else if (0..d).any(|a| buf[i * d + a] / 2 != buf[block * d + a] / 2) {
            return false;
        }
        if kept > 0 {
            let l1: i64 = (0..d)
                .map(|a| (buf[i * d + a] - buf[prev * d + a]).abs())
                .sum();
            if l1 != 1 {
                return false;
            }
        }
        prev = i;
        kept += 1;
    }
    kept > 0
}

/// All downward-compatible curves with their compatible facets.  A curve
/// qualifies when every coordinate axis has an orthogonal facet whose
/// restriction is a curve of the family one dimension down; the returned
/// faces list every facet that carries one, which can be more than one per
/// axis.  The trace on a compatible facet visits the facet's cells along a
/// unit-step path; at depth one that depends only on the scheme, and depth
/// two prunes labelings before the bisimulation check.
pub fn downward_compatible_curves(dim: usize) -> Vec<(CurveName, Vec<Face>)> {
    let mut out: Vec<(CurveName, Vec<Face>)> = Vec::new();
    let mut buf = Vec::new();
    for scheme in catalog(dim).schemes() {
        if !(2..=3).contains(&dim) || !has_connected_face_orders(scheme, dim) {
            continue;
        }
        let builder = CurveBuilder::new(scheme);
        for (rev, refl) in curve_labels(scheme) {
            let sys = builder.build(rev, refl).unwrap();
            depth2_cells(&sys, &mut buf);
            let plausible = (0..dim).all(|axis| {
                [false, true]
                    .into_iter()
                    .any(|side| face_trace_recursive(&buf, dim, axis, side))
            });
            if !plausible {
                continue;
            }
            let faces = downward_compatible_faces(&sys);
            let covered = (0..dim).all(|axis| faces.iter().any(|f| f.axis == axis));
            if covered {
                out.push((name_of(scheme, rev, refl), faces));
            }
        }
    }
    out.sort_by_key(|(n, _)| (n.letter, n.scheme, n.rev_mask, n.refl_mask));
    out
}

/// Whether every axis has a facet whose cells are visited along a
/// unit-step path at depth one.
fn has_connected_face_orders(scheme: &ConnectionScheme, dim: usize) -> bool {
    (0..dim).all(|axis| {
        [0i64, 1].into_iter().any(|layer| {
            let cells: Vec<&Vec<i64>> = scheme
                .slots
                .iter()
                .filter(|s| s.cell[axis] == layer)
                .map(|s| &s.cell)
                .collect();
            cells.windows(2).all(|w| {
                let l1: i64 = w[1]
                    .iter()
                    .zip(w[0].iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                l1 == 1
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_of_the_plane() {
        // One curve: face-continuous, vertex-gated, order-preserving.
        let census = property_census(2);
        assert_eq!(census.total, 1);
        assert_eq!(census.get(true, true, true), 1);
    }

    #[test]
    fn plane_specials() {
        assert_eq!(binary_decomposable_curves(2).len(), 1);
        let dc = downward_compatible_curves(2);
        assert_eq!(dc.len(), 1);
        assert_eq!(dc[0].1.len(), 4);
        // The plane curve runs straight somewhere, so nothing stays at
        // right angles throughout.
        assert!(curves_with_max_bend_at_most(2, 2).is_empty());
        assert_eq!(curves_with_max_bend_at_most(2, 4).len(), 1);
    }
}
