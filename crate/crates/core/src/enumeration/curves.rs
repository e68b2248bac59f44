//! Building the curves a connection scheme generates, naming them by mask
//! pairs, and counting them without duplicates.
//!
//! A curve is fixed by choosing, for every slot of its scheme, one of the
//! slot's candidate placements.  The choice is encoded in two bit masks
//! indexed by slot (bit 0 is the first slot): the reversal mask says which
//! copies run backwards, the reflection mask says which copies are placed by
//! an orientation-reversing map.  Symmetric schemes generate some labelings
//! twice (the whole-curve reversal re-lands on the same scheme), and curves
//! that equal their own reversal absorb per-slot trades between reversing a
//! copy and composing it with that reversal symmetry; the canonical label of
//! a curve is the smallest label that generates it.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::geometry::{group, Isometry};
use crate::rules::{canonical_form, ChildSlot, CurveName, Rule, RuleSystem};

use super::schemes::{
    enumerate_schemes, slot_candidates, standard_configs, ConnectionScheme, GateConfig,
    SlotCandidate,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("slot {slot} has no placement with reversed={reversed}, reflected={reflected}")]
    NoPlacement {
        slot: usize,
        reversed: bool,
        reflected: bool,
    },
    #[error("mask has bit {slot} set but the scheme only has {slots} slots")]
    MaskTooWide { slot: usize, slots: usize },
}

fn bit(mask: u8, i: usize) -> bool {
    (mask >> i) & 1 == 1
}

/// Reverses the low `n` bits of `mask`.
fn bit_reverse(mask: u8, n: usize) -> u8 {
    let mut out = 0u8;
    for i in 0..n {
        if bit(mask, i) {
            out |= 1 << (n - 1 - i);
        }
    }
    out
}

/// Builds the single-rule system for one labeling of `scheme`.  Bit `i` of
/// each mask selects the direction and orientation of the copy in slot `i`;
/// the combination must be one of the slot's candidate placements.
pub fn build_mono_curve(
    scheme: &ConnectionScheme,
    rev_mask: u8,
    refl_mask: u8,
) -> Result<RuleSystem, BuildError> {
    CurveBuilder::new(scheme).build(rev_mask, refl_mask)
}

/// Builds many labelings of one scheme, computing the slot placements once
/// instead of once per curve.
pub struct CurveBuilder<'a> {
    scheme: &'a ConnectionScheme,
    candidates: Vec<Vec<SlotCandidate>>,
}

impl<'a> CurveBuilder<'a> {
    pub fn new(scheme: &'a ConnectionScheme) -> CurveBuilder<'a> {
        CurveBuilder {
            scheme,
            candidates: scheme_candidates(scheme),
        }
    }

    pub fn build(&self, rev_mask: u8, refl_mask: u8) -> Result<RuleSystem, BuildError> {
        let scheme = self.scheme;
        let n = scheme.slots.len();
        for mask in [rev_mask, refl_mask] {
            if n < 8 && (mask >> n) != 0 {
                let slot = (8 - (mask >> n).leading_zeros() as usize) + n - 1;
                return Err(BuildError::MaskTooWide { slot, slots: n });
            }
        }
        let table = group(scheme.dim());
        let mut children = Vec::with_capacity(n);
        for (i, slot) in scheme.slots.iter().enumerate() {
            let reversed = bit(rev_mask, i);
            let reflected = bit(refl_mask, i);
            let cand = self.candidates[i]
                .iter()
                .find(|c| c.reversed == reversed && c.reflected == reflected)
                .ok_or(BuildError::NoPlacement {
                    slot: i,
                    reversed,
                    reflected,
                })?;
            children.push(ChildSlot {
                cell: slot.cell.clone(),
                map: table.elems[cand.iso as usize].clone(),
                reversed: cand.reversed,
                rule: 0,
            });
        }
        let name = CurveName {
            letter: scheme.config.letter,
            scheme: scheme.id,
            rev_mask,
            refl_mask,
        };
        Ok(RuleSystem {
            dim: scheme.dim(),
            base: 2,
            start: 0,
            rules: vec![Rule {
                name: name.to_string(),
                children,
            }],
        })
    }
}

/// The candidate placements of every slot, as returned by `slot_candidates`.
pub fn scheme_candidates(scheme: &ConnectionScheme) -> Vec<Vec<SlotCandidate>> {
    scheme
        .slots
        .iter()
        .map(|slot| slot_candidates(&scheme.config, slot))
        .collect()
}

/// Degrees of freedom shared by all slots: 1 (everything forced), 2 (one
/// free bit per slot) or 4 (direction and orientation both free).
fn uniform_freedom(scheme: &ConnectionScheme) -> usize {
    let counts: Vec<usize> = scheme_candidates(scheme).iter().map(Vec::len).collect();
    let f = counts[0];
    assert!(
        counts.iter().all(|&c| c == f),
        "slots of one scheme offer the same freedom"
    );
    f
}

/// The mask whose palindromicity decides whether a curve of a symmetric
/// scheme equals its own reversal.  A symmetric curve absorbs a trade on
/// any copy: compose the copy's placement with the curve's reversal
/// symmetry and flip its direction bit.  When that symmetry is a mirror
/// the composition also flips the orientation bit, so `rev ^ refl` stays
/// fixed; when it is a half-turn the orientation bit is untouched and
/// `refl` alone stays fixed.  Every symmetric scheme carries exactly one
/// of the two kinds.
fn trade_mask(scheme: &ConnectionScheme, rev: u8, refl: u8) -> u8 {
    let half_turn = scheme
        .reversal_symmetries()
        .iter()
        .all(Isometry::orientation_preserving);
    if half_turn {
        refl
    } else {
        rev ^ refl
    }
}

/// The canonical label of the curve built from `(rev, refl)`.  Reversing
/// the whole curve relabels it with both masks bit-reversed, and on a
/// symmetric scheme that relabeling describes the same curve, so the
/// smaller of the two labels is canonical.  Reversing a single copy can
/// also be traded against composing it with the curve's own reversal
/// symmetry; the curves closed under that trade are exactly those whose
/// trade-invariant mask is palindromic, and their direction bits are
/// redundant, so the canonical label clears them.
pub fn canonical_label(scheme: &ConnectionScheme, rev: u8, refl: u8) -> (u8, u8) {
    if !scheme.symmetric {
        return (rev, refl);
    }
    let n = scheme.slots.len();
    if uniform_freedom(scheme) == 4 {
        let trade = trade_mask(scheme, rev, refl);
        if bit_reverse(trade, n) == trade {
            return (0, trade);
        }
    }
    (rev, refl).min((bit_reverse(rev, n), bit_reverse(refl, n)))
}

/// Canonical labels of all distinct curves of `scheme`, in ascending mask
/// order.
pub fn curve_labels(scheme: &ConnectionScheme) -> Vec<(u8, u8)> {
    let cands = scheme_candidates(scheme);
    let n = cands.len();
    match uniform_freedom(scheme) {
        1 => {
            let mut rev = 0u8;
            let mut refl = 0u8;
            for (i, c) in cands.iter().enumerate() {
                if c[0].reversed {
                    rev |= 1 << i;
                }
                if c[0].reflected {
                    refl |= 1 << i;
                }
            }
            vec![(rev, refl)]
        }
        2 => {
            // One binary choice per slot; the choice may change either mask
            // bit or both, so derive the label from the chosen candidates.
            let labels: Vec<(u8, u8)> = (0..1u16 << n)
                .map(|choice| {
                    let mut rev = 0u8;
                    let mut refl = 0u8;
                    for (i, c) in cands.iter().enumerate() {
                        let pick = c[((choice >> i) & 1) as usize];
                        if pick.reversed {
                            rev |= 1 << i;
                        }
                        if pick.reflected {
                            refl |= 1 << i;
                        }
                    }
                    (rev, refl)
                })
                .collect();
            if scheme.symmetric {
                distinct_by_canonical_form(scheme, &labels)
            } else {
                let mut labels = labels;
                labels.sort_unstable();
                labels
            }
        }
        4 => {
            if !scheme.symmetric {
                return (0..1u32 << (2 * n))
                    .map(|m| ((m & 0xff) as u8, (m >> n) as u8))
                    .collect();
            }
            let half_turn = scheme
                .reversal_symmetries()
                .iter()
                .all(Isometry::orientation_preserving);
            let mut out = Vec::new();
            for refl in 0..1u16 << n {
                let refl = refl as u8;
                for rev in 0..1u16 << n {
                    let rev = rev as u8;
                    let trade = if half_turn { refl } else { rev ^ refl };
                    if bit_reverse(trade, n) == trade {
                        if rev == 0 {
                            out.push((0, refl));
                        }
                    } else if (rev, refl) <= (bit_reverse(rev, n), bit_reverse(refl, n)) {
                        out.push((rev, refl));
                    }
                }
            }
            out.sort_unstable();
            out
        }
        f => panic!("unexpected slot freedom {f}"),
    }
}

/// Deduplicates labelings by the canonical form of the built system,
/// keeping the smallest label of each class so that a zero reversal mask
/// survives whenever the class has one.
fn distinct_by_canonical_form(scheme: &ConnectionScheme, labels: &[(u8, u8)]) -> Vec<(u8, u8)> {
    let mut best = BTreeMap::new();
    for &(rev, refl) in labels {
        let sys = build_mono_curve(scheme, rev, refl).expect("label from candidates");
        best.entry(canonical_form(&sys, true))
            .and_modify(|b: &mut (u8, u8)| *b = (*b).min((rev, refl)))
            .or_insert((rev, refl));
    }
    let mut out: Vec<(u8, u8)> = best.into_values().collect();
    out.sort_unstable();
    out
}

/// Number of distinct curves `scheme` generates.
pub fn curve_count(scheme: &ConnectionScheme) -> u64 {
    let n = scheme.slots.len() as u32;
    match (uniform_freedom(scheme), scheme.symmetric) {
        (1, _) => 1,
        (2, false) => 1u64 << n,
        (4, false) => 1u64 << (2 * n),
        (4, true) => {
            let all = 1u64 << n;
            let pal = 1u64 << (n / 2);
            pal + all * (all - pal) / 2
        }
        _ => curve_labels(scheme).len() as u64,
    }
}

/// All schemes of every standard config of one dimension, with totals.
pub struct SchemeCatalog {
    pub dim: usize,
    pub entries: Vec<(GateConfig, Vec<ConnectionScheme>)>,
}

impl SchemeCatalog {
    fn new(dim: usize) -> SchemeCatalog {
        let entries = standard_configs(dim)
            .into_iter()
            .map(|cfg| {
                let schemes = enumerate_schemes(&cfg);
                (cfg, schemes)
            })
            .collect();
        SchemeCatalog { dim, entries }
    }

    pub fn get(&self, letter: char) -> Option<&(GateConfig, Vec<ConnectionScheme>)> {
        self.entries.iter().find(|(cfg, _)| cfg.letter == letter)
    }

    pub fn scheme(&self, letter: char, id: u32) -> Option<&ConnectionScheme> {
        self.get(letter).and_then(|(_, schemes)| schemes.get(id as usize))
    }

    pub fn schemes(&self) -> impl Iterator<Item = &ConnectionScheme> {
        self.entries.iter().flat_map(|(_, s)| s.iter())
    }

    /// Builds the curve a name refers to.
    pub fn build(&self, name: &CurveName) -> Result<RuleSystem, String> {
        let scheme = self
            .scheme(name.letter, name.scheme)
            .ok_or_else(|| format!("no scheme {}{}", name.letter, name.scheme))?;
        build_mono_curve(scheme, name.rev_mask, name.refl_mask).map_err(|e| e.to_string())
    }

    /// Total number of distinct curves over all schemes.
    pub fn total_curves(&self) -> u64 {
        self.schemes().map(curve_count).sum()
    }
}

/// Shared catalog for a dimension; built once per process.
pub fn catalog(dim: usize) -> &'static SchemeCatalog {
    static CATALOGS: [OnceLock<SchemeCatalog>; 2] = [OnceLock::new(), OnceLock::new()];
    assert!(
        (2..=3).contains(&dim),
        "catalogs cover dimensions 2 and 3"
    );
    CATALOGS[dim - 2].get_or_init(|| SchemeCatalog::new(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::validate_system;

    #[test]
    fn curve_totals_match_published_census() {
        let cat = catalog(3);
        let per_letter: Vec<(char, u64)> = cat
            .entries
            .iter()
            .map(|(cfg, schemes)| (cfg.letter, schemes.iter().map(curve_count).sum()))
            .collect();
        assert_eq!(
            per_letter,
            vec![
                ('A', 1_552_544),
                ('B', 9_138_464),
                ('C', 2_758),
                ('D', 1_024),
                ('E', 16),
                ('F', 1),
            ]
        );
        assert_eq!(cat.total_curves(), 10_694_807);
    }

    #[test]
    fn two_dimensional_catalog_has_one_curve() {
        let cat = catalog(2);
        assert_eq!(cat.total_curves(), 1);
        let (_, schemes) = &cat.entries[0];
        let labels = curve_labels(&schemes[0]);
        assert_eq!(labels.len(), 1);
        let sys = build_mono_curve(&schemes[0], labels[0].0, labels[0].1).unwrap();
        let gates = validate_system(&sys).unwrap();
        assert_eq!(gates[0].entrance, schemes[0].config.entrance);
        assert_eq!(gates[0].exit, schemes[0].config.exit);
    }

    #[test]
    fn built_curves_validate_and_reproduce_scheme_gates() {
        let cat = catalog(3);
        for (cfg, schemes) in &cat.entries {
            let scheme = &schemes[0];
            let (rev, refl) = curve_labels(scheme)[0];
            let sys = build_mono_curve(scheme, rev, refl).unwrap();
            let gates = validate_system(&sys).expect("enumerated curve validates");
            assert_eq!(gates[0].entrance, cfg.entrance, "{}", cfg.letter);
            assert_eq!(gates[0].exit, cfg.exit, "{}", cfg.letter);
        }
    }

    #[test]
    fn bad_masks_are_rejected() {
        let cat = catalog(3);
        let (_, schemes) = cat.get('C').unwrap();
        let (rev, refl) = curve_labels(&schemes[0])[0];
        assert!(build_mono_curve(&schemes[0], rev ^ 1, refl).is_err());
        assert!(build_mono_curve(&schemes[0], rev, refl ^ 1).is_err());
        let (_, schemes) = cat.get('D').unwrap();
        let labels = curve_labels(&schemes[0]);
        assert_eq!(labels.len(), 256);
        let forced_rev = labels[0].0;
        assert!(labels.iter().all(|&(r, _)| r == forced_rev));
        assert!(build_mono_curve(&schemes[0], forced_rev ^ 1, 0).is_err());
    }

    #[test]
    fn canonical_labels_collapse_reversal_pairs() {
        let cat = catalog(3);
        let (_, schemes) = cat.get('A').unwrap();
        let sym = schemes.iter().find(|s| s.symmetric).unwrap();
        assert_eq!(curve_count(sym), 30_736);
        let labels = curve_labels(sym);
        assert_eq!(labels.len(), 30_736);
        for &(rev, refl) in labels.iter().take(64) {
            assert_eq!(canonical_label(sym, rev, refl), (rev, refl));
        }
        let asym = schemes.iter().find(|s| !s.symmetric).unwrap();
        assert_eq!(curve_count(asym), 65_536);
    }
}
