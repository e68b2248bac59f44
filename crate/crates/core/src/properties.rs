//! Structural classification of validated rule systems: continuity level,
//! gate classification, the direction and orientation flags, restriction
//! of a curve to the facets of its cube, binary decompositions and the
//! bend sharpness statistic.
//!
//! Everything here is decided from finite closures (reachable traversal
//! states, junction classes, bisimulation quotients), never from a
//! fixed-depth sample of the traversal.

use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use crate::engine::Engine;
use crate::enumeration::classify_gates;
use crate::fixtures;
use crate::geometry::{boundary_class, group, rat_int, Isometry, Rat};
use crate::rules::{
    canonical_form, rule_symmetry_elements, validate_system, CanonicalForm, ChildSlot, Rule,
    RuleSystem, ValidationError,
};

/// Gate classification of a system: one of the tabulated single-rule
/// configurations, or a descriptive label built from the boundary classes
/// of every rule's solved gates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateType {
    Standard(char),
    Descriptive(String),
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateType::Standard(c) => write!(f, "{c}"),
            GateType::Descriptive(s) => write!(f, "{s}"),
        }
    }
}

/// One closed facet of the unit cube, named by its normal axis and side:
/// `-x` is the facet at coordinate 0 of axis 0, `+x` the one at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub axis: usize,
    pub side: bool,
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}",
            if self.side { '+' } else { '-' },
            (b'x' + self.axis as u8) as char
        )
    }
}

/// The `2 dim` facets of the cube in axis order, low side first.
pub fn all_faces(dim: usize) -> Vec<Face> {
    (0..dim)
        .flat_map(|axis| [false, true].map(|side| Face { axis, side }))
        .collect()
}

/// One level of a binary decomposition: the region is cut in half along
/// `axis` of its local frame; the half on side `first` is visited first.
/// `halves` places the next level's rule into the two halves in visiting
/// order, each by an isometry and an optional reversal; after the last
/// level the first rule applies again.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryRule {
    pub axis: usize,
    pub first: bool,
    pub halves: [(Isometry, bool); 2],
}

/// Everything the classifier decides about one system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyReport {
    /// Smallest dimension of a face shared by consecutive cells, over all
    /// depths: `dim - 1` for face-continuous, 0 for merely vertex-continuous.
    pub continuity: usize,
    pub gate_type: GateType,
    pub order_preserving: bool,
    pub symmetric: bool,
    pub non_reflecting: bool,
    pub binary_decomposable: bool,
    pub downward_compatible_faces: Vec<Face>,
    /// Squared Euclidean distance between the centers of the first and
    /// third cell of the sharpest-case consecutive triple, in cell widths.
    pub max_bend: Rat,
}

/// Runs the whole classification.  Validation errors of the input system
/// are the only failure mode.
pub fn property_report(sys: &RuleSystem) -> Result<PropertyReport, ValidationError> {
    let gates = validate_system(sys)?;
    let gate_type = gate_label(sys, &gates);
    let engine = Engine::with_gates(sys.clone(), gates);
    let (order_preserving, symmetric, non_reflecting) = structural_flags(sys);
    Ok(PropertyReport {
        continuity: engine.continuity_level(),
        gate_type,
        order_preserving,
        symmetric,
        non_reflecting,
        binary_decomposable: binary_decomposition(sys).is_some(),
        downward_compatible_faces: downward_compatible_faces(sys),
        max_bend: rat_int(engine.max_bend_squared()),
    })
}

/// Continuity level of a valid system; see [`Engine::continuity_level`].
pub fn continuity_level(sys: &RuleSystem) -> Result<usize, ValidationError> {
    Ok(Engine::new(sys.clone())?.continuity_level())
}

/// Sharpest-triple bend statistic of a valid system, as a squared rational;
/// see [`Engine::max_bend_squared`].
pub fn max_bend_squared(sys: &RuleSystem) -> Result<Rat, ValidationError> {
    Ok(rat_int(Engine::new(sys.clone())?.max_bend_squared()))
}

/// Classifies the solved gates: single-rule systems in dimensions 2 and 3
/// get their tabulated configuration letter, everything else a descriptive
/// per-rule label such as `vertex-edge`.
pub fn gate_classification(sys: &RuleSystem) -> Result<GateType, ValidationError> {
    let gates = validate_system(sys)?;
    Ok(gate_label(sys, &gates))
}

fn gate_label(sys: &RuleSystem, gates: &[crate::rules::GatePair]) -> GateType {
    if sys.rules.len() == 1 && (sys.dim == 2 || sys.dim == 3) {
        if let Some(letter) = classify_gates(&gates[0].entrance, &gates[0].exit) {
            return GateType::Standard(letter);
        }
    }
    let label = sys
        .rules
        .iter()
        .zip(gates.iter())
        .map(|(rule, pair)| {
            let e = boundary_class(&pair.entrance).expect("solved gates lie in the cube");
            let x = boundary_class(&pair.exit).expect("solved gates lie in the cube");
            let tags = format!("{}-{}", e.tag(sys.dim), x.tag(sys.dim));
            if sys.rules.len() == 1 {
                tags
            } else {
                format!("{}:{}", rule.name, tags)
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    GateType::Descriptive(label)
}

/// The `(order_preserving, symmetric, non_reflecting)` flags.
///
/// `symmetric` holds when some isometry turns the curve into its own
/// reverse.  The other two are representation-existential: a child placed
/// by `(map, reversed)` may equally be placed by `(map ∘ h, reversed ^ r)`
/// for any symmetry `(h, r)` of the child's own curve, and the flags ask
/// whether these trades can make every placement forward, respectively
/// every map a rotation.  The trades are applied per reachable child slot,
/// which for a single-rule system covers every representation by a single
/// rule.
pub fn structural_flags(sys: &RuleSystem) -> (bool, bool, bool) {
    let grp = group(sys.dim);
    // Summarize each rule's symmetries: can a trade flip a direction flag,
    // can it flip a map's orientation?
    let mut has_rev = vec![false; sys.rules.len()];
    let mut has_refl = vec![false; sys.rules.len()];
    for r in 0..sys.rules.len() {
        for (iso, rev) in rule_symmetry_elements(sys, r) {
            has_rev[r] |= rev;
            has_refl[r] |= !grp.orientation[iso];
        }
    }
    let mut order_preserving = true;
    let mut non_reflecting = true;
    for &r in &reachable_rules(sys) {
        for slot in &sys.rules[r].children {
            if slot.reversed && !has_rev[slot.rule] {
                order_preserving = false;
            }
            if !slot.map.orientation_preserving() && !has_refl[slot.rule] {
                non_reflecting = false;
            }
        }
    }
    (order_preserving, has_rev[sys.start], non_reflecting)
}

fn reachable_rules(sys: &RuleSystem) -> Vec<usize> {
    let mut seen = vec![false; sys.rules.len()];
    let mut queue = vec![sys.start];
    seen[sys.start] = true;
    let mut at = 0;
    while at < queue.len() {
        let r = queue[at];
        at += 1;
        for slot in &sys.rules[r].children {
            if !seen[slot.rule] {
                seen[slot.rule] = true;
                queue.push(slot.rule);
            }
        }
    }
    queue
}

/// The trace of the system on one facet of its cube, as a rule system of
/// one dimension less: per rule, the children whose cells touch the facet,
/// in traversal order, with cells and maps projected onto the facet.  The
/// result is not necessarily a valid traversal; validation failure means
/// the traversal crosses the facet in an incompatible order.
pub fn restrict_to_face(sys: &RuleSystem, face: Face) -> RuleSystem {
    assert!(sys.dim >= 2, "facet restriction needs dimension at least 2");
    let d = sys.dim;
    let compress = |a: usize, drop: usize| if a > drop { a - 1 } else { a };
    // Reachable (rule, local facet) pairs, interned in discovery order.
    let mut index: HashMap<(usize, Face), usize> = HashMap::new();
    let mut queue: Vec<(usize, Face)> = Vec::new();
    index.insert((sys.start, face), 0);
    queue.push((sys.start, face));
    let mut rules = Vec::new();
    let mut at = 0;
    while at < queue.len() {
        let (r, f) = queue[at];
        at += 1;
        let layer = if f.side { sys.base - 1 } else { 0 };
        let mut children = Vec::new();
        for slot in &sys.rules[r].children {
            if slot.cell[f.axis] != layer {
                continue;
            }
            // The child axis landing on the facet normal, and which side of
            // the child cube faces the facet.
            let j0 = slot
                .map
                .perm
                .iter()
                .position(|&a| a == f.axis)
                .expect("perm is a bijection");
            let child_face = Face {
                axis: j0,
                side: f.side ^ slot.map.neg[j0],
            };
            let key = (slot.rule, child_face);
            let next = index.len();
            let child_rule = *index.entry(key).or_insert_with(|| {
                queue.push(key);
                next
            });
            let mut perm = vec![0; d - 1];
            let mut neg = vec![false; d - 1];
            for j in (0..d).filter(|&j| j != j0) {
                perm[compress(j, j0)] = compress(slot.map.perm[j], f.axis);
                neg[compress(j, j0)] = slot.map.neg[j];
            }
            let cell = (0..d)
                .filter(|&a| a != f.axis)
                .map(|a| slot.cell[a])
                .collect();
            children.push(ChildSlot {
                cell,
                map: Isometry { perm, neg },
                reversed: slot.reversed,
                rule: child_rule,
            });
        }
        rules.push(Rule {
            name: format!("{}@{}", sys.rules[r].name, f),
            children,
        });
    }
    RuleSystem {
        dim: d - 1,
        base: sys.base,
        start: 0,
        rules,
    }
}

/// Facets whose trace is the standard curve of one dimension less: the 2D
/// Hilbert curve under a 3D system, the single monotone order under a 2D
/// system.  Dimensions without such a reference yield the empty set.
pub fn downward_compatible_faces(sys: &RuleSystem) -> Vec<Face> {
    let reference = match sys.dim {
        2 => reference_canonical(1),
        3 => reference_canonical(2),
        _ => return Vec::new(),
    };
    all_faces(sys.dim)
        .into_iter()
        .filter(|&f| {
            let restricted = restrict_to_face(sys, f);
            validate_system(&restricted).is_ok()
                && &canonical_form(&restricted, true) == reference
        })
        .collect()
}

fn reference_canonical(dim: usize) -> &'static CanonicalForm {
    static FORMS: OnceLock<[CanonicalForm; 2]> = OnceLock::new();
    let forms = FORMS.get_or_init(|| {
        [
            canonical_form(&fixtures::trivial1d(), true),
            canonical_form(&fixtures::hilbert2d(), true),
        ]
    });
    &forms[dim - 1]
}

/// Expands a cyclic sequence of binary rules into the mono rule system it
/// generates on the `2^dim` cells: one full round of cuts, recording the
/// accumulated isometry, direction and cell per leaf.
pub fn compose_binary(levels: &[BinaryRule], dim: usize) -> RuleSystem {
    assert_eq!(levels.len(), dim, "one cut per axis makes a full round");
    let mut children = Vec::with_capacity(1 << dim);
    let mut cell = vec![-1i64; dim];
    compose_rec(
        levels,
        0,
        &Isometry::identity(dim),
        false,
        &mut cell,
        &mut children,
    );
    RuleSystem {
        dim,
        base: 2,
        start: 0,
        rules: vec![Rule {
            name: "composed".into(),
            children,
        }],
    }
}

fn compose_rec(
    levels: &[BinaryRule],
    level: usize,
    acc: &Isometry,
    rev: bool,
    cell: &mut Vec<i64>,
    out: &mut Vec<ChildSlot>,
) {
    if level == levels.len() {
        debug_assert!(cell.iter().all(|&c| c >= 0), "every axis cut exactly once");
        out.push(ChildSlot {
            cell: cell.clone(),
            map: acc.clone(),
            reversed: rev,
            rule: 0,
        });
        return;
    }
    let rule = &levels[level];
    let axis = acc.perm[rule.axis];
    for v in 0..2 {
        let idx = if rev { 1 - v } else { v };
        let (g, w) = &rule.halves[idx];
        let local_side = (idx == 1) ^ rule.first;
        let prev = cell[axis];
        cell[axis] = (local_side ^ acc.neg[rule.axis]) as i64;
        compose_rec(levels, level + 1, &acc.compose(g), rev ^ w, cell, out);
        cell[axis] = prev;
    }
}

/// Searches for a binary decomposition of a single-rule system over the
/// 2-fold grid: `dim` cutting levels whose composition generates the same
/// directed curve.  Searching against the system itself suffices, because
/// a decomposition of an isometric or reversed copy conjugates back into
/// the original frame.  Returns the levels in application order.
pub fn binary_decomposition(sys: &RuleSystem) -> Option<Vec<BinaryRule>> {
    if sys.rules.len() != 1 || sys.base != 2 {
        return None;
    }
    let d = sys.dim;
    let n = 1usize << d;
    let grp = group(d);
    let slots = &sys.rules[0].children;
    let cells: Vec<usize> = slots
        .iter()
        .map(|s| s.cell.iter().enumerate().map(|(a, &c)| (c as usize) << a).sum())
        .collect();
    let maps: Vec<usize> = slots.iter().map(|s| grp.index_of(&s.map) as usize).collect();
    let revs: Vec<bool> = slots.iter().map(|s| s.reversed).collect();
    let sym: Vec<(usize, bool)> = crate::rules::symmetry_elements(sys)
        .into_iter()
        .map(|(h, r)| (h, r))
        .collect();

    // Visit tree: cutting the cell sequence in half must separate the cells
    // by one coordinate bit, recursively.  Nodes keep every consistent
    // (axis, first side) cut; only ranges of two cells can have several.
    let mut cand: Vec<Vec<Vec<(usize, bool)>>> = Vec::new();
    for level in 0..d {
        let span = n >> level;
        let half = span >> 1;
        let mut nodes = Vec::new();
        for p in 0..(n / span) {
            let lo = p * span;
            let mut cuts = Vec::new();
            'axis: for a in 0..d {
                let first = cells[lo] >> a & 1;
                for i in lo..lo + span {
                    let expect = if i < lo + half { first } else { 1 - first };
                    if cells[i] >> a & 1 != expect {
                        continue 'axis;
                    }
                }
                cuts.push((a, first == 1));
            }
            if cuts.is_empty() {
                return None;
            }
            nodes.push(cuts);
        }
        cand.push(nodes);
    }

    // Odometer over the per-node cut choices.
    let mut choice: Vec<Vec<usize>> = cand.iter().map(|nodes| vec![0; nodes.len()]).collect();
    loop {
        if let Some(levels) = solve_tree(sys, grp, d, &cells, &maps, &revs, &sym, &cand, &choice) {
            return Some(levels);
        }
        // Advance the odometer.
        let mut done = true;
        'advance: for (lv, nodes) in cand.iter().enumerate() {
            for (p, cuts) in nodes.iter().enumerate() {
                if choice[lv][p] + 1 < cuts.len() {
                    choice[lv][p] += 1;
                    done = false;
                    break 'advance;
                }
                choice[lv][p] = 0;
            }
        }
        if done {
            return None;
        }
    }
}

/// Whether a sequence of `2^dim` cells of the 2-fold grid can be halved
/// recursively: each range's first half on one side of an axis-aligned
/// cutting plane and its second half on the other.  This is a necessary
/// condition for a binary decomposition that depends only on the cell
/// order, so whole curve families can be pruned at once.
pub fn cells_bisect(cells: &[Vec<i64>], dim: usize) -> bool {
    let n = 1usize << dim;
    assert_eq!(cells.len(), n);
    let bits: Vec<usize> = cells
        .iter()
        .map(|c| c.iter().enumerate().map(|(a, &x)| (x as usize) << a).sum())
        .collect();
    for level in 0..dim {
        let span = n >> level;
        let half = span >> 1;
        for p in 0..(n / span) {
            let lo = p * span;
            let found = (0..dim).any(|a| {
                let first = bits[lo] >> a & 1;
                (lo..lo + span).all(|i| {
                    let expect = if i < lo + half { first } else { 1 - first };
                    bits[i] >> a & 1 == expect
                })
            });
            if !found {
                return false;
            }
        }
    }
    true
}

/// Attempts the isometry and direction assignment for one fixed cut tree.
///
/// A leaf's content only has to match the corresponding child placement up
/// to a symmetry of the curve itself, so leaf targets range over the
/// symmetry orbit of the slot's map.  Placements along the all-first spine
/// can be normalized to the identity: multiplying both of a level's
/// placements on the right by a fixed isometry and compensating in the
/// next level changes no leaf product and no same-level consistency
/// relation, so it maps valid decompositions to valid decompositions.
#[allow(clippy::too_many_arguments)]
fn solve_tree(
    sys: &RuleSystem,
    grp: &'static crate::geometry::GroupTable,
    d: usize,
    cells: &[usize],
    maps: &[usize],
    revs: &[bool],
    sym: &[(usize, bool)],
    cand: &[Vec<Vec<(usize, bool)>>],
    choice: &[Vec<usize>],
) -> Option<Vec<BinaryRule>> {
    let n = 1usize << d;
    let mul = |a: usize, b: usize| grp.mult[a][b] as usize;
    let inv = |a: usize| grp.inv[a] as usize;

    'w: for w_bits in 0u32..(1 << (2 * d)) {
        let w = |level: usize, idx: usize| w_bits >> (2 * level + idx) & 1 == 1;
        // Decode each leaf's slot-index path and accumulated direction.
        let mut leaf_at = vec![usize::MAX; n];
        let mut rho_of = vec![false; n];
        for k in 0..n {
            let mut rho = false;
            let mut path = 0usize;
            for level in 0..d {
                let v = k >> (d - 1 - level) & 1;
                let idx = if rho { 1 - v } else { v };
                path |= idx << (d - 1 - level);
                rho ^= w(level, idx);
            }
            leaf_at[path] = k;
            rho_of[k] = rho;
        }
        debug_assert!(leaf_at.iter().all(|&k| k != usize::MAX));

        // Admissible accumulated isometries per leaf: the slot's map times
        // any curve symmetry whose direction part absorbs the mismatch
        // between the accumulated and the recorded direction flag.
        let mut adm_list: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut adm_mask = vec![0u64; n];
        for k in 0..n {
            for &(h, r) in sym {
                if r == (rho_of[k] ^ revs[k]) {
                    let t = mul(maps[k], h);
                    if adm_mask[k] >> t & 1 == 0 {
                        adm_mask[k] |= 1 << t;
                        adm_list[k].push(t);
                    }
                }
            }
            if adm_list[k].is_empty() {
                continue 'w;
            }
        }

        // Defining equations: the all-first spine is normalized to the
        // identity, so the two last-level placements equal the targets of
        // paths 0 and 1, and each level's second placement equals the
        // target of the matching unit path times the inverse of the
        // last-level first placement.
        let defining: Vec<usize> = (0..d)
            .map(|level| leaf_at[if level + 1 == d { 1 } else { 1 << (d - 1 - level) }])
            .chain([leaf_at[0]])
            .collect();
        let mut pick = vec![0usize; defining.len()];
        loop {
            let t_a = adm_list[defining[d]][pick[d]];
            let mut g = vec![[0usize; 2]; d];
            g[d - 1][0] = t_a;
            g[d - 1][1] = adm_list[defining[d - 1]][pick[d - 1]];
            for level in 0..d - 1 {
                g[level][1] = mul(adm_list[defining[level]][pick[level]], inv(t_a));
            }
            let consistent = (0..n).all(|path| {
                let product = (0..d).fold(0, |acc, level| {
                    mul(acc, g[level][path >> (d - 1 - level) & 1])
                });
                adm_mask[leaf_at[path]] >> product & 1 == 1
            });
            if consistent {
                if let Some(levels) = read_off(sys, grp, d, cells, &g, w_bits, cand, choice) {
                    return Some(levels);
                }
            }
            // Advance the target odometer.
            let mut done = true;
            for (slot, &leaf) in pick.iter_mut().zip(defining.iter()) {
                if *slot + 1 < adm_list[leaf].len() {
                    *slot += 1;
                    done = false;
                    break;
                }
                *slot = 0;
            }
            if done {
                break;
            }
        }
    }
    None
}

/// Reads the cut axes and sides off the tree for solved placements, then
/// accepts only if the composition reproduces the directed curve.
#[allow(clippy::too_many_arguments)]
fn read_off(
    sys: &RuleSystem,
    grp: &'static crate::geometry::GroupTable,
    d: usize,
    cells: &[usize],
    g: &[[usize; 2]],
    w_bits: u32,
    cand: &[Vec<Vec<(usize, bool)>>],
    choice: &[Vec<usize>],
) -> Option<Vec<BinaryRule>> {
    let cut = |level: usize, p: usize| cand[level][p][choice[level][p]];
    let mul = |a: usize, b: usize| grp.mult[a][b] as usize;
    let w = |level: usize, idx: usize| w_bits >> (2 * level + idx) & 1 == 1;
    let mut levels = Vec::with_capacity(d);
    let mut acc = 0usize;
    let mut rho = false;
    for level in 0..d {
        let (abs_axis, abs_side) = cut(level, 0);
        let a = &grp.elems[acc];
        let axis = a
            .perm
            .iter()
            .position(|&x| x == abs_axis)
            .expect("perm is a bijection");
        let first_idx = rho as usize;
        let side_of_first_idx = abs_side ^ a.neg[axis];
        let first = side_of_first_idx ^ (first_idx == 1);
        levels.push(BinaryRule {
            axis,
            first,
            halves: [
                (grp.elems[g[level][0]].clone(), w(level, 0)),
                (grp.elems[g[level][1]].clone(), w(level, 1)),
            ],
        });
        acc = mul(acc, g[level][first_idx]);
        rho ^= w(level, first_idx);
    }
    if !region_shapes_nest(&levels, d) {
        return None;
    }
    let composed = compose_binary(&levels, d);
    // Cell agreement plus per-leaf content agreement modulo curve symmetry
    // is checked wholesale through directed equivalence.
    let cells_match = composed.rules[0]
        .children
        .iter()
        .enumerate()
        .all(|(k, slot)| {
            let bits: usize = slot
                .cell
                .iter()
                .enumerate()
                .map(|(a, &c)| (c as usize) << a)
                .sum();
            bits == cells[k]
        });
    if cells_match && crate::rules::equivalent_directed(&composed, sys) {
        Some(levels)
    } else {
        None
    }
}

/// Each cutting level acts on a box with a fixed set of already-halved
/// axes: none at the top, then one more per level.  A placement has to map
/// the next level's box onto a half of the current one, so it must carry
/// halved axes to halved axes, and both halves, being congruent, must
/// induce the same halved set for the next level.  The leaf products of an
/// assignment do not see this, so it is checked separately.
fn region_shapes_nest(levels: &[BinaryRule], d: usize) -> bool {
    let mut halved = 0usize;
    for (level, rule) in levels.iter().enumerate() {
        if halved >> rule.axis & 1 == 1 {
            return false;
        }
        let grown = halved | 1 << rule.axis;
        if level + 1 == d {
            // The last cut completes the round; the halves are cubes again
            // and any placement of the top rule fits them.
            return true;
        }
        // Pull the halved set back through each placement: child axis `j`
        // lies along parent axis `perm[j]`.
        let back = |iso: &Isometry| {
            (0..d).fold(0usize, |acc, j| acc | ((grown >> iso.perm[j] & 1) << j))
        };
        let next = back(&rule.halves[0].0);
        if next != back(&rule.halves[1].0) {
            return false;
        }
        halved = next;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::catalog;
    use crate::rules::{equivalent, reverse_system, transform_system, CurveName};

    fn curve(letter: char, scheme: u32, rev_mask: u8, refl_mask: u8) -> RuleSystem {
        catalog(3)
            .build(&CurveName {
                letter,
                scheme,
                rev_mask,
                refl_mask,
            })
            .unwrap()
    }

    #[test]
    fn hilbert2d_report() {
        let report = property_report(&fixtures::hilbert2d()).unwrap();
        assert_eq!(report.continuity, 1);
        assert_eq!(report.gate_type, GateType::Standard('A'));
        assert!(report.order_preserving);
        assert!(report.symmetric);
        assert!(report.non_reflecting);
        assert!(report.binary_decomposable);
        assert_eq!(report.downward_compatible_faces, all_faces(2));
        assert_eq!(report.max_bend, rat_int(4));
    }

    #[test]
    fn trivial1d_flags() {
        let sys = fixtures::trivial1d();
        assert_eq!(structural_flags(&sys), (true, true, true));
        assert!(binary_decomposition(&sys).is_some());
        assert_eq!(gate_classification(&sys).unwrap(), GateType::Descriptive("vertex-vertex".into()));
    }

    #[test]
    fn peano_has_no_binary_decomposition_over_base_three() {
        assert!(binary_decomposition(&fixtures::peano2d()).is_none());
    }

    #[test]
    fn letter_classification_of_built_curves() {
        for letter in ['A', 'B', 'C', 'D', 'E', 'F'] {
            let scheme = &catalog(3).get(letter).unwrap().1[0];
            let labels = crate::enumeration::curve_labels(scheme);
            let (rev, refl) = labels[0];
            let sys = curve(letter, scheme.id, rev, refl);
            assert_eq!(
                gate_classification(&sys).unwrap(),
                GateType::Standard(letter)
            );
        }
    }

    #[test]
    fn forced_letters_are_never_order_preserving() {
        for letter in ['C', 'D', 'E', 'F'] {
            let scheme = &catalog(3).get(letter).unwrap().1[0];
            let labels = crate::enumeration::curve_labels(scheme);
            let (rev, refl) = labels[0];
            let (op, _, _) = structural_flags(&curve(letter, scheme.id, rev, refl));
            assert!(!op, "letter {letter}");
        }
    }

    #[test]
    fn symmetric_scheme_with_zero_masks_gives_symmetric_curve() {
        let scheme = catalog(3)
            .get('A')
            .unwrap()
            .1
            .iter()
            .find(|s| s.symmetric)
            .expect("symmetric type-A schemes exist");
        let (op, sym, _) = structural_flags(&curve('A', scheme.id, 0, 0));
        assert!(sym);
        assert!(op);
    }

    #[test]
    fn flags_invariant_under_conjugation_and_reversal() {
        let grp = group(3);
        let scheme = &catalog(3).get('B').unwrap().1[0];
        let sys = curve('B', scheme.id, 0, 0x5a);
        let flags = structural_flags(&sys);
        for iso in [1, 7, 23, 40] {
            let conj = transform_system(&sys, &grp.elems[iso]);
            assert_eq!(structural_flags(&conj), flags, "isometry {iso}");
            assert_eq!(structural_flags(&reverse_system(&conj)), flags);
        }
    }

    #[test]
    fn face_restriction_of_2d_hilbert_is_monotone() {
        let sys = fixtures::hilbert2d();
        for face in all_faces(2) {
            let restricted = restrict_to_face(&sys, face);
            validate_system(&restricted).unwrap();
            assert!(equivalent(&restricted, &fixtures::trivial1d()), "{face}");
        }
    }

    #[test]
    fn binary_decomposition_composes_back() {
        let sys = fixtures::hilbert2d();
        let levels = binary_decomposition(&sys).unwrap();
        assert_eq!(levels.len(), 2);
        let composed = compose_binary(&levels, 2);
        assert!(equivalent(&composed, &sys));
        // The decomposition survives conjugation and reversal.
        let grp = group(2);
        for iso in 0..grp.elems.len() {
            let conj = transform_system(&sys, &grp.elems[iso]);
            assert!(binary_decomposition(&conj).is_some());
            assert!(binary_decomposition(&reverse_system(&conj)).is_some());
        }
    }

    #[test]
    fn faces_display_as_signed_axes() {
        let names: Vec<String> = all_faces(3).iter().map(|f| f.to_string()).collect();
        assert_eq!(names, ["-x", "+x", "-y", "+y", "-z", "+z"]);
    }
}
