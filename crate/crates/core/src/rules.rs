//! Rule systems describing self-similar curves.
//!
//! A system fixes a dimension `d` and a subdivision base `b`.  Every rule
//! splits the unit cube into `b^d` cells and lists them in the order the
//! curve visits them.  Each child slot names the cell, the isometry mapping
//! the unit cube onto that cell's contents, whether the child is traversed
//! in reverse, and the rule that continues inside it.
//!
//! The module provides a plain-text format, exact gate solving (the points
//! where a rule's curve enters and leaves its cube), the validity check
//! (consecutive children must hand over at a shared boundary point), and
//! equivalence of systems modulo cube isometries and direction reversal via
//! a canonical form of the minimized traversal machine.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::{boundary_class, group, Affine, GroupTable, Isometry, Point, Rat};

/// One child of a rule: a cell of the `b^d` grid, the isometry applied to
/// the child curve, a direction flag, and the rule used inside.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChildSlot {
    pub cell: Vec<i64>,
    pub map: Isometry,
    pub reversed: bool,
    pub rule: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub children: Vec<ChildSlot>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSystem {
    pub dim: usize,
    pub base: i64,
    pub start: usize,
    pub rules: Vec<Rule>,
}

/// Entrance and exit point of a rule's curve, in the rule's unit cube.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GatePair {
    pub entrance: Point,
    pub exit: Point,
}

impl GatePair {
    pub fn swapped(&self) -> GatePair {
        GatePair {
            entrance: self.exit.clone(),
            exit: self.entrance.clone(),
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: expected `sfc 1` header")]
    BadHeader { line: usize },
    #[error("line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("line {line}: unknown rule `{name}`")]
    UnknownRule { line: usize, name: String },
    #[error("line {line}: duplicate rule `{name}`")]
    DuplicateRule { line: usize, name: String },
    #[error("missing `{field}` declaration")]
    MissingField { field: &'static str },
    #[error("`start` names unknown rule `{name}`")]
    UnknownStart { name: String },
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ValidationError {
    #[error("dimension {0} unsupported (expected 1..=4)")]
    BadDimension(usize),
    #[error("base {0} unsupported (expected at least 2)")]
    BadBase(i64),
    #[error("system has no rules")]
    NoRules,
    #[error("start rule index {0} out of range")]
    BadStart(usize),
    #[error("rule `{rule}` has {got} children, expected {want}")]
    WrongChildCount {
        rule: String,
        got: usize,
        want: usize,
    },
    #[error("rule `{rule}` child {slot}: cell coordinates out of range")]
    CellOutOfRange { rule: String, slot: usize },
    #[error("rule `{rule}`: cell {cell:?} listed more than once")]
    DuplicateCell { rule: String, cell: Vec<i64> },
    #[error("rule `{rule}` child {slot}: map has wrong dimension")]
    MapDimension { rule: String, slot: usize },
    #[error("rule `{rule}` child {slot}: rule reference out of range")]
    BadRuleRef { rule: String, slot: usize },
    #[error(
        "rule `{rule}`: children {slot} and {next} do not meet \
         (exit image {exit:?}, next entrance image {entrance:?})"
    )]
    GateMismatch {
        rule: String,
        slot: usize,
        next: usize,
        exit: String,
        entrance: String,
    },
    #[error(
        "rule `{rule}`: handover between children {slot} and {next} \
         lies outside the shared cell boundary"
    )]
    GateOutsideCells {
        rule: String,
        slot: usize,
        next: usize,
    },
    #[error("start rule gate {gate:?} lies outside the unit cube")]
    GateOutsideCube { gate: String },
    #[error("start rule gate {gate:?} is interior to the cube")]
    GateInterior { gate: String },
}

impl RuleSystem {
    pub fn children_per_rule(&self) -> usize {
        (self.base as usize).pow(self.dim as u32)
    }

    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    /// Parses the plain-text format.  Lines starting with `#` and blank
    /// lines are ignored.  The first significant line must be `sfc 1`,
    /// followed by `dim`, `base` and `start` declarations in any order and
    /// one `rule` block per rule, each block listing its children in
    /// traversal order:
    ///
    /// ```text
    /// sfc 1
    /// dim 2
    /// base 2
    /// start h
    /// rule h
    /// child 0 0 map +y+x fwd h
    /// child 0 1 map +x+y fwd h
    /// child 1 1 map +x+y fwd h
    /// child 1 0 map -y-x fwd h
    /// ```
    pub fn parse(text: &str) -> Result<RuleSystem, ParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (line, header) = lines.next().ok_or(ParseError::MissingField { field: "sfc" })?;
        if header.split_whitespace().collect::<Vec<_>>() != ["sfc", "1"] {
            return Err(ParseError::BadHeader { line });
        }

        let mut dim: Option<usize> = None;
        let mut base: Option<i64> = None;
        let mut start: Option<String> = None;
        // Rule name, declaration line, raw child lines.
        let mut raw_rules: Vec<(String, usize, Vec<(usize, Vec<String>)>)> = Vec::new();

        for (line, text) in lines {
            let fields: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
            let bad = |detail: &str| ParseError::BadLine {
                line,
                detail: detail.to_owned(),
            };
            match fields[0].as_str() {
                "dim" => {
                    if fields.len() != 2 {
                        return Err(bad("expected `dim <n>`"));
                    }
                    dim = Some(fields[1].parse().map_err(|_| bad("bad dimension"))?);
                }
                "base" => {
                    if fields.len() != 2 {
                        return Err(bad("expected `base <n>`"));
                    }
                    base = Some(fields[1].parse().map_err(|_| bad("bad base"))?);
                }
                "start" => {
                    if fields.len() != 2 {
                        return Err(bad("expected `start <rule>`"));
                    }
                    start = Some(fields[1].clone());
                }
                "rule" => {
                    if fields.len() != 2 {
                        return Err(bad("expected `rule <name>`"));
                    }
                    if raw_rules.iter().any(|(n, _, _)| *n == fields[1]) {
                        return Err(ParseError::DuplicateRule {
                            line,
                            name: fields[1].clone(),
                        });
                    }
                    raw_rules.push((fields[1].clone(), line, Vec::new()));
                }
                "child" => {
                    let current = raw_rules
                        .last_mut()
                        .ok_or_else(|| bad("`child` before any `rule`"))?;
                    current.2.push((line, fields));
                }
                other => {
                    return Err(bad(&format!("unknown keyword `{other}`")));
                }
            }
        }

        let dim = dim.ok_or(ParseError::MissingField { field: "dim" })?;
        let base = base.ok_or(ParseError::MissingField { field: "base" })?;
        let start = start.ok_or(ParseError::MissingField { field: "start" })?;
        if raw_rules.is_empty() {
            return Err(ParseError::MissingField { field: "rule" });
        }
        if dim == 0 || dim > 4 {
            return Err(ParseError::BadLine {
                line: 0,
                detail: format!("dimension {dim} unsupported"),
            });
        }

        let names: Vec<String> = raw_rules.iter().map(|(n, _, _)| n.clone()).collect();
        let lookup = |line: usize, name: &str| -> Result<usize, ParseError> {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ParseError::UnknownRule {
                    line,
                    name: name.to_owned(),
                })
        };

        let mut rules = Vec::new();
        for (name, _, children_raw) in &raw_rules {
            let mut children = Vec::new();
            for (line, fields) in children_raw {
                let line = *line;
                let bad = |detail: &str| ParseError::BadLine {
                    line,
                    detail: detail.to_owned(),
                };
                // child c0 .. c(d-1) map <token> <fwd|rev> <rule>
                if fields.len() != dim + 5 {
                    return Err(bad(&format!("expected {} fields", dim + 5)));
                }
                let mut cell = Vec::new();
                for f in &fields[1..1 + dim] {
                    cell.push(f.parse::<i64>().map_err(|_| bad("bad cell coordinate"))?);
                }
                if fields[1 + dim] != "map" {
                    return Err(bad("expected `map`"));
                }
                let map = iso_of_token(&fields[2 + dim], dim)
                    .map_err(|e| bad(&format!("bad map token: {e}")))?;
                let reversed = match fields[3 + dim].as_str() {
                    "fwd" => false,
                    "rev" => true,
                    _ => return Err(bad("expected `fwd` or `rev`")),
                };
                let rule = lookup(line, &fields[4 + dim])?;
                children.push(ChildSlot {
                    cell,
                    map,
                    reversed,
                    rule,
                });
            }
            rules.push(Rule {
                name: name.clone(),
                children,
            });
        }

        let start = names
            .iter()
            .position(|n| *n == start)
            .ok_or(ParseError::UnknownStart { name: start })?;

        Ok(RuleSystem {
            dim,
            base,
            start,
            rules,
        })
    }

    /// Renders the system in the same format [`RuleSystem::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("sfc 1\n");
        out.push_str(&format!("dim {}\n", self.dim));
        out.push_str(&format!("base {}\n", self.base));
        out.push_str(&format!("start {}\n", self.rules[self.start].name));
        for rule in &self.rules {
            out.push_str(&format!("rule {}\n", rule.name));
            for slot in &rule.children {
                out.push_str("child");
                for c in &slot.cell {
                    out.push_str(&format!(" {c}"));
                }
                out.push_str(&format!(
                    " map {} {} {}\n",
                    token_of(&slot.map),
                    if slot.reversed { "rev" } else { "fwd" },
                    self.rules[slot.rule].name,
                ));
            }
        }
        out
    }
}

const AXIS_LETTERS: [char; 4] = ['x', 'y', 'z', 'w'];

/// Renders an isometry as a map token: one sign and one axis letter per
/// input axis, e.g. `+y-x` for "axis 0 to y, axis 1 reflected to x".
pub fn token_of(iso: &Isometry) -> String {
    let mut s = String::new();
    for j in 0..iso.dim() {
        s.push(if iso.neg[j] { '-' } else { '+' });
        s.push(AXIS_LETTERS[iso.perm[j]]);
    }
    s
}

/// Parses a map token, the inverse of [`token_of`].
pub fn iso_of_token(token: &str, dim: usize) -> Result<Isometry, String> {
    let chars: Vec<char> = token.chars().collect();
    if chars.len() != 2 * dim {
        return Err(format!("expected {} characters", 2 * dim));
    }
    let mut perm = vec![usize::MAX; dim];
    let mut neg = vec![false; dim];
    for j in 0..dim {
        let sign = chars[2 * j];
        let letter = chars[2 * j + 1];
        neg[j] = match sign {
            '+' => false,
            '-' => true,
            _ => return Err(format!("bad sign `{sign}`")),
        };
        perm[j] = AXIS_LETTERS[..dim]
            .iter()
            .position(|&a| a == letter)
            .ok_or_else(|| format!("bad axis `{letter}`"))?;
    }
    let mut seen = vec![false; dim];
    for &p in &perm {
        if seen[p] {
            return Err("repeated axis".to_owned());
        }
        seen[p] = true;
    }
    Ok(Isometry { perm, neg })
}

/// Structural checks that do not involve gates: child counts, cell
/// bijection, map dimensions, rule references.
pub fn check_shape(sys: &RuleSystem) -> Result<(), ValidationError> {
    if sys.dim == 0 || sys.dim > 4 {
        return Err(ValidationError::BadDimension(sys.dim));
    }
    if sys.base < 2 {
        return Err(ValidationError::BadBase(sys.base));
    }
    if sys.rules.is_empty() {
        return Err(ValidationError::NoRules);
    }
    if sys.start >= sys.rules.len() {
        return Err(ValidationError::BadStart(sys.start));
    }
    let want = sys.children_per_rule();
    for rule in &sys.rules {
        if rule.children.len() != want {
            return Err(ValidationError::WrongChildCount {
                rule: rule.name.clone(),
                got: rule.children.len(),
                want,
            });
        }
        let mut seen = vec![false; want];
        for (slot, child) in rule.children.iter().enumerate() {
            if child.cell.len() != sys.dim
                || child.cell.iter().any(|&c| c < 0 || c >= sys.base)
            {
                return Err(ValidationError::CellOutOfRange {
                    rule: rule.name.clone(),
                    slot,
                });
            }
            let code = cell_code(&child.cell, sys.base);
            if seen[code] {
                return Err(ValidationError::DuplicateCell {
                    rule: rule.name.clone(),
                    cell: child.cell.clone(),
                });
            }
            seen[code] = true;
            if child.map.dim() != sys.dim {
                return Err(ValidationError::MapDimension {
                    rule: rule.name.clone(),
                    slot,
                });
            }
            if child.rule >= sys.rules.len() {
                return Err(ValidationError::BadRuleRef {
                    rule: rule.name.clone(),
                    slot,
                });
            }
        }
    }
    Ok(())
}

/// Encodes cell coordinates as an index, axis 0 least significant.
pub fn cell_code(cell: &[i64], base: i64) -> usize {
    let mut code = 0usize;
    for &c in cell.iter().rev() {
        code = code * base as usize + c as usize;
    }
    code
}

/// Inverse of [`cell_code`].
pub fn code_cell(code: usize, base: i64, dim: usize) -> Vec<i64> {
    let mut cell = Vec::with_capacity(dim);
    let mut rest = code;
    for _ in 0..dim {
        cell.push((rest % base as usize) as i64);
        rest /= base as usize;
    }
    cell
}

/// The affine map taking a point of a child's unit cube to the parent's:
/// apply the slot isometry, then shift into the cell and shrink by `b`.
fn slot_affine(slot: &ChildSlot, base: i64) -> Affine {
    let mut a = Affine::from_isometry(&slot.map);
    let b = Rat::from_integer(base.into());
    for i in 0..a.dim() {
        for j in 0..a.mat[i].len() {
            if !num::Zero::is_zero(&a.mat[i][j]) {
                a.mat[i][j] = &a.mat[i][j] / &b;
            }
        }
        a.off[i] = (&a.off[i] + Rat::from_integer(slot.cell[i].into())) / &b;
    }
    a
}

/// Maps a point of a child slot's cube into the parent cube.
pub fn slot_point_in_parent(sys: &RuleSystem, slot: &ChildSlot, p: &Point) -> Point {
    slot_affine(slot, sys.base).apply(p)
}

/// Gates of the child slot in child-local coordinates, accounting for the
/// direction flag: a reversed child is entered through its exit gate.
pub fn effective_gates(slot: &ChildSlot, child_gates: &GatePair) -> GatePair {
    if slot.reversed {
        child_gates.swapped()
    } else {
        child_gates.clone()
    }
}

/// Solves every rule's entrance and exit gate exactly.
///
/// The entrance of a rule is the entrance of its first child (or the exit,
/// when that child is reversed), scaled into the child's cell; unfolding
/// this gives an eventually periodic chain of (rule, end) states whose
/// cycle is a contracting affine map with a unique fixed point.
pub fn solve_gates(sys: &RuleSystem) -> Result<Vec<GatePair>, ValidationError> {
    check_shape(sys)?;
    let d = sys.dim;
    let n = sys.children_per_rule();
    // Key: (rule, wants_exit).
    let mut memo: HashMap<(usize, bool), Point> = HashMap::new();

    for r in 0..sys.rules.len() {
        for end in [false, true] {
            if memo.contains_key(&(r, end)) {
                continue;
            }
            let mut path: Vec<(usize, bool)> = Vec::new();
            let mut steps: Vec<Affine> = Vec::new();
            let mut pos: HashMap<(usize, bool), usize> = HashMap::new();
            let mut cur = (r, end);
            let mut tail: Point;
            loop {
                if let Some(p) = memo.get(&cur) {
                    tail = p.clone();
                    break;
                }
                if let Some(&i) = pos.get(&cur) {
                    // steps[k] maps the gate of path[k+1] to the gate of
                    // path[k]; the cycle composition fixes path[i]'s gate.
                    let mut comp = Affine::identity(d);
                    for step in &steps[i..] {
                        comp = comp.compose(step);
                    }
                    let g = comp
                        .fixed_point()
                        .expect("subdivision step is a contraction");
                    for k in (i..path.len()).rev() {
                        let mut suffix = Affine::identity(d);
                        for step in &steps[k..] {
                            suffix = suffix.compose(step);
                        }
                        memo.insert(path[k], suffix.apply(&g));
                    }
                    memo.insert(path[i], g.clone());
                    tail = g;
                    path.truncate(i);
                    steps.truncate(i);
                    break;
                }
                pos.insert(cur, path.len());
                let rule = &sys.rules[cur.0];
                let slot = if cur.1 {
                    &rule.children[n - 1]
                } else {
                    &rule.children[0]
                };
                path.push(cur);
                steps.push(slot_affine(slot, sys.base));
                cur = (slot.rule, cur.1 ^ slot.reversed);
            }
            for k in (0..path.len()).rev() {
                tail = steps[k].apply(&tail);
                memo.insert(path[k], tail.clone());
            }
        }
    }

    Ok((0..sys.rules.len())
        .map(|r| GatePair {
            entrance: memo[&(r, false)].clone(),
            exit: memo[&(r, true)].clone(),
        })
        .collect())
}

/// Full validity check: structural shape, handover of consecutive children
/// at a point of their shared closed boundary, and start gates on the cube
/// surface.
pub fn validate_system(sys: &RuleSystem) -> Result<Vec<GatePair>, ValidationError> {
    let gates = solve_gates(sys)?;
    let b = Rat::from_integer(sys.base.into());

    let in_closed_cell = |p: &Point, cell: &[i64]| -> bool {
        p.0.iter().zip(cell.iter()).all(|(x, &c)| {
            let lo = Rat::from_integer(c.into()) / &b;
            let hi = Rat::from_integer((c + 1).into()) / &b;
            *x >= lo && *x <= hi
        })
    };

    for rule in &sys.rules {
        for (i, pair) in rule.children.windows(2).enumerate() {
            let (a, c) = (&pair[0], &pair[1]);
            let exit_local = effective_gates(a, &gates[a.rule]).exit;
            let entrance_local = effective_gates(c, &gates[c.rule]).entrance;
            let exit = slot_point_in_parent(sys, a, &exit_local);
            let entrance = slot_point_in_parent(sys, c, &entrance_local);
            if exit != entrance {
                return Err(ValidationError::GateMismatch {
                    rule: rule.name.clone(),
                    slot: i,
                    next: i + 1,
                    exit: format!("{exit:?}"),
                    entrance: format!("{entrance:?}"),
                });
            }
            if !in_closed_cell(&exit, &a.cell) || !in_closed_cell(&exit, &c.cell) {
                return Err(ValidationError::GateOutsideCells {
                    rule: rule.name.clone(),
                    slot: i,
                    next: i + 1,
                });
            }
        }
    }

    let start_gates = &gates[sys.start];
    for gate in [&start_gates.entrance, &start_gates.exit] {
        match boundary_class(gate) {
            None => {
                return Err(ValidationError::GateOutsideCube {
                    gate: format!("{gate:?}"),
                })
            }
            Some(class) if class.is_interior() => {
                return Err(ValidationError::GateInterior {
                    gate: format!("{gate:?}"),
                })
            }
            Some(_) => {}
        }
    }

    Ok(gates)
}

/// Conjugates the whole system by a cube isometry: the transformed system
/// traverses exactly the image of the original curve.
pub fn transform_system(sys: &RuleSystem, g: &Isometry) -> RuleSystem {
    let ginv = g.inverse();
    let rules = sys
        .rules
        .iter()
        .map(|rule| Rule {
            name: rule.name.clone(),
            children: rule
                .children
                .iter()
                .map(|slot| ChildSlot {
                    cell: g.apply_cell(&slot.cell, sys.base),
                    map: g.compose(&slot.map).compose(&ginv),
                    reversed: slot.reversed,
                    rule: slot.rule,
                })
                .collect(),
        })
        .collect();
    RuleSystem {
        dim: sys.dim,
        base: sys.base,
        start: sys.start,
        rules,
    }
}

/// Reverses the traversal direction: every rule lists its children in the
/// opposite order.  Child direction flags are kept as they are; a parent
/// visiting its children backwards already traverses each child backwards,
/// so the traversal at every depth is the exact reverse of the original.
/// Gates swap as a consequence.
pub fn reverse_system(sys: &RuleSystem) -> RuleSystem {
    let rules = sys
        .rules
        .iter()
        .map(|rule| Rule {
            name: rule.name.clone(),
            children: rule.children.iter().rev().cloned().collect(),
        })
        .collect();
    RuleSystem {
        dim: sys.dim,
        base: sys.base,
        start: sys.start,
        rules,
    }
}

/// Canonical form of the curve described by a system: a flat word that two
/// systems share exactly when they describe the same curve modulo cube
/// isometries (and modulo direction reversal when `allow_reversal` holds).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm(pub Vec<u32>);

/// Traversal-machine states over a system: a rule, an accumulated isometry
/// and a direction bit.  Behavior of a state is the infinite labeled tree
/// of visited cells; bisimulation classes of states are computed by
/// partition refinement and canonical forms read the quotient machine off
/// in discovery order.
struct StateSpace<'a> {
    sys: &'a RuleSystem,
    group: &'static GroupTable,
    n: usize,
    /// Group index of each slot's map, per rule.
    map_idx: Vec<Vec<u16>>,
}

impl<'a> StateSpace<'a> {
    fn new(sys: &'a RuleSystem) -> StateSpace<'a> {
        let group = group(sys.dim);
        let map_idx = sys
            .rules
            .iter()
            .map(|rule| {
                rule.children
                    .iter()
                    .map(|slot| group.index_of(&slot.map))
                    .collect()
            })
            .collect();
        StateSpace {
            sys,
            group,
            n: sys.children_per_rule(),
            map_idx,
        }
    }

    fn len(&self) -> usize {
        self.sys.rules.len() * self.group.len() * 2
    }

    fn pack(&self, rule: usize, iso: usize, rev: bool) -> u32 {
        (((rule * self.group.len() + iso) << 1) | rev as usize) as u32
    }

    fn unpack(&self, s: u32) -> (usize, usize, bool) {
        let s = s as usize;
        let rev = s & 1 == 1;
        let rest = s >> 1;
        (rest / self.group.len(), rest % self.group.len(), rev)
    }

    /// Children of a state in its traversal order, as (cell code, state).
    fn expand(&self, s: u32) -> Vec<(u32, u32)> {
        let (rule, iso, rev) = self.unpack(s);
        let g = &self.group.elems[iso];
        (0..self.n)
            .map(|k| {
                let idx = if rev { self.n - 1 - k } else { k };
                let slot = &self.sys.rules[rule].children[idx];
                let cell = g.apply_cell(&slot.cell, self.sys.base);
                let code = cell_code(&cell, self.sys.base) as u32;
                let child_iso = self.group.mult[iso][self.map_idx[rule][idx] as usize];
                (
                    code,
                    self.pack(slot.rule, child_iso as usize, rev ^ slot.reversed),
                )
            })
            .collect()
    }

    /// Bisimulation classes over all states.
    fn classes(&self) -> Vec<u32> {
        let total = self.len();
        let expansions: Vec<Vec<(u32, u32)>> = (0..total).map(|s| self.expand(s as u32)).collect();
        // Start from the depth-1 observation: the cell sequence.
        let mut class: Vec<u32> = vec![0; total];
        let mut seen: HashMap<Vec<u32>, u32> = HashMap::new();
        for s in 0..total {
            let sig: Vec<u32> = expansions[s].iter().map(|&(c, _)| c).collect();
            let next = seen.len() as u32;
            class[s] = *seen.entry(sig).or_insert(next);
        }
        loop {
            let mut seen: HashMap<Vec<u32>, u32> = HashMap::new();
            let mut next_class = vec![0u32; total];
            for s in 0..total {
                let mut sig = Vec::with_capacity(2 * self.n + 1);
                sig.push(class[s]);
                for &(c, t) in &expansions[s] {
                    sig.push(c);
                    sig.push(class[t as usize]);
                }
                let fresh = seen.len() as u32;
                next_class[s] = *seen.entry(sig).or_insert(fresh);
            }
            if next_class == class {
                return class;
            }
            class = next_class;
        }
    }

    /// Reads the reachable quotient machine from `start_state` off in
    /// breadth-first discovery order.
    fn encode(&self, class: &[u32], start_state: u32) -> Vec<u32> {
        let mut out = vec![self.sys.dim as u32, self.sys.base as u32];
        let mut id_of: HashMap<u32, u32> = HashMap::new();
        // Representative state per discovered class, in discovery order.
        let mut queue: Vec<u32> = vec![start_state];
        id_of.insert(class[start_state as usize], 0);
        let mut at = 0usize;
        while at < queue.len() {
            let s = queue[at];
            at += 1;
            for (code, child) in self.expand(s) {
                let c = class[child as usize];
                let fresh = id_of.len() as u32;
                let id = *id_of.entry(c).or_insert_with(|| {
                    queue.push(child);
                    fresh
                });
                out.push(code);
                out.push(id);
            }
        }
        out
    }
}

/// Canonical form modulo cube isometries; with `allow_reversal`, also
/// modulo direction reversal.
pub fn canonical_form(sys: &RuleSystem, allow_reversal: bool) -> CanonicalForm {
    let space = StateSpace::new(sys);
    let class = space.classes();
    let mut best: Option<Vec<u32>> = None;
    for iso in 0..space.group.len() {
        for rev in [false, true] {
            if rev && !allow_reversal {
                continue;
            }
            let word = space.encode(&class, space.pack(sys.start, iso, rev));
            if best.as_ref().map_or(true, |b| word < *b) {
                best = Some(word);
            }
        }
    }
    CanonicalForm(best.expect("group is nonempty"))
}

/// Same curve modulo isometry and reversal.
pub fn equivalent(a: &RuleSystem, b: &RuleSystem) -> bool {
    canonical_form(a, true) == canonical_form(b, true)
}

/// Same directed curve modulo isometry only.
pub fn equivalent_directed(a: &RuleSystem, b: &RuleSystem) -> bool {
    canonical_form(a, false) == canonical_form(b, false)
}

/// All (isometry index, reversal) pairs that map the curve onto itself:
/// the transformed (and possibly reversed) system traverses the same
/// directed curve.  The identity is always present.
pub fn symmetry_elements(sys: &RuleSystem) -> Vec<(usize, bool)> {
    if sys.rules.len() == 1 {
        return mono_symmetry_elements(sys);
    }
    rule_symmetry_elements(sys, sys.start)
}

/// Fast path for single-rule systems.  `(h, r)` is a symmetry exactly when
/// the transformed depth-one cells coincide with the original ones and
/// every slot's residue `(m_i^-1 h m_j, w_i ^ w_j ^ r)` with `j` the slot
/// matched to `i` is again a symmetry, so the group is the greatest set of
/// candidates closed under taking residues.
fn mono_symmetry_elements(sys: &RuleSystem) -> Vec<(usize, bool)> {
    let grp = group(sys.dim);
    let order = grp.elems.len();
    let rule = &sys.rules[sys.start];
    let n = rule.children.len();
    let maps: Vec<usize> = rule
        .children
        .iter()
        .map(|s| grp.index_of(&s.map) as usize)
        .collect();
    let code = |h: usize, r: bool| 2 * h + r as usize;
    let mut alive = vec![false; 2 * order];
    let mut residues: Vec<Vec<usize>> = vec![Vec::new(); 2 * order];
    for h in 0..order {
        'cand: for r in [false, true] {
            let mut res = Vec::with_capacity(n);
            for i in 0..n {
                let j = if r { n - 1 - i } else { i };
                let slot = &rule.children[i];
                let other = &rule.children[j];
                if grp.elems[h].apply_cell(&other.cell, sys.base) != slot.cell {
                    continue 'cand;
                }
                let m = grp.mult[grp.mult[grp.inv[maps[i]] as usize][h] as usize][maps[j]];
                res.push(code(m as usize, slot.reversed ^ other.reversed ^ r));
            }
            alive[code(h, r)] = true;
            residues[code(h, r)] = res;
        }
    }
    loop {
        let mut changed = false;
        for c in 0..2 * order {
            if alive[c] && residues[c].iter().any(|&d| !alive[d]) {
                alive[c] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::new();
    for h in 0..order {
        for r in [false, true] {
            if alive[code(h, r)] {
                out.push((h, r));
            }
        }
    }
    out
}

/// Symmetry elements of the sub-curve generated by one rule of the system,
/// computed as for [`symmetry_elements`] but rooted at `rule`.
pub fn rule_symmetry_elements(sys: &RuleSystem, rule: usize) -> Vec<(usize, bool)> {
    let space = StateSpace::new(sys);
    let class = space.classes();
    let base = class[space.pack(rule, 0, false) as usize];
    let mut out = Vec::new();
    for iso in 0..space.group.len() {
        for rev in [false, true] {
            // h maps the curve to itself iff the h-transformed traversal
            // behaves like the original, i.e. the states share a class.
            if class[space.pack(rule, iso, rev) as usize] == base {
                out.push((iso, rev));
            }
        }
    }
    out
}

/// Name of one enumerated curve: scheme type letter, scheme number within
/// the type, reversal mask and reflection mask over the eight octants (in
/// traversal order, least significant bit first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CurveName {
    pub letter: char,
    pub scheme: u32,
    pub rev_mask: u8,
    pub refl_mask: u8,
}

impl fmt::Display for CurveName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}.{:02x}.{:02x}",
            self.letter, self.scheme, self.rev_mask, self.refl_mask
        )
    }
}

impl std::str::FromStr for CurveName {
    type Err = String;

    fn from_str(s: &str) -> Result<CurveName, String> {
        let mut chars = s.chars();
        let letter = chars.next().ok_or("empty name")?;
        if !letter.is_ascii_uppercase() {
            return Err(format!("bad type letter `{letter}`"));
        }
        let rest: String = chars.collect();
        let parts: Vec<&str> = rest.split('.').collect();
        if parts.len() != 3 {
            return Err("expected <letter><scheme>.<rev>.<refl>".to_owned());
        }
        let scheme = parts[0].parse().map_err(|_| "bad scheme number")?;
        let rev_mask = u8::from_str_radix(parts[1], 16).map_err(|_| "bad reversal mask")?;
        let refl_mask = u8::from_str_radix(parts[2], 16).map_err(|_| "bad reflection mask")?;
        Ok(CurveName {
            letter,
            scheme,
            rev_mask,
            refl_mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::rat;

    fn point(coords: &[(i64, i64)]) -> Point {
        Point(coords.iter().map(|&(n, d)| rat(n, d)).collect())
    }

    #[test]
    fn mono_symmetry_fast_path_matches_bisimulation() {
        for sys in [
            fixtures::trivial1d(),
            fixtures::hilbert2d(),
            fixtures::peano2d(),
        ] {
            assert_eq!(sys.rules.len(), 1);
            let fast = mono_symmetry_elements(&sys);
            let slow = rule_symmetry_elements(&sys, sys.start);
            assert_eq!(fast, slow, "symmetries of {}", sys.rules[0].name);
            let flipped = transform_system(&sys, &group(sys.dim).elems[1]);
            assert_eq!(
                mono_symmetry_elements(&flipped),
                rule_symmetry_elements(&flipped, flipped.start)
            );
            let back = reverse_system(&sys);
            assert_eq!(
                mono_symmetry_elements(&back),
                rule_symmetry_elements(&back, back.start)
            );
        }
    }

    #[test]
    fn parse_roundtrip() {
        let sys = fixtures::hilbert2d();
        let text = sys.to_text();
        let back = RuleSystem::parse(&text).unwrap();
        assert_eq!(sys, back);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            RuleSystem::parse("sfc 2\ndim 2\n"),
            Err(ParseError::BadHeader { .. })
        ));
        assert!(matches!(
            RuleSystem::parse("sfc 1\ndim 2\nbase 2\nstart h\nrule h\nchild 0 0 map +x+y fwd q\n"),
            Err(ParseError::UnknownRule { .. })
        ));
        assert!(RuleSystem::parse("sfc 1\nbase 2\nstart h\nrule h\n").is_err());
    }

    #[test]
    fn map_tokens_roundtrip() {
        for dim in 1..=3 {
            for g in crate::geometry::all_isometries(dim) {
                let tok = token_of(&g);
                assert_eq!(iso_of_token(&tok, dim).unwrap(), g);
            }
        }
        assert!(iso_of_token("+x+x", 2).is_err());
        assert!(iso_of_token("+x", 2).is_err());
    }

    #[test]
    fn hilbert_gates() {
        let sys = fixtures::hilbert2d();
        let gates = validate_system(&sys).unwrap();
        assert_eq!(gates[0].entrance, point(&[(0, 1), (0, 1)]));
        assert_eq!(gates[0].exit, point(&[(1, 1), (0, 1)]));
    }

    #[test]
    fn peano_gates() {
        let sys = fixtures::peano2d();
        let gates = validate_system(&sys).unwrap();
        assert_eq!(gates[0].entrance, point(&[(0, 1), (0, 1)]));
        assert_eq!(gates[0].exit, point(&[(1, 1), (1, 1)]));
    }

    #[test]
    fn trivial_1d_gates() {
        let sys = fixtures::trivial1d();
        let gates = validate_system(&sys).unwrap();
        assert_eq!(gates[0].entrance, point(&[(0, 1)]));
        assert_eq!(gates[0].exit, point(&[(1, 1)]));
    }

    #[test]
    fn zorder_is_invalid() {
        let sys = fixtures::zorder2d();
        match validate_system(&sys) {
            Err(ValidationError::GateMismatch { .. }) => {}
            other => panic!("expected a gate mismatch, got {other:?}"),
        }
    }

    #[test]
    fn canonical_form_invariant_under_transform() {
        let sys = fixtures::hilbert2d();
        let base = canonical_form(&sys, true);
        let base_directed = canonical_form(&sys, false);
        for g in crate::geometry::all_isometries(2) {
            let t = transform_system(&sys, &g);
            assert!(validate_system(&t).is_ok());
            assert_eq!(canonical_form(&t, true), base);
            assert_eq!(canonical_form(&t, false), base_directed);
        }
    }

    #[test]
    fn canonical_form_invariant_under_reversal() {
        let sys = fixtures::hilbert2d();
        let rev = reverse_system(&sys);
        assert!(validate_system(&rev).is_ok());
        assert_eq!(canonical_form(&sys, true), canonical_form(&rev, true));
        // The planar curve is symmetric, so even the directed forms agree.
        assert_eq!(canonical_form(&sys, false), canonical_form(&rev, false));
    }

    #[test]
    fn canonical_form_distinguishes_curves() {
        let h = fixtures::hilbert2d();
        let p = fixtures::peano2d();
        let z = fixtures::zorder2d();
        assert_ne!(canonical_form(&h, true), canonical_form(&z, true));
        assert_ne!(canonical_form(&h, true), canonical_form(&p, true));
    }

    #[test]
    fn symmetry_elements_of_hilbert() {
        let sys = fixtures::hilbert2d();
        let elems = symmetry_elements(&sys);
        // Forward: only the identity.  Reversed: exactly one reflection.
        assert_eq!(elems.iter().filter(|&&(_, rev)| !rev).count(), 1);
        assert_eq!(elems.iter().filter(|&&(_, rev)| rev).count(), 1);
        assert!(elems.contains(&(0, false)));
    }

    #[test]
    fn transform_matches_gate_image() {
        let sys = fixtures::hilbert2d();
        let gates = solve_gates(&sys).unwrap();
        for g in crate::geometry::all_isometries(2) {
            let t = transform_system(&sys, &g);
            let tg = solve_gates(&t).unwrap();
            assert_eq!(tg[0].entrance, g.apply(&gates[0].entrance));
            assert_eq!(tg[0].exit, g.apply(&gates[0].exit));
        }
    }

    #[test]
    fn curve_name_roundtrip() {
        let name = CurveName {
            letter: 'A',
            scheme: 26,
            rev_mask: 0x2b,
            refl_mask: 0xb3,
        };
        assert_eq!(name.to_string(), "A26.2b.b3");
        assert_eq!("A26.2b.b3".parse::<CurveName>().unwrap(), name);
        assert!("26.2b.b3".parse::<CurveName>().is_err());
    }
}
