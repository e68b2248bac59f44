//! Small reference systems used across tests and examples: the classic
//! planar curve, a base-3 serpentine, a deliberately discontinuous order
//! and the one-dimensional identity.

use crate::rules::{iso_of_token, ChildSlot, Rule, RuleSystem};

fn slot(cell: &[i64], token: &str, reversed: bool, rule: usize) -> ChildSlot {
    ChildSlot {
        cell: cell.to_vec(),
        map: iso_of_token(token, cell.len()).expect("fixture map token"),
        reversed,
        rule,
    }
}

/// The classic planar curve: one rule, quadrants visited in a U shape,
/// entrance (0,0), exit (1,0).
pub fn hilbert2d() -> RuleSystem {
    RuleSystem {
        dim: 2,
        base: 2,
        start: 0,
        rules: vec![Rule {
            name: "h".to_owned(),
            children: vec![
                slot(&[0, 0], "+y+x", false, 0),
                slot(&[0, 1], "+x+y", false, 0),
                slot(&[1, 1], "+x+y", false, 0),
                slot(&[1, 0], "-y-x", false, 0),
            ],
        }],
    }
}

/// The base-3 serpentine: columns swept alternately up and down,
/// entrance (0,0), exit (1,1).
pub fn peano2d() -> RuleSystem {
    RuleSystem {
        dim: 2,
        base: 3,
        start: 0,
        rules: vec![Rule {
            name: "p".to_owned(),
            children: vec![
                slot(&[0, 0], "+x+y", false, 0),
                slot(&[0, 1], "-x+y", false, 0),
                slot(&[0, 2], "+x+y", false, 0),
                slot(&[1, 2], "+x-y", false, 0),
                slot(&[1, 1], "-x-y", false, 0),
                slot(&[1, 0], "+x-y", false, 0),
                slot(&[2, 0], "+x+y", false, 0),
                slot(&[2, 1], "-x+y", false, 0),
                slot(&[2, 2], "+x+y", false, 0),
            ],
        }],
    }
}

/// Quadrants in bit-interleaving order with identity maps.  The traversal
/// jumps between cells, so validation rejects it.
pub fn zorder2d() -> RuleSystem {
    RuleSystem {
        dim: 2,
        base: 2,
        start: 0,
        rules: vec![Rule {
            name: "z".to_owned(),
            children: vec![
                slot(&[0, 0], "+x+y", false, 0),
                slot(&[1, 0], "+x+y", false, 0),
                slot(&[0, 1], "+x+y", false, 0),
                slot(&[1, 1], "+x+y", false, 0),
            ],
        }],
    }
}

/// The identity curve on the unit interval.
pub fn trivial1d() -> RuleSystem {
    RuleSystem {
        dim: 1,
        base: 2,
        start: 0,
        rules: vec![Rule {
            name: "i".to_owned(),
            children: vec![slot(&[0], "+x", false, 0), slot(&[1], "+x", false, 0)],
        }],
    }
}
