//! Exhaustive enumeration of recursively defined cube-filling curves: gate
//! placements, connection schemes, the curves each scheme generates, and
//! whole-family surveys built on top of them.

mod census;
mod curves;
mod schemes;

pub use census::{
    binary_decomposable_curves, curves_with_max_bend_at_most, downward_compatible_curves,
    property_census, Census,
};
pub use curves::{
    build_mono_curve, canonical_label, catalog, curve_count, curve_labels, scheme_candidates,
    BuildError, CurveBuilder, SchemeCatalog,
};
pub use schemes::{
    any_scheme_exists, classify_gates, enumerate_schemes, gate_stabilizer, gate_swappers,
    slot_candidates, standard_configs, ConnectionScheme, GateConfig, SchemeSlot, SlotCandidate,
};
