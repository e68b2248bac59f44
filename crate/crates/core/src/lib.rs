//! Recursive definitions of self-similar space-filling curves, tools to
//! validate and compare them, exhaustive enumeration of the vertex-gated
//! order-2 curves in three dimensions, and certified bounds on their
//! locality and bounding-box quality measures.
//!
//! A curve is described by a finite system of rules.  Each rule splits a
//! cube into `b^d` subcubes and lists them in traversal order, each child
//! carrying a cube isometry, an optional direction reversal, and the rule
//! that continues inside it.  The [`rules`] module defines the format and
//! the validity check (the traversal must be continuous), [`engine`]
//! evaluates curves at arbitrary depth, [`properties`] classifies
//! structural features, [`enumeration`] generates the complete censuses,
//! and [`measures`] computes two-sided bounds on worst-case quality
//! ratios.

pub mod engine;
pub mod enumeration;
pub mod fixtures;
pub mod geometry;
pub mod measures;
pub mod properties;
pub mod rules;
