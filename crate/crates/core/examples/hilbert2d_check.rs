//! Scratch: 2D Hilbert six-measure report.
use sfc_core::fixtures;
use sfc_core::measures::measure_report;

fn main() {
    let sys = fixtures::hilbert2d();
    let report = measure_report(&sys, 0.002, 24).unwrap();
    for row in &report.rows {
        println!(
            "  {:>5}: [{:.4}, {:.4}] depth {} certified {}",
            row.kind.name(),
            row.bounds.lower,
            row.bounds.upper,
            row.bounds.depth,
            row.bounds.certified
        );
    }
}
