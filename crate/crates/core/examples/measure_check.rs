//! Scratch runner: six-measure reports for three reference 3D curves.

use std::time::Instant;

use sfc_core::enumeration::catalog;
use sfc_core::measures::measure_report;
use sfc_core::rules::CurveName;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let tol: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let depth: u32 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let names: Vec<&str> = match args.get(1).map(|s| s.as_str()) {
        Some("all") | None => vec!["A18.00.00", "A18.2b.b3", "F0.d4.b3"],
        Some(one) => vec![one],
    };
    for name in names {
        let cn: CurveName = name.parse().unwrap();
        let sys = catalog(3).build(&cn).unwrap();
        let t = Instant::now();
        let report = measure_report(&sys, tol, depth).unwrap();
        println!("{} (tol {tol}, depth {depth}, {:.1?})", name, t.elapsed());
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
}
