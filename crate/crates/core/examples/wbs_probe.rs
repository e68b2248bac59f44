//! Scratch: exact whole-cell section maxima under candidate box scores.

use sfc_core::engine::Engine;
use sfc_core::enumeration::catalog;
use sfc_core::rules::CurveName;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(|s| s.as_str()).unwrap_or("A18.00.00");
    let depth: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(4);
    let cn: CurveName = name.parse().unwrap();
    let sys = catalog(3).build(&cn).unwrap();
    let engine = Engine::new(sys).unwrap();
    let cells = engine.traverse(depth);
    let n = cells.len();
    // score index: 0 = (mean pairwise-product)^{3/2}, 1 = (mean span)^3,
    // 2 = span product (box volume), 3 = max span^3.
    let mut best = [0f64; 4];
    let mut arg = [(0usize, 0usize, [0i64; 3]); 4];
    for k in 0..n {
        let mut lo = [cells[k][0], cells[k][1], cells[k][2]];
        let mut hi = lo;
        for l in k..n {
            for t in 0..3 {
                lo[t] = lo[t].min(cells[l][t]);
                hi[t] = hi[t].max(cells[l][t]);
            }
            let a = (hi[0] - lo[0] + 1) as f64;
            let b = (hi[1] - lo[1] + 1) as f64;
            let c = (hi[2] - lo[2] + 1) as f64;
            let vol = (l - k + 1) as f64;
            let s1 = (a * b + b * c + a * c) / 3.0;
            let m = (a + b + c) / 3.0;
            let scores = [
                s1 * s1.sqrt() / vol,
                m * m * m / vol,
                a * b * c / vol,
                a.max(b).max(c).powi(3) / vol,
            ];
            for (i, &s) in scores.iter().enumerate() {
                if s > best[i] {
                    best[i] = s;
                    arg[i] = (
                        k,
                        l,
                        [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1],
                    );
                }
            }
        }
    }
    println!("{name} depth {depth} ({n} cells):");
    let names = ["surface", "meanspan", "volume", "maxspan"];
    for i in 0..4 {
        let (k, l, spans) = arg[i];
        println!(
            "  {:>8}: {:.4} at ({}, {}) vol {} box {:?}",
            names[i],
            best[i],
            k,
            l,
            l - k + 1,
            spans
        );
    }
}
