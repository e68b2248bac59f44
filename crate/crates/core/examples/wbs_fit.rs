//! Scratch probe: fit a homogeneous box functional to target values.
//!
//! Enumerates whole-cell gate-to-gate sections of several curves at a fixed
//! depth, collapses them to (sorted spans, min volume) profiles, then scans
//! exponent triples (x, y, z), x >= y >= z >= 0, x + y + z = 3, for
//! candidates whose per-curve suprema bracket the target values.

use sfc_core::enumeration::{catalog, CurveName};
use sfc_core::engine::Engine;
use std::collections::HashMap;
use std::str::FromStr;

fn profiles(name: &str, depth: u32) -> Vec<([i64; 3], u64)> {
    let cn = CurveName::from_str(name).unwrap();
    let sys = catalog(3).build(&cn).unwrap();
    let engine = Engine::new(&sys).unwrap();
    let cells = engine.traverse(depth);
    let n = cells.len();
    let mut map: HashMap<[i64; 3], u64> = HashMap::new();
    for i in 0..n {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (j, c) in cells.iter().enumerate().take(n).skip(i) {
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a] + 1);
            }
            let mut spans = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
            spans.sort_unstable_by(|p, q| q.cmp(p));
            let vol = (j - i + 1) as u64;
            map.entry(spans)
                .and_modify(|v| *v = (*v).min(vol))
                .or_insert(vol);
        }
    }
    let mut out: Vec<_> = map.into_iter().collect();
    out.sort();
    out
}

fn sup(profs: &[([i64; 3], u64)], x: f64, y: f64, z: f64, end_slack: f64) -> (f64, f64) {
    let mut lb = 0f64;
    let mut ub = 0f64;
    for &(s, v) in profs {
        let h = (s[0] as f64).powf(x) * (s[1] as f64).powf(y) * (s[2] as f64).powf(z);
        lb = lb.max(h / v as f64);
        let v2 = v as f64 - end_slack;
        if v2 > 0.25 {
            ub = ub.max(h / v2);
        }
    }
    (lb, ub)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let depth: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let curves = [
        ("A18.00.00", 5.56),
        ("A18.2b.b3", 4.40),
        ("F0.d4.b3", 4.05),
        ("A19.00.3c", 5.79),
        ("A18.00.36", 5.96),
        ("A18.00.db", 6.43),
    ];
    let mut profs = Vec::new();
    for (name, _) in &curves {
        let t = std::time::Instant::now();
        let p = profiles(name, depth);
        eprintln!("{name}: {} profiles ({:.1}s)", p.len(), t.elapsed().as_secs_f64());
        profs.push(p);
    }
    let step = 0.05f64;
    let mut hits = Vec::new();
    let mut xi = 0;
    loop {
        let x = 1.0 + step * xi as f64;
        if x > 3.0 + 1e-9 {
            break;
        }
        let mut yi = 0;
        loop {
            let y = step * yi as f64;
            let z = 3.0 - x - y;
            if y > x + 1e-9 || z > y + 1e-9 {
                yi += 1;
                if y > x {
                    break;
                }
                continue;
            }
            if z < -1e-9 {
                break;
            }
            let mut ok = true;
            let mut row = Vec::new();
            for (k, (_, target)) in curves.iter().enumerate() {
                let (lb, ub) = sup(&profs[k], x, y, z.max(0.0), 2.0);
                row.push((lb, ub));
                if lb > target * 1.03 || ub < target * 0.97 {
                    ok = false;
                    break;
                }
            }
            if ok {
                hits.push((x, y, z.max(0.0), row));
            }
            yi += 1;
        }
        xi += 1;
    }
    println!("depth {depth}: {} candidate exponent triples", hits.len());
    for (x, y, z, row) in &hits {
        print!("  ({x:.2},{y:.2},{z:.2}):");
        for (k, (lb, ub)) in row.iter().enumerate() {
            print!(" {}[{:.2},{:.2}]", curves[k].1, lb, ub);
        }
        println!();
    }
}
