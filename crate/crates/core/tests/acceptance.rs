//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//!
//! Numeric arguments restrict the run to those criteria, e.g.
//! `cargo test --test acceptance -- 3 5`.

use std::process::ExitCode;
use std::time::Instant;

use fpm_core::acceptance::CRITERIA;

fn main() -> ExitCode {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let r = (c.run)();
        println!("{}  [{:.1}s]", r.line(), start.elapsed().as_secs_f64());
        if !r.passed {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
