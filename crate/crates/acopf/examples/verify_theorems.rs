//! Run the numeric theory-verification suite: root ordering, minimizer
//! containment, loss dominance, curvature signs, leading-principal-minor
//! agreement, voltage-bound exclusivity, Hessian classification, the 3-bus
//! definiteness pattern, and the attraction-basin sampling.
//!
//! ```bash
//! cargo run --release -p acopf --example verify_theorems
//! ```

use acopf::analysis::checks;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let results = checks::run_checks(&[], false);
    let mut all = true;
    for r in &results {
        println!("{} {:12} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all &= r.passed;
    }
    println!(
        "\n{} checks in {:.1}s: {}",
        results.len(),
        t0.elapsed().as_secs_f64(),
        if all { "all passed" } else { "FAILURES PRESENT" }
    );
    std::process::exit(if all { 0 } else { 1 });
}
