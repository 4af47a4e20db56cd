//! The warm-start benchmark: run the escape loop from many uniform random
//! starts on the 39-bus case and print the per-iteration improvement series
//! (fraction of runs at the best-known cost, mean normalized cost).
//!
//! ```bash
//! cargo run --release -p acopf --example multistart_benchmark [starts] [seed]
//! ```

use acopf::cli;
use acopf::escape;
use acopf::model::AcopfProblem;
use acopf::nlp::SolveOptions;
use std::time::Instant;

fn main() {
    let starts: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(24);
    let seed: u64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let max_outer = 5;

    let (net, _) = acopf::cases::load_case("case39").unwrap();
    let problem = AcopfProblem::new(&net).unwrap();
    let inits = cli::sample_starts(&net, &problem, starts, seed);
    println!("case39: {} random starts (seed {seed}), up to {max_outer} outer iterations", starts);

    let t0 = Instant::now();
    let (traces, agg) = escape::multi_run(&net, &inits, max_outer, &SolveOptions::default()).unwrap();
    println!(
        "finished in {:.1}s: {} trace(s) failed, best cost {:.4}",
        t0.elapsed().as_secs_f64(),
        agg.failures,
        agg.best_cost
    );
    println!("\nouter-iter  fraction-at-best  mean-normalized-cost");
    for k in 0..=max_outer {
        println!(
            "{:9}  {:16.4}  {:20.6}",
            k, agg.fraction_at_best[k], agg.mean_normalized_cost[k]
        );
    }
    let monotone = traces
        .iter()
        .all(|t| t.held_costs.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
    println!("\nheld costs non-increasing in every trace: {monotone}");
}
