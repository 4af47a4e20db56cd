//! Multistart enumeration of the distinct local solutions of a case,
//! followed by best-known-cost certification against an escape run.
//!
//! ```bash
//! cargo run --release -p acopf --example enumerate_solutions [case] [starts]
//! ```

use acopf::escape;
use acopf::nlp::SolveOptions;
use acopf::oracle;

fn main() {
    let case = std::env::args().nth(1).unwrap_or_else(|| "threebus-tree".to_string());
    let starts: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(40);
    let (net, _) = acopf::cases::load_case(&case).expect("case loads");
    let opts = SolveOptions::default();

    let e = oracle::multistart_enumerate(&net, starts, 7, &opts).expect("valid network");
    println!(
        "{case}: {} starts -> {} clusters ({} failed solves)",
        starts,
        e.clusters.len(),
        e.failed_solves
    );
    for (i, c) in e.clusters.iter().enumerate() {
        println!(
            "  cluster {i}: cost {:.6}  hits {:3}  max kkt {:.1e}  V {:?}",
            c.cost,
            c.occurrences,
            c.max_kkt_residual,
            c.point.v.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
    }

    // Escape from the worst cluster and certify the best-known cost across
    // both sources.
    if let Some(worst) = e.clusters.last() {
        let trace = escape::run(&net, &worst.point, 6, &opts).expect("escape runs");
        println!(
            "escape from worst cluster: best {:.6} after {} outer iteration(s)",
            trace.best_cost, trace.iterations_to_best
        );
        if let Some(best) = oracle::certify_best(&net, &e, std::slice::from_ref(&trace), 1e-5) {
            println!(
                "certified best cost {:.6}; traces ending above it: {:?}",
                best.cost, best.flagged_traces
            );
        }
    }
}
