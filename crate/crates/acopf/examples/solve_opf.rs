//! Solve the ACOPF for a bundled case from a flat start and read out the
//! solution along with the nodal marginal prices.
//!
//! ```bash
//! cargo run --release -p acopf --example solve_opf [case]
//! ```

use acopf::cases;
use acopf::model::{AcopfProblem, PrimalPoint};
use acopf::nlp::{kkt_residual, minimize, SolveOptions};

fn main() {
    let case = std::env::args().nth(1).unwrap_or_else(|| "case9".to_string());
    let (net, warnings) = cases::load_case(&case).expect("case loads");
    for w in warnings {
        println!("warning: {w}");
    }
    let problem = AcopfProblem::new(&net).expect("valid network");
    let x0 = problem.x_from_primal(&PrimalPoint::flat(&net));
    let out = minimize(&problem, &x0, &SolveOptions::default());

    println!("status      : {:?}", out.status);
    println!("objective   : {:.6}", out.objective);
    println!("iterations  : {}", out.iterations);
    println!("kkt residual: {:.3e} (reported)", out.kkt_residual);
    println!(
        "kkt residual: {:.3e} (independent check)",
        kkt_residual(&problem, &out.primal, &out.eq_duals, &out.ineq_duals)
    );

    let point = problem.primal_from_x(&out.primal);
    let (mu_p, _mu_q) = problem.split_duals(&out.eq_duals);
    println!("\nbus  V        theta     mu_p ($/p.u.)");
    for (i, bus) in net.buses.iter().enumerate() {
        println!(
            "{:3}  {:.4}  {:+.4}  {:+.4}",
            bus.id, point.v[i], point.theta[i], mu_p[i]
        );
    }
}
