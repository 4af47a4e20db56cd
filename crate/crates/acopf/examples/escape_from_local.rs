//! Start the iterative escape loop at the strict local solution of the
//! two-bus line (voltages fixed at 1 p.u.) and watch it walk to the global
//! one: the direct solve stays put, the dualized objective erases the
//! barrier between the basins, and the warm-started re-solve lands at the
//! better root.
//!
//! ```bash
//! cargo run -p acopf --example escape_from_local
//! ```

use acopf::escape;
use acopf::model::ReducedNetwork;
use acopf::nlp::SolveOptions;
use acopf::oracle;

fn main() {
    let (g, b, load) = (1.0, 4.0, 1.0);
    let net = ReducedNetwork::two_bus(g, b, load);
    let (theta_star, theta_bar) = oracle::two_bus_roots(g, b, load).unwrap();
    println!("balance roots: global {theta_star:.4} rad, strict local {theta_bar:.4} rad");
    println!(
        "costs:         global {:.6}, strict local {:.6}",
        net.objective(&[theta_star]),
        net.objective(&[theta_bar])
    );

    let trace = escape::run_reduced(&net, &[theta_bar], 5, &SolveOptions::theory());
    println!("\nstage trace (started at the strict local root):");
    for st in &trace.stages {
        println!(
            "  outer {} {:12} cost {:+.6}  kkt {:.1e}  theta {:+.4}",
            st.outer,
            st.stage.as_str(),
            st.cost,
            st.kkt_residual,
            st.primal[0]
        );
    }
    println!(
        "\nfinal: {:?}, best cost {:.6}, reached after {} outer iteration(s)",
        trace.final_status, trace.best_cost, trace.iterations_to_best
    );
    assert!(trace.iterations_to_best == 1);
}
