//! Export the two-bus objective landscapes: the quadratic-penalty function
//! (two interior minima) and the dualized one (a single minimum), as CSV
//! grids with stationary-point markers, ready for any contour plotter.
//!
//! ```bash
//! cargo run -p acopf --example landscape_export [out_dir]
//! ```

use acopf::analysis::{landscape_grid, AxisSpec};
use acopf::cli::{self, RunConfig};
use acopf::model::{ReducedLagrangian, ReducedNetwork, ReducedPenalized};
use acopf::oracle;
use std::path::Path;

fn main() {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "out/landscape".to_string());
    let out_dir = Path::new(&out_dir);
    let (g, b, load) = (1.0, 4.0, 1.0);
    let net = ReducedNetwork::two_bus(g, b, load);
    let lo = -std::f64::consts::FRAC_PI_2 + 0.02;
    let hi = 1.5 * std::f64::consts::PI - 0.02;
    let axes = [AxisSpec::new("theta", lo, hi, 0.01)];
    let config = RunConfig {
        command: "landscape-example".into(),
        case: "twobus".into(),
        seed: 0,
        n_starts: 0,
        max_outer: 0,
        tol: 1e-9,
        out_dir: out_dir.display().to_string(),
    };

    let penalized = ReducedPenalized { net: net.clone(), rho: 2.0 };
    let grid = landscape_grid(&penalized, &axes).unwrap();
    println!("penalized landscape: {} interior minima", grid.markers.len());
    cli::write_artifact(out_dir, "penalized.csv", &cli::landscape_csv(&config, &grid)).unwrap();
    cli::write_artifact(
        out_dir,
        "penalized_markers.json",
        &cli::landscape_markers_json(&config, &grid),
    )
    .unwrap();

    // Duals recorded at the strict local solution.
    let (_, theta_bar) = oracle::two_bus_roots(g, b, load).unwrap();
    let mu = oracle::mu_of_theta_2bus(g, b, theta_bar).unwrap();
    let dualized = ReducedLagrangian { net, mu: vec![mu] };
    let grid = landscape_grid(&dualized, &axes).unwrap();
    println!("dualized landscape:  {} interior minimum", grid.markers.len());
    cli::write_artifact(out_dir, "dualized.csv", &cli::landscape_csv(&config, &grid)).unwrap();
    cli::write_artifact(
        out_dir,
        "dualized_markers.json",
        &cli::landscape_markers_json(&config, &grid),
    )
    .unwrap();

    println!("wrote grids to {}", out_dir.display());
}
