//! Thin CLI over the library: `solve`, `escape`, `enumerate`,
//! `verify-theory` and `landscape` subcommands with a fixed exit-code
//! contract (0 ok, 1 usage, 2 input, 3 numeric failure).

use acopf::analysis::{checks, landscape_grid, AxisSpec};
use acopf::cases;
use acopf::cli::{self, RunConfig};
use acopf::escape;
use acopf::model::{AcopfProblem, PrimalPoint, ReducedLagrangian, ReducedNetwork, ReducedPenalized};
use acopf::nlp::{self, SolveStatus};
use acopf::oracle;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "acopf", version, about = "AC optimal power flow study toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Built-in case name (twobus, threebus-mesh, threebus-tree, case9,
    /// case39) or a path to a case file.
    #[arg(long, default_value = "twobus")]
    case: String,
    /// RNG seed recorded in every artifact.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Convergence tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Fan-out thread cap for multistart work (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the ACOPF once and write the outcome.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// `flat`, or comma-separated angles for --fix-voltages runs.
        #[arg(long, default_value = "flat")]
        start: String,
        /// Solve the fixed-voltage angle-space reduction instead.
        #[arg(long, default_value_t = false)]
        fix_voltages: bool,
        /// Also write the per-iteration solver trace CSV.
        #[arg(long, default_value_t = false)]
        trace: bool,
    },
    /// Run the iterative partial-Lagrangian escape loop.
    Escape {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "flat")]
        start: String,
        #[arg(long, default_value_t = false)]
        fix_voltages: bool,
        /// Number of uniform random starts (1 uses --start).
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value_t = 10)]
        max_outer: usize,
    },
    /// Multistart enumeration of distinct local solutions.
    Enumerate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100)]
        starts: usize,
    },
    /// Run the named theory checks (all by default).
    VerifyTheory {
        #[command(flatten)]
        common: CommonArgs,
        /// Restrict to specific checks (repeatable).
        #[arg(long = "check")]
        checks: Vec<String>,
        /// Harness self-test: corrupt the loss formula and expect a failure.
        #[arg(long, hide = true, default_value_t = false)]
        corrupt: bool,
    },
    /// Export an objective landscape grid with stationary markers.
    Landscape {
        #[command(flatten)]
        common: CommonArgs,
        /// Which reduced objective to sample: `penalized` or `lagrangian`.
        #[arg(long, default_value = "penalized")]
        objective: String,
        /// Penalty weight for the penalized objective.
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        /// Dual source for the dualized objective: `local` or `global`.
        #[arg(long, default_value = "local")]
        mu_from: String,
        /// Grid step, rad.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => cli::EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    ExitCode::from(code as u8)
}

struct CmdError {
    code: i32,
    message: String,
}

impl CmdError {
    fn usage(msg: impl Into<String>) -> Self {
        CmdError { code: cli::EXIT_USAGE, message: msg.into() }
    }
    fn input(msg: impl Into<String>) -> Self {
        CmdError { code: cli::EXIT_INPUT, message: msg.into() }
    }
    fn numeric(msg: impl Into<String>) -> Self {
        CmdError { code: cli::EXIT_NUMERIC, message: msg.into() }
    }
    fn io(e: std::io::Error) -> Self {
        CmdError { code: cli::EXIT_INPUT, message: format!("io error: {e}") }
    }
}

fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn config_for(cmd: &str, common: &CommonArgs, n_starts: usize, max_outer: usize) -> RunConfig {
    RunConfig {
        command: cmd.to_string(),
        case: common.case.clone(),
        seed: common.seed,
        n_starts,
        max_outer,
        tol: common.tol,
        out_dir: common.out_dir.display().to_string(),
    }
}

fn load(common: &CommonArgs) -> Result<acopf::Network, CmdError> {
    let (net, warnings) = cases::load_case(&common.case).map_err(|e| CmdError::input(e.to_string()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let report = acopf::casefile::validate(&net);
    if !report.is_empty() {
        return Err(CmdError::input(format!("case failed validation: {}", report.join("; "))));
    }
    Ok(net)
}

fn run(cli_args: Cli) -> Result<(), CmdError> {
    match cli_args.command {
        Command::Solve { common, start, fix_voltages, trace } => {
            configure_jobs(common.jobs);
            let t0 = Instant::now();
            let net = load(&common)?;
            let config = config_for("solve", &common, 1, 0);
            let mut opts = config.solve_options();
            opts.trace = trace;
            let start_vals = cli::parse_start(&start).map_err(CmdError::usage)?;

            if fix_voltages {
                let rnet = ReducedNetwork::from_network(&net).map_err(CmdError::input)?;
                let x0 = match start_vals {
                    None => vec![0.0; rnet.n_angles()],
                    Some(v) if v.len() == rnet.n_angles() => v,
                    Some(v) => {
                        return Err(CmdError::usage(format!(
                            "start has {} angles, case needs {}",
                            v.len(),
                            rnet.n_angles()
                        )))
                    }
                };
                let p = acopf::model::ReducedAcopf { net: rnet };
                let out = nlp::minimize(&p, &x0, &opts);
                let dir = &common.out_dir;
                cli::write_artifact(dir, "outcome.json", &cli::reduced_outcome_json(&config, &out))
                    .map_err(CmdError::io)?;
                if trace {
                    cli::write_artifact(dir, "solver_trace.csv", &cli::solver_trace_csv(&config, &out))
                        .map_err(CmdError::io)?;
                }
                cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                    .map_err(CmdError::io)?;
                println!(
                    "status={:?} objective={:.8} kkt_residual={:.3e} theta={:?}",
                    out.status, out.objective, out.kkt_residual, out.primal
                );
                if out.status != SolveStatus::LocalOptimal {
                    return Err(CmdError::numeric(format!("solver returned {:?}", out.status)));
                }
                return Ok(());
            }

            let problem = AcopfProblem::new(&net).map_err(|e| CmdError::input(e.to_string()))?;
            if start_vals.is_some() {
                return Err(CmdError::usage(
                    "explicit angle starts require --fix-voltages; use `flat` for full solves",
                ));
            }
            let x0 = problem.x_from_primal(&PrimalPoint::flat(&net));
            let out = nlp::minimize(&problem, &x0, &opts);
            let dir = &common.out_dir;
            cli::write_artifact(dir, "outcome.json", &cli::outcome_json(&config, &problem, &out))
                .map_err(CmdError::io)?;
            if trace {
                cli::write_artifact(dir, "solver_trace.csv", &cli::solver_trace_csv(&config, &out))
                    .map_err(CmdError::io)?;
            }
            cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                .map_err(CmdError::io)?;
            println!(
                "status={:?} objective={:.8} kkt_residual={:.3e} iterations={}",
                out.status, out.objective, out.kkt_residual, out.iterations
            );
            if out.status != SolveStatus::LocalOptimal {
                return Err(CmdError::numeric(format!("solver returned {:?}", out.status)));
            }
            Ok(())
        }

        Command::Escape { common, start, fix_voltages, starts, max_outer } => {
            configure_jobs(common.jobs);
            if starts == 0 {
                return Err(CmdError::usage("--starts must be at least 1"));
            }
            let t0 = Instant::now();
            let net = load(&common)?;
            let config = config_for("escape", &common, starts, max_outer);
            let opts = config.solve_options();
            let dir = &common.out_dir;
            let start_vals = cli::parse_start(&start).map_err(CmdError::usage)?;

            let traces: Vec<escape::EscapeTrace> = if fix_voltages {
                let rnet = ReducedNetwork::from_network(&net).map_err(CmdError::input)?;
                let x0 = start_vals.unwrap_or_else(|| vec![0.0; rnet.n_angles()]);
                if x0.len() != rnet.n_angles() {
                    return Err(CmdError::usage("start length does not match angle count"));
                }
                vec![escape::run_reduced(&rnet, &x0, max_outer, &opts)]
            } else if starts == 1 {
                let init = PrimalPoint::flat(&net);
                vec![escape::run(&net, &init, max_outer, &opts)
                    .map_err(|e| CmdError::input(e.to_string()))?]
            } else {
                let problem = AcopfProblem::new(&net).map_err(|e| CmdError::input(e.to_string()))?;
                let inits = cli::sample_starts(&net, &problem, starts, common.seed);
                let (traces, _) = escape::multi_run(&net, &inits, max_outer, &opts)
                    .map_err(|e| CmdError::input(e.to_string()))?;
                traces
            };
            let agg = escape::aggregate(&traces, max_outer);
            cli::write_artifact(dir, "escape_trace.csv", &cli::escape_trace_csv(&config, &traces))
                .map_err(CmdError::io)?;
            cli::write_artifact(
                dir,
                "escape_summary.json",
                &cli::escape_summary_json(&config, &traces, &agg),
            )
            .map_err(CmdError::io)?;
            cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                .map_err(CmdError::io)?;
            println!(
                "traces={} failures={} best_cost={:.8} fraction_at_best={:?}",
                traces.len(),
                agg.failures,
                agg.best_cost,
                agg.fraction_at_best
            );
            if agg.failures == traces.len() {
                return Err(CmdError::numeric("every escape trace failed"));
            }
            Ok(())
        }

        Command::Enumerate { common, starts } => {
            configure_jobs(common.jobs);
            if starts == 0 {
                return Err(CmdError::usage("--starts must be at least 1"));
            }
            let t0 = Instant::now();
            let net = load(&common)?;
            let config = config_for("enumerate", &common, starts, 0);
            let opts = config.solve_options();
            let e = oracle::multistart_enumerate(&net, starts, common.seed, &opts)
                .map_err(|err| CmdError::input(err.to_string()))?;
            let dir = &common.out_dir;
            cli::write_artifact(dir, "clusters.csv", &cli::enumeration_csv(&config, &e))
                .map_err(CmdError::io)?;
            cli::write_artifact(
                dir,
                "witnesses.json",
                &cli::enumeration_witnesses_json(&config, &e),
            )
            .map_err(CmdError::io)?;
            cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                .map_err(CmdError::io)?;
            for (i, c) in e.clusters.iter().enumerate() {
                println!(
                    "cluster {i}: cost={:.8} occurrences={} max_kkt={:.3e}",
                    c.cost, c.occurrences, c.max_kkt_residual
                );
            }
            println!("failed solves: {}", e.failed_solves);
            if e.clusters.is_empty() {
                return Err(CmdError::numeric("no start converged to a local solution"));
            }
            Ok(())
        }

        Command::VerifyTheory { common, checks: names, corrupt } => {
            configure_jobs(common.jobs);
            let t0 = Instant::now();
            for n in &names {
                if !checks::CHECK_NAMES.contains(&n.as_str()) {
                    return Err(CmdError::usage(format!(
                        "unknown check `{n}`; available: {}",
                        checks::CHECK_NAMES.join(", ")
                    )));
                }
            }
            let config = config_for("verify-theory", &common, 0, 0);
            let results = checks::run_checks(&names, corrupt);
            let dir = &common.out_dir;
            cli::write_artifact(dir, "theory_report.json", &cli::checks_json(&config, &results))
                .map_err(CmdError::io)?;
            cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                .map_err(CmdError::io)?;
            let mut all = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                all &= r.passed;
            }
            if !all {
                return Err(CmdError::numeric("at least one theory check failed"));
            }
            Ok(())
        }

        Command::Landscape { common, objective, rho, mu_from, step } => {
            configure_jobs(common.jobs);
            if step <= 0.0 {
                return Err(CmdError::usage("--step must be positive"));
            }
            let t0 = Instant::now();
            let net = load(&common)?;
            let config = config_for("landscape", &common, 0, 0);
            let rnet = ReducedNetwork::from_network(&net).map_err(CmdError::input)?;
            let dim = rnet.n_angles();
            if dim > 2 {
                return Err(CmdError::input(
                    "landscape grids need a case whose reduction has 1 or 2 angles",
                ));
            }
            let lo = -std::f64::consts::FRAC_PI_2 + 0.02;
            let hi = 1.5 * std::f64::consts::PI - 0.02;
            let axes: Vec<AxisSpec> = (0..dim)
                .map(|i| AxisSpec::new(&format!("theta_{}", i + 1), lo, hi, step))
                .collect();
            if axes.iter().any(|a| a.samples() < 2) {
                return Err(CmdError::usage("degenerate axis: fewer than 2 samples"));
            }

            let grid = match objective.as_str() {
                "penalized" => {
                    if rho <= 0.0 {
                        return Err(CmdError::usage("--rho must be positive"));
                    }
                    let f = ReducedPenalized { net: rnet.clone(), rho };
                    landscape_grid(&f, &axes).map_err(|e| CmdError::numeric(e.to_string()))?
                }
                "lagrangian" => {
                    // Duals from a solved stationary point: `local` picks the
                    // strict local solution, `global` the best one.
                    let pen = ReducedPenalized { net: rnet.clone(), rho: 100.0 };
                    let search = oracle::GridBox::new(vec![lo; dim], vec![hi; dim]);
                    let pts = oracle::grid_search(&pen, &search, f64::max(0.02, step))
                        .map_err(|e| CmdError::numeric(e.to_string()))?;
                    if pts.is_empty() {
                        return Err(CmdError::numeric("no stationary point found for duals"));
                    }
                    let pick = match mu_from.as_str() {
                        "local" => pts.last().unwrap(),
                        "global" => pts.first().unwrap(),
                        other => {
                            return Err(CmdError::usage(format!(
                                "--mu-from must be `local` or `global`, got `{other}`"
                            )))
                        }
                    };
                    let acopf = acopf::model::ReducedAcopf { net: rnet.clone() };
                    let sol = nlp::minimize(
                        &acopf,
                        &pick.primal,
                        &acopf::nlp::SolveOptions::theory(),
                    );
                    if sol.status != SolveStatus::LocalOptimal {
                        return Err(CmdError::numeric("failed to recover duals at the picked solution"));
                    }
                    let f = ReducedLagrangian { net: rnet.clone(), mu: sol.eq_duals.clone() };
                    landscape_grid(&f, &axes).map_err(|e| CmdError::numeric(e.to_string()))?
                }
                other => {
                    return Err(CmdError::usage(format!(
                        "--objective must be `penalized` or `lagrangian`, got `{other}`"
                    )))
                }
            };
            let dir = &common.out_dir;
            cli::write_artifact(dir, "landscape.csv", &cli::landscape_csv(&config, &grid))
                .map_err(CmdError::io)?;
            cli::write_artifact(
                dir,
                "landscape_markers.json",
                &cli::landscape_markers_json(&config, &grid),
            )
            .map_err(CmdError::io)?;
            cli::write_metadata(dir, &config, t0.elapsed().as_secs_f64() * 1e3)
                .map_err(CmdError::io)?;
            println!(
                "grid {}x{} markers={}",
                grid.axes[0].samples(),
                grid.axes.get(1).map_or(1, |a| a.samples()),
                grid.markers.len()
            );
            Ok(())
        }
    }
}
