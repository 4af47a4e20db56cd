//! Reproducible command-line runs: config, artifact writing and the
//! subcommand implementations behind the `acopf` binary.

use crate::analysis::{checks, AxisSpec, LandscapeGrid};
use crate::casefile::Network;
use crate::escape::{self, EscapeTrace};
use crate::model::{AcopfProblem, PrimalPoint, ReducedNetwork};
use crate::nlp::{SolveOptions, SolveOutcome};
use crate::oracle::{self, Enumeration};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit-code contract: 0 ok, 1 usage, 2 input, 3 numeric failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub case: String,
    pub seed: u64,
    pub n_starts: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub out_dir: String,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        let blob = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(blob.as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, ..SolveOptions::default() }
    }
}

/// Header lines stamped into every CSV artifact.
fn csv_header(config: &RunConfig) -> String {
    format!("# tool_version={VERSION}\n# config_hash={}\n", config.hash())
}

pub fn write_artifact(dir: &Path, name: &str, content: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

/// Wall-clock metadata lives in its own file so every other artifact is
/// byte-identical across reruns of the same config and seed.
pub fn write_metadata(dir: &Path, config: &RunConfig, wall_ms: f64) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Meta<'a> {
        tool_version: &'a str,
        config: &'a RunConfig,
        config_hash: String,
        unix_time_s: u64,
        wall_ms: f64,
    }
    let meta = Meta {
        tool_version: VERSION,
        config,
        config_hash: config.hash(),
        unix_time_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_ms,
    };
    let _ = write_artifact(dir, "run_meta.json", &serde_json::to_string_pretty(&meta).unwrap())?;
    Ok(())
}

#[derive(Serialize)]
struct OutcomeArtifact<'a> {
    tool_version: &'a str,
    config_hash: String,
    status: String,
    objective: f64,
    kkt_residual: f64,
    iterations: usize,
    theta: Vec<f64>,
    v: Vec<f64>,
    pg: Vec<f64>,
    qg: Vec<f64>,
    mu_p: Vec<f64>,
    mu_q: Vec<f64>,
}

pub fn outcome_json(
    config: &RunConfig,
    problem: &AcopfProblem,
    out: &SolveOutcome,
) -> String {
    let point = problem.primal_from_x(&out.primal);
    let (mu_p, mu_q) = problem.split_duals(&out.eq_duals);
    let art = OutcomeArtifact {
        tool_version: VERSION,
        config_hash: config.hash(),
        status: format!("{:?}", out.status),
        objective: out.objective,
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
        theta: point.theta,
        v: point.v,
        pg: point.pg,
        qg: point.qg,
        mu_p,
        mu_q,
    };
    serde_json::to_string_pretty(&art).unwrap()
}

/// Reduced-problem outcome (fixed voltages): angles only.
#[derive(Serialize)]
pub struct ReducedOutcomeArtifact {
    pub tool_version: String,
    pub config_hash: String,
    pub status: String,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub theta: Vec<f64>,
    pub mu: Vec<f64>,
}

pub fn reduced_outcome_json(config: &RunConfig, out: &SolveOutcome) -> String {
    let art = ReducedOutcomeArtifact {
        tool_version: VERSION.to_string(),
        config_hash: config.hash(),
        status: format!("{:?}", out.status),
        objective: out.objective,
        kkt_residual: out.kkt_residual,
        iterations: out.iterations,
        theta: out.primal.clone(),
        mu: out.eq_duals.clone(),
    };
    serde_json::to_string_pretty(&art).unwrap()
}

/// Per-iteration solver trace (iteration, objective, KKT residual, barrier).
pub fn solver_trace_csv(config: &RunConfig, out: &SolveOutcome) -> String {
    let mut s = csv_header(config);
    s.push_str("iteration,objective,kkt_residual,barrier\n");
    for r in &out.trace {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            r.iteration, r.objective, r.kkt_residual, r.barrier
        ));
    }
    s
}

/// One CSV row per escape stage. The wall_ms column is timing and excluded
/// from reproducibility comparisons.
pub fn escape_trace_csv(config: &RunConfig, traces: &[EscapeTrace]) -> String {
    let mut s = csv_header(config);
    s.push_str("trace,outer,stage,cost,kkt_residual,wall_ms\n");
    for (t, tr) in traces.iter().enumerate() {
        for st in &tr.stages {
            s.push_str(&format!(
                "{},{},{},{:.16e},{:.16e},{:.3}\n",
                t,
                st.outer,
                st.stage.as_str(),
                st.cost,
                st.kkt_residual,
                st.wall_ms
            ));
        }
    }
    s
}

#[derive(Serialize)]
struct EscapeSummary<'a> {
    tool_version: &'a str,
    config_hash: String,
    n_traces: usize,
    failures: usize,
    best_cost: f64,
    fraction_at_best: &'a [f64],
    mean_normalized_cost: &'a [f64],
    per_trace_best: Vec<f64>,
    per_trace_iterations_to_best: Vec<usize>,
    per_trace_final_status: Vec<String>,
}

pub fn escape_summary_json(
    config: &RunConfig,
    traces: &[EscapeTrace],
    agg: &escape::Aggregate,
) -> String {
    let art = EscapeSummary {
        tool_version: VERSION,
        config_hash: config.hash(),
        n_traces: traces.len(),
        failures: agg.failures,
        best_cost: agg.best_cost,
        fraction_at_best: &agg.fraction_at_best,
        mean_normalized_cost: &agg.mean_normalized_cost,
        per_trace_best: traces.iter().map(|t| t.best_cost).collect(),
        per_trace_iterations_to_best: traces.iter().map(|t| t.iterations_to_best).collect(),
        per_trace_final_status: traces
            .iter()
            .map(|t| format!("{:?}", t.final_status))
            .collect(),
    };
    serde_json::to_string_pretty(&art).unwrap()
}

/// Cluster report: one row per distinct solution.
pub fn enumeration_csv(config: &RunConfig, e: &Enumeration) -> String {
    let mut s = csv_header(config);
    s.push_str("cluster,cost,occurrences,max_kkt_residual\n");
    for (i, c) in e.clusters.iter().enumerate() {
        s.push_str(&format!(
            "{},{:.16e},{},{:.16e}\n",
            i, c.cost, c.occurrences, c.max_kkt_residual
        ));
    }
    s
}

#[derive(Serialize)]
struct Witness<'a> {
    cluster: usize,
    cost: f64,
    occurrences: usize,
    theta: &'a [f64],
    v: &'a [f64],
    pg: &'a [f64],
    qg: &'a [f64],
}

pub fn enumeration_witnesses_json(config: &RunConfig, e: &Enumeration) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        tool_version: &'a str,
        config_hash: String,
        seed: u64,
        n_starts: usize,
        failed_solves: usize,
        witnesses: Vec<Witness<'a>>,
    }
    let witnesses = e
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| Witness {
            cluster: i,
            cost: c.cost,
            occurrences: c.occurrences,
            theta: &c.point.theta,
            v: &c.point.v,
            pg: &c.point.pg,
            qg: &c.point.qg,
        })
        .collect();
    let doc = Doc {
        tool_version: VERSION,
        config_hash: config.hash(),
        seed: e.seed,
        n_starts: e.n_starts,
        failed_solves: e.failed_solves,
        witnesses,
    };
    serde_json::to_string_pretty(&doc).unwrap()
}

/// Grid CSV: axis description header rows, then one value row per first-axis
/// sample.
pub fn landscape_csv(config: &RunConfig, grid: &LandscapeGrid) -> String {
    let mut s = csv_header(config);
    for (i, a) in grid.axes.iter().enumerate() {
        s.push_str(&format!(
            "# axis{},label={},min={:.12e},max={:.12e},step={:.12e},samples={}\n",
            i,
            a.label,
            a.min,
            a.max,
            a.step,
            a.samples()
        ));
    }
    if grid.axes.len() == 1 {
        s.push_str(&format!("{},value\n", grid.axes[0].label));
        for (i, v) in grid.values.iter().enumerate() {
            let x = grid.axes[0].min + i as f64 * grid.axes[0].step;
            s.push_str(&format!("{x:.12e},{v:.16e}\n"));
        }
    } else {
        let n1 = grid.axes[1].samples();
        s.push_str("# rows follow axis0, columns follow axis1\n");
        for (i, row) in grid.values.chunks(n1).enumerate() {
            let x = grid.axes[0].min + i as f64 * grid.axes[0].step;
            s.push_str(&format!("{x:.12e}"));
            for v in row {
                s.push_str(&format!(",{v:.16e}"));
            }
            s.push('\n');
        }
    }
    s
}

pub fn landscape_markers_json(config: &RunConfig, grid: &LandscapeGrid) -> String {
    #[derive(Serialize)]
    struct Marker<'a> {
        primal: &'a [f64],
        cost: f64,
        grad_norm: f64,
        hessian_class: String,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        tool_version: &'a str,
        config_hash: String,
        axes: &'a [AxisSpec],
        markers: Vec<Marker<'a>>,
    }
    let doc = Doc {
        tool_version: VERSION,
        config_hash: config.hash(),
        axes: &grid.axes,
        markers: grid
            .markers
            .iter()
            .map(|m| Marker {
                primal: &m.primal,
                cost: m.cost,
                grad_norm: m.grad_norm,
                hessian_class: m.hessian_class.as_str().to_string(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).unwrap()
}

pub fn checks_json(config: &RunConfig, results: &[checks::CheckResult]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        tool_version: &'a str,
        config_hash: String,
        results: &'a [checks::CheckResult],
        all_passed: bool,
    }
    let doc = Doc {
        tool_version: VERSION,
        config_hash: config.hash(),
        results,
        all_passed: results.iter().all(|r| r.passed),
    };
    serde_json::to_string_pretty(&doc).unwrap()
}

/// Uniform random full-network starts for escape batches.
pub fn sample_starts(
    net: &Network,
    problem: &AcopfProblem,
    n: usize,
    seed: u64,
) -> Vec<PrimalPoint> {
    let _ = net;
    oracle::random_starts(problem, n, seed)
        .into_iter()
        .map(|x| problem.primal_from_x(&x))
        .collect()
}

/// Parses a `--start` argument: `flat`, or a comma-separated angle list for
/// reduced runs.
pub fn parse_start(spec: &str) -> Result<Option<Vec<f64>>, String> {
    if spec == "flat" {
        return Ok(None);
    }
    spec.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad start value `{t}`: {e}")))
        .collect::<Result<Vec<f64>, _>>()
        .map(Some)
}

/// Builds the fixed-voltage reduction if requested.
pub fn reduced_of(net: &Network) -> Result<ReducedNetwork, String> {
    ReducedNetwork::from_network(net)
}
