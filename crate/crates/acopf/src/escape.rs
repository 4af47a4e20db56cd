//! The iterative escape loop: solve the ACOPF, dualize the power balances at
//! the solution, minimize the resulting partial Lagrangian from the same
//! initial point, and re-solve the ACOPF warm-started at that minimizer.
//! Stop as soon as a warm-started solve fails to reduce the cost.

use crate::casefile::Network;
use crate::model::{
    AcopfProblem, ModelError, PartialLagrangianProblem, PrimalPoint, ReducedAcopf,
    ReducedLagrangian, ReducedNetwork,
};
use crate::nlp::{self, SolveOptions, SolveOutcome, SolveStatus};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Relative decrease below which a warm-started solve counts as "no
/// improvement" (the line-5 termination rule).
pub const NO_IMPROVEMENT_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    AcopfSolve,
    LagrangianSolve,
    WarmStartedAcopfSolve,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::AcopfSolve => "acopf",
            Stage::LagrangianSolve => "lagrangian",
            Stage::WarmStartedAcopfSolve => "warm_acopf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FinalStatus {
    /// Terminated by the no-improvement rule.
    Converged,
    MaxOuterIters,
    SolverFailure,
}

/// One solver call inside the outer loop.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub outer: usize,
    pub stage: Stage,
    /// Objective value of the subproblem solved at this stage (generation
    /// cost for the ACOPF stages, the Lagrangian value for the dual stage).
    pub cost: f64,
    pub kkt_residual: f64,
    pub solver_status: SolveStatus,
    pub primal: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct EscapeTrace {
    pub stages: Vec<StageRecord>,
    pub final_status: FinalStatus,
    /// Lowest feasible ACOPF cost seen across all stages.
    pub best_cost: f64,
    pub best_primal: Option<Vec<f64>>,
    /// Same point mapped back to network coordinates, when available.
    pub best_point: Option<PrimalPoint>,
    /// Cost of the held solution after k completed outer iterations;
    /// entry 0 is the direct solve.
    pub held_costs: Vec<f64>,
    /// First outer iteration at which the held cost reaches `best_cost`.
    pub iterations_to_best: usize,
}

impl EscapeTrace {
    fn empty() -> Self {
        EscapeTrace {
            stages: Vec::new(),
            final_status: FinalStatus::SolverFailure,
            best_cost: f64::INFINITY,
            best_primal: None,
            best_point: None,
            held_costs: Vec::new(),
            iterations_to_best: 0,
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.stages
            .iter()
            .map(|s| s.outer + 1)
            .max()
            .unwrap_or(0)
    }

    /// Held cost clamped to the last value for iterations past termination.
    pub fn held_cost_at(&self, k: usize) -> f64 {
        if self.held_costs.is_empty() {
            f64::INFINITY
        } else {
            self.held_costs[k.min(self.held_costs.len() - 1)]
        }
    }
}

/// The two subproblems Algorithm 1 alternates between, over one fixed
/// variable space.
trait EscapeModel: Sync {
    fn solve_acopf(&self, x0: &[f64], opts: &SolveOptions) -> SolveOutcome;
    fn solve_lagrangian(&self, eq_duals: &[f64], x0: &[f64], opts: &SolveOptions) -> SolveOutcome;
    fn to_point(&self, x: &[f64]) -> Option<PrimalPoint>;
}

struct FullModel<'a> {
    problem: &'a AcopfProblem,
    net: &'a Network,
}

impl EscapeModel for FullModel<'_> {
    fn solve_acopf(&self, x0: &[f64], opts: &SolveOptions) -> SolveOutcome {
        nlp::minimize(self.problem, x0, opts)
    }
    fn solve_lagrangian(&self, eq_duals: &[f64], x0: &[f64], opts: &SolveOptions) -> SolveOutcome {
        let pl = PartialLagrangianProblem::from_eq_duals(self.net, eq_duals)
            .expect("network validated at entry");
        nlp::minimize(&pl, x0, opts)
    }
    fn to_point(&self, x: &[f64]) -> Option<PrimalPoint> {
        Some(self.problem.primal_from_x(x))
    }
}

struct ReducedModel<'a> {
    net: &'a ReducedNetwork,
}

impl EscapeModel for ReducedModel<'_> {
    fn solve_acopf(&self, x0: &[f64], opts: &SolveOptions) -> SolveOutcome {
        let p = ReducedAcopf { net: self.net.clone() };
        nlp::minimize(&p, x0, opts)
    }
    fn solve_lagrangian(&self, eq_duals: &[f64], x0: &[f64], opts: &SolveOptions) -> SolveOutcome {
        let p = ReducedLagrangian { net: self.net.clone(), mu: eq_duals.to_vec() };
        nlp::minimize(&p, x0, opts)
    }
    fn to_point(&self, _x: &[f64]) -> Option<PrimalPoint> {
        None
    }
}

fn run_model(model: &dyn EscapeModel, init: &[f64], max_outer: usize, opts: &SolveOptions) -> EscapeTrace {
    let mut trace = EscapeTrace::empty();
    let mut init = init.to_vec();
    let mut best_acopf = f64::INFINITY;

    let record = |trace: &mut EscapeTrace,
                      outer: usize,
                      stage: Stage,
                      out: &SolveOutcome,
                      wall_ms: f64| {
        trace.stages.push(StageRecord {
            outer,
            stage,
            cost: out.objective,
            kkt_residual: out.kkt_residual,
            solver_status: out.status,
            primal: out.primal.clone(),
            eq_duals: out.eq_duals.clone(),
            wall_ms,
        });
    };

    for outer in 0..max_outer {
        // Line 2: direct solve from the current initial point.
        let t0 = Instant::now();
        let a = model.solve_acopf(&init, opts);
        record(&mut trace, outer, Stage::AcopfSolve, &a, ms_since(t0));
        match a.status {
            SolveStatus::NumericFailure | SolveStatus::Infeasible => {
                trace.final_status = FinalStatus::SolverFailure;
                finalize(&mut trace, model);
                return trace;
            }
            _ => {}
        }
        if a.status == SolveStatus::LocalOptimal && a.objective < best_acopf {
            best_acopf = a.objective;
            trace.best_cost = a.objective;
            trace.best_primal = Some(a.primal.clone());
        }
        if outer == 0 {
            trace.held_costs.push(a.objective);
        }

        // Line 3: minimize the partial Lagrangian from the *same* initial
        // point, using the duals recorded at the direct solve.
        let t0 = Instant::now();
        let l = model.solve_lagrangian(&a.eq_duals, &init, opts);
        record(&mut trace, outer, Stage::LagrangianSolve, &l, ms_since(t0));
        match l.status {
            SolveStatus::NumericFailure | SolveStatus::Infeasible => {
                trace.final_status = FinalStatus::SolverFailure;
                finalize(&mut trace, model);
                return trace;
            }
            _ => {}
        }

        // Line 4: warm-start the ACOPF at the Lagrangian minimizer. That
        // point is generally infeasible for the balance equalities; it is
        // only ever used as a start.
        let t0 = Instant::now();
        let w = model.solve_acopf(&l.primal, opts);
        record(&mut trace, outer, Stage::WarmStartedAcopfSolve, &w, ms_since(t0));
        match w.status {
            SolveStatus::NumericFailure | SolveStatus::Infeasible => {
                trace.final_status = FinalStatus::SolverFailure;
                finalize(&mut trace, model);
                return trace;
            }
            _ => {}
        }
        let improved = w.status == SolveStatus::LocalOptimal
            && w.objective < best_acopf - NO_IMPROVEMENT_REL * best_acopf.abs().max(1.0);
        if w.status == SolveStatus::LocalOptimal && w.objective < best_acopf {
            best_acopf = w.objective;
            trace.best_cost = w.objective;
            trace.best_primal = Some(w.primal.clone());
        }
        trace.held_costs.push(best_acopf);

        // Line 5: stop when the warm-started solve does not reduce the cost.
        if !improved {
            trace.final_status = FinalStatus::Converged;
            finalize(&mut trace, model);
            return trace;
        }
        // Line 6: adopt the improved solution as the next initial point.
        init = w.primal.clone();
    }
    trace.final_status = FinalStatus::MaxOuterIters;
    finalize(&mut trace, model);
    trace
}

fn finalize(trace: &mut EscapeTrace, model: &dyn EscapeModel) {
    if let Some(x) = &trace.best_primal {
        trace.best_point = model.to_point(x);
    }
    let best = trace.best_cost;
    trace.iterations_to_best = trace
        .held_costs
        .iter()
        .position(|&c| c <= best + NO_IMPROVEMENT_REL * best.abs().max(1.0))
        .unwrap_or(0);
}

fn ms_since(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

/// Algorithm 1 on a full network from one initial point.
pub fn run(
    net: &Network,
    init: &PrimalPoint,
    max_outer: usize,
    opts: &SolveOptions,
) -> Result<EscapeTrace, ModelError> {
    let problem = AcopfProblem::new(net)?;
    let model = FullModel { problem: &problem, net };
    let x0 = problem.x_from_primal(init);
    Ok(run_model(&model, &x0, max_outer, opts))
}

/// Algorithm 1 on a fixed-voltage reduction; `init` is the angle vector.
pub fn run_reduced(
    net: &ReducedNetwork,
    init: &[f64],
    max_outer: usize,
    opts: &SolveOptions,
) -> EscapeTrace {
    let model = ReducedModel { net };
    run_model(&model, init, max_outer, opts)
}

/// Per-outer-iteration aggregate statistics over a batch of traces.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub best_cost: f64,
    /// Fraction of traces whose held cost matches the best cost, per outer
    /// iteration (index 0 = direct solve).
    pub fraction_at_best: Vec<f64>,
    /// Mean held cost normalized by the best cost, per outer iteration.
    pub mean_normalized_cost: Vec<f64>,
    pub failures: usize,
}

/// Runs Algorithm 1 from every provided start. Failed traces are kept (and
/// counted) without aborting the batch; aggregates are computed over the
/// successful ones.
pub fn multi_run(
    net: &Network,
    inits: &[PrimalPoint],
    max_outer: usize,
    opts: &SolveOptions,
) -> Result<(Vec<EscapeTrace>, Aggregate), ModelError> {
    assert!(!inits.is_empty(), "multi_run needs at least one start");
    let problem = AcopfProblem::new(net)?;
    let traces: Vec<EscapeTrace> = inits
        .par_iter()
        .map(|p| {
            let model = FullModel { problem: &problem, net };
            let x0 = problem.x_from_primal(p);
            run_model(&model, &x0, max_outer, opts)
        })
        .collect();
    let agg = aggregate(&traces, max_outer);
    Ok((traces, agg))
}

/// Batch statistics: the series behind the fraction-at-best and mean
/// normalized cost plots.
pub fn aggregate(traces: &[EscapeTrace], max_outer: usize) -> Aggregate {
    let ok: Vec<&EscapeTrace> = traces
        .iter()
        .filter(|t| t.best_cost.is_finite())
        .collect();
    let failures = traces.len() - ok.len();
    let best = ok
        .iter()
        .map(|t| t.best_cost)
        .fold(f64::INFINITY, f64::min);
    let n_iters = max_outer + 1;
    let mut fraction = Vec::with_capacity(n_iters);
    let mut mean_norm = Vec::with_capacity(n_iters);
    for k in 0..n_iters {
        let mut at_best = 0usize;
        let mut sum = 0.0;
        for t in &ok {
            let c = t.held_cost_at(k);
            if c <= best + 1e-5 * best.abs().max(1.0) {
                at_best += 1;
            }
            sum += c;
        }
        if ok.is_empty() {
            fraction.push(0.0);
            mean_norm.push(f64::NAN);
        } else {
            fraction.push(at_best as f64 / ok.len() as f64);
            mean_norm.push(sum / ok.len() as f64 / best);
        }
    }
    Aggregate {
        best_cost: best,
        fraction_at_best: fraction,
        mean_normalized_cost: mean_norm,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    #[test]
    fn two_bus_escape_from_strict_local_root() {
        // Fixed voltages, (g, b, l) = (1, 4, 1): started at the strict local
        // root, the loop must land on the global root's cost after one outer
        // iteration.
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let (ts, tb) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        let opts = SolveOptions::theory();
        let trace = run_reduced(&net, &[tb], 5, &opts);
        let global_cost = net.objective(&[ts]);
        let local_cost = net.objective(&[tb]);
        assert!(local_cost > global_cost);
        assert_eq!(trace.final_status, FinalStatus::Converged);
        assert!(
            (trace.held_cost_at(1) - global_cost).abs() <= 1e-6 * global_cost.abs(),
            "after one outer iteration: {} vs {}",
            trace.held_cost_at(1),
            global_cost
        );
        assert_eq!(trace.iterations_to_best, 1);
    }

    #[test]
    fn init_at_global_terminates_without_improvement() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let (ts, _) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        let opts = SolveOptions::theory();
        let trace = run_reduced(&net, &[ts], 5, &opts);
        assert_eq!(trace.final_status, FinalStatus::Converged);
        assert_eq!(trace.outer_iterations(), 1);
        assert_eq!(trace.iterations_to_best, 0);
    }

    #[test]
    fn aggregate_of_single_trace_mirrors_it() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let (_, tb) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        let trace = run_reduced(&net, &[tb], 5, &SolveOptions::theory());
        let agg = aggregate(std::slice::from_ref(&trace), 5);
        assert_eq!(agg.failures, 0);
        assert!((agg.best_cost - trace.best_cost).abs() < 1e-12);
        assert!((agg.mean_normalized_cost.last().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(*agg.fraction_at_best.last().unwrap(), 1.0);
    }

    #[test]
    fn held_costs_never_increase() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        for start in [-0.3, 0.5, 1.0, 2.0, 2.39, 3.0] {
            let trace = run_reduced(&net, &[start], 6, &SolveOptions::theory());
            for w in trace.held_costs.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "held costs increased: {w:?}");
            }
        }
    }
}
