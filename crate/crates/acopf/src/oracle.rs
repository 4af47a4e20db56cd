//! Brute-force ground truth at desk scale: stationary-point enumeration by
//! grid search, multistart solution clustering, best-known-cost
//! certification, and the closed forms of the two-bus line.

use crate::analysis::{hessian_classify, HessianClass};
use crate::casefile::Network;
use crate::escape::EscapeTrace;
use crate::model::{balance_residuals, sampling_box, AcopfProblem, NlpProblem, PrimalPoint};
use crate::nlp::{self, SolveOptions, SolveOutcome, SolveStatus};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("infeasible two-bus load: min_θ h(θ) = {margin:.6} > 0")]
    InfeasibleLoad { margin: f64 },
    #[error("degenerate arctangent argument: mu + c' = 0")]
    DegenerateMinimizer,
    #[error("denominator vanishes at theta = atan(b/g)")]
    RidgeDenominator,
    #[error("grid of {0} samples exceeds the 1e8 guard")]
    GridTooLarge(u128),
    #[error("grid search supports dimension 1..=3, got {0}")]
    BadDimension(usize),
    #[error("invalid two-bus parameters: {0}")]
    BadParameters(String),
}

/// A located stationary point of a reduced objective.
#[derive(Debug, Clone)]
pub struct StationaryPoint {
    pub primal: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub hessian_class: HessianClass,
    pub basin_tag: Option<String>,
}

/// The two roots of `h(θ) = l + g − g cosθ − b sinθ` on `(-π/2, 3π/2)`,
/// found by bisection on the two monotone intervals split at
/// `atan(b/g)`:  `-π/2 < θ* < atan(b/g) < θ̄`.
pub fn two_bus_roots(g: f64, b: f64, l: f64) -> Result<(f64, f64), OracleError> {
    if !(g > 0.0 && b > 0.0 && l.is_finite()) {
        return Err(OracleError::BadParameters(format!("g={g}, b={b}, l={l}")));
    }
    let h = |t: f64| l + g - g * t.cos() - b * t.sin();
    let ridge = (b / g).atan();
    let margin = h(ridge); // the minimum of h on the window
    if margin >= 0.0 {
        return Err(OracleError::InfeasibleLoad { margin });
    }
    if h(-std::f64::consts::FRAC_PI_2) <= 0.0 {
        return Err(OracleError::BadParameters(
            "h(-π/2) <= 0: load outside the supported window".into(),
        ));
    }
    let bisect = |mut a: f64, mut c: f64| -> f64 {
        // sign(h(a)) != sign(h(c)) by construction
        let mut fa = h(a);
        for _ in 0..200 {
            let m = 0.5 * (a + c);
            let fm = h(m);
            if fm == 0.0 {
                return m;
            }
            if (fa > 0.0) == (fm > 0.0) {
                a = m;
                fa = fm;
            } else {
                c = m;
            }
            if (c - a).abs() < 1e-15 {
                break;
            }
        }
        0.5 * (a + c)
    };
    let theta_star = bisect(-std::f64::consts::FRAC_PI_2, ridge);
    let theta_bar = bisect(ridge, ridge + std::f64::consts::PI);
    Ok((theta_star, theta_bar))
}

/// The multiplier of the two-bus balance constraint expressed through the
/// stationary angle (unit marginal cost): `μ = -(g sinθ + b cosθ)/(g sinθ - b cosθ)`.
pub fn mu_of_theta_2bus(g: f64, b: f64, theta: f64) -> Result<f64, OracleError> {
    let den = g * theta.sin() - b * theta.cos();
    if den.abs() < 1e-12 * (g.abs() + b.abs()) {
        return Err(OracleError::RidgeDenominator);
    }
    Ok(-(g * theta.sin() + b * theta.cos()) / den)
}

/// The interior minimizer of the two-bus partial Lagrangian (k = 0 branch):
/// `θ̂ = atan(((μ - c')/(μ + c')) · b/g)`, which lands in `(-π/2, atan(b/g))`.
pub fn lagrangian_minimizer_2bus(
    g: f64,
    b: f64,
    c_prime: f64,
    mu: f64,
) -> Result<f64, OracleError> {
    let den = mu + c_prime;
    if den.abs() < 1e-12 * (mu.abs() + c_prime.abs() + 1.0) {
        return Err(OracleError::DegenerateMinimizer);
    }
    Ok((((mu - c_prime) / den) * b / g).atan())
}

/// Per-axis ranges of a search box.
#[derive(Debug, Clone)]
pub struct GridBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GridBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        GridBox { lower, upper }
    }
}

/// Exhaustive sampling of a reduced smooth objective over a box followed by a
/// descent polish of every grid cell that is minimal among its neighbors.
/// Returns interior local minimizers (boundary artifacts and unconverged
/// polishes are discarded), duplicates merged at infinity-distance 1e-3,
/// sorted by cost then lexicographically.
pub fn grid_search(
    objective: &dyn NlpProblem,
    search: &GridBox,
    step: f64,
) -> Result<Vec<StationaryPoint>, OracleError> {
    let dim = search.lower.len();
    if dim == 0 || dim > 3 {
        return Err(OracleError::BadDimension(dim));
    }
    assert!(step > 0.0, "step must be positive");
    let mut counts = Vec::with_capacity(dim);
    let mut total: u128 = 1;
    for a in 0..dim {
        let n = ((search.upper[a] - search.lower[a]) / step).floor() as usize + 1;
        assert!(n >= 2, "axis {a} has fewer than 2 samples");
        counts.push(n);
        total = total.saturating_mul(n as u128);
    }
    if total > 100_000_000 {
        return Err(OracleError::GridTooLarge(total));
    }

    let coord = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, &i)| search.lower[a] + i as f64 * step)
            .collect()
    };

    // Dense sample pass.
    let mut values = vec![0.0f64; total as usize];
    let mut idx = vec![0usize; dim];
    for flat in 0..total as usize {
        let mut rem = flat;
        for a in (0..dim).rev() {
            idx[a] = rem % counts[a];
            rem /= counts[a];
        }
        values[flat] = objective.objective(&coord(&idx));
    }

    // Cells minimal among all neighbors (including diagonals).
    let mut candidates = Vec::new();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * counts[a + 1];
        }
        s
    };
    'cells: for flat in 0..total as usize {
        let mut rem = flat;
        for a in (0..dim).rev() {
            idx[a] = rem % counts[a];
            rem /= counts[a];
        }
        let v = values[flat];
        let mut strictly_below_some = false;
        let mut offs = vec![-1i64; dim];
        loop {
            if offs.iter().any(|&o| o != 0) {
                let mut ok = true;
                let mut nflat = 0usize;
                for a in 0..dim {
                    let ni = idx[a] as i64 + offs[a];
                    if ni < 0 || ni >= counts[a] as i64 {
                        ok = false;
                        break;
                    }
                    nflat += ni as usize * strides[a];
                }
                if ok && values[nflat] < v {
                    continue 'cells;
                }
                if ok && values[nflat] > v {
                    strictly_below_some = true;
                }
            }
            // advance offsets in {-1,0,1}^dim
            let mut a = 0;
            loop {
                if a == dim {
                    break;
                }
                offs[a] += 1;
                if offs[a] <= 1 {
                    break;
                }
                offs[a] = -1;
                a += 1;
            }
            if a == dim {
                break;
            }
        }
        // Plateaus (no strictly larger neighbor anywhere) are not minima.
        if strictly_below_some {
            candidates.push(coord(&idx));
        }
    }

    // Polish candidates inside the box; keep interior converged minima.
    let polish_opts = SolveOptions {
        tol: 1e-9,
        max_iter: 200,
        escape_saddles: true,
        ..SolveOptions::default()
    };
    let boxed = BoxClamped { inner: objective, lo: &search.lower, hi: &search.upper };
    let mut found: Vec<StationaryPoint> = Vec::new();
    for cand in candidates {
        let out = nlp::minimize(&boxed, &cand, &polish_opts);
        if out.status != SolveStatus::LocalOptimal {
            continue;
        }
        let x = out.primal;
        // Interior test: polished point must sit away from the box edge.
        let mut interior = true;
        for a in 0..dim {
            let w = search.upper[a] - search.lower[a];
            if x[a] - search.lower[a] < 1e-4 * w || search.upper[a] - x[a] < 1e-4 * w {
                interior = false;
            }
        }
        if !interior {
            continue;
        }
        let mut grad = vec![0.0; dim];
        objective.objective_grad(&x, &mut grad);
        let grad_norm = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if grad_norm > 1e-6 {
            continue;
        }
        let mut hess = DMatrix::zeros(dim, dim);
        objective.lagrangian_hessian(&x, 1.0, &[], &[], &mut hess);
        let class = match hessian_classify(&hess, 1e-8) {
            Ok(report) => report.class,
            Err(_) => continue,
        };
        if found
            .iter()
            .any(|p| inf_distance(&p.primal, &x, &vec![false; dim]) <= 1e-3)
        {
            continue;
        }
        found.push(StationaryPoint {
            cost: objective.objective(&x),
            primal: x,
            grad_norm,
            hessian_class: class,
            basin_tag: None,
        });
    }
    found.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then_with(|| a.primal.partial_cmp(&b.primal).unwrap())
    });
    Ok(found)
}

struct BoxClamped<'a> {
    inner: &'a dyn NlpProblem,
    lo: &'a [f64],
    hi: &'a [f64],
}

impl NlpProblem for BoxClamped<'_> {
    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
    fn n_eq(&self) -> usize {
        0
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.to_vec(), self.hi.to_vec())
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.inner.objective(x)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        self.inner.objective_grad(x, grad);
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        eq: &[f64],
        ineq: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        self.inner.lagrangian_hessian(x, obj_weight, eq, ineq, out);
    }
}

/// Infinity distance with optional 2π wrap-around per coordinate.
pub fn inf_distance(a: &[f64], b: &[f64], angular: &[bool]) -> f64 {
    let tau = std::f64::consts::TAU;
    a.iter()
        .zip(b)
        .zip(angular)
        .map(|((&x, &y), &wrap)| {
            let d = (x - y).abs();
            if wrap {
                let m = d % tau;
                m.min(tau - m)
            } else {
                d
            }
        })
        .fold(0.0f64, f64::max)
}

/// One cluster of coincident local solutions.
#[derive(Debug, Clone)]
pub struct SolutionCluster {
    pub outcome: SolveOutcome,
    pub point: PrimalPoint,
    pub cost: f64,
    pub occurrences: usize,
    pub max_kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub clusters: Vec<SolutionCluster>,
    pub failed_solves: usize,
    pub n_starts: usize,
    pub seed: u64,
}

/// Uniform random starts inside the sampling box.
pub fn random_starts(problem: &AcopfProblem, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = sampling_box(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..problem.n_vars())
                .map(|i| rng.gen_range(lo[i]..=hi[i]))
                .collect()
        })
        .collect()
}

/// Solves the ACOPF from `n_starts` uniform random points and clusters the
/// locally optimal outcomes by infinity distance 1e-3 on `(V, θ)`, angles
/// compared modulo 2π. Representatives are sorted by cost.
pub fn multistart_enumerate(
    net: &Network,
    n_starts: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<Enumeration, crate::model::ModelError> {
    let problem = AcopfProblem::new(net)?;
    let starts = random_starts(&problem, n_starts, seed);
    let outcomes: Vec<SolveOutcome> = starts
        .par_iter()
        .map(|x0| nlp::minimize(&problem, x0, opts))
        .collect();

    let n = net.n_buses();
    let mut angular = vec![false; 2 * n];
    for a in angular.iter_mut().take(n) {
        *a = true;
    }
    let mut clusters: Vec<SolutionCluster> = Vec::new();
    let mut failed = 0usize;
    for out in outcomes {
        if out.status != SolveStatus::LocalOptimal {
            failed += 1;
            continue;
        }
        let point = problem.primal_from_x(&out.primal);
        let key: Vec<f64> = point.theta.iter().chain(point.v.iter()).copied().collect();
        let mut merged = false;
        for cl in clusters.iter_mut() {
            let ckey: Vec<f64> = cl
                .point
                .theta
                .iter()
                .chain(cl.point.v.iter())
                .copied()
                .collect();
            if inf_distance(&key, &ckey, &angular) <= 1e-3 {
                cl.occurrences += 1;
                cl.max_kkt_residual = cl.max_kkt_residual.max(out.kkt_residual);
                if out.kkt_residual < cl.outcome.kkt_residual {
                    cl.cost = out.objective;
                    cl.outcome = out.clone();
                    cl.point = point.clone();
                }
                merged = true;
                break;
            }
        }
        if !merged {
            clusters.push(SolutionCluster {
                cost: out.objective,
                max_kkt_residual: out.kkt_residual,
                point,
                outcome: out,
                occurrences: 1,
            });
        }
    }
    clusters.sort_by(|a, b| a.cost.partial_cmp(&b.cost).unwrap());
    Ok(Enumeration { clusters, failed_solves: failed, n_starts, seed })
}

/// The best-known feasible cost and its witness, collected across an
/// enumeration and any number of escape traces. Witnesses that violate the
/// power balance beyond `feas_tol` are rejected; escape traces that ended
/// above the certified cost are flagged by index.
pub struct BestKnown {
    pub cost: f64,
    pub witness: PrimalPoint,
    pub flagged_traces: Vec<usize>,
}

pub fn certify_best(
    net: &Network,
    enumeration: &Enumeration,
    escapes: &[EscapeTrace],
    feas_tol: f64,
) -> Option<BestKnown> {
    let feasible = |p: &PrimalPoint| -> bool {
        balance_residuals(net, p)
            .iter()
            .all(|(dp, dq)| dp.abs() <= feas_tol && dq.abs() <= feas_tol)
    };
    let mut best: Option<(f64, PrimalPoint)> = None;
    for cl in &enumeration.clusters {
        if feasible(&cl.point) && best.as_ref().map_or(true, |(c, _)| cl.cost < *c) {
            best = Some((cl.cost, cl.point.clone()));
        }
    }
    for tr in escapes {
        if let Some(p) = &tr.best_point {
            if feasible(p) && best.as_ref().map_or(true, |(c, _)| tr.best_cost < *c) {
                best = Some((tr.best_cost, p.clone()));
            }
        }
    }
    let (cost, witness) = best?;
    let flagged = escapes
        .iter()
        .enumerate()
        .filter(|(_, tr)| tr.best_cost > cost + 1e-6 * cost.abs().max(1.0))
        .map(|(i, _)| i)
        .collect();
    Some(BestKnown { cost, witness, flagged_traces: flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReducedNetwork, ReducedPenalized, UnconstrainedFn};

    #[test]
    fn roots_bracket_the_ridge() {
        let (ts, tb) = two_bus_roots(1.0, 4.0, 1.0).unwrap();
        let ridge = 4.0f64.atan();
        assert!(-std::f64::consts::FRAC_PI_2 < ts && ts < ridge);
        assert!(ridge < tb && tb < 1.5 * std::f64::consts::PI);
        assert!((ts - 0.2616).abs() < 1e-3);
        assert!((tb - 2.3900).abs() < 1e-3);
        // Residuals vanish.
        let h = |t: f64| 1.0 + 1.0 - t.cos() - 4.0 * t.sin();
        assert!(h(ts).abs() < 1e-12);
        assert!(h(tb).abs() < 1e-12);
    }

    #[test]
    fn zero_load_root_is_zero() {
        let (ts, _) = two_bus_roots(1.0, 4.0, 0.0).unwrap_or((0.0, 0.0));
        // l = 0 makes θ* = 0 but also h(ridge) < 0, so the call succeeds.
        let (ts2, _) = two_bus_roots(2.0, 3.0, 0.0).unwrap();
        assert!(ts.abs() < 1e-12);
        assert!(ts2.abs() < 1e-12);
    }

    #[test]
    fn infeasible_load_is_rejected_with_margin() {
        let cap = (1.0f64 + 16.0).sqrt() - 1.0;
        match two_bus_roots(1.0, 4.0, cap + 0.5) {
            Err(OracleError::InfeasibleLoad { margin }) => assert!(margin > 0.0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn mu_at_pi_over_two_is_minus_one() {
        let mu = mu_of_theta_2bus(1.0, 4.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((mu + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_positive_at_global_root() {
        let (ts, _) = two_bus_roots(1.0, 4.0, 1.0).unwrap();
        assert!(mu_of_theta_2bus(1.0, 4.0, ts).unwrap() > 0.0);
    }

    #[test]
    fn minimizer_is_stationary_for_chained_mu() {
        // Chain Eq-19-style μ(θ) through the closed-form minimizer and check
        // the stationarity identity (c'+μ) g sinθ + (c'-μ) b cosθ = 0.
        let (g, b) = (1.0, 4.0);
        for theta in [0.2616, 2.3900, 0.8] {
            let mu = mu_of_theta_2bus(g, b, theta).unwrap();
            let th_hat = lagrangian_minimizer_2bus(g, b, 1.0, mu).unwrap();
            let resid = (1.0 + mu) * g * th_hat.sin() + (1.0 - mu) * b * th_hat.cos();
            assert!(resid.abs() < 1e-10, "theta={theta}: resid={resid}");
            assert!(th_hat > -std::f64::consts::FRAC_PI_2 && th_hat < (b / g).atan());
        }
    }

    #[test]
    fn mu_equal_marginal_cost_maps_to_zero() {
        let th = lagrangian_minimizer_2bus(1.0, 4.0, 1.0, 1.0).unwrap();
        assert_eq!(th, 0.0);
        assert!(matches!(
            lagrangian_minimizer_2bus(1.0, 4.0, 1.0, -1.0),
            Err(OracleError::DegenerateMinimizer)
        ));
    }

    #[test]
    fn grid_search_finds_single_convex_minimum() {
        let f = UnconstrainedFn::new(2, |x: &[f64]| x[0] * x[0] + 2.0 * x[1] * x[1]);
        let pts = grid_search(
            &f,
            &GridBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]),
            0.05,
        )
        .unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].primal.iter().all(|v| v.abs() < 1e-6));
        assert_eq!(pts[0].hessian_class, HessianClass::PosDef);
    }

    #[test]
    fn grid_search_finds_both_two_bus_penalty_minima() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let pen = ReducedPenalized { net, rho: 50.0 };
        let pts = grid_search(
            &pen,
            &GridBox::new(
                vec![-std::f64::consts::FRAC_PI_2 + 0.02],
                vec![1.5 * std::f64::consts::PI - 0.02],
            ),
            0.01,
        )
        .unwrap();
        assert_eq!(pts.len(), 2, "penalized two-bus has exactly two minima");
        let (ts, tb) = two_bus_roots(1.0, 4.0, 1.0).unwrap();
        // For large rho the penalized minimizers sit near the roots.
        assert!((pts[0].primal[0] - ts).abs() < 0.02);
        assert!((pts[1].primal[0] - tb).abs() < 0.02);
    }

    #[test]
    fn grid_guard_refuses_oversized_boxes() {
        let f = UnconstrainedFn::new(3, |x: &[f64]| x.iter().sum());
        let e = grid_search(
            &f,
            &GridBox::new(vec![0.0; 3], vec![1000.0; 3]),
            0.001,
        );
        assert!(matches!(e, Err(OracleError::GridTooLarge(_))));
    }
}
