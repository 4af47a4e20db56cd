//! A dense primal-dual interior-point engine for smooth NLPs.
//!
//! Inequalities receive slacks (`g(x) + s = 0`, `s > 0`), variable bounds are
//! handled by the log barrier directly, the barrier parameter decreases
//! monotonically by a fixed factor, steps come from an inertia-corrected
//! symmetric-indefinite KKT factorization, and a filter line search
//! globalizes. On problems without equality constraints the engine refuses to
//! park on stationary points with negative curvature: it walks downhill along
//! the offending eigendirection and resumes.
//!
//! Solves are deterministic: identical inputs produce identical outputs.

pub mod ldl;

use crate::model::NlpProblem;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Convergence tolerance on the KKT error.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub mu_init: f64,
    /// Monotone barrier decrease factor.
    pub mu_shrink: f64,
    /// Relative push of the start point off its bounds.
    pub bound_push: f64,
    /// Smallest primal regularization applied when correcting inertia.
    pub reg_floor: f64,
    /// Escape stationary points with negative curvature (only on problems
    /// without equality constraints).
    pub escape_saddles: bool,
    /// Record one row per iteration in `SolveOutcome::trace`.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-4,
            max_iter: 400,
            mu_init: 0.1,
            mu_shrink: 0.2,
            bound_push: 1e-3,
            reg_floor: 1e-20,
            escape_saddles: true,
            trace: false,
        }
    }
}

impl SolveOptions {
    /// Tight tolerance used by the theory-verification suites.
    pub fn theory() -> Self {
        SolveOptions { tol: 1e-8, ..Default::default() }
    }

    pub fn with_tol(tol: f64) -> Self {
        SolveOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    LocalOptimal,
    MaxIter,
    Infeasible,
    NumericFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub kkt_residual: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    /// Bound multipliers per variable (lower, upper).
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub trace: Vec<IterRecord>,
}

impl SolveOutcome {
    pub fn is_local_optimal(&self) -> bool {
        self.status == SolveStatus::LocalOptimal
    }
}

/// Independent first-order optimality check: the largest of the stationarity,
/// primal-feasibility, dual-feasibility and complementarity infinity norms at
/// `(primal, eq_duals, ineq_duals)`. Bound multipliers are recovered by
/// projection: a variable within `1e-5` (relative) of a bound may absorb the
/// matching sign of stationarity residual.
pub fn kkt_residual(
    problem: &dyn NlpProblem,
    primal: &[f64],
    eq_duals: &[f64],
    ineq_duals: &[f64],
) -> f64 {
    let n = problem.n_vars();
    let (me, mi) = (problem.n_eq(), problem.n_ineq());
    let mut r = vec![0.0; n];
    problem.objective_grad(primal, &mut r);
    if me > 0 {
        let mut jac = DMatrix::zeros(me, n);
        problem.eq_jacobian(primal, &mut jac);
        for i in 0..me {
            for c in 0..n {
                r[c] += eq_duals[i] * jac[(i, c)];
            }
        }
    }
    if mi > 0 {
        let mut jac = DMatrix::zeros(mi, n);
        problem.ineq_jacobian(primal, &mut jac);
        for j in 0..mi {
            for c in 0..n {
                r[c] += ineq_duals[j] * jac[(j, c)];
            }
        }
    }
    // Bound multipliers are not part of the signature; recover them by
    // choosing the admissible (z_lower, z_upper) that minimizes the larger
    // of the stationarity and complementarity violations. Absorbing r > 0
    // against a lower bound at distance d leaves |r|·d/(1+d); an unbounded
    // side absorbs nothing.
    let (lo, hi) = problem.bounds();
    let mut stat: f64 = 0.0;
    for i in 0..n {
        let leftover = if r[i] >= 0.0 {
            if lo[i].is_finite() {
                let d = (primal[i] - lo[i]).max(0.0);
                r[i] * d / (1.0 + d)
            } else {
                r[i]
            }
        } else if hi[i].is_finite() {
            let d = (hi[i] - primal[i]).max(0.0);
            -r[i] * d / (1.0 + d)
        } else {
            -r[i]
        };
        stat = stat.max(leftover);
    }

    let mut feas: f64 = 0.0;
    if me > 0 {
        let mut h = vec![0.0; me];
        problem.eq_constraints(primal, &mut h);
        for v in &h {
            feas = feas.max(v.abs());
        }
    }
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    if mi > 0 {
        let mut g = vec![0.0; mi];
        problem.ineq_constraints(primal, &mut g);
        for j in 0..mi {
            feas = feas.max(g[j].max(0.0));
            dual = dual.max((-ineq_duals[j]).max(0.0));
            comp = comp.max((g[j] * ineq_duals[j]).abs());
        }
    }
    stat.max(feas).max(comp).max(dual)
}

pub fn minimize(problem: &dyn NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveOutcome {
    Ipm::new(problem, opts).run(x0)
}

// Line-search and barrier constants, IPOPT-flavored.
const KAPPA_EPS: f64 = 10.0;
const TAU_MIN: f64 = 0.99;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const ETA_PHI: f64 = 1e-8;
const S_PHI: f64 = 2.3;
const S_THETA: f64 = 1.1;
const DELTA_SW: f64 = 1.0;
const ALPHA_MIN: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 46;
const REG_INIT: f64 = 1e-4;
const REG_GROW: f64 = 8.0;
const REG_SHRINK: f64 = 1.0 / 3.0;
const REG_MAX: f64 = 1e40;
const Z_SIGMA: f64 = 1e10;
const MAX_ESCAPES: usize = 12;

struct Ipm<'a> {
    p: &'a dyn NlpProblem,
    opts: SolveOptions,
    n_full: usize,
    me: usize,
    mi: usize,
    free: Vec<usize>,
    fixed: Vec<(usize, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    full_x: Vec<f64>,
    last_reg: f64,
    /// Gradient-based scaling computed at the start point: the solver works
    /// on `scale_f·f`, `scale_h_i·h_i`, `scale_g_j·g_j`; outputs are
    /// rescaled back.
    scale_f: f64,
    scale_h: DVector<f64>,
    scale_g: DVector<f64>,
}

struct Point {
    x: DVector<f64>, // free variables
    s: DVector<f64>,
    y: DVector<f64>,
    w: DVector<f64>,
    zl: DVector<f64>,
    zu: DVector<f64>,
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    h: DVector<f64>,
    jh: DMatrix<f64>,
    g: DVector<f64>,
    jg: DMatrix<f64>,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a dyn NlpProblem, opts: &SolveOptions) -> Self {
        let n_full = p.n_vars();
        let (lo_full, hi_full) = p.bounds();
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        for i in 0..n_full {
            if lo_full[i].is_finite()
                && hi_full[i].is_finite()
                && hi_full[i] - lo_full[i] <= 1e-12 * (1.0 + lo_full[i].abs())
            {
                fixed.push((i, 0.5 * (lo_full[i] + hi_full[i])));
            } else {
                free.push(i);
            }
        }
        let lo = free.iter().map(|&i| lo_full[i]).collect();
        let hi = free.iter().map(|&i| hi_full[i]).collect();
        let me = p.n_eq();
        let mi = p.n_ineq();
        Ipm {
            p,
            opts: opts.clone(),
            n_full,
            me,
            mi,
            free,
            fixed,
            lo,
            hi,
            full_x: vec![0.0; n_full],
            last_reg: 0.0,
            scale_f: 1.0,
            scale_h: DVector::from_element(me, 1.0),
            scale_g: DVector::from_element(mi, 1.0),
        }
    }

    fn nf(&self) -> usize {
        self.free.len()
    }

    fn full(&mut self, xf: &DVector<f64>) -> &[f64] {
        for (slot, &i) in self.free.iter().enumerate() {
            self.full_x[i] = xf[slot];
        }
        for &(i, v) in &self.fixed {
            self.full_x[i] = v;
        }
        &self.full_x
    }

    fn eval(&mut self, xf: &DVector<f64>) -> Eval {
        let nf = self.nf();
        let (me, mi, n_full) = (self.me, self.mi, self.n_full);
        let free = self.free.clone();
        let x = self.full(xf).to_vec();
        let f = self.p.objective(&x) * self.scale_f;
        let mut grad_full = vec![0.0; n_full];
        self.p.objective_grad(&x, &mut grad_full);
        let grad = DVector::from_fn(nf, |i, _| grad_full[free[i]] * self.scale_f);
        let mut h = DVector::zeros(me);
        let mut jh = DMatrix::zeros(me, nf);
        if me > 0 {
            let mut hv = vec![0.0; me];
            self.p.eq_constraints(&x, &mut hv);
            h = DVector::from_fn(me, |i, _| hv[i] * self.scale_h[i]);
            let mut jfull = DMatrix::zeros(me, n_full);
            self.p.eq_jacobian(&x, &mut jfull);
            for r in 0..me {
                for (slot, &i) in free.iter().enumerate() {
                    jh[(r, slot)] = jfull[(r, i)] * self.scale_h[r];
                }
            }
        }
        let mut g = DVector::zeros(mi);
        let mut jg = DMatrix::zeros(mi, nf);
        if mi > 0 {
            let mut gv = vec![0.0; mi];
            self.p.ineq_constraints(&x, &mut gv);
            g = DVector::from_fn(mi, |j, _| gv[j] * self.scale_g[j]);
            let mut jfull = DMatrix::zeros(mi, n_full);
            self.p.ineq_jacobian(&x, &mut jfull);
            for r in 0..mi {
                for (slot, &i) in free.iter().enumerate() {
                    jg[(r, slot)] = jfull[(r, i)] * self.scale_g[r];
                }
            }
        }
        Eval { f, grad, h, jh, g, jg }
    }

    /// Computes the scaling from gradients at the start point: every row
    /// (and the objective) is scaled down so its start gradient norm is at
    /// most 100.
    fn compute_scaling(&mut self, xf: &DVector<f64>) {
        const MAX_GRAD: f64 = 100.0;
        let nf = self.nf();
        let free = self.free.clone();
        let x = self.full(xf).to_vec();
        let mut grad_full = vec![0.0; self.n_full];
        self.p.objective_grad(&x, &mut grad_full);
        let gmax = free.iter().map(|&i| grad_full[i].abs()).fold(0.0, f64::max);
        self.scale_f = (MAX_GRAD / gmax.max(MAX_GRAD)).min(1.0);
        if self.me > 0 {
            let mut jfull = DMatrix::zeros(self.me, self.n_full);
            self.p.eq_jacobian(&x, &mut jfull);
            for r in 0..self.me {
                let rmax = (0..nf).map(|c| jfull[(r, free[c])].abs()).fold(0.0, f64::max);
                self.scale_h[r] = (MAX_GRAD / rmax.max(MAX_GRAD)).min(1.0);
            }
        }
        if self.mi > 0 {
            let mut jfull = DMatrix::zeros(self.mi, self.n_full);
            self.p.ineq_jacobian(&x, &mut jfull);
            for r in 0..self.mi {
                let rmax = (0..nf).map(|c| jfull[(r, free[c])].abs()).fold(0.0, f64::max);
                self.scale_g[r] = (MAX_GRAD / rmax.max(MAX_GRAD)).min(1.0);
            }
        }
    }

    fn hessian(&mut self, xf: &DVector<f64>, y: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        let nf = self.nf();
        let free = self.free.clone();
        let x = self.full(xf).to_vec();
        let ye: Vec<f64> = (0..self.me).map(|i| y[i] * self.scale_h[i]).collect();
        let yi: Vec<f64> = (0..self.mi).map(|j| w[j] * self.scale_g[j]).collect();
        let mut hfull = DMatrix::zeros(self.n_full, self.n_full);
        self.p
            .lagrangian_hessian(&x, self.scale_f, &ye, &yi, &mut hfull);
        DMatrix::from_fn(nf, nf, |r, c| hfull[(free[r], free[c])])
    }

    fn cheap_eval(&mut self, xf: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
        let x = self.full(xf).to_vec();
        let f = self.p.objective(&x) * self.scale_f;
        let mut h = vec![0.0; self.me];
        if self.me > 0 {
            self.p.eq_constraints(&x, &mut h);
        }
        let mut g = vec![0.0; self.mi];
        if self.mi > 0 {
            self.p.ineq_constraints(&x, &mut g);
        }
        (
            f,
            DVector::from_fn(self.me, |i, _| h[i] * self.scale_h[i]),
            DVector::from_fn(self.mi, |j, _| g[j] * self.scale_g[j]),
        )
    }

    fn theta(&self, h: &DVector<f64>, g: &DVector<f64>, s: &DVector<f64>) -> f64 {
        h.iter().map(|v| v.abs()).sum::<f64>()
            + g.iter().zip(s.iter()).map(|(gj, sj)| (gj + sj).abs()).sum::<f64>()
    }

    fn phi(&self, f: f64, x: &DVector<f64>, s: &DVector<f64>, mu: f64) -> f64 {
        let mut v = f;
        for i in 0..self.nf() {
            if self.lo[i].is_finite() {
                v -= mu * (x[i] - self.lo[i]).ln();
            }
            if self.hi[i].is_finite() {
                v -= mu * (self.hi[i] - x[i]).ln();
            }
        }
        for j in 0..self.mi {
            v -= mu * s[j].ln();
        }
        v
    }

    /// Unscaled KKT error: the outer convergence test and the reported
    /// residual, in the original problem's units.
    fn kkt_error_original(&self, e: &Eval, pt: &Point) -> f64 {
        let nf = self.nf();
        let mut stat = &e.grad + e.jh.transpose() * &pt.y + e.jg.transpose() * &pt.w;
        for i in 0..nf {
            stat[i] -= pt.zl[i];
            stat[i] += pt.zu[i];
        }
        if stat.iter().any(|v| !v.is_finite()) || !e.f.is_finite() {
            return f64::INFINITY;
        }
        let mut err = stat.amax_or_zero() / self.scale_f;
        for i in 0..self.me {
            err = err.max(e.h[i].abs() / self.scale_h[i]);
        }
        for j in 0..self.mi {
            err = err.max(e.g[j].max(0.0) / self.scale_g[j]);
            err = err.max((pt.s[j] * pt.w[j]).abs() / self.scale_f);
        }
        for i in 0..nf {
            if self.lo[i].is_finite() {
                err = err.max(((pt.x[i] - self.lo[i]) * pt.zl[i]).abs() / self.scale_f);
            }
            if self.hi[i].is_finite() {
                err = err.max(((self.hi[i] - pt.x[i]) * pt.zu[i]).abs() / self.scale_f);
            }
        }
        err
    }

    /// KKT error of the scaled problem at barrier value `mu`; drives the
    /// barrier schedule and line-search bookkeeping.
    fn kkt_error(&self, e: &Eval, pt: &Point, mu: f64, original_ineq: bool) -> f64 {
        let nf = self.nf();
        let mut stat = &e.grad + e.jh.transpose() * &pt.y + e.jg.transpose() * &pt.w;
        for i in 0..nf {
            stat[i] -= pt.zl[i];
            stat[i] += pt.zu[i];
        }
        if stat.iter().any(|v| !v.is_finite()) || !e.f.is_finite() {
            return f64::INFINITY;
        }
        let mut err = stat.amax_or_zero();
        for i in 0..self.me {
            err = err.max(e.h[i].abs());
        }
        for j in 0..self.mi {
            if original_ineq {
                err = err.max(e.g[j].max(0.0));
            } else {
                err = err.max((e.g[j] + pt.s[j]).abs());
            }
            err = err.max((pt.s[j] * pt.w[j] - mu).abs());
        }
        for i in 0..nf {
            if self.lo[i].is_finite() {
                err = err.max(((pt.x[i] - self.lo[i]) * pt.zl[i] - mu).abs());
            }
            if self.hi[i].is_finite() {
                err = err.max(((self.hi[i] - pt.x[i]) * pt.zu[i] - mu).abs());
            }
        }
        err
    }

    fn run(&mut self, x0: &[f64]) -> SolveOutcome {
        let nf = self.nf();
        let has_barrier = self.mi > 0
            || self.lo.iter().any(|v| v.is_finite())
            || self.hi.iter().any(|v| v.is_finite());

        // Push the start strictly inside its box.
        let mut x = DVector::from_fn(nf, |slot, _| x0[self.free[slot]]);
        for i in 0..nf {
            let (l, u) = (self.lo[i], self.hi[i]);
            if l.is_finite() && u.is_finite() {
                let pad = self.opts.bound_push * (u - l);
                x[i] = x[i].clamp(l + pad, u - pad);
            } else if l.is_finite() {
                x[i] = x[i].max(l + self.opts.bound_push * (1.0 + l.abs()));
            } else if u.is_finite() {
                x[i] = x[i].min(u - self.opts.bound_push * (1.0 + u.abs()));
            }
            if !x[i].is_finite() {
                x[i] = 0.0;
            }
        }

        self.compute_scaling(&x);
        let mut e = self.eval(&x);
        let mu_floor = (self.opts.tol / 100.0).min(1e-6);
        let mut mu = self.opts.mu_init;

        let mut pt = self.init_point(x, &e, mu);
        // Adapt the initial barrier to how close the start already is to a
        // KKT point, so warm starts are not perturbed away.
        let e0 = self.kkt_error(&e, &pt, 0.0, true);
        mu = self.opts.mu_init.min((0.1 * e0).max(mu_floor));
        if !has_barrier {
            mu = mu_floor;
        }

        let theta0 = self.theta(&e.h, &e.g, &pt.s);
        let theta_min = 1e-4 * theta0.max(1.0);
        let theta_max = 1e4 * theta0.max(1.0);
        let mut filter: Vec<(f64, f64)> = vec![(theta_max, f64::NEG_INFINITY)];

        let mut trace = Vec::new();
        let mut escapes = 0usize;
        let mut best: Option<(f64, Point, Eval)> = None;

        let mut iter = 0usize;
        loop {
            let err0 = self.kkt_error_original(&e, &pt);
            if self.opts.trace {
                trace.push(IterRecord {
                    iteration: iter,
                    objective: e.f / self.scale_f,
                    kkt_residual: err0,
                    barrier: mu,
                });
            }
            if best.as_ref().map_or(true, |(b, _, _)| err0 < *b) {
                best = Some((err0, pt.clone_point(), e.clone_eval()));
            }

            if err0 <= self.opts.tol {
                if self.me == 0 && self.opts.escape_saddles && escapes < MAX_ESCAPES {
                    if let Some(new_x) = self.try_escape(&pt, &e) {
                        escapes += 1;
                        pt.x = new_x;
                        e = self.eval(&pt.x);
                        pt = self.reinit_duals(pt, &e, mu.max(10.0 * mu_floor));
                        filter = vec![(theta_max, f64::NEG_INFINITY)];
                        continue;
                    }
                }
                return self.finish(SolveStatus::LocalOptimal, &pt, &e, err0, iter, trace);
            }
            if iter >= self.opts.max_iter {
                let (berr, bpt, bev) = best.unwrap();
                return self.finish(SolveStatus::MaxIter, &bpt, &bev, berr, iter, trace);
            }
            iter += 1;

            // Monotone barrier decrease once the inner problem is solved.
            if has_barrier {
                let err_mu = self.kkt_error(&e, &pt, mu, false);
                if err_mu <= KAPPA_EPS * mu && mu > mu_floor {
                    mu = (self.opts.mu_shrink * mu).max(mu_floor);
                    filter = vec![(theta_max, f64::NEG_INFINITY)];
                }
            }

            // Assemble and factor the KKT system, correcting inertia.
            let step = match self.newton_step(&pt, &e, mu) {
                Some(s) => s,
                None => {
                    let (berr, bpt, bev) = best.unwrap();
                    return self.finish(SolveStatus::NumericFailure, &bpt, &bev, berr, iter, trace);
                }
            };

            // Fraction-to-boundary step caps.
            let tau = TAU_MIN.max(1.0 - mu);
            let mut alpha_p: f64 = 1.0;
            for i in 0..nf {
                if step.dx[i] < 0.0 && self.lo[i].is_finite() {
                    alpha_p = alpha_p.min(-tau * (pt.x[i] - self.lo[i]) / step.dx[i]);
                }
                if step.dx[i] > 0.0 && self.hi[i].is_finite() {
                    alpha_p = alpha_p.min(tau * (self.hi[i] - pt.x[i]) / step.dx[i]);
                }
            }
            for j in 0..self.mi {
                if step.ds[j] < 0.0 {
                    alpha_p = alpha_p.min(-tau * pt.s[j] / step.ds[j]);
                }
            }
            let mut alpha_d: f64 = 1.0;
            for j in 0..self.mi {
                if step.dw[j] < 0.0 {
                    alpha_d = alpha_d.min(-tau * pt.w[j] / step.dw[j]);
                }
            }
            for i in 0..nf {
                if step.dzl[i] < 0.0 && self.lo[i].is_finite() {
                    alpha_d = alpha_d.min(-tau * pt.zl[i] / step.dzl[i]);
                }
                if step.dzu[i] < 0.0 && self.hi[i].is_finite() {
                    alpha_d = alpha_d.min(-tau * pt.zu[i] / step.dzu[i]);
                }
            }

            // Filter line search on the primal pair (x, s).
            let theta_cur = self.theta(&e.h, &e.g, &pt.s);
            let phi_cur = self.phi(e.f, &pt.x, &pt.s, mu);
            let dphi = {
                let mut v = 0.0;
                for i in 0..nf {
                    let mut gphi = e.grad[i];
                    if self.lo[i].is_finite() {
                        gphi -= mu / (pt.x[i] - self.lo[i]);
                    }
                    if self.hi[i].is_finite() {
                        gphi += mu / (self.hi[i] - pt.x[i]);
                    }
                    v += gphi * step.dx[i];
                }
                for j in 0..self.mi {
                    v += (-mu / pt.s[j]) * step.ds[j];
                }
                v
            };

            let mut alpha = alpha_p;
            let mut accepted = false;
            // A numerically nil primal step carries no line-search
            // information; take it and let the duals recenter.
            let nil_step = step.dx.amax_or_zero()
                <= 1e2 * f64::EPSILON * (1.0 + pt.x.amax_or_zero())
                && step.ds.amax_or_zero() <= 1e2 * f64::EPSILON * (1.0 + pt.s.amax_or_zero());
            if nil_step {
                pt.x += &step.dx * alpha;
                pt.s += &step.ds * alpha;
                accepted = true;
            }
            for _ in 0..MAX_BACKTRACKS {
                if accepted {
                    break;
                }
                if alpha < ALPHA_MIN {
                    break;
                }
                let xt = &pt.x + &step.dx * alpha;
                let st = &pt.s + &step.ds * alpha;
                let (ft, ht, gt) = self.cheap_eval(&xt);
                if !ft.is_finite() {
                    alpha *= 0.5;
                    continue;
                }
                let theta_t = self.theta(&ht, &gt, &st);
                let phi_t = self.phi(ft, &xt, &st, mu);
                if !phi_t.is_finite() || !theta_t.is_finite() {
                    alpha *= 0.5;
                    continue;
                }
                let in_filter = filter
                    .iter()
                    .any(|&(tf, pf)| theta_t >= tf && phi_t >= pf);
                if in_filter {
                    alpha *= 0.5;
                    continue;
                }
                // Comparisons carry a few-ulp slack: near convergence the
                // predicted decrease drops below the resolution of phi.
                let ulp = 10.0 * f64::EPSILON * phi_cur.abs().max(1.0);
                let switching = dphi < 0.0
                    && alpha * (-dphi).powf(S_PHI) > DELTA_SW * theta_cur.powf(S_THETA);
                if theta_cur <= theta_min && switching {
                    if phi_t <= phi_cur + ETA_PHI * alpha * dphi + ulp {
                        accepted = true;
                    }
                } else if theta_t <= (1.0 - GAMMA_THETA) * theta_cur
                    || phi_t <= phi_cur - GAMMA_PHI * theta_cur + ulp
                {
                    // h-type step: augment the filter.
                    filter.push((
                        (1.0 - GAMMA_THETA) * theta_cur,
                        phi_cur - GAMMA_PHI * theta_cur,
                    ));
                    accepted = true;
                }
                if accepted {
                    pt.x = xt;
                    pt.s = st;
                    break;
                }
                alpha *= 0.5;
            }

            if !accepted {
                if std::env::var("ACOPF_DEBUG_LS").is_ok() {
                    let th = self.theta(&e.h, &e.g, &pt.s);
                    eprintln!(
                        "  it {iter}: line search failed, theta={th:.3e} mu={mu:.1e} -> restore"
                    );
                }
                // Feasibility restoration.
                match self.restore(&mut pt, mu) {
                    RestoreResult::Progress => {
                        e = self.eval(&pt.x);
                        if std::env::var("ACOPF_DEBUG_LS").is_ok() {
                            eprintln!(
                                "    restore ok: theta={:.3e}",
                                self.theta(&e.h, &e.g, &pt.s)
                            );
                        }
                        pt = self.reinit_duals(pt, &e, mu);
                        filter = vec![(theta_max, f64::NEG_INFINITY)];
                        continue;
                    }
                    RestoreResult::LocallyInfeasible => {
                        if std::env::var("ACOPF_DEBUG_LS").is_ok() {
                            eprintln!("    restore declared locally infeasible");
                        }
                        let (berr, bpt, bev) = best.unwrap();
                        return self.finish(
                            SolveStatus::Infeasible,
                            &bpt,
                            &bev,
                            berr,
                            iter,
                            trace,
                        );
                    }
                }
            }

            // Constraint multipliers follow the accepted primal step, with a
            // growth cap so near-singular constraint Jacobians cannot blow
            // the dual iterate up; bound and slack multipliers take their
            // own fraction-to-boundary step.
            let y_cap = 10.0 * (1.0 + pt.y.amax_or_zero());
            let alpha_y = if step.dy.amax_or_zero() > 0.0 {
                alpha.min(y_cap / step.dy.amax_or_zero())
            } else {
                alpha
            };
            pt.y += &step.dy * alpha_y;
            pt.w += &step.dw * alpha_d;
            pt.zl += &step.dzl * alpha_d;
            pt.zu += &step.dzu * alpha_d;
            // Keep the bound multipliers within a large band of the primal
            // estimates so the barrier Hessian stays bounded.
            for i in 0..nf {
                if self.lo[i].is_finite() {
                    let c = mu / (pt.x[i] - self.lo[i]);
                    pt.zl[i] = pt.zl[i].clamp(c / Z_SIGMA, c * Z_SIGMA).max(1e-16);
                }
                if self.hi[i].is_finite() {
                    let c = mu / (self.hi[i] - pt.x[i]);
                    pt.zu[i] = pt.zu[i].clamp(c / Z_SIGMA, c * Z_SIGMA).max(1e-16);
                }
            }
            for j in 0..self.mi {
                let c = mu / pt.s[j];
                pt.w[j] = pt.w[j].clamp(c / Z_SIGMA, c * Z_SIGMA).max(1e-16);
            }

            e = self.eval(&pt.x);
        }
    }

    fn init_point(&mut self, x: DVector<f64>, e: &Eval, mu: f64) -> Point {
        let nf = self.nf();
        let mut s = DVector::zeros(self.mi);
        let mut w = DVector::zeros(self.mi);
        for j in 0..self.mi {
            s[j] = (-e.g[j]).max(1e-4);
            w[j] = (mu / s[j]).clamp(1e-16, 1e16);
        }
        let mut zl = DVector::zeros(nf);
        let mut zu = DVector::zeros(nf);
        for i in 0..nf {
            if self.lo[i].is_finite() {
                zl[i] = (mu / (x[i] - self.lo[i])).clamp(1e-16, 1e16);
            }
            if self.hi[i].is_finite() {
                zu[i] = (mu / (self.hi[i] - x[i])).clamp(1e-16, 1e16);
            }
        }
        let y = self.lsq_duals(e, &w, &zl, &zu);
        Point { x, s, y, w, zl, zu }
    }

    fn reinit_duals(&mut self, pt: Point, e: &Eval, mu: f64) -> Point {
        let nf = self.nf();
        let mut s = DVector::zeros(self.mi);
        let mut w = DVector::zeros(self.mi);
        for j in 0..self.mi {
            s[j] = (-e.g[j]).max(1e-8).max(mu / 1e16);
            w[j] = (mu / s[j]).clamp(1e-16, 1e16);
        }
        let mut zl = pt.zl.clone();
        let mut zu = pt.zu.clone();
        for i in 0..nf {
            if self.lo[i].is_finite() {
                zl[i] = (mu / (pt.x[i] - self.lo[i])).clamp(1e-16, 1e16);
            }
            if self.hi[i].is_finite() {
                zu[i] = (mu / (self.hi[i] - pt.x[i])).clamp(1e-16, 1e16);
            }
        }
        let y = self.lsq_duals(e, &w, &zl, &zu);
        Point { x: pt.x, s, y, w, zl, zu }
    }

    /// Least-squares equality duals from stationarity.
    fn lsq_duals(
        &self,
        e: &Eval,
        w: &DVector<f64>,
        zl: &DVector<f64>,
        zu: &DVector<f64>,
    ) -> DVector<f64> {
        if self.me == 0 {
            return DVector::zeros(0);
        }
        let mut r = &e.grad + e.jg.transpose() * w;
        for i in 0..self.nf() {
            r[i] -= zl[i];
            r[i] += zu[i];
        }
        let jjt = &e.jh * e.jh.transpose() + DMatrix::identity(self.me, self.me) * 1e-12;
        let rhs = -(&e.jh * r);
        match jjt.cholesky() {
            Some(ch) => {
                let y = ch.solve(&rhs);
                if y.amax_or_zero() > 1e3 {
                    DVector::zeros(self.me)
                } else {
                    y
                }
            }
            None => DVector::zeros(self.me),
        }
    }

    fn newton_step(&mut self, pt: &Point, e: &Eval, mu: f64) -> Option<Step> {
        let nf = self.nf();
        let (me, mi) = (self.me, self.mi);
        let dim = nf + me + mi;
        let hess = self.hessian(&pt.x, &pt.y, &pt.w);

        // Barrier diagonal.
        let mut sigma_x: DVector<f64> = DVector::zeros(nf);
        for i in 0..nf {
            if self.lo[i].is_finite() {
                sigma_x[i] += pt.zl[i] / (pt.x[i] - self.lo[i]);
            }
            if self.hi[i].is_finite() {
                sigma_x[i] += pt.zu[i] / (self.hi[i] - pt.x[i]);
            }
        }

        // Right-hand side.
        let mut r1 = -(&e.grad + e.jh.transpose() * &pt.y + e.jg.transpose() * &pt.w);
        for i in 0..nf {
            if self.lo[i].is_finite() {
                r1[i] += mu / (pt.x[i] - self.lo[i]);
            }
            if self.hi[i].is_finite() {
                r1[i] -= mu / (self.hi[i] - pt.x[i]);
            }
        }
        let mut rhs = DVector::zeros(dim);
        for i in 0..nf {
            rhs[i] = r1[i];
        }
        for r in 0..me {
            rhs[nf + r] = -e.h[r];
        }
        for j in 0..mi {
            rhs[nf + me + j] = -(e.g[j] + mu / pt.w[j]);
        }

        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        for attempt in 0..64 {
            let mut k = DMatrix::zeros(dim, dim);
            for r in 0..nf {
                for c in 0..nf {
                    k[(r, c)] = hess[(r, c)];
                }
                k[(r, r)] += sigma_x[r] + delta_w;
            }
            for r in 0..me {
                for c in 0..nf {
                    k[(nf + r, c)] = e.jh[(r, c)];
                    k[(c, nf + r)] = e.jh[(r, c)];
                }
                k[(nf + r, nf + r)] = -delta_c;
            }
            for j in 0..mi {
                for c in 0..nf {
                    k[(nf + me + j, c)] = e.jg[(j, c)];
                    k[(c, nf + me + j)] = e.jg[(j, c)];
                }
                k[(nf + me + j, nf + me + j)] = -pt.s[j] / pt.w[j];
            }

            let fact = ldl::factorize(&k);
            let ok = match &fact {
                Some(f) => {
                    let (pos, neg, zero) = f.inertia();
                    pos == nf && neg == me + mi && zero == 0
                }
                None => false,
            };
            if ok {
                let sol = fact.unwrap().solve(&rhs);
                self.last_reg = delta_w;
                return Some(self.expand_step(pt, e, mu, &sol));
            }
            // Escalate the regularization.
            if fact.is_none() && me > 0 && delta_c == 0.0 {
                delta_c = 1e-8 * mu.max(1e-8).powf(0.25);
            }
            delta_w = if delta_w == 0.0 {
                if self.last_reg == 0.0 {
                    REG_INIT
                } else {
                    (self.last_reg * REG_SHRINK).max(self.opts.reg_floor)
                }
            } else {
                delta_w * REG_GROW
            };
            if delta_w > REG_MAX {
                if std::env::var("ACOPF_DEBUG_REG").is_ok() {
                    let bad = hess.iter().any(|v| !v.is_finite())
                        || e.jh.iter().any(|v| !v.is_finite())
                        || e.jg.iter().any(|v| !v.is_finite())
                        || rhs.iter().any(|v| !v.is_finite())
                        || sigma_x.iter().any(|v| !v.is_finite());
                    eprintln!(
                        "  reg gave up: attempt {attempt}, nonfinite={bad}, sigma_max={:.2e}, hess_max={:.2e}",
                        sigma_x.amax_or_zero(),
                        hess.amax()
                    );
                }
                let _ = attempt;
                return None;
            }
        }
        None
    }

    fn expand_step(&self, pt: &Point, e: &Eval, mu: f64, sol: &DVector<f64>) -> Step {
        let nf = self.nf();
        let (me, mi) = (self.me, self.mi);
        let dx = DVector::from_fn(nf, |i, _| sol[i]);
        let dy = DVector::from_fn(me, |i, _| sol[nf + i]);
        let dw = DVector::from_fn(mi, |j, _| sol[nf + me + j]);
        let mut ds = DVector::zeros(mi);
        for j in 0..mi {
            // From S w = μe linearization: ds = μ/w - s - (s/w) dw.
            ds[j] = mu / pt.w[j] - pt.s[j] - pt.s[j] / pt.w[j] * dw[j];
        }
        let mut dzl = DVector::zeros(nf);
        let mut dzu = DVector::zeros(nf);
        for i in 0..nf {
            if self.lo[i].is_finite() {
                let d = pt.x[i] - self.lo[i];
                dzl[i] = mu / d - pt.zl[i] - pt.zl[i] / d * dx[i];
            }
            if self.hi[i].is_finite() {
                let d = self.hi[i] - pt.x[i];
                dzu[i] = mu / d - pt.zu[i] + pt.zu[i] / d * dx[i];
            }
        }
        let _ = e;
        Step { dx, ds, dy, dw, dzl, dzu }
    }

    /// Walks off a stationary point whose reduced Hessian has negative
    /// curvature. Only meaningful on problems without equality constraints.
    fn try_escape(&mut self, pt: &Point, _e: &Eval) -> Option<DVector<f64>> {
        let nf = self.nf();
        // Restrict to coordinates away from their bounds.
        let mut free_mask = vec![true; nf];
        for i in 0..nf {
            if self.lo[i].is_finite() && pt.x[i] - self.lo[i] < 1e-6 * (1.0 + self.lo[i].abs()) {
                free_mask[i] = false;
            }
            if self.hi[i].is_finite() && self.hi[i] - pt.x[i] < 1e-6 * (1.0 + self.hi[i].abs()) {
                free_mask[i] = false;
            }
        }
        let act: Vec<usize> = (0..nf).filter(|&i| free_mask[i]).collect();
        if act.is_empty() {
            return None;
        }
        let hess = self.hessian(&pt.x, &pt.y, &pt.w);
        let sub = DMatrix::from_fn(act.len(), act.len(), |r, c| hess[(act[r], act[c])]);
        let scale = sub.amax().max(1.0);
        let eig = nalgebra::SymmetricEigen::new(sub);
        let mut min_idx = 0;
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
                min_idx = i;
            }
        }
        let lam = eig.eigenvalues[min_idx];
        if lam >= -1e-7 * scale {
            return None;
        }
        let mut dir = DVector::zeros(nf);
        for (r, &i) in act.iter().enumerate() {
            dir[i] = eig.eigenvectors[(r, min_idx)];
        }
        // Deterministic sign.
        if let Some(first) = dir.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                dir = -dir;
            }
        }

        let f0 = {
            let (f, h, g) = self.cheap_eval(&pt.x);
            let _ = (h, g);
            f
        };
        let mut best: Option<(f64, DVector<f64>)> = None;
        for sgn in [1.0, -1.0] {
            // Largest step staying strictly inside the box.
            let mut step_cap: f64 = 1.0;
            for i in 0..nf {
                let d = sgn * dir[i];
                if d > 0.0 && self.hi[i].is_finite() {
                    step_cap = step_cap.min(0.5 * (self.hi[i] - pt.x[i]) / d);
                }
                if d < 0.0 && self.lo[i].is_finite() {
                    step_cap = step_cap.min(0.5 * (pt.x[i] - self.lo[i]) / (-d));
                }
            }
            let mut alpha = step_cap.min(1.0);
            for _ in 0..40 {
                if alpha < 1e-10 {
                    break;
                }
                let xt = &pt.x + &dir * (sgn * alpha);
                let (ft, _, gt) = self.cheap_eval(&xt);
                let ineq_ok = (0..self.mi).all(|j| gt[j] < 0.0);
                if ft.is_finite()
                    && ineq_ok
                    && ft < f0 - 1e-4 * alpha * alpha * lam.abs()
                {
                    if best.as_ref().map_or(true, |(bf, _)| ft < *bf) {
                        best = Some((ft, xt));
                    }
                    break;
                }
                alpha *= 0.5;
            }
        }
        best.map(|(_, x)| x)
    }

    /// Projected Gauss-Newton on the constraint violation `½‖[h; g+s]‖²`
    /// over the box (slacks floored at a tiny positive value). Trial points
    /// are clamped to the box rather than step-capped so active bounds do
    /// not freeze progress; on exit the iterate is pushed strictly inside.
    fn restore(&mut self, pt: &mut Point, mu: f64) -> RestoreResult {
        let nf = self.nf();
        let (me, mi) = (self.me, self.mi);
        let dim = nf + mi;
        let mut lambda = 1e-6;
        let (_, h0, g0) = self.cheap_eval(&pt.x);
        let entry_theta = self.theta(&h0, &g0, &pt.s);
        let target = 0.1 * entry_theta;
        let mut theta = entry_theta;
        let s_floor = 1e-12;

        let clamp_x = |x: &mut DVector<f64>, lo: &[f64], hi: &[f64]| {
            for i in 0..x.len() {
                if lo[i].is_finite() && x[i] < lo[i] {
                    x[i] = lo[i];
                }
                if hi[i].is_finite() && x[i] > hi[i] {
                    x[i] = hi[i];
                }
            }
        };
        // Hand back a properly interior point: a hair off the bounds makes
        // the barrier diagonal explode.
        let pad_rel = 1e-3;
        let push_inside = move |x: &mut DVector<f64>, lo: &[f64], hi: &[f64]| {
            for i in 0..x.len() {
                let (l, u) = (lo[i], hi[i]);
                if l.is_finite() && u.is_finite() {
                    let pad = pad_rel * (u - l);
                    x[i] = x[i].clamp(l + pad, u - pad);
                } else if l.is_finite() {
                    x[i] = x[i].max(l + pad_rel * (1.0 + l.abs()));
                } else if u.is_finite() {
                    x[i] = x[i].min(u - pad_rel * (1.0 + u.abs()));
                }
            }
        };

        // Deterministic fallback ladder for stalls: first re-center every
        // box-bounded coordinate at its midpoint (voltages and injections)
        // while keeping the unbounded ones (angles), then additionally zero
        // the unbounded ones. Gauss-Newton from a flat profile is the
        // classic way around power-flow divergence.
        let mut fallback = 0usize;
        let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
        let mut stalls = 0usize;
        for _ in 0..240 {
            if theta <= target.max(1e-2 * self.opts.tol) {
                push_inside(&mut pt.x, &self.lo, &self.hi);
                for j in 0..mi {
                    pt.s[j] = pt.s[j].max(1e-8);
                }
                return RestoreResult::Progress;
            }
            let e = self.eval(&pt.x);
            // residual c = [h; g + s], J = [[Jh, 0]; [Jg, I]]
            let mut c = DVector::zeros(me + mi);
            for i in 0..me {
                c[i] = e.h[i];
            }
            for j in 0..mi {
                c[me + j] = e.g[j] + pt.s[j];
            }
            let mut jtj = DMatrix::zeros(dim, dim);
            let jh_t_jh = e.jh.transpose() * &e.jh;
            let jg_t_jg = e.jg.transpose() * &e.jg;
            for r in 0..nf {
                for cc in 0..nf {
                    jtj[(r, cc)] = jh_t_jh[(r, cc)] + jg_t_jg[(r, cc)];
                }
            }
            for j in 0..mi {
                for cc in 0..nf {
                    jtj[(nf + j, cc)] = e.jg[(j, cc)];
                    jtj[(cc, nf + j)] = e.jg[(j, cc)];
                }
                jtj[(nf + j, nf + j)] = 1.0;
            }
            let mut jtc = DVector::zeros(dim);
            let hpart = e.jh.transpose() * DVector::from_fn(me, |i, _| c[i]);
            let gpart = e.jg.transpose() * DVector::from_fn(mi, |j, _| c[me + j]);
            for r in 0..nf {
                jtc[r] = hpart[r] + gpart[r];
            }
            for j in 0..mi {
                jtc[nf + j] = c[me + j];
            }
            // Projected stationarity: gradient components blocked by an
            // active bound do not count.
            let mut proj_grad: f64 = 0.0;
            for i in 0..nf {
                let gri = jtc[i];
                let at_lo = self.lo[i].is_finite()
                    && pt.x[i] - self.lo[i] <= 1e-10 * (1.0 + self.lo[i].abs());
                let at_hi = self.hi[i].is_finite()
                    && self.hi[i] - pt.x[i] <= 1e-10 * (1.0 + self.hi[i].abs());
                if (at_lo && gri > 0.0) || (at_hi && gri < 0.0) {
                    continue;
                }
                proj_grad = proj_grad.max(gri.abs());
            }
            for j in 0..mi {
                let grj = jtc[nf + j];
                if pt.s[j] <= s_floor * 10.0 && grj > 0.0 {
                    continue;
                }
                proj_grad = proj_grad.max(grj.abs());
            }
            if proj_grad <= 1e-10 * (1.0 + c.amax_or_zero()) {
                if best.as_ref().map_or(true, |(bt, _, _)| theta < *bt) {
                    best = Some((theta, pt.x.clone(), pt.s.clone()));
                }
                if theta <= target.max(1e-2 * self.opts.tol) || fallback >= 2 {
                    break;
                }
                fallback += 1;
                stalls = 0;
                lambda = 1e-6;
                for i in 0..nf {
                    if self.lo[i].is_finite() && self.hi[i].is_finite() {
                        pt.x[i] = 0.5 * (self.lo[i] + self.hi[i]);
                    } else if fallback >= 2 {
                        pt.x[i] = 0.0;
                    }
                }
                let (_, hr, gr) = self.cheap_eval(&pt.x);
                for j in 0..mi {
                    pt.s[j] = (-gr[j]).max(1e-4);
                }
                theta = self.theta(&hr, &gr, &pt.s);
                continue;
            }

            let mut improved = false;
            for _ in 0..12 {
                let mut m = jtj.clone();
                for d in 0..dim {
                    m[(d, d)] += lambda;
                }
                let step = match m.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&jtc)),
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                let mut xt = &pt.x + DVector::from_fn(nf, |i, _| step[i]);
                clamp_x(&mut xt, &self.lo, &self.hi);
                let mut st = &pt.s + DVector::from_fn(mi, |j, _| step[nf + j]);
                for j in 0..mi {
                    st[j] = st[j].max(s_floor);
                }
                let (_, ht, gt) = self.cheap_eval(&xt);
                let theta_t = self.theta(&ht, &gt, &st);
                if theta_t.is_finite() && theta_t < theta * (1.0 - 1e-10) {
                    pt.x = xt;
                    pt.s = st;
                    theta = theta_t;
                    lambda = (lambda * 0.25).max(1e-12);
                    improved = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                stalls += 1;
                if stalls >= 2 {
                    if best.as_ref().map_or(true, |(bt, _, _)| theta < *bt) {
                        best = Some((theta, pt.x.clone(), pt.s.clone()));
                    }
                    if theta <= target.max(1e-2 * self.opts.tol) || fallback >= 2 {
                        break;
                    }
                    fallback += 1;
                    stalls = 0;
                    lambda = 1e-6;
                    for i in 0..nf {
                        if self.lo[i].is_finite() && self.hi[i].is_finite() {
                            pt.x[i] = 0.5 * (self.lo[i] + self.hi[i]);
                        } else if fallback >= 2 {
                            pt.x[i] = 0.0;
                        }
                    }
                    let (_, hr, gr) = self.cheap_eval(&pt.x);
                    for j in 0..mi {
                        pt.s[j] = (-gr[j]).max(1e-4);
                    }
                    theta = self.theta(&hr, &gr, &pt.s);
                }
            } else {
                stalls = 0;
            }
        }
        let _ = mu;
        if let Some((bt, bx, bs)) = best {
            if bt < theta {
                pt.x = bx;
                pt.s = bs;
                theta = bt;
            }
        }
        push_inside(&mut pt.x, &self.lo, &self.hi);
        if theta <= (0.5 * entry_theta).max(1e-2 * self.opts.tol) {
            RestoreResult::Progress
        } else {
            RestoreResult::LocallyInfeasible
        }
    }

    fn finish(
        &mut self,
        status: SolveStatus,
        pt: &Point,
        e: &Eval,
        err: f64,
        iterations: usize,
        trace: Vec<IterRecord>,
    ) -> SolveOutcome {
        let primal = self.full(&pt.x).to_vec();
        let mut lower = vec![0.0; self.n_full];
        let mut upper = vec![0.0; self.n_full];
        for (slot, &i) in self.free.iter().enumerate() {
            lower[i] = pt.zl[slot] / self.scale_f;
            upper[i] = pt.zu[slot] / self.scale_f;
        }
        SolveOutcome {
            status,
            objective: e.f / self.scale_f,
            primal,
            eq_duals: (0..self.me)
                .map(|i| pt.y[i] * self.scale_h[i] / self.scale_f)
                .collect(),
            ineq_duals: (0..self.mi)
                .map(|j| pt.w[j] * self.scale_g[j] / self.scale_f)
                .collect(),
            lower_duals: lower,
            upper_duals: upper,
            kkt_residual: err,
            iterations,
            trace,
        }
    }
}

enum RestoreResult {
    Progress,
    LocallyInfeasible,
}

struct Step {
    dx: DVector<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dw: DVector<f64>,
    dzl: DVector<f64>,
    dzu: DVector<f64>,
}

impl Point {
    fn clone_point(&self) -> Point {
        Point {
            x: self.x.clone(),
            s: self.s.clone(),
            y: self.y.clone(),
            w: self.w.clone(),
            zl: self.zl.clone(),
            zu: self.zu.clone(),
        }
    }
}

impl Eval {
    fn clone_eval(&self) -> Eval {
        Eval {
            f: self.f,
            grad: self.grad.clone(),
            h: self.h.clone(),
            jh: self.jh.clone(),
            g: self.g.clone(),
            jg: self.jg.clone(),
        }
    }
}

trait AmaxOrZero {
    fn amax_or_zero(&self) -> f64;
}
impl AmaxOrZero for DVector<f64> {
    fn amax_or_zero(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.amax()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NlpProblem, UnconstrainedFn};
    use nalgebra::DMatrix;

    struct Quadratic1D;
    impl NlpProblem for Quadratic1D {
        fn n_vars(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0], vec![10.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 3.0) * (x[0] - 3.0)
        }
        fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
            grad[0] = 2.0 * (x[0] - 3.0);
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            obj_weight: f64,
            _e: &[f64],
            _i: &[f64],
            out: &mut DMatrix<f64>,
        ) {
            out[(0, 0)] += 2.0 * obj_weight;
        }
    }

    #[test]
    fn bounded_quadratic_from_zero() {
        let out = minimize(&Quadratic1D, &[0.0], &SolveOptions::default());
        assert_eq!(out.status, SolveStatus::LocalOptimal);
        assert!((out.primal[0] - 3.0).abs() < 1e-4);
        assert!(out.objective < 1e-6);
        assert!(out.kkt_residual <= 1e-4);
    }

    struct EqQuadratic;
    // min x² + y² s.t. x + y = 2 → (1, 1), dual y = -2... the balance dual
    // convention is up to the problem; here h = x + y - 2 and μ = -2.
    impl NlpProblem for EqQuadratic {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[0] + x[1] * x[1]
        }
        fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
            grad[0] = 2.0 * x[0];
            grad[1] = 2.0 * x[1];
        }
        fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] + x[1] - 2.0;
        }
        fn eq_jacobian(&self, _x: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] = 1.0;
            out[(0, 1)] = 1.0;
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            obj_weight: f64,
            _e: &[f64],
            _i: &[f64],
            out: &mut DMatrix<f64>,
        ) {
            out[(0, 0)] += 2.0 * obj_weight;
            out[(1, 1)] += 2.0 * obj_weight;
        }
    }

    #[test]
    fn equality_constrained_quadratic() {
        let out = minimize(&EqQuadratic, &[5.0, -3.0], &SolveOptions::with_tol(1e-8));
        assert_eq!(out.status, SolveStatus::LocalOptimal);
        assert!((out.primal[0] - 1.0).abs() < 1e-7);
        assert!((out.primal[1] - 1.0).abs() < 1e-7);
        assert!((out.eq_duals[0] + 2.0).abs() < 1e-6);
        assert!(kkt_residual(&EqQuadratic, &out.primal, &out.eq_duals, &out.ineq_duals) <= 1e-8);
    }

    struct IneqProblem;
    // min (x+1)² + (y-2)² s.t. x ≥ 0 (as -x ≤ 0), y ≤ 1 (as y - 1 ≤ 0).
    impl NlpProblem for IneqProblem {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn n_ineq(&self) -> usize {
            2
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2)
        }
        fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
            grad[0] = 2.0 * (x[0] + 1.0);
            grad[1] = 2.0 * (x[1] - 2.0);
        }
        fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
            out[1] = x[1] - 1.0;
        }
        fn ineq_jacobian(&self, _x: &[f64], out: &mut DMatrix<f64>) {
            out[(0, 0)] = -1.0;
            out[(1, 1)] = 1.0;
        }
        fn lagrangian_hessian(
            &self,
            _x: &[f64],
            obj_weight: f64,
            _e: &[f64],
            _i: &[f64],
            out: &mut DMatrix<f64>,
        ) {
            out[(0, 0)] += 2.0 * obj_weight;
            out[(1, 1)] += 2.0 * obj_weight;
        }
    }

    #[test]
    fn active_inequalities_get_positive_duals() {
        let out = minimize(&IneqProblem, &[2.0, -2.0], &SolveOptions::with_tol(1e-6));
        assert_eq!(out.status, SolveStatus::LocalOptimal);
        assert!((out.primal[0] - 0.0).abs() < 1e-5);
        assert!((out.primal[1] - 1.0).abs() < 1e-5);
        assert!(out.ineq_duals[0] > 1.0); // ∂f/∂x at 0 is 2
        assert!(out.ineq_duals[1] > 1.0);
    }

    #[test]
    fn kkt_residual_grows_when_primal_is_perturbed() {
        let out = minimize(&EqQuadratic, &[0.0, 0.0], &SolveOptions::with_tol(1e-8));
        let base = kkt_residual(&EqQuadratic, &out.primal, &out.eq_duals, &out.ineq_duals);
        assert!(base <= 1e-8);
        let mut moved = out.primal.clone();
        moved[0] += 0.1;
        let bumped = kkt_residual(&EqQuadratic, &moved, &out.eq_duals, &out.ineq_duals);
        assert!(bumped > 1e-3);
    }

    #[test]
    fn zero_constraint_problem_residual_is_gradient_norm() {
        let p = UnconstrainedFn::new(1, |x: &[f64]| x[0] * x[0]);
        assert_eq!(kkt_residual(&p, &[0.0], &[], &[]), 0.0);
        assert!((kkt_residual(&p, &[1.0], &[], &[]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_equalities_are_detected() {
        struct Contradiction;
        impl NlpProblem for Contradiction {
            fn n_vars(&self) -> usize {
                1
            }
            fn n_eq(&self) -> usize {
                2
            }
            fn n_ineq(&self) -> usize {
                0
            }
            fn objective(&self, _x: &[f64]) -> f64 {
                0.0
            }
            fn objective_grad(&self, _x: &[f64], grad: &mut [f64]) {
                grad[0] = 0.0;
            }
            fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0];
                out[1] = x[0] - 1.0;
            }
            fn eq_jacobian(&self, _x: &[f64], out: &mut DMatrix<f64>) {
                out[(0, 0)] = 1.0;
                out[(1, 0)] = 1.0;
            }
            fn lagrangian_hessian(
                &self,
                _x: &[f64],
                _w: f64,
                _e: &[f64],
                _i: &[f64],
                _out: &mut DMatrix<f64>,
            ) {
            }
        }
        let out = minimize(&Contradiction, &[0.3], &SolveOptions::default());
        assert!(matches!(
            out.status,
            SolveStatus::Infeasible | SolveStatus::MaxIter | SolveStatus::NumericFailure
        ));
        assert_ne!(out.status, SolveStatus::LocalOptimal);
    }

    #[test]
    fn fixed_variables_are_eliminated() {
        struct FixedVar;
        impl NlpProblem for FixedVar {
            fn n_vars(&self) -> usize {
                2
            }
            fn n_eq(&self) -> usize {
                0
            }
            fn n_ineq(&self) -> usize {
                0
            }
            fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
                (vec![2.0, -10.0], vec![2.0, 10.0])
            }
            fn objective(&self, x: &[f64]) -> f64 {
                (x[0] - x[1]).powi(2)
            }
            fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
                grad[0] = 2.0 * (x[0] - x[1]);
                grad[1] = -2.0 * (x[0] - x[1]);
            }
            fn lagrangian_hessian(
                &self,
                _x: &[f64],
                w: f64,
                _e: &[f64],
                _i: &[f64],
                out: &mut DMatrix<f64>,
            ) {
                out[(0, 0)] += 2.0 * w;
                out[(0, 1)] -= 2.0 * w;
                out[(1, 0)] -= 2.0 * w;
                out[(1, 1)] += 2.0 * w;
            }
        }
        let out = minimize(&FixedVar, &[0.0, 0.0], &SolveOptions::default());
        assert_eq!(out.status, SolveStatus::LocalOptimal);
        assert_eq!(out.primal[0], 2.0);
        assert!((out.primal[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn deterministic_repeat_solves() {
        let opts = SolveOptions { trace: true, ..SolveOptions::default() };
        let a = minimize(&IneqProblem, &[2.0, -2.0], &opts);
        let b = minimize(&IneqProblem, &[2.0, -2.0], &opts);
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.iterations, b.iterations);
        let ta: Vec<_> = a.trace.iter().map(|r| (r.objective, r.kkt_residual)).collect();
        let tb: Vec<_> = b.trace.iter().map(|r| (r.objective, r.kkt_residual)).collect();
        assert_eq!(ta, tb);
    }
}
