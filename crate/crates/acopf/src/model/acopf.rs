//! Assembly of the full ACOPF program and of the partial Lagrangian obtained
//! by dualizing the power-balance equalities.

use super::{NlpProblem, PrimalPoint};
use crate::casefile::{Network, ParseError};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("network failed validation: {0}")]
    InvalidNetwork(String),
    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Flow value and derivatives of one branch end in local coordinates
/// `(vi, vj, θd)` with `θd` the from-minus-to angle difference.
struct FlowEval {
    p: f64,
    q: f64,
    dp: [f64; 3],
    dq: [f64; 3],
    d2p: [[f64; 3]; 3],
    d2q: [[f64; 3]; 3],
}

impl FlowEval {
    fn new(vi: f64, vj: f64, theta_d: f64, g: f64, b: f64, b_hat: f64) -> Self {
        let (s, c) = theta_d.sin_cos();
        let gc_bs = g * c - b * s;
        let bc_gs = b * c + g * s;
        let gs_bc = g * s + b * c; // d(-gc_bs)/dθ
        let bs_gc = b * s - g * c; // d(-bc_gs)/dθ
        let p = vi * vi * g - vi * vj * gc_bs;
        let q = vi * vi * b_hat - vi * vj * bc_gs;
        let dp = [2.0 * vi * g - vj * gc_bs, -vi * gc_bs, vi * vj * gs_bc];
        let dq = [2.0 * vi * b_hat - vj * bc_gs, -vi * bc_gs, vi * vj * bs_gc];
        let d2p = [
            [2.0 * g, -gc_bs, vj * gs_bc],
            [-gc_bs, 0.0, vi * gs_bc],
            [vj * gs_bc, vi * gs_bc, vi * vj * gc_bs],
        ];
        let d2q = [
            [2.0 * b_hat, -bc_gs, vj * bs_gc],
            [-bc_gs, 0.0, vi * bs_gc],
            [vj * bs_gc, vi * bs_gc, vi * vj * bc_gs],
        ];
        FlowEval { p, q, dp, dq, d2p, d2q }
    }
}

/// Targets of the three local axes in global variable space: `(index, sign)`
/// pairs; the angle axis expands into +θi and -θj, and an axis is absent for
/// the fixed reference angle.
type AxisTargets = [smallvec_lite::AxisVec; 3];

mod smallvec_lite {
    /// Up to two `(global index, sign)` targets per local axis.
    #[derive(Clone, Copy)]
    pub struct AxisVec {
        pub items: [(usize, f64); 2],
        pub len: usize,
    }

    impl AxisVec {
        pub fn one(idx: usize) -> Self {
            AxisVec { items: [(idx, 1.0), (0, 0.0)], len: 1 }
        }
        pub fn theta(ti: Option<usize>, tj: Option<usize>) -> Self {
            let mut v = AxisVec { items: [(0, 0.0); 2], len: 0 };
            if let Some(i) = ti {
                v.items[v.len] = (i, 1.0);
                v.len += 1;
            }
            if let Some(j) = tj {
                v.items[v.len] = (j, -1.0);
                v.len += 1;
            }
            v
        }
        pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
            self.items[..self.len].iter().copied()
        }
    }
}

fn scatter_hess(targets: &AxisTargets, local: &[[f64; 3]; 3], weight: f64, out: &mut DMatrix<f64>) {
    for a in 0..3 {
        for b in 0..3 {
            let d = local[a][b];
            if d == 0.0 {
                continue;
            }
            for (ia, sa) in targets[a].iter() {
                for (ib, sb) in targets[b].iter() {
                    out[(ia, ib)] += weight * sa * sb * d;
                }
            }
        }
    }
}

fn scatter_outer(targets: &AxisTargets, u: &[f64; 3], v: &[f64; 3], weight: f64, out: &mut DMatrix<f64>) {
    for a in 0..3 {
        for b in 0..3 {
            let d = u[a] * v[b];
            if d == 0.0 {
                continue;
            }
            for (ia, sa) in targets[a].iter() {
                for (ib, sb) in targets[b].iter() {
                    out[(ia, ib)] += weight * sa * sb * d;
                }
            }
        }
    }
}

/// The full ACOPF as an [`NlpProblem`]:
///
/// - variables: angles of all non-reference buses, all voltage magnitudes,
///   and the generator outputs `(Pg, Qg)`, in that order;
/// - equalities: active then reactive power balance per bus, oriented as
///   demand-plus-outflow-minus-supply so their duals are marginal prices;
/// - inequalities: the squared apparent-power limit per directed end of every
///   rated branch (`s_max > 0`).
pub struct AcopfProblem {
    net: Network,
    theta_idx: Vec<Option<usize>>,
    v_off: usize,
    pg_off: usize,
    qg_off: usize,
    n_vars: usize,
    /// (branch index, true = from side) per inequality row.
    flow_rows: Vec<(usize, bool)>,
}

impl AcopfProblem {
    pub fn new(net: &Network) -> Result<Self, ModelError> {
        let report = crate::casefile::validate(net);
        if !report.is_empty() {
            return Err(ModelError::InvalidNetwork(report.join("; ")));
        }
        for g in &net.gens {
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(ModelError::InfeasibleBounds("generator box is empty".into()));
            }
        }
        for b in &net.buses {
            if b.v_min > b.v_max {
                return Err(ModelError::InfeasibleBounds(format!(
                    "bus {}: v_min > v_max",
                    b.id
                )));
            }
        }
        let n = net.n_buses();
        let mut theta_idx = vec![None; n];
        let mut next = 0;
        for i in 0..n {
            if i != net.ref_bus {
                theta_idx[i] = Some(next);
                next += 1;
            }
        }
        let v_off = next;
        let pg_off = v_off + n;
        let qg_off = pg_off + net.gens.len();
        let n_vars = qg_off + net.gens.len();
        let mut flow_rows = Vec::new();
        for (k, br) in net.branches.iter().enumerate() {
            if br.s_max > 0.0 {
                flow_rows.push((k, true));
                flow_rows.push((k, false));
            }
        }
        Ok(AcopfProblem {
            net: net.clone(),
            theta_idx,
            v_off,
            pg_off,
            qg_off,
            n_vars,
            flow_rows,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn x_from_primal(&self, p: &PrimalPoint) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        for (i, t) in self.theta_idx.iter().enumerate() {
            if let Some(ti) = t {
                x[*ti] = p.theta[i];
            }
        }
        for i in 0..self.net.n_buses() {
            x[self.v_off + i] = p.v[i];
        }
        for g in 0..self.net.gens.len() {
            x[self.pg_off + g] = p.pg[g];
            x[self.qg_off + g] = p.qg[g];
        }
        x
    }

    pub fn primal_from_x(&self, x: &[f64]) -> PrimalPoint {
        let n = self.net.n_buses();
        let mut theta = vec![0.0; n];
        for (i, t) in self.theta_idx.iter().enumerate() {
            if let Some(ti) = t {
                theta[i] = x[*ti];
            }
        }
        PrimalPoint {
            theta,
            v: x[self.v_off..self.v_off + n].to_vec(),
            pg: x[self.pg_off..self.pg_off + self.net.gens.len()].to_vec(),
            qg: x[self.qg_off..self.qg_off + self.net.gens.len()].to_vec(),
        }
    }

    /// Splits the equality duals into per-bus (μP, μQ).
    pub fn split_duals(&self, eq_duals: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.net.n_buses();
        (eq_duals[..n].to_vec(), eq_duals[n..2 * n].to_vec())
    }

    fn branch_targets(&self, k: usize) -> (AxisTargets, AxisTargets) {
        let br = &self.net.branches[k];
        let (i, j) = (br.from_bus, br.to_bus);
        use smallvec_lite::AxisVec;
        let from = [
            AxisVec::one(self.v_off + i),
            AxisVec::one(self.v_off + j),
            AxisVec::theta(self.theta_idx[i], self.theta_idx[j]),
        ];
        let to = [
            AxisVec::one(self.v_off + j),
            AxisVec::one(self.v_off + i),
            AxisVec::theta(self.theta_idx[j], self.theta_idx[i]),
        ];
        (from, to)
    }

    fn eval_branch(&self, k: usize, x: &[f64], from_side: bool) -> FlowEval {
        let br = &self.net.branches[k];
        let (i, j) = (br.from_bus, br.to_bus);
        let ti = self.theta_idx[i].map_or(0.0, |t| x[t]);
        let tj = self.theta_idx[j].map_or(0.0, |t| x[t]);
        if from_side {
            FlowEval::new(x[self.v_off + i], x[self.v_off + j], ti - tj, br.g, br.b, br.b_hat)
        } else {
            FlowEval::new(x[self.v_off + j], x[self.v_off + i], tj - ti, br.g, br.b, br.b_hat)
        }
    }
}

impl NlpProblem for AcopfProblem {
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn n_eq(&self) -> usize {
        2 * self.net.n_buses()
    }

    fn n_ineq(&self) -> usize {
        self.flow_rows.len()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::NEG_INFINITY; self.n_vars];
        let mut hi = vec![f64::INFINITY; self.n_vars];
        for (i, bus) in self.net.buses.iter().enumerate() {
            lo[self.v_off + i] = bus.v_min;
            hi[self.v_off + i] = bus.v_max;
        }
        for (g, gen) in self.net.gens.iter().enumerate() {
            lo[self.pg_off + g] = gen.p_min;
            hi[self.pg_off + g] = gen.p_max;
            lo[self.qg_off + g] = gen.q_min;
            hi[self.qg_off + g] = gen.q_max;
        }
        (lo, hi)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.net
            .gens
            .iter()
            .enumerate()
            .map(|(g, gen)| gen.cost_at(x[self.pg_off + g]))
            .sum()
    }

    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for (g, gen) in self.net.gens.iter().enumerate() {
            grad[self.pg_off + g] = gen.marginal_cost_at(x[self.pg_off + g]);
        }
    }

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        let n = self.net.n_buses();
        for (i, bus) in self.net.buses.iter().enumerate() {
            out[i] = bus.pd;
            out[n + i] = bus.qd;
        }
        for (g, gen) in self.net.gens.iter().enumerate() {
            out[gen.bus] -= x[self.pg_off + g];
            out[n + gen.bus] -= x[self.qg_off + g];
        }
        for (k, br) in self.net.branches.iter().enumerate() {
            let fe = self.eval_branch(k, x, true);
            let te = self.eval_branch(k, x, false);
            out[br.from_bus] += fe.p;
            out[n + br.from_bus] += fe.q;
            out[br.to_bus] += te.p;
            out[n + br.to_bus] += te.q;
        }
    }

    fn eq_jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let n = self.net.n_buses();
        for (g, gen) in self.net.gens.iter().enumerate() {
            out[(gen.bus, self.pg_off + g)] = -1.0;
            out[(n + gen.bus, self.qg_off + g)] = -1.0;
        }
        for (k, br) in self.net.branches.iter().enumerate() {
            let (from_t, to_t) = self.branch_targets(k);
            let fe = self.eval_branch(k, x, true);
            let te = self.eval_branch(k, x, false);
            let mut row = |r: usize, targets: &AxisTargets, local: &[f64; 3]| {
                for (axis, &d) in local.iter().enumerate() {
                    for (idx, sgn) in targets[axis].iter() {
                        out[(r, idx)] += sgn * d;
                    }
                }
            };
            row(br.from_bus, &from_t, &fe.dp);
            row(n + br.from_bus, &from_t, &fe.dq);
            row(br.to_bus, &to_t, &te.dp);
            row(n + br.to_bus, &to_t, &te.dq);
        }
    }

    fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
        for (r, &(k, from_side)) in self.flow_rows.iter().enumerate() {
            let e = self.eval_branch(k, x, from_side);
            let smax = self.net.branches[k].s_max;
            out[r] = e.p * e.p + e.q * e.q - smax * smax;
        }
    }

    fn ineq_jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (r, &(k, from_side)) in self.flow_rows.iter().enumerate() {
            let (from_t, to_t) = self.branch_targets(k);
            let targets = if from_side { &from_t } else { &to_t };
            let e = self.eval_branch(k, x, from_side);
            let mut local = [0.0; 3];
            for a in 0..3 {
                local[a] = 2.0 * (e.p * e.dp[a] + e.q * e.dq[a]);
            }
            for (axis, &d) in local.iter().enumerate() {
                for (idx, sgn) in targets[axis].iter() {
                    out[(r, idx)] += sgn * d;
                }
            }
        }
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        eq_duals: &[f64],
        ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let n = self.net.n_buses();
        if obj_weight != 0.0 {
            for (g, gen) in self.net.gens.iter().enumerate() {
                out[(self.pg_off + g, self.pg_off + g)] +=
                    obj_weight * gen.cost_curvature_at(x[self.pg_off + g]);
            }
        }
        for (k, br) in self.net.branches.iter().enumerate() {
            let (from_t, to_t) = self.branch_targets(k);
            let fe = self.eval_branch(k, x, true);
            let te = self.eval_branch(k, x, false);
            let wfp = eq_duals[br.from_bus];
            let wfq = eq_duals[n + br.from_bus];
            let wtp = eq_duals[br.to_bus];
            let wtq = eq_duals[n + br.to_bus];
            if wfp != 0.0 {
                scatter_hess(&from_t, &fe.d2p, wfp, out);
            }
            if wfq != 0.0 {
                scatter_hess(&from_t, &fe.d2q, wfq, out);
            }
            if wtp != 0.0 {
                scatter_hess(&to_t, &te.d2p, wtp, out);
            }
            if wtq != 0.0 {
                scatter_hess(&to_t, &te.d2q, wtq, out);
            }
        }
        for (r, &(k, from_side)) in self.flow_rows.iter().enumerate() {
            let w = ineq_duals[r];
            if w == 0.0 {
                continue;
            }
            let (from_t, to_t) = self.branch_targets(k);
            let targets = if from_side { &from_t } else { &to_t };
            let e = self.eval_branch(k, x, from_side);
            scatter_outer(targets, &e.dp, &e.dp, 2.0 * w, out);
            scatter_outer(targets, &e.dq, &e.dq, 2.0 * w, out);
            scatter_hess(targets, &e.d2p, 2.0 * w * e.p, out);
            scatter_hess(targets, &e.d2q, 2.0 * w * e.q, out);
        }
    }

    fn var_label(&self, i: usize) -> String {
        if i < self.v_off {
            let bus = self
                .theta_idx
                .iter()
                .position(|t| *t == Some(i))
                .expect("theta index");
            format!("theta_{}", self.net.buses[bus].id)
        } else if i < self.pg_off {
            format!("v_{}", self.net.buses[i - self.v_off].id)
        } else if i < self.qg_off {
            let g = i - self.pg_off;
            format!("pg{}_{}", g, self.net.buses[self.net.gens[g].bus].id)
        } else {
            let g = i - self.qg_off;
            format!("qg{}_{}", g, self.net.buses[self.net.gens[g].bus].id)
        }
    }
}

/// Problem (2): same variables and inequalities as the ACOPF, the balance
/// equalities dualized into the objective with fixed multipliers.
pub struct PartialLagrangianProblem {
    inner: AcopfProblem,
    /// Concatenated (μP, μQ), matching the equality-row order of the ACOPF.
    mu: Vec<f64>,
}

impl PartialLagrangianProblem {
    pub fn new(net: &Network, mu_p: &[f64], mu_q: &[f64]) -> Result<Self, ModelError> {
        let inner = AcopfProblem::new(net)?;
        assert_eq!(mu_p.len(), net.n_buses());
        assert_eq!(mu_q.len(), net.n_buses());
        let mut mu = mu_p.to_vec();
        mu.extend_from_slice(mu_q);
        Ok(PartialLagrangianProblem { inner, mu })
    }

    pub fn from_eq_duals(net: &Network, eq_duals: &[f64]) -> Result<Self, ModelError> {
        let n = net.n_buses();
        Self::new(net, &eq_duals[..n], &eq_duals[n..2 * n])
    }

    pub fn acopf(&self) -> &AcopfProblem {
        &self.inner
    }
}

impl NlpProblem for PartialLagrangianProblem {
    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
    fn n_eq(&self) -> usize {
        0
    }
    fn n_ineq(&self) -> usize {
        self.inner.n_ineq()
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.inner.bounds()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut h = vec![0.0; self.inner.n_eq()];
        self.inner.eq_constraints(x, &mut h);
        self.inner.objective(x) + h.iter().zip(&self.mu).map(|(hi, mi)| hi * mi).sum::<f64>()
    }

    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        self.inner.objective_grad(x, grad);
        let mut jac = DMatrix::zeros(self.inner.n_eq(), self.inner.n_vars());
        self.inner.eq_jacobian(x, &mut jac);
        for (r, mi) in self.mu.iter().enumerate() {
            if *mi == 0.0 {
                continue;
            }
            for c in 0..self.inner.n_vars() {
                grad[c] += mi * jac[(r, c)];
            }
        }
    }

    fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
        self.inner.ineq_constraints(x, out);
    }
    fn ineq_jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        self.inner.ineq_jacobian(x, out);
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        _eq_duals: &[f64],
        ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let weighted: Vec<f64> = self.mu.iter().map(|m| obj_weight * m).collect();
        self.inner
            .lagrangian_hessian(x, obj_weight, &weighted, ineq_duals, out);
    }

    fn var_label(&self, i: usize) -> String {
        self.inner.var_label(i)
    }
}

/// Box used when drawing uniform random starts: variable bounds where they
/// exist, and `[-π, π]` for the unbounded angles.
pub fn sampling_box(problem: &AcopfProblem) -> (Vec<f64>, Vec<f64>) {
    let (mut lo, mut hi) = problem.bounds();
    let pi = std::f64::consts::PI;
    for i in 0..problem.n_vars() {
        if lo[i].is_infinite() {
            lo[i] = -pi;
        }
        if hi[i].is_infinite() {
            hi[i] = pi;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casefile::parse_case;
    use crate::model::fd;

    #[test]
    fn two_bus_dimensions() {
        let net = parse_case(crate::casefile::TWO_BUS_CASE).unwrap().network;
        let p = AcopfProblem::new(&net).unwrap();
        // 1 angle + 2 voltages + Pg + Qg.
        assert_eq!(p.n_vars(), 5);
        assert_eq!(p.n_eq(), 4);
        assert_eq!(p.n_ineq(), 0); // s_max = 0 everywhere: omission rule
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let net = parse_case(crate::casefile::TWO_BUS_CASE).unwrap().network;
        let p = AcopfProblem::new(&net).unwrap();
        let x = vec![-0.23, 1.01, 0.97, 0.8, 0.15];
        assert!(fd::max_derivative_deviation(&p, &x) < 1e-7);

        let pl = PartialLagrangianProblem::new(&net, &[1.3, 0.7], &[0.2, -0.1]).unwrap();
        assert!(fd::max_derivative_deviation(&pl, &x) < 1e-7);
    }

    #[test]
    fn partial_lagrangian_reduces_to_cost_with_zero_duals() {
        let net = parse_case(crate::casefile::TWO_BUS_CASE).unwrap().network;
        let acopf = AcopfProblem::new(&net).unwrap();
        let pl = PartialLagrangianProblem::new(&net, &[0.0; 2], &[0.0; 2]).unwrap();
        let x = vec![0.31, 1.02, 0.95, 0.4, -0.2];
        assert!((pl.objective(&x) - acopf.objective(&x)).abs() < 1e-14);
        assert_eq!(pl.n_eq(), 0);
    }
}
