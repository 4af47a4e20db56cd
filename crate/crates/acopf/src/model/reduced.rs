//! Fixed-voltage reductions: all magnitudes pinned at 1 p.u., reactive power
//! dropped, a single generator at the reference bus, and one angle variable
//! per load bus.
//!
//! Angles here use the load-side-positive orientation: the variable for load
//! bus `k` is the negative of its electrical angle, so a positive value means
//! the bus lags the reference. In these coordinates the flow leaving node `a`
//! toward node `b` is
//!
//! ```text
//! f_ab = g (1 - cos d) - b sin d,   d = θa - θb   (θ_ref = 0),
//! ```
//!
//! and the reference-bus generation is `Σ_j g (1 - cos θj) + b sin θj` over
//! reference-adjacent lines.

use super::NlpProblem;
use crate::casefile::Network;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct ReducedLine {
    /// Node indices; 0 is the reference, load buses are 1-based.
    pub a: usize,
    pub b: usize,
    pub g: f64,
    pub b_series: f64,
}

/// A fixed-voltage network over angle variables only.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub lines: Vec<ReducedLine>,
    /// Active load per non-reference node (node k+1).
    pub loads: Vec<f64>,
    /// Cost polynomial on total reference generation, lowest degree first.
    pub cost: Vec<f64>,
}

impl ReducedNetwork {
    /// A single line from the reference to one load bus.
    pub fn two_bus(g: f64, b: f64, load: f64) -> Self {
        ReducedNetwork {
            lines: vec![ReducedLine { a: 0, b: 1, g, b_series: b }],
            loads: vec![load],
            cost: vec![0.0, 1.0],
        }
    }

    /// Builds the reduction of a full network: requires a single generator
    /// placed at the reference bus. Node order follows the bus order with the
    /// reference moved to slot 0.
    pub fn from_network(net: &Network) -> Result<Self, String> {
        if net.gens.len() != 1 || net.gens[0].bus != net.ref_bus {
            return Err("fixed-voltage reduction needs exactly one generator at the reference bus".into());
        }
        let n = net.n_buses();
        let mut slot = vec![0usize; n];
        let mut next = 1;
        for i in 0..n {
            if i == net.ref_bus {
                slot[i] = 0;
            } else {
                slot[i] = next;
                next += 1;
            }
        }
        let lines = net
            .branches
            .iter()
            .map(|br| ReducedLine {
                a: slot[br.from_bus],
                b: slot[br.to_bus],
                g: br.g,
                b_series: br.b,
            })
            .collect();
        let loads = (0..n)
            .filter(|&i| i != net.ref_bus)
            .map(|i| net.buses[i].pd)
            .collect();
        Ok(ReducedNetwork {
            lines,
            loads,
            cost: net.gens[0].cost.clone(),
        })
    }

    pub fn n_angles(&self) -> usize {
        self.loads.len()
    }

    fn node_angle(&self, theta: &[f64], node: usize) -> f64 {
        if node == 0 {
            0.0
        } else {
            theta[node - 1]
        }
    }

    fn cost_at(&self, p: f64) -> f64 {
        self.cost.iter().rev().fold(0.0, |acc, &c| acc * p + c)
    }

    fn cost_d1(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.cost.iter().enumerate().skip(1).rev() {
            acc = acc * p + k as f64 * c;
        }
        acc
    }

    fn cost_d2(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.cost.iter().enumerate().skip(2).rev() {
            acc = acc * p + (k * (k - 1)) as f64 * c;
        }
        acc
    }

    /// Total generation picked up at the reference node.
    pub fn ref_generation(&self, theta: &[f64]) -> f64 {
        let mut p = 0.0;
        for ln in &self.lines {
            if ln.a == 0 || ln.b == 0 {
                let other = if ln.a == 0 { ln.b } else { ln.a };
                let d = -self.node_angle(theta, other);
                p += ln.g * (1.0 - d.cos()) - ln.b_series * d.sin();
            }
        }
        p
    }

    /// Gradient and Hessian of the reference generation.
    fn ref_generation_derivs(&self, theta: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>) {
        grad.fill(0.0);
        hess.fill(0.0);
        for ln in &self.lines {
            if ln.a == 0 || ln.b == 0 {
                let other = if ln.a == 0 { ln.b } else { ln.a };
                let k = other - 1;
                let d = -theta[k];
                // dd/dθk = -1
                let dp_dd = ln.g * d.sin() - ln.b_series * d.cos();
                grad[k] += -dp_dd;
                let d2 = ln.g * d.cos() + ln.b_series * d.sin();
                hess[(k, k)] += d2;
            }
        }
    }

    /// The balance residual vector: `h_k = l_k + Σ_j f_kj`, one entry per
    /// load node. Zero when node k's load is exactly served.
    pub fn balance(&self, theta: &[f64]) -> Vec<f64> {
        let m = self.n_angles();
        let mut h = self.loads.clone();
        for ln in &self.lines {
            for (me, other) in [(ln.a, ln.b), (ln.b, ln.a)] {
                if me == 0 {
                    continue;
                }
                let d = self.node_angle(theta, me) - self.node_angle(theta, other);
                h[me - 1] += ln.g * (1.0 - d.cos()) - ln.b_series * d.sin();
            }
        }
        debug_assert_eq!(h.len(), m);
        h
    }

    pub fn balance_jacobian(&self, theta: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for ln in &self.lines {
            for (me, other) in [(ln.a, ln.b), (ln.b, ln.a)] {
                if me == 0 {
                    continue;
                }
                let d = self.node_angle(theta, me) - self.node_angle(theta, other);
                let df_dd = ln.g * d.sin() - ln.b_series * d.cos();
                out[(me - 1, me - 1)] += df_dd;
                if other != 0 {
                    out[(me - 1, other - 1)] -= df_dd;
                }
            }
        }
    }

    /// Adds `Σ w_k ∇²h_k` into `out`.
    pub fn balance_hessian(&self, theta: &[f64], weights: &[f64], out: &mut DMatrix<f64>) {
        for ln in &self.lines {
            for (me, other) in [(ln.a, ln.b), (ln.b, ln.a)] {
                if me == 0 {
                    continue;
                }
                let w = weights[me - 1];
                if w == 0.0 {
                    continue;
                }
                let d = self.node_angle(theta, me) - self.node_angle(theta, other);
                let d2f = ln.g * d.cos() + ln.b_series * d.sin();
                out[(me - 1, me - 1)] += w * d2f;
                if other != 0 {
                    out[(me - 1, other - 1)] -= w * d2f;
                    out[(other - 1, me - 1)] -= w * d2f;
                    out[(other - 1, other - 1)] += w * d2f;
                }
            }
        }
    }

    /// Generation cost as a function of the angles.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        self.cost_at(self.ref_generation(theta))
    }

    pub fn objective_grad(&self, theta: &[f64], grad: &mut [f64]) {
        let m = self.n_angles();
        let mut hess = DMatrix::zeros(m, m);
        self.ref_generation_derivs(theta, grad, &mut hess);
        let c1 = self.cost_d1(self.ref_generation(theta));
        for g in grad.iter_mut() {
            *g *= c1;
        }
    }

    pub fn objective_hessian(&self, theta: &[f64], out: &mut DMatrix<f64>) {
        let m = self.n_angles();
        let mut pgrad = vec![0.0; m];
        let mut phess = DMatrix::zeros(m, m);
        self.ref_generation_derivs(theta, &mut pgrad, &mut phess);
        let p = self.ref_generation(theta);
        let (c1, c2) = (self.cost_d1(p), self.cost_d2(p));
        for r in 0..m {
            for c in 0..m {
                out[(r, c)] += c1 * phess[(r, c)] + c2 * pgrad[r] * pgrad[c];
            }
        }
    }

    /// `L_ρ`: cost plus the quadratic penalty on the balance residuals.
    pub fn penalized(&self, theta: &[f64], rho: f64) -> f64 {
        let h = self.balance(theta);
        self.objective(theta) + 0.5 * rho * h.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn penalized_grad(&self, theta: &[f64], rho: f64, grad: &mut [f64]) {
        let m = self.n_angles();
        self.objective_grad(theta, grad);
        let h = self.balance(theta);
        let mut jac = DMatrix::zeros(m, m);
        self.balance_jacobian(theta, &mut jac);
        for k in 0..m {
            for c in 0..m {
                grad[c] += rho * h[k] * jac[(k, c)];
            }
        }
    }

    pub fn penalized_hessian(&self, theta: &[f64], rho: f64, out: &mut DMatrix<f64>) {
        let m = self.n_angles();
        self.objective_hessian(theta, out);
        let h = self.balance(theta);
        let mut jac = DMatrix::zeros(m, m);
        self.balance_jacobian(theta, &mut jac);
        for k in 0..m {
            for r in 0..m {
                for c in 0..m {
                    out[(r, c)] += rho * jac[(k, r)] * jac[(k, c)];
                }
            }
        }
        let weights: Vec<f64> = h.iter().map(|v| rho * v).collect();
        self.balance_hessian(theta, &weights, out);
    }

    /// `L_μ`: cost plus dual-weighted balance residuals.
    pub fn lagrangian(&self, theta: &[f64], mu: &[f64]) -> f64 {
        let h = self.balance(theta);
        self.objective(theta) + h.iter().zip(mu).map(|(hi, mi)| hi * mi).sum::<f64>()
    }

    pub fn lagrangian_grad(&self, theta: &[f64], mu: &[f64], grad: &mut [f64]) {
        let m = self.n_angles();
        self.objective_grad(theta, grad);
        let mut jac = DMatrix::zeros(m, m);
        self.balance_jacobian(theta, &mut jac);
        for k in 0..m {
            for c in 0..m {
                grad[c] += mu[k] * jac[(k, c)];
            }
        }
    }

    pub fn lagrangian_hessian(&self, theta: &[f64], mu: &[f64], out: &mut DMatrix<f64>) {
        self.objective_hessian(theta, out);
        self.balance_hessian(theta, mu, out);
    }
}

/// The reduced ACOPF: minimize generation cost subject to the load balances.
pub struct ReducedAcopf {
    pub net: ReducedNetwork,
}

impl NlpProblem for ReducedAcopf {
    fn n_vars(&self) -> usize {
        self.net.n_angles()
    }
    fn n_eq(&self) -> usize {
        self.net.n_angles()
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.net.objective(x)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        self.net.objective_grad(x, grad);
    }
    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.net.balance(x));
    }
    fn eq_jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        self.net.balance_jacobian(x, out);
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        eq_duals: &[f64],
        _ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        if obj_weight != 0.0 {
            let m = self.n_vars();
            let mut oh = DMatrix::zeros(m, m);
            self.net.objective_hessian(x, &mut oh);
            *out += oh * obj_weight;
        }
        self.net.balance_hessian(x, eq_duals, out);
    }
    fn var_label(&self, i: usize) -> String {
        format!("theta_{}", i + 1)
    }
}

/// The unconstrained partial Lagrangian of the reduction.
pub struct ReducedLagrangian {
    pub net: ReducedNetwork,
    pub mu: Vec<f64>,
}

impl NlpProblem for ReducedLagrangian {
    fn n_vars(&self) -> usize {
        self.net.n_angles()
    }
    fn n_eq(&self) -> usize {
        0
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.net.lagrangian(x, &self.mu)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        self.net.lagrangian_grad(x, &self.mu, grad);
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        _eq_duals: &[f64],
        _ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let m = self.n_vars();
        let mut h = DMatrix::zeros(m, m);
        self.net.lagrangian_hessian(x, &self.mu, &mut h);
        *out += h * obj_weight;
    }
    fn var_label(&self, i: usize) -> String {
        format!("theta_{}", i + 1)
    }
}

/// The unconstrained quadratic-penalty objective of the reduction.
pub struct ReducedPenalized {
    pub net: ReducedNetwork,
    pub rho: f64,
}

impl NlpProblem for ReducedPenalized {
    fn n_vars(&self) -> usize {
        self.net.n_angles()
    }
    fn n_eq(&self) -> usize {
        0
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.net.penalized(x, self.rho)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        self.net.penalized_grad(x, self.rho, grad);
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        _eq_duals: &[f64],
        _ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let m = self.n_vars();
        let mut h = DMatrix::zeros(m, m);
        self.net.penalized_hessian(x, self.rho, &mut h);
        *out += h * obj_weight;
    }
    fn var_label(&self, i: usize) -> String {
        format!("theta_{}", i + 1)
    }
}

/// Wraps an arbitrary smooth function (with optional analytic gradient) as an
/// unconstrained problem; missing derivatives fall back to central finite
/// differences. Used to polish grid-search candidates.
pub struct UnconstrainedFn<'a> {
    pub dim: usize,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    pub grad: Option<Box<dyn Fn(&[f64], &mut [f64]) + Sync + 'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl<'a> UnconstrainedFn<'a> {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> f64 + Sync + 'a) -> Self {
        UnconstrainedFn {
            dim,
            f: Box::new(f),
            grad: None,
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn with_box(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_grad(mut self, grad: impl Fn(&[f64], &mut [f64]) + Sync + 'a) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }
}

impl NlpProblem for UnconstrainedFn<'_> {
    fn n_vars(&self) -> usize {
        self.dim
    }
    fn n_eq(&self) -> usize {
        0
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        match &self.grad {
            Some(g) => g(x, grad),
            None => grad.copy_from_slice(&super::fd::gradient(&|p| (self.f)(p), x)),
        }
    }
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        _eq_duals: &[f64],
        _ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let g = |p: &[f64], out: &mut [f64]| self.objective_grad(p, out);
        let h = super::fd::hessian_of_gradient(&g, x);
        *out += h * obj_weight;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fd;

    fn three_bus_mesh(load: f64) -> ReducedNetwork {
        ReducedNetwork {
            lines: vec![
                ReducedLine { a: 0, b: 1, g: 1.0, b_series: 4.0 },
                ReducedLine { a: 0, b: 2, g: 1.0, b_series: 4.0 },
                ReducedLine { a: 1, b: 2, g: 0.1, b_series: 0.4 },
            ],
            loads: vec![load, load],
            cost: vec![0.0, 1.0],
        }
    }

    #[test]
    fn two_bus_balance_matches_closed_form() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        for th in [-0.4, 0.0, 0.3, 2.0] {
            let h = net.balance(&[th]);
            let expect = 1.0 + 1.0 - th.cos() - 4.0 * th.sin();
            assert!((h[0] - expect).abs() < 1e-14);
            let p = net.ref_generation(&[th]);
            let expect_p = 1.0 - th.cos() + 4.0 * th.sin();
            assert!((p - expect_p).abs() < 1e-14);
        }
    }

    #[test]
    fn three_bus_lagrangian_matches_term_by_term_expansion() {
        // Direct evaluation of the dualized two-balance objective at random
        // angle pairs.
        let net = three_bus_mesh(1.9);
        let (mu1, mu2) = (0.8, -0.3);
        let mut t: f64 = 0.1;
        for _ in 0..10 {
            let th = [t.sin() * 2.0, (1.7 * t).cos() * 2.0];
            let g23 = 0.1;
            let b23 = 0.4;
            let p_ref = (1.0 - th[0].cos() + 4.0 * th[0].sin())
                + (1.0 - th[1].cos() + 4.0 * th[1].sin());
            let d12 = th[0] - th[1];
            let h1 = 1.9
                + (1.0 - th[0].cos() - 4.0 * th[0].sin())
                + (g23 * (1.0 - d12.cos()) - b23 * d12.sin());
            let h2 = 1.9
                + (1.0 - th[1].cos() - 4.0 * th[1].sin())
                + (g23 * (1.0 - (-d12).cos()) - b23 * (-d12).sin());
            let expect = p_ref + mu1 * h1 + mu2 * h2;
            assert!((net.lagrangian(&th, &[mu1, mu2]) - expect).abs() < 1e-12);
            t += 0.7;
        }
    }

    #[test]
    fn reduced_derivatives_match_finite_differences() {
        let net = three_bus_mesh(1.85);
        let x = [0.41, 1.9];
        let acopf = ReducedAcopf { net: net.clone() };
        assert!(fd::max_derivative_deviation(&acopf, &x) < 1e-7);
        let lag = ReducedLagrangian { net: net.clone(), mu: vec![1.1, 0.6] };
        assert!(fd::max_derivative_deviation(&lag, &x) < 1e-7);
        let pen = ReducedPenalized { net, rho: 2.0 };
        assert!(fd::max_derivative_deviation(&pen, &x) < 1e-7);
    }

    #[test]
    fn penalized_two_bus_has_two_descent_basins() {
        // The paper's 2-bus curve with admittance 1 - j4 and penalty 2: the
        // numeric derivative changes sign four times on (-π/2, 3π/2).
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let pen = ReducedPenalized { net, rho: 2.0 };
        let mut changes = 0;
        let mut prev = f64::NAN;
        let n = 4000;
        for k in 0..n {
            let th = -std::f64::consts::FRAC_PI_2 + 0.001
                + (2.0 * std::f64::consts::PI - 0.002) * k as f64 / (n - 1) as f64;
            let mut g = [0.0];
            pen.objective_grad(&[th], &mut g);
            if !prev.is_nan() && g[0].signum() != prev.signum() {
                changes += 1;
            }
            prev = g[0];
        }
        assert_eq!(changes, 4, "expected two minima and two maxima in range");
    }
}
