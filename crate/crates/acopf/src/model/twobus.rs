//! The two-bus problem with free voltage magnitudes: minimize the sending-end
//! power `g V1² - V1 V2 (g cosθ - b sinθ)` subject to the load balance
//! `l + g V2² - V1 V2 (g cosθ + b sinθ) = 0` and box bounds on both
//! magnitudes. Variables are ordered `(θ, V1, V2)`; the angle is the
//! load-side-positive angle difference.

use super::NlpProblem;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy)]
pub struct TwoBusVoltageProblem {
    pub g: f64,
    pub b: f64,
    pub load: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl TwoBusVoltageProblem {
    pub fn new(g: f64, b: f64, load: f64, v_min: f64, v_max: f64) -> Self {
        TwoBusVoltageProblem { g, b, load, v_min, v_max }
    }

    pub fn constraint(&self, x: &[f64]) -> f64 {
        let (th, v1, v2) = (x[0], x[1], x[2]);
        self.load + self.g * v2 * v2 - v1 * v2 * (self.g * th.cos() + self.b * th.sin())
    }

    /// The Lagrangian `f + μ h` ignoring the (linear, curvature-free) bound
    /// terms; this is what the leading-principal-minor formulas describe.
    pub fn lagrangian(&self, x: &[f64], mu: f64) -> f64 {
        self.objective(x) + mu * self.constraint(x)
    }

    pub fn lagrangian_grad(&self, x: &[f64], mu: f64) -> [f64; 3] {
        let mut grad = vec![0.0; 3];
        self.objective_grad(x, &mut grad);
        let mut jac = DMatrix::zeros(1, 3);
        self.eq_jacobian(x, &mut jac);
        [
            grad[0] + mu * jac[(0, 0)],
            grad[1] + mu * jac[(0, 1)],
            grad[2] + mu * jac[(0, 2)],
        ]
    }

    /// Full 3×3 Hessian of `f + μ h`.
    pub fn lagrangian_hessian_full(&self, x: &[f64], mu: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(3, 3);
        self.lagrangian_hessian(x, 1.0, &[mu], &[], &mut out);
        out
    }
}

impl NlpProblem for TwoBusVoltageProblem {
    fn n_vars(&self) -> usize {
        3
    }
    fn n_eq(&self) -> usize {
        1
    }
    fn n_ineq(&self) -> usize {
        0
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![f64::NEG_INFINITY, self.v_min, self.v_min],
            vec![f64::INFINITY, self.v_max, self.v_max],
        )
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (th, v1, v2) = (x[0], x[1], x[2]);
        self.g * v1 * v1 - v1 * v2 * (self.g * th.cos() - self.b * th.sin())
    }

    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) {
        let (th, v1, v2) = (x[0], x[1], x[2]);
        let (s, c) = th.sin_cos();
        let gc_bs = self.g * c - self.b * s;
        grad[0] = v1 * v2 * (self.g * s + self.b * c);
        grad[1] = 2.0 * self.g * v1 - v2 * gc_bs;
        grad[2] = -v1 * gc_bs;
    }

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.constraint(x);
    }

    fn eq_jacobian(&self, x: &[f64], out: &mut DMatrix<f64>) {
        let (th, v1, v2) = (x[0], x[1], x[2]);
        let (s, c) = th.sin_cos();
        let gc_bs2 = self.g * c + self.b * s;
        out[(0, 0)] = v1 * v2 * (self.g * s - self.b * c);
        out[(0, 1)] = -v2 * gc_bs2;
        out[(0, 2)] = 2.0 * self.g * v2 - v1 * gc_bs2;
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_weight: f64,
        eq_duals: &[f64],
        _ineq_duals: &[f64],
        out: &mut DMatrix<f64>,
    ) {
        let (th, v1, v2) = (x[0], x[1], x[2]);
        let (s, c) = th.sin_cos();
        let mu = eq_duals[0];
        let w = obj_weight;
        let gc_bs = self.g * c - self.b * s; // objective trig factor
        let gs_bc = self.g * s + self.b * c;
        let gc_bs2 = self.g * c + self.b * s; // constraint trig factor
        let gs_bc2 = self.g * s - self.b * c;

        // objective block
        out[(0, 0)] += w * v1 * v2 * gc_bs;
        out[(0, 1)] += w * v2 * gs_bc;
        out[(1, 0)] += w * v2 * gs_bc;
        out[(0, 2)] += w * v1 * gs_bc;
        out[(2, 0)] += w * v1 * gs_bc;
        out[(1, 1)] += w * 2.0 * self.g;
        out[(1, 2)] += w * -gc_bs;
        out[(2, 1)] += w * -gc_bs;

        // constraint block
        out[(0, 0)] += mu * v1 * v2 * gc_bs2;
        out[(0, 1)] += mu * v2 * gs_bc2;
        out[(1, 0)] += mu * v2 * gs_bc2;
        out[(0, 2)] += mu * v1 * gs_bc2;
        out[(2, 0)] += mu * v1 * gs_bc2;
        out[(1, 2)] += mu * -gc_bs2;
        out[(2, 1)] += mu * -gc_bs2;
        out[(2, 2)] += mu * 2.0 * self.g;
    }

    fn var_label(&self, i: usize) -> String {
        ["theta", "v1", "v2"][i].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fd;

    #[test]
    fn derivatives_match_finite_differences() {
        let p = TwoBusVoltageProblem::new(1.0, 4.0, 1.0, 0.95, 1.05);
        for x in [[0.3, 1.0, 0.99], [-0.2, 1.04, 0.96], [1.1, 0.97, 1.02]] {
            assert!(fd::max_derivative_deviation(&p, &x) < 1e-7);
        }
    }

    #[test]
    fn constraint_matches_receiving_end_flow() {
        // l + P_21 = 0 in the load-side-positive angle convention.
        let p = TwoBusVoltageProblem::new(1.0, 4.0, 0.7, 0.9, 1.1);
        let (th, v1, v2) = (0.25, 1.02, 0.98);
        let p21 = crate::model::flow_p(v2, v1, -th, p.g, p.b);
        assert!((p.constraint(&[th, v1, v2]) - (p.load + p21)).abs() < 1e-14);
    }
}
