//! Numeric verification of the landscape geometry: Hessian definiteness,
//! leading principal minors, attraction-basin sampling, binding-voltage
//! gradients and exportable landscape grids.

pub mod checks;

use crate::oracle::StationaryPoint;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix is asymmetric beyond tolerance: |A - Aᵀ|∞ = {0:.3e}")]
    Asymmetric(f64),
    #[error("denominator vanishes (basin boundary): {0}")]
    RidgeDenominator(String),
    #[error("landscape grids support 1 or 2 axes, got {0}")]
    BadAxisCount(usize),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HessianClass {
    PosDef,
    NegDef,
    Indefinite,
    PosSemiDef,
    NegSemiDef,
}

impl HessianClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            HessianClass::PosDef => "positive definite",
            HessianClass::NegDef => "negative definite",
            HessianClass::Indefinite => "indefinite",
            HessianClass::PosSemiDef => "positive semidefinite",
            HessianClass::NegSemiDef => "negative semidefinite",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HessianReport {
    pub point: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub class: HessianClass,
    /// Leading principal minors D1..Dn (filled for n ≤ 3).
    pub minors: Vec<f64>,
}

/// Classifies a symmetric matrix from its eigenvalue signs. Eigenvalues with
/// magnitude at or below `tol` (scaled by the matrix norm) count as zero, so
/// boundary cases come back as semidefinite rather than silently binned.
pub fn hessian_classify(h: &DMatrix<f64>, tol: f64) -> Result<HessianReport, AnalysisError> {
    let n = h.nrows();
    assert_eq!(n, h.ncols());
    let scale = h.amax().max(1.0);
    let mut asym = 0.0f64;
    for r in 0..n {
        for c in 0..r {
            asym = asym.max((h[(r, c)] - h[(c, r)]).abs());
        }
    }
    if asym > tol * scale {
        return Err(AnalysisError::Asymmetric(asym));
    }
    let sym = DMatrix::from_fn(n, n, |r, c| 0.5 * (h[(r, c)] + h[(c, r)]));
    let eig = nalgebra::SymmetricEigen::new(sym.clone());
    let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = tol * scale;
    let pos = eigenvalues.iter().filter(|&&e| e > cut).count();
    let neg = eigenvalues.iter().filter(|&&e| e < -cut).count();
    let zero = n - pos - neg;
    let class = if pos > 0 && neg > 0 {
        HessianClass::Indefinite
    } else if zero == 0 && pos == n {
        HessianClass::PosDef
    } else if zero == 0 && neg == n {
        HessianClass::NegDef
    } else if neg == 0 {
        HessianClass::PosSemiDef
    } else {
        HessianClass::NegSemiDef
    };
    let mut minors = Vec::new();
    if n <= 3 {
        for k in 1..=n {
            let sub = sym.view((0, 0), (k, k)).into_owned();
            minors.push(sub.determinant());
        }
    }
    Ok(HessianReport { point: Vec::new(), eigenvalues, class, minors })
}

/// Leading principal minors of the two-bus Lagrangian Hessian when `V2` sits
/// at its bound (the `(θ, V1)` block): `D1 = V1 V2 (-2gb)/(g cosθ (tanθ - b/g))`
/// and `D2 = 2g D1`. The multiplier is already eliminated through the
/// stationarity relation, so `mu` does not appear in the closed form.
pub fn minors_2bus_v2_binding(
    v1: f64,
    v2: f64,
    theta: f64,
    mu: f64,
    g: f64,
    b: f64,
) -> Result<(f64, f64), AnalysisError> {
    let _ = mu;
    let d1 = d1_closed_form(v1, v2, theta, g, b)?;
    Ok((d1, 2.0 * g * d1))
}

/// Minors for the `V1`-binding case (the `(θ, V2)` block): `D̃2 = 2g μ D1`.
pub fn minors_2bus_v1_binding(
    v1: f64,
    v2: f64,
    theta: f64,
    mu: f64,
    g: f64,
    b: f64,
) -> Result<(f64, f64), AnalysisError> {
    let d1 = d1_closed_form(v1, v2, theta, g, b)?;
    Ok((d1, 2.0 * g * mu * d1))
}

fn d1_closed_form(v1: f64, v2: f64, theta: f64, g: f64, b: f64) -> Result<f64, AnalysisError> {
    // g cosθ (tanθ - b/g) = g sinθ - b cosθ
    let den = g * theta.sin() - b * theta.cos();
    if den.abs() < 1e-9 * (g.abs() + b.abs()) {
        return Err(AnalysisError::RidgeDenominator(format!("theta = {theta}")));
    }
    Ok(v1 * v2 * (-2.0 * g * b) / den)
}

/// Closed-form second derivative of the two-bus partial Lagrangian with the
/// multiplier eliminated through the stationary angle (unit marginal cost):
/// `L'' = -2gb / (g cosθ (tanθ - b/g))`. Positive left of `atan(b/g)`,
/// negative right of it.
pub fn lagrangian_curvature_2bus(g: f64, b: f64, theta: f64) -> Result<f64, AnalysisError> {
    let den = g * theta.sin() - b * theta.cos();
    if den.abs() < 1e-9 * (g.abs() + b.abs()) {
        return Err(AnalysisError::RidgeDenominator(format!("theta = {theta}")));
    }
    Ok(-2.0 * g * b / den)
}

/// The feasibility-restricted voltage gradients of the two-bus problem (the
/// penalty terms vanish at feasible points):
/// `(∂L/∂V1, ∂L/∂V2) = (2gV1 - V2(g cosθ - b sinθ), -V1(g cosθ - b sinθ))`.
pub fn binding_voltage_gradients(v1: f64, v2: f64, theta: f64, g: f64, b: f64) -> (f64, f64) {
    let factor = g * theta.cos() - b * theta.sin();
    (2.0 * g * v1 - v2 * factor, -v1 * factor)
}

/// Series loss of a unit-voltage line at angle spread `theta`: `2g(1 - cosθ)`.
pub fn transmission_loss(g: f64, theta: f64) -> f64 {
    2.0 * g * (1.0 - theta.cos())
}

/// Result of sampling the attraction-basin inequality
/// `∇f(x)ᵀ(x⋆ - x) < 0` over a box.
#[derive(Debug, Clone)]
pub struct BasinReport {
    pub pass: bool,
    /// The largest (worst) inner product over the sample; negative margins
    /// mean every sampled descent direction points at `x_star`.
    pub max_inner: f64,
    pub counterexamples: Vec<Vec<f64>>,
}

/// Samples `n_samples` uniform points in the box (excluding a 1e-6 ball
/// around `x_star`) and evaluates the basin inequality with strict zero
/// margin; callers pick their own pass margin from `max_inner`.
pub fn basin_check(
    grad: &dyn Fn(&[f64], &mut [f64]),
    x_star: &[f64],
    lower: &[f64],
    upper: &[f64],
    n_samples: usize,
    seed: u64,
) -> BasinReport {
    let dim = x_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_inner = f64::NEG_INFINITY;
    let mut counterexamples = Vec::new();
    let mut g = vec![0.0; dim];
    let mut drawn = 0usize;
    while drawn < n_samples {
        let x: Vec<f64> = (0..dim).map(|i| rng.gen_range(lower[i]..=upper[i])).collect();
        let dist = x
            .iter()
            .zip(x_star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dist <= 1e-6 {
            continue;
        }
        drawn += 1;
        grad(&x, &mut g);
        let inner: f64 = g.iter().zip(x_star.iter().zip(&x)).map(|(gi, (xs, xi))| gi * (xs - xi)).sum();
        if inner > max_inner {
            max_inner = inner;
        }
        if inner >= 0.0 && counterexamples.len() < 8 {
            counterexamples.push(x);
        }
    }
    BasinReport { pass: counterexamples.is_empty(), max_inner, counterexamples }
}

/// One axis of a landscape grid.
#[derive(Debug, Clone, Serialize)]
pub struct AxisSpec {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn new(label: &str, min: f64, max: f64, step: f64) -> Self {
        AxisSpec { label: label.to_string(), min, max, step }
    }
    pub fn samples(&self) -> usize {
        ((self.max - self.min) / self.step).floor() as usize + 1
    }
}

/// Dense objective samples over 1 or 2 axes plus the polished stationary
/// markers found by the grid-search oracle.
#[derive(Debug)]
pub struct LandscapeGrid {
    pub axes: Vec<AxisSpec>,
    /// Row-major over (axis0, axis1); length = product of sample counts.
    pub values: Vec<f64>,
    pub markers: Vec<StationaryPoint>,
}

pub fn landscape_grid(
    objective: &dyn crate::model::NlpProblem,
    axes: &[AxisSpec],
) -> Result<LandscapeGrid, AnalysisError> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(AnalysisError::BadAxisCount(axes.len()));
    }
    assert_eq!(objective.n_vars(), axes.len());
    let counts: Vec<usize> = axes.iter().map(|a| a.samples()).collect();
    let total: usize = counts.iter().product();
    if total as u128 > 100_000_000 {
        return Err(AnalysisError::Oracle(crate::oracle::OracleError::GridTooLarge(
            total as u128,
        )));
    }
    let mut values = Vec::with_capacity(total);
    match axes.len() {
        1 => {
            for i in 0..counts[0] {
                let x = axes[0].min + i as f64 * axes[0].step;
                values.push(objective.objective(&[x]));
            }
        }
        _ => {
            for i in 0..counts[0] {
                let x = axes[0].min + i as f64 * axes[0].step;
                for j in 0..counts[1] {
                    let y = axes[1].min + j as f64 * axes[1].step;
                    values.push(objective.objective(&[x, y]));
                }
            }
        }
    }
    let search = crate::oracle::GridBox::new(
        axes.iter().map(|a| a.min).collect(),
        axes.iter().map(|a| a.max).collect(),
    );
    let step = axes.iter().map(|a| a.step).fold(f64::INFINITY, f64::min);
    let markers = crate::oracle::grid_search(objective, &search, step)?;
    Ok(LandscapeGrid { axes: axes.to_vec(), values, markers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fd;
    use crate::model::{NlpProblem, ReducedLagrangian, ReducedNetwork, ReducedPenalized};
    use crate::oracle;
    use nalgebra::DMatrix;

    #[test]
    fn classifies_toy_matrices() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(hessian_classify(&id, 1e-8).unwrap().class, HessianClass::PosDef);
        let ind = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(hessian_classify(&ind, 1e-8).unwrap().class, HessianClass::Indefinite);
        let nd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, -1.0]));
        assert_eq!(hessian_classify(&nd, 1e-8).unwrap().class, HessianClass::NegDef);
        let psd = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(hessian_classify(&psd, 1e-8).unwrap().class, HessianClass::PosSemiDef);

        let mut bad = id.clone();
        bad[(0, 1)] = 0.5;
        assert!(matches!(hessian_classify(&bad, 1e-8), Err(AnalysisError::Asymmetric(_))));
    }

    #[test]
    fn curvature_signs_split_at_the_ridge() {
        let (g, b): (f64, f64) = (1.0, 4.0);
        let ridge = (b / g).atan();
        assert!(lagrangian_curvature_2bus(g, b, ridge - 0.3).unwrap() > 0.0);
        assert!(lagrangian_curvature_2bus(g, b, ridge + 0.3).unwrap() < 0.0);
        assert!(lagrangian_curvature_2bus(g, b, ridge).is_err());
    }

    #[test]
    fn curvature_matches_finite_difference_of_the_lagrangian() {
        let (g, b): (f64, f64) = (1.0, 4.0);
        let net = ReducedNetwork::two_bus(g, b, 1.0);
        for theta in [0.3, 0.9, 2.0, 2.39] {
            let mu = oracle::mu_of_theta_2bus(g, b, theta).unwrap();
            let lag = ReducedLagrangian { net: net.clone(), mu: vec![mu] };
            let grad_fn = |x: &[f64], out: &mut [f64]| lag.objective_grad(x, out);
            let h = fd::hessian_of_gradient(&grad_fn, &[theta]);
            let closed = lagrangian_curvature_2bus(g, b, theta).unwrap();
            assert!(
                (h[(0, 0)] - closed).abs() <= 1e-6 * closed.abs().max(1.0),
                "theta={theta}: fd={} closed={closed}",
                h[(0, 0)]
            );
        }
    }

    #[test]
    fn voltage_gradient_identities() {
        let (g, b): (f64, f64) = (1.3, 3.1);
        // dL/dV1 = 0 forces dL/dV2 = -2g V1²/V2 < 0.
        let (v1, v2) = (1.02, 0.98);
        // pick θ so that g cosθ - b sinθ = 2 g v1 / v2
        let target: f64 = 2.0 * g * v1 / v2;
        let r = (g * g + b * b).sqrt();
        if target.abs() <= r {
            let phi = (b / g).atan(); // g cosθ - b sinθ = r cos(θ + φ·sign...)
            let theta = (target / r).acos() - phi;
            let (d1, d2) = binding_voltage_gradients(v1, v2, theta, g, b);
            assert!(d1.abs() < 1e-9);
            assert!((d2 + 2.0 * g * v1 * v1 / v2).abs() < 1e-9);
            assert!(d2 < 0.0);
        }
        // dL/dV2 = 0 forces dL/dV1 = 2 g V1 > 0.
        let theta0 = (g / b).atan(); // g cosθ = b sinθ
        let (d1, d2) = binding_voltage_gradients(v1, v2, theta0, g, b);
        assert!(d2.abs() < 1e-9);
        assert!((d1 - 2.0 * g * v1).abs() < 1e-9);
        // Flat point: (g, -g).
        let (d1, d2) = binding_voltage_gradients(1.0, 1.0, 0.0, g, 0.0);
        assert!((d1 - g).abs() < 1e-12 && (d2 + g).abs() < 1e-12);
    }

    #[test]
    fn loss_formula_and_dominance() {
        assert_eq!(transmission_loss(1.0, 0.0), 0.0);
        assert!((transmission_loss(0.7, std::f64::consts::PI) - 2.8).abs() < 1e-12);
        let (ts, tb) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        assert!(transmission_loss(1.0, ts) < transmission_loss(1.0, tb));
    }

    #[test]
    fn convex_quadratic_passes_basin_check() {
        let grad = |x: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * x[0];
            out[1] = 4.0 * x[1];
        };
        let report = basin_check(&grad, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], 500, 42);
        assert!(report.pass);
        assert!(report.max_inner < 0.0);
    }

    #[test]
    fn two_bus_penalty_basin_holds_left_of_ridge_and_fails_across() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let pen = ReducedPenalized { net, rho: 100.0 };
        let (root, _) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        // Center on the penalized minimizer itself.
        let ts = crate::nlp::minimize(&pen, &[root], &crate::nlp::SolveOptions::theory()).primal[0];
        let ridge = 4.0f64.atan();
        let grad = |x: &[f64], out: &mut [f64]| pen.objective_grad(x, out);
        let inside = basin_check(
            &grad,
            &[ts],
            &[-std::f64::consts::FRAC_PI_2 + 0.05],
            &[ridge - 0.05],
            400,
            7,
        );
        assert!(inside.pass, "max inner product {}", inside.max_inner);
        let straddling = basin_check(&grad, &[ts], &[ridge - 0.2], &[ridge + 0.6], 400, 7);
        assert!(!straddling.pass);
        assert!(!straddling.counterexamples.is_empty());
        assert!(straddling.counterexamples.iter().all(|x| x[0] > ridge));
    }

    #[test]
    fn landscape_grids_count_minima() {
        let net = ReducedNetwork::two_bus(1.0, 4.0, 1.0);
        let lo = -std::f64::consts::FRAC_PI_2 + 0.02;
        let hi = 1.5 * std::f64::consts::PI - 0.02;
        let pen = ReducedPenalized { net: net.clone(), rho: 50.0 };
        let grid = landscape_grid(&pen, &[AxisSpec::new("theta", lo, hi, 0.01)]).unwrap();
        assert_eq!(grid.markers.len(), 2);

        let (_, tb) = oracle::two_bus_roots(1.0, 4.0, 1.0).unwrap();
        let mu = oracle::mu_of_theta_2bus(1.0, 4.0, tb).unwrap();
        let lag = ReducedLagrangian { net, mu: vec![mu] };
        let grid = landscape_grid(&lag, &[AxisSpec::new("theta", lo, hi, 0.01)]).unwrap();
        assert_eq!(grid.markers.len(), 1, "the dualized objective has a single interior minimum");
        // The flat function has no markers.
        let flat = crate::model::UnconstrainedFn::new(1, |_: &[f64]| 1.0);
        let grid = landscape_grid(&flat, &[AxisSpec::new("x", 0.0, 1.0, 0.01)]).unwrap();
        assert!(grid.markers.is_empty());
    }
}
