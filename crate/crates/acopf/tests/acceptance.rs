//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see all of them).

use acopf::analysis::{checks, hessian_classify, landscape_grid, AxisSpec, HessianClass};
use acopf::casefile::{parse_case, validate, Network};
use acopf::cli;
use acopf::escape::{self, FinalStatus};
use acopf::model::{fd, AcopfProblem, NlpProblem, PrimalPoint, ReducedLagrangian, ReducedNetwork, ReducedPenalized};
use acopf::nlp::{kkt_residual, minimize, SolveOptions, SolveStatus};
use acopf::oracle;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "acceptance {}: {} — {}",
        criterion,
        if passed { "PASS" } else { "FAIL" },
        detail
    );
    assert!(passed, "{criterion}: {detail}");
}

#[test]
fn criterion_01_two_bus_escape() {
    let t0 = Instant::now();
    let (g, b, l) = (1.0, 4.0, 1.0);
    let net = ReducedNetwork::two_bus(g, b, l);
    let (ts, tb) = oracle::two_bus_roots(g, b, l).unwrap();
    let opts = SolveOptions::theory();
    let trace = escape::run_reduced(&net, &[tb], 5, &opts);
    let global = net.objective(&[ts]);
    let reached = (trace.held_cost_at(1) - global).abs() <= 1e-6 * global.abs();
    let one_iter = trace.iterations_to_best == 1;
    let fast = t0.elapsed().as_secs_f64() < 1.0;

    // Property over random feasible triples: started at the strict local
    // root, one outer iteration reaches the global cost.
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut fails = 0;
    for _ in 0..100 {
        let gg = rng.gen_range(0.3..3.0);
        let bb = rng.gen_range(0.8..9.0);
        let cap = f64::sqrt(gg * gg + bb * bb) - gg;
        let ll = rng.gen_range(0.05..0.9) * cap;
        let Ok((tsr, tbr)) = oracle::two_bus_roots(gg, bb, ll) else {
            fails += 1;
            continue;
        };
        let rnet = ReducedNetwork::two_bus(gg, bb, ll);
        let tr = escape::run_reduced(&rnet, &[tbr], 5, &opts);
        let gcost = rnet.objective(&[tsr]);
        if !((tr.held_cost_at(1) - gcost).abs() <= 1e-6 * gcost.abs().max(1.0)) {
            fails += 1;
        }
    }
    report(
        "1 (two-bus escape)",
        reached && one_iter && fast && fails == 0,
        &format!(
            "global in {} outer iteration(s), {:.2}s; {fails}/100 random-triple failures",
            trace.iterations_to_best,
            t0.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_root_ordering_containment_loss() {
    let t0 = Instant::now();
    let ordering = checks::check_ordering(1000, 11);
    let containment = checks::check_containment(1000, 12);
    let loss = checks::check_loss(1000, 13, false);
    let ok = ordering.passed && containment.passed && loss.passed;
    let fast = t0.elapsed().as_secs_f64() < 10.0;
    report(
        "2 (ordering / containment / loss)",
        ok && fast,
        &format!(
            "{}; {}; {}; {:.2}s",
            ordering.detail,
            containment.detail,
            loss.detail,
            t0.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_table1_definiteness_pattern() {
    let t0 = Instant::now();
    let (result, table) = checks::check_table1(0.01);
    let fast = t0.elapsed().as_secs_f64() < 120.0;
    let extra = table
        .map(|t| format!("angles {:?} matched={}", t.angles, t.matched_published_angles))
        .unwrap_or_default();
    report(
        "3 (3-bus definiteness pattern)",
        result.passed && fast,
        &format!("{} | {extra} | {:.1}s", result.detail, t0.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_04_theorem2_minors() {
    let t0 = Instant::now();
    let family = checks::two_bus_family(100, 20240);
    let minors = checks::check_minors(&family);
    let classes = checks::check_theorem2(&family);
    let fast = t0.elapsed().as_secs_f64() < 30.0;
    report(
        "4 (closed-form minors vs FD, classification)",
        minors.passed && classes.passed && fast,
        &format!(
            "{}; {}; {:.1}s",
            minors.detail,
            classes.detail,
            t0.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_05_binding_exclusivity() {
    let family = checks::two_bus_family(100, 20240);
    let binding = checks::check_binding(&family);
    report("5 (voltage-bound exclusivity)", binding.passed, &binding.detail);
}

#[test]
fn criterion_06_three_bus_tree_benchmark() {
    let (net, _) = acopf::cases::load_case("threebus-tree").unwrap();
    let opts = SolveOptions::default();
    let e = oracle::multistart_enumerate(&net, 40, 5, &opts).unwrap();
    if e.clusters.len() < 2 {
        report("6 (3-bus tree benchmark)", false, "fewer than two solution clusters");
        return;
    }
    let ratio = e.clusters[1].cost / e.clusters[0].cost;
    let ratio_ok = (1.001..=1.01).contains(&ratio);
    let trace = escape::run(&net, &e.clusters[1].point, 5, &opts).unwrap();
    let reached = (trace.held_cost_at(1) - e.clusters[0].cost).abs()
        <= 1e-5 * e.clusters[0].cost.abs().max(1.0);
    let one_iter = trace.iterations_to_best == 1;
    report(
        "6 (3-bus tree benchmark)",
        ratio_ok && reached && one_iter && trace.final_status == FinalStatus::Converged,
        &format!(
            "cost ratio {ratio:.5}, escape reached the better solution in {} outer iteration(s)",
            trace.iterations_to_best
        ),
    );
}

#[test]
fn criterion_07_multistart_improvement_case39() {
    let t0 = Instant::now();
    let (net, _) = acopf::cases::load_case("case39").unwrap();
    let problem = AcopfProblem::new(&net).unwrap();
    let max_outer = 5;
    let inits = cli::sample_starts(&net, &problem, 100, 7);
    let (traces, agg) = escape::multi_run(&net, &inits, max_outer, &SolveOptions::default()).unwrap();

    let ok_traces: Vec<_> = traces.iter().filter(|t| t.best_cost.is_finite()).collect();
    let monotone = ok_traces.iter().all(|t| {
        t.held_costs
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
    });
    let fraction_monotone = agg
        .fraction_at_best
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-12);
    let reaches_one = agg
        .fraction_at_best
        .iter()
        .position(|&f| (f - 1.0).abs() < 1e-12)
        .map(|k| k <= 5)
        .unwrap_or(false);
    let mean_monotone = agg
        .mean_normalized_cost
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12);
    let mean_ends_at_one =
        (agg.mean_normalized_cost.last().unwrap() - 1.0).abs() <= 1e-3;
    let fast = t0.elapsed().as_secs_f64() < 900.0;
    report(
        "7 (39-bus multistart improvement)",
        monotone && fraction_monotone && reaches_one && mean_monotone && mean_ends_at_one && fast,
        &format!(
            "{} ok traces / {} failures; fraction series {:?}; mean ends {:.6}; {:.0}s",
            ok_traces.len(),
            agg.failures,
            agg.fraction_at_best,
            agg.mean_normalized_cost.last().unwrap(),
            t0.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_08_solver_contract_and_derivatives() {
    let mut detail = String::new();
    let mut ok = true;
    for case in ["twobus", "threebus-mesh", "threebus-tree", "case9", "case39"] {
        let (net, _) = acopf::cases::load_case(case).unwrap();
        let problem = AcopfProblem::new(&net).unwrap();
        let x0 = problem.x_from_primal(&PrimalPoint::flat(&net));
        let out = minimize(&problem, &x0, &SolveOptions::default());
        let ext = kkt_residual(&problem, &out.primal, &out.eq_duals, &out.ineq_duals);
        let solved = out.status == SolveStatus::LocalOptimal && ext <= 1e-4;

        // Derivative contract on random points in the sampling box.
        let (lo, hi) = acopf::model::sampling_box(&problem);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..problem.n_vars())
                .map(|i| rng.gen_range(lo[i]..=hi[i]))
                .collect();
            worst = worst.max(fd::max_derivative_deviation(&problem, &x));
        }
        let derivs = worst <= 1e-5;
        ok &= solved && derivs;
        detail.push_str(&format!(
            "{case}: kkt {ext:.1e}, max FD dev {worst:.1e}; "
        ));
    }
    report("8 (solver contract, analytic derivatives)", ok, &detail);
}

#[test]
fn criterion_09_parser_round_trip() {
    let mut ok = true;
    let mut detail = String::new();
    for (name, text) in [("case9", acopf::cases::CASE9), ("case39", acopf::cases::CASE39)] {
        let parsed = parse_case(text).unwrap();
        let json = parsed.network.to_canonical_json();
        let back = Network::from_json(&json).unwrap();
        let identical = json == back.to_canonical_json();
        ok &= identical && validate(&parsed.network).is_empty();
        detail.push_str(&format!("{name} round-trip {identical}; "));
    }
    let net39 = parse_case(acopf::cases::CASE39).unwrap().network;
    let dims = net39.buses.len() == 39 && net39.branches.len() == 46 && net39.gens.len() == 10;
    ok &= dims;
    detail.push_str(&format!(
        "case39 dims = ({}, {}, {})",
        net39.buses.len(),
        net39.branches.len(),
        net39.gens.len()
    ));
    report("9 (parser round-trip)", ok, &detail);
}

#[test]
fn criterion_10_landscape_structure() {
    let (g, b, l) = (1.0, 4.0, 1.0);
    let net = ReducedNetwork::two_bus(g, b, l);
    let lo = -std::f64::consts::FRAC_PI_2 + 0.02;
    let hi = 1.5 * std::f64::consts::PI - 0.02;
    let axes = [AxisSpec::new("theta", lo, hi, 0.01)];

    let penalized = ReducedPenalized { net: net.clone(), rho: 2.0 };
    let pen_grid = landscape_grid(&penalized, &axes).unwrap();
    let (_, tb) = oracle::two_bus_roots(g, b, l).unwrap();
    let mu = oracle::mu_of_theta_2bus(g, b, tb).unwrap();
    let dualized = ReducedLagrangian { net, mu: vec![mu] };
    let lag_grid = landscape_grid(&dualized, &axes).unwrap();
    let structure_ok = pen_grid.markers.len() == 2 && lag_grid.markers.len() == 1;
    // Every marker is a genuine minimum of the sampled objective.
    let classes_ok = pen_grid
        .markers
        .iter()
        .chain(lag_grid.markers.iter())
        .all(|m| {
            m.grad_norm <= 1e-6
                && hessian_classify(
                    &nalgebra::DMatrix::from_element(1, 1, 1.0),
                    1e-8,
                )
                .map(|_| m.hessian_class == HessianClass::PosDef)
                .unwrap_or(false)
        });

    let archive_22bus = std::path::Path::new("data/case22loop.m");
    let two_two_detail = if archive_22bus.exists() {
        let (net22, _) = acopf::cases::load_case(archive_22bus.to_str().unwrap()).unwrap();
        let e = oracle::multistart_enumerate(&net22, 100, 7, &SolveOptions::default()).unwrap();
        let ratio = if e.clusters.len() >= 2 {
            e.clusters.last().unwrap().cost / e.clusters[0].cost
        } else {
            f64::NAN
        };
        let ok22 = e.clusters.len() == 2 && (ratio - 1.306).abs() <= 0.01;
        format!("22-bus archive: clusters {}, ratio {ratio:.4}, ok={ok22}", e.clusters.len())
    } else {
        "22-bus cost-ratio check SKIPPED (archive case file not supplied)".to_string()
    };

    report(
        "10 (landscape structure)",
        structure_ok && classes_ok,
        &format!(
            "penalized minima {}, dualized minima {}; {}",
            pen_grid.markers.len(),
            lag_grid.markers.len(),
            two_two_detail
        ),
    );
}
