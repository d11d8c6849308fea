use std::sync::Arc;

use bsde_lab::brownian::{simulate_paths, BrownianBatch};
use bsde_lab::diagnostics::{bsde_residual, check_apriori_i, check_apriori_ii, ordering_violations};
use bsde_lab::generators::{make_builtin_generator, make_terminal, GeneratorSpec};
use bsde_lab::grid::make_grid;
use bsde_lab::regression::RegressionBasis;
use bsde_lab::solver::{solve_lipschitz_bsde, PicardConfig, SolutionEstimate};

fn batch(steps: usize, paths: usize, seed: u64) -> Arc<BrownianBatch> {
    Arc::new(simulate_paths(make_grid(1.0, steps).unwrap(), 1, paths, seed).unwrap())
}

fn solve(gen: &GeneratorSpec, terminal: &str, b: &Arc<BrownianBatch>) -> SolutionEstimate {
    let xi = make_terminal(terminal, &[]).unwrap();
    solve_lipschitz_bsde(gen, &xi, b, &RegressionBasis::default(), &PicardConfig::default()).unwrap()
}

fn y0_mean(sol: &SolutionEstimate) -> f64 {
    (0..sol.paths()).map(|m| sol.y(m, 0)).sum::<f64>() / sol.paths() as f64
}

fn z0_mean(sol: &SolutionEstimate) -> f64 {
    (0..sol.paths()).map(|m| sol.z(m, 0)[0]).sum::<f64>() / sol.paths() as f64
}

// Y_t = exp(a(T - t)) W_t, Z_t = exp(a(T - t)) for f = a y, ξ = W_T.
#[test]
fn linear_y_oracle_refines_with_grid_and_sample() {
    let gen = make_builtin_generator("linear_y", &[0.5]).unwrap();
    let exact_z0 = 0.5f64.exp();
    let err = |steps, paths| {
        let sol = solve(&gen, "w_T", &batch(steps, paths, 3));
        (z0_mean(&sol) - exact_z0).abs() / exact_z0
    };
    let coarse = err(16, 5_000);
    let fine = err(64, 20_000);
    assert!(fine <= 0.03, "Z_0 relative error {fine}");
    assert!(fine <= coarse + 0.005, "refinement did not help: {coarse} -> {fine}");
}

#[test]
fn linear_z_oracle_has_small_residual() {
    let gen = make_builtin_generator("linear_z", &[0.5]).unwrap();
    let b = batch(64, 20_000, 4);
    let sol = solve(&gen, "w_T", &b);
    assert!((y0_mean(&sol) - 0.5).abs() < 0.02);
    let r = bsde_residual(&sol, &gen, &make_terminal("w_T", &[]).unwrap());
    assert!(r.mean <= 0.05, "{r:?}");
}

#[test]
fn apriori_bounds_hold_on_oracles() {
    let b = batch(32, 10_000, 5);
    let half_y = make_builtin_generator("linear_y", &[0.5]).unwrap();
    let zero = make_builtin_generator("zero", &[]).unwrap();
    let a = solve(&half_y, "w_T", &b);
    let z = solve(&zero, "w_T", &b);

    let r = check_apriori_i(&a, &half_y, 3.0, 64.0).unwrap();
    assert!(r.passed && r.ratio_y <= 4.0 && r.ratio_z <= 4.0, "{r:?}");

    let d = check_apriori_ii(&a, &half_y, &z, &zero, 2.0, 64.0).unwrap();
    assert!(d.passed, "{d:?}");
    // Identical terminal values: the gap is driven entirely by the generators.
    assert_eq!(d.delta_terminal_pth_moment, 0.0);
    assert!(d.sp_dist.value > 0.0);
}

#[test]
fn comparison_orders_solutions() {
    let b = batch(32, 10_000, 6);
    let upper = solve(&make_builtin_generator("constant", &[1.0]).unwrap(), "w_T", &b);
    let lower = solve(&make_builtin_generator("zero", &[]).unwrap(), "w_T", &b);
    let report = ordering_violations(&upper, &lower, 1e-2).unwrap();
    assert!(report.passes(1e-2), "{report:?}");
    assert!((y0_mean(&upper) - y0_mean(&lower) - 1.0).abs() < 1e-2);
}
