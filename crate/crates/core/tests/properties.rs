use std::sync::Arc;

use proptest::prelude::*;

use bsde_lab::brownian::{simulate_paths, BrownianBatch};
use bsde_lab::config::RunConfig;
use bsde_lab::diagnostics::{hp_norm, sp_distance, sp_norm};
use bsde_lab::generators::{make_builtin_generator, make_dominating_generator};
use bsde_lab::grid::make_grid;
use bsde_lab::infconv::{localization_radius, ApproxFamily, SearchParams};
use bsde_lab::regression::{condexp_regress, RegressionBasis};
use bsde_lab::rng::{normals_at, PathNormals};
use bsde_lab::solver::SolutionEstimate;

fn small_batch(seed: u64) -> Arc<BrownianBatch> {
    Arc::new(simulate_paths(make_grid(1.0, 6).unwrap(), 1, 40, seed).unwrap())
}

fn random_solution(batch: &Arc<BrownianBatch>, values: &[f64]) -> SolutionEstimate {
    let ny = batch.paths() * (batch.steps() + 1);
    let nz = batch.paths() * batch.steps();
    let y = (0..ny).map(|k| values[k % values.len()] * (1.0 + (k % 7) as f64)).collect();
    let z = (0..nz).map(|k| values[(k + 3) % values.len()]).collect();
    SolutionEstimate::from_parts(Arc::clone(batch), y, z, "random").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norms_are_homogeneous(c in 0.0f64..10.0, p in 1.1f64..6.0, seed in 0u64..1000,
                             values in prop::collection::vec(-3.0f64..3.0, 5..20)) {
        let b = small_batch(seed);
        let sol = random_solution(&b, &values);
        let scaled = sol.map(|y| c * y, |z| c * z);
        let (a, s) = (sp_norm(&sol, p).unwrap().value, sp_norm(&scaled, p).unwrap().value);
        prop_assert!((s - c * a).abs() <= 1e-10 * (1.0 + c * a));
        let (a, s) = (hp_norm(&sol, p).unwrap().value, hp_norm(&scaled, p).unwrap().value);
        prop_assert!((s - c * a).abs() <= 1e-10 * (1.0 + c * a));
    }

    #[test]
    fn sp_distance_triangle(p in 1.1f64..5.0, seed in 0u64..1000,
                            a in prop::collection::vec(-3.0f64..3.0, 5..12),
                            b in prop::collection::vec(-3.0f64..3.0, 5..12),
                            c in prop::collection::vec(-3.0f64..3.0, 5..12)) {
        let batch = small_batch(seed);
        let (x, y, z) = (random_solution(&batch, &a), random_solution(&batch, &b), random_solution(&batch, &c));
        let xz = sp_distance(&x, &z, p).unwrap().value;
        let xy = sp_distance(&x, &y, p).unwrap().value;
        let yz = sp_distance(&y, &z, p).unwrap().value;
        prop_assert!(xz <= xy + yz + 1e-12);
    }

    #[test]
    fn envelope_is_below_and_lipschitz(n in 1.5f64..20.0, y in -4.0f64..4.0, z in -4.0f64..4.0,
                                       dy in -1.0f64..1.0, dz in -1.0f64..1.0) {
        for name in ["sqrt_y", "sqrt_z"] {
            let base = make_builtin_generator(name, &[]).unwrap();
            let fam = ApproxFamily::new(base.clone(), n, 1, SearchParams::default()).unwrap();
            let a = fam.envelope(0.3, &[0.1], y, &[z]);
            let b = fam.envelope(0.3, &[0.1], y + dy, &[z + dz]);
            prop_assert!(a.value <= base.eval(0.3, &[0.1], y, &[z]) + 1e-12);
            prop_assert!(a.value >= -base.growth_bound(0.3, &[0.1], y, &[z]) - a.tol);
            prop_assert!((a.value - b.value).abs() <= n * (dy.abs() + dz.abs()) + a.tol + b.tol + 1e-12);
        }
    }

    #[test]
    fn envelopes_increase_in_n(n in 1.5f64..10.0, y in -3.0f64..3.0) {
        let base = make_builtin_generator("sqrt_y", &[]).unwrap();
        let lo = ApproxFamily::new(base.clone(), n, 1, SearchParams::default()).unwrap();
        let hi = ApproxFamily::new(base, 2.0 * n, 1, SearchParams::default()).unwrap();
        let (a, b) = (lo.envelope(0.0, &[0.0], y, &[0.0]), hi.envelope(0.0, &[0.0], y, &[0.0]));
        prop_assert!(a.value <= b.value + a.tol + b.tol);
    }

    #[test]
    fn localization_radius_formula(g in 0.0f64..5.0, k in 0.0f64..3.0, extra in 0.1f64..5.0,
                                   y in -5.0f64..5.0, z in -5.0f64..5.0) {
        let n = k + extra;
        let r = localization_radius(g, k, n, y, &[z]).unwrap();
        prop_assert!((r - 2.0 * (g + k * (y.abs() + z.abs())) / (n - k)).abs() <= 1e-12 * (1.0 + r));
    }

    #[test]
    fn dominating_generator_bounds_base(y in -5.0f64..5.0, z in -5.0f64..5.0, x in -3.0f64..3.0) {
        for (name, params) in [("sqrt_y", vec![]), ("sqrt_z", vec![]), ("lsm_example", vec![]),
                               ("affine", vec![0.5, -0.5, 1.0])] {
            let base = make_builtin_generator(name, &params).unwrap();
            let dom = make_dominating_generator(&base);
            prop_assert!(base.eval(0.5, &[x], y, &[z]).abs() <= dom.eval(0.5, &[x], y, &[z]) + 1e-12);
        }
    }

    #[test]
    fn random_access_normals_match_sequential(seed in any::<u64>(), path in 0u64..10_000, dim in 1usize..5,
                                              step in 0usize..50) {
        let mut seq = PathNormals::new(seed, path, dim, 0);
        let mut buf = vec![0.0; dim];
        for _ in 0..=step {
            seq.next_step(&mut buf);
        }
        let mut direct = vec![0.0; dim];
        normals_at(seed, path, step, &mut direct);
        prop_assert_eq!(buf, direct);
    }

    #[test]
    fn regression_reproduces_polynomials(c in prop::collection::vec(-2.0f64..2.0, 4), seed in 0u64..500) {
        let b = simulate_paths(make_grid(1.0, 2).unwrap(), 1, 300, seed).unwrap();
        let x: Vec<f64> = (0..300).map(|m| b.path_value(m, 1).unwrap()[0]).collect();
        let target: Vec<f64> = x.iter().map(|x| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x).collect();
        let basis = RegressionBasis { ridge: 0.0, ..RegressionBasis::default() };
        let fit = condexp_regress(&target, &x, 1, &basis).unwrap();
        for (f, t) in fit.fitted.iter().zip(&target) {
            prop_assert!((f - t).abs() <= 1e-8 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn path_dump_round_trips(seed in any::<u64>(), dim in 1usize..3, paths in 1usize..20, steps in 1usize..8) {
        let b = simulate_paths(make_grid(0.5, steps).unwrap(), dim, paths, seed).unwrap();
        let mut bytes = Vec::new();
        b.write_to(&mut bytes).unwrap();
        let back = BrownianBatch::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.increments(), b.increments());
        prop_assert_eq!(back.fingerprint(), b.fingerprint());
    }

    #[test]
    fn config_echo_is_a_fixed_point(n in 1usize..500, m in 1usize..100_000, p in 1.01f64..8.0, seed in 0u64..1_000_000) {
        let overrides = vec![format!("N={n}"), format!("M={m}"), format!("p={p:?}"), format!("seed={seed}")];
        let cfg = RunConfig::from_toml("", &overrides).unwrap();
        let echoed = cfg.effective_toml();
        let again = RunConfig::from_toml(&echoed, &[]).unwrap();
        prop_assert_eq!(again.effective_toml(), echoed);
        prop_assert_eq!((again.steps, again.paths, again.p, again.seed), (n, m, p, seed));
    }
}
