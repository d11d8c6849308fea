//! Empirical a priori estimates: one solution against its data, and two
//! coupled solutions against the difference of their data.

use std::sync::Arc;

use bsde_lab::brownian::simulate_paths;
use bsde_lab::diagnostics::{check_apriori_i, check_apriori_ii};
use bsde_lab::generators::{make_builtin_generator, make_terminal};
use bsde_lab::grid::make_grid;
use bsde_lab::regression::RegressionBasis;
use bsde_lab::solver::{solve_lipschitz_bsde, PicardConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let batch = Arc::new(simulate_paths(make_grid(1.0, 32)?, 1, 20_000, 9)?);
    let xi = make_terminal("w_T", &[])?;
    let f1 = make_builtin_generator("affine", &[0.5, 0.5, 1.0])?;
    let f2 = make_builtin_generator("linear_z", &[-0.5])?;
    let solve = |f| solve_lipschitz_bsde(f, &xi, &batch, &RegressionBasis::default(), &PicardConfig::default());
    let (s1, s2) = (solve(&f1)?, solve(&f2)?);

    for p in [1.5, 2.0, 3.0] {
        let r = check_apriori_i(&s1, &f1, p, 64.0)?;
        println!("p = {p}: Y ratio {:.3}, Z ratio {:.3}, heavy tail {}", r.ratio_y, r.ratio_z, r.heavy_tail);
    }
    let d = check_apriori_ii(&s1, &f1, &s2, &f2, 2.0, 64.0)?;
    println!(
        "difference: S^2 {:.4} ± {:.4}, H^2 {:.4}; ratios Y {:.3} Z {:.3}; passed {}",
        d.sp_dist.value, d.sp_dist.std_error, d.hp_dist.value, d.ratio_ii_y, d.ratio_ii_z, d.passed
    );
    Ok(())
}
