//! Solve f(y) = a y with ξ = W_T, where Y_t = e^{a(T-t)} W_t and Z_t = e^{a(T-t)}.

use std::sync::Arc;

use bsde_lab::brownian::simulate_paths;
use bsde_lab::diagnostics::bsde_residual;
use bsde_lab::generators::{make_builtin_generator, make_terminal};
use bsde_lab::grid::make_grid;
use bsde_lab::regression::RegressionBasis;
use bsde_lab::solver::{solve_lipschitz_bsde, PicardConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = 0.5;
    let gen = make_builtin_generator("linear_y", &[a])?;
    let xi = make_terminal("w_T", &[])?;
    let batch = Arc::new(simulate_paths(make_grid(1.0, 64)?, 1, 20_000, 1)?);
    let sol = solve_lipschitz_bsde(&gen, &xi, &batch, &RegressionBasis::default(), &PicardConfig::default())?;

    let levels = batch.levels();
    println!("{:>6} {:>10} {:>10}", "t", "rms Y err", "mean Z");
    for i in (0..64).step_by(8) {
        let t = batch.grid().time(i);
        let growth = (a * (1.0 - t)).exp();
        let rms = ((0..sol.paths()).map(|m| (sol.y(m, i) - growth * levels[m * 65 + i]).powi(2)).sum::<f64>()
            / sol.paths() as f64)
            .sqrt();
        let z = (0..sol.paths()).map(|m| sol.z(m, i)[0]).sum::<f64>() / sol.paths() as f64;
        println!("{t:>6.3} {rms:>10.5} {z:>10.5}   (exact Z {growth:.5})");
    }
    let r = bsde_residual(&sol, &gen, &xi);
    println!("pathwise residual: mean {:.4}, q99 {:.4}", r.mean, r.q99);
    Ok(())
}
