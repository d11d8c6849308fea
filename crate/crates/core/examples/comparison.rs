//! Pathwise comparison: a larger generator and terminal value give a larger Y.

use std::sync::Arc;

use bsde_lab::brownian::simulate_paths;
use bsde_lab::diagnostics::ordering_violations;
use bsde_lab::generators::{make_builtin_generator, make_terminal};
use bsde_lab::grid::make_grid;
use bsde_lab::regression::RegressionBasis;
use bsde_lab::solver::{solve_lipschitz_bsde, PicardConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let batch = Arc::new(simulate_paths(make_grid(1.0, 32)?, 1, 20_000, 4)?);
    let xi = make_terminal("w_T", &[])?;
    let solve = |f| solve_lipschitz_bsde(f, &xi, &batch, &RegressionBasis::default(), &PicardConfig::default());

    let (f_hi, f_lo) = (
        make_builtin_generator("affine", &[0.5, 0.5, 0.5])?,
        make_builtin_generator("affine", &[0.5, 0.5, 0.0])?,
    );
    let (upper, lower) = (solve(&f_hi)?, solve(&f_lo)?);
    let report = ordering_violations(&upper, &lower, 1e-2)?;
    println!(
        "Y0: upper {:.4}, lower {:.4}; violations {}/{} ({:.4}%), worst excess {:.2e}",
        upper.y0_mean(),
        lower.y0_mean(),
        report.violations,
        report.checked,
        100.0 * report.fraction,
        report.worst_excess
    );
    Ok(())
}
