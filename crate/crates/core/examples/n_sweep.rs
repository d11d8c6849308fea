//! Solve the envelope problems f_n for √|y| over a schedule of n and report
//! monotonicity, the Cauchy table, and the residual of the last proxy under f.
//! Small sizes keep this fast; the CLI `sweep` runs the full version.

use bsde_lab::generators::{make_builtin_generator, make_terminal};
use bsde_lab::harness::{run_n_sweep, SweepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gen = make_builtin_generator("sqrt_y", &[])?;
    let xi = make_terminal("w_T", &[])?;
    let mut cfg = SweepConfig::new(gen, xi, vec![2.0, 4.0, 8.0, 16.0]);
    cfg.steps = 64;
    cfg.paths = 5_000;
    cfg.basis.degree = 7;
    cfg.seed = 2024;
    let report = run_n_sweep(&cfg)?;

    for s in &report.per_n {
        println!(
            "{:<10} Y0 {:.4}  S^2 {:.4}  residual {:.4}  Picard max {}",
            s.label, s.y0_mean, s.sp_norm.value, s.residual.mean, s.picard.max_iterations
        );
    }
    println!("monotone in n: {}", report.monotone.passed);
    if let Some(c) = &report.cauchy {
        for row in &c.rows {
            println!("  d(Y^{}, Y^{}) = {:.5} ± {:.5}", row.n, row.n_next, row.sp_dist, row.sp_std_error);
        }
        println!("Cauchy: {} (last/first {:.3})", c.passed, c.sp_final_ratio);
    }
    println!("limit residual under f: {:.4} (passed {})", report.limit.residual.mean, report.limit.passed);
    Ok(())
}
