//! Run the envelope property suite (growth, monotonicity in n, Lipschitz
//! continuity, pointwise convergence) on the non-Lipschitz builtins.

use bsde_lab::generators::{make_builtin_generator, BoxSampler};
use bsde_lab::infconv::{lemma31_suite, SearchParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for name in ["sqrt_y", "sqrt_z", "lsm_example"] {
        let base = make_builtin_generator(name, &[])?;
        let mut sampler = BoxSampler::new(3, 1.0, 1, 3.0);
        let report = lemma31_suite(&base, 1, &[2.0, 4.0, 8.0], 2_000, &mut sampler, SearchParams::default())?;
        println!(
            "{name}: growth {}/{}, monotone {}/{}, lipschitz {}/{} violations; passed = {}",
            report.growth.violations,
            report.growth.checks,
            report.monotone.violations,
            report.monotone.checks,
            report.lipschitz.violations,
            report.lipschitz.checks,
            report.passed()
        );
        for row in &report.convergence {
            println!("  n = {:>6}  delta = {:.4}  max gap = {:.4}", row.n, row.delta, row.max_gap);
        }
    }
    Ok(())
}
