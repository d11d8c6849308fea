//! Tabulate the Lipschitz envelopes of √|y| against the closed form min(√|y|, n|y|).

use bsde_lab::generators::make_builtin_generator;
use bsde_lab::infconv::{tabulate_envelope, ApproxFamily, SearchParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = make_builtin_generator("sqrt_y", &[])?;
    println!("{:>7} {:>8} {:>8} {:>8} {:>8}", "y", "f", "f_2", "f_8", "f_32");
    let tables = [2.0, 8.0, 32.0]
        .iter()
        .map(|&n| {
            let family = ApproxFamily::new(base.clone(), n, 1, SearchParams::default())?;
            Ok(tabulate_envelope(&family, 0.0, &[0.0], &[0.0], -1.0, 1.0, 21))
        })
        .collect::<Result<Vec<_>, bsde_lab::error::BsdeError>>()?;
    for ((a, b), c) in tables[0].iter().zip(&tables[1]).zip(&tables[2]) {
        println!("{:>7.2} {:>8.4} {:>8.4} {:>8.4} {:>8.4}", a.y, a.f, a.f_n, b.f_n, c.f_n);
    }
    let worst = [2.0, 8.0, 32.0]
        .iter()
        .zip(&tables)
        .flat_map(|(&n, t)| t.iter().map(move |r| (r.f_n - r.y.abs().sqrt().min(n * r.y.abs())).abs()))
        .fold(0.0, f64::max);
    println!("max deviation from closed form: {worst:.2e}");
    Ok(())
}
