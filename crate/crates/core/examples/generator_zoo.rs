//! The builtin generators with their growth data, checked on random points.

use bsde_lab::generators::{make_builtin_generator, sampled_lipschitz_ratio, verify_linear_growth, BoxSampler};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let zoo: [(&str, &[f64]); 8] = [
        ("zero", &[]),
        ("constant", &[1.5]),
        ("linear_y", &[0.5]),
        ("linear_z", &[-0.75]),
        ("affine", &[0.5, -0.25, 1.0]),
        ("sqrt_y", &[]),
        ("sqrt_z", &[]),
        ("lsm_example", &[]),
    ];
    println!("{:<12} {:>5} {:>10} {:>10} {:>12}", "name", "K", "L", "L sampled", "growth ok");
    for (name, params) in zoo {
        let spec = make_builtin_generator(name, params)?;
        let growth = verify_linear_growth(&spec, &mut BoxSampler::new(1, 1.0, 1, 3.0), 5_000);
        let ratio = sampled_lipschitz_ratio(&spec, &mut BoxSampler::new(2, 1.0, 1, 3.0), 5_000);
        let l = spec.lipschitz().map_or("-".to_string(), |l| format!("{l:.3}"));
        println!("{:<12} {:>5.2} {:>10} {:>10.3} {:>12}", name, spec.growth(), l, ratio, growth.passed());
    }
    Ok(())
}
