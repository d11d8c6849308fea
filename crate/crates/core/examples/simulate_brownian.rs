//! Simulate a Brownian batch, check its moments and round-trip the binary dump.

use bsde_lab::brownian::{simulate_paths, BrownianBatch};
use bsde_lab::grid::make_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = make_grid(1.0, 50)?;
    let batch = simulate_paths(grid, 2, 20_000, 7)?;

    for k in 0..batch.dim() {
        let w_t: Vec<f64> = (0..batch.paths()).map(|m| batch.path_value(m, 50).unwrap()[k]).collect();
        let mean = w_t.iter().sum::<f64>() / w_t.len() as f64;
        let var = w_t.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (w_t.len() - 1) as f64;
        println!("component {k}: E[W_T] = {mean:+.4}, Var[W_T] = {var:.4} (expect 0, 1)");
    }

    let mut bytes = Vec::new();
    batch.write_to(&mut bytes)?;
    let back = BrownianBatch::read_from(bytes.as_slice())?;
    assert_eq!(back.fingerprint(), batch.fingerprint());
    println!("dump: {} bytes, fingerprint {:?}", bytes.len(), batch.fingerprint());
    Ok(())
}
