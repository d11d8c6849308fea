//! Backward least-squares Monte Carlo solver for Lipschitz BSDEs.
//!
//! On each step, from `i = N - 1` down to `0`:
//!
//! 1. regress `Y_{i+1}` on the basis at `W_{t_i}` to get `E_i[Y_{i+1}]`;
//! 2. regress `(Y_{i+1} - E_i[Y_{i+1}]) ΔW_i / Δt` coordinatewise to get `Z_i`;
//! 3. solve `y = E_i[Y_{i+1}] + Δt f(t_i, W_{t_i}, y, Z_i)` on every path by
//!    Picard iteration started at `E_i[Y_{i+1}]`.
//!
//! The single regression of step 1 is shared by every Picard iterate; the
//! generator term is evaluated pathwise.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianBatch;
use crate::error::{BsdeError, Result};
use crate::generators::{GeneratorSpec, TerminalSpec};
use crate::grid::TimeGrid;
use crate::regression::{Design, RegressionBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(BsdeError::config("picard.tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(BsdeError::config("picard.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Rejects `Δt L >= 1`, reporting the smallest admissible step count.
pub fn contraction_guard(grid: &TimeGrid, lipschitz: f64) -> Result<()> {
    let product = grid.dt() * lipschitz;
    if product >= 1.0 || !product.is_finite() {
        return Err(BsdeError::Contraction {
            lipschitz,
            product,
            min_steps: min_admissible_steps(grid.horizon(), lipschitz),
        });
    }
    Ok(())
}

/// Smallest `N` with `T L / N < 1`.
pub fn min_admissible_steps(horizon: f64, lipschitz: f64) -> usize {
    ((horizon * lipschitz).floor() as usize + 1).max(1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub max_iterations: usize,
    pub mean_iterations: f64,
    pub max_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PicardStats {
    /// Indexed by time step.
    pub steps: Vec<StepStats>,
    pub max_iterations: usize,
    pub mean_iterations: f64,
}

impl PicardStats {
    fn from_steps(steps: Vec<StepStats>) -> Self {
        let max_iterations = steps.iter().map(|s| s.max_iterations).max().unwrap_or(0);
        let mean_iterations = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|s| s.mean_iterations).sum::<f64>() / steps.len() as f64
        };
        PicardStats {
            steps,
            max_iterations,
            mean_iterations,
        }
    }
}

/// Discrete `(Y, Z)` on every path of a batch.
///
/// `Y` is stored path-major with `N + 1` nodes per path, `Z` path-major with
/// `N` steps of `d` coordinates.
#[derive(Debug, Clone)]
pub struct SolutionEstimate {
    batch: Arc<BrownianBatch>,
    y: Vec<f64>,
    z: Vec<f64>,
    generator: String,
    basis: Option<RegressionBasis>,
    picard: PicardStats,
}

impl SolutionEstimate {
    /// Wraps explicit arrays; no solving involved.
    pub fn from_parts(batch: Arc<BrownianBatch>, y: Vec<f64>, z: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let (m, n, d) = (batch.paths(), batch.steps(), batch.dim());
        if y.len() != m * (n + 1) {
            return Err(BsdeError::config("Y", format!("expected {} values", m * (n + 1))));
        }
        if z.len() != m * n * d {
            return Err(BsdeError::config("Z", format!("expected {} values", m * n * d)));
        }
        Ok(SolutionEstimate {
            batch,
            y,
            z,
            generator: label.into(),
            basis: None,
            picard: PicardStats::default(),
        })
    }

    pub fn batch(&self) -> &Arc<BrownianBatch> {
        &self.batch
    }

    pub fn grid(&self) -> &TimeGrid {
        self.batch.grid()
    }

    pub fn paths(&self) -> usize {
        self.batch.paths()
    }

    pub fn steps(&self) -> usize {
        self.batch.steps()
    }

    pub fn dim(&self) -> usize {
        self.batch.dim()
    }

    pub fn generator_name(&self) -> &str {
        &self.generator
    }

    pub fn basis(&self) -> Option<&RegressionBasis> {
        self.basis.as_ref()
    }

    pub fn picard(&self) -> &PicardStats {
        &self.picard
    }

    /// `Y[m][0..=N]`.
    pub fn y_path(&self, m: usize) -> &[f64] {
        let n = self.steps() + 1;
        &self.y[m * n..(m + 1) * n]
    }

    /// `Z[m][0..N]`, `d` coordinates per step.
    pub fn z_path(&self, m: usize) -> &[f64] {
        let stride = self.steps() * self.dim();
        &self.z[m * stride..(m + 1) * stride]
    }

    pub fn y(&self, m: usize, i: usize) -> f64 {
        self.y_path(m)[i]
    }

    pub fn z(&self, m: usize, i: usize) -> &[f64] {
        let d = self.dim();
        &self.z_path(m)[i * d..(i + 1) * d]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    /// Cross-path mean of `Y_0`.
    pub fn y0_mean(&self) -> f64 {
        (0..self.paths()).map(|m| self.y(m, 0)).sum::<f64>() / self.paths() as f64
    }

    /// `max_m Y[m][0] - min_m Y[m][0]`; zero in exact arithmetic.
    pub fn y0_spread(&self) -> f64 {
        let (lo, hi) = (0..self.paths())
            .map(|m| self.y(m, 0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// Same paths, `Y` and `Z` transformed entrywise.
    pub fn map(&self, fy: impl Fn(f64) -> f64, fz: impl Fn(f64) -> f64) -> Self {
        SolutionEstimate {
            y: self.y.iter().map(|&v| fy(v)).collect(),
            z: self.z.iter().map(|&v| fz(v)).collect(),
            ..self.clone()
        }
    }
}

/// Solves the BSDE for a generator carrying a Lipschitz constant.
pub fn solve_lipschitz_bsde(
    gen: &GeneratorSpec,
    terminal: &TerminalSpec,
    batch: &Arc<BrownianBatch>,
    basis: &RegressionBasis,
    picard: &PicardConfig,
) -> Result<SolutionEstimate> {
    let lipschitz = gen.lipschitz().ok_or_else(|| {
        BsdeError::config(
            "generator",
            format!("`{}` has no Lipschitz constant; solve its envelopes instead", gen.name()),
        )
    })?;
    solve_with_lipschitz(gen, lipschitz, terminal, batch, basis, picard)
}

/// Solves with an explicitly supplied Lipschitz bound (used by the guard only).
pub fn solve_with_lipschitz(
    gen: &GeneratorSpec,
    lipschitz: f64,
    terminal: &TerminalSpec,
    batch: &Arc<BrownianBatch>,
    basis: &RegressionBasis,
    picard: &PicardConfig,
) -> Result<SolutionEstimate> {
    basis.validate()?;
    picard.validate()?;
    let grid = *batch.grid();
    contraction_guard(&grid, lipschitz)?;

    let (paths, steps, dim) = (batch.paths(), batch.steps(), batch.dim());
    let dt = grid.dt();
    let levels = batch.levels();
    let node_stride = (steps + 1) * dim;
    let state = |m: usize, i: usize| &levels[m * node_stride + i * dim..m * node_stride + (i + 1) * dim];

    let mut y = vec![0.0; paths * (steps + 1)];
    let mut z = vec![0.0; paths * steps * dim];
    for (m, xi) in terminal.values(batch, &levels).into_iter().enumerate() {
        y[m * (steps + 1) + steps] = xi;
    }

    let mut stats = vec![StepStats::default(); steps];
    let mut states = vec![0.0; paths * dim];
    let mut next = vec![0.0; paths];
    let mut target = vec![0.0; paths];
    let mut z_step = vec![0.0; paths * dim];
    let mut pilot = vec![0.0; paths * dim];
    // Design and per-coordinate Z coefficients of the step just solved.
    let mut previous: Option<(Design, Vec<Vec<f64>>)> = None;

    for i in (0..steps).rev() {
        let t = grid.time(i);
        for m in 0..paths {
            states[m * dim..(m + 1) * dim].copy_from_slice(state(m, i));
            next[m] = y[m * (steps + 1) + i + 1];
        }
        let design = Design::new(&states, dim, basis)?;

        // Pilot Z at this step: the later step's Z fit evaluated at W_{t_i}.
        // It is F_{t_i}-measurable, so both control variates below have zero
        // conditional mean and only remove variance.
        match &previous {
            Some((prev, coefs)) => {
                for (k, c) in coefs.iter().enumerate() {
                    for (m, v) in prev.predict(c, &states).into_iter().enumerate() {
                        pilot[m * dim + k] = v;
                    }
                }
            }
            None => pilot.fill(0.0),
        }

        for m in 0..paths {
            let dw = batch.increment(m, i);
            let zp = &pilot[m * dim..(m + 1) * dim];
            target[m] = next[m] - zp.iter().zip(dw).map(|(z, w)| z * w).sum::<f64>();
        }
        let cont = design.fit(&target).fitted;

        let mut coefs = Vec::with_capacity(dim);
        for k in 0..dim {
            for m in 0..paths {
                let dw = batch.increment(m, i);
                let zp = &pilot[m * dim..(m + 1) * dim];
                let correction: f64 = (0..dim)
                    .map(|l| zp[l] * (dw[l] * dw[k] / dt - if l == k { 1.0 } else { 0.0 }))
                    .sum();
                target[m] = (next[m] - cont[m]) * dw[k] / dt - correction;
            }
            let fit = design.fit(&target);
            for m in 0..paths {
                z_step[m * dim + k] = fit.fitted[m];
            }
            coefs.push(fit.coefficients);
        }

        let solved: Vec<(f64, usize, f64)> = (0..paths)
            .into_par_iter()
            .map(|m| {
                let x = state(m, i);
                let zm = &z_step[m * dim..(m + 1) * dim];
                let c = cont[m];
                let mut yk = c;
                let mut change = f64::INFINITY;
                let mut iterations = 0;
                while iterations < picard.max_iter {
                    let updated = c + dt * gen.eval(t, x, yk, zm);
                    change = (updated - yk).abs();
                    yk = updated;
                    iterations += 1;
                    if change <= picard.tol {
                        break;
                    }
                }
                (yk, iterations, change)
            })
            .collect();

        let mut step = StepStats::default();
        let mut total_iter = 0usize;
        for (m, &(value, iterations, change)) in solved.iter().enumerate() {
            if !(change <= picard.tol) {
                return Err(BsdeError::Picard { step: i, path: m, change });
            }
            if !value.is_finite() {
                return Err(BsdeError::NonFinite { step: i });
            }
            y[m * (steps + 1) + i] = value;
            z[(m * steps + i) * dim..(m * steps + i + 1) * dim].copy_from_slice(&z_step[m * dim..(m + 1) * dim]);
            step.max_iterations = step.max_iterations.max(iterations);
            step.max_change = step.max_change.max(change);
            total_iter += iterations;
        }
        step.mean_iterations = total_iter as f64 / paths as f64;
        stats[i] = step;
        previous = Some((design, coefs));
    }

    Ok(SolutionEstimate {
        batch: Arc::clone(batch),
        y,
        z,
        generator: gen.name().to_string(),
        basis: Some(*basis),
        picard: PicardStats::from_steps(stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::simulate_paths;
    use crate::generators::{make_builtin_generator, make_terminal};
    use crate::grid::make_grid;

    fn batch(n: usize, m: usize, seed: u64) -> Arc<BrownianBatch> {
        Arc::new(simulate_paths(make_grid(1.0, n).unwrap(), 1, m, seed).unwrap())
    }

    #[test]
    fn guard_reports_minimal_steps() {
        let g = make_grid(1.0, 4).unwrap();
        match contraction_guard(&g, 4.0) {
            Err(BsdeError::Contraction { min_steps, .. }) => assert_eq!(min_steps, 5),
            other => panic!("{other:?}"),
        }
        assert!(contraction_guard(&g, 3.9).is_ok());
        assert_eq!(min_admissible_steps(1.0, 16.0), 17);
    }

    #[test]
    fn rejects_non_lipschitz() {
        let g = make_builtin_generator("sqrt_y", &[]).unwrap();
        let xi = make_terminal("w_T", &[]).unwrap();
        let b = batch(8, 100, 1);
        assert!(solve_lipschitz_bsde(&g, &xi, &b, &RegressionBasis::default(), &PicardConfig::default()).is_err());
    }

    #[test]
    fn terminal_layer_is_exact() {
        let g = make_builtin_generator("linear_y", &[0.5]).unwrap();
        let xi = make_terminal("abs_w_T", &[]).unwrap();
        let b = batch(8, 500, 2);
        let sol = solve_lipschitz_bsde(&g, &xi, &b, &RegressionBasis::default(), &PicardConfig::default()).unwrap();
        let levels = b.levels();
        for (m, v) in xi.values(&b, &levels).iter().enumerate() {
            assert_eq!(sol.y(m, 8).to_bits(), v.to_bits());
        }
    }

    #[test]
    fn constant_generator_adds_drift() {
        // Y_t = ξ-regression + c (T - t) with ξ ≡ 1
        let g = make_builtin_generator("constant", &[2.0]).unwrap();
        let xi = make_terminal("constant", &[1.0]).unwrap();
        let b = batch(10, 200, 3);
        let sol = solve_lipschitz_bsde(&g, &xi, &b, &RegressionBasis::default(), &PicardConfig::default()).unwrap();
        for i in 0..=10 {
            let expect = 1.0 + 2.0 * (1.0 - b.grid().time(i));
            assert!((sol.y(7, i) - expect).abs() < 1e-6, "i={i}");
        }
        assert!(sol.z_values().iter().all(|z| z.abs() < 1e-6));
        assert_eq!(sol.y0_spread(), 0.0);
    }

    #[test]
    fn zero_generator_martingale_property() {
        let g = make_builtin_generator("zero", &[]).unwrap();
        let xi = make_terminal("w_T", &[]).unwrap();
        let b = batch(16, 5_000, 4);
        let basis = RegressionBasis::default();
        let sol = solve_lipschitz_bsde(&g, &xi, &b, &basis, &PicardConfig::default()).unwrap();
        let levels = b.levels();
        for i in [0, 5, 15] {
            let states: Vec<f64> = (0..b.paths()).map(|m| levels[m * 17 + i]).collect();
            let next: Vec<f64> = (0..b.paths()).map(|m| sol.y(m, i + 1)).collect();
            let fit = crate::regression::condexp_regress(&next, &states, 1, &basis).unwrap();
            let rms = (0..b.paths()).map(|m| (fit.fitted[m] - sol.y(m, i)).powi(2)).sum::<f64>() / b.paths() as f64;
            assert!(rms.sqrt() < 0.01, "i={i} rms {}", rms.sqrt());
        }
    }

    #[test]
    fn picard_failure_names_step() {
        let g = make_builtin_generator("linear_y", &[0.5]).unwrap();
        let xi = make_terminal("w_T", &[]).unwrap();
        let b = batch(4, 50, 5);
        let picard = PicardConfig { tol: 1e-300, max_iter: 1 };
        match solve_lipschitz_bsde(&g, &xi, &b, &RegressionBasis::default(), &picard) {
            Err(BsdeError::Picard { step, .. }) => assert_eq!(step, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contraction_failure_is_numerical() {
        let g = make_builtin_generator("linear_y", &[8.0]).unwrap();
        let xi = make_terminal("w_T", &[]).unwrap();
        let b = batch(4, 50, 5);
        let err = solve_lipschitz_bsde(&g, &xi, &b, &RegressionBasis::default(), &PicardConfig::default()).unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("N = 9"), "{err}");
    }
}
