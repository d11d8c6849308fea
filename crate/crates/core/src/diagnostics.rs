//! Monte Carlo estimators of `S^p`/`H^p` norms and distances, pathwise BSDE
//! residuals, and empirical checks of the a priori estimates.
//!
//! Running suprema are maxima over grid nodes and time integrals are
//! left-endpoint Riemann sums, matching the solver's discretization.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BsdeError, Result};
use crate::generators::{GeneratorSpec, TerminalSpec};
use crate::solver::SolutionEstimate;
use crate::stats::{batch_means, quantile, top_share, MeanEstimate, DEFAULT_BLOCKS};

/// Share of the p-th moment carried by the top 1% of paths above which an
/// estimate is flagged as tail dominated.
pub const TAIL_SHARE_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Delta-method error of `value` from the batch-means error of the p-th power.
    pub std_error: f64,
    pub p: f64,
    pub paths: usize,
    pub pth_moment: MeanEstimate,
    pub heavy_tail: bool,
}

impl NormEstimate {
    fn from_powers(powers: &[f64], p: f64) -> Self {
        let moment = batch_means(powers, DEFAULT_BLOCKS);
        let value = moment.mean.max(0.0).powf(1.0 / p);
        let std_error = if moment.mean > 0.0 {
            moment.std_error / (p * moment.mean.powf(1.0 - 1.0 / p))
        } else {
            0.0
        };
        NormEstimate {
            value,
            std_error,
            p,
            paths: powers.len(),
            pth_moment: moment,
            heavy_tail: top_share(powers, 0.01) > TAIL_SHARE_LIMIT,
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(BsdeError::config("p", "p must exceed 1"));
    }
    Ok(())
}

/// Both solutions must live on the same Brownian sample.
pub fn ensure_coupled(a: &SolutionEstimate, b: &SolutionEstimate) -> Result<()> {
    let (fa, fb) = (a.batch().fingerprint(), b.batch().fingerprint());
    if fa != fb {
        return Err(BsdeError::Coupling(format!("{fa:?} vs {fb:?}")));
    }
    Ok(())
}

fn sup_powers(paths: usize, p: f64, y: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    (0..paths)
        .map(|m| y(m).iter().fold(0.0f64, |acc, v| acc.max(v.abs())).powf(p))
        .collect()
}

fn quadratic_powers(sol: &SolutionEstimate, p: f64, z: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
    let dt = sol.grid().dt();
    (0..sol.paths())
        .map(|m| (z(m).iter().map(|v| v * v).sum::<f64>() * dt).powf(p / 2.0))
        .collect()
}

/// `(E max_i |Y_i|^p)^{1/p}`.
pub fn sp_norm(sol: &SolutionEstimate, p: f64) -> Result<NormEstimate> {
    check_p(p)?;
    let powers = sup_powers(sol.paths(), p, |m| sol.y_path(m).to_vec());
    Ok(NormEstimate::from_powers(&powers, p))
}

/// `(E (Σ_i |Z_i|² Δt)^{p/2})^{1/p}`.
pub fn hp_norm(sol: &SolutionEstimate, p: f64) -> Result<NormEstimate> {
    check_p(p)?;
    let powers = quadratic_powers(sol, p, |m| sol.z_path(m).to_vec());
    Ok(NormEstimate::from_powers(&powers, p))
}

pub fn sp_distance(a: &SolutionEstimate, b: &SolutionEstimate, p: f64) -> Result<NormEstimate> {
    check_p(p)?;
    ensure_coupled(a, b)?;
    let powers = sup_powers(a.paths(), p, |m| {
        a.y_path(m).iter().zip(b.y_path(m)).map(|(x, y)| x - y).collect()
    });
    Ok(NormEstimate::from_powers(&powers, p))
}

pub fn hp_distance(a: &SolutionEstimate, b: &SolutionEstimate, p: f64) -> Result<NormEstimate> {
    check_p(p)?;
    ensure_coupled(a, b)?;
    let powers = quadratic_powers(a, p, |m| {
        a.z_path(m).iter().zip(b.z_path(m)).map(|(x, y)| x - y).collect()
    });
    Ok(NormEstimate::from_powers(&powers, p))
}

/// A solution with its generator evaluated at every node,
/// `f(t_i, W_{t_i}, Y_i, Z_i)` for `i < N`.
///
/// Envelope generators are expensive, so diagnostics that need the driver
/// share one evaluation pass through this type.
pub struct DriverTrace<'a> {
    sol: &'a SolutionEstimate,
    generator: String,
    values: Vec<f64>,
}

impl<'a> DriverTrace<'a> {
    pub fn new(sol: &'a SolutionEstimate, gen: &GeneratorSpec) -> Self {
        let (steps, dim) = (sol.steps(), sol.dim());
        let levels = sol.batch().levels();
        let grid = *sol.grid();
        let stride = (steps + 1) * dim;
        let values = (0..sol.paths())
            .into_par_iter()
            .flat_map_iter(|m| {
                let levels = &levels;
                (0..steps).map(move |i| {
                    let x = &levels[m * stride + i * dim..m * stride + (i + 1) * dim];
                    gen.eval(grid.time(i), x, sol.y(m, i), sol.z(m, i))
                })
            })
            .collect();
        DriverTrace {
            sol,
            generator: gen.name().to_string(),
            values,
        }
    }

    pub fn solution(&self) -> &'a SolutionEstimate {
        self.sol
    }

    pub fn path(&self, m: usize) -> &[f64] {
        let n = self.sol.steps();
        &self.values[m * n..(m + 1) * n]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub generator: String,
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    #[serde(skip)]
    pub per_path: Vec<f64>,
}

/// `R[m] = max_i |Y_i - ξ - Σ_{j>=i} f_j Δt + Σ_{j>=i} Z_j·ΔW_j|`.
pub fn bsde_residual(sol: &SolutionEstimate, gen: &GeneratorSpec, terminal: &TerminalSpec) -> ResidualReport {
    residual_of(&DriverTrace::new(sol, gen), terminal)
}

pub fn residual_of(trace: &DriverTrace<'_>, terminal: &TerminalSpec) -> ResidualReport {
    let sol = trace.sol;
    let steps = sol.steps();
    let dt = sol.grid().dt();
    let batch = sol.batch();
    let xi = terminal.values(batch, &batch.levels());
    let per_path: Vec<f64> = (0..sol.paths())
        .into_par_iter()
        .map(|m| {
            let y = sol.y_path(m);
            let mut tail = 0.0;
            let mut worst = (y[steps] - xi[m]).abs();
            for i in (0..steps).rev() {
                let dw = batch.increment(m, i);
                let zdw: f64 = sol.z(m, i).iter().zip(dw).map(|(z, w)| z * w).sum();
                tail += trace.path(m)[i] * dt - zdw;
                worst = worst.max((y[i] - xi[m] - tail).abs());
            }
            worst
        })
        .collect();
    let est = batch_means(&per_path, DEFAULT_BLOCKS);
    ResidualReport {
        generator: trace.generator.clone(),
        mean: est.mean,
        std_error: est.std_error,
        median: quantile(&per_path, 0.5),
        q90: quantile(&per_path, 0.9),
        q99: quantile(&per_path, 0.99),
        max: per_path.iter().cloned().fold(0.0, f64::max),
        per_path,
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// Both displays of the single-solution a priori estimate, with the constant
/// left out: `ratio_y = ‖Y‖^p / E[|ξ|^p + ∫|Y|^{p-1}|f|]` and
/// `ratio_z = ‖Z‖^p / (E[|ξ|^p + (∫|Y||f|)^{p/2}] + ‖Y‖^p)`.
#[derive(Debug, Clone, Serialize)]
pub struct AprioriReport {
    pub p: f64,
    pub constant: f64,
    pub lhs_y: f64,
    pub rhs_y: f64,
    pub ratio_y: f64,
    pub lhs_z: f64,
    pub rhs_z: f64,
    pub ratio_z: f64,
    pub heavy_tail: bool,
    pub passed: bool,
}

pub fn check_apriori_i(sol: &SolutionEstimate, gen: &GeneratorSpec, p: f64, constant: f64) -> Result<AprioriReport> {
    apriori_i_of(&DriverTrace::new(sol, gen), p, constant)
}

pub fn apriori_i_of(trace: &DriverTrace<'_>, p: f64, constant: f64) -> Result<AprioriReport> {
    check_p(p)?;
    let sol = trace.sol;
    let (steps, paths) = (sol.steps(), sol.paths());
    let dt = sol.grid().dt();
    let sup = sup_powers(paths, p, |m| sol.y_path(m).to_vec());
    let quad = quadratic_powers(sol, p, |m| sol.z_path(m).to_vec());
    let mut xi_p = 0.0;
    let mut weighted = 0.0;
    let mut product = 0.0;
    for m in 0..paths {
        let y = sol.y_path(m);
        let f = trace.path(m);
        xi_p += y[steps].abs().powf(p);
        weighted += (0..steps).map(|i| y[i].abs().powf(p - 1.0) * f[i].abs()).sum::<f64>() * dt;
        product += ((0..steps).map(|i| y[i].abs() * f[i].abs()).sum::<f64>() * dt).powf(p / 2.0);
    }
    let n = paths as f64;
    let lhs_y = sup.iter().sum::<f64>() / n;
    let lhs_z = quad.iter().sum::<f64>() / n;
    let rhs_y = (xi_p + weighted) / n;
    let rhs_z = (xi_p + product) / n + lhs_y;
    let (ratio_y, ratio_z) = (ratio(lhs_y, rhs_y), ratio(lhs_z, rhs_z));
    Ok(AprioriReport {
        p,
        constant,
        lhs_y,
        rhs_y,
        ratio_y,
        lhs_z,
        rhs_z,
        ratio_z,
        heavy_tail: top_share(&sup, 0.01) > TAIL_SHARE_LIMIT || top_share(&quad, 0.01) > TAIL_SHARE_LIMIT,
        passed: ratio_y <= constant && ratio_z <= constant,
    })
}

/// Two-solution a priori estimate on coupled paths, with
/// `δf = f¹(t, Y¹, Z¹) - f²(t, Y², Z²)` evaluated pathwise.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub p: f64,
    pub constant: f64,
    pub sp_dist: NormEstimate,
    pub hp_dist: NormEstimate,
    /// `E|δY_T|^p`.
    pub delta_terminal_pth_moment: f64,
    /// `[E ∫|δY|^{p-1}|δf|, E (∫|δY||δf|)^{p/2}]`.
    pub generator_gap_terms: [f64; 2],
    /// Worst single-solution ratios of the two inputs.
    pub ratio_i_y: f64,
    pub ratio_i_z: f64,
    pub ratio_ii_y: f64,
    pub ratio_ii_z: f64,
    pub passed: bool,
}

pub fn check_apriori_ii(
    a: &SolutionEstimate,
    gen_a: &GeneratorSpec,
    b: &SolutionEstimate,
    gen_b: &GeneratorSpec,
    p: f64,
    constant: f64,
) -> Result<DeltaReport> {
    apriori_ii_of(&DriverTrace::new(a, gen_a), &DriverTrace::new(b, gen_b), p, constant)
}

pub fn apriori_ii_of(ta: &DriverTrace<'_>, tb: &DriverTrace<'_>, p: f64, constant: f64) -> Result<DeltaReport> {
    check_p(p)?;
    let (a, b) = (ta.sol, tb.sol);
    ensure_coupled(a, b)?;
    let (steps, paths) = (a.steps(), a.paths());
    let dt = a.grid().dt();
    let sp_dist = sp_distance(a, b, p)?;
    let hp_dist = hp_distance(a, b, p)?;

    let mut terminal = 0.0;
    let mut weighted = 0.0;
    let mut product = 0.0;
    for m in 0..paths {
        let (ya, yb) = (a.y_path(m), b.y_path(m));
        terminal += (ya[steps] - yb[steps]).abs().powf(p);
        let mut w = 0.0;
        let mut q = 0.0;
        for i in 0..steps {
            let dy = (ya[i] - yb[i]).abs();
            let df = (ta.path(m)[i] - tb.path(m)[i]).abs();
            w += dy.powf(p - 1.0) * df;
            q += dy * df;
        }
        weighted += w * dt;
        product += (q * dt).powf(p / 2.0);
    }
    let n = paths as f64;
    let (terminal, weighted, product) = (terminal / n, weighted / n, product / n);
    let lhs_y = sp_dist.pth_moment.mean;
    let lhs_z = hp_dist.pth_moment.mean;
    let ratio_ii_y = ratio(lhs_y, terminal + weighted);
    let ratio_ii_z = ratio(lhs_z, terminal + product + lhs_y);

    let ia = apriori_i_of(ta, p, constant)?;
    let ib = apriori_i_of(tb, p, constant)?;
    Ok(DeltaReport {
        p,
        constant,
        sp_dist,
        hp_dist,
        delta_terminal_pth_moment: terminal,
        generator_gap_terms: [weighted, product],
        ratio_i_y: ia.ratio_y.max(ib.ratio_y),
        ratio_i_z: ia.ratio_z.max(ib.ratio_z),
        ratio_ii_y,
        ratio_ii_z,
        passed: ratio_ii_y <= constant && ratio_ii_z <= constant,
    })
}

/// Ordering check `upper >= lower` on coupled paths.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub checked: usize,
    pub violations: usize,
    pub fraction: f64,
    pub tolerance: f64,
    /// Largest `lower - upper` and where it happened (path, node).
    pub worst_excess: f64,
    pub worst_at: Option<(usize, usize)>,
}

impl OrderingReport {
    pub fn passes(&self, max_fraction: f64) -> bool {
        self.fraction <= max_fraction
    }
}

/// Counts `(m, i)` with `lower[m][i] > upper[m][i] + tolerance`.
pub fn ordering_violations(upper: &SolutionEstimate, lower: &SolutionEstimate, tolerance: f64) -> Result<OrderingReport> {
    ensure_coupled(upper, lower)?;
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_at = None;
    for (k, (u, l)) in upper.y_values().iter().zip(lower.y_values()).enumerate() {
        let excess = l - u;
        if excess > worst_excess {
            worst_excess = excess;
            worst_at = Some((k / (upper.steps() + 1), k % (upper.steps() + 1)));
        }
        if excess > tolerance {
            violations += 1;
        }
    }
    let checked = upper.y_values().len();
    Ok(OrderingReport {
        checked,
        violations,
        fraction: violations as f64 / checked as f64,
        tolerance,
        worst_excess,
        worst_at,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::brownian::{simulate_paths, BrownianBatch};
    use crate::generators::{make_builtin_generator, make_terminal};
    use crate::grid::make_grid;

    fn hand_batch(paths: usize, steps: usize) -> Arc<BrownianBatch> {
        let grid = make_grid(1.0, steps).unwrap();
        Arc::new(BrownianBatch::from_increments(grid, 1, 0, vec![0.0; paths * steps]).unwrap())
    }

    /// `Y = W`, `Z = 1`: the exact discrete pair for `f = 0`, `ξ = W_T`.
    fn brownian_pair(batch: &Arc<BrownianBatch>) -> SolutionEstimate {
        let y = batch.levels();
        let z = vec![1.0; batch.paths() * batch.steps()];
        SolutionEstimate::from_parts(Arc::clone(batch), y, z, "exact").unwrap()
    }

    #[test]
    fn constant_process_norm() {
        let b = hand_batch(4, 3);
        let sol = SolutionEstimate::from_parts(b, vec![1.0; 16], vec![0.0; 12], "one").unwrap();
        for p in [1.5, 2.0, 5.0] {
            let n = sp_norm(&sol, p).unwrap();
            assert!((n.value - 1.0).abs() < 1e-15);
            assert_eq!(n.std_error, 0.0);
        }
    }

    #[test]
    fn three_hand_paths() {
        let b = hand_batch(3, 2);
        let y = vec![2.0, -1.0, 0.5, 0.0, 0.0, 0.0, -0.5, 1.0, 0.25];
        let sol = SolutionEstimate::from_parts(b, y, vec![0.0; 6], "hand").unwrap();
        let n = sp_norm(&sol, 2.0).unwrap();
        assert!((n.value - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((n.value - 1.2910).abs() < 1e-4);
    }

    #[test]
    fn doob_bracket_for_brownian_motion() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 64).unwrap(), 1, 100_000, 8).unwrap());
        let n = sp_norm(&brownian_pair(&b), 2.0).unwrap();
        let sq = n.value * n.value;
        assert!((1.0..=4.0).contains(&sq), "{sq}");
    }

    #[test]
    fn hp_norm_examples() {
        let b = hand_batch(5, 4);
        let sol = SolutionEstimate::from_parts(Arc::clone(&b), vec![0.0; 25], vec![0.7; 20], "c").unwrap();
        assert!((hp_norm(&sol, 3.0).unwrap().value - 0.7).abs() < 1e-15);
        let zero = SolutionEstimate::from_parts(Arc::clone(&b), vec![0.0; 25], vec![0.0; 20], "0").unwrap();
        assert_eq!(hp_norm(&zero, 2.0).unwrap().value, 0.0);

        let b2 = hand_batch(1, 2);
        let s = 2f64.sqrt();
        let alt = SolutionEstimate::from_parts(b2, vec![0.0; 3], vec![s, 0.0], "alt").unwrap();
        assert!((hp_norm(&alt, 2.0).unwrap().value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distances() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 8).unwrap(), 1, 100, 1).unwrap());
        let a = brownian_pair(&b);
        assert_eq!(sp_distance(&a, &a, 2.0).unwrap().value, 0.0);
        assert_eq!(hp_distance(&a, &a, 2.0).unwrap().value, 0.0);
        let shifted = a.map(|y| y + 1.0, |z| z);
        assert!((sp_distance(&a, &shifted, 3.0).unwrap().value - 1.0).abs() < 1e-12);

        let other = Arc::new(simulate_paths(make_grid(1.0, 8).unwrap(), 1, 100, 2).unwrap());
        let c = brownian_pair(&other);
        assert!(matches!(sp_distance(&a, &c, 2.0), Err(BsdeError::Coupling(_))));
        assert!(hp_distance(&a, &c, 2.0).is_err());
    }

    #[test]
    fn p_validation() {
        let b = hand_batch(2, 2);
        let sol = SolutionEstimate::from_parts(b, vec![0.0; 6], vec![0.0; 4], "0").unwrap();
        assert!(sp_norm(&sol, 1.0).is_err());
        assert!(hp_norm(&sol, 0.5).is_err());
    }

    #[test]
    fn exact_pair_has_zero_residual() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 32).unwrap(), 1, 1_000, 3).unwrap());
        let sol = brownian_pair(&b);
        let zero = make_builtin_generator("zero", &[]).unwrap();
        let xi = make_terminal("w_T", &[]).unwrap();
        let r = bsde_residual(&sol, &zero, &xi);
        assert!(r.max < 1e-12, "{}", r.max);
    }

    #[test]
    fn perturbed_node_shows_in_residual() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 16).unwrap(), 1, 50, 3).unwrap());
        let mut y = b.levels();
        let eps = 0.3;
        y[7 * 17 + 5] += eps;
        let sol = SolutionEstimate::from_parts(Arc::clone(&b), y, vec![1.0; 50 * 16], "bumped").unwrap();
        let r = bsde_residual(&sol, &make_builtin_generator("zero", &[]).unwrap(), &make_terminal("w_T", &[]).unwrap());
        assert!(r.per_path[7] >= eps - 1e-12);
        assert!(r.per_path[6] < 1e-12);
    }

    #[test]
    fn vacuous_apriori() {
        let b = hand_batch(10, 4);
        let sol = SolutionEstimate::from_parts(Arc::clone(&b), vec![0.0; 50], vec![0.0; 40], "0").unwrap();
        let zero = make_builtin_generator("zero", &[]).unwrap();
        let r = check_apriori_i(&sol, &zero, 2.0, 1.0).unwrap();
        assert!(r.passed);
        assert_eq!((r.lhs_y, r.rhs_y, r.ratio_y), (0.0, 0.0, 0.0));
        let d = check_apriori_ii(&sol, &zero, &sol, &zero, 3.0, 1.0).unwrap();
        assert!(d.passed);
        assert_eq!(d.sp_dist.value, 0.0);
        assert_eq!(d.generator_gap_terms, [0.0, 0.0]);
    }

    #[test]
    fn doob_ratio_for_martingale() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 64).unwrap(), 1, 50_000, 12).unwrap());
        let zero = make_builtin_generator("zero", &[]).unwrap();
        let r = check_apriori_i(&brownian_pair(&b), &zero, 2.0, 4.0).unwrap();
        assert!((1.0..=4.0).contains(&r.ratio_y), "{}", r.ratio_y);
        assert!(r.passed);
    }

    #[test]
    fn ordering_counts() {
        let b = Arc::new(simulate_paths(make_grid(1.0, 4).unwrap(), 1, 10, 1).unwrap());
        let a = brownian_pair(&b);
        let up = a.map(|y| y + 0.5, |z| z);
        let r = ordering_violations(&up, &a, 0.01).unwrap();
        assert_eq!(r.violations, 0);
        let r = ordering_violations(&a, &up, 0.01).unwrap();
        assert_eq!(r.violations, 50);
        assert!((r.worst_excess - 0.5).abs() < 1e-12);
    }
}
