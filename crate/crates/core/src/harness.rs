//! The approximation sweep: solve the envelope BSDEs `f_n` for a schedule of
//! `n` and the dominating BSDE on one shared batch, then check ordering,
//! Cauchy behaviour and the residual of the proxy limit.

use std::sync::Arc;

use serde::Serialize;

use crate::brownian::{simulate_paths, BrownianBatch};
use crate::diagnostics::{
    apriori_i_of, apriori_ii_of, hp_norm, ordering_violations, residual_of, sp_norm, AprioriReport,
    DeltaReport, DriverTrace, NormEstimate, OrderingReport, ResidualReport,
};
use crate::error::{BsdeError, Result};
use crate::generators::{make_dominating_generator, GeneratorSpec, TerminalSpec};
use crate::grid::{make_grid, TimeGrid};
use crate::infconv::{ApproxFamily, SearchParams};
use crate::regression::RegressionBasis;
use crate::solver::{min_admissible_steps, solve_lipschitz_bsde, PicardConfig, PicardStats, SolutionEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub mono_tol: f64,
    pub stat_tol: f64,
    pub residual_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mono_tol: 1e-2,
            stat_tol: 1e-2,
            residual_tol: 5e-2,
        }
    }
}

pub const DEFAULT_FINAL_FRACTION: f64 = 0.25;

#[derive(Clone)]
pub struct SweepConfig {
    pub schedule: Vec<f64>,
    pub p: f64,
    pub generator: GeneratorSpec,
    pub terminal: TerminalSpec,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub basis: RegressionBasis,
    pub picard: PicardConfig,
    pub search: SearchParams,
    pub tolerances: Tolerances,
    /// Cauchy verdict: last distance must be at most this share of the first.
    pub final_fraction: f64,
    /// Constant the a priori ratios of the endpoint solutions are held to.
    pub constant: f64,
}

impl SweepConfig {
    /// Defaults around a given problem: `T = 1`, `N = 128`, `M = 2·10⁴`, `d = 1`.
    pub fn new(generator: GeneratorSpec, terminal: TerminalSpec, schedule: Vec<f64>) -> Self {
        SweepConfig {
            schedule,
            p: 2.0,
            generator,
            terminal,
            horizon: 1.0,
            steps: 128,
            paths: 20_000,
            dim: 1,
            seed: 0,
            basis: RegressionBasis::default(),
            picard: PicardConfig::default(),
            search: SearchParams::default(),
            tolerances: Tolerances::default(),
            final_fraction: DEFAULT_FINAL_FRACTION,
            constant: 64.0,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        make_grid(self.horizon, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(BsdeError::config("p", "p must exceed 1"));
        }
        if self.schedule.is_empty() {
            return Err(BsdeError::config("sweep.schedule", "schedule is empty"));
        }
        if self.schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BsdeError::config("sweep.schedule", "schedule strictly increasing"));
        }
        let k = self.generator.growth();
        if !(self.schedule[0] > k) {
            return Err(BsdeError::config(
                "sweep.schedule",
                format!("schedule entries must exceed K = {k}"),
            ));
        }
        if self.paths == 0 {
            return Err(BsdeError::config("M", "need at least one path"));
        }
        if !(self.final_fraction > 0.0 && self.final_fraction <= 1.0) {
            return Err(BsdeError::config("cauchy.final_fraction", "must lie in (0, 1]"));
        }
        self.basis.validate()?;
        self.picard.validate()?;
        self.search.validate()?;
        let grid = self.grid()?;
        if let Some(&n) = self.schedule.iter().find(|&&n| grid.dt() * n >= 1.0) {
            return Err(BsdeError::ScheduleContraction {
                n,
                steps: self.steps,
                min_steps: min_admissible_steps(self.horizon, n),
            });
        }
        Ok(())
    }

    /// Smallest `N` admitting every scheduled `n`.
    pub fn min_admissible_steps(&self) -> usize {
        let top = self.schedule.iter().cloned().fold(self.generator.growth(), f64::max);
        min_admissible_steps(self.horizon, top)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub label: String,
    /// `None` for the dominating solution.
    pub n: Option<f64>,
    pub y0_mean: f64,
    pub y0_spread: f64,
    pub sp_norm: NormEstimate,
    pub hp_norm: NormEstimate,
    pub picard: PicardStats,
    /// Residual under the solution's own generator.
    pub residual: ResidualReport,
    /// Largest envelope grid tolerance over a sample of visited nodes.
    pub envelope_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub n: f64,
    pub n_next: f64,
    pub sp_dist: NormEstimate,
    pub hp_dist: NormEstimate,
    pub delta: DeltaReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneRow {
    pub lower: String,
    pub upper: String,
    pub ordering: OrderingReport,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneVerdict {
    pub mono_tol: f64,
    pub stat_tol: f64,
    pub rows: Vec<MonotoneRow>,
    /// Index into `rows` of the comparison with the largest violation fraction.
    pub worst: Option<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyRow {
    pub n: f64,
    pub n_next: f64,
    pub sp_dist: f64,
    pub sp_std_error: f64,
    pub hp_dist: f64,
    pub hp_std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyVerdict {
    pub rows: Vec<CauchyRow>,
    pub final_fraction: f64,
    pub sp_non_increasing: bool,
    pub hp_non_increasing: bool,
    pub sp_final_ratio: f64,
    pub hp_final_ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitVerdict {
    pub n: f64,
    pub generator: String,
    pub residual: ResidualReport,
    pub residual_tol: f64,
    pub passed: bool,
}

#[derive(Clone, Serialize)]
pub struct ConvergenceReport {
    pub generator: String,
    pub terminal: String,
    pub p: f64,
    pub schedule: Vec<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub dim: usize,
    pub seed: u64,
    pub min_admissible_steps: usize,
    pub tolerances: Tolerances,
    pub per_n: Vec<SolveSummary>,
    pub pairs: Vec<PairSummary>,
    pub dominating: SolveSummary,
    pub monotone: MonotoneVerdict,
    /// Absent for schedules shorter than three entries.
    pub cauchy: Option<CauchyVerdict>,
    pub limit: LimitVerdict,
    /// A priori ratios of the first and last envelope solutions.
    pub apriori: Vec<AprioriReport>,
    #[serde(skip)]
    pub solutions: Vec<SolutionEstimate>,
    #[serde(skip)]
    pub dominating_solution: Option<SolutionEstimate>,
    #[serde(skip)]
    pub terminal_spec: Option<TerminalSpec>,
}

impl ConvergenceReport {
    pub fn batch(&self) -> Option<&Arc<BrownianBatch>> {
        self.solutions.first().map(|s| s.batch())
    }
}

fn summarize(
    label: String,
    n: Option<f64>,
    trace: &DriverTrace<'_>,
    terminal: &TerminalSpec,
    p: f64,
    envelope_tol: f64,
) -> Result<SolveSummary> {
    let sol = trace.solution();
    Ok(SolveSummary {
        label,
        n,
        y0_mean: sol.y0_mean(),
        y0_spread: sol.y0_spread(),
        sp_norm: sp_norm(sol, p)?,
        hp_norm: hp_norm(sol, p)?,
        picard: sol.picard().clone(),
        residual: residual_of(trace, terminal),
        envelope_tol,
    })
}

/// Envelope tolerance over roughly a thousand evenly spread `(m, i)` nodes.
fn envelope_budget(family: &ApproxFamily, sol: &SolutionEstimate) -> f64 {
    if family.is_fixed_point() {
        return 0.0;
    }
    let (steps, dim) = (sol.steps(), sol.dim());
    let total = sol.paths() * steps;
    let stride = (total / 1024).max(1);
    let batch = sol.batch();
    let mut worst = 0.0f64;
    for k in (0..total).step_by(stride) {
        let (m, i) = (k / steps, k % steps);
        let x = batch.path_value(m, i).unwrap_or_else(|_| vec![0.0; dim]);
        let e = family.envelope(sol.grid().time(i), &x, sol.y(m, i), sol.z(m, i));
        worst = worst.max(e.tol);
    }
    worst
}

pub fn run_n_sweep(cfg: &SweepConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let batch = Arc::new(simulate_paths(cfg.grid()?, cfg.dim, cfg.paths, cfg.seed)?);
    let base = &cfg.generator;

    let mut generators = Vec::with_capacity(cfg.schedule.len());
    let mut solutions = Vec::with_capacity(cfg.schedule.len());
    let mut budgets = Vec::with_capacity(cfg.schedule.len());
    for &n in &cfg.schedule {
        let family = ApproxFamily::new(base.clone(), n, cfg.dim, cfg.search)?;
        let gen = family.generator();
        let sol = solve_lipschitz_bsde(&gen, &cfg.terminal, &batch, &cfg.basis, &cfg.picard)?;
        budgets.push(envelope_budget(&family, &sol));
        generators.push(gen);
        solutions.push(sol);
    }
    let dom_gen = make_dominating_generator(base);
    let dominating = solve_lipschitz_bsde(&dom_gen, &cfg.terminal, &batch, &cfg.basis, &cfg.picard)?;

    let traces: Vec<DriverTrace<'_>> = solutions.iter().zip(&generators).map(|(s, g)| DriverTrace::new(s, g)).collect();
    let mut per_n = Vec::with_capacity(traces.len());
    for ((trace, &n), &budget) in traces.iter().zip(&cfg.schedule).zip(&budgets) {
        per_n.push(summarize(format!("n={n}"), Some(n), trace, &cfg.terminal, cfg.p, budget)?);
    }
    let dom_summary = summarize(
        "U".to_string(),
        None,
        &DriverTrace::new(&dominating, &dom_gen),
        &cfg.terminal,
        cfg.p,
        0.0,
    )?;

    let mut pairs = Vec::new();
    for (k, w) in traces.windows(2).enumerate() {
        let delta = apriori_ii_of(&w[0], &w[1], cfg.p, cfg.constant)?;
        pairs.push(PairSummary {
            n: cfg.schedule[k],
            n_next: cfg.schedule[k + 1],
            sp_dist: delta.sp_dist,
            hp_dist: delta.hp_dist,
            delta,
        });
    }

    let mut apriori = vec![apriori_i_of(&traces[0], cfg.p, cfg.constant)?];
    if traces.len() > 1 {
        apriori.push(apriori_i_of(&traces[traces.len() - 1], cfg.p, cfg.constant)?);
    }
    drop(traces);

    let mut report = ConvergenceReport {
        generator: base.name().to_string(),
        terminal: cfg.terminal.name().to_string(),
        p: cfg.p,
        schedule: cfg.schedule.clone(),
        horizon: cfg.horizon,
        steps: cfg.steps,
        paths: cfg.paths,
        dim: cfg.dim,
        seed: cfg.seed,
        min_admissible_steps: cfg.min_admissible_steps(),
        tolerances: cfg.tolerances,
        per_n,
        pairs,
        dominating: dom_summary,
        monotone: MonotoneVerdict {
            mono_tol: cfg.tolerances.mono_tol,
            stat_tol: cfg.tolerances.stat_tol,
            rows: Vec::new(),
            worst: None,
            passed: true,
        },
        cauchy: None,
        limit: LimitVerdict {
            n: 0.0,
            generator: String::new(),
            residual: empty_residual(),
            residual_tol: cfg.tolerances.residual_tol,
            passed: false,
        },
        apriori,
        solutions,
        dominating_solution: Some(dominating),
        terminal_spec: Some(cfg.terminal.clone()),
    };
    report.monotone = check_monotone(&report, cfg.tolerances.mono_tol, cfg.tolerances.stat_tol)?;
    if report.schedule.len() >= 3 {
        report.cauchy = Some(cauchy_table(&report, cfg.final_fraction)?);
    }
    report.limit = limit_residual(&report, base, cfg.tolerances.residual_tol)?;
    Ok(report)
}

fn empty_residual() -> ResidualReport {
    ResidualReport {
        generator: String::new(),
        mean: 0.0,
        std_error: 0.0,
        median: 0.0,
        q90: 0.0,
        q99: 0.0,
        max: 0.0,
        per_path: Vec::new(),
    }
}

fn require_solutions(report: &ConvergenceReport) -> Result<()> {
    if report.solutions.len() != report.schedule.len() {
        return Err(BsdeError::config(
            "report",
            "solutions are not attached; run the sweep in this process",
        ));
    }
    Ok(())
}

/// `Y^n <= Y^{n'}` for consecutive schedule entries and `Y^n <= U`.
pub fn check_monotone(report: &ConvergenceReport, mono_tol: f64, stat_tol: f64) -> Result<MonotoneVerdict> {
    require_solutions(report)?;
    let label = |k: usize| format!("n={}", report.schedule[k]);
    let mut rows = Vec::new();
    for k in 0..report.solutions.len().saturating_sub(1) {
        let ordering = ordering_violations(&report.solutions[k + 1], &report.solutions[k], mono_tol)?;
        rows.push(MonotoneRow {
            lower: label(k),
            upper: label(k + 1),
            passed: ordering.passes(stat_tol),
            ordering,
        });
    }
    if let Some(u) = &report.dominating_solution {
        for (k, sol) in report.solutions.iter().enumerate() {
            let ordering = ordering_violations(u, sol, mono_tol)?;
            rows.push(MonotoneRow {
                lower: label(k),
                upper: "U".to_string(),
                passed: ordering.passes(stat_tol),
                ordering,
            });
        }
    }
    let worst = (0..rows.len())
        .filter(|&k| rows[k].ordering.violations > 0)
        .max_by(|&a, &b| rows[a].ordering.fraction.total_cmp(&rows[b].ordering.fraction));
    Ok(MonotoneVerdict {
        mono_tol,
        stat_tol,
        passed: rows.iter().all(|r| r.passed),
        rows,
        worst,
    })
}

/// Consecutive distances non-increasing within two combined standard errors,
/// and the last at most `final_fraction` of the first.
pub fn cauchy_verdict(rows: Vec<CauchyRow>, final_fraction: f64) -> CauchyVerdict {
    let non_increasing = |d: &dyn Fn(&CauchyRow) -> (f64, f64)| {
        rows.windows(2).all(|w| {
            let ((a, sa), (b, sb)) = (d(&w[0]), d(&w[1]));
            b <= a + 2.0 * (sa * sa + sb * sb).sqrt()
        })
    };
    let final_ratio = |d: &dyn Fn(&CauchyRow) -> f64| match (rows.first(), rows.last()) {
        (Some(first), Some(last)) if d(first) > 0.0 => d(last) / d(first),
        (Some(_), Some(last)) if d(last) == 0.0 => 0.0,
        _ => f64::INFINITY,
    };
    let sp_non_increasing = non_increasing(&|r| (r.sp_dist, r.sp_std_error));
    let hp_non_increasing = non_increasing(&|r| (r.hp_dist, r.hp_std_error));
    let sp_final_ratio = final_ratio(&|r| r.sp_dist);
    let hp_final_ratio = final_ratio(&|r| r.hp_dist);
    CauchyVerdict {
        passed: sp_non_increasing
            && hp_non_increasing
            && sp_final_ratio <= final_fraction
            && hp_final_ratio <= final_fraction,
        rows,
        final_fraction,
        sp_non_increasing,
        hp_non_increasing,
        sp_final_ratio,
        hp_final_ratio,
    }
}

pub fn cauchy_table(report: &ConvergenceReport, final_fraction: f64) -> Result<CauchyVerdict> {
    if report.schedule.len() < 3 {
        return Err(BsdeError::config("sweep.schedule", "the Cauchy table needs at least 3 entries"));
    }
    let rows = report
        .pairs
        .iter()
        .map(|p| CauchyRow {
            n: p.n,
            n_next: p.n_next,
            sp_dist: p.sp_dist.value,
            sp_std_error: p.sp_dist.std_error,
            hp_dist: p.hp_dist.value,
            hp_std_error: p.hp_dist.std_error,
        })
        .collect();
    Ok(cauchy_verdict(rows, final_fraction))
}

/// Residual of the largest-`n` solution under `original` (not under `f_n`).
pub fn limit_residual(report: &ConvergenceReport, original: &GeneratorSpec, residual_tol: f64) -> Result<LimitVerdict> {
    require_solutions(report)?;
    let terminal = report
        .terminal_spec
        .as_ref()
        .ok_or_else(|| BsdeError::config("report", "terminal condition not attached"))?;
    let proxy = report.solutions.last().expect("validated schedule is non-empty");
    let residual = residual_of(&DriverTrace::new(proxy, original), terminal);
    Ok(LimitVerdict {
        n: *report.schedule.last().expect("non-empty"),
        generator: original.name().to_string(),
        passed: residual.mean <= residual_tol,
        residual,
        residual_tol,
    })
}
