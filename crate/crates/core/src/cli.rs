//! Command-line front end: `simulate`, `solve`, `envelope`, `sweep` and
//! `check <mode>`, each writing its reports into `--out`.
//!
//! Every run writes `config.toml` (the effective configuration, seed
//! included) and `report.json`; table outputs are CSV with fixed columns:
//!
//! | file            | columns                                                              |
//! |-----------------|----------------------------------------------------------------------|
//! | `solution.csv`  | `m,i,t,Y,Z_1..Z_d`                                                   |
//! | `norms.csv`     | `label,p,sp_norm,sp_std_error,hp_norm,hp_std_error,heavy_tail`       |
//! | `residuals.csv` | `label,generator,mean,std_error,median,q90,q99,max`                  |
//! | `cauchy.csv`    | `n,n_next,sp_dist,sp_std_error,hp_dist,hp_std_error`                 |
//! | `monotone.csv`  | `lower,upper,checked,violations,fraction,worst_excess,worst_path,worst_step,passed` |
//! | `envelope.csv`  | `n,y,f,f_n,tol`                                                      |
//!
//! Exit status: 0 success or PASS, 1 check FAIL, 2 configuration error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::brownian::simulate_paths;
use crate::config::{key_help, parse_config, RunConfig};
use crate::diagnostics::{
    apriori_i_of, apriori_ii_of, hp_norm, ordering_violations, residual_of, sp_norm, DriverTrace, NormEstimate,
    OrderingReport, ResidualReport,
};
use crate::error::{BsdeError, Result};
use crate::generators::{BoxSampler, GeneratorSpec, TerminalSpec};
use crate::harness::{run_n_sweep, MonotoneRow};
use crate::infconv::{lemma31_suite, tabulate_envelope, ApproxFamily};
use crate::solver::{solve_lipschitz_bsde, SolutionEstimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const VERSION: &str = concat!("bsde-lab ", env!("CARGO_PKG_VERSION"));

#[derive(Parser, Debug)]
#[command(name = "bsde-lab", version, about = "Monte Carlo laboratory for L^p BSDE solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Configuration file of flat dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "bsde-out")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores); outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate Brownian paths and write them to paths.bin.
    Simulate(Common),
    /// Solve a Lipschitz BSDE and export the solution.
    Solve(Common),
    /// Tabulate inf-convolution envelopes of the generator.
    Envelope(Common),
    /// Run the envelope sweep with ordering, Cauchy and limit checks.
    Sweep(Common),
    /// Run one diagnostic check.
    Check {
        #[arg(value_enum)]
        mode: CheckMode,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CheckMode {
    AprioriI,
    AprioriIi,
    Comparison,
    Lemma31,
    Residual,
}

impl CheckMode {
    fn name(self) -> &'static str {
        match self {
            CheckMode::AprioriI => "apriori-i",
            CheckMode::AprioriIi => "apriori-ii",
            CheckMode::Comparison => "comparison",
            CheckMode::Lemma31 => "lemma31",
            CheckMode::Residual => "residual",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().after_help(key_help()).try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    let (name, mode, common) = match cli.command {
        Command::Simulate(c) => ("simulate", None, c),
        Command::Solve(c) => ("solve", None, c),
        Command::Envelope(c) => ("envelope", None, c),
        Command::Sweep(c) => ("sweep", None, c),
        Command::Check { mode, common } => ("check", Some(mode), common),
    };
    match execute(name, mode, &common) {
        Ok(Some(false)) => {
            eprintln!("{name}: FAIL (see {})", common.out.join("report.json").display());
            EXIT_FAIL
        }
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

fn execute(name: &str, mode: Option<CheckMode>, common: &Common) -> Result<Option<bool>> {
    let mut cfg = parse_config(common.config.as_deref(), &common.set)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let job = || dispatch(name, mode, &cfg, &common.out);
    match common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BsdeError::config("--threads", e.to_string()))?
            .install(job),
        None => job(),
    }
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    /// `None` for commands without a verdict.
    passed: Option<bool>,
    report: R,
}

struct Output<'a> {
    dir: &'a Path,
    command: String,
    seed: u64,
}

impl Output<'_> {
    fn report<R: Serialize>(&self, passed: Option<bool>, report: R) -> Result<Option<bool>> {
        let doc = Envelope {
            tool: "bsde-lab",
            version: VERSION,
            command: &self.command,
            seed: self.seed,
            passed,
            report,
        };
        fs::write(self.dir.join("report.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(passed)
    }

    fn csv<S: Serialize>(&self, file: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(file)).map_err(csv_error)?;
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> BsdeError {
    BsdeError::Io(std::io::Error::other(e))
}

fn dispatch(name: &str, mode: Option<CheckMode>, cfg: &RunConfig, dir: &Path) -> Result<Option<bool>> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.effective_toml())?;
    let out = Output {
        dir,
        command: match mode {
            Some(m) => format!("check {}", m.name()),
            None => name.to_string(),
        },
        seed: cfg.seed,
    };
    match (name, mode) {
        ("simulate", _) => simulate(cfg, &out),
        ("solve", _) => solve(cfg, &out),
        ("envelope", _) => envelope(cfg, &out),
        ("sweep", _) => sweep(cfg, &out),
        (_, Some(CheckMode::AprioriI)) => apriori_i(cfg, &out),
        (_, Some(CheckMode::AprioriIi)) => apriori_ii(cfg, &out),
        (_, Some(CheckMode::Comparison)) => comparison(cfg, &out),
        (_, Some(CheckMode::Lemma31)) => lemma31(cfg, &out),
        (_, Some(CheckMode::Residual)) => residual(cfg, &out),
        _ => unreachable!("clap only yields known commands"),
    }
}

#[derive(Serialize)]
struct NormRow<'a> {
    label: &'a str,
    p: f64,
    sp_norm: f64,
    sp_std_error: f64,
    hp_norm: f64,
    hp_std_error: f64,
    heavy_tail: bool,
}

impl<'a> NormRow<'a> {
    fn new(label: &'a str, sp: &NormEstimate, hp: &NormEstimate) -> Self {
        NormRow {
            label,
            p: sp.p,
            sp_norm: sp.value,
            sp_std_error: sp.std_error,
            hp_norm: hp.value,
            hp_std_error: hp.std_error,
            heavy_tail: sp.heavy_tail || hp.heavy_tail,
        }
    }
}

#[derive(Serialize)]
struct ResidualRow<'a> {
    label: &'a str,
    generator: &'a str,
    mean: f64,
    std_error: f64,
    median: f64,
    q90: f64,
    q99: f64,
    max: f64,
}

impl<'a> ResidualRow<'a> {
    fn new(label: &'a str, r: &'a ResidualReport) -> Self {
        ResidualRow {
            label,
            generator: &r.generator,
            mean: r.mean,
            std_error: r.std_error,
            median: r.median,
            q90: r.q90,
            q99: r.q99,
            max: r.max,
        }
    }
}

#[derive(Serialize)]
struct MonotoneCsvRow<'a> {
    lower: &'a str,
    upper: &'a str,
    checked: usize,
    violations: usize,
    fraction: f64,
    worst_excess: f64,
    worst_path: Option<usize>,
    worst_step: Option<usize>,
    passed: bool,
}

impl<'a> MonotoneCsvRow<'a> {
    fn new(lower: &'a str, upper: &'a str, o: &OrderingReport, passed: bool) -> Self {
        MonotoneCsvRow {
            lower,
            upper,
            checked: o.checked,
            violations: o.violations,
            fraction: o.fraction,
            worst_excess: o.worst_excess,
            worst_path: o.worst_at.map(|w| w.0),
            worst_step: o.worst_at.map(|w| w.1),
            passed,
        }
    }
}

fn solve_problem(
    cfg: &RunConfig,
    gen: &GeneratorSpec,
    terminal: &TerminalSpec,
    batch: &Arc<crate::brownian::BrownianBatch>,
) -> Result<SolutionEstimate> {
    solve_lipschitz_bsde(gen, terminal, batch, &cfg.basis, &cfg.picard)
}

fn shared_batch(cfg: &RunConfig) -> Result<Arc<crate::brownian::BrownianBatch>> {
    Ok(Arc::new(simulate_paths(cfg.grid()?, cfg.dim, cfg.paths, cfg.seed)?))
}

fn simulate(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let batch = simulate_paths(cfg.grid()?, cfg.dim, cfg.paths, cfg.seed)?;
    let file = fs::File::create(out.dir.join("paths.bin"))?;
    batch.write_to(std::io::BufWriter::new(file))?;
    let levels = batch.levels();
    let stride = (cfg.steps + 1) * cfg.dim;
    let (mut mean, mut second) = (vec![0.0; cfg.dim], vec![0.0; cfg.dim]);
    for m in 0..cfg.paths {
        let w = &levels[m * stride + cfg.steps * cfg.dim..(m + 1) * stride];
        for k in 0..cfg.dim {
            mean[k] += w[k] / cfg.paths as f64;
            second[k] += w[k] * w[k] / cfg.paths as f64;
        }
    }
    #[derive(Serialize)]
    struct Report {
        horizon: f64,
        steps: usize,
        paths: usize,
        dim: usize,
        file: &'static str,
        terminal_mean: Vec<f64>,
        terminal_second_moment: Vec<f64>,
    }
    out.report(
        None,
        Report {
            horizon: cfg.horizon,
            steps: cfg.steps,
            paths: cfg.paths,
            dim: cfg.dim,
            file: "paths.bin",
            terminal_mean: mean,
            terminal_second_moment: second,
        },
    )
}

fn write_solution_csv(out: &Output<'_>, sol: &SolutionEstimate, paths: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(out.dir.join("solution.csv")).map_err(csv_error)?;
    let mut header = vec!["m".to_string(), "i".into(), "t".into(), "Y".into()];
    header.extend((1..=sol.dim()).map(|k| format!("Z_{k}")));
    w.write_record(&header).map_err(csv_error)?;
    for m in 0..paths.min(sol.paths()) {
        for i in 0..=sol.steps() {
            let mut rec = vec![m.to_string(), i.to_string(), sol.grid().time(i).to_string(), sol.y(m, i).to_string()];
            if i < sol.steps() {
                rec.extend(sol.z(m, i).iter().map(f64::to_string));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), sol.dim()));
            }
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn solve(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let (gen, terminal) = (cfg.make_generator()?, cfg.make_terminal()?);
    let batch = shared_batch(cfg)?;
    let sol = solve_problem(cfg, &gen, &terminal, &batch)?;
    let trace = DriverTrace::new(&sol, &gen);
    let residual = residual_of(&trace, &terminal);
    let (sp, hp) = (sp_norm(&sol, cfg.p)?, hp_norm(&sol, cfg.p)?);
    write_solution_csv(out, &sol, cfg.solution_paths)?;
    out.csv("norms.csv", &[NormRow::new("solution", &sp, &hp)])?;
    out.csv("residuals.csv", &[ResidualRow::new("solution", &residual)])?;
    #[derive(Serialize)]
    struct Report<'a> {
        generator: &'a str,
        terminal: &'a str,
        y0_mean: f64,
        y0_spread: f64,
        picard: &'a crate::solver::PicardStats,
        sp_norm: NormEstimate,
        hp_norm: NormEstimate,
        residual: &'a ResidualReport,
    }
    out.report(
        None,
        Report {
            generator: gen.name(),
            terminal: terminal.name(),
            y0_mean: sol.y0_mean(),
            y0_spread: sol.y0_spread(),
            picard: sol.picard(),
            sp_norm: sp,
            hp_norm: hp,
            residual: &residual,
        },
    )
}

fn envelope(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let gen = cfg.make_generator()?;
    let e = &cfg.envelope;
    #[derive(Serialize)]
    struct CsvRow {
        n: f64,
        y: f64,
        f: f64,
        f_n: f64,
        tol: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        n: f64,
        fixed_point: bool,
        max_gap: f64,
        max_tol: f64,
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n in &e.n {
        let family = ApproxFamily::new(gen.clone(), n, cfg.dim, cfg.search)?;
        let table = tabulate_envelope(&family, e.t, &e.state, &e.z, e.y_min, e.y_max, e.points);
        summary.push(Summary {
            n,
            fixed_point: family.is_fixed_point(),
            max_gap: table.iter().map(|r| r.f - r.f_n).fold(0.0, f64::max),
            max_tol: table.iter().map(|r| r.tol).fold(0.0, f64::max),
        });
        rows.extend(table.into_iter().map(|r| CsvRow {
            n,
            y: r.y,
            f: r.f,
            f_n: r.f_n,
            tol: r.tol,
        }));
    }
    out.csv("envelope.csv", &rows)?;
    #[derive(Serialize)]
    struct Report<'a> {
        generator: &'a str,
        t: f64,
        state: &'a [f64],
        z: &'a [f64],
        envelopes: Vec<Summary>,
    }
    out.report(
        None,
        Report {
            generator: gen.name(),
            t: e.t,
            state: &e.state,
            z: &e.z,
            envelopes: summary,
        },
    )
}

fn sweep(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let report = run_n_sweep(&cfg.sweep_config()?)?;
    if let Some(c) = &report.cauchy {
        out.csv("cauchy.csv", &c.rows)?;
    }
    let monotone: Vec<_> = report
        .monotone
        .rows
        .iter()
        .map(|r: &MonotoneRow| MonotoneCsvRow::new(&r.lower, &r.upper, &r.ordering, r.passed))
        .collect();
    out.csv("monotone.csv", &monotone)?;
    let mut norms: Vec<_> = report
        .per_n
        .iter()
        .map(|s| NormRow::new(&s.label, &s.sp_norm, &s.hp_norm))
        .collect();
    norms.push(NormRow::new("U", &report.dominating.sp_norm, &report.dominating.hp_norm));
    out.csv("norms.csv", &norms)?;
    let mut residuals: Vec<_> = report.per_n.iter().map(|s| ResidualRow::new(&s.label, &s.residual)).collect();
    residuals.push(ResidualRow::new("U", &report.dominating.residual));
    residuals.push(ResidualRow::new("limit", &report.limit.residual));
    out.csv("residuals.csv", &residuals)?;
    let passed = report.monotone.passed && report.cauchy.as_ref().is_none_or(|c| c.passed) && report.limit.passed;
    out.report(Some(passed), &report)
}

fn apriori_i(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let (gen, terminal) = (cfg.make_generator()?, cfg.make_terminal()?);
    let batch = shared_batch(cfg)?;
    let sol = solve_problem(cfg, &gen, &terminal, &batch)?;
    let report = apriori_i_of(&DriverTrace::new(&sol, &gen), cfg.p, cfg.constant)?;
    out.csv(
        "norms.csv",
        &[NormRow::new("solution", &sp_norm(&sol, cfg.p)?, &hp_norm(&sol, cfg.p)?)],
    )?;
    out.report(Some(report.passed), &report)
}

fn solve_pair(cfg: &RunConfig) -> Result<(GeneratorSpec, SolutionEstimate, GeneratorSpec, SolutionEstimate)> {
    let batch = shared_batch(cfg)?;
    let (ga, ta) = (cfg.make_generator()?, cfg.make_terminal()?);
    let (gb, tb) = (cfg.make_compare_generator()?, cfg.make_compare_terminal()?);
    let a = solve_problem(cfg, &ga, &ta, &batch)?;
    let b = solve_problem(cfg, &gb, &tb, &batch)?;
    Ok((ga, a, gb, b))
}

fn apriori_ii(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let (ga, a, gb, b) = solve_pair(cfg)?;
    let report = apriori_ii_of(&DriverTrace::new(&a, &ga), &DriverTrace::new(&b, &gb), cfg.p, cfg.constant)?;
    out.csv(
        "norms.csv",
        &[
            NormRow::new("first", &sp_norm(&a, cfg.p)?, &hp_norm(&a, cfg.p)?),
            NormRow::new("second", &sp_norm(&b, cfg.p)?, &hp_norm(&b, cfg.p)?),
            NormRow::new("difference", &report.sp_dist, &report.hp_dist),
        ],
    )?;
    out.report(Some(report.passed), &report)
}

fn comparison(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let (ga, upper, gb, lower) = solve_pair(cfg)?;
    let ordering = ordering_violations(&upper, &lower, cfg.tolerances.mono_tol)?;
    let passed = ordering.passes(cfg.tolerances.stat_tol);
    out.csv(
        "monotone.csv",
        &[MonotoneCsvRow::new(gb.name(), ga.name(), &ordering, passed)],
    )?;
    #[derive(Serialize)]
    struct Report<'a> {
        upper: &'a str,
        lower: &'a str,
        stat_tol: f64,
        ordering: &'a OrderingReport,
    }
    out.report(
        Some(passed),
        Report {
            upper: ga.name(),
            lower: gb.name(),
            stat_tol: cfg.tolerances.stat_tol,
            ordering: &ordering,
        },
    )
}

fn lemma31(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let gen = cfg.make_generator()?;
    let l = &cfg.lemma31;
    let mut sampler = BoxSampler::new(cfg.seed, cfg.horizon, cfg.dim, l.radius);
    let report = lemma31_suite(&gen, cfg.dim, &l.indices, l.samples, &mut sampler, cfg.search)?;
    out.report(Some(report.passed()), &report)
}

fn residual(cfg: &RunConfig, out: &Output<'_>) -> Result<Option<bool>> {
    let (gen, terminal) = (cfg.make_generator()?, cfg.make_terminal()?);
    let batch = shared_batch(cfg)?;
    let sol = solve_problem(cfg, &gen, &terminal, &batch)?;
    let report = residual_of(&DriverTrace::new(&sol, &gen), &terminal);
    out.csv("residuals.csv", &[ResidualRow::new("solution", &report)])?;
    let passed = report.mean <= cfg.tolerances.residual_tol;
    #[derive(Serialize)]
    struct Report<'a> {
        residual_tol: f64,
        residual: &'a ResidualReport,
    }
    out.report(
        Some(passed),
        Report {
            residual_tol: cfg.tolerances.residual_tol,
            residual: &report,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn check_modes_parse() {
        let cli = Cli::try_parse_from(["bsde-lab", "check", "apriori-ii", "--set", "N=4", "--set", "M=10"]).unwrap();
        match cli.command {
            Command::Check { mode, common } => {
                assert_eq!(mode, CheckMode::AprioriIi);
                assert_eq!(common.set.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_usage_is_a_config_error() {
        assert_eq!(run(["bsde-lab", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["bsde-lab", "check", "nope"]), EXIT_CONFIG);
    }
}
