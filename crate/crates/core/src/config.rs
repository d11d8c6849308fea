//! Run configuration: one TOML file of flat dotted keys plus `key=value`
//! overrides. Every key has a documented default; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use toml::Value;

use crate::error::{BsdeError, Result};
use crate::generators::{make_builtin_generator, make_terminal, GeneratorSpec, TerminalSpec};
use crate::grid::{make_grid, TimeGrid};
use crate::harness::{SweepConfig, Tolerances};
use crate::infconv::SearchParams;
use crate::regression::{BasisKind, RegressionBasis};
use crate::solver::PicardConfig;

/// `(key, default, description)`.
const KEYS: &[(&str, &str, &str)] = &[
    ("T", "1.0", "time horizon"),
    ("N", "64", "number of time steps"),
    ("M", "10000", "number of Monte Carlo paths"),
    ("d", "1", "Brownian dimension"),
    ("p", "2.0", "integrability exponent (> 1)"),
    ("seed", "0", "RNG seed"),
    ("generator.name", "\"zero\"", "builtin generator"),
    ("generator.params", "[]", "generator parameters"),
    ("terminal.name", "\"w_T\"", "builtin terminal condition"),
    ("terminal.params", "[]", "terminal parameters"),
    ("basis.kind", "\"polynomial\"", "regression basis family"),
    ("basis.degree", "3", "total polynomial degree (<= 10)"),
    ("basis.ridge", "1e-8", "ridge added to the Gram diagonal"),
    ("basis.standardize", "true", "standardize states before fitting"),
    ("picard.tol", "1e-10", "Picard stopping tolerance"),
    ("picard.max_iter", "200", "Picard iteration cap"),
    ("search.points", "33", "envelope grid points per axis (odd)"),
    ("search.levels", "4", "envelope refinement levels"),
    ("sweep.schedule", "[2.0, 4.0, 8.0, 16.0]", "envelope indices n, strictly increasing"),
    ("tolerances.mono", "1e-2", "ordering slack"),
    ("tolerances.stat", "1e-2", "admissible violation fraction"),
    ("tolerances.residual", "5e-2", "admissible mean residual"),
    ("cauchy.final_fraction", "0.25", "last/first distance bound"),
    ("check.C", "64.0", "constant for the a priori checks"),
    ("compare.generator.name", "\"zero\"", "second generator (apriori-ii, comparison)"),
    ("compare.generator.params", "[]", "second generator parameters"),
    ("compare.terminal.name", "\"w_T\"", "second terminal condition"),
    ("compare.terminal.params", "[]", "second terminal parameters"),
    ("lemma31.indices", "[2.0, 4.0, 8.0]", "envelope indices for the property suite"),
    ("lemma31.samples", "10000", "sample points for the property suite"),
    ("lemma31.radius", "3.0", "sampling box half-width for y and z"),
    ("envelope.n", "[2.0, 4.0, 8.0]", "envelope indices to tabulate"),
    ("envelope.y_min", "-2.0", "table range start"),
    ("envelope.y_max", "2.0", "table range end"),
    ("envelope.points", "400", "table size"),
    ("envelope.t", "0.0", "time of the table"),
    ("envelope.state", "[]", "state W_t of the table (empty: zeros)"),
    ("envelope.z", "[]", "z of the table (empty: zeros)"),
    ("output.solution_paths", "100", "paths exported to solution.csv"),
];

/// `--help` text listing every key with its default.
pub fn key_help() -> String {
    let mut out = String::from("Configuration keys (flat, dotted; defaults in brackets):\n");
    for (key, default, doc) in KEYS {
        let _ = writeln!(out, "  {key:<26} {doc} [{default}]");
    }
    out
}

fn parse_value(key: &str, text: &str) -> Result<Value> {
    let doc: toml::Table = format!("v = {text}")
        .parse()
        .map_err(|e| BsdeError::Parse(format!("default for `{key}`: {e}")))?;
    Ok(doc["v"].clone())
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn check_known(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _, _)| *k == key) {
        Ok(())
    } else {
        Err(BsdeError::Unknown {
            kind: "configuration key",
            name: key.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma31Options {
    pub indices: Vec<f64>,
    pub samples: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeOptions {
    pub n: Vec<f64>,
    pub y_min: f64,
    pub y_max: f64,
    pub points: usize,
    pub t: f64,
    pub state: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, Value>,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub dim: usize,
    pub p: f64,
    pub seed: u64,
    pub generator: (String, Vec<f64>),
    pub terminal: (String, Vec<f64>),
    pub compare_generator: (String, Vec<f64>),
    pub compare_terminal: (String, Vec<f64>),
    pub basis: RegressionBasis,
    pub picard: PicardConfig,
    pub search: SearchParams,
    pub schedule: Vec<f64>,
    pub tolerances: Tolerances,
    pub final_fraction: f64,
    pub constant: f64,
    pub lemma31: Lemma31Options,
    pub envelope: EnvelopeOptions,
    pub solution_paths: usize,
}

/// Typed access to the merged key/value map.
struct Reader<'a>(&'a BTreeMap<String, Value>);

impl Reader<'_> {
    fn get(&self, key: &str) -> &Value {
        &self.0[key]
    }

    fn float(&self, key: &str) -> Result<f64> {
        match self.get(key) {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(BsdeError::config(key, "expected a number")),
        }
    }

    fn int(&self, key: &str) -> Result<i64> {
        match self.get(key) {
            Value::Integer(i) => Ok(*i),
            _ => Err(BsdeError::config(key, "expected an integer")),
        }
    }

    fn count(&self, key: &str, min: i64) -> Result<usize> {
        let v = self.int(key)?;
        if v < min {
            return Err(BsdeError::config(key, format!("must be at least {min}")));
        }
        Ok(v as usize)
    }

    fn string(&self, key: &str) -> Result<String> {
        match self.get(key) {
            Value::String(s) => Ok(s.clone()),
            _ => Err(BsdeError::config(key, "expected a string")),
        }
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        self.get(key)
            .as_bool()
            .ok_or_else(|| BsdeError::config(key, "expected true or false"))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let err = || BsdeError::config(key, "expected an array of numbers");
        let arr = self.get(key).as_array().ok_or_else(err)?;
        arr.iter()
            .map(|v| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(err()),
            })
            .collect()
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.float(key)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(BsdeError::config(key, "must be positive"));
        }
        Ok(v)
    }
}

fn strictly_increasing(key: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(BsdeError::config(key, "must not be empty"));
    }
    if v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(BsdeError::config(key, "schedule strictly increasing"));
    }
    Ok(())
}

/// Reads `path` (if any), applies `overrides` of the form `key=value`, and
/// validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| BsdeError::config("--config", format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    RunConfig::from_toml(&text, overrides)
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (key, default, _) in KEYS {
            values.insert(key.to_string(), parse_value(key, default)?);
        }
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| BsdeError::Parse(e.to_string()))?;
        let mut given = BTreeMap::new();
        flatten("", &table, &mut given);
        for (key, value) in given {
            check_known(&key)?;
            values.insert(key, value);
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| BsdeError::config("--set", format!("`{item}` is not key=value")))?;
            let key = key.trim();
            check_known(key)?;
            // Bare words are taken as strings, so `generator.name=sqrt_y` works.
            let value = parse_value(key, raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
            values.insert(key.to_string(), value);
        }
        Self::from_values(values)
    }

    fn from_values(values: BTreeMap<String, Value>) -> Result<Self> {
        let r = Reader(&values);
        let p = r.float("p")?;
        if !(p.is_finite() && p > 1.0) {
            return Err(BsdeError::config("p", "p must exceed 1"));
        }
        let seed = r.int("seed")?;
        if seed < 0 {
            return Err(BsdeError::config("seed", "must be non-negative"));
        }
        let kind = match r.string("basis.kind")?.as_str() {
            "polynomial" => BasisKind::Polynomial,
            other => {
                return Err(BsdeError::Unknown {
                    kind: "basis",
                    name: other.to_string(),
                })
            }
        };
        let basis = RegressionBasis {
            kind,
            degree: r.count("basis.degree", 0)?,
            ridge: r.float("basis.ridge")?,
            standardize: r.boolean("basis.standardize")?,
        };
        basis.validate()?;
        let picard = PicardConfig {
            tol: r.positive("picard.tol")?,
            max_iter: r.count("picard.max_iter", 1)?,
        };
        let search = SearchParams {
            points_per_axis: r.count("search.points", 3)?,
            levels: r.count("search.levels", 1)?,
        };
        search.validate()?;
        let schedule = r.floats("sweep.schedule")?;
        strictly_increasing("sweep.schedule", &schedule)?;
        let lemma31 = Lemma31Options {
            indices: r.floats("lemma31.indices")?,
            samples: r.count("lemma31.samples", 1)?,
            radius: r.positive("lemma31.radius")?,
        };
        strictly_increasing("lemma31.indices", &lemma31.indices)?;
        let dim = r.count("d", 1)?;
        let fill = |key: &str| -> Result<Vec<f64>> {
            let v = r.floats(key)?;
            match v.len() {
                0 => Ok(vec![0.0; dim]),
                n if n == dim => Ok(v),
                _ => Err(BsdeError::config(key, format!("needs {dim} coordinates"))),
            }
        };
        let envelope = EnvelopeOptions {
            n: r.floats("envelope.n")?,
            y_min: r.float("envelope.y_min")?,
            y_max: r.float("envelope.y_max")?,
            points: r.count("envelope.points", 1)?,
            t: r.float("envelope.t")?,
            state: fill("envelope.state")?,
            z: fill("envelope.z")?,
        };
        if !(envelope.y_max >= envelope.y_min) {
            return Err(BsdeError::config("envelope.y_max", "must not be below envelope.y_min"));
        }
        let tolerances = Tolerances {
            mono_tol: r.float("tolerances.mono")?,
            stat_tol: r.float("tolerances.stat")?,
            residual_tol: r.float("tolerances.residual")?,
        };
        if ![tolerances.mono_tol, tolerances.stat_tol, tolerances.residual_tol]
            .iter()
            .all(|t| t.is_finite() && *t >= 0.0)
        {
            return Err(BsdeError::config("tolerances", "must be non-negative"));
        }
        let cfg = RunConfig {
            horizon: r.positive("T")?,
            steps: r.count("N", 1)?,
            paths: r.count("M", 1)?,
            dim,
            p,
            seed: seed as u64,
            generator: (r.string("generator.name")?, r.floats("generator.params")?),
            terminal: (r.string("terminal.name")?, r.floats("terminal.params")?),
            compare_generator: (r.string("compare.generator.name")?, r.floats("compare.generator.params")?),
            compare_terminal: (r.string("compare.terminal.name")?, r.floats("compare.terminal.params")?),
            basis,
            picard,
            search,
            schedule,
            tolerances,
            final_fraction: r.positive("cauchy.final_fraction")?,
            constant: r.positive("check.C")?,
            lemma31,
            envelope,
            solution_paths: r.count("output.solution_paths", 0)?,
            values,
        };
        // Resolve the problem up front so that bad names are configuration errors.
        // (Schedule entries versus K are checked by the sweep itself.)
        cfg.make_generator()?;
        cfg.make_terminal()?;
        cfg.make_compare_generator()?;
        cfg.make_compare_terminal()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.values.insert("seed".into(), Value::Integer(seed as i64));
        self
    }

    /// The effective configuration as flat `key = value` lines; parsing it
    /// back yields the same configuration.
    pub fn effective_toml(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            let _ = writeln!(out, "{} = {}", quote_key(key), value);
        }
        out
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        make_grid(self.horizon, self.steps)
    }

    pub fn make_generator(&self) -> Result<GeneratorSpec> {
        make_builtin_generator(&self.generator.0, &self.generator.1)
    }

    pub fn make_terminal(&self) -> Result<TerminalSpec> {
        make_terminal(&self.terminal.0, &self.terminal.1)
    }

    pub fn make_compare_generator(&self) -> Result<GeneratorSpec> {
        make_builtin_generator(&self.compare_generator.0, &self.compare_generator.1)
    }

    pub fn make_compare_terminal(&self) -> Result<TerminalSpec> {
        make_terminal(&self.compare_terminal.0, &self.compare_terminal.1)
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::new(self.make_generator()?, self.make_terminal()?, self.schedule.clone());
        cfg.p = self.p;
        cfg.horizon = self.horizon;
        cfg.steps = self.steps;
        cfg.paths = self.paths;
        cfg.dim = self.dim;
        cfg.seed = self.seed;
        cfg.basis = self.basis;
        cfg.picard = self.picard;
        cfg.search = self.search;
        cfg.tolerances = self.tolerances;
        cfg.final_fraction = self.final_fraction;
        cfg.constant = self.constant;
        Ok(cfg)
    }
}

/// Dotted keys are written quoted per segment only when needed (`T`, `N`
/// and friends are bare keys already).
fn quote_key(key: &str) -> String {
    key.split('.')
        .map(|seg| {
            if seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                seg.to_string()
            } else {
                format!("\"{seg}\"")
            }
        })
        .collect::<Vec<_>>()
        .join(".")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
generator.name = "sqrt_y"
terminal.name = "w_T"
T = 1.0
N = 32
M = 500
p = 3
"#;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL, &[]).unwrap();
        assert_eq!((cfg.steps, cfg.paths, cfg.dim, cfg.seed), (32, 500, 1, 0));
        assert_eq!(cfg.p, 3.0);
        assert_eq!(cfg.basis, RegressionBasis::default());
        assert_eq!(cfg.schedule, vec![2.0, 4.0, 8.0, 16.0]);
        assert_eq!(cfg.envelope.state, vec![0.0]);
    }

    #[test]
    fn tables_and_dotted_keys_agree() {
        let a = RunConfig::from_toml("[generator]\nname = \"affine\"\nparams = [0.5, 0.25, 1]\n", &[]).unwrap();
        let b = RunConfig::from_toml("generator.name = \"affine\"\ngenerator.params = [0.5, 0.25, 1.0]\n", &[]).unwrap();
        assert_eq!(a.generator, b.generator);
    }

    #[test]
    fn p_must_exceed_one() {
        let err = RunConfig::from_toml("p = 1", &[]).unwrap_err();
        assert!(err.to_string().contains("p must exceed 1"), "{err}");
        assert!(matches!(err, BsdeError::Config { ref key, .. } if key == "p"));
    }

    #[test]
    fn schedule_must_increase() {
        let err = RunConfig::from_toml("sweep.schedule = [2, 2]", &[]).unwrap_err();
        assert!(err.to_string().contains("schedule strictly increasing"), "{err}");
        let cfg = RunConfig::from_toml("generator.name = \"sqrt_y\"\nsweep.schedule = [0.5, 2]", &[]).unwrap();
        let err = cfg.sweep_config().unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("exceed K"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::from_toml("gnerator.name = \"zero\"", &[]),
            Err(BsdeError::Unknown { .. })
        ));
        assert!(RunConfig::from_toml("", &["basis.degre=4".into()]).is_err());
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = RunConfig::from_toml("T = 1.0\nN = = 3\n", &[]).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::from_toml(
            MINIMAL,
            &["N=64".into(), "generator.name=linear_y".into(), "generator.params=[0.5]".into()],
        )
        .unwrap();
        assert_eq!(cfg.steps, 64);
        assert_eq!(cfg.generator, ("linear_y".to_string(), vec![0.5]));
        assert!(RunConfig::from_toml("", &["N".into()]).is_err());
        assert!(RunConfig::from_toml("", &["N=0".into()]).is_err());
        assert!(RunConfig::from_toml("", &["generator.name=nope".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::from_toml(MINIMAL, &["seed=17".into()]).unwrap();
        let echoed = cfg.effective_toml();
        let again = RunConfig::from_toml(&echoed, &[]).unwrap();
        assert_eq!(again.effective_toml(), echoed);
        assert_eq!(again.seed, 17);
        assert_eq!(again.generator, cfg.generator);
    }

    #[test]
    fn help_lists_every_key() {
        let help = key_help();
        for (key, _, _) in KEYS {
            assert!(help.contains(key));
        }
    }
}
