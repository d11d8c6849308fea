//! Generators `f(t, W_t, y, z)` with linear-growth metadata, terminal
//! conditions, and sampled checks of the growth and integrability assumptions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::brownian::BrownianBatch;
use crate::error::{BsdeError, Result};
use crate::rng::Uniforms;
use crate::stats::{batch_means, MeanEstimate, DEFAULT_BLOCKS};

/// `(t, state, y, z) -> f`.
pub type DriverFn = dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync;
/// `(t, state) -> g_t`.
pub type BoundFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
/// `(W_T, optional full path laid out node-major) -> ξ`.
pub type TerminalFn = dyn Fn(&[f64], Option<&[f64]>) -> f64 + Send + Sync;

pub fn euclid(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Which `z` coordinates a generator actually reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ZDependence {
    None,
    First,
    All,
}

/// Arguments the generator depends on, plus coordinates where it fails to be
/// smooth. The inf-convolution search collapses onto the dependent axes and
/// always tries the kink coordinates as candidates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dependence {
    pub y: bool,
    pub z: ZDependence,
    pub y_kinks: Vec<f64>,
    pub z_kinks: Vec<f64>,
}

impl Dependence {
    pub fn full() -> Self {
        Dependence {
            y: true,
            z: ZDependence::All,
            y_kinks: Vec::new(),
            z_kinks: Vec::new(),
        }
    }

    fn none() -> Self {
        Dependence {
            y: false,
            z: ZDependence::None,
            y_kinks: Vec::new(),
            z_kinks: Vec::new(),
        }
    }

    fn y_only() -> Self {
        Dependence {
            y: true,
            ..Self::none()
        }
    }

    /// z axes searched for a given Brownian dimension.
    pub fn z_axes(&self, dim: usize) -> usize {
        match self.z {
            ZDependence::None => 0,
            ZDependence::First => 1.min(dim),
            ZDependence::All => dim,
        }
    }
}

/// An evaluable generator with the constants of its linear-growth bound
/// `|f| <= g(t, W_t) + K (|y| + |z|)`.
#[derive(Clone)]
pub struct GeneratorSpec {
    name: String,
    eval: Arc<DriverFn>,
    growth: f64,
    bound: Arc<BoundFn>,
    bound_name: String,
    lipschitz: Option<f64>,
    dependence: Dependence,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("K", &self.growth)
            .field("g", &self.bound_name)
            .field("lipschitz", &self.lipschitz)
            .field("dependence", &self.dependence)
            .finish()
    }
}

impl GeneratorSpec {
    /// A generator with unknown structure: depends on everything, zero
    /// growth metadata until [`with_growth`](Self::with_growth) is applied.
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        GeneratorSpec {
            name: name.into(),
            eval: Arc::new(eval),
            growth: 0.0,
            bound: Arc::new(|_, _| 0.0),
            bound_name: "zero".into(),
            lipschitz: None,
            dependence: Dependence::full(),
        }
    }

    pub fn with_growth(mut self, k: f64, bound: BoundSpec) -> Self {
        self.growth = k;
        self.bound_name = bound.to_string();
        self.bound = bound.into_fn();
        self
    }

    pub fn with_bound_fn<G>(mut self, k: f64, name: impl Into<String>, bound: G) -> Self
    where
        G: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.growth = k;
        self.bound_name = name.into();
        self.bound = Arc::new(bound);
        self
    }

    pub fn with_lipschitz(mut self, l: Option<f64>) -> Self {
        self.lipschitz = l;
        self
    }

    pub fn with_dependence(mut self, dependence: Dependence) -> Self {
        self.dependence = dependence;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, t: f64, state: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.eval)(t, state, y, z)
    }

    /// `g(t, state)`.
    #[inline]
    pub fn bound(&self, t: f64, state: &[f64]) -> f64 {
        (self.bound)(t, state)
    }

    pub fn bound_name(&self) -> &str {
        &self.bound_name
    }

    /// Linear-growth constant `K`.
    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn dependence(&self) -> &Dependence {
        &self.dependence
    }

    /// Right-hand side of the growth bound at a point.
    pub fn growth_bound(&self, t: f64, state: &[f64], y: f64, z: &[f64]) -> f64 {
        self.bound(t, state) + self.growth * (y.abs() + euclid(z))
    }
}

/// Builtin choices for the bound process `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSpec {
    Zero,
    One,
    Const(f64),
}

impl BoundSpec {
    fn into_fn(self) -> Arc<BoundFn> {
        let c = match self {
            BoundSpec::Zero => 0.0,
            BoundSpec::One => 1.0,
            BoundSpec::Const(c) => c,
        };
        Arc::new(move |_, _| c)
    }
}

impl fmt::Display for BoundSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundSpec::Zero => write!(f, "zero"),
            BoundSpec::One => write!(f, "one"),
            BoundSpec::Const(c) => write!(f, "const {c}"),
        }
    }
}

impl FromStr for BoundSpec {
    type Err = BsdeError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => Ok(BoundSpec::Zero),
            "one" => Ok(BoundSpec::One),
            _ => {
                let rest = s.strip_prefix("const").map(str::trim).unwrap_or(s);
                let c: f64 = rest.parse().map_err(|_| BsdeError::Unknown {
                    kind: "bound process",
                    name: s.to_string(),
                })?;
                if !(c.is_finite() && c >= 0.0) {
                    return Err(BsdeError::config("generator.g", "bound must be non-negative"));
                }
                Ok(BoundSpec::Const(c))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinGenerator {
    Zero,
    Constant,
    LinearY,
    LinearZ,
    Affine,
    SqrtY,
    SqrtZ,
    LsmExample,
}

impl BuiltinGenerator {
    pub fn arity(self) -> usize {
        match self {
            BuiltinGenerator::Zero
            | BuiltinGenerator::SqrtY
            | BuiltinGenerator::SqrtZ
            | BuiltinGenerator::LsmExample => 0,
            BuiltinGenerator::Constant | BuiltinGenerator::LinearY | BuiltinGenerator::LinearZ => 1,
            BuiltinGenerator::Affine => 3,
        }
    }
}

impl FromStr for BuiltinGenerator {
    type Err = BsdeError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => BuiltinGenerator::Zero,
            "constant" => BuiltinGenerator::Constant,
            "linear_y" => BuiltinGenerator::LinearY,
            "linear_z" => BuiltinGenerator::LinearZ,
            "affine" => BuiltinGenerator::Affine,
            "sqrt_y" => BuiltinGenerator::SqrtY,
            "sqrt_z" => BuiltinGenerator::SqrtZ,
            "lsm_example" => BuiltinGenerator::LsmExample,
            _ => {
                return Err(BsdeError::Unknown {
                    kind: "generator",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// Builds one of the builtin generators.
///
/// | name | f | K | g | L |
/// |---|---|---|---|---|
/// | `zero` | 0 | 0 | 0 | 0 |
/// | `constant c` | c | 0 | \|c\| | 0 |
/// | `linear_y a` | a y | \|a\| | 0 | \|a\| |
/// | `linear_z b` | b z₁ | \|b\| | 0 | \|b\| |
/// | `affine a b c` | a y + b z₁ + c | max(\|a\|,\|b\|) | \|c\| | \|a\|+\|b\| |
/// | `sqrt_y` | √\|y\| | 1 | 1 | – |
/// | `sqrt_z` | √\|z\| | 1 | 1 | – |
/// | `lsm_example` | sin(x₁) + √\|y\| | 1 | 1 + \|sin x₁\| | – |
pub fn make_builtin_generator(name: &str, params: &[f64]) -> Result<GeneratorSpec> {
    let kind: BuiltinGenerator = name.parse()?;
    if params.len() != kind.arity() {
        return Err(BsdeError::Arity {
            name: name.to_string(),
            expected: kind.arity(),
            got: params.len(),
        });
    }
    if params.iter().any(|x| !x.is_finite()) {
        return Err(BsdeError::config("generator.params", "parameters must be finite"));
    }
    let spec = match kind {
        BuiltinGenerator::Zero => GeneratorSpec::new("zero", |_, _, _, _| 0.0)
            .with_lipschitz(Some(0.0))
            .with_dependence(Dependence::none()),
        BuiltinGenerator::Constant => {
            let c = params[0];
            GeneratorSpec::new(format!("constant({c})"), move |_, _, _, _| c)
                .with_growth(0.0, BoundSpec::Const(c.abs()))
                .with_lipschitz(Some(0.0))
                .with_dependence(Dependence::none())
        }
        BuiltinGenerator::LinearY => {
            let a = params[0];
            GeneratorSpec::new(format!("linear_y({a})"), move |_, _, y, _| a * y)
                .with_growth(a.abs(), BoundSpec::Zero)
                .with_lipschitz(Some(a.abs()))
                .with_dependence(Dependence::y_only())
        }
        BuiltinGenerator::LinearZ => {
            let b = params[0];
            GeneratorSpec::new(format!("linear_z({b})"), move |_, _, _, z| b * z[0])
                .with_growth(b.abs(), BoundSpec::Zero)
                .with_lipschitz(Some(b.abs()))
                .with_dependence(Dependence {
                    z: ZDependence::First,
                    ..Dependence::none()
                })
        }
        BuiltinGenerator::Affine => {
            let (a, b, c) = (params[0], params[1], params[2]);
            GeneratorSpec::new(format!("affine({a},{b},{c})"), move |_, _, y, z| {
                a * y + b * z[0] + c
            })
            .with_growth(a.abs().max(b.abs()), BoundSpec::Const(c.abs()))
            .with_lipschitz(Some(a.abs() + b.abs()))
            .with_dependence(Dependence {
                y: true,
                z: ZDependence::First,
                ..Dependence::none()
            })
        }
        BuiltinGenerator::SqrtY => GeneratorSpec::new("sqrt_y", |_, _, y, _| y.abs().sqrt())
            .with_growth(1.0, BoundSpec::One)
            .with_dependence(Dependence {
                y_kinks: vec![0.0],
                ..Dependence::y_only()
            }),
        BuiltinGenerator::SqrtZ => GeneratorSpec::new("sqrt_z", |_, _, _, z| euclid(z).sqrt())
            .with_growth(1.0, BoundSpec::One)
            .with_dependence(Dependence {
                z: ZDependence::All,
                z_kinks: vec![0.0],
                ..Dependence::none()
            }),
        BuiltinGenerator::LsmExample => {
            GeneratorSpec::new("lsm_example", |_, x, y, _| x[0].sin() + y.abs().sqrt())
                .with_bound_fn(1.0, "1 + |sin(x1)|", |_, x| 1.0 + x[0].sin().abs())
                .with_dependence(Dependence {
                    y_kinks: vec![0.0],
                    ..Dependence::y_only()
                })
        }
    };
    Ok(spec)
}

/// The dominating generator `g(t, x) + K (|y| + |z|)` of a base generator.
pub fn make_dominating_generator(base: &GeneratorSpec) -> GeneratorSpec {
    let k = base.growth();
    let bound = base.bound.clone();
    let eval_bound = base.bound.clone();
    GeneratorSpec {
        name: format!("dominating[{}]", base.name()),
        eval: Arc::new(move |t, x, y, z| eval_bound(t, x) + k * (y.abs() + euclid(z))),
        growth: k,
        bound,
        bound_name: base.bound_name.clone(),
        lipschitz: Some(k),
        dependence: Dependence {
            y_kinks: vec![0.0],
            z_kinks: vec![0.0],
            ..Dependence::full()
        },
    }
}

/// A point `(t, W_t, y, z)` at which a generator is probed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub state: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
}

pub trait PointSampler {
    fn sample(&mut self) -> SamplePoint;
}

/// Uniform points in a box: `t ∈ [0, T]`, state coordinates in
/// `[-state_radius, state_radius]`, `y` and each `z_k` in `[-radius, radius]`.
/// A fifth of the draws are pulled into `[-0.1, 0.1]` so that kinks at the
/// origin are probed densely.
pub struct BoxSampler {
    uniforms: Uniforms,
    pub horizon: f64,
    pub dim: usize,
    pub state_radius: f64,
    pub radius: f64,
}

impl BoxSampler {
    pub fn new(seed: u64, horizon: f64, dim: usize, radius: f64) -> Self {
        BoxSampler {
            uniforms: Uniforms::new(seed, 0x5a3b),
            horizon,
            dim,
            state_radius: 3.0,
            radius,
        }
    }
}

impl PointSampler for BoxSampler {
    fn sample(&mut self) -> SamplePoint {
        let u = &mut self.uniforms;
        let near_origin = u.next_unit() < 0.2;
        let r = if near_origin { 0.1f64.min(self.radius) } else { self.radius };
        SamplePoint {
            t: u.range(0.0, self.horizon),
            state: (0..self.dim)
                .map(|_| u.range(-self.state_radius, self.state_radius))
                .collect(),
            y: u.range(-r, r),
            z: (0..self.dim).map(|_| u.range(-r, r)).collect(),
        }
    }
}

/// Cycles through a fixed list of points.
pub struct FixedPoints {
    points: Vec<SamplePoint>,
    next: usize,
}

impl FixedPoints {
    pub fn new(points: Vec<SamplePoint>) -> Self {
        assert!(!points.is_empty(), "fixed sampler needs at least one point");
        FixedPoints { points, next: 0 }
    }
}

impl PointSampler for FixedPoints {
    fn sample(&mut self) -> SamplePoint {
        let p = self.points[self.next % self.points.len()].clone();
        self.next += 1;
        p
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthViolation {
    pub point: SamplePoint,
    pub value: f64,
    pub bound: f64,
    /// `|f| - bound`, positive for a violation.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub checked: usize,
    /// Smallest `bound - |f|` seen over all samples.
    pub worst_slack: f64,
    pub violations: Vec<GrowthViolation>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `count` points and lists those violating the growth bound.
pub fn verify_linear_growth(spec: &GeneratorSpec, sampler: &mut dyn PointSampler, count: usize) -> GrowthReport {
    let mut violations = Vec::new();
    let mut worst_slack = f64::INFINITY;
    for _ in 0..count {
        let p = sampler.sample();
        let value = spec.eval(p.t, &p.state, p.y, &p.z);
        let bound = spec.growth_bound(p.t, &p.state, p.y, &p.z);
        let slack = bound - value.abs();
        worst_slack = worst_slack.min(slack);
        // relative slop for rounding in large bounds
        if slack < -1e-12 * bound.max(1.0) {
            violations.push(GrowthViolation {
                point: p,
                value,
                bound,
                margin: -slack,
            });
        }
    }
    GrowthReport {
        checked: count,
        worst_slack,
        violations,
    }
}

/// Worst observed ratio `|f(y1,z1) - f(y2,z2)| / (|y1-y2| + |z1-z2|)` over
/// pairs sharing `(t, state)`.
pub fn sampled_lipschitz_ratio(spec: &GeneratorSpec, sampler: &mut dyn PointSampler, pairs: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a = sampler.sample();
        let b = sampler.sample();
        let dist = (a.y - b.y).abs()
            + euclid(&a.z.iter().zip(&b.z).map(|(x, y)| x - y).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        let fa = spec.eval(a.t, &a.state, a.y, &a.z);
        let fb = spec.eval(a.t, &a.state, b.y, &b.z);
        worst = worst.max((fa - fb).abs() / dist);
    }
    worst
}

#[derive(Clone)]
pub struct TerminalSpec {
    name: String,
    phi: Arc<TerminalFn>,
    path_dependent: bool,
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalSpec")
            .field("name", &self.name)
            .field("path_dependent", &self.path_dependent)
            .finish()
    }
}

impl TerminalSpec {
    /// A terminal value that depends on `W_T` only.
    pub fn markovian<F>(name: impl Into<String>, phi: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TerminalSpec {
            name: name.into(),
            phi: Arc::new(move |w, _| phi(w)),
            path_dependent: false,
        }
    }

    /// A terminal value reading the whole discrete path, passed node-major
    /// (`N + 1` blocks of `d` coordinates).
    pub fn path_dependent<F>(name: impl Into<String>, phi: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        TerminalSpec {
            name: name.into(),
            phi: Arc::new(move |w, path| phi(w, path.expect("path-dependent terminal needs the path"))),
            path_dependent: true,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_path_dependent(&self) -> bool {
        self.path_dependent
    }

    pub fn eval(&self, terminal_state: &[f64], path: Option<&[f64]>) -> f64 {
        (self.phi)(terminal_state, path)
    }

    /// `ξ` on every path of a batch, given its levels (see [`BrownianBatch::levels`]).
    pub fn values(&self, batch: &BrownianBatch, levels: &[f64]) -> Vec<f64> {
        let (d, n) = (batch.dim(), batch.steps());
        let stride = (n + 1) * d;
        levels
            .chunks_exact(stride)
            .map(|path| {
                let w_t = &path[n * d..];
                self.eval(w_t, self.path_dependent.then_some(path))
            })
            .collect()
    }
}

/// Builtin terminal conditions; all have finite moments of every order.
pub fn make_terminal(name: &str, params: &[f64]) -> Result<TerminalSpec> {
    let expect = |n: usize| -> Result<()> {
        if params.len() != n {
            return Err(BsdeError::Arity {
                name: name.to_string(),
                expected: n,
                got: params.len(),
            });
        }
        Ok(())
    };
    Ok(match name {
        "w_T" => {
            expect(0)?;
            TerminalSpec::markovian("w_T", |w| w[0])
        }
        "abs_w_T" => {
            expect(0)?;
            TerminalSpec::markovian("abs_w_T", |w| w[0].abs())
        }
        "bounded_call" => {
            expect(2)?;
            let (k, cap) = (params[0], params[1]);
            if cap < 0.0 {
                return Err(BsdeError::config("terminal.params", "cap must be non-negative"));
            }
            TerminalSpec::markovian(format!("bounded_call({k},{cap})"), move |w| {
                (w[0] - k).max(0.0).min(cap)
            })
        }
        "constant" => {
            expect(1)?;
            let c = params[0];
            TerminalSpec::markovian(format!("constant({c})"), move |_| c)
        }
        _ => {
            return Err(BsdeError::Unknown {
                kind: "terminal",
                name: name.to_string(),
            })
        }
    })
}

/// Monte Carlo estimate of `E|ξ|^p`.
pub fn terminal_moment(terminal: &TerminalSpec, batch: &BrownianBatch, p: f64) -> MeanEstimate {
    let levels = batch.levels();
    let powered: Vec<f64> = terminal
        .values(batch, &levels)
        .into_iter()
        .map(|x| x.abs().powf(p))
        .collect();
    batch_means(&powered, DEFAULT_BLOCKS)
}

/// Heuristic integrability check: the moment estimate on `M` paths versus `2M`.
/// Finite samples can never prove integrability; this only flags instability.
#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityCheck {
    pub moment: MeanEstimate,
    pub moment_doubled: MeanEstimate,
    pub relative_change: f64,
    pub stable: bool,
}

pub fn integrability_check(
    terminal: &TerminalSpec,
    grid: crate::grid::TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    p: f64,
) -> Result<IntegrabilityCheck> {
    let small = crate::brownian::simulate_paths(grid, dim, paths, seed)?;
    let large = crate::brownian::simulate_paths(grid, dim, 2 * paths, seed)?;
    let moment = terminal_moment(terminal, &small, p);
    let moment_doubled = terminal_moment(terminal, &large, p);
    let scale = moment.mean.abs().max(moment_doubled.mean.abs());
    let relative_change = if scale == 0.0 {
        0.0
    } else {
        (moment.mean - moment_doubled.mean).abs() / scale
    };
    let sigma = moment.std_error.hypot(moment_doubled.std_error);
    Ok(IntegrabilityCheck {
        moment,
        moment_doubled,
        relative_change,
        stable: moment_doubled.mean.is_finite() && (moment.mean - moment_doubled.mean).abs() <= 3.0 * sigma + 1e-12,
    })
}

/// The exponent of the `L^p` setting; strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpConfig {
    p: f64,
}

impl LpConfig {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(BsdeError::config("p", "p must exceed 1"));
        }
        Ok(LpConfig { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}
