//! Lipschitz inf-convolution envelopes
//! `f_n(t, x, y, z) = inf_{u, v} { f(t, x, u, v) + n (|y - u| + |z - v|) }`.
//!
//! The infimum is localized to the ball `|y - u| + |z - v| <= R` with
//! `R = 2 (g + K (|y| + |z|)) / (n - K)`: any candidate outside it costs at
//! least `-g - K(|y|+|z|) + (n - K) R`, which exceeds the value
//! `f(y, z) <= g + K(|y|+|z|)` of the candidate `(u, v) = (y, z)`.
//! Inside the ball a deterministic multi-level grid search runs over the axes
//! the generator actually depends on.

use serde::Serialize;

use crate::error::{BsdeError, Result};
use crate::generators::{euclid, GeneratorSpec, PointSampler, SamplePoint};

pub const MAX_SEARCH_DIMS: usize = 3;

/// Grid-search resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchParams {
    /// Points per axis per level; forced odd so the window centre is a node.
    pub points_per_axis: usize,
    /// Refinement levels (the first level covers the whole ball).
    pub levels: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            points_per_axis: 33,
            levels: 4,
        }
    }
}

const SHRINK: f64 = 4.0;

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 3 || self.points_per_axis.is_multiple_of(2) {
            return Err(BsdeError::config(
                "search.points_per_axis",
                "must be an odd number of at least 3",
            ));
        }
        if self.levels == 0 {
            return Err(BsdeError::config("search.levels", "must be at least 1"));
        }
        Ok(())
    }
}

/// Radius of the ball that contains every minimizer of the inf-convolution.
pub fn localization_radius(g_val: f64, k: f64, n: f64, y: f64, z: &[f64]) -> Result<f64> {
    if n <= k {
        return Err(BsdeError::config(
            "n",
            format!("envelope index {n} must exceed the growth constant {k}"),
        ));
    }
    Ok(2.0 * (g_val + k * (y.abs() + euclid(z))) / (n - k))
}

/// An envelope value together with its grid-resolution error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeValue {
    pub value: f64,
    /// `n` times the diameter of the final grid cell; zero when exact.
    pub tol: f64,
}

/// The index-`n` Lipschitz envelope of a base generator.
#[derive(Debug, Clone)]
pub struct ApproxFamily {
    base: GeneratorSpec,
    n: f64,
    dim: usize,
    search: SearchParams,
}

impl ApproxFamily {
    pub fn new(base: GeneratorSpec, n: f64, dim: usize, search: SearchParams) -> Result<Self> {
        search.validate()?;
        if !(n.is_finite() && n > base.growth()) {
            return Err(BsdeError::config(
                "n",
                format!("envelope index {n} must exceed K = {}", base.growth()),
            ));
        }
        let dep = base.dependence();
        let dims = usize::from(dep.y) + dep.z_axes(dim);
        if dims > MAX_SEARCH_DIMS && !base.lipschitz().is_some_and(|l| n >= l) {
            return Err(BsdeError::SearchDimension { dims });
        }
        Ok(ApproxFamily { base, n, dim, search })
    }

    pub fn base(&self) -> &GeneratorSpec {
        &self.base
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn search(&self) -> SearchParams {
        self.search
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when the base is already `n`-Lipschitz, so `f_n = f`.
    pub fn is_fixed_point(&self) -> bool {
        self.base.lipschitz().is_some_and(|l| self.n >= l)
    }

    pub fn envelope(&self, t: f64, state: &[f64], y: f64, z: &[f64]) -> EnvelopeValue {
        inf_convolve(self, t, state, y, z)
    }

    /// `f_n` packaged as a generator: same `K` and `g`, Lipschitz constant `n`.
    pub fn generator(&self) -> GeneratorSpec {
        let family = self.clone();
        let mut dependence = self.base.dependence().clone();
        dependence.y_kinks.clear();
        dependence.z_kinks.clear();
        let bound_family = self.clone();
        GeneratorSpec::new(format!("{}_n={}", self.base.name(), self.n), move |t, x, y, z| {
            family.envelope(t, x, y, z).value
        })
        .with_bound_fn(self.base.growth(), self.base.bound_name().to_string(), move |t, x| {
            bound_family.base.bound(t, x)
        })
        .with_lipschitz(Some(self.n))
        .with_dependence(dependence)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    value: f64,
    dist: f64,
    coords: [f64; MAX_SEARCH_DIMS],
}

impl Candidate {
    /// Lower value, then closer to `(y, z)`, then lexicographically smaller.
    fn beats(&self, other: &Candidate) -> bool {
        if self.value != other.value {
            return self.value < other.value;
        }
        if self.dist != other.dist {
            return self.dist < other.dist;
        }
        self.coords < other.coords
    }
}

struct Objective<'a> {
    family: &'a ApproxFamily,
    t: f64,
    state: &'a [f64],
    y: f64,
    z: &'a [f64],
    search_y: bool,
    z_axes: usize,
    v: Vec<f64>,
}

impl Objective<'_> {
    fn eval(&mut self, coords: &[f64; MAX_SEARCH_DIMS]) -> Candidate {
        let mut axis = 0;
        let u = if self.search_y {
            axis += 1;
            coords[0]
        } else {
            self.y
        };
        let mut dz2 = 0.0;
        for k in 0..self.z_axes {
            let vk = coords[axis + k];
            self.v[k] = vk;
            dz2 += (self.z[k] - vk) * (self.z[k] - vk);
        }
        let dist = (self.y - u).abs() + dz2.sqrt();
        let f = self.family.base.eval(self.t, self.state, u, &self.v);
        Candidate {
            value: f + self.family.n * dist,
            dist,
            coords: *coords,
        }
    }
}

/// Approximate `f_n(t, state, y, z)` by localized multi-level grid search.
///
/// The window centre `(y, z)` is always a grid node and the generator's
/// declared kink coordinates are always tried, so the result never exceeds
/// `f(y, z)` and equals the true infimum whenever the objective is piecewise
/// concave between kinks (e.g. `√|y|`).
pub fn inf_convolve(family: &ApproxFamily, t: f64, state: &[f64], y: f64, z: &[f64]) -> EnvelopeValue {
    let base = &family.base;
    if family.is_fixed_point() {
        return EnvelopeValue {
            value: base.eval(t, state, y, z),
            tol: 0.0,
        };
    }
    let dep = base.dependence();
    let z_axes = dep.z_axes(z.len());
    let dims = usize::from(dep.y) + z_axes;
    let radius = 2.0 * (base.growth_bound(t, state, y, z)) / (family.n - base.growth());
    if dims == 0 || radius == 0.0 {
        return EnvelopeValue {
            value: base.eval(t, state, y, z),
            tol: 0.0,
        };
    }

    let mut centre = [0.0; MAX_SEARCH_DIMS];
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(dims);
    let mut axis = 0;
    if dep.y {
        centre[0] = y;
        anchors.push(std::iter::once(y).chain(dep.y_kinks.iter().copied()).collect());
        axis = 1;
    }
    for k in 0..z_axes {
        centre[axis + k] = z[k];
        anchors.push(std::iter::once(z[k]).chain(dep.z_kinks.iter().copied()).collect());
    }

    let mut objective = Objective {
        family,
        t,
        state,
        y,
        z,
        search_y: dep.y,
        z_axes,
        v: z.to_vec(),
    };

    let mut best = objective.eval(&centre);
    // product of per-axis anchor sets
    let anchor_count: usize = anchors.iter().map(Vec::len).product();
    for flat in 0..anchor_count {
        let mut coords = centre;
        let mut rest = flat;
        for (a, set) in anchors.iter().enumerate() {
            coords[a] = set[rest % set.len()];
            rest /= set.len();
        }
        let c = objective.eval(&coords);
        if c.beats(&best) {
            best = c;
        }
    }

    let q = family.search.points_per_axis;
    let half = (q - 1) / 2;
    let mut half_width = radius;
    let mut cell = 0.0;
    let total = q.pow(dims as u32);
    for level in 0..family.search.levels {
        let window_centre = if level == 0 { centre } else { best.coords };
        cell = 2.0 * half_width / (q - 1) as f64;
        for flat in 0..total {
            let mut coords = window_centre;
            let mut rest = flat;
            for c in coords.iter_mut().take(dims).rev() {
                let j = rest % q;
                rest /= q;
                *c += (j as f64 - half as f64) * cell;
            }
            let c = objective.eval(&coords);
            if c.beats(&best) {
                best = c;
            }
        }
        half_width /= SHRINK;
    }

    let diameter = if dep.y { cell } else { 0.0 } + cell * (z_axes as f64).sqrt();
    EnvelopeValue {
        value: best.value,
        tol: family.n * diameter,
    }
}

/// One row of an envelope table: `(y, f, f_n, tol)` at fixed `(t, state, z)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeRow {
    pub y: f64,
    pub f: f64,
    pub f_n: f64,
    pub tol: f64,
}

pub fn tabulate_envelope(
    family: &ApproxFamily,
    t: f64,
    state: &[f64],
    z: &[f64],
    y_min: f64,
    y_max: f64,
    points: usize,
) -> Vec<EnvelopeRow> {
    let step = if points > 1 {
        (y_max - y_min) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points)
        .map(|j| {
            let y = if j + 1 == points && points > 1 { y_max } else { y_min + j as f64 * step };
            let e = family.envelope(t, state, y, z);
            EnvelopeRow {
                y,
                f: family.base.eval(t, state, y, z),
                f_n: e.value,
                tol: e.tol,
            }
        })
        .collect()
}

/// Outcome of one item of the envelope property suite.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ItemOutcome {
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` over all checks; non-positive when everything holds.
    pub worst_margin: f64,
}

impl ItemOutcome {
    fn new() -> Self {
        ItemOutcome {
            passed: true,
            checks: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        let margin = lhs - rhs;
        self.checks += 1;
        self.worst_margin = self.worst_margin.max(margin);
        if margin > 1e-12 * rhs.abs().max(1.0) {
            self.violations += 1;
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceRow {
    pub k: u32,
    pub n: f64,
    pub delta: f64,
    pub max_gap: f64,
    pub mean_gap: f64,
}

/// Envelope properties checked on sampled points:
/// growth bound, monotonicity in `n` below `f`, `n`-Lipschitz continuity,
/// and convergence `f_n(y + δ, z + δ) -> f(y, z)` as `n -> ∞`, `δ -> 0`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeSuiteReport {
    pub base: String,
    pub indices: Vec<f64>,
    pub samples: usize,
    pub growth: ItemOutcome,
    pub monotone: ItemOutcome,
    pub lipschitz: ItemOutcome,
    pub convergence: Vec<ConvergenceRow>,
    pub convergence_passed: bool,
    /// Largest grid tolerance met while checking.
    pub max_tol: f64,
}

impl EnvelopeSuiteReport {
    pub fn passed(&self) -> bool {
        self.growth.passed && self.monotone.passed && self.lipschitz.passed && self.convergence_passed
    }
}

/// Rows of the convergence table.
pub const CONVERGENCE_ROWS: u32 = 8;
/// Points used for the convergence table (the origin is always included).
const CONVERGENCE_POINTS: usize = 256;

pub fn lemma31_suite(
    base: &GeneratorSpec,
    dim: usize,
    indices: &[f64],
    samples: usize,
    sampler: &mut dyn PointSampler,
    search: SearchParams,
) -> Result<EnvelopeSuiteReport> {
    if indices.is_empty() || samples == 0 {
        return Err(BsdeError::config("lemma31", "need at least one index and one sample"));
    }
    if indices.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BsdeError::config("lemma31.indices", "indices must be strictly increasing"));
    }
    let families = indices
        .iter()
        .map(|&n| ApproxFamily::new(base.clone(), n, dim, search))
        .collect::<Result<Vec<_>>>()?;

    let mut growth = ItemOutcome::new();
    let mut monotone = ItemOutcome::new();
    let mut lipschitz = ItemOutcome::new();
    let mut max_tol: f64 = 0.0;
    let mut points = Vec::with_capacity(samples);

    for s in 0..samples {
        let p = sampler.sample();
        let f = base.eval(p.t, &p.state, p.y, &p.z);
        let bound = base.growth_bound(p.t, &p.state, p.y, &p.z);
        let env: Vec<EnvelopeValue> = families
            .iter()
            .map(|fam| fam.envelope(p.t, &p.state, p.y, &p.z))
            .collect();
        for e in &env {
            max_tol = max_tol.max(e.tol);
            growth.record(e.value.abs(), bound + e.tol);
            monotone.record(e.value, f);
        }
        for w in env.windows(2) {
            monotone.record(w[0].value, w[1].value + w[0].tol);
        }
        // one nearby and one distant partner per sample
        let partner = if s % 2 == 0 {
            let h = 1e-3 * (1.0 + p.y.abs());
            SamplePoint {
                y: p.y + h,
                z: p.z.iter().map(|zk| zk - 0.5 * h).collect(),
                ..p.clone()
            }
        } else {
            let q = sampler.sample();
            SamplePoint { y: q.y, z: q.z, ..p.clone() }
        };
        let dist = (p.y - partner.y).abs()
            + euclid(&p.z.iter().zip(&partner.z).map(|(a, b)| a - b).collect::<Vec<_>>());
        for (fam, e) in families.iter().zip(&env) {
            let e2 = fam.envelope(partner.t, &partner.state, partner.y, &partner.z);
            lipschitz.record((e.value - e2.value).abs(), fam.n * dist + e.tol + e2.tol);
        }
        if points.len() < CONVERGENCE_POINTS {
            points.push(p);
        }
    }

    if let Some(first) = points.first().cloned() {
        points[0] = SamplePoint {
            y: 0.0,
            z: vec![0.0; first.z.len()],
            ..first
        };
    }
    let mut convergence = Vec::with_capacity(CONVERGENCE_ROWS as usize);
    for k in 1..=CONVERGENCE_ROWS {
        let n = indices[0] * f64::from(1u32 << k);
        let delta = 0.5f64.powi(k as i32);
        let fam = ApproxFamily::new(base.clone(), n, dim, search)?;
        let mut max_gap: f64 = 0.0;
        let mut sum_gap = 0.0;
        for p in &points {
            let shifted: Vec<f64> = p.z.iter().map(|zk| zk + delta).collect();
            let e = fam.envelope(p.t, &p.state, p.y + delta, &shifted);
            let gap = (e.value - base.eval(p.t, &p.state, p.y, &p.z)).abs();
            max_gap = max_gap.max(gap);
            sum_gap += gap;
        }
        convergence.push(ConvergenceRow {
            k,
            n,
            delta,
            max_gap,
            mean_gap: sum_gap / points.len() as f64,
        });
    }
    let convergence_passed = convergence
        .windows(2)
        .all(|w| w[1].max_gap < w[0].max_gap || w[1].max_gap <= 1e-12);

    Ok(EnvelopeSuiteReport {
        base: base.name().to_string(),
        indices: indices.to_vec(),
        samples,
        growth,
        monotone,
        lipschitz,
        convergence,
        convergence_passed,
        max_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{make_builtin_generator, BoxSampler};

    /// Exhaustive minimization of `f(u) + n|y - u|` on a uniform grid of
    /// spacing `h` over `[-span, span]` (which contains the origin).
    fn brute_force_1d(f: impl Fn(f64) -> f64, n: f64, y: f64, span: f64, h: f64) -> f64 {
        let m = (span / h).round() as i64;
        (-m..=m)
            .map(|j| {
                let u = j as f64 * h;
                f(u) + n * (y - u).abs()
            })
            .fold(f(y), f64::min)
    }

    fn sqrt_family(n: f64) -> ApproxFamily {
        ApproxFamily::new(make_builtin_generator("sqrt_y", &[]).unwrap(), n, 1, SearchParams::default()).unwrap()
    }

    #[test]
    fn radius_examples() {
        assert_eq!(localization_radius(0.0, 0.0, 1.0, 0.0, &[0.0]).unwrap(), 0.0);
        assert_eq!(localization_radius(1.0, 1.0, 3.0, 0.0, &[0.0]).unwrap(), 1.0);
        assert_eq!(localization_radius(1.0, 1.0, 2.0, 1.0, &[0.0]).unwrap(), 4.0);
        assert!(localization_radius(1.0, 1.0, 1.0, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn zero_radius_returns_f() {
        let zero = make_builtin_generator("zero", &[]).unwrap().with_lipschitz(None);
        let fam = ApproxFamily::new(zero, 1.0, 1, SearchParams::default()).unwrap();
        let e = fam.envelope(0.0, &[0.0], 0.0, &[0.0]);
        assert_eq!((e.value, e.tol), (0.0, 0.0));
    }

    /// Restricting the search to the ball changes nothing: brute force over a
    /// window ten times wider agrees with brute force over the ball.
    #[test]
    fn radius_contains_minimizer() {
        let f = |u: f64| u.abs().sqrt();
        for (n, y) in [(3.0, 0.0), (2.0, 1.0), (1.5, -0.7), (2.0, 0.05)] {
            let r = localization_radius(1.0, 1.0, n, y, &[0.0]).unwrap();
            let h = 1e-4;
            let wide = brute_force_1d(f, n, y, 10.0 * (r + y.abs()), h);
            let m = (r / h).floor() as i64;
            let restricted = (-m..=m)
                .map(|j| {
                    let u = y + j as f64 * h;
                    f(u) + n * (y - u).abs()
                })
                .chain(std::iter::once(n * y.abs()).filter(|_| y.abs() <= r))
                .fold(f64::INFINITY, f64::min);
            assert!((wide - restricted).abs() < 1e-6, "n={n} y={y}: {wide} vs {restricted}");
        }
    }

    #[test]
    fn lipschitz_base_is_fixed_point() {
        let abs = GeneratorSpec::new("abs", |_, _, y, _| y.abs())
            .with_growth(1.0, crate::generators::BoundSpec::Zero)
            .with_lipschitz(Some(1.0));
        let fam = ApproxFamily::new(abs.clone(), 2.0, 1, SearchParams::default()).unwrap();
        for y in [-3.0, -0.2, 0.0, 0.4, 7.5] {
            let e = fam.envelope(0.0, &[0.0], y, &[0.0]);
            assert_eq!(e.value, y.abs());
            let oracle = brute_force_1d(|u| u.abs(), 2.0, y, 20.0, 1e-3);
            assert!((e.value - oracle).abs() < 1e-9);
        }
        // without the declared constant the grid search still lands on |y|
        let blind = abs.with_lipschitz(None).with_dependence(crate::generators::Dependence {
            y: true,
            z: crate::generators::ZDependence::None,
            y_kinks: vec![],
            z_kinks: vec![],
        });
        let fam = ApproxFamily::new(blind, 2.0, 1, SearchParams::default()).unwrap();
        for y in [-3.0, -0.2, 0.4, 7.5] {
            assert_eq!(fam.envelope(0.0, &[0.0], y, &[0.0]).value, y.abs());
        }
    }

    #[test]
    fn sqrt_closed_form_points() {
        let fam = sqrt_family(2.0);
        assert!((fam.envelope(0.0, &[0.0], 0.1, &[0.0]).value - 0.2).abs() < 1e-12);
        assert!((fam.envelope(0.0, &[0.0], 1.0, &[0.0]).value - 1.0).abs() < 1e-12);
        let oracle = brute_force_1d(|u| u.abs().sqrt(), 2.0, 0.1, 5.0, 1e-5);
        assert!((oracle - 0.2).abs() < 1e-9);
    }

    #[test]
    fn sqrt_chain_at_small_y() {
        let y = 0.01;
        let vals: Vec<f64> = [2.0, 4.0, 8.0]
            .iter()
            .map(|&n| sqrt_family(n).envelope(0.0, &[0.0], y, &[0.0]).value)
            .collect();
        for (v, expect) in vals.iter().zip([0.02, 0.04, 0.08]) {
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
        assert!(vals[2] <= 0.1);
    }

    /// Without kink anchors the search is plain grid refinement; it must still
    /// agree with exhaustive minimization on smooth non-convex bases.
    #[test]
    fn grid_search_matches_brute_force_without_anchors() {
        let wavy = |u: f64| (3.0 * u).sin() + 0.5 * u.abs();
        let g = GeneratorSpec::new("wavy", move |_, _, y, _| wavy(y))
            .with_growth(0.5, crate::generators::BoundSpec::One)
            .with_dependence(crate::generators::Dependence {
                y: true,
                z: crate::generators::ZDependence::None,
                y_kinks: vec![],
                z_kinks: vec![],
            });
        for n in [1.0, 2.0, 4.0] {
            let fam = ApproxFamily::new(g.clone(), n, 1, SearchParams::default()).unwrap();
            for j in 0..41 {
                let y = -4.0 + 0.2 * j as f64;
                let got = fam.envelope(0.0, &[0.0], y, &[0.0]).value;
                let oracle = brute_force_1d(wavy, n, y, 30.0, 1e-4);
                assert!((got - oracle).abs() < 1e-3, "n={n} y={y}: {got} vs {oracle}");
            }
        }
    }

    #[test]
    fn sqrt_z_two_dimensional() {
        let g = make_builtin_generator("sqrt_z", &[]).unwrap();
        let fam = ApproxFamily::new(g, 3.0, 2, SearchParams::default()).unwrap();
        for z in [[0.01, -0.02], [0.3, 0.4], [-1.0, 2.0]] {
            let r = euclid(&z);
            let e = fam.envelope(0.0, &[0.0, 0.0], 0.0, &z);
            assert!((e.value - r.sqrt().min(3.0 * r)).abs() < 1e-12, "{z:?}: {}", e.value);
        }
    }

    #[test]
    fn dimension_guard() {
        let g = GeneratorSpec::new("full", |_, _, y, z| (y + z.iter().sum::<f64>()).abs().sqrt())
            .with_growth(1.0, crate::generators::BoundSpec::One);
        assert!(matches!(
            ApproxFamily::new(g.clone(), 2.0, 3, SearchParams::default()),
            Err(BsdeError::SearchDimension { dims: 4 })
        ));
        assert!(ApproxFamily::new(g, 2.0, 2, SearchParams::default()).is_ok());
    }

    #[test]
    fn index_must_exceed_growth() {
        let g = make_builtin_generator("sqrt_y", &[]).unwrap();
        assert!(ApproxFamily::new(g.clone(), 1.0, 1, SearchParams::default()).is_err());
        assert!(ApproxFamily::new(g, 1.0001, 1, SearchParams::default()).is_ok());
    }

    #[test]
    fn generator_wrapper_metadata() {
        let f2 = sqrt_family(2.0).generator();
        assert_eq!(f2.lipschitz(), Some(2.0));
        assert_eq!(f2.growth(), 1.0);
        assert_eq!(f2.bound(0.3, &[0.0]), 1.0);
        assert!((f2.eval(0.0, &[0.0], 0.1, &[0.0]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn suite_on_zero_generator() {
        let g = make_builtin_generator("zero", &[]).unwrap();
        let mut s = BoxSampler::new(5, 1.0, 1, 5.0);
        let r = lemma31_suite(&g, 1, &[1.0, 2.0], 200, &mut s, SearchParams::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.growth.worst_margin, 0.0);
        assert_eq!(r.monotone.worst_margin, 0.0);
        assert!(r.convergence.iter().all(|row| row.max_gap == 0.0));
    }

    #[test]
    fn suite_on_linear_is_exact() {
        let g = make_builtin_generator("linear_y", &[1.0]).unwrap();
        let mut s = BoxSampler::new(6, 1.0, 1, 5.0);
        let r = lemma31_suite(&g, 1, &[2.0, 3.0], 500, &mut s, SearchParams::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.max_tol, 0.0);
    }

    #[test]
    fn suite_rejects_bad_indices() {
        let g = make_builtin_generator("sqrt_y", &[]).unwrap();
        let mut s = BoxSampler::new(6, 1.0, 1, 5.0);
        assert!(lemma31_suite(&g, 1, &[0.5, 2.0], 10, &mut s, SearchParams::default()).is_err());
        assert!(lemma31_suite(&g, 1, &[4.0, 2.0], 10, &mut s, SearchParams::default()).is_err());
    }

    #[test]
    fn tabulation_endpoints() {
        let rows = tabulate_envelope(&sqrt_family(2.0), 0.0, &[0.0], &[0.0], -2.0, 2.0, 5);
        assert_eq!(rows.iter().map(|r| r.y).collect::<Vec<_>>(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(rows.iter().all(|r| r.f_n <= r.f));
    }
}
