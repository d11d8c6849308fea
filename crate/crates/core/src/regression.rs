//! Least-squares conditional expectations on a polynomial basis of the
//! current Brownian state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BsdeError, Result};

pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Polynomial,
}

/// Total-degree polynomial basis. Basis functions are products of
/// probabilists' Hermite polynomials of the (optionally standardized)
/// state coordinates, which keeps the normal equations well conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub kind: BasisKind,
    pub degree: usize,
    /// Added to the diagonal of the path-averaged Gram matrix.
    pub ridge: f64,
    pub standardize: bool,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis {
            kind: BasisKind::Polynomial,
            degree: 3,
            ridge: 1e-8,
            standardize: true,
        }
    }
}

impl RegressionBasis {
    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree > MAX_DEGREE {
            return Err(BsdeError::config("basis.degree", format!("must be at most {MAX_DEGREE}")));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(BsdeError::config("basis.ridge", "must be non-negative"));
        }
        Ok(())
    }
}

/// `He_0..=He_degree` at `x`.
fn hermite(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for k in 2..=degree {
        out[k] = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

/// All exponent vectors over `dims` coordinates with total degree `<= degree`,
/// graded then lexicographic.
fn multi_indices(dims: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut current = vec![0; dims];
        fill(&mut out, &mut current, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
    if current.is_empty() {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        fill(out, current, pos + 1, remaining - k);
    }
    current[pos] = 0;
}

fn fill_rows(
    matrix: &mut [f64],
    states: &[f64],
    dim: usize,
    degree: usize,
    active: &[(usize, f64, f64)],
    exponents: &[Vec<usize>],
) {
    let cols = exponents.len();
    let mut herm = vec![vec![0.0; degree + 1]; active.len()];
    for (m, row) in matrix.chunks_exact_mut(cols).enumerate() {
        let x = &states[m * dim..(m + 1) * dim];
        for (h, &(k, mean, sd)) in herm.iter_mut().zip(active) {
            hermite((x[k] - mean) / sd, degree, h);
        }
        for (entry, alpha) in row.iter_mut().zip(exponents) {
            *entry = alpha.iter().zip(&herm).map(|(&a, h)| h[a]).product();
        }
    }
}

/// A factored regression design for one set of states.
///
/// Coordinates that are constant across paths carry no information and are
/// dropped, so at `t = 0` (where `W_0 = 0` on every path) the basis reduces to
/// the constant and the fit is the sample mean.
#[derive(Debug, Clone)]
pub struct Design {
    rows: usize,
    cols: usize,
    dim: usize,
    degree: usize,
    /// `(coordinate, mean, sd)` of each retained coordinate.
    active: Vec<(usize, f64, f64)>,
    exponents: Vec<Vec<usize>>,
    matrix: Vec<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub fitted: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl Design {
    /// `states` holds `M` rows of `dim` coordinates.
    pub fn new(states: &[f64], dim: usize, basis: &RegressionBasis) -> Result<Self> {
        basis.validate()?;
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(BsdeError::config("states", "need M rows of d coordinates"));
        }
        let rows = states.len() / dim;

        let mut active = Vec::new();
        for k in 0..dim {
            let col = states.iter().skip(k).step_by(dim);
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            if hi > lo {
                let (mean, sd) = if basis.standardize {
                    let mean = states.iter().skip(k).step_by(dim).sum::<f64>() / rows as f64;
                    let var = states.iter().skip(k).step_by(dim).map(|x| (x - mean).powi(2)).sum::<f64>()
                        / rows as f64;
                    (mean, var.sqrt())
                } else {
                    (0.0, 1.0)
                };
                active.push((k, mean, sd));
            }
        }

        let exponents = multi_indices(active.len(), basis.degree);
        let cols = exponents.len();
        if rows <= cols {
            return Err(BsdeError::config(
                "M",
                format!("{rows} paths cannot fit {cols} basis functions"),
            ));
        }

        let mut matrix = vec![0.0; rows * cols];
        fill_rows(&mut matrix, states, dim, basis.degree, &active, &exponents);

        let scale = 1.0 / rows as f64;
        let mut gram = DMatrix::<f64>::zeros(cols, cols);
        for row in matrix.chunks_exact(cols) {
            for a in 0..cols {
                let ra = row[a];
                for b in a..cols {
                    gram[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..cols {
            for b in a..cols {
                let v = gram[(a, b)] * scale;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
            gram[(a, a)] += basis.ridge;
        }
        let diag: Vec<f64> = (0..cols).map(|a| gram[(a, a)]).collect();
        let chol = gram
            .cholesky()
            .ok_or_else(|| BsdeError::RankDeficient("Gram matrix not positive definite".into()))?;
        if basis.ridge == 0.0 {
            let l = chol.l_dirty();
            for (a, d) in diag.iter().enumerate() {
                if l[(a, a)] * l[(a, a)] <= 1e-12 * d.max(f64::MIN_POSITIVE) {
                    return Err(BsdeError::RankDeficient(format!("basis function {a} is collinear")));
                }
            }
        }
        Ok(Design {
            rows,
            cols,
            dim,
            degree: basis.degree,
            active,
            exponents,
            matrix,
            chol,
        })
    }

    pub fn basis_len(&self) -> usize {
        self.cols
    }

    /// Evaluates the fitted function with `coefficients` at other states,
    /// reusing this design's standardization.
    pub fn predict(&self, coefficients: &[f64], states: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.cols, "one coefficient per basis function");
        let rows = states.len() / self.dim;
        let mut matrix = vec![0.0; rows * self.cols];
        fill_rows(&mut matrix, states, self.dim, self.degree, &self.active, &self.exponents);
        matrix
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(coefficients).map(|(x, b)| x * b).sum())
            .collect()
    }

    pub fn fit(&self, targets: &[f64]) -> Fit {
        assert_eq!(targets.len(), self.rows, "one target per path");
        let scale = 1.0 / self.rows as f64;
        let mut rhs = DVector::<f64>::zeros(self.cols);
        for (row, &y) in self.matrix.chunks_exact(self.cols).zip(targets) {
            for (a, &x) in row.iter().enumerate() {
                rhs[a] += x * y;
            }
        }
        rhs *= scale;
        let beta = self.chol.solve(&rhs);
        let fitted = self
            .matrix
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum())
            .collect();
        Fit {
            fitted,
            coefficients: beta.iter().copied().collect(),
        }
    }
}

/// One-shot regression of `targets` on the basis evaluated at `states`.
pub fn condexp_regress(targets: &[f64], states: &[f64], dim: usize, basis: &RegressionBasis) -> Result<Fit> {
    Ok(Design::new(states, dim, basis)?.fit(targets))
}
