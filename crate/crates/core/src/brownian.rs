//! Seeded batches of discrete Brownian paths.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{BsdeError, Result};
use crate::grid::TimeGrid;
use crate::rng::PathNormals;

pub const MAGIC: &[u8; 4] = b"BSDE";
pub const FORMAT_VERSION: u32 = 1;

/// `M` independent `d`-dimensional Brownian paths on a uniform grid.
///
/// Only the increments are stored (path-major: path, step, coordinate);
/// levels are rebuilt on demand with `W_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBatch {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    increments: Vec<f64>,
}

/// Identity of a batch; two batches with equal fingerprints are bit-identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchFingerprint {
    pub seed: u64,
    pub dim: usize,
    pub paths: usize,
    pub steps: usize,
    pub horizon_bits: u64,
}

pub fn simulate_paths(grid: TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<BrownianBatch> {
    if dim == 0 {
        return Err(BsdeError::config("d", "dimension must be at least 1"));
    }
    if paths == 0 {
        return Err(BsdeError::config("M", "path count must be at least 1"));
    }
    let steps = grid.steps();
    let scale = grid.dt().sqrt();
    let mut increments = vec![0.0; paths * steps * dim];
    increments
        .par_chunks_mut(steps * dim)
        .enumerate()
        .for_each(|(m, path)| {
            let mut normals = PathNormals::new(seed, m as u64, dim, 0);
            for step in path.chunks_exact_mut(dim) {
                normals.next_step(step);
                step.iter_mut().for_each(|x| *x *= scale);
            }
        });
    Ok(BrownianBatch {
        grid,
        dim,
        paths,
        seed,
        increments,
    })
}

impl BrownianBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fingerprint(&self) -> BatchFingerprint {
        BatchFingerprint {
            seed: self.seed,
            dim: self.dim,
            paths: self.paths,
            steps: self.grid.steps(),
            horizon_bits: self.grid.horizon().to_bits(),
        }
    }

    /// All increments, path-major.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `ΔW[m][i]`; panics on out-of-range indices.
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let start = (m * self.steps() + i) * self.dim;
        &self.increments[start..start + self.dim]
    }

    /// `W[m][i] = Σ_{j<i} ΔW[m][j]`.
    pub fn path_value(&self, m: usize, i: usize) -> Result<Vec<f64>> {
        if m >= self.paths {
            return Err(BsdeError::OutOfRange {
                what: "path index",
                index: m,
                limit: self.paths,
            });
        }
        if i > self.steps() {
            return Err(BsdeError::OutOfRange {
                what: "time index",
                index: i,
                limit: self.steps() + 1,
            });
        }
        let mut w = vec![0.0; self.dim];
        for j in 0..i {
            for (acc, dw) in w.iter_mut().zip(self.increment(m, j)) {
                *acc += dw;
            }
        }
        Ok(w)
    }

    /// Every level `W[m][i]` for `i = 0..=N`, laid out as (path, node, coordinate).
    pub fn levels(&self) -> Vec<f64> {
        let (steps, dim) = (self.steps(), self.dim);
        let mut out = vec![0.0; self.paths * (steps + 1) * dim];
        out.par_chunks_mut((steps + 1) * dim)
            .enumerate()
            .for_each(|(m, path)| {
                for i in 0..steps {
                    let dw = self.increment(m, i);
                    for k in 0..dim {
                        path[(i + 1) * dim + k] = path[i * dim + k] + dw[k];
                    }
                }
            });
        out
    }

    /// Writes the little-endian binary dump (header then increments).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.paths as u64).to_le_bytes())?;
        out.write_all(&(self.steps() as u64).to_le_bytes())?;
        out.write_all(&self.grid.horizon().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.increments.len() * 8);
        for x in &self.increments {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(BsdeError::Format("bad magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(BsdeError::Format(format!("unsupported version {version}")));
        }
        let mut read_u64 = || -> Result<u64> {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let dim = read_u64()? as usize;
        let paths = read_u64()? as usize;
        let steps = read_u64()? as usize;
        let horizon = f64::from_bits(read_u64()?);
        let seed = read_u64()?;
        let grid = TimeGrid::new(horizon, steps)?;
        let len = dim
            .checked_mul(paths)
            .and_then(|x| x.checked_mul(steps))
            .ok_or_else(|| BsdeError::Format("header sizes overflow".into()))?;
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        if raw.len() != len * 8 {
            return Err(BsdeError::Format(format!(
                "expected {} payload bytes, found {}",
                len * 8,
                raw.len()
            )));
        }
        let increments = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(BrownianBatch {
            grid,
            dim,
            paths,
            seed,
            increments,
        })
    }

    /// Builds a batch from explicit increments; used for hand-made test paths.
    pub fn from_increments(grid: TimeGrid, dim: usize, seed: u64, increments: Vec<f64>) -> Result<Self> {
        let per_path = grid.steps() * dim;
        if dim == 0 || increments.is_empty() || !increments.len().is_multiple_of(per_path) {
            return Err(BsdeError::config(
                "increments",
                "length must be a positive multiple of N * d",
            ));
        }
        Ok(BrownianBatch {
            grid,
            dim,
            paths: increments.len() / per_path,
            seed,
            increments,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn starts_at_zero() {
        let b = simulate_paths(make_grid(1.0, 8).unwrap(), 2, 3, 1).unwrap();
        assert_eq!(b.path_value(2, 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn telescoping_sum() {
        let grid = make_grid(1.0, 2).unwrap();
        let b = BrownianBatch::from_increments(grid, 1, 0, vec![0.25, -1.5]).unwrap();
        assert_eq!(b.path_value(0, 2).unwrap(), vec![0.25 - 1.5]);
        assert_eq!(b.levels(), vec![0.0, 0.25, 0.25 - 1.5]);
    }

    #[test]
    fn index_bounds() {
        let b = simulate_paths(make_grid(1.0, 4).unwrap(), 1, 5, 1).unwrap();
        assert!(b.path_value(5, 0).is_err());
        assert!(b.path_value(0, 5).is_err());
        assert!(b.path_value(4, 4).is_ok());
    }

    #[test]
    fn binary_round_trip() {
        let b = simulate_paths(make_grid(0.7, 5).unwrap(), 2, 9, 42).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BSDE");
        assert_eq!(buf.len(), 48 + 2 * 9 * 5 * 8);
        let back = BrownianBatch::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn truncated_dump_rejected() {
        let b = simulate_paths(make_grid(1.0, 2).unwrap(), 1, 2, 3).unwrap();
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(BrownianBatch::read_from(buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(BrownianBatch::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn subset_reproducible_in_isolation() {
        let grid = make_grid(1.0, 6).unwrap();
        let big = simulate_paths(grid, 2, 40, 9).unwrap();
        let small = simulate_paths(grid, 2, 10, 9).unwrap();
        assert_eq!(&big.increments()[..small.increments().len()], small.increments());
    }
}
