use serde::{Deserialize, Serialize};

use crate::error::{BsdeError, Result};

/// Uniform time grid `t_i = i * T / N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(BsdeError::config("T", format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(BsdeError::config("N", "number of steps must be at least 1"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`; the last node is exactly `T`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}

/// Convenience wrapper matching the `make_grid` operation.
pub fn make_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::new(horizon, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step() {
        let g = make_grid(1.0, 1).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 1.0]);
        assert_eq!(g.dt(), 1.0);
    }

    #[test]
    fn quarter_steps() {
        let g = make_grid(2.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.dt(), 0.5);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(make_grid(1.0, 0).is_err());
        assert!(make_grid(0.0, 4).is_err());
        assert!(make_grid(-1.0, 4).is_err());
        assert!(make_grid(f64::NAN, 4).is_err());
    }

    #[test]
    fn endpoints_exact_for_awkward_horizon() {
        let g = make_grid(0.3, 7).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[7], 0.3);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }
}
