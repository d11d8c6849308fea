//! Batch-means summaries shared by the diagnostics.

use serde::Serialize;

pub const DEFAULT_BLOCKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample mean with a standard error from contiguous block means.
///
/// Sums run serially in path order so the result is schedule independent.
pub fn batch_means(values: &[f64], blocks: usize) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: 0.0,
            std_error: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = blocks.clamp(1, n);
    if b < 2 {
        return MeanEstimate {
            mean,
            std_error: 0.0,
        };
    }
    let block_means: Vec<f64> = (0..b)
        .map(|j| {
            let chunk = &values[j * n / b..(j + 1) * n / b];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let bm = block_means.iter().sum::<f64>() / b as f64;
    let var = block_means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (b - 1) as f64;
    MeanEstimate {
        mean,
        std_error: (var / b as f64).sqrt(),
    }
}

/// Fraction of `Σ values` contributed by the largest `top` fraction of entries.
pub fn top_share(values: &[f64], top: f64) -> f64 {
    let total: f64 = values.iter().sum();
    if values.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let k = ((values.len() as f64 * top).ceil() as usize).clamp(1, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[..k].iter().sum::<f64>() / total
}

/// Empirical quantile by nearest rank on a sorted copy.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_error() {
        let e = batch_means(&[3.0; 100], DEFAULT_BLOCKS);
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn tiny_samples() {
        assert_eq!(batch_means(&[], 20).mean, 0.0);
        let e = batch_means(&[2.0], 20);
        assert_eq!((e.mean, e.std_error), (2.0, 0.0));
        let e = batch_means(&[1.0, 3.0], 20);
        assert_eq!(e.mean, 2.0);
        assert!((e.std_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn top_share_of_spike() {
        let mut v = vec![0.0; 99];
        v.push(1.0);
        assert_eq!(top_share(&v, 0.01), 1.0);
        assert!((top_share(&[1.0; 100], 0.01) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 1.0), 10.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
    }
}
