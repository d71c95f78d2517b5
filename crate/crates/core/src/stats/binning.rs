use serde::{Deserialize, Serialize};

use super::{Result, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// 1-based bin per input value.
    pub labels: Vec<usize>,
    /// `n_bins + 1` edges from min to max.
    pub edges: Vec<f64>,
}

impl Binning {
    pub fn interior_edges(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }
}

/// Equal-width bins between the observed min and max. Intervals are
/// `(lo, hi]`, except the first which also contains the minimum.
pub fn equal_width_bins(values: &[f64], n_bins: usize) -> Result<Binning> {
    if n_bins == 0 {
        return Err(StatsError::NoBins);
    }
    if values.is_empty() {
        return Err(StatsError::NoValues);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("binned values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(StatsError::ZeroRange(min));
    }
    let width = (max - min) / n_bins as f64;
    let mut edges: Vec<f64> = (0..=n_bins).map(|i| min + i as f64 * width).collect();
    edges[n_bins] = max;
    let labels = values
        .iter()
        .map(|&v| {
            // first edge >= v, at least bin 1
            (1..=n_bins).find(|&i| v <= edges[i]).unwrap_or(n_bins)
        })
        .collect();
    Ok(Binning { labels, edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_spacing() {
        let values: Vec<f64> = (0..=10).map(f64::from).collect();
        let b = equal_width_bins(&values, 5).unwrap();
        for w in b.edges.windows(2) {
            assert!((w[1] - w[0] - 2.0).abs() < 1e-12);
        }
        // (lo, hi] except the first bin, which holds the minimum
        assert_eq!(b.labels, vec![1, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
    }

    #[test]
    fn errors() {
        assert!(matches!(equal_width_bins(&[1.0, 1.0], 5), Err(StatsError::ZeroRange(_))));
        assert!(matches!(equal_width_bins(&[], 5), Err(StatsError::NoValues)));
        assert!(matches!(equal_width_bins(&[0.0, 1.0], 0), Err(StatsError::NoBins)));
        assert!(matches!(equal_width_bins(&[0.0, f64::NAN], 2), Err(StatsError::NonFinite(_))));
    }
}
