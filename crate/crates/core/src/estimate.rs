use serde::{Deserialize, Serialize};

/// A statistic with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        Self { value, stderr }
    }

    /// Mean of per-sub-ensemble statistics, with the spread of those
    /// statistics divided by `sqrt(K)` as the error.
    pub fn from_subensembles(stats: &[f64]) -> Self {
        let (mean, sd) = mean_sd(stats);
        let k = stats.len() as f64;
        Self::new(mean, sd / k.sqrt())
    }

    /// Distance to `target` in units of standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.stderr
    }

    pub fn within(&self, target: f64, n_sigma: f64) -> bool {
        (self.value - target).abs() <= n_sigma * self.stderr
    }
}

/// Sample mean and (n-1)-normalised standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Sub-ensemble count for `n` samples: 100, or 10 below 200 samples.
pub fn subensemble_count(n: usize) -> usize {
    if n >= 200 {
        100
    } else {
        10.min(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_basic() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_stats_have_zero_error() {
        let e = Estimate::from_subensembles(&[0.5; 10]);
        assert_eq!(e, Estimate::new(0.5, 0.0));
    }

    #[test]
    fn subensemble_fallback() {
        assert_eq!(subensemble_count(100_000), 100);
        assert_eq!(subensemble_count(199), 10);
        assert_eq!(subensemble_count(4), 4);
    }
}
