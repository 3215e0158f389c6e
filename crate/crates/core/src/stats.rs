//! Jackknife estimates over per-realization observables.
//!
//! Sums always run in realization order, so an estimate depends only on the
//! sample values and never on how they were produced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// `|value − target|` in units of the standard error. Infinite when the
    /// error is zero and the values differ.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        let d = (self.value - target).abs();
        if d == 0.0 {
            0.0
        } else if self.stderr > 0.0 {
            d / self.stderr
        } else {
            f64::INFINITY
        }
    }
}

/// Column-major table of observables, one row per realization.
#[derive(Debug, Clone)]
pub struct Samples {
    columns: Vec<Vec<f64>>,
}

impl Samples {
    pub fn new(columns: Vec<Vec<f64>>) -> Self {
        debug_assert!(columns.windows(2).all(|w| w[0].len() == w[1].len()));
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn push_column(&mut self, column: Vec<f64>) -> usize {
        self.columns.push(column);
        self.columns.len() - 1
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.columns[j].iter().sum::<f64>() / self.len() as f64
    }

    /// Jackknife estimate of `f(means of cols)`. The reported value is the
    /// full-sample plug-in estimate.
    pub fn jackknife(&self, cols: &[usize], f: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let sums: Vec<f64> = cols.iter().map(|&j| self.columns[j].iter().sum()).collect();
        let nf = n as f64;
        let full: Vec<f64> = sums.iter().map(|s| s / nf).collect();
        let value = f(&full);

        let mut loo = vec![0.0; cols.len()];
        let mut thetas = Vec::with_capacity(n);
        for i in 0..n {
            for (k, &j) in cols.iter().enumerate() {
                loo[k] = (sums[k] - self.columns[j][i]) / (nf - 1.0);
            }
            thetas.push(f(&loo));
        }
        let mean = thetas.iter().sum::<f64>() / nf;
        let ss: f64 = thetas.iter().map(|t| (t - mean) * (t - mean)).sum();
        Ok(Estimate {
            value,
            stderr: ((nf - 1.0) / nf * ss).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jackknife_of_mean_is_classical_error() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let s = Samples::new(vec![x]);
        let e = s.jackknife(&[0], |m| m[0]).unwrap();
        assert_relative_eq!(e.value, mean, max_relative = 1e-14);
        assert_relative_eq!(e.stderr, (var / n).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let s = Samples::new(vec![vec![1.0]]);
        assert!(matches!(
            s.jackknife(&[0], |m| m[0]),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn two_samples_finite() {
        let s = Samples::new(vec![vec![1.0, 3.0]]);
        let e = s.jackknife(&[0], |m| m[0]).unwrap();
        assert_eq!(e.value, 2.0);
        assert_relative_eq!(e.stderr, 1.0);
    }

    #[test]
    fn sigmas() {
        let e = Estimate {
            value: 1.5,
            stderr: 0.25,
        };
        assert_relative_eq!(e.sigmas_from(1.0), 2.0);
        assert_eq!(Estimate::exact(1.0).sigmas_from(1.0), 0.0);
        assert!(Estimate::exact(1.0).sigmas_from(2.0).is_infinite());
    }
}
