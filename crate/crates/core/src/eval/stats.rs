//! Paired t-test and multiple-comparison correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Mean difference over the standard deviation of the differences.
    pub cohens_d: f64,
}

/// Paired t-test on `xs - ys`. Zero-variance differences give `t = ±∞, p = 0`
/// unless the mean difference is also zero (`t = 0, p = 1`).
pub fn ttest_paired(xs: &[f64], ys: &[f64]) -> Result<TTest> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "paired t-test needs two equal-length samples of at least 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                cohens_d: 0.0,
            }
        } else {
            let inf = f64::INFINITY.copysign(mean);
            TTest {
                t: inf,
                p: 0.0,
                cohens_d: inf,
            }
        });
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Contract(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        cohens_d: mean / sd,
    })
}

/// Bonferroni-adjusted p-value for `m` comparisons.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let r = ttest_paired(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p, r.cohens_d), (0.0, 1.0, 0.0));
    }

    #[test]
    fn constant_difference_is_degenerate() {
        let r = ttest_paired(&[2.0; 4], &[1.0; 4]).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert_eq!(r.p, 0.0);
    }

    #[test]
    fn symmetric_under_swap() {
        let xs = [1.0, 2.5, 2.0, 4.0];
        let ys = [0.5, 2.0, 2.7, 3.0];
        let a = ttest_paired(&xs, &ys).unwrap();
        let b = ttest_paired(&ys, &xs).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn rejects_short_or_ragged_input() {
        assert!(ttest_paired(&[1.0], &[2.0]).is_err());
        assert!(ttest_paired(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn bonferroni_caps_at_one() {
        assert_eq!(bonferroni(0.01, 3), 0.03);
        assert_eq!(bonferroni(0.5, 3), 1.0);
    }
}
