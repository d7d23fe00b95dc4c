//! Monte Carlo accuracy metrics and five-number-plus-mean summaries.

use serde::Serialize;

use crate::error::{Error, Result};

fn check(estimates: &[f64]) -> Result<()> {
    if estimates.len() < 2 {
        return Err(Error::InsufficientRuns {
            required: 2,
            got: estimates.len(),
        });
    }
    Ok(())
}

fn check_total(t: f64) -> Result<()> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::ZeroTotal);
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance, divisor I − 1.
fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Relative bias `(mean − t) / t`.
pub fn metric_rb(estimates: &[f64], t: f64) -> Result<f64> {
    check(estimates)?;
    check_total(t)?;
    Ok((mean(estimates) - t) / t)
}

/// Relative standard deviation `sd / t`, divisor I − 1.
pub fn metric_rsd(estimates: &[f64], t: f64) -> Result<f64> {
    check(estimates)?;
    check_total(t)?;
    Ok(variance(estimates).sqrt() / t)
}

/// Relative root mean square error `√(Σ(est − t)² / (I − 1)) / t`.
pub fn metric_rrmse(estimates: &[f64], t: f64) -> Result<f64> {
    check(estimates)?;
    check_total(t)?;
    let i = estimates.len() as f64;
    let mse = estimates.iter().map(|e| (e - t) * (e - t)).sum::<f64>() / (i - 1.0);
    Ok(mse.sqrt() / t)
}

/// Variance of `estimates` relative to the variance of `ht_estimates`.
pub fn metric_varrht(estimates: &[f64], ht_estimates: &[f64]) -> Result<f64> {
    check(estimates)?;
    check(ht_estimates)?;
    if estimates.len() != ht_estimates.len() {
        return Err(Error::DimensionMismatch {
            expected: ht_estimates.len(),
            got: estimates.len(),
            context: "estimate series",
        });
    }
    let v_ht = variance(ht_estimates);
    if v_ht == 0.0 {
        return Err(Error::out_of_range("HT variance", 0.0, "must be positive"));
    }
    Ok(variance(estimates) / v_ht)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n − 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientRuns { required: 1, got: 0 });
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        mean: mean(&s),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_example() {
        let e = [9.0, 11.0];
        assert_eq!(metric_rb(&e, 10.0).unwrap(), 0.0);
        assert!((metric_rsd(&e, 10.0).unwrap() - 2f64.sqrt() / 10.0).abs() < 1e-15);
        assert!((metric_rrmse(&e, 10.0).unwrap() - 2f64.sqrt() / 10.0).abs() < 1e-15);
    }

    #[test]
    fn exact_estimates() {
        let e = [5.0; 4];
        assert_eq!(metric_rb(&e, 5.0).unwrap(), 0.0);
        assert_eq!(metric_rsd(&e, 5.0).unwrap(), 0.0);
        assert_eq!(metric_rrmse(&e, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn self_ratio_is_one() {
        let e = [1.0, 4.0, 2.5, 3.0];
        assert_eq!(metric_varrht(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(metric_rb(&[1.0], 1.0), Err(Error::InsufficientRuns { required: 2, got: 1 }));
        assert_eq!(metric_rsd(&[1.0, 2.0], 0.0), Err(Error::ZeroTotal));
        assert!(metric_varrht(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn quartiles_interpolate() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.mean, s.q3, s.max), (1.0, 1.75, 2.5, 2.5, 3.25, 4.0));
        let s = summarize(&[7.0]).unwrap();
        assert_eq!((s.q1, s.q3), (7.0, 7.0));
    }

    proptest! {
        // with divisor I − 1 throughout, mean squared error splits as
        // variance plus squared bias times I / (I − 1)
        #[test]
        fn rrmse_decomposition(e in proptest::collection::vec(-100.0f64..100.0, 2..50), t in 1.0f64..50.0) {
            let i = e.len() as f64;
            let rb = metric_rb(&e, t).unwrap();
            let rsd = metric_rsd(&e, t).unwrap();
            let rrmse = metric_rrmse(&e, t).unwrap();
            let lhs = rrmse * rrmse;
            let rhs = rsd * rsd + rb * rb * i / (i - 1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
            prop_assert!(lhs >= rsd * rsd - 1e-12);
        }
    }
}
