//! Regression quality metrics.
//!
//! Root-mean-square error, mean absolute error, and the coefficient of
//! determination R² = 1 − SS_res/SS_tot. R² is undefined when the target
//! column is constant (SS_tot = 0); that case is reported as an explicit
//! marker rather than a NaN so downstream tables can print it honestly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// One objective's error summary on one partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveMetrics<T> {
    pub rmse: T,
    pub mae: T,
    /// `None` marks an undefined R² (constant target column).
    pub r2: Option<T>,
}

/// Computes RMSE, MAE, and R² for one objective.
pub fn regression_metrics<T: Scalar>(truth: &[T], predicted: &[T]) -> Result<ObjectiveMetrics<T>> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "metrics need matching non-empty vectors, got {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    let n = real::<T>(truth.len() as f64);
    let mut abs_sum = T::zero();
    let mut sq_sum = T::zero();
    let mut mean = T::zero();
    for (&y, &p) in truth.iter().zip(predicted) {
        let d = y - p;
        abs_sum += d.abs();
        sq_sum += d * d;
        mean += y;
    }
    mean = mean / n;
    let mut ss_tot = T::zero();
    for &y in truth {
        let d = y - mean;
        ss_tot += d * d;
    }
    let r2 = if ss_tot > T::zero() {
        Some(T::one() - sq_sum / ss_tot)
    } else {
        None
    };
    Ok(ObjectiveMetrics {
        rmse: (sq_sum / n).sqrt(),
        mae: abs_sum / n,
        r2,
    })
}

/// Test metrics in both unit systems plus the per-epoch validation curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    /// Per-objective metrics on the test partition, physical units.
    pub test: Vec<ObjectiveMetrics<T>>,
    /// The same metrics in normalized (training-scale) units.
    pub test_normalized: Vec<ObjectiveMetrics<T>>,
    /// Per epoch: per-objective validation MSE in normalized units.
    pub validation_curve: Vec<Vec<T>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_score_zero_error_and_unit_r2() {
        let y = [1.0, 2.0, 3.0];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.r2, Some(1.0));
    }

    #[test]
    fn predicting_the_mean_gives_zero_r2() {
        let y = [0.0f64, 1.0, 2.0, 3.0];
        let p = [1.5f64; 4];
        let m = regression_metrics(&y, &p).unwrap();
        assert!((m.r2.unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn hand_computed_two_point_case() {
        let m = regression_metrics(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(m.rmse, 1.0);
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn constant_target_marks_r2_undefined() {
        let m = regression_metrics(&[5.0, 5.0, 5.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.r2, None);
        assert!(m.rmse > 0.0);
    }

    #[test]
    fn r2_never_exceeds_one_and_errors_are_nonnegative() {
        let mut rng = crate::rng::SeededRng::new(4);
        for _ in 0..100 {
            let y: Vec<f64> = (0..16).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let p: Vec<f64> = (0..16).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let m = regression_metrics(&y, &p).unwrap();
            assert!(m.rmse >= 0.0 && m.mae >= 0.0);
            if let Some(r2) = m.r2 {
                assert!(r2 <= 1.0);
            }
        }
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(regression_metrics::<f64>(&[], &[]).is_err());
    }
}
