//! Scale-invariant recovery error between weight vectors.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("ground-truth weight vector must be nonzero")]
    ZeroTruth,
    #[error("dimension mismatch: estimate has {0} entries, truth has {1}")]
    DimensionMismatch(usize, usize),
}

/// `e_ω = inf_{c > 0} ‖c ω̂ - ω*‖ / ‖ω*‖`, evaluated in closed form.
///
/// The unconstrained minimizer is `c = ⟨ω̂, ω*⟩ / ‖ω̂‖²`; clamping it at
/// zero handles anti-aligned estimates, where the infimum value is 1.
/// A zero estimate also scores 1. The result is invariant under positive
/// scaling of the estimate.
pub fn recovery_error(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64, MetricError> {
    if estimate.len() != truth.len() {
        return Err(MetricError::DimensionMismatch(estimate.len(), truth.len()));
    }
    let truth_norm = truth.norm();
    if truth_norm == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    let est_sq = estimate.norm_squared();
    if est_sq == 0.0 {
        return Ok(1.0);
    }
    let c = (estimate.dot(truth) / est_sq).max(0.0);
    if c == 0.0 {
        return Ok(1.0);
    }
    Ok((c * estimate - truth).norm() / truth_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn zero_at_the_truth_and_under_scaling() {
        let truth = dvector![0.507, 0.845, 0.169];
        assert_eq!(recovery_error(&truth, &truth).unwrap(), 0.0);
        let scaled = 7.0 * truth.clone();
        assert!(recovery_error(&scaled, &truth).unwrap() < 1e-15);
    }

    #[test]
    fn scale_invariance_is_exact() {
        let truth = dvector![0.507, 0.845, 0.169];
        let estimate = dvector![0.4, 0.9, 0.3];
        let base = recovery_error(&estimate, &truth).unwrap();
        for c in [0.001, 0.5, 3.0, 1e6] {
            let e = recovery_error(&(c * estimate.clone()), &truth).unwrap();
            assert!((e - base).abs() < 1e-14);
        }
    }

    #[test]
    fn anti_aligned_estimates_score_one() {
        let truth = dvector![1.0, 1.0];
        assert_eq!(recovery_error(&dvector![-1.0, -1.0], &truth).unwrap(), 1.0);
        assert_eq!(recovery_error(&dvector![0.0, 0.0], &truth).unwrap(), 1.0);
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(recovery_error(&dvector![1.0], &dvector![0.0]).is_err());
        assert!(recovery_error(&dvector![1.0, 2.0], &dvector![1.0]).is_err());
    }
}
