//! Observation samples: per-time-step Jacobian bundles consumed by the
//! recovery machinery and the KKT baseline.
//!
//! The sample at time `k` carries four evaluated Jacobians:
//!
//! - `px`, `pu`: feature Jacobians at the observed pair `(x_k, u_k)`;
//! - `fx`: dynamics Jacobian `∂f/∂x` associated with `x_k`;
//! - `fu`: dynamics Jacobian `∂f/∂u` associated with `u_k`.
//!
//! Two evaluation policies are offered for the dynamics Jacobians. With
//! [`JacobianPolicy::TransitionPoint`] each Jacobian is evaluated at the
//! argument pair of the transition it belongs to — `∂f/∂x_k` at
//! `(x_k, u_{k+1})` and `∂f/∂u_k` at `(x_{k-1}, u_k)` — which makes the
//! stationarity rows of a discrete-time optimum hold exactly on sampled
//! data. [`JacobianPolicy::SamplePoint`] evaluates everything at
//! `(x_k, u_k)`; for constant-Jacobian systems the two coincide, and
//! for slowly varying inputs they differ by `O(Δu)`.
//!
//! At the trajectory terminal `k = T` there is no outgoing transition
//! and `∂f/∂x_T` is fixed to the identity; it pairs with the convention
//! that the costate beyond the horizon is zero.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::DynamicalSystem;
use crate::features::FeatureSet;
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("window [{t}, {end}] outside trajectory times [1, {horizon}]")]
    WindowOutOfRange { t: usize, end: usize, horizon: usize },
    #[error("empty window")]
    EmptyWindow,
    #[error("system dims ({n}, {m}) do not match trajectory dims ({tn}, {tm})")]
    DimensionMismatch { n: usize, m: usize, tn: usize, tm: usize },
}

/// Where the dynamics Jacobians of a sample are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianPolicy {
    /// Evaluate each Jacobian at the transition that uses it.
    #[default]
    TransitionPoint,
    /// Evaluate everything at the observed pair `(x_k, u_k)`.
    SamplePoint,
}

/// Evaluated Jacobians for one observation time.
#[derive(Debug, Clone)]
pub struct ObservationSample {
    pub time: usize,
    /// `∂f/∂x` at time `k`, `n×n` (identity at `k = T`).
    pub fx: DMatrix<f64>,
    /// `∂f/∂u` at time `k`, `n×m`.
    pub fu: DMatrix<f64>,
    /// `∂φ/∂x` at `(x_k, u_k)`, `r×n`.
    pub px: DMatrix<f64>,
    /// `∂φ/∂u` at `(x_k, u_k)`, `r×m`.
    pub pu: DMatrix<f64>,
}

impl ObservationSample {
    pub fn state_dim(&self) -> usize {
        self.fx.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.fu.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.px.nrows()
    }
}

/// Builds the sample for a single observed pair, with all Jacobians at
/// `(x, u)`. Suitable when no neighboring data exists.
pub fn point_sample(
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    time: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> ObservationSample {
    ObservationSample {
        time,
        fx: system.jacobian_x(x, u),
        fu: system.jacobian_u(x, u),
        px: features.jacobian_x(x, u),
        pu: features.jacobian_u(x, u),
    }
}

/// Builds the sample for time `k` of a trajectory (`1 ≤ k ≤ T`).
pub fn sample_at(
    trajectory: &Trajectory,
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    k: usize,
    policy: JacobianPolicy,
) -> ObservationSample {
    let horizon = trajectory.horizon();
    assert!(k >= 1 && k <= horizon, "sample time out of range");
    let n = system.state_dim();
    let x = trajectory.state(k);
    let u = trajectory.input(k);
    let (fx, fu) = match policy {
        JacobianPolicy::SamplePoint => {
            let fx = if k == horizon {
                DMatrix::identity(n, n)
            } else {
                system.jacobian_x(x, u)
            };
            (fx, system.jacobian_u(x, u))
        }
        JacobianPolicy::TransitionPoint => {
            let fx = if k == horizon {
                DMatrix::identity(n, n)
            } else {
                system.jacobian_x(x, trajectory.input(k + 1))
            };
            let fu = system.jacobian_u(trajectory.state(k - 1), u);
            (fx, fu)
        }
    };
    ObservationSample {
        time: k,
        fx,
        fu,
        px: features.jacobian_x(x, u),
        pu: features.jacobian_u(x, u),
    }
}

/// Samples for the window `k = t .. t+l-1`.
pub fn window_samples(
    trajectory: &Trajectory,
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    t: usize,
    l: usize,
    policy: JacobianPolicy,
) -> Result<Vec<ObservationSample>, ObservationError> {
    if l == 0 {
        return Err(ObservationError::EmptyWindow);
    }
    let horizon = trajectory.horizon();
    let end = t + l - 1;
    if t < 1 || end > horizon {
        return Err(ObservationError::WindowOutOfRange { t, end, horizon });
    }
    if system.state_dim() != trajectory.state_dim() || system.input_dim() != trajectory.input_dim()
    {
        return Err(ObservationError::DimensionMismatch {
            n: system.state_dim(),
            m: system.input_dim(),
            tn: trajectory.state_dim(),
            tm: trajectory.input_dim(),
        });
    }
    Ok((t..=end)
        .map(|k| sample_at(trajectory, system, features, k, policy))
        .collect())
}

/// Samples for the whole trajectory, `k = 1 .. T`.
pub fn trajectory_samples(
    trajectory: &Trajectory,
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    policy: JacobianPolicy,
) -> Vec<ObservationSample> {
    window_samples(trajectory, system, features, 1, trajectory.horizon(), policy)
        .expect("full window always valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lti_system;
    use crate::features::{monomial_features, Monomial};
    use nalgebra::{dmatrix, dvector};

    fn setup() -> (crate::dynamics::Lti, FeatureSet, Trajectory) {
        let sys = lti_system(dmatrix![-1.0, 1.0; 0.0, 1.0], dmatrix![1.0; 3.0]).unwrap();
        let fs = monomial_features(
            &[Monomial::state(0, 2), Monomial::state(1, 2), Monomial::input(0, 2)],
            2,
            1,
        )
        .unwrap();
        let traj = Trajectory::new(
            vec![dvector![2.0, -2.0], dvector![-3.0, 1.0], dvector![4.3, 1.3]],
            vec![dvector![1.0], dvector![0.1]],
        )
        .unwrap();
        (sys, fs, traj)
    }

    #[test]
    fn policies_agree_for_constant_jacobians() {
        let (sys, fs, traj) = setup();
        let a = window_samples(&traj, &sys, &fs, 1, 1, JacobianPolicy::TransitionPoint).unwrap();
        let b = window_samples(&traj, &sys, &fs, 1, 1, JacobianPolicy::SamplePoint).unwrap();
        assert_eq!(a[0].fx, b[0].fx);
        assert_eq!(a[0].fu, b[0].fu);
        // Feature Jacobians at (x_1, u_1) = ([-3, 1], 1).
        assert_eq!(a[0].px, dmatrix![-6.0, 0.0; 0.0, 2.0; 0.0, 0.0]);
        assert_eq!(a[0].pu, dmatrix![0.0; 0.0; 2.0]);
    }

    #[test]
    fn terminal_sample_uses_identity() {
        let (sys, fs, traj) = setup();
        let samples =
            window_samples(&traj, &sys, &fs, 1, 2, JacobianPolicy::TransitionPoint).unwrap();
        assert_eq!(samples[1].time, 2);
        assert_eq!(samples[1].fx, DMatrix::identity(2, 2));
    }

    #[test]
    fn window_bounds_are_checked() {
        let (sys, fs, traj) = setup();
        assert!(window_samples(&traj, &sys, &fs, 0, 1, JacobianPolicy::SamplePoint).is_err());
        assert!(window_samples(&traj, &sys, &fs, 1, 3, JacobianPolicy::SamplePoint).is_err());
        assert!(window_samples(&traj, &sys, &fs, 1, 0, JacobianPolicy::SamplePoint).is_err());
    }
}
