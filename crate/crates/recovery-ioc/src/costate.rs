//! Costate recursion and the stationarity residual: the optimality
//! oracle used to validate forward solves and kernel claims.
//!
//! For a free-terminal optimum of `Σ_k ω'φ(x_k, u_k)` the multipliers
//! of the dynamics constraints satisfy the backward recursion
//!
//! ```text
//! λ_T = φ_x'(x_T, u_T) ω
//! λ_k = f_x'(x_k, u_{k+1}) λ_{k+1} + φ_x'(x_k, u_k) ω
//! ```
//!
//! and the input rows `f_u'(x_{k-1}, u_k) λ_k + φ_u'(x_k, u_k) ω = 0`
//! for every `k`. The largest violation of the input rows over the
//! horizon is the stationarity residual: zero (to solver tolerance) on
//! optimal data, order-one on perturbed data.

use nalgebra::DVector;

use crate::dynamics::DynamicalSystem;
use crate::features::FeatureSet;
use crate::trajectory::Trajectory;

/// Backward recursion for `λ_1..λ_T` under the free-terminal convention.
pub fn compute_costates(
    trajectory: &Trajectory,
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    omega: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let horizon = trajectory.horizon();
    assert!(horizon >= 1, "empty trajectory");
    assert_eq!(omega.len(), features.len(), "weight count");
    let mut costates = vec![DVector::zeros(system.state_dim()); horizon];
    let grad_x = |k: usize| {
        features
            .jacobian_x(trajectory.state(k), trajectory.input(k))
            .transpose()
            * omega
    };
    costates[horizon - 1] = grad_x(horizon);
    for k in (1..horizon).rev() {
        let fx = system.jacobian_x(trajectory.state(k), trajectory.input(k + 1));
        costates[k - 1] = fx.transpose() * &costates[k] + grad_x(k);
    }
    costates
}

/// `max_k ‖f_u' λ_k + φ_u' ω‖_∞` with `λ` from [`compute_costates`].
pub fn stationarity_residual(
    trajectory: &Trajectory,
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    omega: &DVector<f64>,
) -> f64 {
    let costates = compute_costates(trajectory, system, features, omega);
    (1..=trajectory.horizon())
        .map(|k| {
            let fu = system.jacobian_u(trajectory.state(k - 1), trajectory.input(k));
            let pu = features.jacobian_u(trajectory.state(k), trajectory.input(k));
            (fu.transpose() * &costates[k - 1] + pu.transpose() * omega).amax()
        })
        .fold(0.0, f64::max)
}
