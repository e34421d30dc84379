//! Discrete-time dynamical systems with analytic Jacobians.
//!
//! The trajectory convention pairs the state `x_k` with the input `u_k`
//! that produced it: `x_{k+1} = f(x_k, u_{k+1})`. All systems here are
//! immutable after construction and safe to evaluate from many threads.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A discrete-time state map `x_{k+1} = f(x_k, u_{k+1})` together with
/// its Jacobians at a point.
pub trait DynamicalSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Next state `f(x, u)`.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `∂f/∂x` at `(x, u)`, `n×n`.
    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;

    /// `∂f/∂u` at `(x, u)`, `n×m`.
    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
}

/// A continuous-time vector field `ẋ = f(x, u)` with analytic Jacobians,
/// ready for Euler discretization.
pub trait ContinuousSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
}

/// Linear time-invariant system `x_{k+1} = A x_k + B u_{k+1}`.
#[derive(Debug, Clone)]
pub struct Lti {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl Lti {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Builds an LTI system, checking that `A` is square and `B` has a
/// matching row count.
pub fn lti_system(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Lti, DynamicsError> {
    if !a.is_square() {
        return Err(DynamicsError::DimensionMismatch(format!(
            "A must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != a.nrows() {
        return Err(DynamicsError::DimensionMismatch(format!(
            "B has {} rows, expected {}",
            b.nrows(),
            a.nrows()
        )));
    }
    Ok(Lti { a, b })
}

impl DynamicalSystem for Lti {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.state_dim(), "state dimension");
        assert_eq!(u.len(), self.input_dim(), "input dimension");
        &self.a * x + &self.b * u
    }

    fn jacobian_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn jacobian_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }
}

/// Forward-Euler discretization `f_d(x, u) = x + Δt f_c(x, u)` of a
/// continuous system. Jacobians follow by linearity:
/// `∂f_d/∂x = I + Δt ∂f_c/∂x` and `∂f_d/∂u = Δt ∂f_c/∂u`.
#[derive(Debug, Clone)]
pub struct EulerDiscretized<S: ContinuousSystem> {
    system: S,
    dt: f64,
}

impl<S: ContinuousSystem> EulerDiscretized<S> {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn continuous(&self) -> &S {
        &self.system
    }
}

pub fn discretize_euler<S: ContinuousSystem>(
    system: S,
    dt: f64,
) -> Result<EulerDiscretized<S>, DynamicsError> {
    if dt <= 0.0 {
        return Err(DynamicsError::NonPositiveTimeStep(dt));
    }
    Ok(EulerDiscretized { system, dt })
}

impl<S: ContinuousSystem> DynamicalSystem for EulerDiscretized<S> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.system.input_dim()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        x + self.dt * self.system.derivative(x, u)
    }

    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim()) + self.dt * self.system.jacobian_x(x, u)
    }

    fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.dt * self.system.jacobian_u(x, u)
    }
}

/// Checks both analytic Jacobians of a system against central finite
/// differences at one point; returns the worse relative error.
pub fn jacobian_check(
    system: &dyn DynamicalSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    let n = system.state_dim();
    let fx = system.jacobian_x(x, u);
    let fu = system.jacobian_u(x, u);
    let fd_x = crate::diff::central_jacobian(|z| system.step(z, u), x, n);
    let fd_u = crate::diff::central_jacobian(|z| system.step(x, z), u, n);
    crate::diff::relative_error(&fx, &fd_x).max(crate::diff::relative_error(&fu, &fd_u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn paper_lti() -> Lti {
        lti_system(dmatrix![-1.0, 1.0; 0.0, 1.0], dmatrix![1.0; 3.0]).unwrap()
    }

    #[test]
    fn lti_step_matches_hand_evaluation() {
        // A x + B u with x = [2, -2], u = 1.
        let sys = paper_lti();
        let next = sys.step(&dvector![2.0, -2.0], &dvector![1.0]);
        assert_eq!(next, dvector![-3.0, 1.0]);
    }

    #[test]
    fn identity_dynamics_fixes_state() {
        let sys = lti_system(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).unwrap();
        let x = dvector![0.7, -3.1];
        assert_eq!(sys.step(&x, &dvector![5.0]), x);
    }

    #[test]
    fn lti_jacobians_are_constant() {
        let sys = paper_lti();
        let jx = sys.jacobian_x(&dvector![9.0, 9.0], &dvector![-4.0]);
        assert_eq!(jx, dmatrix![-1.0, 1.0; 0.0, 1.0]);
        let ju = sys.jacobian_u(&dvector![0.0, 0.0], &dvector![0.0]);
        assert_eq!(ju, dmatrix![1.0; 3.0]);
    }

    #[test]
    fn lti_rejects_bad_shapes() {
        assert!(lti_system(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(lti_system(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn euler_rejects_nonpositive_step() {
        struct Still;
        impl ContinuousSystem for Still {
            fn state_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn derivative(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
                DVector::zeros(1)
            }
            fn jacobian_x(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
            fn jacobian_u(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::zeros(1, 1)
            }
        }
        assert!(discretize_euler(Still, 0.0).is_err());
        assert!(discretize_euler(Still, -0.1).is_err());
        // Zero vector field: the discrete map is the identity.
        let d = discretize_euler(Still, 0.25).unwrap();
        let x = dvector![1.5];
        assert_eq!(d.step(&x, &dvector![2.0]), x);
    }
}
