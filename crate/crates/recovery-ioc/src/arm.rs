//! Two-link arm in the vertical plane.
//!
//! Joint-space model `M(θ)θ̈ + C(θ, θ̇)θ̇ + g(θ) = τ` with the standard
//! closed forms for the inertia matrix, Coriolis matrix and gravity
//! vector. The state-space form uses `x = [θ₁, θ̇₁, θ₂, θ̇₂]` and
//! `u = [τ₁, τ₂]`; all Jacobians are hand-derived.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::dynamics::{ContinuousSystem, DynamicsError};

/// Physical parameters of the arm. All quantities strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmParameters {
    /// Link masses \[kg\].
    pub m1: f64,
    pub m2: f64,
    /// Link lengths \[m\].
    pub l1: f64,
    pub l2: f64,
    /// Joint-to-center-of-mass distances \[m\].
    pub r1: f64,
    pub r2: f64,
    /// Link moments of inertia about the center of mass \[kg·m²\].
    pub i1: f64,
    pub i2: f64,
    /// Gravitational acceleration \[m/s²\].
    pub gravity: f64,
}

impl Default for ArmParameters {
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            r1: 0.5,
            r2: 0.5,
            i1: 0.5,
            i2: 0.5,
            gravity: 9.81,
        }
    }
}

impl ArmParameters {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fields = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("r1", self.r1),
            ("r2", self.r2),
            ("i1", self.i1),
            ("i2", self.i2),
        ];
        for (name, value) in fields {
            if value <= 0.0 {
                return Err(DynamicsError::InvalidParameter(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Two-link arm as a continuous-time system.
#[derive(Debug, Clone)]
pub struct ArmDynamics {
    params: ArmParameters,
    // Lumped coefficients of the closed-form model.
    a1: f64,
    a2: f64,
    a3: f64,
    b1: f64,
    b2: f64,
}

impl ArmDynamics {
    pub fn new(params: ArmParameters) -> Result<Self, DynamicsError> {
        params.validate()?;
        let a1 = params.m1 * params.r1 * params.r1
            + params.m2 * (params.l1 * params.l1 + params.r2 * params.r2)
            + params.i1
            + params.i2;
        let a2 = params.m2 * params.l1 * params.r2;
        let a3 = params.m2 * params.r2 * params.r2 + params.i2;
        let b1 = params.l1 * params.m2 + params.r1 * params.m1;
        let b2 = params.r2 * params.m2;
        Ok(Self {
            params,
            a1,
            a2,
            a3,
            b1,
            b2,
        })
    }

    pub fn params(&self) -> &ArmParameters {
        &self.params
    }

    /// Inertia matrix `M(θ)`; symmetric positive definite for all θ.
    pub fn mass_matrix(&self, theta: &Vector2<f64>) -> Matrix2<f64> {
        let c2 = theta[1].cos();
        let off = self.a3 + self.a2 * c2;
        Matrix2::new(self.a1 + 2.0 * self.a2 * c2, off, off, self.a3)
    }

    /// Coriolis matrix `C(θ, θ̇)`.
    pub fn coriolis_matrix(&self, theta: &Vector2<f64>, theta_dot: &Vector2<f64>) -> Matrix2<f64> {
        let s2 = theta[1].sin();
        Matrix2::new(
            -self.a2 * theta_dot[1] * s2,
            -self.a2 * (theta_dot[0] + theta_dot[1]) * s2,
            self.a2 * theta_dot[0] * s2,
            0.0,
        )
    }

    /// Gravity torque vector `g(θ)`.
    pub fn gravity_torque(&self, theta: &Vector2<f64>) -> Vector2<f64> {
        let g = self.params.gravity;
        let c1 = theta[0].cos();
        let c12 = (theta[0] + theta[1]).cos();
        Vector2::new(self.b1 * g * c1 + self.b2 * g * c12, self.b2 * g * c12)
    }

    /// Inverse dynamics `τ = M θ̈ + C θ̇ + g`.
    pub fn inverse_dynamics(
        &self,
        theta: &Vector2<f64>,
        theta_dot: &Vector2<f64>,
        theta_ddot: &Vector2<f64>,
    ) -> Vector2<f64> {
        self.mass_matrix(theta) * theta_ddot
            + self.coriolis_matrix(theta, theta_dot) * theta_dot
            + self.gravity_torque(theta)
    }

    /// Joint accelerations `θ̈ = M⁻¹(τ - C θ̇ - g)`.
    pub fn joint_accel(
        &self,
        theta: &Vector2<f64>,
        theta_dot: &Vector2<f64>,
        tau: &Vector2<f64>,
    ) -> Vector2<f64> {
        let rhs = tau
            - self.coriolis_matrix(theta, theta_dot) * theta_dot
            - self.gravity_torque(theta);
        self.solve_mass(theta, &rhs)
    }

    fn mass_inverse(&self, theta: &Vector2<f64>) -> Matrix2<f64> {
        let m = self.mass_matrix(theta);
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det
    }

    fn solve_mass(&self, theta: &Vector2<f64>, rhs: &Vector2<f64>) -> Vector2<f64> {
        self.mass_inverse(theta) * rhs
    }

    fn split_state(x: &DVector<f64>) -> (Vector2<f64>, Vector2<f64>) {
        (Vector2::new(x[0], x[2]), Vector2::new(x[1], x[3]))
    }
}

impl ContinuousSystem for ArmDynamics {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (theta, theta_dot) = Self::split_state(x);
        let tau = Vector2::new(u[0], u[1]);
        let acc = self.joint_accel(&theta, &theta_dot, &tau);
        DVector::from_vec(vec![theta_dot[0], acc[0], theta_dot[1], acc[1]])
    }

    fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let (theta, theta_dot) = Self::split_state(x);
        let tau = Vector2::new(u[0], u[1]);
        let g = self.params.gravity;
        let s1 = theta[0].sin();
        let s2 = theta[1].sin();
        let c2 = theta[1].cos();
        let s12 = (theta[0] + theta[1]).sin();
        let (d1, d2) = (theta_dot[0], theta_dot[1]);

        let m_inv = self.mass_inverse(&theta);
        let acc = self.joint_accel(&theta, &theta_dot, &tau);

        // Partials of the Coriolis torque C(θ, θ̇)θ̇ and of g(θ).
        let cc_dtheta2 = Vector2::new(
            -self.a2 * c2 * (2.0 * d1 * d2 + d2 * d2),
            self.a2 * c2 * d1 * d1,
        );
        let cc_dd1 = Vector2::new(-2.0 * self.a2 * s2 * d2, 2.0 * self.a2 * s2 * d1);
        let cc_dd2 = Vector2::new(-2.0 * self.a2 * s2 * (d1 + d2), 0.0);
        let g_dtheta1 = Vector2::new(-self.b1 * g * s1 - self.b2 * g * s12, -self.b2 * g * s12);
        let g_dtheta2 = Vector2::new(-self.b2 * g * s12, -self.b2 * g * s12);
        let m_dtheta2 = Matrix2::new(-2.0 * self.a2 * s2, -self.a2 * s2, -self.a2 * s2, 0.0);

        // Implicit differentiation of M(θ)θ̈ = τ - C θ̇ - g.
        let acc_dtheta1 = m_inv * (-g_dtheta1);
        let acc_dtheta2 = m_inv * (-cc_dtheta2 - g_dtheta2 - m_dtheta2 * acc);
        let acc_dd1 = m_inv * (-cc_dd1);
        let acc_dd2 = m_inv * (-cc_dd2);

        // Column order matches the state layout [θ₁, θ̇₁, θ₂, θ̇₂].
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0,
                1.0,
                0.0,
                0.0,
                acc_dtheta1[0],
                acc_dd1[0],
                acc_dtheta2[0],
                acc_dd2[0],
                0.0,
                0.0,
                0.0,
                1.0,
                acc_dtheta1[1],
                acc_dd1[1],
                acc_dtheta2[1],
                acc_dd2[1],
            ],
        )
    }

    fn jacobian_u(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let (theta, _) = Self::split_state(x);
        let m_inv = self.mass_inverse(&theta);
        let mut jac = DMatrix::zeros(4, 2);
        jac[(1, 0)] = m_inv[(0, 0)];
        jac[(1, 1)] = m_inv[(0, 1)];
        jac[(3, 0)] = m_inv[(1, 0)];
        jac[(3, 1)] = m_inv[(1, 1)];
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::central_jacobian;
    use crate::dynamics::{discretize_euler, DynamicalSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arm() -> ArmDynamics {
        ArmDynamics::new(ArmParameters::default()).unwrap()
    }

    #[test]
    fn gravity_torque_at_stretched_pose() {
        // θ = 0, θ̇ = θ̈ = 0: τ reduces to the gravity vector
        // [(b₁+b₂)g, b₂g] = [19.62, 4.905] for the default parameters.
        let a = arm();
        let tau = a.inverse_dynamics(&Vector2::zeros(), &Vector2::zeros(), &Vector2::zeros());
        assert!((tau[0] - 19.62).abs() < 1e-12);
        assert!((tau[1] - 4.905).abs() < 1e-12);
    }

    #[test]
    fn no_motion_no_gravity_means_no_torque() {
        let params = ArmParameters {
            gravity: 0.0,
            ..ArmParameters::default()
        };
        let a = ArmDynamics::new(params).unwrap();
        for theta in [
            Vector2::new(0.3, -1.2),
            Vector2::new(2.0, 0.5),
            Vector2::new(-0.7, 3.0),
        ] {
            let tau = a.inverse_dynamics(&theta, &Vector2::zeros(), &Vector2::zeros());
            assert!(tau.norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_forward_round_trip() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let theta = Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let theta_dot = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let theta_ddot = Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let tau = a.inverse_dynamics(&theta, &theta_dot, &theta_ddot);
            let acc = a.joint_accel(&theta, &theta_dot, &tau);
            assert!((acc - theta_ddot).norm() < 1e-10);
        }
    }

    #[test]
    fn mass_matrix_symmetric_positive_definite() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let theta = Vector2::new(rng.random_range(-6.3..6.3), rng.random_range(-6.3..6.3));
            let m = a.mass_matrix(&theta);
            assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-12);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            assert!(det > 0.0 && m[(0, 0)] > 0.0, "M not PD at θ = {theta:?}");
        }
    }

    #[test]
    fn equilibrium_under_gravity_compensation() {
        let a = arm();
        let tau = a.gravity_torque(&Vector2::zeros());
        let xdot = a.derivative(
            &DVector::zeros(4),
            &DVector::from_vec(vec![tau[0], tau[1]]),
        );
        assert!(xdot.norm() < 1e-12);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let a = arm();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.5..2.5));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-20.0..20.0));
            let jx = a.jacobian_x(&x, &u);
            let ju = a.jacobian_u(&x, &u);
            let fd_x = central_jacobian(|z| a.derivative(z, &u), &x, 4);
            let fd_u = central_jacobian(|z| a.derivative(&x, z), &u, 4);
            assert!(crate::diff::relative_error(&jx, &fd_x) < 1e-5);
            assert!(crate::diff::relative_error(&ju, &fd_u) < 1e-5);
        }
    }

    #[test]
    fn discretized_arm_state_jacobian_invertible() {
        let d = discretize_euler(arm(), 1.0 / 2000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-25.0..25.0));
            let det = d.jacobian_x(&x, &u).determinant();
            assert!(det.abs() > 1e-6, "near-singular ∂f/∂x, det = {det}");
        }
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        let bad = ArmParameters {
            m2: 0.0,
            ..ArmParameters::default()
        };
        assert!(ArmDynamics::new(bad).is_err());
    }
}
