//! Feature libraries for weighted-sum cost functions.
//!
//! A feature is a scalar function of `(x, u)` with analytic gradients.
//! The stacked feature vector and its Jacobians feed both the forward
//! solvers (cost and its derivatives) and the recovery matrix. Feature
//! order is stable: it defines the index of each recovered weight.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::diff;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature set must contain at least one feature")]
    Empty,
    #[error("{kind} coordinate {index} out of range (dimension {dim})")]
    CoordinateOutOfRange {
        kind: &'static str,
        index: usize,
        dim: usize,
    },
    #[error("monomial power must be at least 2, got {0}")]
    PowerTooSmall(u32),
}

/// A state or input coordinate, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    State(usize),
    Input(usize),
}

/// A single-coordinate monomial `coord^power` with `power ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monomial {
    pub coordinate: Coordinate,
    pub power: u32,
}

impl Monomial {
    pub fn state(index: usize, power: u32) -> Self {
        Self {
            coordinate: Coordinate::State(index),
            power,
        }
    }

    pub fn input(index: usize, power: u32) -> Self {
        Self {
            coordinate: Coordinate::Input(index),
            power,
        }
    }
}

/// A scalar feature with analytic first derivatives. Second derivatives
/// default to central differences of the gradients; implementations with
/// closed forms override them.
pub trait Feature: Send + Sync {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64;
    fn grad_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    fn grad_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    fn hess_xx(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        diff::central_jacobian(|z| self.grad_x(z, u), x, x.len())
    }

    fn hess_uu(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        diff::central_jacobian(|z| self.grad_u(x, z), u, u.len())
    }

    /// `∂²φ/∂x∂u`, `n×m`.
    fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        diff::central_jacobian(|z| self.grad_x(x, z), u, x.len())
    }
}

impl Feature for Monomial {
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let v = match self.coordinate {
            Coordinate::State(i) => x[i],
            Coordinate::Input(i) => u[i],
        };
        v.powi(self.power as i32)
    }

    fn grad_x(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        if let Coordinate::State(i) = self.coordinate {
            g[i] = self.power as f64 * x[i].powi(self.power as i32 - 1);
        }
        g
    }

    fn grad_u(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(u.len());
        if let Coordinate::Input(i) = self.coordinate {
            g[i] = self.power as f64 * u[i].powi(self.power as i32 - 1);
        }
        g
    }

    fn hess_xx(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        if let Coordinate::State(i) = self.coordinate {
            let p = self.power as f64;
            h[(i, i)] = p * (p - 1.0) * x[i].powi(self.power as i32 - 2);
        }
        h
    }

    fn hess_uu(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(u.len(), u.len());
        if let Coordinate::Input(i) = self.coordinate {
            let p = self.power as f64;
            h[(i, i)] = p * (p - 1.0) * u[i].powi(self.power as i32 - 2);
        }
        h
    }

    fn hess_xu(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), u.len())
    }
}

/// An ordered feature library bound to fixed state and input dimensions.
pub struct FeatureSet {
    features: Vec<Box<dyn Feature>>,
    state_dim: usize,
    input_dim: usize,
}

impl FeatureSet {
    /// Wraps arbitrary features. Not serializable, unlike monomial sets.
    pub fn from_features(
        features: Vec<Box<dyn Feature>>,
        state_dim: usize,
        input_dim: usize,
    ) -> Result<Self, FeatureError> {
        if features.is_empty() {
            return Err(FeatureError::Empty);
        }
        Ok(Self {
            features,
            state_dim,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Stacked feature vector `φ(x, u) ∈ R^r`.
    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.features.iter().map(|f| f.eval(x, u)))
    }

    /// `∂φ/∂x`, `r×n`.
    pub fn jacobian_x(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.len(), self.state_dim);
        for (i, f) in self.features.iter().enumerate() {
            jac.set_row(i, &f.grad_x(x, u).transpose());
        }
        jac
    }

    /// `∂φ/∂u`, `r×m`.
    pub fn jacobian_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.len(), self.input_dim);
        for (i, f) in self.features.iter().enumerate() {
            jac.set_row(i, &f.grad_u(x, u).transpose());
        }
        jac
    }

    /// Hessian blocks of the weighted running cost `Σᵢ wᵢ φᵢ(x, u)`:
    /// `(∂²/∂x², ∂²/∂x∂u, ∂²/∂u²)`.
    pub fn weighted_hessian(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        weights: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        assert_eq!(weights.len(), self.len(), "weight count");
        let mut hxx = DMatrix::zeros(self.state_dim, self.state_dim);
        let mut hxu = DMatrix::zeros(self.state_dim, self.input_dim);
        let mut huu = DMatrix::zeros(self.input_dim, self.input_dim);
        for (i, f) in self.features.iter().enumerate() {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            hxx += w * f.hess_xx(x, u);
            hxu += w * f.hess_xu(x, u);
            huu += w * f.hess_uu(x, u);
        }
        (hxx, hxu, huu)
    }
}

/// Builds a feature set of coordinate monomials, validating coordinate
/// ranges against `(state_dim, input_dim)` and requiring `power ≥ 2`.
pub fn monomial_features(
    monomials: &[Monomial],
    state_dim: usize,
    input_dim: usize,
) -> Result<FeatureSet, FeatureError> {
    if monomials.is_empty() {
        return Err(FeatureError::Empty);
    }
    for mono in monomials {
        if mono.power < 2 {
            return Err(FeatureError::PowerTooSmall(mono.power));
        }
        match mono.coordinate {
            Coordinate::State(i) if i >= state_dim => {
                return Err(FeatureError::CoordinateOutOfRange {
                    kind: "state",
                    index: i,
                    dim: state_dim,
                })
            }
            Coordinate::Input(i) if i >= input_dim => {
                return Err(FeatureError::CoordinateOutOfRange {
                    kind: "input",
                    index: i,
                    dim: input_dim,
                })
            }
            _ => {}
        }
    }
    let features: Vec<Box<dyn Feature>> = monomials
        .iter()
        .map(|m| Box::new(*m) as Box<dyn Feature>)
        .collect();
    FeatureSet::from_features(features, state_dim, input_dim)
}

/// The quadratic library `{x₁², x₂², ..., u₁², ...}` over all coordinates.
pub fn full_quadratic_library(state_dim: usize, input_dim: usize) -> FeatureSet {
    let mut monos = Vec::with_capacity(state_dim + input_dim);
    for i in 0..state_dim {
        monos.push(Monomial::state(i, 2));
    }
    for i in 0..input_dim {
        monos.push(Monomial::input(i, 2));
    }
    monomial_features(&monos, state_dim, input_dim).expect("coordinates in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lqr_features() -> FeatureSet {
        monomial_features(
            &[Monomial::state(0, 2), Monomial::state(1, 2), Monomial::input(0, 2)],
            2,
            1,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_set_evaluates() {
        let fs = lqr_features();
        assert_eq!(fs.len(), 3);
        let phi = fs.eval(&dvector![2.0, -2.0], &dvector![1.0]);
        assert_eq!(phi, dvector![4.0, 4.0, 1.0]);
    }

    #[test]
    fn arm_relevant_and_candidate_sets() {
        let relevant = monomial_features(&[Monomial::input(0, 2), Monomial::input(1, 2)], 4, 2);
        assert_eq!(relevant.unwrap().len(), 2);

        let candidates = monomial_features(
            &[
                Monomial::input(0, 2),
                Monomial::input(1, 2),
                Monomial::input(0, 3),
                Monomial::input(1, 3),
                Monomial::input(0, 4),
                Monomial::input(1, 4),
            ],
            4,
            2,
        )
        .unwrap();
        assert_eq!(candidates.len(), 6);
        let phi = candidates.eval(&DVector::zeros(4), &dvector![2.0, -1.0]);
        assert_eq!(phi, dvector![4.0, 1.0, 8.0, -1.0, 16.0, 1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let fs = monomial_features(
            &[
                Monomial::state(0, 2),
                Monomial::state(3, 4),
                Monomial::input(1, 3),
            ],
            4,
            2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let jx = fs.jacobian_x(&x, &u);
            let ju = fs.jacobian_u(&x, &u);
            let fd_x = crate::diff::central_jacobian(|z| fs.eval(z, &u), &x, 3);
            let fd_u = crate::diff::central_jacobian(|z| fs.eval(&x, z), &u, 3);
            assert!(crate::diff::relative_error(&jx, &fd_x) < 1e-5);
            assert!(crate::diff::relative_error(&ju, &fd_u) < 1e-5);
        }
    }

    #[test]
    fn monomial_hessians_match_finite_differences() {
        let mono = Monomial::input(1, 4);
        let x = dvector![0.1, 0.2, 0.3, 0.4];
        let u = dvector![1.5, -0.8];
        let analytic = mono.hess_uu(&x, &u);
        let fd = crate::diff::central_jacobian(|z| mono.grad_u(&x, z), &u, 2);
        assert!(crate::diff::relative_error(&analytic, &fd) < 1e-4);
    }

    #[test]
    fn rejects_invalid_descriptors() {
        assert!(matches!(
            monomial_features(&[Monomial::state(2, 2)], 2, 1),
            Err(FeatureError::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(
            monomial_features(&[Monomial::input(1, 2)], 2, 1),
            Err(FeatureError::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(
            monomial_features(&[Monomial::input(0, 1)], 2, 1),
            Err(FeatureError::PowerTooSmall(1))
        ));
        assert!(matches!(monomial_features(&[], 2, 1), Err(FeatureError::Empty)));
    }
}
