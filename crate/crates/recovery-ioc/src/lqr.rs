//! Finite-horizon discrete-time LQR via backward Riccati recursion.
//!
//! Minimizes `Σ_{k=1}^{T} (x_k' Q x_k + u_k' R u_k)` subject to
//! `x_{k+1} = A x_k + B u_{k+1}` from a given `x_0`. Note the absence of
//! the conventional ½ factor and the input indexing: `u_k` is the input
//! that produces `x_k`. The value of the remaining decisions after time
//! `k` is `x_k' P_k x_k` with `P_T = 0`, and the optimal input is
//! `u_{k+1} = -K_{k+1} x_k`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{lti_system, Lti};
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum LqrError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Q must be symmetric positive semidefinite")]
    QNotPsd,
    #[error("R must be symmetric positive definite")]
    RNotPd,
}

/// A finite-horizon LQR instance.
#[derive(Debug, Clone)]
pub struct LqrProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub horizon: usize,
}

impl LqrProblem {
    pub fn validate(&self) -> Result<(), LqrError> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if !self.a.is_square() || self.b.nrows() != n {
            return Err(LqrError::DimensionMismatch("A/B shapes".into()));
        }
        if self.q.shape() != (n, n) || self.r.shape() != (m, m) || self.x0.len() != n {
            return Err(LqrError::DimensionMismatch("Q/R/x0 shapes".into()));
        }
        let sym_tol = 1e-10;
        if (&self.q - self.q.transpose()).amax() > sym_tol {
            return Err(LqrError::QNotPsd);
        }
        if (&self.r - self.r.transpose()).amax() > sym_tol {
            return Err(LqrError::RNotPd);
        }
        if self
            .q
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .any(|ev| *ev < -1e-10)
        {
            return Err(LqrError::QNotPsd);
        }
        if nalgebra::Cholesky::new(self.r.clone()).is_none() {
            return Err(LqrError::RNotPd);
        }
        Ok(())
    }
}

/// Solution of an LQR instance: the optimal trajectory plus the Riccati
/// matrices `P_0..P_T` and feedback gains `K_1..K_T` that generated it.
#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub trajectory: Trajectory,
    /// `P_k` for `k = 0..T` (index k holds P_k).
    pub cost_to_go: Vec<DMatrix<f64>>,
    /// `K_k` for `k = 1..T` (index k-1 holds K_k).
    pub gains: Vec<DMatrix<f64>>,
    q: DMatrix<f64>,
}

impl LqrSolution {
    /// Costate `λ_k = 2 (Q + P_k) x_k`, an algebraic route independent
    /// of the backward stationarity recursion. Returned for `k = 1..T`.
    pub fn costates(&self) -> Vec<DVector<f64>> {
        (1..=self.trajectory.horizon())
            .map(|k| 2.0 * (&self.q + &self.cost_to_go[k]) * self.trajectory.state(k))
            .collect()
    }
}

/// Backward Riccati sweep followed by a forward rollout.
pub fn solve_lqr(p: &LqrProblem) -> Result<LqrSolution, LqrError> {
    p.validate()?;
    let horizon = p.horizon;
    let n = p.a.nrows();

    let mut cost_to_go = vec![DMatrix::zeros(n, n); horizon + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); horizon];
    // P_T = 0; the gain producing u_k uses P_k.
    for k in (1..=horizon).rev() {
        let s = &p.q + &cost_to_go[k];
        let bsb = p.b.transpose() * &s * &p.b;
        let g = &p.r + &bsb;
        let chol = nalgebra::Cholesky::new(g).ok_or(LqrError::RNotPd)?;
        let bsa = p.b.transpose() * &s * &p.a;
        let gain = chol.solve(&bsa);
        cost_to_go[k - 1] = p.a.transpose() * &s * &p.a - bsa.transpose() * &gain;
        gains[k - 1] = gain;
    }

    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    states.push(p.x0.clone());
    for k in 1..=horizon {
        let u = -(&gains[k - 1] * &states[k - 1]);
        let x = &p.a * &states[k - 1] + &p.b * &u;
        inputs.push(u);
        states.push(x);
    }

    Ok(LqrSolution {
        trajectory: Trajectory::new(states, inputs).expect("consistent lengths"),
        cost_to_go,
        gains,
        q: p.q.clone(),
    })
}

/// The LTI system of an LQR problem, for modules that need the dynamics
/// on its own.
pub fn lqr_system(p: &LqrProblem) -> Lti {
    lti_system(p.a.clone(), p.b.clone()).expect("validated shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    /// A = [[-1, 1], [0, 1]], B = [1; 3], x0 = [2, -2], T = 100 with
    /// weights (0.507, 0.845, 0.169) on (x₁², x₂², u²).
    pub fn paper_instance() -> LqrProblem {
        LqrProblem {
            a: dmatrix![-1.0, 1.0; 0.0, 1.0],
            b: dmatrix![1.0; 3.0],
            q: DMatrix::from_diagonal(&dvector![0.507, 0.845]),
            r: dmatrix![0.169],
            x0: dvector![2.0, -2.0],
            horizon: 100,
        }
    }

    #[test]
    fn solution_is_dynamically_consistent_and_decays() {
        let p = paper_instance();
        let sol = solve_lqr(&p).unwrap();
        let sys = lqr_system(&p);
        assert!(sol.trajectory.dynamics_defect(&sys) < 1e-12);
        // The regulator contracts by roughly 0.63 per step: visibly
        // small within a dozen steps, negligible by the horizon.
        assert!(sol.trajectory.state(12).norm() < 0.2 * p.x0.norm());
        assert!(sol.trajectory.state(30).norm() < 1e-2);
        assert!(sol.trajectory.state(100).norm() < 1e-8);
    }

    #[test]
    fn stationarity_of_the_riccati_solution() {
        // B' λ_k + 2 R u_k = 0 with λ_k = 2 (Q + P_k) x_k.
        let p = paper_instance();
        let sol = solve_lqr(&p).unwrap();
        let costates = sol.costates();
        for k in 1..=p.horizon {
            let residual = (p.b.transpose() * &costates[k - 1]
                + 2.0 * &p.r * sol.trajectory.input(k))
            .amax();
            assert!(residual < 1e-9, "u-row residual {residual} at k = {k}");
        }
        // x-rows: λ_k = A' λ_{k+1} + 2 Q x_k for k < T, λ_T = 2 Q x_T.
        for k in 1..p.horizon {
            let lhs = &costates[k - 1];
            let rhs = p.a.transpose() * &costates[k] + 2.0 * &p.q * sol.trajectory.state(k);
            assert!((lhs - rhs).amax() < 1e-9);
        }
        let terminal = (&costates[p.horizon - 1]
            - 2.0 * &p.q * sol.trajectory.state(p.horizon))
        .amax();
        assert!(terminal < 1e-12);
    }

    #[test]
    fn zero_initial_state_stays_at_zero() {
        let p = LqrProblem {
            x0: dvector![0.0, 0.0],
            ..paper_instance()
        };
        let sol = solve_lqr(&p).unwrap();
        for k in 0..=p.horizon {
            assert_eq!(sol.trajectory.state(k).amax(), 0.0);
        }
    }

    #[test]
    fn uniform_weight_scaling_leaves_the_trajectory_unchanged() {
        let p = paper_instance();
        let scaled = LqrProblem {
            q: 3.0 * p.q.clone(),
            r: 3.0 * p.r.clone(),
            ..p.clone()
        };
        let sol = solve_lqr(&p).unwrap();
        let sol_scaled = solve_lqr(&scaled).unwrap();
        for k in 1..=p.horizon {
            assert!((sol.trajectory.input(k) - sol_scaled.trajectory.input(k)).amax() < 1e-12);
            assert!((sol.trajectory.state(k) - sol_scaled.trajectory.state(k)).amax() < 1e-12);
        }
    }

    #[test]
    fn indefinite_r_is_rejected() {
        let p = LqrProblem {
            r: dmatrix![-0.1],
            ..paper_instance()
        };
        assert!(matches!(solve_lqr(&p), Err(LqrError::RNotPd)));
    }
}
