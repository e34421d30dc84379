//! Fixed-endpoint trajectory optimization by direct transcription.
//!
//! Minimizes `Σ_{k=1}^{T} ω'φ(x_k, u_k)` over `(x_{1:T-1}, u_{1:T})`
//! subject to `x_{k+1} = f(x_k, u_{k+1})` with both endpoints pinned.
//! The first-order conditions — stationarity in every free state and
//! input plus the dynamics constraints — form a square nonlinear system
//! in `(u_{1:T}, λ_{1:T}, x_{1:T-1})` that is solved by Newton's method
//! with a backtracking line search on the KKT residual norm and a
//! Levenberg-style diagonal shift when a factorization pivot fails.
//!
//! Grouping unknowns and equations by time step makes the Newton matrix
//! block tridiagonal; each iteration costs one block Thomas sweep. The
//! second-order terms `∂(J'λ)/∂(x,u)` are formed by central differences
//! of the analytic Jacobians, which keeps the residual (the quantity
//! driven to zero) exact.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::diff::fd_step;
use crate::dynamics::DynamicalSystem;
use crate::features::FeatureSet;
use crate::trajectory::Trajectory;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("ill-posed problem: {0}")]
    BadProblem(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<IterationRecord>,
    },
    #[error("KKT system remained singular up to shift {shift:.3e} at iteration {iteration}")]
    SingularKkt {
        iteration: usize,
        shift: f64,
        trace: Vec<IterationRecord>,
    },
}

/// Fixed-endpoint optimal control instance over a discrete system.
#[derive(Debug, Clone)]
pub struct FixedEndpointOcp {
    pub x_start: DVector<f64>,
    pub x_goal: DVector<f64>,
    pub horizon: usize,
}

/// How to seed the Newton iteration.
#[derive(Debug, Clone, Default)]
pub enum InitialGuess {
    /// States interpolate linearly between the endpoints; inputs zero.
    #[default]
    LinearInterpolation,
    /// Start from a caller-provided trajectory (states and inputs).
    Warm(Trajectory),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the KKT residual max norm.
    pub tolerance: f64,
    pub initial_guess: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-8,
            initial_guess: InitialGuess::default(),
        }
    }
}

/// One accepted Newton step.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone)]
pub struct TranscriptionSolution {
    pub trajectory: Trajectory,
    /// Multipliers `λ_1..λ_T` of the dynamics constraints.
    pub costates: Vec<DVector<f64>>,
    /// Final KKT residual (max norm).
    pub kkt_residual: f64,
    pub iterations: Vec<IterationRecord>,
}

impl TranscriptionSolution {
    /// Line-delimited JSON log of the Newton iterations.
    pub fn log_jsonl(&self) -> String {
        self.iterations
            .iter()
            .map(|rec| serde_json::to_string(rec).expect("plain struct"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

/// Newton iterate: inputs `u_1..u_T`, multipliers `λ_1..λ_T`, free
/// states `x_1..x_{T-1}`.
#[derive(Clone)]
struct Variables {
    us: Vec<DVector<f64>>,
    lams: Vec<DVector<f64>>,
    xs: Vec<DVector<f64>>,
}

struct Workspace<'a> {
    system: &'a dyn DynamicalSystem,
    features: &'a FeatureSet,
    weights: &'a DVector<f64>,
    x_start: DVector<f64>,
    x_goal: DVector<f64>,
    horizon: usize,
}

impl Workspace<'_> {
    fn state<'v>(&'v self, vars: &'v Variables, k: usize) -> &'v DVector<f64> {
        if k == 0 {
            &self.x_start
        } else if k == self.horizon {
            &self.x_goal
        } else {
            &vars.xs[k - 1]
        }
    }

    /// Stage residuals `g_k = [ru_k; rc_k; rx_k]` (`rx` absent at `k = T`).
    fn residuals(&self, vars: &Variables) -> Vec<DVector<f64>> {
        let horizon = self.horizon;
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        let mut out = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let prev = self.state(vars, k - 1);
            let here = self.state(vars, k);
            let u = &vars.us[k - 1];
            let lam = &vars.lams[k - 1];
            let fu = self.system.jacobian_u(prev, u);
            let ru =
                fu.transpose() * lam + self.features.jacobian_u(here, u).transpose() * self.weights;
            let rc = self.system.step(prev, u) - here;
            let size = if k < horizon { m + 2 * n } else { m + n };
            let mut g = DVector::zeros(size);
            g.rows_mut(0, m).copy_from(&ru);
            g.rows_mut(m, n).copy_from(&rc);
            if k < horizon {
                let fx = self.system.jacobian_x(here, &vars.us[k]);
                let rx = fx.transpose() * &vars.lams[k] - lam
                    + self.features.jacobian_x(here, u).transpose() * self.weights;
                g.rows_mut(m + n, n).copy_from(&rx);
            }
            out.push(g);
        }
        out
    }

    /// Hessian of `λ'f(x, u)` in the combined `(x, u)` coordinates via
    /// central differences of the analytic Jacobians.
    fn transition_hessian(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        lam: &DVector<f64>,
    ) -> DMatrix<f64> {
        let n = x.len();
        let m = u.len();
        let grad = |x: &DVector<f64>, u: &DVector<f64>| {
            let gx = self.system.jacobian_x(x, u).transpose() * lam;
            let gu = self.system.jacobian_u(x, u).transpose() * lam;
            let mut g = DVector::zeros(n + m);
            g.rows_mut(0, n).copy_from(&gx);
            g.rows_mut(n, m).copy_from(&gu);
            g
        };
        let mut hess = DMatrix::zeros(n + m, n + m);
        for j in 0..n + m {
            let (mut xp, mut up) = (x.clone(), u.clone());
            let (mut xm, mut um) = (x.clone(), u.clone());
            let h = if j < n {
                let h = fd_step(x[j]);
                xp[j] += h;
                xm[j] -= h;
                h
            } else {
                let h = fd_step(u[j - n]);
                up[j - n] += h;
                um[j - n] -= h;
                h
            };
            let col = (grad(&xp, &up) - grad(&xm, &um)) / (2.0 * h);
            hess.set_column(j, &col);
        }
        // The exact Hessian is symmetric; average out the FD noise.
        let sym = (&hess + hess.transpose()) / 2.0;
        sym
    }

    /// Block rows of the Newton matrix: `a[k]` couples stage `k+1` to
    /// stage `k`, `b[k]` is the diagonal block, `c[k]` couples to the
    /// next stage.
    #[allow(clippy::type_complexity)]
    fn jacobian_blocks(
        &self,
        vars: &Variables,
    ) -> (Vec<Option<DMatrix<f64>>>, Vec<DMatrix<f64>>, Vec<Option<DMatrix<f64>>>) {
        let horizon = self.horizon;
        let n = self.system.state_dim();
        let m = self.system.input_dim();

        // Per-transition quantities at (x_{k-1}, u_k) with multiplier λ_k.
        let mut fx = Vec::with_capacity(horizon);
        let mut fu = Vec::with_capacity(horizon);
        let mut hs = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let prev = self.state(vars, k - 1);
            let u = &vars.us[k - 1];
            fx.push(self.system.jacobian_x(prev, u));
            fu.push(self.system.jacobian_u(prev, u));
            hs.push(self.transition_hessian(prev, u, &vars.lams[k - 1]));
        }
        // Weighted feature Hessians at the cost coupling points (x_k, u_k).
        let mut wxx = Vec::with_capacity(horizon);
        let mut wxu = Vec::with_capacity(horizon);
        let mut wuu = Vec::with_capacity(horizon);
        for k in 1..=horizon {
            let (a, b, c) =
                self.features
                    .weighted_hessian(self.state(vars, k), &vars.us[k - 1], self.weights);
            wxx.push(a);
            wxu.push(b);
            wuu.push(c);
        }

        let hs_xx = |k: usize| hs[k - 1].view((0, 0), (n, n)).into_owned();
        let hs_xu = |k: usize| hs[k - 1].view((0, n), (n, m)).into_owned();
        let hs_ux = |k: usize| hs[k - 1].view((n, 0), (m, n)).into_owned();
        let hs_uu = |k: usize| hs[k - 1].view((n, n), (m, m)).into_owned();

        let mut a_blocks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(horizon);
        let mut b_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
        let mut c_blocks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(horizon);

        for k in 1..=horizon {
            let rows = if k < horizon { m + 2 * n } else { m + n };
            let here_cols = if k < horizon { m + 2 * n } else { m + n };

            // Diagonal block over [u_k, λ_k, (x_k)].
            let mut b = DMatrix::zeros(rows, here_cols);
            b.view_mut((0, 0), (m, m))
                .copy_from(&(hs_uu(k) + &wuu[k - 1]));
            b.view_mut((0, m), (m, n)).copy_from(&fu[k - 1].transpose());
            b.view_mut((m, 0), (n, m)).copy_from(&fu[k - 1]);
            if k < horizon {
                // rc_k: ∂/∂x_k = -I.
                for i in 0..n {
                    b[(m + i, m + n + i)] = -1.0;
                }
                // ru_k: ∂/∂x_k from the feature cross term.
                b.view_mut((0, m + n), (m, n))
                    .copy_from(&wxu[k - 1].transpose());
                // rx_k rows.
                b.view_mut((m + n, 0), (n, m)).copy_from(&wxu[k - 1]);
                for i in 0..n {
                    b[(m + n + i, m + i)] = -1.0;
                }
                b.view_mut((m + n, m + n), (n, n))
                    .copy_from(&(hs_xx(k + 1) + &wxx[k - 1]));
            }
            b_blocks.push(b);

            // Sub-diagonal block over [u_{k-1}, λ_{k-1}, x_{k-1}].
            if k == 1 {
                a_blocks.push(None);
            } else {
                let mut a = DMatrix::zeros(rows, m + 2 * n);
                a.view_mut((0, m + n), (m, n)).copy_from(&hs_ux(k));
                a.view_mut((m, m + n), (n, n)).copy_from(&fx[k - 1]);
                a_blocks.push(Some(a));
            }

            // Super-diagonal block over [u_{k+1}, λ_{k+1}, (x_{k+1})].
            if k == horizon {
                c_blocks.push(None);
            } else {
                let next_cols = if k + 1 < horizon { m + 2 * n } else { m + n };
                let mut c = DMatrix::zeros(rows, next_cols);
                c.view_mut((m + n, 0), (n, m)).copy_from(&hs_xu(k + 1));
                c.view_mut((m + n, m), (n, n)).copy_from(&fx[k].transpose());
                c_blocks.push(Some(c));
            }
        }
        (a_blocks, b_blocks, c_blocks)
    }
}

fn residual_norm(residuals: &[DVector<f64>]) -> f64 {
    residuals.iter().map(|r| r.amax()).fold(0.0, f64::max)
}

/// Block Thomas sweep for `J d = g` with a diagonal shift added to the
/// `b` blocks. `None` when a pivot block cannot be factored.
fn solve_block_tridiagonal(
    a: &[Option<DMatrix<f64>>],
    b: &[DMatrix<f64>],
    c: &[Option<DMatrix<f64>>],
    g: &[DVector<f64>],
    shift: f64,
) -> Option<Vec<DVector<f64>>> {
    let stages = b.len();
    let mut w: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(stages);
    let mut y_tilde: Vec<DVector<f64>> = Vec::with_capacity(stages);

    for k in 0..stages {
        let mut m_k = b[k].clone();
        for i in 0..m_k.nrows().min(m_k.ncols()) {
            m_k[(i, i)] += shift;
        }
        let mut y_k = g[k].clone();
        if let Some(a_k) = &a[k] {
            let w_prev_free = w[k - 1].as_ref();
            // y_k -= A_k ỹ_{k-1}; M_k -= A_k W_{k-1}.
            y_k -= a_k * &y_tilde[k - 1];
            if let Some(w_prev) = w_prev_free {
                m_k -= a_k * w_prev;
            }
        }
        let lu = m_k.lu();
        let yt = lu.solve(&y_k)?;
        if yt.iter().any(|v| !v.is_finite()) {
            return None;
        }
        y_tilde.push(yt);
        if let Some(c_k) = &c[k] {
            let wk = lu.solve(c_k)?;
            if wk.iter().any(|v| !v.is_finite()) {
                return None;
            }
            w.push(Some(wk));
        } else {
            w.push(None);
        }
    }

    let mut d = vec![DVector::zeros(0); stages];
    d[stages - 1] = y_tilde[stages - 1].clone();
    for k in (0..stages - 1).rev() {
        d[k] = &y_tilde[k] - w[k].as_ref().expect("interior stage") * &d[k + 1];
    }
    Some(d)
}

/// Solves the fixed-endpoint problem. Errors carry the iteration trace.
pub fn solve_fixed_endpoint(
    system: &dyn DynamicalSystem,
    features: &FeatureSet,
    weights: &DVector<f64>,
    ocp: &FixedEndpointOcp,
    options: &SolverOptions,
) -> Result<TranscriptionSolution, SolveError> {
    let n = system.state_dim();
    let m = system.input_dim();
    let horizon = ocp.horizon;
    if horizon < 2 {
        return Err(SolveError::BadProblem("horizon must be at least 2".into()));
    }
    if ocp.x_start.len() != n || ocp.x_goal.len() != n {
        return Err(SolveError::BadProblem("endpoint dimensions".into()));
    }
    if weights.len() != features.len()
        || features.state_dim() != n
        || features.input_dim() != m
    {
        return Err(SolveError::BadProblem("feature/weight dimensions".into()));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(SolveError::BadProblem("weights must be finite".into()));
    }

    let ws = Workspace {
        system,
        features,
        weights,
        x_start: ocp.x_start.clone(),
        x_goal: ocp.x_goal.clone(),
        horizon,
    };

    let mut vars = match &options.initial_guess {
        InitialGuess::LinearInterpolation => Variables {
            us: vec![DVector::zeros(m); horizon],
            lams: vec![DVector::zeros(n); horizon],
            xs: (1..horizon)
                .map(|k| {
                    let alpha = k as f64 / horizon as f64;
                    (1.0 - alpha) * &ocp.x_start + alpha * &ocp.x_goal
                })
                .collect(),
        },
        InitialGuess::Warm(traj) => {
            if traj.horizon() != horizon || traj.state_dim() != n || traj.input_dim() != m {
                return Err(SolveError::BadProblem("warm start dimensions".into()));
            }
            Variables {
                us: traj.inputs().to_vec(),
                lams: vec![DVector::zeros(n); horizon],
                xs: traj.states()[1..horizon].to_vec(),
            }
        }
    };

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut residuals = ws.residuals(&vars);
    let mut res_norm = residual_norm(&residuals);
    let mut shift = 0.0_f64;

    for iter in 1..=options.max_iterations {
        if res_norm < options.tolerance {
            break;
        }
        let (a, b, c) = ws.jacobian_blocks(&vars);

        // Newton direction, raising the diagonal shift until the
        // factorization goes through and a step is accepted.
        'shift_loop: loop {
            let step = solve_block_tridiagonal(&a, &b, &c, &residuals, shift);
            if let Some(d) = step {
                let mut alpha = 1.0_f64;
                while alpha >= 1e-12 {
                    let mut candidate = vars.clone();
                    for k in 0..horizon {
                        let dk = &d[k];
                        candidate.us[k] -= alpha * dk.rows(0, m);
                        candidate.lams[k] -= alpha * dk.rows(m, n);
                        if k + 1 < horizon {
                            candidate.xs[k] -= alpha * dk.rows(m + n, n);
                        }
                    }
                    let cand_res = ws.residuals(&candidate);
                    let cand_norm = residual_norm(&cand_res);
                    if cand_norm.is_finite() && cand_norm <= (1.0 - 1e-4 * alpha) * res_norm {
                        vars = candidate;
                        residuals = cand_res;
                        res_norm = cand_norm;
                        trace.push(IterationRecord {
                            iter,
                            residual: res_norm,
                            step_length: alpha,
                        });
                        break 'shift_loop;
                    }
                    alpha *= 0.5;
                }
            }
            // Factorization failed or the line search stalled.
            shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
            if shift > 1e2 {
                return Err(SolveError::SingularKkt {
                    iteration: iter,
                    shift,
                    trace,
                });
            }
        }
        // Relax the regularization once steps go through again.
        if shift > 0.0 {
            shift /= 10.0;
            if shift < 1e-12 {
                shift = 0.0;
            }
        }
    }

    if res_norm >= options.tolerance {
        return Err(SolveError::NonConvergence {
            iterations: options.max_iterations,
            residual: res_norm,
            trace,
        });
    }

    let mut states = Vec::with_capacity(horizon + 1);
    states.push(ocp.x_start.clone());
    for k in 1..horizon {
        states.push(vars.xs[k - 1].clone());
    }
    states.push(ocp.x_goal.clone());
    let trajectory = Trajectory::new(states, vars.us.clone()).expect("consistent lengths");
    Ok(TranscriptionSolution {
        trajectory,
        costates: vars.lams,
        kkt_residual: res_norm,
        iterations: trace,
    })
}
