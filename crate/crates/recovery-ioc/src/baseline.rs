//! KKT-residual baseline: joint least-squares estimation of the weights
//! and all window costates from the stationarity rows, with the coupling
//! to the costate beyond the window set to zero. That truncation is the
//! baseline's blind spot — on incomplete windows the future of the
//! trajectory is simply ignored — and the reason it needs far longer
//! observations than the recovery matrix once the window starts late.
//! When the window covers the whole horizon the truncation is exact and
//! the baseline recovers the weights exactly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::observation::ObservationSample;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("baseline needs a window of at least 2 observations, got {0}")]
    WindowTooShort(usize),
    #[error("mixed sample dimensions inside window")]
    DimensionMismatch,
}

/// A window of observations plus the implicit `Σω = 1` constraint.
pub struct KktIocProblem<'a> {
    pub samples: &'a [ObservationSample],
}

/// Baseline estimate: sum-normalized weights, the estimated costates
/// over the window, the residual norm of the stacked rows, and whether
/// the least-squares system was rank-deficient (in which case the
/// minimum-norm solution is returned).
#[derive(Debug, Clone)]
pub struct BaselineEstimate {
    pub omega: DVector<f64>,
    pub costates: Vec<DVector<f64>>,
    pub residual: f64,
    pub degenerate: bool,
}

/// Solves the truncated-KKT least-squares problem
///
/// ```text
/// min ‖ Φ_x ω - F_x λ ‖²   over (ω, λ_{t..t+l-1}),  Σωᵢ = 1
///     ‖ Φ_u ω + F_u λ ‖
/// ```
///
/// where the final block row of `F_x` omits the unknown future costate.
/// The sum constraint is eliminated by substituting the last weight.
pub fn kkt_ioc(problem: &KktIocProblem<'_>) -> Result<BaselineEstimate, BaselineError> {
    let samples = problem.samples;
    let l = samples.len();
    if l < 2 {
        return Err(BaselineError::WindowTooShort(l));
    }
    let n = samples[0].state_dim();
    let m = samples[0].input_dim();
    let r = samples[0].feature_dim();
    if samples
        .iter()
        .any(|s| s.state_dim() != n || s.input_dim() != m || s.feature_dim() != r)
    {
        return Err(BaselineError::DimensionMismatch);
    }

    let rows = (n + m) * l;
    let cols = r + n * l;
    let mut a = DMatrix::zeros(rows, cols);

    // x-rows: φ_x'ω - λ_k + f_x'λ_{k+1}, the last block without its
    // future term; u-rows: φ_u'ω + f_u'λ_k.
    for (j, s) in samples.iter().enumerate() {
        let x_row = n * j;
        a.view_mut((x_row, 0), (n, r)).copy_from(&s.px.transpose());
        let lam = r + n * j;
        a.view_mut((x_row, lam), (n, n))
            .copy_from(&(-DMatrix::<f64>::identity(n, n)));
        if j + 1 < l {
            a.view_mut((x_row, lam + n), (n, n)).copy_from(&s.fx.transpose());
        }

        let u_row = n * l + m * j;
        a.view_mut((u_row, 0), (m, r)).copy_from(&s.pu.transpose());
        a.view_mut((u_row, lam), (m, n)).copy_from(&s.fu.transpose());
    }

    // Substitute ω_r = 1 - Σ_{i<r} ω_i.
    let last_weight_col = a.column(r - 1).into_owned();
    let mut reduced = DMatrix::zeros(rows, cols - 1);
    for i in 0..r - 1 {
        reduced.set_column(i, &(a.column(i) - &last_weight_col));
    }
    for i in r..cols {
        reduced.set_column(i - 1, &a.column(i));
    }
    let rhs = -last_weight_col;

    // Least squares through the SVD: rank-revealing, and minimum-norm
    // when the system is rank-deficient.
    let svd = reduced.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-10 * sigma_max.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|s| **s > eps).count();
    let degenerate = rank < cols - 1;
    let solution = svd.solve(&rhs, eps).expect("svd computed with u and v");

    let residual = (&reduced * &solution - &rhs).norm();
    let mut omega = DVector::zeros(r);
    for i in 0..r - 1 {
        omega[i] = solution[i];
    }
    omega[r - 1] = 1.0 - omega.rows(0, r - 1).sum();
    let costates = (0..l)
        .map(|j| solution.rows(r - 1 + n * j, n).into_owned())
        .collect();

    Ok(BaselineEstimate {
        omega,
        costates,
        residual,
        degenerate,
    })
}
