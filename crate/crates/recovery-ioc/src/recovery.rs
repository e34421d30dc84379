//! Recovery-matrix construction, rank testing and weight extraction.
//!
//! For an observation window `k = t .. t+l-1` of an optimal trajectory,
//! the recovery matrix `H(t, l) = [H₁ H₂] ∈ R^{ml × (r+n)}` couples the
//! unknown feature weights `ω ∈ R^r` and the costate `λ_{t+l} ∈ R^n`
//! just beyond the window through `H₁ω + H₂λ_{t+l} = 0`. The blocks are
//!
//! ```text
//! H₁ = F_u F_x⁻¹ Φ_x + Φ_u          H₂ = F_u F_x⁻¹ V
//! ```
//!
//! with `F_x` the unit upper block-bidiagonal matrix holding the
//! transposed state Jacobians, `F_u` the block diagonal of transposed
//! input Jacobians, `Φ_x`, `Φ_u` the stacked transposed feature
//! Jacobians, and `V` zero except for a final `∂f/∂x'` block. `F_x` is
//! never inverted explicitly: both products are formed by block
//! back-substitution, and the same algebra yields an O(m²(r+n)) update
//! that appends one observation at a time.
//!
//! Once the matrix (after Frobenius normalization) has a one-dimensional
//! kernel — detected by the rank index `κ = σ₂/σ₁` crossing a threshold
//! `γ` together with the length gate `l > (r+n)/m` — the weights are the
//! leading `r` entries of the kernel direction, rescaled to sum to one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::observation::ObservationSample;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("empty observation window")]
    EmptyWindow,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("recovery matrix is the zero matrix (degenerate window)")]
    ZeroMatrix,
    #[error("matrix has a single singular value; rank index undefined")]
    TooFewSingularValues,
    #[error("sum-degenerate kernel: the kernel direction cannot be sum-normalized")]
    SumDegenerateKernel,
    #[error("matrix with {rows} rows and {cols} columns cannot pin a one-dimensional kernel")]
    Underdetermined { rows: usize, cols: usize },
    #[error("observation stream exhausted after {have} samples, needed {want}")]
    StreamExhausted { have: usize, want: usize },
    #[error("rank index threshold must exceed 1, got {0}")]
    InvalidGamma(f64),
    #[error("observation cap must be at least 1")]
    InvalidCap,
}

fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    out
}

/// The pair `(H₁, H₂)` for a window starting at `t` with current length
/// `l`, extendable one observation at a time.
#[derive(Debug, Clone)]
pub struct RecoveryState {
    start: usize,
    len: usize,
    state_dim: usize,
    input_dim: usize,
    feature_dim: usize,
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
}

impl RecoveryState {
    /// Single-observation matrix: `H₁ = f_u' φ_x' + φ_u'`, `H₂ = f_u' f_x'`.
    pub fn init(sample: &ObservationSample) -> Result<Self, RecoveryError> {
        check_sample_shape(sample)?;
        let n = sample.state_dim();
        let m = sample.input_dim();
        let r = sample.feature_dim();
        let fu_t = sample.fu.transpose();
        let h1 = &fu_t * sample.px.transpose() + sample.pu.transpose();
        let h2 = &fu_t * sample.fx.transpose();
        Ok(Self {
            start: sample.time,
            len: 1,
            state_dim: n,
            input_dim: m,
            feature_dim: r,
            h1,
            h2,
        })
    }

    /// Appends one observation:
    ///
    /// ```text
    /// H₁ ← [H₁ + H₂ φ_x' ; f_u' φ_x' + φ_u']
    /// H₂ ← [H₂ f_x'      ; f_u' f_x'       ]
    /// ```
    ///
    /// Row count grows by `m`.
    pub fn update(&mut self, sample: &ObservationSample) -> Result<(), RecoveryError> {
        check_sample_shape(sample)?;
        if sample.state_dim() != self.state_dim
            || sample.input_dim() != self.input_dim
            || sample.feature_dim() != self.feature_dim
        {
            return Err(RecoveryError::DimensionMismatch(format!(
                "sample dims ({}, {}, {}) do not match state dims ({}, {}, {})",
                sample.state_dim(),
                sample.input_dim(),
                sample.feature_dim(),
                self.state_dim,
                self.input_dim,
                self.feature_dim
            )));
        }
        let fx_t = sample.fx.transpose();
        let fu_t = sample.fu.transpose();
        let px_t = sample.px.transpose();
        let new_rows_h1 = &fu_t * &px_t + sample.pu.transpose();
        let new_rows_h2 = &fu_t * &fx_t;
        self.h1 = vstack(&(&self.h1 + &self.h2 * &px_t), &new_rows_h1);
        self.h2 = vstack(&(&self.h2 * &fx_t), &new_rows_h2);
        self.len += 1;
        Ok(())
    }

    /// Direct construction on a full window, assembling `F_x`, `F_u`,
    /// `Φ_x`, `Φ_u`, `V` implicitly and back-substituting against the
    /// unit upper block-triangular `F_x`.
    pub fn from_window(samples: &[ObservationSample]) -> Result<Self, RecoveryError> {
        let first = samples.first().ok_or(RecoveryError::EmptyWindow)?;
        check_sample_shape(first)?;
        let n = first.state_dim();
        let m = first.input_dim();
        let r = first.feature_dim();
        let l = samples.len();
        for s in samples {
            if s.state_dim() != n || s.input_dim() != m || s.feature_dim() != r {
                return Err(RecoveryError::DimensionMismatch(
                    "mixed sample dimensions inside window".into(),
                ));
            }
        }

        // Back-substitution for Y = F_x⁻¹ Φ_x and Z = F_x⁻¹ V. Block row
        // i of F_x couples Y_i to Y_{i+1} via the transposed state
        // Jacobian of sample i; V is zero except for its last block.
        let mut y = vec![DMatrix::zeros(0, 0); l];
        let mut z = vec![DMatrix::zeros(0, 0); l];
        y[l - 1] = samples[l - 1].px.transpose();
        z[l - 1] = samples[l - 1].fx.transpose();
        for i in (0..l - 1).rev() {
            let fx_t = samples[i].fx.transpose();
            y[i] = samples[i].px.transpose() + &fx_t * &y[i + 1];
            z[i] = &fx_t * &z[i + 1];
        }

        let mut h1 = DMatrix::zeros(m * l, r);
        let mut h2 = DMatrix::zeros(m * l, n);
        for (i, s) in samples.iter().enumerate() {
            let fu_t = s.fu.transpose();
            h1.view_mut((m * i, 0), (m, r))
                .copy_from(&(&fu_t * &y[i] + s.pu.transpose()));
            h2.view_mut((m * i, 0), (m, n)).copy_from(&(&fu_t * &z[i]));
        }

        Ok(Self {
            start: first.time,
            len: l,
            state_dim: n,
            input_dim: m,
            feature_dim: r,
            h1,
            h2,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Current window length `l`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn h1(&self) -> &DMatrix<f64> {
        &self.h1
    }

    pub fn h2(&self) -> &DMatrix<f64> {
        &self.h2
    }

    /// The full matrix `H = [H₁ H₂]`, `ml × (r+n)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let rows = self.h1.nrows();
        let mut h = DMatrix::zeros(rows, self.feature_dim + self.state_dim);
        h.view_mut((0, 0), (rows, self.feature_dim)).copy_from(&self.h1);
        h.view_mut((0, self.feature_dim), (rows, self.state_dim))
            .copy_from(&self.h2);
        h
    }
}

fn check_sample_shape(sample: &ObservationSample) -> Result<(), RecoveryError> {
    let n = sample.fx.nrows();
    let m = sample.fu.ncols();
    let r = sample.px.nrows();
    if sample.fx.ncols() != n
        || sample.fu.nrows() != n
        || sample.px.ncols() != n
        || sample.pu.nrows() != r
        || sample.pu.ncols() != m
    {
        return Err(RecoveryError::DimensionMismatch(format!(
            "sample at time {} has inconsistent Jacobian shapes",
            sample.time
        )));
    }
    Ok(())
}

/// Frobenius normalization `H̄ = H / ‖H‖_F`. Errors on the zero matrix.
pub fn normalize(h: &DMatrix<f64>) -> Result<DMatrix<f64>, RecoveryError> {
    let norm = h.norm();
    if norm == 0.0 {
        return Err(RecoveryError::ZeroMatrix);
    }
    Ok(h / norm)
}

/// Singular-value summary of a normalized recovery matrix.
#[derive(Debug, Clone)]
pub struct RankDiagnostics {
    /// All singular values, ascending.
    pub singular_values: Vec<f64>,
    /// `κ = σ₂/σ₁` over the two smallest; `+∞` when `σ₁ = 0`.
    pub kappa: f64,
}

/// Rank index of `H̄`: the ratio of its two smallest singular values.
pub fn rank_index(hbar: &DMatrix<f64>) -> Result<RankDiagnostics, RecoveryError> {
    if hbar.nrows().min(hbar.ncols()) < 2 {
        return Err(RecoveryError::TooFewSingularValues);
    }
    let mut sv: Vec<f64> = hbar
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| a.partial_cmp(b).expect("singular values are finite"));
    let kappa = if sv[0] == 0.0 {
        f64::INFINITY
    } else {
        sv[1] / sv[0]
    };
    Ok(RankDiagnostics {
        singular_values: sv,
        kappa,
    })
}

/// Count of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(diag: &RankDiagnostics, rel_tol: f64) -> usize {
    let sigma_max = diag.singular_values.last().copied().unwrap_or(0.0);
    diag.singular_values
        .iter()
        .filter(|s| **s > rel_tol * sigma_max)
        .count()
}

/// Decision rule for a one-dimensional kernel: `κ ≥ γ` together with
/// the window-length gate `l > (r+n)/m`.
pub fn rank_test(
    diag: &RankDiagnostics,
    l: usize,
    r: usize,
    n: usize,
    m: usize,
    gamma: f64,
) -> bool {
    diag.kappa >= gamma && l * m > r + n
}

/// Smallest `σ₂/σ_max` at which the second singular value still counts
/// as resolved in double precision (about 100× the SVD noise floor of a
/// unit-Frobenius matrix).
pub const KERNEL_RESOLUTION_FLOOR: f64 = 1e-14;

/// Whether the kernel is numerically one-dimensional rather than
/// multi-dimensional: `σ₂` must sit above the rounding floor. When both
/// `σ₁` and `σ₂` are at working-precision zero — e.g. windows of an
/// exponentially decayed trajectory that has collapsed onto a single
/// mode — the ratio `κ` compares two rounding artifacts, and a large
/// value means nothing: the weights are not distinguishable from such
/// data and more observations are needed.
pub fn kernel_resolved(diag: &RankDiagnostics) -> bool {
    let sigma_max = diag.singular_values.last().copied().unwrap_or(0.0);
    diag.singular_values.len() >= 2
        && diag.singular_values[1] > KERNEL_RESOLUTION_FLOOR * sigma_max
}

/// `⌈(r+n-1)/m⌉`: no window shorter than this can satisfy the rank
/// condition, whatever the data.
pub fn uniform_lower_bound(r: usize, n: usize, m: usize) -> usize {
    (r + n - 1).div_ceil(m)
}

/// Minimizer of `‖H̄ [ω; λ]‖₂` subject to `Σωᵢ = 1`: the right singular
/// vector of the smallest singular value, rescaled by the reciprocal of
/// its leading-block sum. Requires at least as many rows as columns so
/// the kernel direction is pinned down.
pub fn recover_weights(
    hbar: &DMatrix<f64>,
    r: usize,
    n: usize,
) -> Result<(DVector<f64>, DVector<f64>), RecoveryError> {
    if hbar.ncols() != r + n {
        return Err(RecoveryError::DimensionMismatch(format!(
            "expected {} columns, got {}",
            r + n,
            hbar.ncols()
        )));
    }
    if hbar.iter().all(|v| *v == 0.0) {
        return Err(RecoveryError::ZeroMatrix);
    }
    if hbar.nrows() < hbar.ncols() {
        return Err(RecoveryError::Underdetermined {
            rows: hbar.nrows(),
            cols: hbar.ncols(),
        });
    }
    let svd = hbar.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite singular values"))
        .expect("at least one singular value");
    let v = v_t.row(min_idx).transpose();
    let weight_sum: f64 = v.rows(0, r).iter().sum();
    if weight_sum.abs() < 1e-8 {
        return Err(RecoveryError::SumDegenerateKernel);
    }
    let scaled = v / weight_sum;
    Ok((scaled.rows(0, r).into_owned(), scaled.rows(r, n).into_owned()))
}

/// `‖H [ω; λ]‖₂` on the unnormalized matrix: how far a candidate pair
/// is from the kernel.
pub fn kernel_residual(state: &RecoveryState, omega: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    assert_eq!(omega.len(), state.feature_dim(), "weight dimension");
    assert_eq!(lambda.len(), state.state_dim(), "costate dimension");
    (state.h1() * omega + state.h2() * lambda).norm()
}

/// Rank-index value at one window length. `kappa` is `None` while the
/// matrix is zero or has a single singular value; `+∞` (serialized as
/// null in JSON) marks an exactly rank-deficient matrix.
#[derive(Debug, Clone, Serialize)]
pub struct KappaSample {
    pub l: usize,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Ok,
    InsufficientObservations,
}

/// Outcome of the minimal-observation recovery loop.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub t: usize,
    pub l_min: Option<usize>,
    pub omega: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub kappa_history: Vec<KappaSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_omega: Option<f64>,
    pub status: RecoveryStatus,
}

impl RecoveryReport {
    pub fn succeeded(&self) -> bool {
        self.status == RecoveryStatus::Ok
    }

    /// `l,kappa` rows for plotting; infinite κ prints as `inf`, undefined
    /// as an empty field.
    pub fn kappa_history_csv(&self) -> String {
        let mut out = String::from("l,kappa\n");
        for entry in &self.kappa_history {
            match entry.kappa {
                Some(k) if k.is_finite() => {
                    out.push_str(&format!("{},{}\n", entry.l, crate::trajectory::format_float(k)))
                }
                Some(_) => out.push_str(&format!("{},inf\n", entry.l)),
                None => out.push_str(&format!("{},\n", entry.l)),
            }
        }
        out
    }
}

/// Runs the minimal-observation loop: seed with the first sample, then
/// extend one observation at a time until the rank test first passes;
/// recover the weights from the kernel of the normalized matrix at that
/// length. Stops with [`RecoveryStatus::InsufficientObservations`] when
/// `l_cap` observations never satisfy the test.
///
/// On top of the `κ ≥ γ` rule the loop requires [`kernel_resolved`]:
/// the rank condition it approximates is `rank = r+n-1`, which needs
/// exactly one vanishing singular value, and in floating point that is
/// only checkable while `σ₂` stays above the rounding floor.
///
/// The stream must yield at least `l_cap` samples; running dry earlier
/// is an error.
pub fn minimal_observation_ioc<I>(
    samples: I,
    gamma: f64,
    l_cap: usize,
) -> Result<RecoveryReport, RecoveryError>
where
    I: IntoIterator<Item = ObservationSample>,
{
    if gamma <= 1.0 {
        return Err(RecoveryError::InvalidGamma(gamma));
    }
    if l_cap == 0 {
        return Err(RecoveryError::InvalidCap);
    }
    let mut stream = samples.into_iter();
    let first = stream.next().ok_or(RecoveryError::StreamExhausted {
        have: 0,
        want: 1,
    })?;
    let mut state = RecoveryState::init(&first)?;
    let (r, n, m) = (state.feature_dim(), state.state_dim(), state.input_dim());
    let mut history = Vec::new();

    loop {
        let diag = match normalize(&state.matrix()) {
            Ok(hbar) => rank_index(&hbar).ok(),
            Err(_) => None,
        };
        history.push(KappaSample {
            l: state.len(),
            kappa: diag.as_ref().map(|d| d.kappa),
        });
        let passed = diag.as_ref().is_some_and(|d| {
            rank_test(d, state.len(), r, n, m, gamma) && kernel_resolved(d)
        });
        if passed {
            break;
        }
        if state.len() >= l_cap {
            return Ok(RecoveryReport {
                t: state.start(),
                l_min: None,
                omega: None,
                lambda: None,
                kappa_history: history,
                e_omega: None,
                status: RecoveryStatus::InsufficientObservations,
            });
        }
        let next = stream.next().ok_or(RecoveryError::StreamExhausted {
            have: state.len(),
            want: state.len() + 1,
        })?;
        state.update(&next)?;
    }

    let hbar = normalize(&state.matrix())?;
    let (omega, lambda) = recover_weights(&hbar, r, n)?;
    Ok(RecoveryReport {
        t: state.start(),
        l_min: Some(state.len()),
        omega: Some(omega.iter().copied().collect()),
        lambda: Some(lambda.iter().copied().collect()),
        kappa_history: history,
        e_omega: None,
        status: RecoveryStatus::Ok,
    })
}
