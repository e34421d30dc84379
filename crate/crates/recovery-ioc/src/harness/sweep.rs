//! Start-time sweeps and the recovery-vs-baseline comparison.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{kkt_ioc, KktIocProblem};
use crate::dynamics::DynamicalSystem;
use crate::features::FeatureSet;
use crate::metrics::recovery_error;
use crate::observation::{trajectory_samples, JacobianPolicy};
use crate::recovery::{
    minimal_observation_ioc, normalize, recover_weights, uniform_lower_bound, RecoveryState,
    RecoveryStatus,
};
use crate::trajectory::Trajectory;

/// Inputs of one start-time sweep over an observed trajectory.
pub struct SweepSpec<'a> {
    pub system: &'a dyn DynamicalSystem,
    pub features: &'a FeatureSet,
    /// Ground-truth weights padded to the feature count.
    pub truth: &'a DVector<f64>,
    pub trajectory: &'a Trajectory,
    pub gamma: f64,
    /// Windows stop one step short of the terminal (pinned endpoint).
    pub pinned_terminal: bool,
    pub policy: JacobianPolicy,
}

impl SweepSpec<'_> {
    /// Longest admissible window from start `t`.
    pub fn cap(&self, t: usize) -> usize {
        let horizon = self.trajectory.horizon();
        if self.pinned_terminal {
            horizon - t
        } else {
            horizon - t + 1
        }
    }

    /// Start times whose cap can ever satisfy the length gate.
    pub fn valid_starts(&self) -> Vec<usize> {
        let r = self.features.len();
        let n = self.system.state_dim();
        let m = self.system.input_dim();
        let gate = (r + n) / m + 1;
        (1..=self.trajectory.horizon())
            .filter(|t| self.cap(*t) >= gate)
            .collect()
    }
}

/// Outcome of one recovery run.
#[derive(Debug, Clone, Serialize)]
pub struct StartRecord {
    pub start: usize,
    pub l_min: Option<usize>,
    pub e_omega: Option<f64>,
    pub omega: Option<Vec<f64>>,
    pub status: String,
}

/// Per-start records plus their arithmetic means over successful runs.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub records: Vec<StartRecord>,
    pub succeeded: usize,
    pub insufficient: usize,
    pub failed: usize,
    pub average_l_min: Option<f64>,
    pub average_e_omega: Option<f64>,
}

impl SweepResult {
    fn from_records(records: Vec<StartRecord>) -> Self {
        let succeeded = records.iter().filter(|r| r.status == "ok").count();
        let insufficient = records
            .iter()
            .filter(|r| r.status == "insufficient_observations")
            .count();
        let failed = records.len() - succeeded - insufficient;
        let mean = |values: Vec<f64>| {
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let average_l_min = mean(
            records
                .iter()
                .filter_map(|r| r.l_min.map(|l| l as f64))
                .collect(),
        );
        let average_e_omega = mean(records.iter().filter_map(|r| r.e_omega).collect());
        Self {
            records,
            succeeded,
            insufficient,
            failed,
            average_l_min,
            average_e_omega,
        }
    }

    /// Mean |ω̂ᵢ| over the given feature indices across successful runs.
    pub fn mean_weight_magnitude(&self, indices: &[usize]) -> Option<f64> {
        let mut values = Vec::new();
        for record in &self.records {
            if let Some(omega) = &record.omega {
                for &i in indices {
                    values.push(omega[i].abs());
                }
            }
        }
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

/// Runs the minimal-observation loop from every admissible start time,
/// in parallel, with results ordered by start time.
pub fn run_start_time_sweep(spec: &SweepSpec<'_>) -> SweepResult {
    let samples = trajectory_samples(spec.trajectory, spec.system, spec.features, spec.policy);
    let starts = spec.valid_starts();
    let records: Vec<StartRecord> = starts
        .par_iter()
        .map(|&t| {
            let cap = spec.cap(t);
            let stream = samples[t - 1..t - 1 + cap].iter().cloned();
            match minimal_observation_ioc(stream, spec.gamma, cap) {
                Ok(report) => {
                    let (e_omega, omega) = match &report.omega {
                        Some(w) => {
                            let est = DVector::from_vec(w.clone());
                            (recovery_error(&est, spec.truth).ok(), Some(w.clone()))
                        }
                        None => (None, None),
                    };
                    StartRecord {
                        start: t,
                        l_min: report.l_min,
                        e_omega,
                        omega,
                        status: match report.status {
                            RecoveryStatus::Ok => "ok".into(),
                            RecoveryStatus::InsufficientObservations => {
                                "insufficient_observations".into()
                            }
                        },
                    }
                }
                Err(err) => StartRecord {
                    start: t,
                    l_min: None,
                    e_omega: None,
                    omega: None,
                    status: format!("error: {err}"),
                },
            }
        })
        .collect();
    SweepResult::from_records(records)
}

/// One point of the recovery-vs-baseline curves.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub start: usize,
    pub l: usize,
    pub e_recovery: Option<f64>,
    pub e_kkt: Option<f64>,
}

/// For each start time, grows the window one observation at a time and
/// records the recovery error of both estimators at every length: the
/// kernel estimate of the recovery matrix against the truncated-KKT
/// least-squares baseline.
pub fn run_lqr_comparison(spec: &SweepSpec<'_>, starts: &[usize]) -> Vec<ComparisonRow> {
    let samples = trajectory_samples(spec.trajectory, spec.system, spec.features, spec.policy);
    let r = spec.features.len();
    let n = spec.system.state_dim();
    let rows: Vec<Vec<ComparisonRow>> = starts
        .par_iter()
        .map(|&t| {
            let cap = spec.cap(t);
            let window = &samples[t - 1..t - 1 + cap];
            let mut state = RecoveryState::init(&window[0]).expect("consistent samples");
            let mut out = Vec::with_capacity(cap);
            for l in 1..=cap {
                if l > 1 {
                    state.update(&window[l - 1]).expect("consistent samples");
                }
                let e_recovery = normalize(&state.matrix())
                    .ok()
                    .and_then(|hbar| recover_weights(&hbar, r, n).ok())
                    .and_then(|(omega, _)| recovery_error(&omega, spec.truth).ok());
                let e_kkt = if l >= 2 {
                    kkt_ioc(&KktIocProblem {
                        samples: &window[..l],
                    })
                    .ok()
                    .and_then(|est| recovery_error(&est.omega, spec.truth).ok())
                } else {
                    None
                };
                out.push(ComparisonRow {
                    start: t,
                    l,
                    e_recovery,
                    e_kkt,
                });
            }
            out
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// First window length at which a curve stays below `threshold`.
pub fn first_crossing(
    rows: &[ComparisonRow],
    start: usize,
    threshold: f64,
    pick: impl Fn(&ComparisonRow) -> Option<f64>,
) -> Option<usize> {
    rows.iter()
        .filter(|row| row.start == start)
        .find(|row| pick(row).is_some_and(|e| e < threshold))
        .map(|row| row.l)
}

/// Tail uniform lower bound check helper: every successful record obeys
/// `l_min ≥ ⌈(r+n-1)/m⌉`.
pub fn all_above_lower_bound(result: &SweepResult, r: usize, n: usize, m: usize) -> bool {
    let bound = uniform_lower_bound(r, n, m);
    result
        .records
        .iter()
        .filter_map(|rec| rec.l_min)
        .all(|l| l >= bound)
}
