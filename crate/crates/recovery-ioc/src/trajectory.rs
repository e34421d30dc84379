//! Time-indexed state/input trajectories and their CSV form.
//!
//! Indexing follows the dynamics convention `x_{k+1} = f(x_k, u_{k+1})`:
//! a trajectory over horizon `T` stores states `x_0..x_T` and inputs
//! `u_1..u_T`, so the pair `(x_k, u_k)` couples the state at time `k`
//! with the input that produced it.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::DynamicalSystem;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("need {expected} states for horizon {horizon}, got {got}")]
    StateCount {
        expected: usize,
        horizon: usize,
        got: usize,
    },
    #[error("need {expected} inputs for horizon {horizon}, got {got}")]
    InputCount {
        expected: usize,
        horizon: usize,
        got: usize,
    },
    #[error("inconsistent vector dimensions at index {0}")]
    RaggedData(usize),
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// States `x_0..x_T` and inputs `u_1..u_T` over horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<DVector<f64>>,
    inputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, inputs: Vec<DVector<f64>>) -> Result<Self, TrajectoryError> {
        if states.is_empty() || states.len() != inputs.len() + 1 {
            return Err(TrajectoryError::StateCount {
                expected: inputs.len() + 1,
                horizon: inputs.len(),
                got: states.len(),
            });
        }
        let n = states[0].len();
        if let Some(i) = states.iter().position(|s| s.len() != n) {
            return Err(TrajectoryError::RaggedData(i));
        }
        if !inputs.is_empty() {
            let m = inputs[0].len();
            if let Some(i) = inputs.iter().position(|s| s.len() != m) {
                return Err(TrajectoryError::RaggedData(i));
            }
        }
        Ok(Self { states, inputs })
    }

    /// Horizon `T`.
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, DVector::len)
    }

    /// State `x_k` for `0 ≤ k ≤ T`.
    pub fn state(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    /// Input `u_k` for `1 ≤ k ≤ T`.
    pub fn input(&self, k: usize) -> &DVector<f64> {
        assert!(k >= 1, "inputs are indexed from 1");
        &self.inputs[k - 1]
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[DVector<f64>] {
        &self.inputs
    }

    /// Largest dynamics defect `max_k ‖x_{k+1} - f(x_k, u_{k+1})‖_∞`.
    pub fn dynamics_defect(&self, system: &dyn DynamicalSystem) -> f64 {
        (0..self.horizon())
            .map(|k| {
                let predicted = system.step(self.state(k), self.input(k + 1));
                (self.state(k + 1) - predicted).amax()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_dynamically_consistent(&self, system: &dyn DynamicalSystem, tol: f64) -> bool {
        self.dynamics_defect(system) < tol
    }

    /// CSV with header `k,x1..xn,u1..um`; the `k = 0` row has empty
    /// input fields; floats carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut out = String::new();
        out.push('k');
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=m {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for k in 0..=self.horizon() {
            let _ = write!(out, "{k}");
            for v in self.state(k).iter() {
                let _ = write!(out, ",{}", format_float(*v));
            }
            if k == 0 {
                for _ in 0..m {
                    out.push(',');
                }
            } else {
                for v in self.input(k).iter() {
                    let _ = write!(out, ",{}", format_float(*v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrajectoryError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, TrajectoryError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(TrajectoryError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let n = header.split(',').filter(|c| c.starts_with('x')).count();
        let m = header.split(',').filter(|c| c.starts_with('u')).count();

        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 1 + n + m {
                return Err(TrajectoryError::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, got {}", 1 + n + m, fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64, TrajectoryError> {
                s.parse().map_err(|_| TrajectoryError::Parse {
                    line: idx + 1,
                    message: format!("bad float {s:?}"),
                })
            };
            let mut state = DVector::zeros(n);
            for i in 0..n {
                state[i] = parse(fields[1 + i])?;
            }
            states.push(state);
            let input_fields = &fields[1 + n..];
            if input_fields.iter().all(|f| f.is_empty()) {
                continue; // the k = 0 row
            }
            let mut input = DVector::zeros(m);
            for i in 0..m {
                input[i] = parse(input_fields[i])?;
            }
            inputs.push(input);
        }
        Self::new(states, inputs)
    }

    pub fn read_csv(path: &Path) -> Result<Self, TrajectoryError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::lti_system;
    use nalgebra::{dmatrix, dvector};

    fn sample_trajectory() -> Trajectory {
        let states = vec![
            dvector![2.0, -2.0],
            dvector![-3.0, 1.0],
            dvector![4.0 / 3.0, 0.25],
        ];
        let inputs = vec![dvector![1.0], dvector![0.1]];
        Trajectory::new(states, inputs).unwrap()
    }

    #[test]
    fn length_invariants() {
        let traj = sample_trajectory();
        assert_eq!(traj.horizon(), 2);
        assert_eq!(traj.states().len(), 3);
        assert_eq!(traj.inputs().len(), 2);
        assert!(Trajectory::new(vec![dvector![0.0]], vec![dvector![0.0]]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let traj = sample_trajectory();
        let csv = traj.to_csv();
        assert!(csv.starts_with("k,x1,x2,u1\n"));
        // Row k = 0 ends with an empty input field.
        let first_row = csv.lines().nth(1).unwrap();
        assert!(first_row.ends_with(','));
        let back = Trajectory::from_csv(&csv).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn defect_detects_inconsistent_dynamics() {
        let sys = lti_system(dmatrix![-1.0, 1.0; 0.0, 1.0], dmatrix![1.0; 3.0]).unwrap();
        let consistent = Trajectory::new(
            vec![dvector![2.0, -2.0], dvector![-3.0, 1.0]],
            vec![dvector![1.0]],
        )
        .unwrap();
        assert!(consistent.is_dynamically_consistent(&sys, 1e-8));
        let broken = Trajectory::new(
            vec![dvector![2.0, -2.0], dvector![-3.0, 1.5]],
            vec![dvector![1.0]],
        )
        .unwrap();
        assert!(!broken.is_dynamically_consistent(&sys, 1e-8));
        assert!((broken.dynamics_defect(&sys) - 0.5).abs() < 1e-12);
    }
}
