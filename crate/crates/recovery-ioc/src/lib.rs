//! Inverse optimal control from incomplete trajectory observations.
//!
//! The library recovers the feature weights of an unknown cost function
//! from a contiguous window of an optimal trajectory. The central object
//! is the *recovery matrix* `H(t, l)`: a block matrix assembled from the
//! dynamics and feature Jacobians along the observation window whose
//! kernel contains the stacked true weights and the costate just beyond
//! the window. Once the matrix reaches rank `r + n - 1` (detected through
//! a singular-value rank index), the weights are read off its kernel.
//!
//! Main pieces:
//!
//! - [`dynamics`] / [`arm`]: discrete-time systems with analytic
//!   Jacobians, including an LTI system and a two-link arm.
//! - [`features`]: weighted feature libraries (coordinate monomials).
//! - [`recovery`]: recovery-matrix construction, incremental updates,
//!   rank testing and kernel-based weight extraction.
//! - [`lqr`] / [`transcription`]: forward solvers that generate
//!   ground-truth optimal trajectories.
//! - [`costate`]: backward costate recursion and stationarity residuals,
//!   used as the optimality oracle throughout the test suite.
//! - [`baseline`]: a KKT-residual weight estimator that ignores the
//!   future costate, for comparison.
//! - [`harness`]: reproducible experiment pipelines (noise injection,
//!   start-time sweeps, parameter studies) behind the `ioc` CLI.

pub mod arm;
pub mod baseline;
pub mod costate;
pub mod diff;
pub mod dynamics;
pub mod features;
pub mod harness;
pub mod lqr;
pub mod metrics;
pub mod observation;
pub mod recovery;
pub mod trajectory;
pub mod transcription;

pub use arm::{ArmDynamics, ArmParameters};
pub use baseline::{kkt_ioc, KktIocProblem};
pub use costate::{compute_costates, stationarity_residual};
pub use dynamics::{discretize_euler, lti_system, DynamicalSystem, EulerDiscretized, Lti};
pub use features::{monomial_features, Coordinate, FeatureSet, Monomial};
pub use lqr::{solve_lqr, LqrProblem, LqrSolution};
pub use metrics::recovery_error;
pub use observation::{window_samples, JacobianPolicy, ObservationSample};
pub use recovery::{
    kernel_resolved, kernel_residual, minimal_observation_ioc, normalize, rank_index, rank_test,
    recover_weights, uniform_lower_bound, RankDiagnostics, RecoveryReport, RecoveryState,
    RecoveryStatus,
};
pub use trajectory::Trajectory;
pub use transcription::{solve_fixed_endpoint, FixedEndpointOcp, SolverOptions};
