//! The experiment pipelines behind each CLI subcommand. Every pipeline
//! writes its tables under an output directory and returns a summary
//! with trend checks that the CLI can turn into an exit code.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use super::output::{
    aggregate_csv, comparison_csv, float_cell, opt_float_cell, records_csv, write_report_json,
    write_string,
};
use super::sweep::{
    first_crossing, run_lqr_comparison, run_start_time_sweep, ComparisonRow, SweepResult,
    SweepSpec,
};
use super::{build_scenario, inject_noise, split_seed, BuiltSystem, ExperimentConfig, HarnessError, Scenario};
use crate::costate::stationarity_residual;
use crate::features::monomial_features;
use crate::metrics::recovery_error;
use crate::observation::{window_samples, JacobianPolicy};
use crate::recovery::{minimal_observation_ioc, uniform_lower_bound, RecoveryReport};
use crate::trajectory::Trajectory;

/// One named pass/fail verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

pub fn all_passed(checks: &[CheckOutcome]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn sigma_tag(sigma: f64) -> String {
    if sigma == 0.0 {
        "0".into()
    } else {
        format!("{sigma:e}")
    }
}

/// The observed trajectory for one noise cell: the scenario trajectory
/// with state noise and recomputed torques for the arm, or the raw
/// trajectory when `σ = 0`.
fn observed_trajectory(
    scenario: &Scenario,
    sigma: f64,
    sigma_index: usize,
    trial: usize,
) -> Result<Trajectory, HarnessError> {
    if sigma == 0.0 {
        return Ok(scenario.trajectory.clone());
    }
    match &scenario.system {
        BuiltSystem::Arm(system) => {
            let seed = split_seed(scenario.config.seed, &[1, sigma_index as u64, trial as u64]);
            Ok(inject_noise(
                &scenario.trajectory,
                system.continuous(),
                sigma,
                system.dt(),
                seed,
            ))
        }
        BuiltSystem::Lti(_) => Err(HarnessError::Config(
            "noise injection is defined for the arm scenario only".into(),
        )),
    }
}

fn sweep_spec<'a>(scenario: &'a Scenario, observed: &'a Trajectory, gamma: f64) -> SweepSpec<'a> {
    SweepSpec {
        system: scenario.system.as_dyn(),
        features: &scenario.features,
        truth: &scenario.truth,
        trajectory: observed,
        gamma,
        pinned_terminal: scenario.pinned_terminal(),
        policy: JacobianPolicy::TransitionPoint,
    }
}

// ---------------------------------------------------------------------
// generate-lqr / generate-arm
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GenerateSummary {
    pub trajectory_csv: PathBuf,
    pub horizon: usize,
    pub dynamics_defect: f64,
    pub optimality_residual: f64,
    pub checks: Vec<CheckOutcome>,
}

pub fn generate_lqr(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<GenerateSummary, HarnessError> {
    let scenario = build_scenario(config)?;
    let path = out_dir.join("trajectory.csv");
    write_string(&path, &scenario.trajectory.to_csv())?;
    let defect = scenario.trajectory.dynamics_defect(scenario.system.as_dyn());
    let residual = stationarity_residual(
        &scenario.trajectory,
        scenario.system.as_dyn(),
        &scenario.features,
        &scenario.truth,
    );
    let checks = vec![
        CheckOutcome::new("dynamics-consistency", defect < 1e-10, format!("{defect:.3e}")),
        CheckOutcome::new("stationarity", residual < 1e-8, format!("{residual:.3e}")),
    ];
    Ok(GenerateSummary {
        trajectory_csv: path,
        horizon: scenario.trajectory.horizon(),
        dynamics_defect: defect,
        optimality_residual: residual,
        checks,
    })
}

pub fn generate_arm(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<GenerateSummary, HarnessError> {
    let scenario = build_scenario(config)?;
    let path = out_dir.join("trajectory.csv");
    write_string(&path, &scenario.trajectory.to_csv())?;
    let solve = scenario.solve.as_ref().expect("arm scenario solves an OCP");
    write_string(&out_dir.join("solver_log.jsonl"), &solve.log_jsonl())?;
    let defect = scenario.trajectory.dynamics_defect(scenario.system.as_dyn());
    let goal = DVector::from_vec(config.x_goal.clone().expect("validated"));
    let end_error = (scenario.trajectory.state(config.horizon) - goal).amax();
    let checks = vec![
        CheckOutcome::new("kkt-residual", solve.kkt_residual < 1e-8, format!("{:.3e}", solve.kkt_residual)),
        CheckOutcome::new("dynamics-consistency", defect < 1e-8, format!("{defect:.3e}")),
        CheckOutcome::new("end-state", end_error < 1e-8, format!("{end_error:.3e}")),
    ];
    Ok(GenerateSummary {
        trajectory_csv: path,
        horizon: scenario.trajectory.horizon(),
        dynamics_defect: defect,
        optimality_residual: solve.kkt_residual,
        checks,
    })
}

// ---------------------------------------------------------------------
// recover (single window)
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct RecoverSummary {
    pub report: RecoveryReport,
    pub checks: Vec<CheckOutcome>,
}

pub fn recover_single(
    config: &ExperimentConfig,
    start: usize,
    sigma: f64,
    out_dir: &Path,
) -> Result<RecoverSummary, HarnessError> {
    let scenario = build_scenario(config)?;
    let observed = observed_trajectory(&scenario, sigma, 0, 0)?;
    let spec = sweep_spec(&scenario, &observed, config.gamma);
    let cap = spec.cap(start);
    if start < 1 || start > observed.horizon() || cap == 0 {
        return Err(HarnessError::Config(format!("start {start} out of range")));
    }
    let samples = window_samples(
        &observed,
        scenario.system.as_dyn(),
        &scenario.features,
        start,
        cap,
        JacobianPolicy::TransitionPoint,
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut report = minimal_observation_ioc(samples.into_iter(), config.gamma, cap)?;
    if let Some(omega) = &report.omega {
        report.e_omega = recovery_error(&DVector::from_vec(omega.clone()), &scenario.truth).ok();
    }
    write_report_json(&out_dir.join("report.json"), &report)?;
    write_string(&out_dir.join("kappa.csv"), &report.kappa_history_csv())?;
    let passed = report.succeeded() && report.e_omega.is_some_and(|e| e < 1e-2);
    let checks = vec![CheckOutcome::new(
        "recovery",
        passed,
        format!("status {:?}, e_omega {:?}", report.status, report.e_omega),
    )];
    Ok(RecoverSummary { report, checks })
}

// ---------------------------------------------------------------------
// compare-kkt
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ComparisonOutput {
    pub rows_csv: PathBuf,
    pub crossings: Vec<CrossingSummary>,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Serialize)]
pub struct CrossingSummary {
    pub start: usize,
    pub recovery_crossing: Option<usize>,
    pub kkt_crossing: Option<usize>,
}

pub fn compare_kkt(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<ComparisonOutput, HarnessError> {
    let scenario = build_scenario(config)?;
    let observed = scenario.trajectory.clone();
    let spec = sweep_spec(&scenario, &observed, config.gamma);
    let starts = config
        .start_times
        .clone()
        .unwrap_or_else(|| vec![1, 3, 6, 54, 84]);
    let rows = run_lqr_comparison(&spec, &starts);
    let path = out_dir.join("comparison.csv");
    write_string(&path, &comparison_csv(&rows))?;

    let crossings: Vec<CrossingSummary> = starts
        .iter()
        .map(|&t| CrossingSummary {
            start: t,
            recovery_crossing: first_crossing(&rows, t, 0.01, |r| r.e_recovery),
            kkt_crossing: first_crossing(&rows, t, 0.01, |r| r.e_kkt),
        })
        .collect();
    write_report_json(&out_dir.join("crossings.json"), &crossings)?;

    let mut checks = Vec::new();
    for c in &crossings {
        checks.push(CheckOutcome::new(
            &format!("recovery-converges-start-{}", c.start),
            c.recovery_crossing.is_some(),
            format!("{:?}", c.recovery_crossing),
        ));
    }
    Ok(ComparisonOutput {
        rows_csv: path,
        crossings,
        checks,
        rows,
    })
}

// ---------------------------------------------------------------------
// sweep-noise
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct NoiseCell {
    pub sigma: f64,
    pub trial: usize,
    pub result: SweepResult,
}

#[derive(Debug, Serialize)]
pub struct NoiseSweepOutput {
    pub cells: Vec<NoiseCell>,
    /// Per-σ averages over all trials: `(σ, avg l_min, avg e_ω)`.
    pub per_sigma: Vec<(f64, Option<f64>, Option<f64>)>,
    pub checks: Vec<CheckOutcome>,
}

pub fn sweep_noise(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<NoiseSweepOutput, HarnessError> {
    let scenario = build_scenario(config)?;
    let mut cells = Vec::new();
    for (si, &sigma) in config.sigmas.iter().enumerate() {
        for trial in 0..config.trials {
            let observed = observed_trajectory(&scenario, sigma, si, trial)?;
            let spec = sweep_spec(&scenario, &observed, config.gamma);
            let result = run_start_time_sweep(&spec);
            write_string(
                &out_dir.join(format!("records_sigma{}_trial{}.csv", sigma_tag(sigma), trial)),
                &records_csv(&result.records),
            )?;
            cells.push(NoiseCell {
                sigma,
                trial,
                result,
            });
        }
    }

    let per_sigma: Vec<(f64, Option<f64>, Option<f64>)> = config
        .sigmas
        .iter()
        .map(|&sigma| {
            let l_values: Vec<f64> = cells
                .iter()
                .filter(|c| c.sigma == sigma)
                .flat_map(|c| c.result.records.iter().filter_map(|r| r.l_min.map(|l| l as f64)))
                .collect();
            let e_values: Vec<f64> = cells
                .iter()
                .filter(|c| c.sigma == sigma)
                .flat_map(|c| c.result.records.iter().filter_map(|r| r.e_omega))
                .collect();
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    None
                } else {
                    Some(v.iter().sum::<f64>() / v.len() as f64)
                }
            };
            (sigma, mean(&l_values), mean(&e_values))
        })
        .collect();

    let rows: Vec<Vec<String>> = per_sigma
        .iter()
        .map(|(sigma, l, e)| {
            vec![
                float_cell(*sigma),
                opt_float_cell(*l),
                opt_float_cell(*e),
            ]
        })
        .collect();
    write_string(
        &out_dir.join("aggregate.csv"),
        &aggregate_csv("sigma,avg_l_min,avg_e_omega", &rows),
    )?;
    write_report_json(&out_dir.join("summary.json"), &per_sigma)?;

    let mut checks = Vec::new();
    let l_means: Vec<f64> = per_sigma.iter().filter_map(|(_, l, _)| *l).collect();
    if l_means.len() == per_sigma.len() && l_means.len() >= 2 {
        let increasing = l_means.windows(2).all(|w| w[1] > w[0]);
        checks.push(CheckOutcome::new(
            "l-min-increases-with-noise",
            increasing,
            format!("{l_means:?}"),
        ));
    }
    for (sigma, _, e) in &per_sigma {
        if let Some(e) = e {
            checks.push(CheckOutcome::new(
                &format!("e-omega-sigma-{}", sigma_tag(*sigma)),
                *e < 0.02,
                format!("{e:.3e}"),
            ));
        }
    }
    Ok(NoiseSweepOutput {
        cells,
        per_sigma,
        checks,
    })
}

// ---------------------------------------------------------------------
// sweep-features
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct FeatureSweepRow {
    pub set_size: usize,
    pub lower_bound: usize,
    pub average_l_min: Option<f64>,
    pub average_e_omega: Option<f64>,
    pub mean_irrelevant_weight: Option<f64>,
    pub min_l_min: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct FeatureSweepOutput {
    pub rows: Vec<FeatureSweepRow>,
    pub checks: Vec<CheckOutcome>,
}

/// Sweeps nested prefixes of the candidate feature list, from the
/// relevant set alone up to the full list, all on the same noisy data.
pub fn sweep_features(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<FeatureSweepOutput, HarnessError> {
    let scenario = build_scenario(config)?;
    let monomials = config.monomials()?;
    let relevant = config.weights.iter().filter(|w| **w != 0.0).count();
    if relevant == 0 || config.weights[..relevant].iter().any(|w| *w == 0.0) {
        return Err(HarnessError::Config(
            "relevant features (nonzero weights) must form a prefix".into(),
        ));
    }
    let sigma = config.sigmas.first().copied().unwrap_or(0.0);
    let observed = observed_trajectory(&scenario, sigma, 0, 0)?;
    let n = scenario.system.as_dyn().state_dim();
    let m = scenario.system.as_dyn().input_dim();

    let mut rows = Vec::new();
    for size in relevant..=monomials.len() {
        let features = monomial_features(&monomials[..size], n, m)?;
        let truth = DVector::from_vec(config.weights[..size].to_vec());
        let spec = SweepSpec {
            system: scenario.system.as_dyn(),
            features: &features,
            truth: &truth,
            trajectory: &observed,
            gamma: config.gamma,
            pinned_terminal: scenario.pinned_terminal(),
            policy: JacobianPolicy::TransitionPoint,
        };
        let result = run_start_time_sweep(&spec);
        write_string(
            &out_dir.join(format!("records_features{size}.csv")),
            &records_csv(&result.records),
        )?;
        let irrelevant: Vec<usize> = (relevant..size).collect();
        rows.push(FeatureSweepRow {
            set_size: size,
            lower_bound: uniform_lower_bound(size, n, m),
            average_l_min: result.average_l_min,
            average_e_omega: result.average_e_omega,
            mean_irrelevant_weight: result.mean_weight_magnitude(&irrelevant),
            min_l_min: result.records.iter().filter_map(|r| r.l_min).min(),
        });
    }

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.set_size.to_string(),
                r.lower_bound.to_string(),
                opt_float_cell(r.average_l_min),
                opt_float_cell(r.average_e_omega),
                opt_float_cell(r.mean_irrelevant_weight),
                r.min_l_min.map(|v| v.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_string(
        &out_dir.join("aggregate.csv"),
        &aggregate_csv(
            "set_size,lower_bound,avg_l_min,avg_e_omega,mean_irrelevant_weight,min_l_min",
            &table,
        ),
    )?;
    write_report_json(&out_dir.join("summary.json"), &rows)?;

    let mut checks = Vec::new();
    let l_means: Vec<f64> = rows.iter().filter_map(|r| r.average_l_min).collect();
    checks.push(CheckOutcome::new(
        "l-min-increases-with-set-size",
        l_means.len() == rows.len() && l_means.windows(2).all(|w| w[1] > w[0]),
        format!("{l_means:?}"),
    ));
    let irr_ok = rows
        .iter()
        .filter_map(|r| r.mean_irrelevant_weight)
        .all(|v| v < 1e-2);
    checks.push(CheckOutcome::new(
        "irrelevant-weights-near-zero",
        irr_ok,
        "mean |w| of irrelevant features".into(),
    ));
    let bound_ok = rows.iter().all(|r| {
        r.min_l_min
            .map(|min| min >= r.lower_bound)
            .unwrap_or(true)
    });
    checks.push(CheckOutcome::new(
        "uniform-lower-bound",
        bound_ok,
        "l_min >= ceil((r+n-1)/m)".into(),
    ));
    Ok(FeatureSweepOutput { rows, checks })
}

// ---------------------------------------------------------------------
// sweep-gamma
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct GammaSweepOutput {
    /// `(γ, avg l_min, avg e_ω)` per threshold.
    pub rows: Vec<(f64, Option<f64>, Option<f64>)>,
    pub checks: Vec<CheckOutcome>,
}

pub fn sweep_gamma(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<GammaSweepOutput, HarnessError> {
    let scenario = build_scenario(config)?;
    let sigma = config.sigmas.first().copied().unwrap_or(0.0);
    let observed = observed_trajectory(&scenario, sigma, 0, 0)?;
    let mut rows = Vec::new();
    for &gamma in &config.gammas {
        let spec = sweep_spec(&scenario, &observed, gamma);
        let result = run_start_time_sweep(&spec);
        write_string(
            &out_dir.join(format!("records_gamma{gamma}.csv")),
            &records_csv(&result.records),
        )?;
        rows.push((gamma, result.average_l_min, result.average_e_omega));
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(g, l, e)| vec![float_cell(*g), opt_float_cell(*l), opt_float_cell(*e)])
        .collect();
    write_string(
        &out_dir.join("aggregate.csv"),
        &aggregate_csv("gamma,avg_l_min,avg_e_omega", &table),
    )?;
    write_report_json(&out_dir.join("summary.json"), &rows)?;

    let mut checks = Vec::new();
    let l_means: Vec<f64> = rows.iter().filter_map(|(_, l, _)| *l).collect();
    checks.push(CheckOutcome::new(
        "l-min-nondecreasing-in-gamma",
        l_means.len() == rows.len() && l_means.windows(2).all(|w| w[1] >= w[0]),
        format!("{l_means:?}"),
    ));
    let e_at = |gamma: f64| {
        rows.iter()
            .find(|(g, _, _)| *g == gamma)
            .and_then(|(_, _, e)| *e)
    };
    if let (Some(e100), Some(e600)) = (e_at(100.0), e_at(600.0)) {
        checks.push(CheckOutcome::new(
            "accuracy-saturates-past-100",
            e100 <= 2.0 * e600,
            format!("e(100) = {e100:.3e}, e(600) = {e600:.3e}"),
        ));
    }
    Ok(GammaSweepOutput { rows, checks })
}
