//! Command-line front end for the recovery-matrix IOC experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use recovery_ioc::harness::{
    self, all_passed, CheckOutcome, ExperimentConfig, SystemKind,
};

#[derive(Parser)]
#[command(
    name = "ioc",
    about = "Inverse optimal control from incomplete observations: trajectory generation, \
             weight recovery and the experiment sweeps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON experiment config; a built-in default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the rank-index threshold.
    #[arg(long)]
    gamma: Option<f64>,
    /// Override the noise levels with a single value.
    #[arg(long)]
    sigma: Option<f64>,
    /// Full-size arm configuration (T = 2000, Δt = 1/2000).
    #[arg(long)]
    paper_scale: bool,
    /// Evaluate the built-in trend checks and exit nonzero on failure.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the LQR instance and write its trajectory CSV.
    GenerateLqr(CommonOpts),
    /// Solve the arm reach problem and write its trajectory CSV.
    GenerateArm(CommonOpts),
    /// Run minimal-observation recovery from a single start time.
    Recover {
        #[command(flatten)]
        common: CommonOpts,
        /// Observation starting time (1-based).
        #[arg(long, default_value_t = 1)]
        start: usize,
    },
    /// Recovery-matrix vs KKT-baseline error curves on the LQR instance.
    CompareKkt(CommonOpts),
    /// Start-time sweep across noise levels on the arm.
    SweepNoise(CommonOpts),
    /// Start-time sweep across nested candidate feature sets.
    SweepFeatures(CommonOpts),
    /// Start-time sweep across rank-index thresholds.
    SweepGamma(CommonOpts),
}

fn load_config(
    opts: &CommonOpts,
    default: ExperimentConfig,
) -> Result<ExperimentConfig, harness::HarnessError> {
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => default,
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(gamma) = opts.gamma {
        cfg.gamma = gamma;
    }
    if let Some(sigma) = opts.sigma {
        cfg.sigmas = vec![sigma];
    }
    if opts.paper_scale && matches!(cfg.system, SystemKind::Arm) && opts.config.is_none() {
        let scale = ExperimentConfig::arm_default(true);
        cfg.horizon = scale.horizon;
        cfg.dt = scale.dt;
    }
    Ok(cfg)
}

fn print_checks(checks: &[CheckOutcome]) {
    for check in checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("CHECK {verdict} {}: {}", check.name, check.detail);
    }
}

fn finish(checks: Vec<CheckOutcome>, check_mode: bool) -> ExitCode {
    if check_mode {
        print_checks(&checks);
        if !all_passed(&checks) {
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}

fn run() -> Result<ExitCode, harness::HarnessError> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenerateLqr(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::lqr_default())?;
            let summary = harness::generate_lqr(&cfg, &opts.out)?;
            println!(
                "wrote {} (T = {}, optimality residual {:.3e})",
                summary.trajectory_csv.display(),
                summary.horizon,
                summary.optimality_residual
            );
            Ok(finish(summary.checks, opts.check))
        }
        Command::GenerateArm(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::arm_default(opts.paper_scale))?;
            let summary = harness::generate_arm(&cfg, &opts.out)?;
            println!(
                "wrote {} (T = {}, KKT residual {:.3e})",
                summary.trajectory_csv.display(),
                summary.horizon,
                summary.optimality_residual
            );
            Ok(finish(summary.checks, opts.check))
        }
        Command::Recover { common, start } => {
            let default = ExperimentConfig::lqr_default();
            let cfg = load_config(&common, default)?;
            let sigma = cfg.sigmas.first().copied().unwrap_or(0.0);
            let summary = harness::recover_single(&cfg, start, sigma, &common.out)?;
            match (&summary.report.l_min, &summary.report.e_omega) {
                (Some(l), Some(e)) => {
                    println!("recovered at l_min = {l} with e_omega = {e:.3e}")
                }
                _ => println!("recovery did not terminate: {:?}", summary.report.status),
            }
            Ok(finish(summary.checks, common.check))
        }
        Command::CompareKkt(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::lqr_default())?;
            let output = harness::compare_kkt(&cfg, &opts.out)?;
            println!("wrote {}", output.rows_csv.display());
            for c in &output.crossings {
                println!(
                    "start {:>3}: recovery crosses 1e-2 at l = {:?}, baseline at l = {:?}",
                    c.start, c.recovery_crossing, c.kkt_crossing
                );
            }
            Ok(finish(output.checks, opts.check))
        }
        Command::SweepNoise(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::arm_default(opts.paper_scale))?;
            let output = harness::sweep_noise(&cfg, &opts.out)?;
            for (sigma, l, e) in &output.per_sigma {
                println!(
                    "sigma {sigma:>8.1e}: avg l_min = {:?}, avg e_omega = {:?}",
                    l, e
                );
            }
            Ok(finish(output.checks, opts.check))
        }
        Command::SweepFeatures(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::arm_candidates_default(opts.paper_scale))?;
            let output = harness::sweep_features(&cfg, &opts.out)?;
            for row in &output.rows {
                println!(
                    "|F| = {}: avg l_min = {:?}, avg e_omega = {:?}, irrelevant |w| = {:?}",
                    row.set_size, row.average_l_min, row.average_e_omega, row.mean_irrelevant_weight
                );
            }
            Ok(finish(output.checks, opts.check))
        }
        Command::SweepGamma(opts) => {
            let cfg = load_config(&opts, ExperimentConfig::arm_default(opts.paper_scale))?;
            let output = harness::sweep_gamma(&cfg, &opts.out)?;
            for (gamma, l, e) in &output.rows {
                println!("gamma {gamma:>6}: avg l_min = {:?}, avg e_omega = {:?}", l, e);
            }
            Ok(finish(output.checks, opts.check))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
