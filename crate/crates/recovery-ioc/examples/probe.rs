// Probe: effect of delaying the rank test k steps past the length gate.
use nalgebra::DVector;
use recovery_ioc::harness::{build_scenario, inject_noise, split_seed, ExperimentConfig, BuiltSystem};
use recovery_ioc::features::monomial_features;
use recovery_ioc::metrics::recovery_error;
use recovery_ioc::observation::{trajectory_samples, JacobianPolicy, ObservationSample};
use recovery_ioc::recovery::{kernel_resolved, normalize, rank_index, recover_weights, RecoveryState};

fn run_with_extra_gate(samples: &[ObservationSample], gamma: f64, cap: usize, extra: usize,
                       truth: &DVector<f64>) -> Option<(usize, f64)> {
    let mut state = RecoveryState::init(&samples[0]).unwrap();
    let (r, n, m) = (state.feature_dim(), state.state_dim(), state.input_dim());
    let gate = (r + n) / m + 1;
    for l in 1..=cap {
        if l > 1 { state.update(&samples[l - 1]).unwrap(); }
        if l < gate + extra { continue; }
        if let Ok(hbar) = normalize(&state.matrix()) {
            if let Ok(diag) = rank_index(&hbar) {
                if diag.kappa >= gamma && kernel_resolved(&diag) {
                    let (omega, _) = recover_weights(&hbar, r, n).ok()?;
                    let e = recovery_error(&omega, truth).unwrap();
                    return Some((l, e));
                }
            }
        }
    }
    None
}

fn main() {
    let cfg = ExperimentConfig::arm_default(false);
    let scenario = build_scenario(&cfg).unwrap();
    let arm = match &scenario.system { BuiltSystem::Arm(s) => s, _ => unreachable!() };
    let cand = ExperimentConfig::arm_candidates_default(false);
    let monos = cand.monomials().unwrap();

    for extra in [0usize, 1, 2, 3] {
        println!("=== extra gate steps = {extra} ===");
        // (a) criterion 6 cells: gamma 30, three sigmas, 3 realizations
        for sigma in [1e-5, 1e-4, 1e-3] {
            let mut ls = Vec::new(); let mut es = Vec::new(); let mut flukes = 0; let mut insuf = 0;
            for trial in 0..3u64 {
                let observed = inject_noise(&scenario.trajectory, arm.continuous(), sigma, arm.dt(), split_seed(cfg.seed, &[1, trial, 99]));
                let samples = trajectory_samples(&observed, scenario.system.as_dyn(), &scenario.features, JacobianPolicy::TransitionPoint);
                for t in 1..=196usize {
                    let cap = 200 - t;
                    if cap < 4 { continue; }
                    match run_with_extra_gate(&samples[t-1..t-1+cap], 30.0, cap, extra, &scenario.truth) {
                        Some((l, e)) => { ls.push(l as f64); es.push(e); if e > 0.02 { flukes += 1; } }
                        None => insuf += 1,
                    }
                }
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
            println!("  g30 sigma {sigma:>5.0e}: ok {:>3} insuf {insuf:>3} flukes {flukes:>2} l_mean {:>7.2} e_mean {:.3e}", ls.len(), mean(&ls), mean(&es));
        }
        // (b) criterion 7 cells: gamma 100, sigma 1e-4, sizes 2..6, 3 realizations
        for size in 2..=6usize {
            let features = monomial_features(&monos[..size], 4, 2).unwrap();
            let truth = DVector::from_vec(cand.weights[..size].to_vec());
            let mut ls = Vec::new(); let mut es = Vec::new(); let mut flukes = 0; let mut insuf = 0;
            for trial in 0..3u64 {
                let observed = inject_noise(&scenario.trajectory, arm.continuous(), 1e-4, arm.dt(), split_seed(cfg.seed, &[1, trial, 99]));
                let samples = trajectory_samples(&observed, scenario.system.as_dyn(), &features, JacobianPolicy::TransitionPoint);
                for t in 1..=196usize {
                    let cap = 200 - t;
                    let gate = (size + 4) / 2 + 1;
                    if cap < gate + extra { continue; }
                    match run_with_extra_gate(&samples[t-1..t-1+cap], 100.0, cap, extra, &truth) {
                        Some((l, e)) => { ls.push(l as f64); es.push(e); if e > 0.02 { flukes += 1; } }
                        None => insuf += 1,
                    }
                }
            }
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len().max(1) as f64;
            println!("  g100 |F|={size}: ok {:>3} insuf {insuf:>3} flukes {flukes:>3} l_mean {:>7.2} e_mean {:.3e}", ls.len(), mean(&ls), mean(&es));
        }
    }
}
