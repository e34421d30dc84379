//! Sensor-noise simulation for arm trajectories.

use nalgebra::{DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::arm::ArmDynamics;
use crate::trajectory::Trajectory;

/// Adds i.i.d. `N(0, σ²)` noise to every state coordinate, then
/// recomputes the torque trajectory from the noisy states through
/// discretized inverse dynamics: accelerations from forward differences
/// of the noisy velocities, `τ = M θ̈ + C θ̇ + g` at the noisy sample,
/// indexed so that `u_{k+1}` pairs with the step leaving `x_k`. This
/// mirrors how torques would be reconstructed from real joint encoders.
///
/// With `σ = 0` the states pass through unchanged and, on a trajectory
/// of the same Euler discretization, the recomputation inverts the
/// forward dynamics step for step.
pub fn inject_noise(
    trajectory: &Trajectory,
    arm: &ArmDynamics,
    sigma: f64,
    dt: f64,
    seed: u64,
) -> Trajectory {
    assert!(sigma >= 0.0, "noise level must be nonnegative");
    assert_eq!(trajectory.state_dim(), 4, "arm state layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = trajectory.horizon();

    let states: Vec<DVector<f64>> = trajectory
        .states()
        .iter()
        .map(|x| {
            DVector::from_fn(4, |i, _| {
                let draw: f64 = StandardNormal.sample(&mut rng);
                x[i] + sigma * draw
            })
        })
        .collect();

    let inputs: Vec<DVector<f64>> = (0..horizon)
        .map(|k| {
            let theta = Vector2::new(states[k][0], states[k][2]);
            let theta_dot = Vector2::new(states[k][1], states[k][3]);
            let theta_ddot = Vector2::new(
                (states[k + 1][1] - states[k][1]) / dt,
                (states[k + 1][3] - states[k][3]) / dt,
            );
            let tau = arm.inverse_dynamics(&theta, &theta_dot, &theta_ddot);
            DVector::from_vec(vec![tau[0], tau[1]])
        })
        .collect();

    Trajectory::new(states, inputs).expect("consistent lengths")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::ArmParameters;
    use crate::dynamics::{discretize_euler, DynamicalSystem};

    fn short_rollout(arm: &ArmDynamics, dt: f64, steps: usize) -> Trajectory {
        let disc = discretize_euler(arm.clone(), dt).unwrap();
        let mut states = vec![DVector::zeros(4)];
        let mut inputs = Vec::new();
        for k in 0..steps {
            let u = DVector::from_vec(vec![
                19.0 + (k as f64 * 0.05).sin(),
                4.5 + (k as f64 * 0.03).cos(),
            ]);
            states.push(disc.step(states.last().unwrap(), &u));
            inputs.push(u);
        }
        Trajectory::new(states, inputs).unwrap()
    }

    #[test]
    fn zero_noise_inverts_the_euler_step_exactly() {
        let arm = ArmDynamics::new(ArmParameters::default()).unwrap();
        let dt = 1.0 / 200.0;
        let traj = short_rollout(&arm, dt, 50);
        let noisy = inject_noise(&traj, &arm, 0.0, dt, 123);
        for k in 0..=50 {
            assert_eq!(noisy.state(k), traj.state(k));
        }
        for k in 1..=50 {
            assert!(
                (noisy.input(k) - traj.input(k)).amax() < 1e-9,
                "torque mismatch at k = {k}"
            );
        }
    }

    #[test]
    fn fixed_seed_reproduces_bitwise() {
        let arm = ArmDynamics::new(ArmParameters::default()).unwrap();
        let dt = 1.0 / 200.0;
        let traj = short_rollout(&arm, dt, 30);
        let a = inject_noise(&traj, &arm, 1e-4, dt, 9);
        let b = inject_noise(&traj, &arm, 1e-4, dt, 9);
        assert_eq!(a, b);
        let c = inject_noise(&traj, &arm, 1e-4, dt, 10);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_magnitude_tracks_sigma() {
        let arm = ArmDynamics::new(ArmParameters::default()).unwrap();
        let dt = 1.0 / 200.0;
        let traj = short_rollout(&arm, dt, 100);
        let noisy = inject_noise(&traj, &arm, 1e-3, dt, 77);
        let max_dev: f64 = (0..=100)
            .map(|k| (noisy.state(k) - traj.state(k)).amax())
            .fold(0.0, f64::max);
        assert!(max_dev > 1e-4 && max_dev < 1e-2);
    }
}
