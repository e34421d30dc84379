//! Property tests for the recovery-matrix algebra and the error metric.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use recovery_ioc::metrics::recovery_error;
use recovery_ioc::observation::ObservationSample;
use recovery_ioc::recovery::{
    normalize, numerical_rank, rank_index, recover_weights, uniform_lower_bound, RecoveryState,
};

fn sample_strategy(
    n: usize,
    m: usize,
    r: usize,
    invertible_fx: bool,
) -> impl Strategy<Value = ObservationSample> {
    let entry = -3.0..3.0f64;
    (
        proptest::collection::vec(entry.clone(), n * n),
        proptest::collection::vec(entry.clone(), n * m),
        proptest::collection::vec(entry.clone(), r * n),
        proptest::collection::vec(entry, r * m),
    )
        .prop_map(move |(fx, fu, px, pu)| {
            let mut fx = DMatrix::from_vec(n, n, fx);
            if invertible_fx {
                // Diagonal dominance keeps ∂f/∂x comfortably invertible.
                for i in 0..n {
                    fx[(i, i)] += 4.0 * if fx[(i, i)] >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            ObservationSample {
                time: 1,
                fx,
                fu: DMatrix::from_vec(n, m, fu),
                px: DMatrix::from_vec(r, n, px),
                pu: DMatrix::from_vec(r, m, pu),
            }
        })
}

fn window_strategy(
    invertible_fx: bool,
) -> impl Strategy<Value = (usize, usize, usize, Vec<ObservationSample>)> {
    (1usize..4, 1usize..3, 1usize..4, 1usize..8).prop_flat_map(move |(n, m, r, l)| {
        proptest::collection::vec(sample_strategy(n, m, r, invertible_fx), l)
            .prop_map(move |samples| (n, m, r, samples))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The one-observation update replays the direct construction.
    #[test]
    fn incremental_matches_direct((_n, _m, _r, samples) in window_strategy(false)) {
        let direct = RecoveryState::from_window(&samples).unwrap();
        let mut incremental = RecoveryState::init(&samples[0]).unwrap();
        for sample in &samples[1..] {
            incremental.update(sample).unwrap();
        }
        let denom = direct.matrix().norm();
        let gap = (direct.matrix() - incremental.matrix()).norm();
        prop_assert!(gap <= 1e-10 * denom.max(1e-6), "gap {gap:.3e}, denom {denom:.3e}");
    }

    /// Appending an observation with invertible ∂f/∂x never reduces the
    /// numerical rank.
    #[test]
    fn rank_never_decreases((_n, _m, _r, samples) in window_strategy(true)) {
        let mut state = RecoveryState::init(&samples[0]).unwrap();
        let mut prev = 0usize;
        for sample in &samples[1..] {
            state.update(sample).unwrap();
            let h = state.matrix();
            if h.amax() == 0.0 || h.nrows().min(h.ncols()) < 2 {
                continue;
            }
            let diag = rank_index(&normalize(&h).unwrap()).unwrap();
            let rank = numerical_rank(&diag, 1e-9);
            prop_assert!(rank >= prev, "rank dropped {prev} -> {rank}");
            prev = rank;
        }
    }

    /// Frobenius normalization yields a unit-norm matrix and is
    /// idempotent.
    #[test]
    fn normalization_is_idempotent(values in proptest::collection::vec(-100.0..100.0f64, 6)) {
        let h = DMatrix::from_vec(2, 3, values);
        prop_assume!(h.amax() > 0.0);
        let hbar = normalize(&h).unwrap();
        prop_assert!((hbar.norm() - 1.0).abs() < 1e-12);
        let twice = normalize(&hbar).unwrap();
        prop_assert!((twice - &hbar).amax() < 1e-12);
    }

    /// Recovered weights always satisfy the sum constraint, and the
    /// planted kernel direction is reproduced.
    #[test]
    fn recovered_weights_sum_to_one(
        kernel in proptest::collection::vec(-2.0..2.0f64, 5),
        rows in proptest::collection::vec(-1.0..1.0f64, 60),
    ) {
        let v = DVector::from_vec(kernel);
        let r = 3;
        prop_assume!(v.norm() > 0.1);
        prop_assume!(v.rows(0, r).sum().abs() > 0.05 * v.norm());
        let a = DMatrix::from_vec(12, 5, rows);
        let proj = DMatrix::identity(5, 5) - &v * v.transpose() / v.norm_squared();
        let h = a * proj;
        prop_assume!(h.amax() > 1e-6);
        let hbar = normalize(&h).unwrap();
        let (omega, lambda) = recover_weights(&hbar, r, 2).unwrap();
        prop_assert!((omega.sum() - 1.0).abs() < 1e-10);
        let expected = &v / v.rows(0, r).sum();
        prop_assert!((&omega - expected.rows(0, r)).amax() < 1e-6);
        prop_assert!((&lambda - expected.rows(r, 2)).amax() < 1e-6);
    }

    /// The recovery error is scale invariant in its first argument and
    /// bounded by [0, 1].
    #[test]
    fn recovery_error_scale_invariant_and_bounded(
        est in proptest::collection::vec(-5.0..5.0f64, 3),
        truth in proptest::collection::vec(-5.0..5.0f64, 3),
        c in 1e-4..1e4f64,
    ) {
        let est = DVector::from_vec(est);
        let truth = DVector::from_vec(truth);
        prop_assume!(truth.norm() > 1e-6);
        let base = recovery_error(&est, &truth).unwrap();
        let scaled = recovery_error(&(c * est.clone()), &truth).unwrap();
        prop_assert!((base - scaled).abs() < 1e-10);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
    }

    /// The closed-form lower bound: no window shorter than
    /// ⌈(r+n-1)/m⌉ has enough rows for rank r+n-1.
    #[test]
    fn lower_bound_formula(r in 1usize..12, n in 1usize..8, m in 1usize..5) {
        let bound = uniform_lower_bound(r, n, m);
        // Smallest l with m·l ≥ r+n-1, by brute force.
        let brute = (1..).find(|l| m * l >= r + n - 1).unwrap();
        prop_assert_eq!(bound, brute);
        // The algorithm's length gate is at least as strict.
        let gate = (r + n) / m + 1;
        prop_assert!(gate >= bound);
    }
}
