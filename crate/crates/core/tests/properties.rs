//! Randomized invariants of the operator algebra, the estimators, the weight
//! solver and the detection pipeline.

use proptest::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wmavmd::detect::detect_trace;
use wmavmd::frame::Mode;
use wmavmd::fuzz::random_autocov;
use wmavmd::model::{train_model, ClPolicy};
use wmavmd::owv::{qp_oracle, solve_owv, WeightVector};
use wmavmd::sim::{generate, NoiseSpec, ProfileSegment, ProfileSpec};
use wmavmd::stats::{build_gamma, estimate_autocov, wma_variance};
use wmavmd::vmd::{vmd, vmd_negated};

fn velocity_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e5..1e5f64, 2..8)
}

proptest! {
    #[test]
    fn vmd_nonnegative_and_some_channel_zero(v in velocity_vec()) {
        let mut zeros = 0;
        for ch in 0..v.len() {
            let value = vmd(&v, ch).unwrap();
            prop_assert!(value >= 0.0);
            if value == 0.0 {
                zeros += 1;
            }
        }
        prop_assert!(zeros >= 1);
    }

    #[test]
    fn vmd_negated_is_vmd_of_negation_bitwise(v in velocity_vec()) {
        let negated: Vec<f64> = v.iter().map(|x| -x).collect();
        for ch in 0..v.len() {
            let direct = vmd_negated(&v, ch).unwrap();
            let via = vmd(&negated, ch).unwrap();
            prop_assert_eq!(direct.to_bits(), via.to_bits());
        }
    }

    #[test]
    fn vmd_translation_invariant(v in velocity_vec(), z in -1e5..1e5f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + z).collect();
        let magnitude = v
            .iter()
            .chain(&shifted)
            .fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let tol = 4.0 * f64::EPSILON * magnitude.max(1.0);
        for ch in 0..v.len() {
            let a = vmd(&v, ch).unwrap();
            let b = vmd(&shifted, ch).unwrap();
            prop_assert!((a - b).abs() <= tol, "ch {}: {} vs {}", ch, a, b);
        }
    }

    #[test]
    fn vmd_triangle_inequalities(
        x in prop::collection::vec(-1e4..1e4f64, 4),
        y in prop::collection::vec(-1e4..1e4f64, 4),
    ) {
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let magnitude = x
            .iter()
            .chain(&y)
            .chain(&sum)
            .chain(&diff)
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let tol = 4.0 * f64::EPSILON * magnitude.max(1.0);
        for ch in 0..4 {
            let vx = vmd(&x, ch).unwrap();
            let vy = vmd(&y, ch).unwrap();
            prop_assert!(vmd(&sum, ch).unwrap() <= vx + vy + tol);
            prop_assert!(vmd(&diff, ch).unwrap() >= vx - vy - tol);
        }
    }

    #[test]
    fn estimated_autocov_is_positive_semidefinite(
        series in prop::collection::vec(-100.0..100.0f64, 24..160),
        order in 1usize..8,
    ) {
        let acov = estimate_autocov(&series, 7).unwrap();
        // Lemma-level guarantee: the estimator's Toeplitz matrix clears the
        // PSD floor at every order.
        prop_assert!(build_gamma(&acov, order).is_ok());
    }

    #[test]
    fn autocov_translation_shifts_mean_only(
        series in prop::collection::vec(-10.0..10.0f64, 16..80),
        shift in -1e3..1e3f64,
    ) {
        let a = estimate_autocov(&series, 4).unwrap();
        let shifted: Vec<f64> = series.iter().map(|v| v + shift).collect();
        let b = estimate_autocov(&shifted, 4).unwrap();
        prop_assert!((b.mean() - a.mean() - shift).abs() <= 1e-9 * shift.abs().max(1.0));
        for l in 0..=4 {
            let tol = 1e-7 * a.variance().max(1e-6) * shift.abs().max(1.0);
            prop_assert!((a.lag(l) - b.lag(l)).abs() <= tol);
        }
    }

    #[test]
    fn wma_variance_matches_quadratic_form(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let acov = random_autocov(&mut rng, 6);
        let (weights, _) = solve_owv(&acov, 5).unwrap();
        let direct = wma_variance(&acov, weights.as_slice()).unwrap();
        let gamma = build_gamma(&acov, 5).unwrap();
        let a = nalgebra::DVector::from_row_slice(weights.as_slice());
        let quad = (a.transpose() * gamma.as_matrix() * &a)[(0, 0)];
        let tol = 8.0 * f64::EPSILON * 25.0 * acov.variance().max(1e-300);
        prop_assert!((direct - quad).abs() <= tol, "{} vs {}", direct, quad);
    }
}

#[test]
fn embedding_a_shorter_optimum_preserves_its_variance() {
    // Appending a zero weight evaluates to the same variance, which is what
    // makes the optimal variance non-increasing in the window length.
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let acov = random_autocov(&mut rng, 7);
        for w in 1..=5usize {
            let (weights, diag) = solve_owv(&acov, w).unwrap();
            let mut padded = weights.as_slice().to_vec();
            padded.push(0.0);
            let padded = WeightVector::new(padded).unwrap();
            let embedded = wma_variance(&acov, padded.as_slice()).unwrap();
            assert_eq!(embedded.to_bits(), diag.variance.to_bits());
            let (_, longer) = solve_owv(&acov, w + 1).unwrap();
            assert!(longer.variance <= embedded + 1e-12 * acov.variance());
        }
    }
}

#[test]
fn optimum_beats_ten_thousand_random_feasible_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for _ in 0..20 {
        let acov = random_autocov(&mut rng, 7);
        for w in [2usize, 4, 6] {
            let (_, diag) = solve_owv(&acov, w).unwrap();
            if diag.fallback.is_some() {
                continue;
            }
            for _ in 0..10_000 {
                let raw: Vec<f64> = (0..w)
                    .map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0))
                    .collect();
                let sum: f64 = raw.iter().sum();
                if sum.abs() < 0.2 {
                    continue;
                }
                let mut weights: Vec<f64> = raw.iter().map(|v| v / sum).collect();
                let correction: f64 = 1.0 - weights.iter().sum::<f64>();
                weights[w - 1] += correction;
                let Ok(candidate) = WeightVector::new(weights) else {
                    continue;
                };
                let value = wma_variance(&acov, candidate.as_slice()).unwrap();
                assert!(
                    value >= diag.variance - 1e-10 * acov.variance(),
                    "W={w}: {} beats optimum {}",
                    value,
                    diag.variance
                );
            }
        }
    }
}

#[test]
fn solver_and_oracle_agree_with_symmetric_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for _ in 0..200 {
        let acov = random_autocov(&mut rng, 7);
        for w in 1..=6usize {
            let (weights, diag) = solve_owv(&acov, w).unwrap();
            assert!(diag.fallback.is_none());
            assert!(diag.symmetric, "W={w}: {:?}", weights.as_slice());
            assert!(diag.kkt_residual <= 1e-10 * acov.variance());
            let oracle = qp_oracle(&acov, w).unwrap();
            for m in 0..w {
                assert!(
                    (weights[m] - oracle[m]).abs() <= 1e-8,
                    "W={w} m={m}: {} vs {}",
                    weights[m],
                    oracle[m]
                );
            }
        }
    }
}

fn flat_profile(duration_s: f64) -> ProfileSpec {
    ProfileSpec {
        segments: vec![ProfileSegment {
            mode: Mode::Traction,
            duration_s,
            target_speed_kmh: 60.0,
        }],
        sample_interval_s: 0.1,
        channels: 4,
    }
}

#[test]
fn detection_is_deterministic_and_clean_on_training_data() {
    let noise = NoiseSpec {
        sigma_kmh: 0.25,
        rho: 0.7,
        cross_correlation: 0.5,
        seed: 31,
    };
    let trace = generate(&flat_profile(400.0), &noise).unwrap();
    let model = train_model(&trace, &[1, 2, 3], ClPolicy::Max, None).unwrap();
    for w in [1, 2, 3] {
        let (records_a, alarms_a) = detect_trace(&model, &trace, w).unwrap();
        let (records_b, alarms_b) = detect_trace(&model, &trace, w).unwrap();
        assert_eq!(records_a, records_b);
        assert_eq!(alarms_a, alarms_b);
        assert!(alarms_a.is_empty(), "W={w}: {alarms_a:?}");
    }
}

#[test]
fn generated_perturbation_is_mean_stationary() {
    // Long flat segment: the average deviation of each channel from the
    // cross-channel mean must vanish as 3 sigma over sqrt(N_eff).
    let noise = NoiseSpec {
        sigma_kmh: 0.5,
        rho: 0.8,
        cross_correlation: 0.3,
        seed: 67,
    };
    let trace = generate(&flat_profile(2000.0), &noise).unwrap();
    let n = trace.len() as f64;
    // AR(1) effective sample count shrinks by (1 - rho) / (1 + rho).
    let n_eff = n * (1.0 - noise.rho) / (1.0 + noise.rho);
    let bound = 3.0 * noise.sigma_kmh / n_eff.sqrt();
    for ch in 0..4 {
        let mean_dev: f64 = trace
            .frames
            .iter()
            .map(|f| {
                let channel_mean: f64 =
                    f.velocities.iter().sum::<f64>() / f.velocities.len() as f64;
                f.velocities[ch] - channel_mean
            })
            .sum::<f64>()
            / n;
        // Cross-channel mean removal leaves sigma * sqrt(1 - 1/p) per
        // sample; the 3-sigma bound on the plain sigma is conservative.
        assert!(
            mean_dev.abs() <= bound,
            "channel {ch}: mean deviation {mean_dev} vs bound {bound}"
        );
    }
}
