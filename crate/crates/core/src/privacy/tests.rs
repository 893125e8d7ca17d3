use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::rng::coordinator_stream;

#[test]
fn clip_examples() {
    assert_eq!(clip_gradient(&[3.0, 4.0], 1.0), vec![0.6, 0.8]);
    assert_eq!(clip_gradient(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
    assert_eq!(clip_gradient(&[0.6, 0.8], 1.0), vec![0.6, 0.8]);
    assert_eq!(clip_gradient(&[1.0], 1.0), vec![1.0]);
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_bound(
        g in prop::collection::vec(-1e3f64..1e3, 1..1000),
        c in 1e-3f64..10.0,
    ) {
        let out = clip_gradient(&g, c);
        prop_assert!(norm(&out) <= c);
        // direction preserved
        let dot: f64 = out.iter().zip(&g).map(|(a, b)| a * b).sum();
        prop_assert!(dot >= 0.0);
    }

    #[test]
    fn clipping_bounds_sensitivity(
        pair in (1usize..64).prop_flat_map(|n| (
            prop::collection::vec(-50f64..50.0, n),
            prop::collection::vec(-50f64..50.0, n),
        )),
        c in 0.01f64..5.0,
    ) {
        let a = clip_gradient(&pair.0, c);
        let b = clip_gradient(&pair.1, c);
        prop_assert!(crate::math::sq_dist(&a, &b).sqrt() <= 2.0 * c * (1.0 + 1e-12));
    }
}

#[test]
fn zero_noise_privatize_is_clip() {
    let cfg = PrivacyConfig {
        clip: 1.0,
        sigma2: 0.0,
        delta: 1e-5,
        sampling_ratio: 1.0,
    };
    let mut rng = coordinator_stream(1);
    assert_eq!(privatize_gradient(&[3.0, 4.0], &cfg, &mut rng), vec![0.6, 0.8]);
    assert_eq!(privatize_gradient(&[0.1, -0.2], &cfg, &mut rng), vec![0.1, -0.2]);
}

#[test]
fn noise_variance_and_mean() {
    let cfg = PrivacyConfig {
        clip: 0.5,
        sigma2: 2.0,
        delta: 1e-5,
        sampling_ratio: 1.0,
    };
    let g = [0.1, -0.3, 2.0];
    let clipped = clip_gradient(&g, cfg.clip);
    let mut rng = coordinator_stream(2);
    let n = 100_000;
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for _ in 0..n {
        let out = privatize_gradient(&g, &cfg, &mut rng);
        for i in 0..3 {
            let e = out[i] - clipped[i];
            sum[i] += e;
            sum_sq[i] += e * e;
        }
    }
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let var = sum_sq[i] / n as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
        assert!(mean.abs() <= 3.0 * (1.0 / n as f64).sqrt(), "mean {mean}");
    }
}

#[test]
fn calibrate_sigma_values() {
    let s1 = calibrate_sigma(1.0, 1e-5).unwrap();
    // √(2 ln 125000) evaluated in extended precision: 4.844805262...
    assert!((s1 - 4.844_805_262_7).abs() < 1e-9, "{s1}");
    assert_eq!(calibrate_sigma(2.0, 1e-5).unwrap(), s1 / 2.0);
    assert!(calibrate_sigma(1.0, 1.25).is_err());
    assert!(calibrate_sigma(0.0, 1e-5).is_err());
    assert!(calibrate_sigma(1.0, 0.0).is_err());
}

fn ledger(sigma2: f64, q: f64) -> PrivacyLedger {
    let cfg = PrivacyConfig {
        clip: 1.0,
        sigma2,
        delta: 1e-5,
        sampling_ratio: q,
    };
    PrivacyLedger::new(&cfg, AccountingMethod::Moments).unwrap()
}

#[test]
fn full_batch_log_moment_closed_form() {
    let mut l = ledger(4.0, 1.0);
    l.account_step();
    assert_eq!(l.log_moment(1), 0.0625);
    let single: Vec<f64> = (1..=64).map(|o| l.log_moment(o)).collect();
    l.account_steps(99);
    for o in 1..=64 {
        assert_eq!(l.log_moment(o), 100.0 * single[o - 1]);
    }
}

/// `E_{μ₀}[(μ/μ₀)^{λ+1}]` by binomial expansion of the mixture.
fn binomial_log_moment(q: f64, sigma: f64, order: usize) -> f64 {
    let a = order + 1;
    let mut total = 0.0;
    let mut binom = 1.0;
    for k in 0..=a {
        if k > 0 {
            binom = binom * (a - k + 1) as f64 / k as f64;
        }
        let kf = k as f64;
        total +=
            binom * (1.0 - q).powi((a - k) as i32) * q.powi(k as i32) * ((kf * kf - kf) / (2.0 * sigma * sigma)).exp();
    }
    total.ln()
}

/// Both tails by a brute-force midpoint rule on a fine uniform grid.
fn brute_force_log_moment(q: f64, sigma: f64, order: usize) -> f64 {
    let lambda = order as f64;
    let (lo, hi, steps) = (-60.0, 80.0, 2_000_000);
    let h = (hi - lo) / steps as f64;
    let (mut upper, mut lower) = (0.0, 0.0);
    for i in 0..steps {
        let z = lo + (i as f64 + 0.5) * h;
        let mu0 = (-z * z / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * core::f64::consts::PI).sqrt());
        let mu1 =
            (-(z - 1.0) * (z - 1.0) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * core::f64::consts::PI).sqrt());
        let mu = (1.0 - q) * mu0 + q * mu1;
        upper += mu * (mu / mu0).powf(lambda) * h;
        lower += mu0 * (mu0 / mu).powf(lambda) * h;
    }
    upper.max(lower).ln()
}

#[test]
fn subsampled_log_moment_matches_oracles() {
    let got = log_moment(0.01, 4.0, 8);
    let binom = binomial_log_moment(0.01, 4.0, 8);
    let brute = brute_force_log_moment(0.01, 4.0, 8);
    assert!((got - binom).abs() < 1e-6, "{got} vs {binom}");
    assert!((got - brute).abs() < 1e-6, "{got} vs {brute}");
    for &(q, s, o) in &[(0.1, 2.0, 4), (0.05, 1.5, 16), (0.5, 4.0, 32), (0.02, 8.0, 64)] {
        let got = log_moment(q, s, o);
        let want = binomial_log_moment(q, s, o);
        assert!(
            (got - want).abs() <= 1e-6 * want.abs().max(1.0),
            "q={q} σ={s} λ={o}: {got} vs {want}"
        );
    }
}

#[test]
fn subsampling_reduces_moments() {
    for o in [1, 8, 32, 64] {
        assert!(log_moment(0.1, 4.0, o) < log_moment(1.0, 4.0, o));
    }
}

#[test]
fn single_step_epsilon_matches_exhaustive_search() {
    let mut l = ledger(4.0, 1.0);
    l.account_step();
    let (eps, order) = l.moments_epsilon(1e-5).unwrap();
    // oracle: scan every order directly from the closed form
    let oracle = (1..=64)
        .map(|o| {
            let lam = o as f64;
            (lam * (lam + 1.0) / 32.0 + (1e5f64).ln()) / lam
        })
        .fold(f64::INFINITY, f64::min);
    assert_eq!(order, 19);
    assert!((eps - oracle).abs() < 1e-12);
    assert!((eps - 1.231).abs() < 1e-3);
}

#[test]
fn epsilon_monotone_in_steps_and_noise() {
    let mut prev = 0.0;
    for t in [1u64, 2, 4, 8, 16, 1000] {
        let mut l = ledger(4.0, 1.0);
        l.account_steps(t);
        let eps = l.spent_epsilon(1e-5).unwrap();
        assert!(eps > prev);
        prev = eps;
    }
    let mut prev = f64::INFINITY;
    for s in [1.0, 2.0, 4.0, 8.0] {
        let mut l = ledger(s, 1.0);
        l.account_steps(100);
        let eps = l.spent_epsilon(1e-5).unwrap();
        assert!(eps <= prev);
        prev = eps;
    }
}

#[test]
fn moments_tighter_than_strong_composition() {
    for sigma in [2.0, 4.0, 8.0] {
        for t in [10u64, 100, 1000] {
            let mut l = ledger(sigma, 1.0);
            l.account_steps(t);
            let r = l.report(1e-5).unwrap();
            assert!(r.epsilon_moments < r.epsilon_strong_composition, "{r:?}");
        }
    }
}

#[test]
fn empty_and_non_private_ledgers() {
    let l = ledger(4.0, 1.0);
    assert_eq!(l.spent_epsilon(1e-5), Err(crate::Error::EmptyLedger));
    let mut l = ledger(0.0, 1.0);
    assert!(!l.is_private());
    l.account_step();
    assert_eq!(l.spent_epsilon(1e-5).unwrap(), f64::INFINITY);
}

#[test]
fn strong_composition_values() {
    let (e, d) = strong_composition_epsilon(0.0, 1e-6, 100, 1e-5).unwrap();
    assert_eq!(e, 0.0);
    assert!((d - (100.0 * 1e-6 + 1e-5)).abs() < 1e-18);
    let (e1, _) = strong_composition_epsilon(0.5, 0.0, 1, 1e-9).unwrap();
    assert!(e1 >= 0.5);
    // ε₀√(2T ln(1/δ')) + Tε₀(e^{ε₀}−1) with ε₀=0.1, T=100, δ'=1e-5,
    // evaluated to 20 digits: 0.1·√(200·ln 1e5) + 10·(e^{0.1}−1)
    let (e, d) = strong_composition_epsilon(0.1, 1e-6, 100, 1e-5).unwrap();
    let oracle = 0.1 * (200.0f64 * 11.512925464970228).sqrt() + 10.0 * 0.10517091807564762;
    assert!((e - oracle).abs() < 1e-9, "{e} vs {oracle}");
    assert!((e - 5.850_235_1).abs() < 1e-6, "{e}");
    assert!((d - 1.1e-4).abs() < 1e-15);
    assert!(strong_composition_epsilon(-0.1, 0.0, 1, 1e-5).is_err());
    assert!(strong_composition_epsilon(0.1, 0.0, 0, 1e-5).is_err());
}

#[test]
fn report_recomputes_exactly() {
    let mut l = ledger(4.0, 0.05);
    for _ in 0..500 {
        l.account_step();
    }
    let r = l.report(1e-5).unwrap();
    let again = r.recompute().unwrap();
    assert!((r.epsilon_moments - again.epsilon_moments).abs() < 1e-6);
    assert!(r.epsilon_moments.is_finite());
    let _ = coordinator_stream(0).random::<u8>();
}
