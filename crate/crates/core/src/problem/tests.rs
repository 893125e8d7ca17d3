use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::rng::{coordinator_stream, Stream};

fn rand_vec(rng: &mut Stream, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Central finite differences of the batch loss.
fn fd_gradient(p: &Problem, w: &[f64], shard: &DataShard, batch: &[usize], h: f64) -> Vec<f64> {
    let mut w = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + h;
            let up = p.loss(&w, shard, batch).unwrap();
            w[i] = orig - h;
            let down = p.loss(&w, shard, batch).unwrap();
            w[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Power iteration with Rayleigh quotient: the dominant eigenvalue.
fn power_iteration(matrix: &[f64], n: usize) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.37).collect();
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let mv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| matrix[i * n + j] * v[j]).sum()).collect();
        lambda = v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
        let len = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = mv.into_iter().map(|x| x / len).collect();
    }
    lambda
}

fn blobs(samples: usize, features: usize, seed: u64) -> Dataset {
    let spec = BlobSpec {
        samples,
        holdout: 0,
        features,
        separation: 2.0,
        noise: 1.0,
        groups: 1,
        group_shift: 0.0,
        bias: true,
    };
    gaussian_blobs(&spec, &mut coordinator_stream(seed)).unwrap().train
}

fn quadratic_setup(seed: u64) -> (Problem, Vec<DataShard>) {
    let p = make_quadratic(10, 1.0, 3.0, seed).unwrap();
    let ds = quadratic_dataset(&p, 3, 20, 0.5, &mut coordinator_stream(seed + 1)).unwrap();
    let shards = ds.shard(3).unwrap();
    (p, shards)
}

#[test]
fn diagonal_quadratic_optimum() {
    let p = Problem::quadratic_diagonal(&[1.0, 3.0], &[1.0, 3.0]).unwrap();
    assert_eq!(p.optimum().unwrap(), &[1.0, 1.0]);
    assert_eq!(p.strong_convexity().unwrap(), (1.0, 3.0));
}

#[test]
fn identity_quadratic_zero_case() {
    let p = Problem::quadratic_diagonal(&[1.0], &[0.0]).unwrap();
    assert_eq!(p.optimum().unwrap(), &[0.0]);
    let shard = Dataset::new(1, vec![0.0], vec![0]).unwrap().as_shard();
    assert_eq!(p.loss(&[0.0], &shard, &[0]).unwrap(), 0.0);
}

#[test]
fn make_quadratic_spectrum_matches_power_iteration() {
    let p = make_quadratic(10, 1.0, 3.0, 7).unwrap();
    let a = p.quadratic_matrix().unwrap();
    for i in 0..10 {
        for j in 0..10 {
            assert_eq!(a[i * 10 + j], a[j * 10 + i]);
        }
    }
    // largest eigenvalue of A
    let largest = power_iteration(a, 10);
    // largest eigenvalue of (4I - A) is 4 - smallest(A)
    let shifted: Vec<f64> = (0..100)
        .map(|k| if k / 10 == k % 10 { 4.0 - a[k] } else { -a[k] })
        .collect();
    let smallest = 4.0 - power_iteration(&shifted, 10);
    assert!((largest - 3.0).abs() < 1e-12, "{largest}");
    assert!((smallest - 1.0).abs() < 1e-12, "{smallest}");
}

#[test]
fn make_quadratic_rejects_bad_constants() {
    assert!(make_quadratic(4, 0.0, 1.0, 1).is_err());
    assert!(make_quadratic(4, -1.0, 1.0, 1).is_err());
    assert!(make_quadratic(4, 2.0, 1.0, 1).is_err());
    assert!(make_quadratic(0, 1.0, 1.0, 1).is_err());
}

#[test]
fn quadratic_optimum_zeroes_every_shard_gradient() {
    let (p, shards) = quadratic_setup(3);
    let w_star = p.optimum().unwrap().to_vec();
    for s in &shards {
        let g = p.full_gradient(&w_star, s).unwrap();
        assert!(crate::math::norm(&g) < 1e-10);
        // optimum has the smallest loss
        let f_star = p.full_loss(&w_star, s).unwrap();
        let mut w = w_star.clone();
        w[0] += 1e-3;
        assert!(p.full_loss(&w, s).unwrap() > f_star);
    }
}

#[test]
fn quadratic_full_batch_gradient_is_exact() {
    let (p, shards) = quadratic_setup(4);
    let a = p.quadratic_matrix().unwrap();
    let b_hat: Vec<f64> = p
        .optimum()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, _)| (0..10).map(|j| a[i * 10 + j] * p.optimum().unwrap()[j]).sum::<f64>())
        .collect();
    let mut rng = coordinator_stream(9);
    let w = rand_vec(&mut rng, 10, 1.0);
    let mut seeded = coordinator_stream(1);
    let g = p.stochastic_gradient(&w, &shards[1], 20, &mut seeded).unwrap();
    for i in 0..10 {
        let aw: f64 = (0..10).map(|j| a[i * 10 + j] * w[j]).sum();
        assert!((g.gradient[i] - (aw - b_hat[i])).abs() < 1e-10);
    }
    assert_eq!(g.minibatch_indices, shards[1].all_indices());
}

#[test]
fn logistic_loss_values() {
    let ds = Dataset::new(2, vec![0.5, -1.0], vec![1]).unwrap();
    let shard = ds.as_shard();
    let p = Problem::logistic(&ds, 0.0).unwrap();
    let l = p.loss(&[0.0, 0.0], &shard, &[0]).unwrap();
    assert!((l - core::f64::consts::LN_2).abs() < 1e-15);

    let p = p.with_reg_lambda(0.1).unwrap();
    let w = [2.0, 0.0];
    let base = Problem::logistic(&ds, 0.0).unwrap().loss(&w, &shard, &[0]).unwrap();
    let reg = p.loss(&w, &shard, &[0]).unwrap();
    assert!((reg - (base + 0.2)).abs() < 1e-15);
}

#[test]
fn empty_batch_and_bad_indices_are_errors() {
    let ds = blobs(10, 2, 1);
    let p = Problem::logistic(&ds, 0.1).unwrap();
    let shard = ds.as_shard();
    let w = [0.0; 3];
    assert_eq!(p.loss(&w, &shard, &[]), Err(Error::EmptyBatch));
    assert!(matches!(p.loss(&w, &shard, &[10]), Err(Error::IndexOutOfRange { .. })));
    assert!(matches!(
        p.loss(&[0.0; 2], &shard, &[0]),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut rng = coordinator_stream(0);
    assert!(p.stochastic_gradient(&w, &shard, 0, &mut rng).is_err());
    assert!(p.stochastic_gradient(&w, &shard, 11, &mut rng).is_err());
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let ds = blobs(50, 4, 2);
    let p = Problem::logistic(&ds, 0.05).unwrap();
    let shard = ds.as_shard();
    let mut rng = coordinator_stream(5);
    let batch = shard.all_indices();
    for _ in 0..20 {
        let w = rand_vec(&mut rng, 5, 1.0);
        let (_, g) = p.loss_and_gradient(&w, &shard, &batch).unwrap();
        let fd = fd_gradient(&p, &w, &shard, &batch, 1e-5);
        assert!(max_rel_err(&g.gradient, &fd) <= 1e-5);
    }
}

#[test]
fn quadratic_gradient_matches_finite_differences() {
    let (p, shards) = quadratic_setup(6);
    let mut rng = coordinator_stream(6);
    for _ in 0..20 {
        let w = rand_vec(&mut rng, 10, 2.0);
        let batch = [0, 3, 7];
        let (_, g) = p.loss_and_gradient(&w, &shards[0], &batch).unwrap();
        let fd = fd_gradient(&p, &w, &shards[0], &batch, 1e-5);
        assert!(max_rel_err(&g.gradient, &fd) <= 1e-4);
    }
}

fn mlp_setup() -> (Problem, Dataset) {
    let ds = blobs(40, 3, 8);
    // drop the bias column: the MLP carries its own biases
    let inputs: Vec<f64> = (0..ds.len()).flat_map(|i| ds.row(i)[..3].to_vec()).collect();
    let ds = Dataset::new(3, inputs, ds.labels().to_vec()).unwrap();
    (Problem::mlp(3, 2, 1e-3).unwrap(), ds)
}

#[test]
fn mlp_zero_weights_give_uniform_softmax() {
    let (p, ds) = mlp_setup();
    let p = p.with_reg_lambda(0.0).unwrap();
    let shard = ds.as_shard();
    let zeros = vec![0.0; p.dim()];
    let i0 = (0..ds.len()).find(|&i| ds.label(i) == 0).unwrap();
    let i1 = (0..ds.len()).find(|&i| ds.label(i) == 1).unwrap();
    let (loss, _) = mlp_forward_backward(&p, &zeros, &shard, &[i0, i1]).unwrap();
    assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let (p, ds) = mlp_setup();
    let shard = ds.as_shard();
    let mut rng = coordinator_stream(11);
    let batch = [1, 4, 9, 16, 25];
    for _ in 0..20 {
        let w = rand_vec(&mut rng, p.dim(), 0.7);
        let (_, g) = mlp_forward_backward(&p, &w, &shard, &batch).unwrap();
        let fd = fd_gradient(&p, &w, &shard, &batch, 1e-5);
        let err = max_rel_err(&g.gradient, &fd);
        assert!(err <= 1e-4, "{err}");
    }
}

#[test]
fn mlp_duplicated_batch_is_invariant() {
    let (p, ds) = mlp_setup();
    let shard = ds.as_shard();
    let w = rand_vec(&mut coordinator_stream(12), p.dim(), 0.5);
    let batch = [2, 5, 11];
    let doubled = [2, 2, 5, 5, 11, 11];
    let (l1, g1) = mlp_forward_backward(&p, &w, &shard, &batch).unwrap();
    let (l2, g2) = mlp_forward_backward(&p, &w, &shard, &doubled).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    assert!(max_rel_err(&g1.gradient, &g2.gradient) < 1e-13);
}

#[test]
fn mlp_rejects_wrong_parameter_length() {
    let (p, ds) = mlp_setup();
    let shard = ds.as_shard();
    assert!(matches!(
        mlp_forward_backward(&p, &[0.0; 5], &shard, &[0]),
        Err(Error::DimensionMismatch { .. })
    ));
    assert_eq!(p.strong_convexity(), Err(Error::NotConvex(ProblemKind::Mlp)));
}

#[test]
fn strong_convexity_witness_holds() {
    let (q, qs) = quadratic_setup(13);
    let lds = blobs(60, 3, 14);
    let l = Problem::logistic(&lds, 0.2).unwrap();
    let cases: [(&Problem, DataShard); 2] = [(&q, qs[0].clone()), (&l, lds.as_shard())];
    let mut rng = coordinator_stream(15);
    for (p, shard) in cases.iter() {
        let (mu, lip) = p.strong_convexity().unwrap();
        for _ in 0..100 {
            let wi = rand_vec(&mut rng, p.dim(), 3.0);
            let wj = rand_vec(&mut rng, p.dim(), 3.0);
            let gi = p.full_gradient(&wi, shard).unwrap();
            let gj = p.full_gradient(&wj, shard).unwrap();
            let diff: Vec<f64> = wi.iter().zip(&wj).map(|(a, b)| a - b).collect();
            let gdiff: Vec<f64> = gi.iter().zip(&gj).map(|(a, b)| a - b).collect();
            let inner = crate::math::dot(&gdiff, &diff);
            let d2 = crate::math::norm_sq(&diff);
            assert!(mu * d2 <= inner * (1.0 + 1e-12));
            assert!(inner <= lip * d2 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn size_one_gradients_are_unbiased() {
    let lds = blobs(30, 3, 16);
    let p = Problem::logistic(&lds, 0.1).unwrap();
    let shard = lds.as_shard();
    let w = [0.3, -0.2, 0.5, 0.1];
    let full = p.full_gradient(&w, &shard).unwrap();
    let mut rng = coordinator_stream(17);
    let n = 100_000;
    let mut sum = [0.0; 4];
    let mut sum_sq = [0.0; 4];
    for _ in 0..n {
        let g = p.stochastic_gradient(&w, &shard, 1, &mut rng).unwrap().gradient;
        for i in 0..4 {
            sum[i] += g[i];
            sum_sq[i] += g[i] * g[i];
        }
    }
    for i in 0..4 {
        let mean = sum[i] / n as f64;
        let var = sum_sq[i] / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!((mean - full[i]).abs() <= 3.0 * se, "coord {i}: {mean} vs {}", full[i]);
    }
}

#[test]
fn within_batch_sigma_estimate_is_unbiased() {
    let (p, shards) = quadratic_setup(18);
    let w = vec![0.0; 10];
    let full = p.full_gradient(&w, &shards[0]).unwrap();
    let mut rng = coordinator_stream(19);
    let (mut est, mut emp) = (0.0, 0.0);
    let trials = 20_000;
    for _ in 0..trials {
        let g = p.stochastic_gradient(&w, &shards[0], 4, &mut rng).unwrap();
        est += g.sigma1_estimate.unwrap();
        emp += crate::math::sq_dist(&g.gradient, &full);
    }
    let (est, emp) = (est / trials as f64, emp / trials as f64);
    assert!((est - emp).abs() / emp < 0.05, "{est} vs {emp}");
}

#[test]
fn sigma1_full_batch_is_zero() {
    let (p, shards) = quadratic_setup(20);
    let w = vec![0.5; 10];
    let s = estimate_sigma1(&p, &[&w], &shards[0], 20, 30, &mut coordinator_stream(0)).unwrap();
    assert_eq!(s, 0.0);
    assert!(estimate_sigma1(&p, &[&w], &shards[0], 20, 29, &mut coordinator_stream(0)).is_err());
}

#[test]
fn sigma1_two_sample_closed_form() {
    // Per-sample quadratic gradients are A w - x_s; with two samples and
    // batch size one the deviation is ±(x_1 - x_2)/2 with equal odds.
    let p = Problem::quadratic_diagonal(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
    let ds = Dataset::new(2, vec![1.0, -2.0, -1.0, 2.0], vec![0, 0]).unwrap();
    let shard = ds.as_shard();
    let x1 = [1.0, -2.0];
    let x2 = [-1.0, 2.0];
    let exact = crate::math::sq_dist(&x1, &x2) / 4.0;
    let w = [0.3, 0.7];
    let est = estimate_sigma1(&p, &[&w], &shard, 1, 10_000, &mut coordinator_stream(21)).unwrap();
    let raw = est / SIGMA1_SAFETY_FACTOR;
    assert!((raw - exact).abs() / exact < 0.10, "{raw} vs {exact}");
}

#[test]
fn sigma1_non_increasing_in_batch_size() {
    let (p, shards) = quadratic_setup(22);
    let w = vec![0.0; 10];
    let mut rng = coordinator_stream(23);
    let estimates: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&b| estimate_sigma1(&p, &[&w], &shards[2], b, 2000, &mut rng).unwrap())
        .collect();
    for pair in estimates.windows(2) {
        assert!(pair[1] <= pair[0], "{estimates:?}");
    }
}

#[test]
fn logistic_accuracy_on_separable_data() {
    let ds = Dataset::new(2, vec![1.0, 1.0, -1.0, 1.0], vec![1, 0]).unwrap();
    let p = Problem::logistic(&ds, 0.0).unwrap();
    assert_eq!(p.accuracy(&[1.0, 0.0], &ds), Some(1.0));
    assert_eq!(p.accuracy(&[-1.0, 0.0], &ds), Some(0.0));
    let q = Problem::quadratic_diagonal(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
    assert_eq!(q.accuracy(&[0.0, 0.0], &ds), None);
    let _ = coordinator_stream(0).random::<u8>();
}

#[test]
fn replacing_linear_term_moves_optimum() {
    let p = make_quadratic(4, 1.0, 3.0, 5).unwrap();
    let centered = p.clone().with_linear_term(&[0.0; 4]).unwrap();
    assert_eq!(centered.optimum().unwrap(), &[0.0; 4]);
    assert_eq!(centered.quadratic_matrix(), p.quadratic_matrix());
    let d = Problem::quadratic_diagonal(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
    let moved = d.with_linear_term(&[1.0, 3.0]).unwrap();
    assert_eq!(moved.optimum().unwrap(), &[1.0, 1.0]);
    assert!(moved.clone().with_linear_term(&[1.0]).is_err());
    assert!(Problem::mlp(2, 2, 0.0).unwrap().with_linear_term(&[0.0]).is_err());
}
