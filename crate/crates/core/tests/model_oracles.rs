//! Independent checks of the collapsed posterior: exhaustive normalisation
//! and numerical integration of the uncollapsed joint.

use bernmix::model::{log_collapsed_posterior, log_prior_k};
use bernmix::{AllocationState, Hyperparams, PriorK};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_vectors(len: usize, base: usize) -> Vec<Vec<usize>> {
    (0..base.pow(len as u32))
        .map(|mut code| {
            (0..len)
                .map(|_| {
                    let v = code % base;
                    code /= base;
                    v
                })
                .collect()
        })
        .collect()
}

fn log_post(x: &[u8], d: usize, k: usize, z: &[usize], h: &Hyperparams) -> f64 {
    let s = AllocationState::new(x.to_vec(), d, h.kmax, k, z.to_vec()).unwrap();
    log_collapsed_posterior(&s, h).unwrap()
}

#[test]
fn joint_sums_to_prior_over_data_and_allocations() {
    let mut h = Hyperparams::new(3, PriorK::TruncatedPoisson).with_theta_prior(0.7, 1.9);
    h.gamma = vec![0.5, 1.3, 2.0];
    for n in 1..=3 {
        for d in 1..=2 {
            for k in 1..=3 {
                let mut total = 0.0;
                for x in all_vectors(n * d, 2) {
                    let x: Vec<u8> = x.into_iter().map(|v| v as u8).collect();
                    for z in all_vectors(n, k) {
                        total += log_post(&x, d, k, &z, &h).exp();
                    }
                }
                let prior = log_prior_k(k, &h).unwrap().exp();
                assert!(
                    (total / prior - 1.0).abs() < 1e-12,
                    "n={n} d={d} k={k}: {total} vs {prior}"
                );
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, t);
                for j in 2..=m {
                    let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
                let step = p1 / dp;
                t -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - t * t) * dp * dp);
            ((t + 1.0) / 2.0, w / 2.0)
        })
        .collect()
}

fn integrate(f: impl Fn(f64) -> f64) -> f64 {
    gauss_legendre(30).into_iter().map(|(t, w)| w * f(t)).sum()
}

fn beta_fn(a: f64, b: f64) -> f64 {
    integrate(|t| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0))
}

/// `f(z | K) f(x | z, K)` for `d = 1`, `K <= 2`, integrating the weights
/// and success probabilities numerically.
fn joint_by_quadrature(x: &[u8], k: usize, z: &[usize], h: &Hyperparams) -> f64 {
    let count = |l: usize| z.iter().filter(|&&v| v == l).count() as f64;
    let weights = if k == 1 {
        1.0
    } else {
        let (g1, g2) = (h.gamma[0], h.gamma[1]);
        integrate(|p| p.powf(g1 - 1.0 + count(0)) * (1.0 - p).powf(g2 - 1.0 + count(1))) / beta_fn(g1, g2)
    };
    let mut like = 1.0;
    for l in 0..k {
        let ones = z.iter().zip(x).filter(|&(&zl, &xv)| zl == l && xv == 1).count() as f64;
        let zeros = count(l) - ones;
        like *= integrate(|t| t.powf(h.alpha - 1.0 + ones) * (1.0 - t).powf(h.beta - 1.0 + zeros))
            / beta_fn(h.alpha, h.beta);
    }
    weights * like
}

#[test]
fn collapsed_posterior_matches_quadrature() {
    let flat = Hyperparams::new(2, PriorK::Uniform);
    let mut skewed = Hyperparams::new(2, PriorK::TruncatedPoisson).with_theta_prior(2.0, 3.0);
    skewed.gamma = vec![2.0, 1.0];
    for h in [flat, skewed] {
        for n in 1..=3 {
            for x in all_vectors(n, 2) {
                let x: Vec<u8> = x.into_iter().map(|v| v as u8).collect();
                for k in 1..=2 {
                    for z in all_vectors(n, k) {
                        let exact = log_post(&x, 1, k, &z, &h) - log_prior_k(k, &h).unwrap();
                        let quad = joint_by_quadrature(&x, k, &z, &h).ln();
                        assert!((exact - quad).abs() < 1e-6, "x={x:?} z={z:?}: {exact} vs {quad}");
                    }
                }
            }
        }
    }
}

#[test]
fn two_observation_ratio_matches_quadrature() {
    // same cluster versus split, x = (1, 1), flat priors
    let h = Hyperparams::new(2, PriorK::Uniform);
    let x = [1u8, 1];
    let ratio = (log_post(&x, 1, 2, &[0, 0], &h) - log_post(&x, 1, 2, &[0, 1], &h)).exp();
    let quad = joint_by_quadrature(&x, 2, &[0, 0], &h) / joint_by_quadrature(&x, 2, &[0, 1], &h);
    assert!((ratio - quad).abs() < 1e-9);
    // by hand: (1/3 * 1/3) / (1/6 * 1/2 * 1/2)
    assert!((ratio - 8.0 / 3.0).abs() < 1e-12);
}

#[test]
fn label_permutations_leave_posterior_unchanged() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (n, d, k) = (12, 4, 4);
    let base = Hyperparams::new(6, PriorK::TruncatedPoisson).with_theta_prior(0.8, 1.4);
    for _ in 0..50 {
        let x: Vec<u8> = (0..n * d).map(|_| r.random_range(0..2)).collect();
        let z: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let zp: Vec<usize> = z.iter().map(|&l| perm[l]).collect();

        let a = log_post(&x, d, k, &z, &base);
        let b = log_post(&x, d, k, &zp, &base);
        assert!((a - b).abs() < 1e-12);

        // asymmetric weights prior: permute it along with the labels
        let mut h = base.clone();
        h.gamma = (0..6).map(|_| r.random_range(0.2..3.0)).collect();
        let mut hp = h.clone();
        for (l, &target) in perm.iter().enumerate().take(k) {
            hp.gamma[target] = h.gamma[l];
        }
        let a = log_post(&x, d, k, &z, &h);
        let b = log_post(&x, d, k, &zp, &hp);
        assert!((a - b).abs() < 1e-12);
    }
}
