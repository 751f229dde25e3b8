use num_bigint::BigUint;
use proptest::prelude::*;
use seqbed_core::prob::{
    log_density_gaussian, BinomialSpec, GaussianSpec, RngStream, TruncatedNormalSpec,
};

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn truncated_mean_matches_analytic_formula() {
    let spec = TruncatedNormalSpec::new(1.0, 1.0, 0.0, f64::INFINITY).unwrap();
    // E[X | X > a] = mu + sigma * phi(alpha) / (1 - Phi(alpha)), alpha = (a - mu) / sigma
    let alpha = -1.0;
    let analytic = 1.0 + std_normal_pdf(alpha) / (1.0 - std_normal_cdf(alpha));
    let mut rng = RngStream::new(12, 0);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let x = spec.sample(&mut rng).unwrap();
        assert!(x >= 0.0);
        sum += x;
    }
    let mean = sum / n as f64;
    assert!((mean - analytic).abs() < 0.02, "{mean} vs {analytic}");
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn untruncated_matches_gaussian_sampler() {
    let t = TruncatedNormalSpec::new(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let g = GaussianSpec::new(0.0, 1.0).unwrap();
    let n = 20_000;
    let mut r1 = RngStream::new(1, 0);
    let mut r2 = RngStream::new(1, 1);
    let a: Vec<f64> = (0..n).map(|_| t.sample(&mut r1).unwrap()).collect();
    let b: Vec<f64> = (0..n).map(|_| g.sample(&mut r2)).collect();
    let d = ks_statistic(a, b);
    // Critical value at the 0.1% level.
    let crit = 1.949 * (2.0 / n as f64).sqrt();
    assert!(d < crit, "KS D = {d}, critical {crit}");
}

#[test]
fn binomial_coefficient_against_big_integers() {
    let mut c = BigUint::from(1u32);
    for k in 0..25u32 {
        c = c * BigUint::from(50 - k) / BigUint::from(k + 1);
    }
    assert_eq!(c.to_string(), "126410606437752");
    let ln_c = c.to_string().parse::<f64>().unwrap().ln();
    let expected = ln_c - 50.0 * std::f64::consts::LN_2;
    let got = BinomialSpec::new(50, 0.5).unwrap().log_pmf(25);
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn binomial_pmf_sums_to_one() {
    for n in [0u64, 1, 2, 7, 50, 100] {
        for p in [0.0, 1e-6, 0.13, 0.5, 0.87, 1.0] {
            let spec = BinomialSpec::new(n, p).unwrap();
            let total: f64 = (0..=n).map(|y| spec.log_pmf(y).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n} p={p}: {total}");
        }
    }
}

#[test]
fn binomial_edge_cases() {
    let zero = BinomialSpec::new(50, 0.0).unwrap();
    assert_eq!(zero.log_pmf(0), 0.0);
    assert_eq!(zero.log_pmf(1), f64::NEG_INFINITY);
    let mut rng = RngStream::new(2, 0);
    assert_eq!(zero.sample(&mut rng), 0);
    assert_eq!(BinomialSpec::new(50, 1.0).unwrap().sample(&mut rng), 50);
}

#[test]
fn gaussian_density_integrates_to_one() {
    for (mean, std) in [(0.0, 1.0), (3.5, 0.01), (-20.0, 40.0)] {
        let n = 200_000;
        let (lo, hi) = (mean - 10.0 * std, mean + 10.0 * std);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let y = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * log_density_gaussian(y, mean, std).exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-6, "({mean}, {std}): {total}");
    }
    assert!((log_density_gaussian(0.0, 0.0, 1.0) + 0.918_938_5).abs() < 1e-7);
}

proptest! {
    #[test]
    fn truncated_draws_stay_in_bounds(
        mean in -3.0f64..3.0,
        std in 0.1f64..3.0,
        offset in -2.0f64..1.0,
        span in 0.5f64..5.0,
        seed in any::<u64>(),
    ) {
        // Windows within a few std of the mean, where rejection is cheap.
        let lower = mean + offset * std;
        let width = span * std;
        let spec = TruncatedNormalSpec::new(mean, std, lower, lower + width).unwrap();
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..50 {
            let x = spec.sample(&mut rng).unwrap();
            prop_assert!(x >= lower && x <= lower + width);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn binomial_draws_in_range(n in 0u64..200, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let spec = BinomialSpec::new(n, p).unwrap();
        let mut rng = RngStream::new(seed, 0);
        prop_assert!(spec.sample(&mut rng) <= n);
    }
}
