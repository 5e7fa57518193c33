//! Binomial tail against exact rational arithmetic.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive, Zero};
use randaw_core::scenario::{binomial_tail, sample_bound_binomial, sample_bound_explicit, ProbabilityLevels};

/// `Σ_{k < n_theta} C(N, k) a^k (d - a)^(N-k) / d^N` for `ε = a/d`, summed
/// over the integers before the single division.
fn exact_tail(n: u64, num: u64, den: u64, n_theta: u64) -> BigRational {
    let (a, b) = (BigInt::from(num), BigInt::from(den - num));
    let mut binom = BigInt::one();
    let mut sum = BigInt::zero();
    for k in 0..n_theta.min(n + 1) {
        if k > 0 {
            binom = binom * BigInt::from(n - k + 1) / BigInt::from(k);
        }
        sum += &binom * Pow::pow(&a, k as u32) * Pow::pow(&b, (n - k) as u32);
    }
    BigRational::new(sum, BigInt::from(den).pow(n as u32))
}

#[test]
fn tail_matches_rational_evaluation() {
    let grid = [(1, 100), (1, 10), (1, 2)];
    let mut worst: f64 = 0.0;
    for (num, den) in grid {
        let eps = num as f64 / den as f64;
        for n in 1..=200u64 {
            for n_theta in 1..=10u64 {
                let exact = exact_tail(n, num, den, n_theta).to_f64().unwrap();
                let got = binomial_tail(n, eps, n_theta).unwrap();
                let rel = ((got - exact) / exact).abs();
                worst = worst.max(rel);
                assert!(rel <= 1e-12, "N={n} eps={eps} n_theta={n_theta}: {got} vs {exact} (rel {rel:e})");
            }
        }
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn binomial_bound_never_exceeds_explicit() {
    for eps in [0.01, 0.05, 0.1, 0.5] {
        for delta in [1e-9, 1e-6, 1e-3, 0.1] {
            let levels = ProbabilityLevels::new(eps, delta).unwrap();
            for n_theta in 1..=10 {
                let b = sample_bound_binomial(levels, n_theta, None).unwrap();
                let e = sample_bound_explicit(levels, n_theta).unwrap();
                assert!(b <= e, "eps={eps} delta={delta} n_theta={n_theta}: {b} > {e}");
                assert!(binomial_tail(b, eps, n_theta).unwrap() <= delta);
                assert!(b == 0 || binomial_tail(b - 1, eps, n_theta).unwrap() > delta);
            }
        }
    }
}
