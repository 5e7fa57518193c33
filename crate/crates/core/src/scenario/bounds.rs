//! Sample-complexity bounds for scenario designs and validation.

use super::{ProbabilityLevels, ScenarioError, SequentialConfig};

/// `ln(e^a + e^b)` without overflow.
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + libm::log1p(libm::exp(lo - hi))
}

/// Ceiling that ignores floating-point noise just above an integer.
fn ceil_tolerant(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() <= 1e-12 * x.abs().max(1.0) {
        r
    } else {
        libm::ceil(x)
    }
}

/// Binomial tail `Σ_{k < n_theta} C(N, k) ε^k (1-ε)^(N-k)`.
///
/// Terms are accumulated in log space with the ratio recurrence for
/// `ln C(N, k)`, so the result stays accurate for large `N` and tiny tails.
pub fn binomial_tail(n: u64, eps: f64, n_theta: u64) -> Result<f64, ScenarioError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(ScenarioError::InvalidArgument("eps must lie in [0, 1]"));
    }
    if n_theta == 0 {
        return Err(ScenarioError::InvalidArgument("n_theta must be at least 1"));
    }
    if eps == 0.0 || n_theta > n {
        // Either all mass sits at k = 0 or the sum covers every k.
        return Ok(1.0);
    }
    if eps == 1.0 {
        // All mass sits at k = N, which lies outside the sum.
        return Ok(0.0);
    }
    let ln_eps = libm::log(eps);
    let ln_one_minus = libm::log1p(-eps);
    let mut ln_binom = 0.0;
    let mut acc = f64::NEG_INFINITY;
    for k in 0..n_theta {
        if k > 0 {
            ln_binom += libm::log((n - k + 1) as f64) - libm::log(k as f64);
        }
        let term = ln_binom + k as f64 * ln_eps + (n - k) as f64 * ln_one_minus;
        acc = log_add_exp(acc, term);
    }
    Ok(libm::exp(acc).min(1.0))
}

/// Smallest `N` with `binomial_tail(N, ε, n_theta) ≤ δ`, where `δ` is
/// `delta_override` when given and `levels.delta` otherwise.
///
/// The tail is nonincreasing in `N`, so the search brackets by doubling and
/// then bisects.
pub fn sample_bound_binomial(
    levels: ProbabilityLevels,
    n_theta: u64,
    delta_override: Option<f64>,
) -> Result<u64, ScenarioError> {
    let delta = delta_override.unwrap_or(levels.delta());
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ScenarioError::InvalidArgument("delta must lie in (0, 1)"));
    }
    if n_theta == 0 {
        return Err(ScenarioError::InvalidArgument("n_theta must be at least 1"));
    }
    let eps = levels.epsilon();
    let ok = |n: u64| binomial_tail(n, eps, n_theta).map(|t| t <= delta);
    let mut hi = n_theta.max(1);
    let mut lo = 0;
    while !ok(hi)? {
        lo = hi;
        hi = hi.checked_mul(2).ok_or(ScenarioError::InvalidArgument("sample bound overflows u64"))?;
    }
    // Invariant: ok(hi) holds and every N ≤ lo fails.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Explicit sufficient sample size `⌈e/(ε(e-1)) · (ln(1/δ) + n_theta - 1)⌉`.
pub fn sample_bound_explicit(levels: ProbabilityLevels, n_theta: u64) -> Result<u64, ScenarioError> {
    if n_theta == 0 {
        return Err(ScenarioError::InvalidArgument("n_theta must be at least 1"));
    }
    let e = core::f64::consts::E;
    let factor = e / (levels.epsilon() * (e - 1.0));
    let n = factor * (libm::log(1.0 / levels.delta()) + n_theta as f64 - 1.0);
    Ok(ceil_tolerant(n) as u64)
}

/// Generalized harmonic number `H_n(α) = Σ_{j=1}^{n} j^(-α)`.
pub fn hyperharmonic(n: u64, alpha: f64) -> f64 {
    (1..=n).map(|j| libm::pow(j as f64, -alpha)).sum()
}

/// Validation sample size `M_k` of the sequential algorithm for iteration `k`.
pub fn validation_bound(k: u64, cfg: &SequentialConfig) -> Result<u64, ScenarioError> {
    validation_bound_with(k, cfg.k_t(), cfg.alpha(), cfg.levels().epsilon(), cfg.levels().delta())
}

/// [`validation_bound`] on raw arguments. Accepts `δ = 1`, which
/// [`ProbabilityLevels`] excludes.
pub fn validation_bound_with(k: u64, k_t: u64, alpha: f64, eps: f64, delta: f64) -> Result<u64, ScenarioError> {
    if k_t < 2 {
        return Err(ScenarioError::InvalidArgument("k_t must be at least 2"));
    }
    if k == 0 || k >= k_t {
        return Err(ScenarioError::InvalidArgument("k must satisfy 1 <= k <= k_t - 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ScenarioError::InvalidArgument("alpha must be positive"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(ScenarioError::InvalidArgument("epsilon must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ScenarioError::InvalidArgument("delta must lie in (0, 1]"));
    }
    let num = alpha * libm::log(k as f64) + libm::log(hyperharmonic(k_t - 1, alpha)) + libm::log(2.0 / delta);
    let den = -libm::log1p(-eps);
    Ok(ceil_tolerant(num / den).max(1.0) as u64)
}

/// The `α` on a 61-point log grid over `[0.1, 10]` that minimizes the total
/// validation effort `Σ_{k=1}^{k_t-1} M_k`. Ties go to the smaller `α`.
pub fn best_alpha(k_t: u64, levels: ProbabilityLevels) -> Result<f64, ScenarioError> {
    let mut best = (u64::MAX, 1.0);
    for i in 0..=60 {
        let alpha = libm::pow(10.0, -1.0 + 2.0 * i as f64 / 60.0);
        let mut total = 0u64;
        for k in 1..k_t {
            total += validation_bound_with(k, k_t, alpha, levels.epsilon(), levels.delta())?;
        }
        if total < best.0 {
            best = (total, alpha);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(e: f64, d: f64) -> ProbabilityLevels {
        ProbabilityLevels::new(e, d).unwrap()
    }

    #[test]
    fn explicit_bounds_match_reference_sample_sizes() {
        let l = lv(0.01, 1e-6);
        assert_eq!(sample_bound_explicit(l, 5).unwrap(), 2819);
        assert_eq!(sample_bound_explicit(l, 6).unwrap(), 2977);
        assert_eq!(sample_bound_explicit(l, 8).unwrap(), 3293);
    }

    #[test]
    fn tail_edge_cases() {
        assert_eq!(binomial_tail(10, 0.0, 3).unwrap(), 1.0);
        let t = binomial_tail(37, 0.2, 1).unwrap();
        assert!((t - 0.8f64.powi(37)).abs() <= 1e-14 * t);
        assert_eq!(binomial_tail(3, 0.5, 10).unwrap(), 1.0);
        assert!(binomial_tail(3, 1.5, 1).is_err());
        assert!(binomial_tail(3, 0.5, 0).is_err());
    }

    #[test]
    fn binomial_bound_one_term_closed_form() {
        // ⌈ln δ / ln(1-ε)⌉ = ⌈43.7⌉
        assert_eq!(sample_bound_binomial(lv(0.1, 0.01), 1, None).unwrap(), 44);
    }

    #[test]
    fn validation_bound_examples() {
        let cfg = SequentialConfig::new(10, 1.0, lv(0.01, 1e-6)).unwrap();
        // (ln 2.8289682… + ln 2e6) / -ln 0.99 = 1547.07
        assert_eq!(validation_bound(1, &cfg).unwrap(), 1548);
        assert!(validation_bound(2, &cfg).unwrap() >= validation_bound(1, &cfg).unwrap());
        assert!(validation_bound(10, &cfg).is_err());
        assert!(validation_bound(0, &cfg).is_err());
        assert_eq!(validation_bound_with(1, 2, 1.0, 0.5, 1.0).unwrap(), 1);
    }

    #[test]
    fn hyperharmonic_nine() {
        assert!((hyperharmonic(9, 1.0) - 2.8289682539682537).abs() < 1e-15);
    }

    #[test]
    fn best_alpha_is_on_grid() {
        let a = best_alpha(10, lv(0.01, 1e-6)).unwrap();
        assert!((0.1..=10.0).contains(&a));
    }
}
