//! Impurity and binomial upper bounds used by the quality impact model.

use crate::error::{domain, Result};

/// Binary gini impurity `2p(1-p)` of a node with `error_count` failures
/// among `total` samples.
pub fn gini_impurity(error_count: u64, total: u64) -> Result<f64> {
    if total == 0 {
        return domain("gini impurity of an empty node");
    }
    if error_count > total {
        return domain(format!("error count {error_count} exceeds total {total}"));
    }
    Ok(gini(error_count, total))
}

#[inline]
pub(crate) fn gini(error_count: u64, total: u64) -> f64 {
    let p = error_count as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`, summed in log space so large `n`
/// does not underflow the leading terms.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let nf = n as f64;

    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(k as usize + 1);
    for j in 0..=k {
        let jf = j as f64;
        if j > 0 {
            ln_binom += (nf - jf + 1.0).ln() - jf.ln();
        }
        terms.push(ln_binom + jf * ln_p + (nf - jf) * ln_q);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()).exp().min(1.0)
}

const BISECTION_TOL: f64 = 1e-15;

/// One-sided exact (Clopper-Pearson) upper confidence bound for a binomial
/// failure probability after observing `errors` failures in `n` trials.
///
/// `k = 0` and `k = n` use their closed forms; everything else goes through
/// [`clopper_pearson_upper_bisect`].
pub fn clopper_pearson_upper(errors: u64, n: u64, confidence: f64) -> Result<f64> {
    check_bound_args(errors, n, confidence)?;
    if errors == n {
        return Ok(1.0);
    }
    if errors == 0 {
        return Ok(1.0 - (1.0 - confidence).powf(1.0 / n as f64));
    }
    Ok(solve_upper(errors, n, 1.0 - confidence))
}

/// The general solver: smallest `p` with `P(X <= errors; n, p) <= 1 - confidence`,
/// found by bisection on the binomial CDF. No closed-form shortcuts.
pub fn clopper_pearson_upper_bisect(errors: u64, n: u64, confidence: f64) -> Result<f64> {
    check_bound_args(errors, n, confidence)?;
    if errors == n {
        return Ok(1.0);
    }
    Ok(solve_upper(errors, n, 1.0 - confidence))
}

fn check_bound_args(errors: u64, n: u64, confidence: f64) -> Result<()> {
    if n == 0 {
        return domain("binomial bound needs at least one trial");
    }
    if errors > n {
        return domain(format!("{errors} errors in {n} trials"));
    }
    if !(confidence > 0.5 && confidence < 1.0) {
        return domain(format!("confidence {confidence} outside (0.5, 1)"));
    }
    Ok(())
}

fn solve_upper(k: u64, n: u64, alpha: f64) -> f64 {
    // The CDF at the point estimate is at least ~1/2 > alpha, so the root
    // lies above it.
    let mut lo = k as f64 / n as f64;
    let mut hi = 1.0;
    for _ in 0..200 {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid) <= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini_impurity(0, 10).unwrap(), 0.0);
        assert_eq!(gini_impurity(5, 10).unwrap(), 0.5);
        assert!((gini_impurity(2, 10).unwrap() - 0.32).abs() < 1e-15);
        assert!(gini_impurity(0, 0).is_err());
        assert!(gini_impurity(3, 2).is_err());
    }

    #[test]
    fn cdf_matches_direct_sum() {
        // small n: direct pmf summation with exact binomial coefficients
        let (n, p) = (12u64, 0.3f64);
        let mut coeff = 1.0f64;
        let mut acc = 0.0;
        for k in 0..=n {
            if k > 0 {
                coeff *= (n - k + 1) as f64 / k as f64;
            }
            acc += coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            assert!((binomial_cdf(k, n, p) - acc).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn zero_failure_bounds() {
        let b = clopper_pearson_upper(0, 200, 0.999).unwrap();
        assert!((b - 0.0339486).abs() < 1e-6, "{b}");
        let b = clopper_pearson_upper(0, 956, 0.999).unwrap();
        assert!((b - 0.00720).abs() < 1e-5, "{b}");
    }

    #[test]
    fn all_failures_bound_is_one() {
        for n in [1, 7, 500] {
            assert_eq!(clopper_pearson_upper(n, n, 0.95).unwrap(), 1.0);
        }
    }

    #[test]
    fn bound_solves_the_tail_equation() {
        let b = clopper_pearson_upper(5, 300, 0.999).unwrap();
        assert!((binomial_cdf(5, 300, b) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn invalid_arguments() {
        assert!(clopper_pearson_upper(0, 0, 0.9).is_err());
        assert!(clopper_pearson_upper(3, 2, 0.9).is_err());
        assert!(clopper_pearson_upper(0, 10, 1.0).is_err());
        assert!(clopper_pearson_upper(0, 10, 0.5).is_err());
        assert!(clopper_pearson_upper(0, 10, f64::NAN).is_err());
    }

    #[test]
    fn closed_form_agrees_with_solver() {
        for n in (1..=10_000).step_by(37) {
            let closed = clopper_pearson_upper(0, n, 0.999).unwrap();
            let solved = clopper_pearson_upper_bisect(0, n, 0.999).unwrap();
            assert!((closed - solved).abs() < 1e-10, "n={n}");
        }
    }

    proptest! {
        #[test]
        fn bound_dominates_point_estimate(n in 1u64..2000, frac in 0.0f64..=1.0, c in 0.51f64..0.9999) {
            let k = ((n as f64) * frac).floor() as u64;
            let b = clopper_pearson_upper(k, n, c).unwrap();
            prop_assert!(b >= k as f64 / n as f64);
            prop_assert!(b > 0.0 && b <= 1.0);
        }

        #[test]
        fn bound_is_monotone(n in 2u64..1500, frac in 0.0f64..1.0, c in 0.6f64..0.999) {
            let k = ((n as f64) * frac).floor() as u64;
            let b = clopper_pearson_upper(k, n, c).unwrap();
            if k < n {
                prop_assert!(clopper_pearson_upper(k + 1, n, c).unwrap() >= b - 1e-12);
            }
            prop_assert!(clopper_pearson_upper(k, n + 1, c).unwrap() <= b + 1e-12);
            prop_assert!(clopper_pearson_upper(k, n, c + 0.0005).unwrap() >= b - 1e-12);
        }
    }
}
