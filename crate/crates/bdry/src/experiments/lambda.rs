//! Closed-form attribution-robustness bound for smoothed one-layer networks.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Standard normal quantile, refined by Newton steps on the CDF to full
/// f64 precision.
pub fn normal_quantile(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut z = n.inverse_cdf(p);
    for _ in 0..2 {
        let pdf = n.pdf(z);
        if pdf <= f64::MIN_POSITIVE {
            break;
        }
        z -= (n.cdf(z) - p) / pdf;
    }
    z
}

/// Attribution-robustness constant
/// `lambda = (1/sigma) * sqrt(2 pi) W_frob^2 / (2 c w_norm) * ln(2)
///   * (quantile(p_a) - quantile(p_b))`.
///
/// `W_frob` is the Frobenius norm of the full weight matrix, `w_norm` the
/// norm of the class column, `c` the gradient-norm floor over the ball, and
/// `p_a`/`p_b` the top-two class probabilities of the smoothed classifier.
/// Boundary probabilities (`p_a = 1` or `p_b = 0`) give an infinite bound.
pub fn compute_lambda_bound(
    w_frob: f64,
    w_norm: f64,
    c: f64,
    sigma: f64,
    p_a: f64,
    p_b: f64,
) -> Result<f64> {
    if !(c > 0.0) || !(sigma > 0.0) || !(w_frob >= 0.0) || !(w_norm > 0.0) {
        return Err(Error::InvalidInput(
            "need c > 0, sigma > 0, w_norm > 0, w_frob >= 0".into(),
        ));
    }
    if !(p_a > 0.5 && p_a <= 1.0) {
        return Err(Error::InvalidInput(format!("p_a must be in (0.5, 1], got {p_a}")));
    }
    if !(p_b >= 0.0 && p_b < p_a) {
        return Err(Error::InvalidInput(format!("need 0 <= p_b < p_a, got p_b = {p_b}")));
    }
    let quantile_gap = normal_quantile(p_a) - normal_quantile(p_b);
    let scale = (std::f64::consts::TAU).sqrt() * w_frob * w_frob / (2.0 * c * w_norm);
    Ok(scale * (2.0f64).ln() * quantile_gap / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent quantile oracle: bisection on a quadrature Gaussian CDF.
    /// No shared code with `normal_quantile`.
    fn quantile_oracle(p: f64) -> f64 {
        // CDF(z) = 0.5 + integral_0^z pdf, composite Simpson with fine steps.
        fn cdf(z: f64) -> f64 {
            let n = 4000;
            let h = z / n as f64;
            let pdf = |t: f64| (-0.5 * t * t).exp() / (std::f64::consts::TAU).sqrt();
            let mut acc = pdf(0.0) + pdf(z);
            for i in 1..n {
                let t = i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
            }
            0.5 + acc * h / 3.0
        }
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_matches_quadrature_oracle() {
        for p in [0.10, 0.25, 0.5, 0.75, 0.90, 0.975] {
            let got = normal_quantile(p);
            let want = quantile_oracle(p);
            assert!((got - want).abs() < 1e-10, "quantile({p}) = {got}, oracle {want}");
        }
    }

    #[test]
    fn reference_value_matches_oracle_composition() {
        // (W_frob = 1, w_norm = 1, c = 1, sigma = 1, p_a = 0.9, p_b = 0.1).
        let got = compute_lambda_bound(1.0, 1.0, 1.0, 1.0, 0.9, 0.1).unwrap();
        let gap = quantile_oracle(0.9) - quantile_oracle(0.1);
        let want = (std::f64::consts::TAU).sqrt() / 2.0 * (2.0f64).ln() * gap;
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn doubling_sigma_halves_lambda() {
        let a = compute_lambda_bound(2.0, 1.5, 0.7, 0.5, 0.85, 0.05).unwrap();
        let b = compute_lambda_bound(2.0, 1.5, 0.7, 1.0, 0.85, 0.05).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn rejects_crossed_probabilities() {
        assert!(compute_lambda_bound(1.0, 1.0, 1.0, 1.0, 0.6, 0.6).is_err());
        assert!(compute_lambda_bound(1.0, 1.0, 1.0, 1.0, 0.6, 0.7).is_err());
        assert!(compute_lambda_bound(1.0, 1.0, 1.0, 1.0, 0.5, 0.1).is_err());
    }
}
