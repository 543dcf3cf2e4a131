//! Standard normal helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(x)`, computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Inverse Mills ratio `pdf(a) / (1 - cdf(a))`, the mean of a standard normal
/// truncated to `[a, inf)`.
pub fn inverse_mills(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if a > 35.0 {
        // tail expansion; sf underflows past here
        return a + 1.0 / a - 2.0 / a.powi(3);
    }
    pdf(a) / sf(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Φ(1.96), Φ(-3.432), 1 - Φ(8) from tables / mpmath
        assert!((cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((cdf(-3.432) - 2.995_737_791_481_13e-4).abs() < 1e-15);
        assert!((sf(8.0) - 6.220_960_574_271_78e-16).abs() < 1e-27);
        assert!((cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mills_ratio_limits() {
        assert_eq!(inverse_mills(f64::NEG_INFINITY), 0.0);
        assert!((inverse_mills(0.0) - (2.0 / PI).sqrt()).abs() < 1e-14);
        // λ(a) ~ a for large a
        assert!((inverse_mills(20.0) - 20.049_753_068_527_85).abs() < 1e-10);
        assert!(inverse_mills(-40.0) < 1e-300);
        let a = 35.0;
        let below = pdf(a - 1e-9) / sf(a - 1e-9);
        assert!((inverse_mills(a) - below).abs() / below < 1e-6);
    }
}
