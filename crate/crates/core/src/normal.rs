//! Standard normal primitives.
//!
//! The CDF is built on the complementary error function so that tail
//! probabilities keep full relative precision; `log_cdf` switches to an
//! asymptotic series below `-20` where even `erfc` would start to lose
//! digits to subnormals.

use libm::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// ln(sqrt(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Two-sided 95% normal quantile, z_{0.025}.
pub const Z_975: f64 = 1.959_963_984_540_054;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// 1 − Φ(x), computed without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// ln Φ(x), accurate to ~1e−12 relative over the whole real line.
pub fn log_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 0.0 {
        return (-sf(x)).ln_1p();
    }
    if x > -20.0 {
        return cdf(x).ln();
    }
    // Φ(x) = φ(x)/|x| · (1 − 1/x² + 3/x⁴ − 15/x⁶ + ...)
    let inv2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * inv2;
        series += term;
    }
    log_pdf(x) - (-x).ln() + series.ln()
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile((-p).ln_1p());
    }
    lower_quantile(p.ln())
}

/// Quantile for p ≤ 1/2 given ln p. Rational starting point
/// (|error| < 5e−4), then Newton steps on ln Φ(z) − ln p.
fn lower_quantile(log_p: f64) -> f64 {
    let t = (-2.0 * log_p).sqrt();
    let mut z = -(t
        - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
            / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    for _ in 0..20 {
        let lc = log_cdf(z);
        // d/dz ln Φ(z) = φ(z)/Φ(z)
        let slope = (log_pdf(z) - lc).exp();
        let step = (lc - log_p) / slope;
        z -= step;
        if step.abs() <= 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// z such that P(|Z| > z) = alpha.
pub fn two_sided_critical(alpha: f64) -> f64 {
    -quantile(0.5 * alpha)
}

/// P(lo < Z < hi) with the subtraction done on the side that keeps precision.
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 0.0 {
        sf(lo) - sf(hi)
    } else if hi < 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - cdf(lo) - sf(hi)
    }
}

/// ln(e^a + e^b), tolerant of infinities.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// log density of Normal(mean, var) at x.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}
