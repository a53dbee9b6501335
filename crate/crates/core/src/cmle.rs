//! Conditional MLE for readouts selected by |Δ| ≥ K.

use crate::error::{Error, Result};
use crate::normal::{interval_prob, log_add_exp, log_cdf, log_pdf, two_sided_critical};

const MAX_FIXED_POINT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmlePoint {
    pub mu_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    /// true when the fixed-point map left the bracket and bisection finished the solve
    pub bisected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmleResult {
    pub mu_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    pub equivalent_variance: f64,
}

fn check(sigma: f64, k: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::arg(format!("sigma_delta must be positive, got {sigma}")));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::arg(format!("threshold K must be positive, got {k}")));
    }
    Ok(())
}

/// ln P(|X| ≥ K) for X ~ N(mu, sigma²).
fn log_selection_prob(mu: f64, sigma: f64, k: f64) -> f64 {
    let lower = log_cdf((-k - mu) / sigma);
    let upper = log_cdf((mu - k) / sigma);
    log_add_exp(lower, upper)
}

/// E[Δ − μ | |Δ| > K] for Δ ~ N(μ, σ_Δ²).
pub fn expected_selection_bias(mu: f64, sigma_delta: f64, k: f64) -> Result<f64> {
    check(sigma_delta, k)?;
    if !mu.is_finite() {
        return Err(Error::arg("mu must be finite"));
    }
    let a = (k - mu) / sigma_delta;
    let b = (-k - mu) / sigma_delta;
    let log_p = log_selection_prob(mu, sigma_delta, k);
    if !log_p.is_finite() {
        return Err(Error::numeric(format!(
            "selection region has no mass at mu={mu}, sigma={sigma_delta}, K={k}"
        )));
    }
    let (la, lb) = (log_pdf(a), log_pdf(b));
    if la == lb {
        return Ok(0.0);
    }
    let (hi, lo, sign) = if la > lb { (la, lb, 1.0) } else { (lb, la, -1.0) };
    let log_num = hi + (-(lo - hi).exp_m1()).ln();
    Ok(sign * sigma_delta * (log_num - log_p).exp())
}

fn require_selected(delta: f64, k: f64) -> Result<()> {
    if !delta.is_finite() {
        return Err(Error::arg("delta must be finite"));
    }
    if delta.abs() < k {
        return Err(Error::arg(format!(
            "|delta| = {} is below the selection threshold {k}",
            delta.abs()
        )));
    }
    Ok(())
}

/// Solves Δ − μ = E[Δ − μ | selected; μ] by fixed-point iteration from μ = Δ.
pub fn cmle_solve(delta: f64, sigma_delta: f64, k: f64) -> Result<CmlePoint> {
    check(sigma_delta, k)?;
    require_selected(delta, k)?;
    if delta < 0.0 {
        let p = cmle_solve(-delta, sigma_delta, k)?;
        return Ok(CmlePoint { mu_hat: -p.mu_hat, ..p });
    }
    let tol = 1e-10 * sigma_delta;
    let mut mu = delta;
    let mut iterations = 0;
    while iterations < MAX_FIXED_POINT {
        iterations += 1;
        let next = delta - expected_selection_bias(mu, sigma_delta, k)?;
        if (next - mu).abs() < tol {
            return Ok(CmlePoint {
                mu_hat: next,
                iterations,
                converged: true,
                bisected: false,
            });
        }
        if !(0.0..=delta).contains(&next) {
            break;
        }
        mu = next;
    }
    // root of g(μ) = Δ − μ − bias(μ) lies in (0, Δ): g(0) = Δ > 0 and g(Δ) = −bias(Δ) < 0
    let g = |m: f64| -> Result<f64> { Ok(delta - m - expected_selection_bias(m, sigma_delta, k)?) };
    let (mut lo, mut hi) = (0.0, delta);
    let mut steps = 0;
    while hi - lo > 1e-13 * sigma_delta.max(delta) && steps < 200 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CmlePoint {
        mu_hat: 0.5 * (lo + hi),
        iterations: iterations + steps,
        converged: true,
        bisected: true,
    })
}

/// ln P(X > Δ | |X| ≥ K) and ln P(X ≤ Δ | |X| ≥ K) for X ~ N(μ, σ²), Δ ≥ K.
fn log_tails(delta: f64, mu: f64, sigma: f64, k: f64) -> (f64, f64) {
    let log_p = log_selection_prob(mu, sigma, k);
    let d = (delta - mu) / sigma;
    let a = (k - mu) / sigma;
    let b = (-k - mu) / sigma;
    let log_upper = log_cdf(-d) - log_p;
    let log_lower = log_add_exp(log_cdf(b), interval_prob(a, d).ln()) - log_p;
    (log_upper, log_lower)
}

/// Interval {μ : α/2 ≤ F(Δ; μ) ≤ 1 − α/2} for the selection-conditional CDF F.
pub fn cmle_ci(delta: f64, sigma_delta: f64, k: f64, alpha: f64) -> Result<(f64, f64)> {
    check(sigma_delta, k)?;
    require_selected(delta, k)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if delta < 0.0 {
        let (lo, hi) = cmle_ci(-delta, sigma_delta, k, alpha)?;
        return Ok((-hi, -lo));
    }
    let target = (0.5 * alpha).ln();
    // both tail probabilities are monotone in μ: the upper tail rises, the lower tail falls
    let low = bisect_monotone(|mu| log_tails(delta, mu, sigma_delta, k).0 - target, delta, sigma_delta)?;
    let high = bisect_monotone(|mu| target - log_tails(delta, mu, sigma_delta, k).1, delta, sigma_delta)?;
    Ok((low, high))
}

/// Root of an increasing function, bracket grown outward from `center`.
fn bisect_monotone<F: Fn(f64) -> f64>(f: F, center: f64, scale: f64) -> Result<f64> {
    let mut width = 8.0 * scale;
    let (mut lo, mut hi);
    let mut grow = 0;
    loop {
        lo = center - width;
        hi = center + width;
        let (flo, fhi) = (f(lo), f(hi));
        if flo.is_nan() || fhi.is_nan() {
            return Err(Error::numeric("conditional tail probability evaluated to NaN"));
        }
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        grow += 1;
        if grow > 60 {
            return Err(Error::numeric("could not bracket the confidence limit"));
        }
        width *= 2.0;
    }
    let tol = 1e-8 * scale;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Point estimate plus inverted-test interval.
pub fn cmle_estimate(delta: f64, sigma_delta: f64, k: f64, alpha: f64) -> Result<CmleResult> {
    let point = cmle_solve(delta, sigma_delta, k)?;
    let (ci_low, ci_high) = cmle_ci(delta, sigma_delta, k, alpha)?;
    let z = two_sided_critical(alpha);
    let half = (ci_high - ci_low) / (2.0 * z);
    Ok(CmleResult {
        mu_hat: point.mu_hat,
        iterations: point.iterations,
        converged: point.converged,
        ci_low,
        ci_high,
        equivalent_variance: (half * half).max(f64::MIN_POSITIVE),
    })
}

/// Threshold on |Δ| equivalent to two-sided p < t.
pub fn threshold_for_p(t: f64, sigma_delta: f64) -> f64 {
    two_sided_critical(t) * sigma_delta
}

/// Conditional log-likelihood of μ given a selected Δ.
pub fn conditional_loglik(mu: f64, delta: f64, sigma_delta: f64, k: f64) -> f64 {
    log_pdf((delta - mu) / sigma_delta) - sigma_delta.ln() - log_selection_prob(mu, sigma_delta, k)
}
