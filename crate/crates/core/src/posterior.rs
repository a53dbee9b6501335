//! Posterior mean and variance of μ given Δ ~ Normal(μ, se2) under the
//! supported priors.
//!
//! Gaussian, Laplace, and the three-headed mixture have closed forms. The
//! Laplace terms multiply `exp(√2Δ/ν)` by a normal tail probability, which
//! overflows in linear space for moderate Δ; every such product here is
//! formed in log space and combined with log-sum-exp. Priors without a
//! closed form (Huber, Student-t) go through adaptive quadrature, which also
//! serves as the independent oracle for the closed forms.

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::normal::{self, log_add_exp, log_normal_density};
use crate::prior::PriorModel;
use crate::quadrature;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Everything reported for one adjusted readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorSummary {
    /// E(μ | Δ)
    pub mean: f64,
    /// Var(μ | Δ) after capping at the readout's noise variance.
    pub variance: f64,
    pub variance_uncapped: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub adjusted_p: f64,
    /// Posterior probabilities of the (zero, Gaussian, Laplace) heads.
    pub component_posteriors: Option<[f64; 3]>,
    /// Marginal log-likelihood of Δ under the prior.
    pub evidence: f64,
}

impl PosteriorSummary {
    /// Caps the variance at `se2`, then derives the interval and adjusted p.
    pub fn from_moments(
        mean: f64,
        variance_uncapped: f64,
        se2: f64,
        alpha: f64,
        evidence: f64,
        component_posteriors: Option<[f64; 3]>,
    ) -> Self {
        let variance = variance_uncapped.min(se2).max(0.0);
        let (ci_low, ci_high) = interval(mean, variance, alpha);
        Self {
            mean,
            variance,
            variance_uncapped,
            ci_low,
            ci_high,
            adjusted_p: adjusted_p_from(mean, variance),
            component_posteriors,
            evidence,
        }
    }

    /// A summary whose variance is taken as given (no cap, no evidence).
    pub fn with_variance(mean: f64, variance: f64, alpha: f64) -> Self {
        let (ci_low, ci_high) = interval(mean, variance, alpha);
        Self {
            mean,
            variance,
            variance_uncapped: variance,
            ci_low,
            ci_high,
            adjusted_p: adjusted_p_from(mean, variance),
            component_posteriors: None,
            evidence: f64::NAN,
        }
    }
}

/// Mean, variance, and log evidence of a posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    pub log_evidence: f64,
}

fn check_obs(delta: f64, se2: f64) -> Result<()> {
    ensure_finite("delta", delta)?;
    ensure_positive("se2", se2)
}

/// Conjugate Gaussian posterior: linear shrinkage τ²/(τ² + se2)·Δ.
pub fn posterior_gaussian(delta: f64, se2: f64, tau2: f64) -> Result<(f64, f64)> {
    check_obs(delta, se2)?;
    ensure_positive("tau2", tau2)?;
    Ok(gaussian_unchecked(delta, se2, tau2))
}

fn gaussian_unchecked(delta: f64, se2: f64, tau2: f64) -> (f64, f64) {
    let shrink = tau2 / (tau2 + se2);
    (shrink * delta, shrink * se2)
}

/// Laplace prior with variance ν²: closed-form mean, variance, and log marginal.
pub fn laplace_moments(delta: f64, se2: f64, nu2: f64) -> Result<Moments> {
    check_obs(delta, se2)?;
    ensure_positive("nu2", nu2)?;
    let m = laplace_unchecked(delta, se2, nu2);
    if !(m.mean.is_finite() && m.var.is_finite() && m.log_evidence.is_finite()) {
        return Err(Error::numeric(format!(
            "Laplace posterior overflowed at delta={delta}, se2={se2}, nu2={nu2}: {m:?}"
        )));
    }
    Ok(m)
}

fn laplace_unchecked(delta: f64, se2: f64, nu2: f64) -> Moments {
    let s = se2.sqrt();
    let rate = SQRT_2 / nu2.sqrt();
    let b = rate * se2;
    // ln F(Δ) and ln F(−Δ)
    let log_f_pos = rate * delta + normal::log_cdf(-(delta + b) / s);
    let log_f_neg = -rate * delta + normal::log_cdf((delta - b) / s);
    let log_total = log_add_exp(log_f_pos, log_f_neg);
    let w = (log_f_pos - log_total).exp();
    let w_neg = (log_f_neg - log_total).exp();
    let mean = delta + b * (w - w_neg);

    // f(Δ)/(F(Δ)+F(−Δ)) − 2 w (1 − w)
    let log_small_f = -(rate * s).ln() + rate * delta + normal::log_pdf(-(delta + b) / s);
    let ratio = (log_small_f - log_total).exp() - 2.0 * w * w_neg;
    let var = se2 - 2.0 * b * b * ratio;

    let log_evidence = (0.5 * rate).ln() + 0.5 * rate * rate * se2 + log_total;
    Moments {
        mean,
        var,
        log_evidence,
    }
}

/// Laplace posterior mean and variance.
pub fn posterior_laplace(delta: f64, se2: f64, nu2: f64) -> Result<(f64, f64)> {
    let m = laplace_moments(delta, se2, nu2)?;
    Ok((m.mean, m.var))
}

/// Log marginal densities of the three mixture heads.
pub(crate) fn laplace_log_evidence(delta: f64, se2: f64, nu2: f64) -> f64 {
    laplace_unchecked(delta, se2, nu2).log_evidence
}

/// Closed-form log marginal of Δ under the Huber prior: the Gaussian core
/// and the two exponential tails each convolve to a Φ term.
pub fn huber_log_marginal(delta: f64, se2: f64, tau2: f64, k: f64) -> f64 {
    let s = se2.sqrt();
    let total = tau2 + se2;
    let m = tau2 * delta / total;
    let v = (tau2 * se2 / total).sqrt();
    let core = 0.5 * (2.0 * std::f64::consts::PI * tau2).ln()
        + log_normal_density(delta, 0.0, total)
        + normal::interval_prob((-k - m) / v, (k - m) / v).ln();
    let rate = k / tau2;
    let edge = 0.5 * k * k / tau2 + 0.5 * rate * rate * se2;
    let right = edge - rate * delta + normal::log_cdf((delta - rate * se2 - k) / s);
    let left = edge + rate * delta + normal::log_cdf((-delta - rate * se2 - k) / s);
    let log_z = crate::prior::huber_moments(tau2, k).0;
    normal::log_sum_exp(&[core, right, left]) - log_z
}

fn mixture_log_marginals(delta: f64, se2: f64, tau2: f64, nu2: f64) -> ([f64; 3], Moments) {
    let lap = laplace_unchecked(delta, se2, nu2);
    (
        [
            log_normal_density(delta, 0.0, se2),
            log_normal_density(delta, 0.0, tau2 + se2),
            lap.log_evidence,
        ],
        lap,
    )
}

/// Responsibilities (q0, qG, qL) and the mixture's log evidence.
pub fn mixture_responsibilities(delta: f64, se2: f64, weights: [f64; 3], tau2: f64, nu2: f64) -> ([f64; 3], f64) {
    let (log_m, _) = mixture_log_marginals(delta, se2, tau2, nu2);
    responsibilities_from(weights, log_m)
}

fn responsibilities_from(weights: [f64; 3], log_m: [f64; 3]) -> ([f64; 3], f64) {
    let mut log_joint = [f64::NEG_INFINITY; 3];
    for k in 0..3 {
        if weights[k] > 0.0 {
            log_joint[k] = weights[k].ln() + log_m[k];
        }
    }
    let log_ev = normal::log_sum_exp(&log_joint);
    let mut q = [0.0; 3];
    for k in 0..3 {
        q[k] = (log_joint[k] - log_ev).exp();
    }
    (q, log_ev)
}

/// Three-headed mixture posterior (zero, Gaussian, Laplace heads) with the
/// variance decomposed by the law of total variance and capped at `se2`.
pub fn posterior_mixture(delta: f64, se2: f64, prior: &PriorModel, alpha: f64) -> Result<PosteriorSummary> {
    check_obs(delta, se2)?;
    let PriorModel::Mixture { p0, pg, pl, tau2, nu2 } = *prior else {
        return Err(Error::arg("posterior_mixture needs a mixture prior"));
    };
    prior.validate()?;
    let m = mixture_moments(delta, se2, [p0, pg, pl], tau2, nu2)?;
    Ok(PosteriorSummary::from_moments(
        m.0.mean,
        m.0.var,
        se2,
        alpha,
        m.0.log_evidence,
        Some(m.1),
    ))
}

fn mixture_moments(delta: f64, se2: f64, weights: [f64; 3], tau2: f64, nu2: f64) -> Result<(Moments, [f64; 3])> {
    let (log_m, lap) = mixture_log_marginals(delta, se2, tau2, nu2);
    let (q, log_ev) = responsibilities_from(weights, log_m);
    if !log_ev.is_finite() {
        return Err(Error::numeric(format!(
            "all mixture marginals vanished at delta={delta}, se2={se2}"
        )));
    }
    let (mean_g, var_g) = gaussian_unchecked(delta, se2, tau2);
    let (mean_l, var_l) = if q[2] > 0.0 { (lap.mean, lap.var) } else { (0.0, 0.0) };
    let mean = q[1] * mean_g + q[2] * mean_l;
    let second = q[1] * (var_g + mean_g * mean_g) + q[2] * (var_l + mean_l * mean_l);
    let var = (second - mean * mean).max(0.0);
    Ok((
        Moments {
            mean,
            var,
            log_evidence: log_ev,
        },
        q,
    ))
}

/// Posterior moments by adaptive quadrature.
///
/// `log_density` is the log of the continuous part of the prior (already
/// scaled by its mass); `point_mass` sits at μ = 0 and is handled
/// analytically. The integration window is Δ ± 12·sqrt(se2 + prior_variance).
pub fn posterior_quadrature(
    log_density: &dyn Fn(f64) -> f64,
    point_mass: f64,
    prior_variance: f64,
    breakpoints: &[f64],
    delta: f64,
    se2: f64,
) -> Result<Moments> {
    check_obs(delta, se2)?;
    if !(0.0..=1.0).contains(&point_mass) {
        return Err(Error::arg(format!("point mass must lie in [0, 1], got {point_mass}")));
    }
    let s = se2.sqrt();
    let log_lik = |mu: f64| log_normal_density(delta, mu, se2);
    let log_point = if point_mass > 0.0 {
        point_mass.ln() + log_lik(0.0)
    } else {
        f64::NEG_INFINITY
    };
    if point_mass >= 1.0 {
        return Ok(Moments {
            mean: 0.0,
            var: 0.0,
            log_evidence: log_point,
        });
    }

    let half_width = 12.0 * (se2 + prior_variance.max(0.0)).sqrt();
    let (lo, hi) = (delta - half_width, delta + half_width);
    let mut cuts: Vec<f64> = breakpoints.to_vec();
    for k in -6..=6 {
        cuts.push(delta + 2.0 * k as f64 * s);
    }
    // shift so the integrand peaks near 1
    let log_post = |mu: f64| log_lik(mu) + log_density(mu);
    let probe_points = [delta, 0.0, 0.5 * delta, lo, hi]
        .into_iter()
        .chain((1..40).map(|i| lo + (hi - lo) * i as f64 / 40.0));
    let shift = probe_points
        .map(log_post)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(log_point);
    if !shift.is_finite() {
        return Err(Error::numeric("prior has no mass near the observation"));
    }

    let first = quadrature::integrate(
        &|mu: f64| {
            let w = (log_post(mu) - shift).exp();
            [w, w * (mu - delta)]
        },
        lo,
        hi,
        &cuts,
        1e-13,
        1e-300,
    )?;
    let cont_mass = first.value[0];
    let cont_mean = if cont_mass > 0.0 {
        delta + first.value[1] / cont_mass
    } else {
        0.0
    };
    let second = quadrature::integrate(
        &|mu: f64| {
            let w = (log_post(mu) - shift).exp();
            let d = mu - cont_mean;
            [w * d * d]
        },
        lo,
        hi,
        &cuts,
        1e-13,
        1e-300,
    )?;
    let cont_var = if cont_mass > 0.0 {
        second.value[0] / cont_mass
    } else {
        0.0
    };

    let point = (log_point - shift).exp();
    let total = cont_mass + point;
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::numeric(format!(
            "posterior mass degenerate ({total}) at delta={delta}"
        )));
    }
    let mean = cont_mass * cont_mean / total;
    let var = (cont_mass * (cont_var + (cont_mean - mean).powi(2)) + point * mean * mean) / total;
    Ok(Moments {
        mean,
        var,
        log_evidence: shift + total.ln(),
    })
}

/// Quadrature posterior for any `PriorModel`.
pub fn quadrature_moments(prior: &PriorModel, delta: f64, se2: f64) -> Result<Moments> {
    prior.validate()?;
    posterior_quadrature(
        &|mu| prior.log_density(mu),
        prior.point_mass(),
        prior.variance(),
        &prior.breakpoints(),
        delta,
        se2,
    )
}

/// Huber prior posterior via quadrature.
pub fn posterior_huber(delta: f64, se2: f64, tau2: f64, k: f64) -> Result<(f64, f64)> {
    let m = quadrature_moments(&PriorModel::Huber { tau2, k }, delta, se2)?;
    Ok((m.mean, m.var))
}

/// Closed form when available, quadrature otherwise.
pub fn moments(prior: &PriorModel, delta: f64, se2: f64) -> Result<(Moments, Option<[f64; 3]>)> {
    check_obs(delta, se2)?;
    prior.validate()?;
    match *prior {
        PriorModel::Zero => Ok((
            Moments {
                mean: 0.0,
                var: 0.0,
                log_evidence: log_normal_density(delta, 0.0, se2),
            },
            None,
        )),
        PriorModel::Gaussian { tau2 } => {
            let (mean, var) = gaussian_unchecked(delta, se2, tau2);
            Ok((
                Moments {
                    mean,
                    var,
                    log_evidence: log_normal_density(delta, 0.0, tau2 + se2),
                },
                None,
            ))
        }
        PriorModel::Laplace { nu2 } => Ok((laplace_moments(delta, se2, nu2)?, None)),
        PriorModel::Mixture { p0, pg, pl, tau2, nu2 } => {
            let (m, q) = mixture_moments(delta, se2, [p0, pg, pl], tau2, nu2)?;
            Ok((m, Some(q)))
        }
        PriorModel::Huber { .. } | PriorModel::StudentT { .. } | PriorModel::ZeroInflatedT { .. } => {
            Ok((quadrature_moments(prior, delta, se2)?, None))
        }
    }
}

/// Full summary (capped variance, interval, adjusted p) for one observation.
pub fn summarize(prior: &PriorModel, delta: f64, se2: f64, alpha: f64) -> Result<PosteriorSummary> {
    check_alpha(alpha)?;
    let (m, q) = moments(prior, delta, se2)?;
    Ok(PosteriorSummary::from_moments(
        m.mean,
        m.var,
        se2,
        alpha,
        m.log_evidence,
        q,
    ))
}

/// l(Δ): log of the prior ⊛ Normal(0, se2) density at Δ.
pub fn marginal_loglik(prior: &PriorModel, delta: f64, se2: f64) -> Result<f64> {
    let (m, _) = moments(prior, delta, se2)?;
    if m.log_evidence.is_finite() {
        Ok(m.log_evidence)
    } else {
        Err(Error::numeric(format!(
            "marginal likelihood underflowed at delta={delta}, se2={se2}"
        )))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// 2·min{P(μ ≥ 0 | Δ), P(μ ≤ 0 | Δ)} under the Normal(mean, variance) approximation.
///
/// Zero variance is the limit case: 1 when the mean is 0, else 0.
pub fn adjusted_p(summary: &PosteriorSummary) -> f64 {
    adjusted_p_from(summary.mean, summary.variance)
}

pub(crate) fn adjusted_p_from(mean: f64, variance: f64) -> f64 {
    if variance <= 0.0 {
        return if mean == 0.0 { 1.0 } else { 0.0 };
    }
    (2.0 * normal::sf(mean.abs() / variance.sqrt())).min(1.0)
}

/// mean ± z_{α/2}·sqrt(variance).
pub fn credible_interval(summary: &PosteriorSummary, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    Ok(interval(summary.mean, summary.variance, alpha))
}

fn interval(mean: f64, variance: f64, alpha: f64) -> (f64, f64) {
    let half = normal::two_sided_critical(alpha) * variance.max(0.0).sqrt();
    (mean - half, mean + half)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn huber_closed_form_marginal_matches_quadrature() {
        for &(tau2, k) in &[(1.0, 1.345), (0.3, 0.2), (2.0, 5.0)] {
            let prior = PriorModel::Huber { tau2, k };
            for &d in &[-6.0, -1.0, 0.0, 0.4, 2.5, 9.0] {
                let closed = huber_log_marginal(d, 0.7, tau2, k);
                let quad = marginal_loglik(&prior, d, 0.7).unwrap();
                assert!(
                    (closed - quad).abs() < 1e-9,
                    "tau2={tau2} k={k} d={d}: {closed} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(posterior_gaussian(1.0, 1.0, 1.0).unwrap(), (0.5, 0.5));
        assert_eq!(posterior_gaussian(0.0, 3.0, 0.2).unwrap().0, 0.0);
        let (m, v) = posterior_gaussian(2.0, 0.25, 1.0).unwrap();
        assert!(close(m, 1.6, 1e-15) && close(v, 0.2, 1e-15));
        assert!(posterior_gaussian(1.0, 0.0, 1.0).is_err());
        assert!(posterior_gaussian(1.0, 1.0, -1.0).is_err());
        assert!(posterior_gaussian(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn laplace_examples() {
        assert_eq!(posterior_laplace(0.0, 0.7, 1.3).unwrap().0, 0.0);
        // far tail approaches Δ − b with b = se2·√2/ν
        let (m, _) = posterior_laplace(50.0, 1.0, 1.0).unwrap();
        assert!(close(m, 50.0 - SQRT_2, 1e-6), "{m}");
        let (m, v) = posterior_laplace(1.5, 0.5, 2.0).unwrap();
        let q = quadrature_moments(&PriorModel::Laplace { nu2: 2.0 }, 1.5, 0.5).unwrap();
        assert!(close(m, q.mean, 1e-6) && close(v, q.var, 1e-6), "{m} {v} {q:?}");
    }

    #[test]
    fn laplace_survives_extreme_inputs() {
        for &d in &[1e3, -1e3, 1e6] {
            let (m, v) = posterior_laplace(d, 1.0, 1e-4).unwrap();
            assert!(m.is_finite() && v.is_finite() && v > 0.0, "{d}: {m} {v}");
        }
    }

    #[test]
    fn mixture_degenerate_weights() {
        let g = PriorModel::Mixture {
            p0: 0.0,
            pg: 1.0,
            pl: 0.0,
            tau2: 0.8,
            nu2: 2.0,
        };
        let s = posterior_mixture(1.3, 0.4, &g, 0.05).unwrap();
        let (m, v) = posterior_gaussian(1.3, 0.4, 0.8).unwrap();
        assert!(close(s.mean, m, 1e-15) && close(s.variance_uncapped, v, 1e-15));
        let z = PriorModel::Mixture {
            p0: 1.0,
            pg: 0.0,
            pl: 0.0,
            tau2: 0.8,
            nu2: 2.0,
        };
        let s = posterior_mixture(1.3, 0.4, &z, 0.05).unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 0.0));
        assert_eq!(s.component_posteriors.unwrap()[0], 1.0);
    }

    #[test]
    fn mixture_matches_quadrature() {
        let prior = PriorModel::Mixture {
            p0: 0.7,
            pg: 0.15,
            pl: 0.15,
            tau2: 0.5,
            nu2: 2.0,
        };
        let s = posterior_mixture(2.0, 0.25, &prior, 0.05).unwrap();
        let q = quadrature_moments(&prior, 2.0, 0.25).unwrap();
        assert!(close(s.mean, q.mean, 1e-5), "{} {}", s.mean, q.mean);
        assert!(close(s.variance_uncapped, q.var, 1e-5));
        assert!(close(s.evidence, q.log_evidence, 1e-8));
        let total: f64 = s.component_posteriors.unwrap().iter().sum();
        assert!(close(total, 1.0, 1e-10));
    }

    #[test]
    fn quadrature_reproduces_gaussian_and_point_mass() {
        let q = quadrature_moments(&PriorModel::Gaussian { tau2: 0.6 }, 1.7, 0.3).unwrap();
        let (m, v) = posterior_gaussian(1.7, 0.3, 0.6).unwrap();
        assert!(close(q.mean, m, 1e-8) && close(q.var, v, 1e-8));
        assert!(close(q.log_evidence, log_normal_density(1.7, 0.0, 0.9), 1e-8));
        let z = posterior_quadrature(&|_| f64::NEG_INFINITY, 1.0, 0.0, &[], 2.0, 1.0).unwrap();
        assert_eq!((z.mean, z.var), (0.0, 0.0));
    }

    #[test]
    fn huber_examples() {
        assert!(close(posterior_huber(0.0, 1.0, 1.0, 1.0).unwrap().0, 0.0, 1e-12));
        let (m, v) = posterior_huber(1.2, 0.5, 1.0, 50.0).unwrap();
        let (gm, gv) = posterior_gaussian(1.2, 0.5, 1.0).unwrap();
        assert!(close(m, gm, 1e-4) && close(v, gv, 1e-4));
    }

    #[test]
    fn marginal_loglik_closed_forms() {
        let l = marginal_loglik(&PriorModel::Gaussian { tau2: 2.0 }, 0.4, 1.0).unwrap();
        assert!(close(l, log_normal_density(0.4, 0.0, 3.0), 1e-15));
        let l = marginal_loglik(&PriorModel::Zero, 0.4, 1.0).unwrap();
        assert!(close(l, log_normal_density(0.4, 0.0, 1.0), 1e-15));
    }

    #[test]
    fn adjusted_p_and_interval_examples() {
        let s = PosteriorSummary::with_variance(0.0, 2.0, 0.05);
        assert_eq!(adjusted_p(&s), 1.0);
        let s = PosteriorSummary::with_variance(1.959964 * 3.0, 9.0, 0.05);
        assert!(close(adjusted_p(&s), 0.05, 1e-6));
        // P(μ ≥ 0) = 0.9 → 0.2
        let z90 = normal::quantile(0.9);
        let s = PosteriorSummary::with_variance(z90, 1.0, 0.05);
        assert!(close(adjusted_p(&s), 0.2, 1e-12));
        assert_eq!(adjusted_p(&PosteriorSummary::with_variance(0.3, 0.0, 0.05)), 0.0);
        assert_eq!(adjusted_p(&PosteriorSummary::with_variance(0.0, 0.0, 0.05)), 1.0);

        let (lo, hi) = credible_interval(&PosteriorSummary::with_variance(0.0, 1.0, 0.05), 0.05).unwrap();
        assert!(close(lo, -1.959964, 1e-6) && close(hi, 1.959964, 1e-6));
        let (lo, hi) = credible_interval(&PosteriorSummary::with_variance(2.0, 0.25, 0.05), 0.05).unwrap();
        assert!(close(lo, 1.020018, 1e-6) && close(hi, 2.979982, 1e-6));
        let (lo, hi) = credible_interval(&PosteriorSummary::with_variance(0.7, 0.0, 0.05), 0.05).unwrap();
        assert_eq!((lo, hi), (0.7, 0.7));
        assert!(credible_interval(&PosteriorSummary::with_variance(0.7, 1.0, 0.05), 1.0).is_err());
    }

    #[test]
    fn summary_caps_variance() {
        let prior = PriorModel::Mixture {
            p0: 0.5,
            pg: 0.25,
            pl: 0.25,
            tau2: 4.0,
            nu2: 4.0,
        };
        // near the zero/non-zero boundary the uncapped variance exceeds se2
        let worst = (0..200)
            .map(|i| summarize(&prior, i as f64 * 0.05, 1.0, 0.05).unwrap())
            .inspect(|s| assert!(s.variance <= 1.0 && s.variance <= s.variance_uncapped))
            .map(|s| s.variance_uncapped)
            .fold(0.0, f64::max);
        assert!(worst > 1.0, "expected at least one capped case, max {worst}");
    }
}
