//! Cold-start shrinkage from the local-H1 posterior-odds bound.

use crate::error::{Error, Result};
use crate::posterior::PosteriorSummary;
use crate::readout::{two_sided_p, ExperimentReadout};

/// Prior probability of a non-null effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorOdds {
    p_h1: f64,
}

impl PriorOdds {
    pub fn new(p_h1: f64) -> Result<Self> {
        if !(p_h1 > 0.0 && p_h1 < 1.0) {
            return Err(Error::arg(format!(
                "prior H1 probability must lie in (0, 1), got {p_h1}"
            )));
        }
        Ok(Self { p_h1 })
    }

    /// From odds `h1 : h0`.
    pub fn from_ratio(h1: f64, h0: f64) -> Result<Self> {
        if !(h1 > 0.0 && h0 > 0.0 && h1.is_finite() && h0.is_finite()) {
            return Err(Error::arg(format!("odds must be positive, got {h1}:{h0}")));
        }
        Self::new(h1 / (h1 + h0))
    }

    /// Parses `a:b`.
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once(':')
            .ok_or_else(|| Error::arg(format!("prior odds must look like a:b, got {text:?}")))?;
        let a: f64 = a
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("bad odds numerator {a:?}")))?;
        let b: f64 = b
            .trim()
            .parse()
            .map_err(|_| Error::arg(format!("bad odds denominator {b:?}")))?;
        Self::from_ratio(a, b)
    }

    pub fn p_h1(&self) -> f64 {
        self.p_h1
    }

    pub fn odds(&self) -> f64 {
        self.p_h1 / (1.0 - self.p_h1)
    }
}

impl Default for PriorOdds {
    fn default() -> Self {
        Self { p_h1: 0.5 }
    }
}

/// Bayes-factor bound −e·z·ln z, held at 1 from z = 1/e upward.
pub fn bayes_factor_bound(z: f64) -> Result<f64> {
    if !(z > 0.0 && z <= 1.0) {
        return Err(Error::arg(format!("p-value must lie in (0, 1], got {z}")));
    }
    if z >= (-1.0f64).exp() {
        return Ok(1.0);
    }
    Ok(-std::f64::consts::E * z * z.ln())
}

/// Upper bound on P(H1 | Δ) given a two-sided p-value.
pub fn h1_posterior_bound(z: f64, odds: PriorOdds) -> Result<f64> {
    let b = odds.odds() * bayes_factor_bound(z)?;
    Ok(b / (1.0 + b))
}

pub fn localh1_estimate(readout: &ExperimentReadout, odds: PriorOdds, alpha: f64) -> Result<PosteriorSummary> {
    readout.validate()?;
    localh1_from(readout.delta, readout.se2(), odds, alpha)
}

pub(crate) fn localh1_from(delta: f64, se2: f64, odds: PriorOdds, alpha: f64) -> Result<PosteriorSummary> {
    let z = two_sided_p(delta, se2.sqrt())?;
    // p underflows to 0 beyond |Δ|/se ≈ 38, where the bound has already reached 0
    let q = if z > 0.0 { h1_posterior_bound(z, odds)? } else { 0.0 };
    let mean = q * delta;
    let var = q * se2 + q * q * q * (1.0 - q) * delta * delta;
    Ok(PosteriorSummary::from_moments(mean, var, se2, alpha, f64::NAN, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_at_one_over_e_is_one_half() {
        let z = (-1.0f64).exp();
        assert_eq!(bayes_factor_bound(z).unwrap(), 1.0);
        assert!((h1_posterior_bound(z, PriorOdds::default()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(bayes_factor_bound(1.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_invalid_p_and_odds() {
        assert!(bayes_factor_bound(0.0).is_err());
        assert!(bayes_factor_bound(1.5).is_err());
        assert!(PriorOdds::new(1.0).is_err());
        assert!(PriorOdds::parse("1-7").is_err());
        assert!((PriorOdds::parse("1:7").unwrap().p_h1() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn zero_effect_gives_zero_mean() {
        let s = localh1_from(0.0, 2.0, PriorOdds::default(), 0.05).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!((s.adjusted_p - 1.0).abs() < 1e-12);
        assert!(s.variance <= 2.0);
    }
}
