//! Experiment readouts, frequentist summaries, and selection rules.

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::normal;

/// One metric readout of one A/B test.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReadout {
    pub experiment_id: String,
    pub metric_id: String,
    /// Observed treatment effect Δ in metric units.
    pub delta: f64,
    pub n_treat: u64,
    pub n_control: u64,
    /// Pooled per-unit variance σ².
    pub sigma2_pooled: f64,
}

impl ExperimentReadout {
    pub fn new(
        experiment_id: impl Into<String>,
        metric_id: impl Into<String>,
        delta: f64,
        n_treat: u64,
        n_control: u64,
        sigma2_pooled: f64,
    ) -> Result<Self> {
        let r = Self {
            experiment_id: experiment_id.into(),
            metric_id: metric_id.into(),
            delta,
            n_treat,
            n_control,
            sigma2_pooled,
        };
        r.validate()?;
        Ok(r)
    }

    /// A readout known only through its noise variance. Sample sizes are set
    /// to 2/2 so the effective size is 1 and `se2() == se2`.
    pub fn from_se2(
        experiment_id: impl Into<String>,
        metric_id: impl Into<String>,
        delta: f64,
        se2: f64,
    ) -> Result<Self> {
        Self::new(experiment_id, metric_id, delta, 2, 2, se2)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("delta", self.delta)?;
        if self.n_treat == 0 || self.n_control == 0 {
            return Err(Error::arg("sample sizes must be at least 1"));
        }
        ensure_positive("sigma2_pooled", self.sigma2_pooled)?;
        let se2 = self.se2();
        if !(se2.is_finite() && se2 > 0.0) {
            return Err(Error::arg(format!("noise variance σ²/N is not positive: {se2}")));
        }
        Ok(())
    }

    /// N = (1/N_T + 1/N_C)⁻¹
    pub fn effective_n(&self) -> f64 {
        harmonic(self.n_treat as f64, self.n_control as f64)
    }

    /// Var(Δ | μ) = σ²/N.
    pub fn se2(&self) -> f64 {
        self.sigma2_pooled / self.effective_n()
    }

    pub fn se(&self) -> f64 {
        self.se2().sqrt()
    }

    pub fn p_value(&self) -> f64 {
        two_sided_p_unchecked(self.delta, self.se())
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    // a·b/(a+b) avoids 1/a + 1/b rounding for large counts
    a * b / (a + b)
}

/// Effective sample size (1/N_T + 1/N_C)⁻¹.
pub fn effective_sample_size(n_treat: u64, n_control: u64) -> Result<f64> {
    if n_treat == 0 || n_control == 0 {
        return Err(Error::arg("sample sizes must be at least 1"));
    }
    Ok(harmonic(n_treat as f64, n_control as f64))
}

/// Two-sided z-test p-value 2·(1 − Φ(|Δ|/se)).
pub fn two_sided_p(delta: f64, se: f64) -> Result<f64> {
    ensure_finite("delta", delta)?;
    ensure_positive("se", se)?;
    Ok(two_sided_p_unchecked(delta, se))
}

pub(crate) fn two_sided_p_unchecked(delta: f64, se: f64) -> f64 {
    (2.0 * normal::sf(delta.abs() / se)).min(1.0)
}

/// Which readouts survive selection. Selection is always two-sided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// p-value strictly below the threshold; `PValueBelow(1.0)` keeps everything.
    PValueBelow(f64),
    /// |Δ| > K.
    AbsDeltaAbove(f64),
    All,
}

impl SelectionRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::PValueBelow(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::arg(format!("p-value threshold must lie in (0, 1], got {t}")))
            }
            SelectionRule::AbsDeltaAbove(k) => ensure_positive("K", k),
            _ => Ok(()),
        }
    }

    /// Whether an observation with effect `delta` and noise sd `se` is selected.
    pub fn selects(&self, delta: f64, se: f64) -> bool {
        match *self {
            SelectionRule::All => true,
            SelectionRule::PValueBelow(t) => t >= 1.0 || two_sided_p_unchecked(delta, se) < t,
            SelectionRule::AbsDeltaAbove(k) => delta.abs() > k,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SelectionRule::All | SelectionRule::PValueBelow(1.0) => "All".to_string(),
            SelectionRule::PValueBelow(t) => format!("p<{t}"),
            SelectionRule::AbsDeltaAbove(k) => format!("|delta|>{k}"),
        }
    }
}

/// Stable-ordered subset of `readouts` satisfying `rule`.
pub fn apply_selection(readouts: &[ExperimentReadout], rule: SelectionRule) -> Vec<ExperimentReadout> {
    readouts
        .iter()
        .filter(|r| rule.selects(r.delta, r.se()))
        .cloned()
        .collect()
}
