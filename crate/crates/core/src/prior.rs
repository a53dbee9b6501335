//! Prior families for the true effect μ. Every prior is centered at zero.

use libm::lgamma as ln_gamma;

use crate::error::{ensure_positive, Error, Result};
use crate::kv::KvDoc;
use crate::normal;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorModel {
    /// Point mass at zero.
    Zero,
    Gaussian {
        tau2: f64,
    },
    /// Laplace with variance `nu2`.
    Laplace {
        nu2: f64,
    },
    /// Gaussian core for |μ| ≤ k, exponential tails beyond.
    Huber {
        tau2: f64,
        k: f64,
    },
    /// Student-t with `df > 2`; `scale2` is the prior *variance*.
    StudentT {
        df: f64,
        scale2: f64,
    },
    /// Three-headed mixture: zero, Gaussian(tau2), Laplace(nu2).
    Mixture {
        p0: f64,
        pg: f64,
        pl: f64,
        tau2: f64,
        nu2: f64,
    },
    /// Point mass at zero with probability `p0`, Student-t otherwise.
    /// Ground-truth prior of the heavy-tailed simulation scenarios.
    ZeroInflatedT {
        p0: f64,
        df: f64,
        scale2: f64,
    },
}

/// Family tag used when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorFamily {
    Gaussian,
    Laplace,
    Huber,
    Mixture,
}

impl PriorFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PriorFamily::Gaussian => "gaussian",
            PriorFamily::Laplace => "laplace",
            PriorFamily::Huber => "huber",
            PriorFamily::Mixture => "mixture",
        }
    }
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if w.is_finite() && (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must lie in [0, 1], got {w}")))
    }
}

impl PriorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorModel::Zero => Ok(()),
            PriorModel::Gaussian { tau2 } => ensure_positive("tau2", tau2),
            PriorModel::Laplace { nu2 } => ensure_positive("nu2", nu2),
            PriorModel::Huber { tau2, k } => {
                ensure_positive("tau2", tau2)?;
                ensure_positive("k", k)
            }
            PriorModel::StudentT { df, scale2 } => {
                if !(df.is_finite() && df > 2.0) {
                    return Err(Error::arg(format!("df must exceed 2, got {df}")));
                }
                ensure_positive("scale2", scale2)
            }
            PriorModel::Mixture { p0, pg, pl, tau2, nu2 } => {
                check_weight("p0", p0)?;
                check_weight("pG", pg)?;
                check_weight("pL", pl)?;
                if ((p0 + pg + pl) - 1.0).abs() > 1e-12 {
                    return Err(Error::arg(format!(
                        "mixture weights must sum to 1, got {}",
                        p0 + pg + pl
                    )));
                }
                ensure_positive("tau2", tau2)?;
                ensure_positive("nu2", nu2)
            }
            PriorModel::ZeroInflatedT { p0, df, scale2 } => {
                check_weight("p0", p0)?;
                PriorModel::StudentT { df, scale2 }.validate()
            }
        }
    }

    /// Prior variance of μ.
    pub fn variance(&self) -> f64 {
        match *self {
            PriorModel::Zero => 0.0,
            PriorModel::Gaussian { tau2 } => tau2,
            PriorModel::Laplace { nu2 } => nu2,
            PriorModel::Huber { tau2, k } => huber_moments(tau2, k).1,
            PriorModel::StudentT { scale2, .. } => scale2,
            PriorModel::Mixture { pg, pl, tau2, nu2, .. } => pg * tau2 + pl * nu2,
            PriorModel::ZeroInflatedT { p0, scale2, .. } => (1.0 - p0) * scale2,
        }
    }

    /// Probability mass sitting exactly at μ = 0.
    pub fn point_mass(&self) -> f64 {
        match *self {
            PriorModel::Zero => 1.0,
            PriorModel::Mixture { p0, .. } | PriorModel::ZeroInflatedT { p0, .. } => p0,
            _ => 0.0,
        }
    }

    /// ln of the density of the continuous part, scaled by its total mass
    /// (1 − point_mass). `-inf` when there is no continuous part.
    pub fn log_density(&self, mu: f64) -> f64 {
        match *self {
            PriorModel::Zero => f64::NEG_INFINITY,
            PriorModel::Gaussian { tau2 } => normal::log_normal_density(mu, 0.0, tau2),
            PriorModel::Laplace { nu2 } => laplace_log_density(mu, nu2),
            PriorModel::Huber { tau2, k } => {
                let log_z = huber_moments(tau2, k).0;
                huber_log_kernel(mu, tau2, k) - log_z
            }
            PriorModel::StudentT { df, scale2 } => student_t_log_density(mu, df, scale2),
            PriorModel::Mixture { pg, pl, tau2, nu2, .. } => {
                let g = weighted(pg, normal::log_normal_density(mu, 0.0, tau2));
                let l = weighted(pl, laplace_log_density(mu, nu2));
                normal::log_add_exp(g, l)
            }
            PriorModel::ZeroInflatedT { p0, df, scale2 } => weighted(1.0 - p0, student_t_log_density(mu, df, scale2)),
        }
    }

    /// Points where the density has a kink or jump; used as quadrature breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            PriorModel::Huber { k, .. } => vec![-k, 0.0, k],
            _ => vec![0.0],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PriorModel::Zero => "zero",
            PriorModel::Gaussian { .. } => "gaussian",
            PriorModel::Laplace { .. } => "laplace",
            PriorModel::Huber { .. } => "huber",
            PriorModel::StudentT { .. } => "student-t",
            PriorModel::Mixture { .. } => "mixture",
            PriorModel::ZeroInflatedT { .. } => "zero-inflated-t",
        }
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("kind", self.kind_name());
        match *self {
            PriorModel::Zero => {}
            PriorModel::Gaussian { tau2 } => doc.push_f64("tau2", tau2),
            PriorModel::Laplace { nu2 } => doc.push_f64("nu2", nu2),
            PriorModel::Huber { tau2, k } => {
                doc.push_f64("tau2", tau2);
                doc.push_f64("k", k);
            }
            PriorModel::StudentT { df, scale2 } => {
                doc.push_f64("df", df);
                doc.push_f64("scale2", scale2);
            }
            PriorModel::Mixture { p0, pg, pl, tau2, nu2 } => {
                doc.push_f64("p0", p0);
                doc.push_f64("pG", pg);
                doc.push_f64("pL", pl);
                doc.push_f64("tau2", tau2);
                doc.push_f64("nu2", nu2);
            }
            PriorModel::ZeroInflatedT { p0, df, scale2 } => {
                doc.push_f64("p0", p0);
                doc.push_f64("df", df);
                doc.push_f64("scale2", scale2);
            }
        }
        doc
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let prior = match doc.require("kind")? {
            "zero" => PriorModel::Zero,
            "gaussian" | "normal" => PriorModel::Gaussian { tau2: doc.f64("tau2")? },
            "laplace" => PriorModel::Laplace { nu2: doc.f64("nu2")? },
            "huber" => PriorModel::Huber {
                tau2: doc.f64("tau2")?,
                k: doc.f64("k")?,
            },
            "student-t" => PriorModel::StudentT {
                df: doc.f64("df")?,
                scale2: doc.f64("scale2")?,
            },
            "mixture" | "ghidorah" => PriorModel::Mixture {
                p0: doc.f64("p0")?,
                pg: doc.f64("pG")?,
                pl: doc.f64("pL")?,
                tau2: doc.f64("tau2")?,
                nu2: doc.f64("nu2")?,
            },
            "zero-inflated-t" => PriorModel::ZeroInflatedT {
                p0: doc.f64("p0")?,
                df: doc.f64("df")?,
                scale2: doc.f64("scale2")?,
            },
            other => return Err(Error::parse(0, format!("unknown prior kind {other:?}"))),
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?)
    }
}

fn weighted(weight: f64, log_value: f64) -> f64 {
    if weight <= 0.0 {
        f64::NEG_INFINITY
    } else {
        weight.ln() + log_value
    }
}

pub(crate) fn laplace_log_density(mu: f64, nu2: f64) -> f64 {
    let nu = nu2.sqrt();
    -(nu * SQRT_2).ln() - SQRT_2 * mu.abs() / nu
}

pub(crate) fn student_t_log_density(mu: f64, df: f64, variance: f64) -> f64 {
    let s2 = variance * (df - 2.0) / df;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI * s2).ln()
        - 0.5 * (df + 1.0) * (mu * mu / (df * s2)).ln_1p()
}

fn huber_log_kernel(mu: f64, tau2: f64, k: f64) -> f64 {
    let a = mu.abs();
    if a <= k {
        -0.5 * mu * mu / tau2
    } else {
        (k * k - 2.0 * k * a) / (2.0 * tau2)
    }
}

/// (ln normalizer, variance) of the Huber prior.
pub(crate) fn huber_moments(tau2: f64, k: f64) -> (f64, f64) {
    let tau = tau2.sqrt();
    let kt = k / tau;
    let core_mass = tau * (2.0 * std::f64::consts::PI).sqrt() * normal::interval_prob(-kt, kt);
    let edge = (-0.5 * kt * kt).exp();
    // tails: 2 ∫_k^∞ exp((k² − 2kμ)/(2τ²)) dμ with rate a = k/τ²
    let a = k / tau2;
    let tail_mass = 2.0 * edge / a;
    let z = core_mass + tail_mass;
    let core_m2 = tau2 * (core_mass - 2.0 * k * edge);
    let tail_m2 = 2.0 * edge * (k * k / a + 2.0 * k / (a * a) + 2.0 / (a * a * a));
    (z.ln(), (core_m2 + tail_m2) / z)
}
