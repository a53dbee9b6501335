//! Named adjustment methods: training from history and applying to readouts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::cmle::{cmle_estimate, threshold_for_p};
use crate::error::{Error, Result};
use crate::evalreport::Estimate;
use crate::fitting::{fit_ghidorah, fit_mle2, FitResult};
use crate::kv::KvDoc;
use crate::localh1::{localh1_from, PriorOdds};
use crate::posterior::{adjusted_p, summarize, PosteriorSummary};
use crate::prior::{PriorFamily, PriorModel};
use crate::readout::{two_sided_p, ExperimentReadout};
use crate::splitreg::{
    predict_with_aux, tarwes_plus_spec, tarwes_spec, train_rwes_linear, train_second_moment, train_tarwes, FeatureTag,
    Regularizer, SplitPair, TarwesModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Unadjusted,
    Cmle,
    EbNormal,
    EbLaplace,
    EbHuber,
    Ghidorah,
    RwesLinear,
    Tarwes,
    TarwesPlus,
    LocalH1,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Unadjusted,
        Method::Cmle,
        Method::EbNormal,
        Method::EbLaplace,
        Method::EbHuber,
        Method::Ghidorah,
        Method::RwesLinear,
        Method::Tarwes,
        Method::TarwesPlus,
        Method::LocalH1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Unadjusted => "unadjusted",
            Method::Cmle => "cmle",
            Method::EbNormal => "eb-normal",
            Method::EbLaplace => "eb-laplace",
            Method::EbHuber => "eb-huber",
            Method::Ghidorah => "ghidorah",
            Method::RwesLinear => "rwes-linear",
            Method::Tarwes => "tarwes",
            Method::TarwesPlus => "tarwes-plus",
            Method::LocalH1 => "localh1",
        }
    }

    pub fn needs_pairs(&self) -> bool {
        matches!(self, Method::RwesLinear | Method::Tarwes | Method::TarwesPlus)
    }

    pub fn needs_history(&self) -> bool {
        matches!(
            self,
            Method::EbNormal
                | Method::EbLaplace
                | Method::EbHuber
                | Method::Ghidorah
                | Method::Tarwes
                | Method::TarwesPlus
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.iter().find(|m| m.name() == s).copied().ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(Method::name).collect();
            Error::Argument(format!("unknown method {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

/// A ready-to-apply adjustment.
#[derive(Debug, Clone, PartialEq)]
pub enum Adjuster {
    Unadjusted,
    /// Conditional MLE for readouts selected at two-sided p < threshold.
    Cmle {
        p_threshold: f64,
    },
    Prior(PriorModel),
    Regression(Box<TarwesModel>),
    LocalH1(PriorOdds),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub cmle_threshold: Option<f64>,
    pub prior_odds: PriorOdds,
    pub regularizer: Regularizer,
    /// Attach a second-moment variance model to regression methods.
    pub second_moment: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            cmle_threshold: None,
            prior_odds: PriorOdds::default(),
            regularizer: Regularizer::Ridge(None),
            second_moment: false,
        }
    }
}

/// Priors fitted on full readouts for the EB features of a regression.
pub fn feature_priors(readouts: &[ExperimentReadout], spec: &[FeatureTag]) -> Result<BTreeMap<String, PriorModel>> {
    let mut priors = BTreeMap::new();
    for tag in spec {
        let FeatureTag::Eb(name) = tag else { continue };
        if priors.contains_key(name) {
            continue;
        }
        let fit = match name.as_str() {
            "gaussian" => fit_mle2(readouts, PriorFamily::Gaussian, None)?,
            "laplace" => fit_mle2(readouts, PriorFamily::Laplace, None)?,
            "huber" => fit_mle2(readouts, PriorFamily::Huber, None)?,
            "ghidorah" => fit_ghidorah(readouts, None)?,
            other => return Err(Error::Config(format!("no fitting rule for feature prior {other:?}"))),
        };
        priors.insert(name.clone(), fit.prior);
    }
    Ok(priors)
}

/// Fits whatever the method needs. Returns the prior fit for EB methods.
pub fn train(
    method: Method,
    readouts: &[ExperimentReadout],
    pairs: Option<&[SplitPair]>,
    opts: &TrainOptions,
) -> Result<(Adjuster, Option<FitResult>)> {
    let pairs_for = |m: Method| -> Result<&[SplitPair]> {
        pairs.ok_or_else(|| Error::Argument(format!("{m} needs split pairs for training")))
    };
    Ok(match method {
        Method::Unadjusted => (Adjuster::Unadjusted, None),
        Method::Cmle => {
            let t = opts
                .cmle_threshold
                .ok_or_else(|| Error::Argument("cmle needs a selection threshold".into()))?;
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Argument(format!("cmle threshold must lie in (0, 1), got {t}")));
            }
            (Adjuster::Cmle { p_threshold: t }, None)
        }
        Method::EbNormal | Method::EbLaplace | Method::EbHuber => {
            let family = match method {
                Method::EbNormal => PriorFamily::Gaussian,
                Method::EbLaplace => PriorFamily::Laplace,
                _ => PriorFamily::Huber,
            };
            let fit = fit_mle2(readouts, family, None)?;
            (Adjuster::Prior(fit.prior), Some(fit))
        }
        Method::Ghidorah => {
            let fit = fit_ghidorah(readouts, None)?;
            (Adjuster::Prior(fit.prior), Some(fit))
        }
        Method::LocalH1 => (Adjuster::LocalH1(opts.prior_odds), None),
        Method::RwesLinear | Method::Tarwes | Method::TarwesPlus => {
            let pairs = pairs_for(method)?;
            let mut model = match method {
                Method::RwesLinear => train_rwes_linear(pairs)?,
                _ => {
                    let spec = if method == Method::Tarwes {
                        tarwes_spec()
                    } else {
                        tarwes_plus_spec()
                    };
                    let priors = feature_priors(readouts, &spec)?;
                    train_tarwes(pairs, &spec, &priors, opts.regularizer)?
                }
            };
            if opts.second_moment {
                let mut priors = model.priors.clone();
                if !priors.contains_key("gaussian") {
                    priors.extend(feature_priors(readouts, &[FeatureTag::Eb("gaussian".into())])?);
                }
                let sm = train_second_moment(pairs, "gaussian", &priors, opts.regularizer)?;
                model = model.with_second_moment(sm, priors["gaussian"]);
            }
            (Adjuster::Regression(Box::new(model)), None)
        }
    })
}

impl Adjuster {
    /// Adjusted summary, or `None` when the method does not apply to this
    /// readout (CMLE below its selection threshold).
    pub fn adjust(
        &self,
        delta: f64,
        se2: f64,
        aux: Option<&BTreeMap<String, (f64, f64)>>,
        alpha: f64,
    ) -> Result<Option<PosteriorSummary>> {
        Ok(Some(match self {
            Adjuster::Unadjusted => PosteriorSummary::with_variance(delta, se2, alpha),
            Adjuster::Cmle { p_threshold } => {
                let sd = se2.sqrt();
                let k = threshold_for_p(*p_threshold, sd);
                if delta.abs() < k {
                    return Ok(None);
                }
                let r = cmle_estimate(delta, sd, k, alpha)?;
                let mut s = PosteriorSummary::with_variance(r.mu_hat, r.equivalent_variance, alpha);
                s.ci_low = r.ci_low;
                s.ci_high = r.ci_high;
                s.adjusted_p = adjusted_p(&s);
                s
            }
            Adjuster::Prior(prior) => summarize(prior, delta, se2, alpha)?,
            Adjuster::Regression(model) => predict_with_aux(model, delta, se2, aux, alpha)?,
            Adjuster::LocalH1(odds) => localh1_from(delta, se2, *odds, alpha)?,
        }))
    }

    pub fn adjust_readout(&self, r: &ExperimentReadout, alpha: f64) -> Result<Option<PosteriorSummary>> {
        r.validate()?;
        self.adjust(r.delta, r.se2(), None, alpha)
    }
}

impl Adjuster {
    /// Model file contents. Priors and regression models keep their own layout.
    pub fn to_kv(&self) -> KvDoc {
        match self {
            Adjuster::Unadjusted => {
                let mut doc = KvDoc::new();
                doc.push("kind", "unadjusted");
                doc
            }
            Adjuster::Cmle { p_threshold } => {
                let mut doc = KvDoc::new();
                doc.push("kind", "cmle");
                doc.push_f64("p_threshold", *p_threshold);
                doc
            }
            Adjuster::LocalH1(odds) => {
                let mut doc = KvDoc::new();
                doc.push("kind", "localh1");
                doc.push_f64("p_h1", odds.p_h1());
                doc
            }
            Adjuster::Prior(prior) => prior.to_kv(),
            Adjuster::Regression(model) => model.to_kv(),
        }
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        Ok(match doc.require("kind")? {
            "unadjusted" => Adjuster::Unadjusted,
            "cmle" => {
                let t = doc.f64("p_threshold")?;
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::arg(format!("p_threshold must lie in (0, 1), got {t}")));
                }
                Adjuster::Cmle { p_threshold: t }
            }
            "localh1" => Adjuster::LocalH1(PriorOdds::new(doc.f64("p_h1")?)?),
            "tarwes" => Adjuster::Regression(Box::new(TarwesModel::from_kv(doc)?)),
            _ => Adjuster::Prior(PriorModel::from_kv(doc)?),
        })
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// The method that produces this kind of model.
    pub fn method(&self) -> Method {
        match self {
            Adjuster::Unadjusted => Method::Unadjusted,
            Adjuster::Cmle { .. } => Method::Cmle,
            Adjuster::LocalH1(_) => Method::LocalH1,
            Adjuster::Prior(PriorModel::Laplace { .. }) => Method::EbLaplace,
            Adjuster::Prior(PriorModel::Huber { .. }) => Method::EbHuber,
            Adjuster::Prior(PriorModel::Mixture { .. }) => Method::Ghidorah,
            Adjuster::Prior(_) => Method::EbNormal,
            Adjuster::Regression(m) if m.spec == [FeatureTag::RawDelta] => Method::RwesLinear,
            Adjuster::Regression(m) => {
                if m.spec
                    .iter()
                    .any(|t| matches!(t, FeatureTag::AuxRaw(_) | FeatureTag::AuxEb(..)))
                {
                    Method::TarwesPlus
                } else {
                    Method::Tarwes
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?)
    }
}

/// Adjusts every readout, skipping those the method does not apply to.
pub fn adjust_all(
    adjuster: &Adjuster,
    readouts: &[ExperimentReadout],
    alpha: f64,
) -> Result<Vec<(usize, PosteriorSummary)>> {
    let mut out = Vec::with_capacity(readouts.len());
    for (i, r) in readouts.iter().enumerate() {
        if let Some(s) = adjuster.adjust_readout(r, alpha)? {
            out.push((i, s));
        }
    }
    Ok(out)
}

pub fn to_estimate(id: &str, delta: f64, se2: f64, s: &PosteriorSummary) -> Estimate {
    Estimate {
        experiment_id: id.to_string(),
        delta,
        se2,
        mean: s.mean,
        variance: s.variance,
        ci_low: s.ci_low,
        ci_high: s.ci_high,
    }
}

pub fn raw_p(delta: f64, se2: f64) -> Result<f64> {
    two_sided_p(delta, se2.sqrt())
}
