//! Regression on split experiments: RwES, TARwES and the second-moment model.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::kv::KvDoc;
use crate::posterior::{self, PosteriorSummary};
use crate::prior::PriorModel;
use crate::readout::ExperimentReadout;

/// One experiment whose traffic was halved into splits A and B.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub experiment_id: String,
    pub delta_a: f64,
    pub delta_b: f64,
    pub se2_a: f64,
    pub se2_b: f64,
    /// σ²/N at full traffic.
    pub full_se2: f64,
    /// metric → (Δ_A, se2_A) for auxiliary metrics.
    pub aux: BTreeMap<String, (f64, f64)>,
}

impl SplitPair {
    pub fn new(
        experiment_id: impl Into<String>,
        delta_a: f64,
        se2_a: f64,
        delta_b: f64,
        se2_b: f64,
        full_se2: f64,
    ) -> Result<Self> {
        let p = Self {
            experiment_id: experiment_id.into(),
            delta_a,
            delta_b,
            se2_a,
            se2_b,
            full_se2,
            aux: BTreeMap::new(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("delta_a", self.delta_a)?;
        ensure_finite("delta_b", self.delta_b)?;
        ensure_positive("se2_a", self.se2_a)?;
        ensure_positive("se2_b", self.se2_b)?;
        ensure_positive("full_se2", self.full_se2)?;
        // a split never has less noise than the whole experiment
        let slack = 1.0 + 1e-9;
        if self.se2_a * slack < self.full_se2 || self.se2_b * slack < self.full_se2 {
            return Err(Error::arg(format!(
                "{}: split variances must be at least full_se2",
                self.experiment_id
            )));
        }
        for (metric, &(d, s)) in &self.aux {
            ensure_finite(&format!("aux {metric} delta"), d)?;
            ensure_positive(&format!("aux {metric} se2"), s)?;
        }
        Ok(())
    }

    fn mirrored(&self) -> Self {
        Self {
            experiment_id: self.experiment_id.clone(),
            delta_a: -self.delta_a,
            delta_b: -self.delta_b,
            aux: self.aux.iter().map(|(k, &(d, s))| (k.clone(), (-d, s))).collect(),
            ..*self
        }
    }
}

/// Originals followed by their sign-flipped mirrors.
pub fn symmetrize(pairs: &[SplitPair]) -> Vec<SplitPair> {
    let mut out = pairs.to_vec();
    out.extend(pairs.iter().map(SplitPair::mirrored));
    out
}

/// A regression input built from one readout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureTag {
    RawDelta,
    /// Posterior mean under the named prior.
    Eb(String),
    AuxRaw(String),
    /// (metric, prior name)
    AuxEb(String, String),
}

impl fmt::Display for FeatureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureTag::RawDelta => write!(f, "raw_delta"),
            FeatureTag::Eb(p) => write!(f, "eb:{p}"),
            FeatureTag::AuxRaw(m) => write!(f, "aux_raw:{m}"),
            FeatureTag::AuxEb(m, p) => write!(f, "aux_eb:{m}:{p}"),
        }
    }
}

impl FeatureTag {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        match parts.as_slice() {
            ["raw_delta"] => Ok(FeatureTag::RawDelta),
            ["eb", p] if !p.is_empty() => Ok(FeatureTag::Eb(p.to_string())),
            ["aux_raw", m] if !m.is_empty() => Ok(FeatureTag::AuxRaw(m.to_string())),
            ["aux_eb", m, p] if !m.is_empty() && !p.is_empty() => Ok(FeatureTag::AuxEb(m.to_string(), p.to_string())),
            _ => Err(Error::parse(0, format!("unknown feature tag {text:?}"))),
        }
    }
}

/// The default TARwES inputs: raw Δ plus Gaussian and Laplace EB means.
pub fn tarwes_spec() -> Vec<FeatureTag> {
    vec![
        FeatureTag::RawDelta,
        FeatureTag::Eb("gaussian".into()),
        FeatureTag::Eb("laplace".into()),
    ]
}

/// TARwES with the Ghidorah EB mean added.
pub fn tarwes_plus_spec() -> Vec<FeatureTag> {
    let mut spec = tarwes_spec();
    spec.push(FeatureTag::Eb("ghidorah".into()));
    spec
}

fn eb_mean(priors: &BTreeMap<String, PriorModel>, name: &str, delta: f64, se2: f64) -> Result<f64> {
    let prior = priors
        .get(name)
        .ok_or_else(|| Error::Config(format!("feature needs prior {name:?}, which was not supplied")))?;
    Ok(posterior::moments(prior, delta, se2)?.0.mean)
}

fn aux_value<'a>(aux: Option<&'a BTreeMap<String, (f64, f64)>>, metric: &str) -> Result<&'a (f64, f64)> {
    aux.and_then(|a| a.get(metric))
        .ok_or_else(|| Error::Config(format!("feature needs auxiliary metric {metric:?}, which is missing")))
}

/// Evaluates every feature at the given `se2`.
pub fn make_features(
    delta: f64,
    se2: f64,
    spec: &[FeatureTag],
    priors: &BTreeMap<String, PriorModel>,
    aux: Option<&BTreeMap<String, (f64, f64)>>,
) -> Result<Vec<f64>> {
    spec.iter()
        .map(|tag| match tag {
            FeatureTag::RawDelta => Ok(delta),
            FeatureTag::Eb(p) => eb_mean(priors, p, delta, se2),
            FeatureTag::AuxRaw(m) => Ok(aux_value(aux, m)?.0),
            FeatureTag::AuxEb(m, p) => {
                let &(d, s) = aux_value(aux, m)?;
                eb_mean(priors, p, d, s)
            }
        })
        .collect()
}

/// Default ridge penalty: 1e−4 · trace(XᵀX) / columns.
pub fn default_lambda(x: &DMatrix<f64>) -> f64 {
    let trace: f64 = x.iter().map(|v| v * v).sum();
    1e-4 * trace / x.ncols().max(1) as f64
}

/// Solves (XᵀX + λI)β = Xᵀy through a QR factorization of [X; √λ·I].
pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::arg(format!("design has {n} rows but response has {}", y.len())));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::arg(format!("ridge lambda must be non-negative, got {lambda}")));
    }
    if p == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut a = DMatrix::zeros(n + p, p);
    a.rows_mut(0, n).copy_from(x);
    let root = lambda.sqrt();
    for j in 0..p {
        a[(n + j, j)] = root;
    }
    let mut b = DVector::zeros(n + p);
    b.rows_mut(0, n).copy_from(y);
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * scale) || scale == 0.0 {
        return Err(Error::numeric(
            "design matrix is rank deficient; use a positive ridge lambda",
        ));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::numeric("triangular solve failed; use a positive ridge lambda"))
}

/// Lawson–Hanson active-set non-negative least squares.
pub fn nnls_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    const MAX_ITER: usize = 10_000;
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::arg(format!("design has {n} rows but response has {}", y.len())));
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let scale = xty.amax().max(xtx.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale * (p.max(1) as f64);
    let mut beta = DVector::zeros(p);
    let mut passive = vec![false; p];
    let gradient = |beta: &DVector<f64>| &xty - &xtx * beta;

    let mut iterations = 0;
    loop {
        let w = gradient(&beta);
        let candidate = (0..p)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            iterations += 1;
            if iterations > MAX_ITER {
                let w = gradient(&beta);
                return Err(Error::numeric(format!(
                    "NNLS did not converge in {MAX_ITER} iterations; max gradient {:e}",
                    w.amax()
                )));
            }
            let z = passive_solve(&xtx, &xty, &passive)?;
            if (0..p).all(|k| !passive[k] || z[k] > 0.0) {
                beta = z;
                break;
            }
            // step back to the boundary of the feasible region
            let mut step = f64::INFINITY;
            for k in 0..p {
                if passive[k] && z[k] <= 0.0 {
                    step = step.min(beta[k] / (beta[k] - z[k]));
                }
            }
            for k in 0..p {
                if passive[k] {
                    beta[k] += step * (z[k] - beta[k]);
                    if beta[k] <= tol / scale {
                        beta[k] = 0.0;
                        passive[k] = false;
                    }
                }
            }
        }
    }
    Ok(beta)
}

fn passive_solve(xtx: &DMatrix<f64>, xty: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |r, c| xtx[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(m, |r, _| xty[idx[r]]);
    let sol = sub
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| sub.lu().solve(&rhs))
        .ok_or_else(|| Error::numeric("NNLS subproblem is singular"))?;
    let mut z = DVector::zeros(passive.len());
    for (r, &j) in idx.iter().enumerate() {
        z[j] = sol[r];
    }
    Ok(z)
}

/// Max violation of the NNLS optimality conditions, relative to ‖Xᵀy‖∞.
pub fn nnls_kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let w = x.transpose() * (y - x * beta);
    let scale = (x.transpose() * y).amax().max(f64::MIN_POSITIVE);
    (0..beta.len())
        .map(|j| {
            let v = if beta[j] > 0.0 { w[j].abs() } else { w[j].max(0.0) };
            let neg = (-beta[j]).max(0.0);
            v.max(neg)
        })
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `None` uses [`default_lambda`].
    Ridge(Option<f64>),
    Nnls,
}

impl Regularizer {
    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, Regularizer)> {
        match *self {
            Regularizer::Ridge(lambda) => {
                let lambda = lambda.unwrap_or_else(|| default_lambda(x));
                Ok((ridge_fit(x, y, lambda)?, Regularizer::Ridge(Some(lambda))))
            }
            Regularizer::Nnls => Ok((nnls_fit(x, y)?, Regularizer::Nnls)),
        }
    }
}

/// Regression of E(μ² | Δ) on even features of Δ.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentModel {
    /// Prior used for the EB mean and variance features.
    pub prior: String,
    pub coefficients: Vec<f64>,
    pub regularizer: Regularizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TarwesModel {
    pub spec: Vec<FeatureTag>,
    pub coefficients: Vec<f64>,
    pub regularizer: Regularizer,
    pub priors: BTreeMap<String, PriorModel>,
    pub second_moment: Option<SecondMomentModel>,
}

fn design(pairs: &[SplitPair], spec: &[FeatureTag], priors: &BTreeMap<String, PriorModel>) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| make_features(p.delta_a, p.se2_a, spec, priors, Some(&p.aux)))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), spec.len(), |r, c| rows[r][c]))
}

/// No-intercept least squares of Δ_B on Δ_A over symmetrized pairs.
pub fn train_rwes_linear(pairs: &[SplitPair]) -> Result<TarwesModel> {
    if pairs.len() < 2 {
        return Err(Error::arg(format!("need at least 2 split pairs, got {}", pairs.len())));
    }
    if pairs.iter().all(|p| p.delta_a == 0.0) {
        return Err(Error::arg("every delta_a is zero; the slope is not identified"));
    }
    train_tarwes(
        pairs,
        &[FeatureTag::RawDelta],
        &BTreeMap::new(),
        Regularizer::Ridge(Some(0.0)),
    )
}

pub fn train_tarwes(
    pairs: &[SplitPair],
    spec: &[FeatureTag],
    priors: &BTreeMap<String, PriorModel>,
    regularizer: Regularizer,
) -> Result<TarwesModel> {
    if spec.is_empty() {
        return Err(Error::arg("feature spec is empty"));
    }
    if pairs.len() < spec.len() {
        return Err(Error::arg(format!(
            "need at least {} split pairs for {} features, got {}",
            spec.len(),
            spec.len(),
            pairs.len()
        )));
    }
    for p in pairs {
        p.validate()?;
    }
    let sym = symmetrize(pairs);
    let x = design(&sym, spec, priors)?;
    let y = DVector::from_iterator(sym.len(), sym.iter().map(|p| p.delta_b));
    let (beta, regularizer) = regularizer.fit(&x, &y)?;
    let used: BTreeMap<String, PriorModel> = spec
        .iter()
        .filter_map(|t| match t {
            FeatureTag::Eb(p) | FeatureTag::AuxEb(_, p) => Some(p.clone()),
            _ => None,
        })
        .map(|name| {
            let prior = priors.get(&name).copied();
            prior
                .map(|p| (name.clone(), p))
                .ok_or_else(|| Error::Config(format!("missing prior {name:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(TarwesModel {
        spec: spec.to_vec(),
        coefficients: beta.iter().copied().collect(),
        regularizer,
        priors: used,
        second_moment: None,
    })
}

/// Even features for the second-moment model: |Δ|, Δ², EB mean², se2, EB posterior variance.
fn even_features(delta: f64, se2: f64, prior: &PriorModel) -> Result<[f64; 5]> {
    let (m, _) = posterior::moments(prior, delta, se2)?;
    Ok([delta.abs(), delta * delta, m.mean * m.mean, se2, m.var])
}

/// Fits E(μ² | Δ_A) from the target Δ_B² − se2_B.
pub fn train_second_moment(
    pairs: &[SplitPair],
    prior_name: &str,
    priors: &BTreeMap<String, PriorModel>,
    regularizer: Regularizer,
) -> Result<SecondMomentModel> {
    let prior = priors
        .get(prior_name)
        .ok_or_else(|| Error::Config(format!("second-moment model needs prior {prior_name:?}")))?;
    if pairs.len() < 5 {
        return Err(Error::arg(format!("need at least 5 split pairs, got {}", pairs.len())));
    }
    // the features are even, so mirroring adds nothing
    let rows: Vec<[f64; 5]> = pairs
        .iter()
        .map(|p| even_features(p.delta_a, p.se2_a, prior))
        .collect::<Result<_>>()?;
    let mut x = DMatrix::from_fn(rows.len(), 5, |r, c| rows[r][c]);
    // columns differ by orders of magnitude; fit on unit-RMS columns
    let scales: Vec<f64> = x
        .column_iter()
        .map(|c| {
            let rms = (c.norm_squared() / c.len() as f64).sqrt();
            if rms > 0.0 {
                rms
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        x.column_mut(j).unscale_mut(*s);
    }
    let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.delta_b * p.delta_b - p.se2_b));
    let (beta, regularizer) = regularizer.fit(&x, &y)?;
    Ok(SecondMomentModel {
        prior: prior_name.to_string(),
        coefficients: beta.iter().zip(&scales).map(|(b, s)| b / s).collect(),
        regularizer,
    })
}

impl TarwesModel {
    pub fn with_second_moment(mut self, model: SecondMomentModel, prior: PriorModel) -> Self {
        self.priors.insert(model.prior.clone(), prior);
        self.second_moment = Some(model);
        self
    }

    /// βᵀ·features at the given se2.
    pub fn predict_mean(&self, delta: f64, se2: f64, aux: Option<&BTreeMap<String, (f64, f64)>>) -> Result<f64> {
        let f = make_features(delta, se2, &self.spec, &self.priors, aux)?;
        Ok(f.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    /// Predicted variance: the second-moment regression when attached, else se2.
    pub fn predict_variance(&self, delta: f64, se2: f64, mean: f64) -> Result<f64> {
        let Some(sm) = &self.second_moment else {
            return Ok(se2);
        };
        let prior = self
            .priors
            .get(&sm.prior)
            .ok_or_else(|| Error::Config(format!("model is missing prior {:?}", sm.prior)))?;
        let f = even_features(delta, se2, prior)?;
        let second: f64 = f.iter().zip(&sm.coefficients).map(|(a, b)| a * b).sum();
        Ok((second - mean * mean).clamp(1e-12 * se2, se2))
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("kind", "tarwes");
        let names: Vec<String> = self.spec.iter().map(|t| t.to_string()).collect();
        doc.push("features", names.join(","));
        push_coefficients(&mut doc, "coef.", &self.coefficients);
        push_regularizer(&mut doc, "", self.regularizer);
        for (name, prior) in &self.priors {
            doc.extend_prefixed(&format!("prior.{name}."), &prior.to_kv());
        }
        if let Some(sm) = &self.second_moment {
            doc.push("second_moment.prior", &sm.prior);
            push_coefficients(&mut doc, "second_moment.coef.", &sm.coefficients);
            push_regularizer(&mut doc, "second_moment.", sm.regularizer);
        }
        doc
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        if doc.require("kind")? != "tarwes" {
            return Err(Error::parse(0, "not a tarwes model"));
        }
        let spec: Vec<FeatureTag> = doc
            .require("features")?
            .split(',')
            .map(FeatureTag::parse)
            .collect::<Result<_>>()?;
        let coefficients = read_coefficients(doc, "coef.", spec.len())?;
        let regularizer = read_regularizer(doc, "")?;
        let mut priors = BTreeMap::new();
        let names: Vec<String> = doc
            .keys()
            .filter_map(|k| k.strip_prefix("prior.")?.strip_suffix(".kind").map(str::to_string))
            .collect();
        for name in names {
            priors.insert(
                name.clone(),
                PriorModel::from_kv(&doc.section(&format!("prior.{name}.")))?,
            );
        }
        for tag in &spec {
            if let FeatureTag::Eb(p) | FeatureTag::AuxEb(_, p) = tag {
                if !priors.contains_key(p) {
                    return Err(Error::parse(0, format!("feature {tag} has no prior.{p} section")));
                }
            }
        }
        let second_moment = match doc.get("second_moment.prior") {
            None => None,
            Some(p) => {
                if !priors.contains_key(p) {
                    return Err(Error::parse(0, format!("second moment prior {p:?} is missing")));
                }
                Some(SecondMomentModel {
                    prior: p.to_string(),
                    coefficients: read_coefficients(doc, "second_moment.coef.", 5)?,
                    regularizer: read_regularizer(doc, "second_moment.")?,
                })
            }
        };
        Ok(Self {
            spec,
            coefficients,
            regularizer,
            priors,
            second_moment,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?)
    }
}

fn push_coefficients(doc: &mut KvDoc, prefix: &str, coefs: &[f64]) {
    for (i, c) in coefs.iter().enumerate() {
        doc.push_f64(format!("{prefix}{i}"), *c);
    }
}

fn read_coefficients(doc: &KvDoc, prefix: &str, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|i| doc.f64(&format!("{prefix}{i}"))).collect()
}

fn push_regularizer(doc: &mut KvDoc, prefix: &str, reg: Regularizer) {
    match reg {
        Regularizer::Nnls => doc.push(format!("{prefix}regularizer"), "nnls"),
        Regularizer::Ridge(lambda) => {
            doc.push(format!("{prefix}regularizer"), "ridge");
            if let Some(l) = lambda {
                doc.push_f64(format!("{prefix}lambda"), l);
            }
        }
    }
}

fn read_regularizer(doc: &KvDoc, prefix: &str) -> Result<Regularizer> {
    match doc.require(&format!("{prefix}regularizer"))? {
        "nnls" => Ok(Regularizer::Nnls),
        "ridge" => {
            let lambda = doc.opt_f64(&format!("{prefix}lambda"))?;
            if matches!(lambda, Some(l) if l < 0.0) {
                return Err(Error::parse(0, "ridge lambda must be non-negative"));
            }
            Ok(Regularizer::Ridge(lambda))
        }
        other => Err(Error::parse(0, format!("unknown regularizer {other:?}"))),
    }
}

/// Adjusted summary for a full readout: features at the full-traffic se2.
pub fn predict_tarwes(model: &TarwesModel, readout: &ExperimentReadout, alpha: f64) -> Result<PosteriorSummary> {
    readout.validate()?;
    predict_with_aux(model, readout.delta, readout.se2(), None, alpha)
}

pub fn predict_with_aux(
    model: &TarwesModel,
    delta: f64,
    se2: f64,
    aux: Option<&BTreeMap<String, (f64, f64)>>,
    alpha: f64,
) -> Result<PosteriorSummary> {
    let mean = model.predict_mean(delta, se2, aux)?;
    let var = model.predict_variance(delta, se2, mean)?;
    Ok(PosteriorSummary::with_variance(mean, var, alpha))
}
