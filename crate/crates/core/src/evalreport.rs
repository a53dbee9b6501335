//! Scoring adjusted estimates by selection bucket.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::normal::two_sided_critical;
use crate::readout::SelectionRule;
use crate::splitreg::SplitPair;

/// One adjusted estimate together with the readout it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub experiment_id: String,
    /// Observed Δ used for selection (split A or the full readout).
    pub delta: f64,
    /// Noise variance of that Δ.
    pub se2: f64,
    pub mean: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub bucket: String,
    pub count: usize,
    pub rmse: f64,
    pub coverage: f64,
    pub var_s: Option<f64>,
    /// Split-B only: the bias-corrected mean squared error was negative and set to 0.
    pub floored: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// The default buckets p < 0.01, p < 0.05 and All, in that order.
pub fn default_buckets() -> Vec<SelectionRule> {
    vec![
        SelectionRule::PValueBelow(0.01),
        SelectionRule::PValueBelow(0.05),
        SelectionRule::All,
    ]
}

/// Noise sd of a one-million-unit experiment, the unit of tabulated RMSE.
pub fn paper_unit(sigma2: f64) -> f64 {
    (sigma2 / 1e6).sqrt()
}

fn bucket_members(estimates: &[Estimate], rule: SelectionRule) -> Vec<&Estimate> {
    estimates
        .iter()
        .filter(|e| rule.selects(e.delta, e.se2.sqrt()))
        .collect()
}

fn check_estimates(estimates: &[Estimate], buckets: &[SelectionRule]) -> Result<()> {
    for b in buckets {
        b.validate()?;
    }
    for e in estimates {
        if !(e.se2 > 0.0 && e.se2.is_finite()) {
            return Err(Error::arg(format!("{}: se2 must be positive", e.experiment_id)));
        }
        if !(e.mean.is_finite() && e.variance >= 0.0) {
            return Err(Error::arg(format!("{}: estimate is not finite", e.experiment_id)));
        }
    }
    Ok(())
}

fn orphans<'a, I: Iterator<Item = &'a str>>(ids: I) -> Result<()> {
    let missing: Vec<&str> = ids.collect();
    if missing.is_empty() {
        return Ok(());
    }
    let shown: Vec<&str> = missing.iter().take(10).copied().collect();
    Err(Error::arg(format!(
        "{} estimates have no matching reference row: {}{}",
        missing.len(),
        shown.join(", "),
        if missing.len() > 10 { ", ..." } else { "" }
    )))
}

/// RMSE, coverage and Var_S against known true effects.
pub fn score_against_truth(
    method: &str,
    estimates: &[Estimate],
    truths: &HashMap<String, f64>,
    buckets: &[SelectionRule],
) -> Result<EvalReport> {
    check_estimates(estimates, buckets)?;
    orphans(
        estimates
            .iter()
            .filter(|e| !truths.contains_key(&e.experiment_id))
            .map(|e| e.experiment_id.as_str()),
    )?;
    let rows = buckets
        .iter()
        .map(|&rule| {
            let members = bucket_members(estimates, rule);
            let n = members.len();
            let mut sq = 0.0;
            let mut covered = 0usize;
            let mut ratio = 0.0;
            for e in &members {
                let mu = truths[&e.experiment_id];
                sq += (e.mean - mu).powi(2);
                if e.ci_low <= mu && mu <= e.ci_high {
                    covered += 1;
                }
                ratio += e.variance / e.se2;
            }
            let nf = n as f64;
            EvalRow {
                method: method.to_string(),
                bucket: rule.label(),
                count: n,
                rmse: (sq / nf).sqrt(),
                coverage: covered as f64 / nf,
                var_s: Some(ratio / nf),
                floored: false,
            }
        })
        .collect();
    Ok(EvalReport { rows })
}

/// The same scores estimated from the independent split B:
/// MSE = mean (μ̂ − Δ_B)² − mean se2_B, and coverage of μ̂ ± z·sqrt(var + se2_B) for Δ_B.
pub fn score_against_split_b(
    method: &str,
    estimates: &[Estimate],
    pairs: &[SplitPair],
    buckets: &[SelectionRule],
    alpha: f64,
) -> Result<EvalReport> {
    check_estimates(estimates, buckets)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let by_id: HashMap<&str, &SplitPair> = pairs.iter().map(|p| (p.experiment_id.as_str(), p)).collect();
    orphans(
        estimates
            .iter()
            .filter(|e| !by_id.contains_key(e.experiment_id.as_str()))
            .map(|e| e.experiment_id.as_str()),
    )?;
    let z = two_sided_critical(alpha);
    let rows = buckets
        .iter()
        .map(|&rule| {
            let members = bucket_members(estimates, rule);
            let n = members.len();
            let nf = n as f64;
            let mut sq = 0.0;
            let mut noise = 0.0;
            let mut covered = 0usize;
            let mut ratio = 0.0;
            for e in &members {
                let p = by_id[e.experiment_id.as_str()];
                sq += (e.mean - p.delta_b).powi(2);
                noise += p.se2_b;
                let half = z * (e.variance + p.se2_b).sqrt();
                if (e.mean - p.delta_b).abs() <= half {
                    covered += 1;
                }
                ratio += e.variance / e.se2;
            }
            let mse = (sq - noise) / nf;
            EvalRow {
                method: method.to_string(),
                bucket: rule.label(),
                count: n,
                rmse: mse.max(0.0).sqrt(),
                coverage: covered as f64 / nf,
                var_s: Some(ratio / nf),
                floored: mse < 0.0,
            }
        })
        .collect();
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    /// RMSE expressed in multiples of `unit`.
    pub fn in_units(mut self, unit: f64) -> Self {
        for r in &mut self.rows {
            r.rmse /= unit;
        }
        self
    }

    pub fn row(&self, method: &str, bucket: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.method == method && r.bucket == bucket)
    }

    /// `method,bucket,count,rmse,coverage,var_s`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,bucket,count,rmse,coverage,var_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                r.bucket,
                r.count,
                fmt_num(r.rmse),
                fmt_num(r.coverage),
                r.var_s.map(fmt_num).unwrap_or_default()
            );
        }
        out
    }

    /// Plain-text table grouped by method, buckets side by side.
    pub fn to_table(&self) -> String {
        let mut buckets: Vec<String> = Vec::new();
        let mut methods: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(String, String), &EvalRow> = BTreeMap::new();
        for r in &self.rows {
            if !buckets.contains(&r.bucket) {
                buckets.push(r.bucket.clone());
            }
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
            cells.insert((r.method.clone(), r.bucket.clone()), r);
        }
        let width = methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}", "method");
        for b in &buckets {
            let _ = write!(out, " | {:^31}", b);
        }
        out.push('\n');
        let _ = write!(out, "{:<width$}", "");
        for _ in &buckets {
            let _ = write!(out, " | {:>6} {:>7} {:>8} {:>6}", "count", "RMSE", "coverage", "Var_S");
        }
        out.push('\n');
        for m in &methods {
            let _ = write!(out, "{:<width$}", m);
            for b in &buckets {
                match cells.get(&(m.clone(), b.clone())) {
                    Some(r) => {
                        let var_s = r.var_s.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
                        let flag = if r.floored { "*" } else { "" };
                        let _ = write!(
                            out,
                            " | {:>6} {:>7} {:>7.1}% {:>6}",
                            r.count,
                            format!("{:.2}{flag}", r.rmse),
                            100.0 * r.coverage,
                            var_s
                        );
                    }
                    None => {
                        let _ = write!(out, " | {:>31}", "-");
                    }
                }
            }
            out.push('\n');
        }
        if self.rows.iter().any(|r| r.floored) {
            out.push_str("* negative split-B MSE estimate floored at 0\n");
        }
        out
    }
}

/// `delta_a,delta_b,predicted` rows for external charting.
pub fn plot_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("delta_a,delta_b,predicted\n");
    for &(a, b, p) in rows {
        let _ = writeln!(out, "{},{},{}", fmt_num(a), fmt_num(b), fmt_num(p));
    }
    out
}
