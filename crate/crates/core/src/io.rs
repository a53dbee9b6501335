//! CSV formats for readouts, split pairs, ground truth, and adjusted output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};
use crate::readout::ExperimentReadout;
use crate::splitreg::SplitPair;

pub const READOUT_HEADER: [&str; 6] = [
    "experiment_id",
    "metric_id",
    "delta",
    "n_treat",
    "n_control",
    "sigma2_pooled",
];
pub const SPLIT_HEADER: [&str; 6] = ["experiment_id", "delta_a", "se2_a", "delta_b", "se2_b", "full_se2"];
pub const TRUTH_HEADER: [&str; 2] = ["experiment_id", "mu_true"];
pub const ADJUSTED_HEADER: [&str; 10] = [
    "experiment_id",
    "metric_id",
    "method",
    "delta_raw",
    "mean_adj",
    "var_adj",
    "ci_low",
    "ci_high",
    "p_raw",
    "p_adj",
];

/// Nine significant digits; plain notation for moderate magnitudes.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap_or(x);
    let a = rounded.abs();
    if (1e-4..1e9).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, StringRecord)>,
}

fn read_table(text: &str, required: &[&str]) -> Result<Table> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(1, format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < required.len() || header.iter().zip(required).any(|(h, r)| h != r) {
        return Err(Error::parse(
            1,
            format!(
                "header must start with {}, got {}",
                required.join(","),
                header.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, got {}", header.len(), rec.len()),
            ));
        }
        rows.push((line, rec));
    }
    Ok(Table { header, rows })
}

fn field_f64(rec: &StringRecord, idx: usize, name: &str, line: usize) -> Result<f64> {
    let raw = &rec[idx];
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(line, format!("{name}: not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name}: not finite")));
    }
    Ok(v)
}

fn field_u64(rec: &StringRecord, idx: usize, name: &str, line: usize) -> Result<u64> {
    let raw = &rec[idx];
    raw.parse()
        .map_err(|_| Error::parse(line, format!("{name}: not a non-negative integer: {raw:?}")))
}

fn field_id(rec: &StringRecord, idx: usize, name: &str, line: usize) -> Result<String> {
    let raw = &rec[idx];
    if raw.is_empty() {
        return Err(Error::parse(line, format!("{name} is empty")));
    }
    Ok(raw.to_string())
}

fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } | Error::Io(_) => e,
        other => Error::parse(line, other.to_string()),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn read_readouts(text: &str) -> Result<Vec<ExperimentReadout>> {
    let t = read_table(text, &READOUT_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let r = ExperimentReadout {
                experiment_id: field_id(rec, 0, "experiment_id", line)?,
                metric_id: field_id(rec, 1, "metric_id", line)?,
                delta: field_f64(rec, 2, "delta", line)?,
                n_treat: field_u64(rec, 3, "n_treat", line)?,
                n_control: field_u64(rec, 4, "n_control", line)?,
                sigma2_pooled: field_f64(rec, 5, "sigma2_pooled", line)?,
            };
            at_line(line, r.validate())?;
            Ok(r)
        })
        .collect()
}

pub fn write_readouts(readouts: &[ExperimentReadout]) -> String {
    let mut out = READOUT_HEADER.join(",");
    out.push('\n');
    for r in readouts {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&r.experiment_id),
            csv_field(&r.metric_id),
            fmt_num(r.delta),
            r.n_treat,
            r.n_control,
            fmt_num(r.sigma2_pooled)
        );
    }
    out
}

/// Auxiliary columns come in pairs `aux_<metric>_delta_a`, `aux_<metric>_se2_a`.
pub fn read_split_pairs(text: &str) -> Result<Vec<SplitPair>> {
    let t = read_table(text, &SPLIT_HEADER)?;
    let mut aux_cols: BTreeMap<String, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, h) in t.header.iter().enumerate().skip(SPLIT_HEADER.len()) {
        let rest = h
            .strip_prefix("aux_")
            .ok_or_else(|| Error::parse(1, format!("unexpected column {h:?}")))?;
        if let Some(m) = rest.strip_suffix("_delta_a") {
            aux_cols.entry(m.to_string()).or_default().0 = Some(i);
        } else if let Some(m) = rest.strip_suffix("_se2_a") {
            aux_cols.entry(m.to_string()).or_default().1 = Some(i);
        } else {
            return Err(Error::parse(
                1,
                format!("auxiliary column {h:?} must end in _delta_a or _se2_a"),
            ));
        }
    }
    let mut aux_index = Vec::new();
    for (m, cols) in aux_cols {
        match cols {
            (Some(d), Some(s)) if !m.is_empty() => aux_index.push((m, d, s)),
            _ => {
                return Err(Error::parse(
                    1,
                    format!("auxiliary metric {m:?} needs both delta_a and se2_a columns"),
                ))
            }
        }
    }
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let mut p = SplitPair {
                experiment_id: field_id(rec, 0, "experiment_id", line)?,
                delta_a: field_f64(rec, 1, "delta_a", line)?,
                se2_a: field_f64(rec, 2, "se2_a", line)?,
                delta_b: field_f64(rec, 3, "delta_b", line)?,
                se2_b: field_f64(rec, 4, "se2_b", line)?,
                full_se2: field_f64(rec, 5, "full_se2", line)?,
                aux: BTreeMap::new(),
            };
            for (m, d, s) in &aux_index {
                let dv = field_f64(rec, *d, &format!("aux {m} delta_a"), line)?;
                let sv = field_f64(rec, *s, &format!("aux {m} se2_a"), line)?;
                p.aux.insert(m.clone(), (dv, sv));
            }
            at_line(line, p.validate())?;
            Ok(p)
        })
        .collect()
}

pub fn write_split_pairs(pairs: &[SplitPair]) -> String {
    let metrics: Vec<String> = pairs
        .first()
        .map(|p| p.aux.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = SPLIT_HEADER.join(",");
    for m in &metrics {
        let _ = write!(out, ",aux_{m}_delta_a,aux_{m}_se2_a");
    }
    out.push('\n');
    for p in pairs {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            csv_field(&p.experiment_id),
            fmt_num(p.delta_a),
            fmt_num(p.se2_a),
            fmt_num(p.delta_b),
            fmt_num(p.se2_b),
            fmt_num(p.full_se2)
        );
        for m in &metrics {
            let (d, s) = p.aux.get(m).copied().unwrap_or((f64::NAN, f64::NAN));
            let _ = write!(out, ",{},{}", fmt_num(d), fmt_num(s));
        }
        out.push('\n');
    }
    out
}

pub fn read_truth(text: &str) -> Result<Vec<(String, f64)>> {
    let t = read_table(text, &TRUTH_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok((
                field_id(rec, 0, "experiment_id", *line)?,
                field_f64(rec, 1, "mu_true", *line)?,
            ))
        })
        .collect()
}

pub fn write_truth(rows: &[(String, f64)]) -> String {
    let mut out = TRUTH_HEADER.join(",");
    out.push('\n');
    for (id, mu) in rows {
        let _ = writeln!(out, "{},{}", csv_field(id), fmt_num(*mu));
    }
    out
}

/// One line of `adjust` output.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedRow {
    pub experiment_id: String,
    pub metric_id: String,
    pub method: String,
    pub delta_raw: f64,
    pub mean_adj: f64,
    pub var_adj: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

pub fn write_adjusted(rows: &[AdjustedRow]) -> String {
    let mut out = ADJUSTED_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.experiment_id),
            csv_field(&r.metric_id),
            csv_field(&r.method),
            fmt_num(r.delta_raw),
            fmt_num(r.mean_adj),
            fmt_num(r.var_adj),
            fmt_num(r.ci_low),
            fmt_num(r.ci_high),
            fmt_num(r.p_raw),
            fmt_num(r.p_adj)
        );
    }
    out
}

pub fn read_adjusted(text: &str) -> Result<Vec<AdjustedRow>> {
    let t = read_table(text, &ADJUSTED_HEADER)?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let f = |i: usize| field_f64(rec, i, ADJUSTED_HEADER[i], line);
            let row = AdjustedRow {
                experiment_id: field_id(rec, 0, "experiment_id", line)?,
                metric_id: field_id(rec, 1, "metric_id", line)?,
                method: field_id(rec, 2, "method", line)?,
                delta_raw: f(3)?,
                mean_adj: f(4)?,
                var_adj: f(5)?,
                ci_low: f(6)?,
                ci_high: f(7)?,
                p_raw: f(8)?,
                p_adj: f(9)?,
            };
            if row.var_adj < 0.0 {
                return Err(Error::parse(line, "var_adj is negative"));
            }
            Ok(row)
        })
        .collect()
}
