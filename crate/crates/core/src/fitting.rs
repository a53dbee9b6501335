//! Hyperparameter estimation from historical readouts.

use crate::error::{Error, Result};
use crate::normal::log_normal_density;
use crate::optimize::{brent, grid_then_brent};
use crate::posterior::{huber_log_marginal, laplace_log_evidence, mixture_responsibilities};
use crate::prior::{PriorFamily, PriorModel};
use crate::readout::ExperimentReadout;

const LOG_TOL: f64 = 1e-10;
const GRID: usize = 61;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub prior: PriorModel,
    /// Total marginal log-likelihood at the returned prior.
    pub loglik: f64,
    pub sure_risk: Option<f64>,
    pub n_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// (iteration, objective) after each step.
    pub trace: Vec<(usize, f64)>,
    /// Weight floors and other interventions made during the fit.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative improvement in the objective below which a fit stops.
    pub tol: f64,
    pub weight_floor: f64,
    /// Scale search range as multiples of the median se2.
    pub scale_bounds: (f64, f64),
    /// Keep mixture weights fixed and fit only the scales.
    pub frozen_weights: Option<[f64; 3]>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            weight_floor: 1e-6,
            scale_bounds: (1e-12, 1e6),
            frozen_weights: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Obs {
    delta: f64,
    se2: f64,
}

fn observations(readouts: &[ExperimentReadout], min: usize) -> Result<Vec<Obs>> {
    if readouts.len() < min {
        return Err(Error::arg(format!(
            "need at least {min} readouts to fit, got {}",
            readouts.len()
        )));
    }
    readouts
        .iter()
        .map(|r| {
            r.validate()?;
            Ok(Obs {
                delta: r.delta,
                se2: r.se2(),
            })
        })
        .collect()
}

/// ln of the scale search interval, relative to the median se2.
fn log_bounds(obs: &[Obs], opts: &FitOptions) -> (f64, f64) {
    let mut se2: Vec<f64> = obs.iter().map(|o| o.se2).collect();
    se2.sort_by(f64::total_cmp);
    let n = se2.len();
    let median = if n % 2 == 1 {
        se2[n / 2]
    } else {
        0.5 * (se2[n / 2 - 1] + se2[n / 2])
    };
    ((opts.scale_bounds.0 * median).ln(), (opts.scale_bounds.1 * median).ln())
}

fn gaussian_loglik(obs: &[Obs], tau2: f64) -> f64 {
    obs.iter().map(|o| log_normal_density(o.delta, 0.0, tau2 + o.se2)).sum()
}

fn laplace_loglik(obs: &[Obs], nu2: f64) -> f64 {
    obs.iter().map(|o| laplace_log_evidence(o.delta, o.se2, nu2)).sum()
}

fn huber_loglik(obs: &[Obs], tau2: f64, k: f64) -> f64 {
    obs.iter().map(|o| huber_log_marginal(o.delta, o.se2, tau2, k)).sum()
}

fn sure(obs: &[Obs], tau2: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let shrink = o.se2 / (tau2 + o.se2);
            shrink * shrink * o.delta * o.delta + o.se2 * (tau2 - o.se2) / (tau2 + o.se2)
        })
        .sum()
}

/// Minimizes the heteroskedastic SURE of linear shrinkage over τ².
pub fn fit_sure_gaussian(readouts: &[ExperimentReadout]) -> Result<(f64, f64)> {
    let obs = observations(readouts, 2)?;
    Ok(sure_fit(&obs, &FitOptions::default()))
}

fn sure_fit(obs: &[Obs], opts: &FitOptions) -> (f64, f64) {
    let (lo, hi) = log_bounds(obs, opts);
    let m = grid_then_brent(|x| sure(obs, x.exp()), lo, hi, GRID, LOG_TOL);
    (m.x.exp(), m.value)
}

/// SURE(τ²) summed over the readouts.
pub fn sure_risk(readouts: &[ExperimentReadout], tau2: f64) -> Result<f64> {
    let obs = observations(readouts, 1)?;
    Ok(sure(&obs, tau2))
}

/// Marginal maximum likelihood over the family's free parameters.
pub fn fit_mle2(readouts: &[ExperimentReadout], family: PriorFamily, init: Option<&PriorModel>) -> Result<FitResult> {
    fit_mle2_with(readouts, family, init, &FitOptions::default())
}

pub fn fit_mle2_with(
    readouts: &[ExperimentReadout],
    family: PriorFamily,
    init: Option<&PriorModel>,
    opts: &FitOptions,
) -> Result<FitResult> {
    match family {
        PriorFamily::Gaussian => {
            let obs = observations(readouts, 2)?;
            let (lo, hi) = log_bounds(&obs, opts);
            let m = grid_then_brent(|x| -gaussian_loglik(&obs, x.exp()), lo, hi, GRID, LOG_TOL);
            single_scale(
                PriorModel::Gaussian { tau2: m.x.exp() },
                -m.value,
                obs.len(),
                m.evaluations,
            )
        }
        PriorFamily::Laplace => {
            let obs = observations(readouts, 2)?;
            let (lo, hi) = log_bounds(&obs, opts);
            let m = grid_then_brent(|x| -laplace_loglik(&obs, x.exp()), lo, hi, GRID, LOG_TOL);
            single_scale(
                PriorModel::Laplace { nu2: m.x.exp() },
                -m.value,
                obs.len(),
                m.evaluations,
            )
        }
        PriorFamily::Huber => {
            let obs = observations(readouts, 2)?;
            fit_huber(&obs, init, opts)
        }
        PriorFamily::Mixture => fit_ghidorah_with(readouts, init, opts),
    }
}

fn single_scale(prior: PriorModel, loglik: f64, n: usize, evaluations: usize) -> Result<FitResult> {
    if !loglik.is_finite() {
        return Err(Error::numeric(format!(
            "marginal log-likelihood is not finite at {prior:?}"
        )));
    }
    Ok(FitResult {
        prior,
        loglik,
        sure_risk: None,
        n_used: n,
        iterations: evaluations,
        converged: true,
        trace: vec![(0, loglik)],
        notes: Vec::new(),
    })
}

/// Coordinate ascent over (ln τ², ln K/τ).
fn fit_huber(obs: &[Obs], init: Option<&PriorModel>, opts: &FitOptions) -> Result<FitResult> {
    let (lo, hi) = log_bounds(obs, opts);
    let (mut lt, mut lr) = match init {
        Some(PriorModel::Huber { tau2, k }) => (tau2.ln(), (k / tau2.sqrt()).ln()),
        _ => {
            let m = grid_then_brent(|x| -gaussian_loglik(obs, x.exp()), lo, hi, GRID, LOG_TOL);
            (m.x, 1.345f64.ln())
        }
    };
    let (rlo, rhi) = (0.02f64.ln(), 50.0f64.ln());
    let ll = |lt: f64, lr: f64| {
        let tau2 = lt.exp();
        huber_loglik(obs, tau2, lr.exp() * tau2.sqrt())
    };
    let mut current = ll(lt, lr);
    let mut trace = vec![(0, current)];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter.min(200) {
        iterations = it;
        let m = grid_then_brent(|x| -ll(x, lr), lo, hi, 41, LOG_TOL);
        if -m.value > current {
            lt = m.x;
            current = -m.value;
        }
        let m = grid_then_brent(|x| -ll(lt, x), rlo, rhi, 31, LOG_TOL);
        if -m.value > current {
            lr = m.x;
            current = -m.value;
        }
        let prev = trace[trace.len() - 1].1;
        trace.push((it, current));
        if current - prev < opts.tol * current.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !current.is_finite() {
        return Err(Error::numeric("Huber marginal log-likelihood is not finite"));
    }
    let tau2 = lt.exp();
    Ok(FitResult {
        prior: PriorModel::Huber {
            tau2,
            k: lr.exp() * tau2.sqrt(),
        },
        loglik: current,
        sure_risk: None,
        n_used: obs.len(),
        iterations,
        converged,
        trace,
        notes: Vec::new(),
    })
}

/// EM for the zero / Gaussian / Laplace mixture, initialized at the SURE scale.
pub fn fit_ghidorah(readouts: &[ExperimentReadout], init: Option<&PriorModel>) -> Result<FitResult> {
    fit_ghidorah_with(readouts, init, &FitOptions::default())
}

pub fn fit_ghidorah_with(
    readouts: &[ExperimentReadout],
    init: Option<&PriorModel>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obs = observations(readouts, 3)?;
    let (lo, hi) = log_bounds(&obs, opts);
    let (sure_tau2, sure_value) = sure_fit(&obs, opts);
    let (mut weights, mut tau2, mut nu2) = match init {
        Some(PriorModel::Mixture { p0, pg, pl, tau2, nu2 }) => ([*p0, *pg, *pl], *tau2, *nu2),
        _ => ([1.0 / 3.0; 3], sure_tau2, sure_tau2),
    };
    if let Some(w) = opts.frozen_weights {
        PriorModel::Mixture {
            p0: w[0],
            pg: w[1],
            pl: w[2],
            tau2: 1.0,
            nu2: 1.0,
        }
        .validate()?;
        weights = w;
    }
    let mut notes = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut resp = vec![[0.0; 3]; obs.len()];
    let mut loglik = f64::NEG_INFINITY;

    for it in 0..=opts.max_iter {
        // E-step
        let mut total = 0.0;
        for (o, q) in obs.iter().zip(resp.iter_mut()) {
            let (r, log_ev) = mixture_responsibilities(o.delta, o.se2, weights, tau2, nu2);
            *q = r;
            total += log_ev;
        }
        if !total.is_finite() {
            return Err(Error::numeric(format!(
                "mixture log-likelihood is not finite at weights {weights:?}, tau2={tau2}, nu2={nu2}"
            )));
        }
        trace.push((it, total));
        let improvement = total - loglik;
        loglik = total;
        if it > 0 && improvement < opts.tol * total.abs().max(1.0) {
            converged = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        iterations = it + 1;

        // M-step
        let mut mass = [0.0; 3];
        for q in &resp {
            for k in 0..3 {
                mass[k] += q[k];
            }
        }
        if opts.frozen_weights.is_none() {
            let (w, floored) = floored_weights(mass, opts.weight_floor);
            for k in floored {
                notes.push(format!(
                    "iteration {}: weight {k} floored at {:e}",
                    it + 1,
                    opts.weight_floor
                ));
            }
            weights = w;
        }
        if mass[1] > 0.0 {
            let q = |t2: f64| -> f64 {
                obs.iter()
                    .zip(&resp)
                    .map(|(o, r)| r[1] * log_normal_density(o.delta, 0.0, t2 + o.se2))
                    .sum()
            };
            tau2 = m_step(q, tau2, lo, hi);
        }
        if mass[2] > 0.0 {
            let q = |n2: f64| -> f64 {
                obs.iter()
                    .zip(&resp)
                    .map(|(o, r)| r[2] * laplace_log_evidence(o.delta, o.se2, n2))
                    .sum()
            };
            nu2 = m_step(q, nu2, lo, hi);
        }
    }

    let prior = PriorModel::Mixture {
        p0: weights[0],
        pg: weights[1],
        pl: weights[2],
        tau2,
        nu2,
    };
    prior.validate()?;
    Ok(FitResult {
        prior,
        loglik,
        sure_risk: Some(sure_value),
        n_used: obs.len(),
        iterations,
        converged,
        trace,
        notes,
    })
}

/// Maximizes a weighted component log-likelihood on a bracket of two decades
/// around the current scale; keeps the old value unless the objective improves.
fn m_step<F: Fn(f64) -> f64>(q: F, current: f64, lo: f64, hi: f64) -> f64 {
    let x0 = current.ln();
    let (a, b) = ((x0 - 100f64.ln()).max(lo), (x0 + 100f64.ln()).min(hi));
    let m = brent(|x| -q(x.exp()), a, b, LOG_TOL, 200);
    if -m.value > q(current) {
        m.x.exp()
    } else {
        current
    }
}

/// argmax Σ_k m_k ln p_k subject to p_k ≥ floor and Σ p_k = 1.
fn floored_weights(mass: [f64; 3], floor: f64) -> ([f64; 3], Vec<usize>) {
    let mut fixed = [false; 3];
    loop {
        let free_mass: f64 = (0..3).filter(|&k| !fixed[k]).map(|k| mass[k]).sum();
        let free_share = 1.0 - floor * fixed.iter().filter(|&&f| f).count() as f64;
        let mut w = [0.0; 3];
        let mut changed = false;
        for k in 0..3 {
            w[k] = if fixed[k] {
                floor
            } else if free_mass > 0.0 {
                free_share * mass[k] / free_mass
            } else {
                free_share / (3 - fixed.iter().filter(|&&f| f).count()) as f64
            };
            if !fixed[k] && w[k] < floor {
                fixed[k] = true;
                changed = true;
            }
        }
        if !changed {
            let floored = (0..3).filter(|&k| fixed[k]).collect();
            return (w, floored);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn readouts(pairs: &[(f64, f64)]) -> Vec<ExperimentReadout> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(d, se2))| ExperimentReadout::from_se2(i.to_string(), "m", d, se2).unwrap())
            .collect()
    }

    #[test]
    fn null_data_drives_gaussian_scale_to_lower_bound() {
        let r = readouts(&[(0.0, 1.0); 20]);
        let fit = fit_mle2(&r, PriorFamily::Gaussian, None).unwrap();
        let PriorModel::Gaussian { tau2 } = fit.prior else {
            panic!()
        };
        assert!((tau2 / 1e-12 - 1.0).abs() < 1e-6, "{tau2}");
        let (t, _) = fit_sure_gaussian(&r).unwrap();
        assert!((t / 1e-12 - 1.0).abs() < 1e-6, "{t}");
    }

    #[test]
    fn two_readouts_fit_finite_parameters() {
        let r = readouts(&[(1.2, 0.5), (-0.3, 0.8)]);
        for fam in [PriorFamily::Gaussian, PriorFamily::Laplace, PriorFamily::Huber] {
            let fit = fit_mle2(&r, fam, None).unwrap();
            assert!(fit.loglik.is_finite());
            fit.prior.validate().unwrap();
        }
        assert!(fit_mle2(&r[..1], PriorFamily::Gaussian, None).is_err());
    }

    #[test]
    fn gaussian_fit_matches_moment_solution_for_homoskedastic_data() {
        // equal se2: MLE is max(mean Δ² − se2, lower bound)
        let d = [1.5, -2.0, 0.7, 3.1, -0.4, 2.2];
        let r = readouts(&d.iter().map(|&x| (x, 0.5)).collect::<Vec<_>>());
        let fit = fit_mle2(&r, PriorFamily::Gaussian, None).unwrap();
        let PriorModel::Gaussian { tau2 } = fit.prior else {
            panic!()
        };
        let expect = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64 - 0.5;
        assert!((tau2 - expect).abs() < 1e-7 * expect, "{tau2} vs {expect}");
    }

    #[test]
    fn floor_is_the_constrained_maximizer() {
        let (w, floored) = floored_weights([0.0, 3.0, 7.0], 1e-6);
        assert_eq!(floored, vec![0]);
        assert_eq!(w[0], 1e-6);
        assert!((w[1] - 0.3 * (1.0 - 1e-6)).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let (w, floored) = floored_weights([2.0, 1.0, 1.0], 1e-6);
        assert!(floored.is_empty());
        assert_eq!(w, [0.5, 0.25, 0.25]);
    }
}
