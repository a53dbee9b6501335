use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use abshrink::evalreport::{paper_unit, score_against_split_b, score_against_truth, Estimate, EvalReport};
use abshrink::io::{
    read_adjusted, read_readouts, read_split_pairs, read_truth, write_adjusted, write_readouts, write_split_pairs,
    write_truth, AdjustedRow,
};
use abshrink::kv::KvDoc;
use abshrink::localh1::PriorOdds;
use abshrink::methods::{adjust_all, raw_p, train, Adjuster, Method, TrainOptions};
use abshrink::simlab::{builtin_case, generate};
use abshrink::splitreg::Regularizer;
use abshrink::{Error, ExperimentReadout, Result, SelectionRule};
use clap::{Args, Parser, Subcommand};

const SEED_ENV: &str = "ABSHRINK_SEED";

/// Post-selection bias correction for A/B test readouts.
#[derive(Debug, Parser)]
#[command(name = "abshrink", version)]
struct Cli {
    /// Flat key=value file; keys are long flag names without the dashes.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Random seed. Falls back to the ABSHRINK_SEED environment variable.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Two-sided level for intervals (default 0.05).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a simulated scenario: readouts, split pairs and ground truth.
    Simulate(SimulateArgs),
    /// Fit a method on historical readouts and write its model file.
    Fit(FitArgs),
    /// Adjust readouts with a fitted or inline-trained method.
    Adjust(AdjustArgs),
    /// Score adjusted output by selection bucket.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in scenario 1, 2 or 3.
    #[arg(long)]
    case: Option<u32>,
    /// Number of training experiments.
    #[arg(long)]
    train: Option<usize>,
    /// Number of test experiments.
    #[arg(long)]
    test: Option<usize>,
    /// Override the scenario signal-to-noise ratio.
    #[arg(long)]
    snr: Option<f64>,
    /// Auxiliary metrics per experiment.
    #[arg(long)]
    aux_metrics: Option<usize>,
    /// Directory receiving the CSV files.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

/// Options shared by `fit` and `adjust` for building a method.
#[derive(Debug, Args)]
struct MethodArgs {
    /// unadjusted, cmle, eb-normal, eb-laplace, eb-huber, ghidorah, rwes-linear, tarwes, tarwes-plus or localh1
    #[arg(long)]
    method: Option<String>,
    /// Historical readouts CSV used for training.
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    /// Historical split-pair CSV used by the regression methods.
    #[arg(long, value_name = "FILE")]
    pairs: Option<PathBuf>,
    /// CMLE selection threshold on the two-sided p-value.
    #[arg(long)]
    threshold: Option<f64>,
    /// Local-H1 prior odds a:b of a real effect (default 1:1).
    #[arg(long)]
    prior_odds: Option<String>,
    /// Regression solver: ridge or nnls.
    #[arg(long)]
    regularizer: Option<String>,
    /// Ridge penalty; defaults to a small multiple of the design scale.
    #[arg(long)]
    lambda: Option<f64>,
    /// Attach a second-moment variance model to regression methods.
    #[arg(long)]
    second_moment: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Fit report to write (default: standard output).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AdjustArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Readouts CSV to adjust.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Model file written by `fit`.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Output CSV (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Adjusted CSV written by `adjust`; may hold several methods.
    #[arg(long, value_name = "FILE")]
    adjusted: Option<PathBuf>,
    /// Readouts the adjusted rows were computed from.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Ground-truth CSV (experiment_id,mu_true).
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Split-pair CSV; scores against the held-out half instead of the truth.
    #[arg(long, value_name = "FILE")]
    pairs: Option<PathBuf>,
    /// Comma-separated p-value cutoffs; 1 means all readouts.
    #[arg(long)]
    thresholds: Option<String>,
    /// Report RMSE in units of the noise sd of a one-million-unit experiment.
    #[arg(long)]
    paper_units: bool,
    /// Output CSV (default: standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also print a text table to standard error.
    #[arg(long)]
    table: bool,
}

/// Flag values win over the config file, which wins over defaults.
struct Settings {
    config: KvDoc,
    allowed: &'static [&'static str],
}

impl Settings {
    fn load(path: Option<&Path>, allowed: &'static [&'static str]) -> Result<Self> {
        let config = match path {
            Some(p) => KvDoc::parse(&read_file(p)?).map_err(|e| in_file(p, e))?,
            None => KvDoc::new(),
        };
        for key in config.keys() {
            if !allowed.contains(&key) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        Ok(Self { config, allowed })
    }

    fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        debug_assert!(self.allowed.contains(&key));
        if flag.is_some() {
            return Ok(flag);
        }
        match self.config.get(key) {
            Some(text) => text
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("config key {key}: cannot parse {text:?}"))),
            None => Ok(None),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.value::<bool>(None, key)?.unwrap_or(false))
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.value(flag, key)
    }

    fn seed(&self, flag: Option<u64>) -> Result<Option<u64>> {
        if let Some(s) = self.value(flag, "seed")? {
            return Ok(Some(s));
        }
        match std::env::var(SEED_ENV) {
            Ok(text) => text
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::Argument(format!("{SEED_ENV}: not an unsigned integer: {text:?}"))),
            Err(_) => Ok(None),
        }
    }

    fn alpha(&self, flag: Option<f64>) -> Result<f64> {
        let alpha = self.value(flag, "alpha")?.unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(alpha)
    }
}

const SIMULATE_KEYS: &[&str] = &[
    "seed",
    "alpha",
    "case",
    "train",
    "test",
    "snr",
    "aux-metrics",
    "out-dir",
];
const METHOD_KEYS: &[&str] = &[
    "seed",
    "alpha",
    "method",
    "train",
    "pairs",
    "threshold",
    "prior-odds",
    "regularizer",
    "lambda",
    "second-moment",
    "out",
    "report",
    "input",
    "model",
];
const EVALUATE_KEYS: &[&str] = &[
    "seed",
    "alpha",
    "adjusted",
    "input",
    "truth",
    "pairs",
    "thresholds",
    "paper-units",
    "out",
    "table",
];

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Prefixes parse errors with the file they came from.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    }
}

fn load<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
    parse(&read_file(path)?).map_err(|e| in_file(path, e))
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::Argument(format!("--{flag} is required")))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let st = Settings::load(cli.config.as_deref(), SIMULATE_KEYS)?;
    let case = st.value(args.case, "case")?.unwrap_or(1);
    let mut scenario = builtin_case(case)?;
    if let Some(n) = st.value(args.train, "train")? {
        scenario.n_train = n;
    }
    if let Some(n) = st.value(args.test, "test")? {
        scenario.n_test = n;
    }
    if let Some(snr) = st.value(args.snr, "snr")? {
        scenario = scenario.with_snr(snr)?;
    }
    if let Some(k) = st.value(args.aux_metrics, "aux-metrics")? {
        scenario.aux_metrics = k;
    }
    if let Some(seed) = st.seed(cli.seed)? {
        scenario.seed = seed;
    }
    scenario.split = true;
    let dir = st
        .path(args.out_dir.clone(), "out-dir")?
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::Argument(format!("{}: {e}", dir.display())))?;

    let (train_set, test_set) = generate(&scenario)?;
    let mut truth = Vec::new();
    for (name, set) in [("train", &train_set), ("test", &test_set)] {
        let mut readouts = Vec::with_capacity(set.len());
        let mut split_a = Vec::with_capacity(set.len());
        let mut pairs = Vec::with_capacity(set.len());
        for e in set.iter() {
            let full = &e.readout_full;
            readouts.push(full.clone());
            readouts.extend(e.aux.iter().cloned());
            truth.push((full.experiment_id.clone(), e.mu_true));
            if let Some(p) = &e.split_pair {
                split_a.push(ExperimentReadout::new(
                    &full.experiment_id,
                    &full.metric_id,
                    p.delta_a,
                    full.n_treat / 2,
                    full.n_control / 2,
                    full.sigma2_pooled,
                )?);
                pairs.push(p.clone());
            }
        }
        write_file(&dir.join(format!("{name}_readouts.csv")), &write_readouts(&readouts))?;
        write_file(&dir.join(format!("{name}_split_a.csv")), &write_readouts(&split_a))?;
        write_file(&dir.join(format!("{name}_pairs.csv")), &write_split_pairs(&pairs))?;
    }
    write_file(&dir.join("truth.csv"), &write_truth(&truth))
}

fn only_main_metric(readouts: Vec<ExperimentReadout>) -> Vec<ExperimentReadout> {
    let Some(first) = readouts.first().map(|r| r.metric_id.clone()) else {
        return readouts;
    };
    readouts.into_iter().filter(|r| r.metric_id == first).collect()
}

fn method_of(st: &Settings, args: &MethodArgs) -> Result<Method> {
    st.value(args.method.clone(), "method")?
        .ok_or_else(|| Error::Argument("--method is required".into()))?
        .parse()
}

fn train_method(
    st: &Settings,
    args: &MethodArgs,
    method: Method,
) -> Result<(Adjuster, Option<abshrink::fitting::FitResult>)> {
    let mut opts = TrainOptions {
        cmle_threshold: st.value(args.threshold, "threshold")?,
        second_moment: st.flag(args.second_moment, "second-moment")?,
        ..TrainOptions::default()
    };
    if let Some(text) = st.value(args.prior_odds.clone(), "prior-odds")? {
        opts.prior_odds = PriorOdds::parse(&text)?;
    }
    let lambda = st.value(args.lambda, "lambda")?;
    opts.regularizer = match st.value(args.regularizer.clone(), "regularizer")?.as_deref() {
        None | Some("ridge") => Regularizer::Ridge(lambda),
        Some("nnls") => Regularizer::Nnls,
        Some(other) => {
            return Err(Error::Argument(format!(
                "unknown regularizer {other:?}; expected ridge or nnls"
            )))
        }
    };
    let readouts = match st.path(args.train.clone(), "train")? {
        Some(p) => only_main_metric(load(&p, read_readouts)?),
        None if method.needs_history() => {
            return Err(Error::Argument(format!("{method} needs --train readouts")));
        }
        None => Vec::new(),
    };
    let pairs = match st.path(args.pairs.clone(), "pairs")? {
        Some(p) => Some(load(&p, read_split_pairs)?),
        None => None,
    };
    train(method, &readouts, pairs.as_deref(), &opts)
}

fn fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let st = Settings::load(cli.config.as_deref(), METHOD_KEYS)?;
    let method = method_of(&st, &args.method)?;
    let out = required(st.path(args.out.clone(), "out")?, "out")?;
    let (adjuster, fit) = train_method(&st, &args.method, method)?;
    write_file(&out, &adjuster.to_text())?;

    let mut report = KvDoc::new();
    report.push("method", method);
    if let Some(f) = fit {
        report.push("n_used", f.n_used);
        report.push_f64("loglik", f.loglik);
        report.push("iterations", f.iterations);
        report.push("converged", f.converged);
        if let Some(r) = f.sure_risk {
            report.push_f64("sure_risk", r);
        }
        for (i, note) in f.notes.iter().enumerate() {
            report.push(format!("note.{i}"), note);
        }
    }
    emit(st.path(args.report.clone(), "report")?.as_deref(), &report.to_text())
}

fn adjust(cli: &Cli, args: &AdjustArgs) -> Result<()> {
    let st = Settings::load(cli.config.as_deref(), METHOD_KEYS)?;
    let alpha = st.alpha(cli.alpha)?;
    let input = required(st.path(args.input.clone(), "input")?, "input")?;
    let readouts = load(&input, read_readouts)?;
    let (method, adjuster) = match st.path(args.model.clone(), "model")? {
        Some(p) => {
            let adjuster = load(&p, Adjuster::parse)?;
            let method = match st.value(args.method.method.clone(), "method")? {
                Some(name) => name.parse()?,
                None => adjuster.method(),
            };
            (method, adjuster)
        }
        None => {
            let method = method_of(&st, &args.method)?;
            (method, train_method(&st, &args.method, method)?.0)
        }
    };
    let rows = adjust_all(&adjuster, &readouts, alpha)?
        .into_iter()
        .map(|(i, s)| {
            let r = &readouts[i];
            Ok(AdjustedRow {
                experiment_id: r.experiment_id.clone(),
                metric_id: r.metric_id.clone(),
                method: method.name().to_string(),
                delta_raw: r.delta,
                mean_adj: s.mean,
                var_adj: s.variance,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                p_raw: raw_p(r.delta, r.se2())?,
                p_adj: s.adjusted_p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(st.path(args.out.clone(), "out")?.as_deref(), &write_adjusted(&rows))
}

fn parse_thresholds(text: &str) -> Result<Vec<SelectionRule>> {
    text.split(',')
        .map(|t| {
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad threshold {t:?}")))?;
            let rule = if t >= 1.0 {
                SelectionRule::All
            } else {
                SelectionRule::PValueBelow(t)
            };
            rule.validate()?;
            Ok(rule)
        })
        .collect()
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let st = Settings::load(cli.config.as_deref(), EVALUATE_KEYS)?;
    let alpha = st.alpha(cli.alpha)?;
    let buckets = parse_thresholds(
        &st.value(args.thresholds.clone(), "thresholds")?
            .unwrap_or_else(|| "0.01,0.05,1.0".into()),
    )?;
    let adjusted = load(
        &required(st.path(args.adjusted.clone(), "adjusted")?, "adjusted")?,
        read_adjusted,
    )?;
    let readouts = load(
        &required(st.path(args.input.clone(), "input")?, "input")?,
        read_readouts,
    )?;
    let by_key: HashMap<(&str, &str), &ExperimentReadout> = readouts
        .iter()
        .map(|r| ((r.experiment_id.as_str(), r.metric_id.as_str()), r))
        .collect();

    let mut methods: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<Estimate>> = HashMap::new();
    for row in &adjusted {
        let r = by_key
            .get(&(row.experiment_id.as_str(), row.metric_id.as_str()))
            .ok_or_else(|| {
                Error::Argument(format!(
                    "{}/{}: not in the input readouts",
                    row.experiment_id, row.metric_id
                ))
            })?;
        if !methods.contains(&row.method.as_str()) {
            methods.push(&row.method);
        }
        grouped.entry(&row.method).or_default().push(Estimate {
            experiment_id: row.experiment_id.clone(),
            delta: r.delta,
            se2: r.se2(),
            mean: row.mean_adj,
            variance: row.var_adj,
            ci_low: row.ci_low,
            ci_high: row.ci_high,
        });
    }

    let truth = st.path(args.truth.clone(), "truth")?;
    let pairs = st.path(args.pairs.clone(), "pairs")?;
    let mut report = EvalReport::default();
    match (truth, pairs) {
        (Some(t), None) => {
            let truth: HashMap<String, f64> = load(&t, read_truth)?.into_iter().collect();
            for m in &methods {
                report.extend(score_against_truth(m, &grouped[m], &truth, &buckets)?);
            }
        }
        (None, Some(p)) => {
            let pairs = load(&p, read_split_pairs)?;
            for m in &methods {
                report.extend(score_against_split_b(m, &grouped[m], &pairs, &buckets, alpha)?);
            }
        }
        _ => return Err(Error::Argument("give exactly one of --truth or --pairs".into())),
    }
    if st.flag(args.paper_units, "paper-units")? {
        let sigma2 = readouts.first().map(|r| r.sigma2_pooled).unwrap_or(1.0);
        if readouts.iter().any(|r| r.sigma2_pooled != sigma2) {
            return Err(Error::Argument(
                "--paper-units needs a single sigma2_pooled across readouts".into(),
            ));
        }
        report = report.in_units(paper_unit(sigma2));
    }
    if st.flag(args.table, "table")? {
        eprint!("{}", report.to_table());
    }
    emit(st.path(args.out.clone(), "out")?.as_deref(), &report.to_csv())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Adjust(a) => adjust(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("abshrink: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
