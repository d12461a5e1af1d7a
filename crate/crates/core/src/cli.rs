//! Command-line surface: `simulate`, `estimate`, `bands`, `metrics`,
//! `replicate`, `ingest` and `plot`.
//!
//! Every subcommand accepts `--config FILE`, a flat `key=value` file whose
//! keys are the subcommand's long flag names. Flags given on the command
//! line take precedence. The fully resolved settings are echoed as
//! `# key=value` lines at the top of every CSV output and under `config`
//! in JSON outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bands::{estimate_median_bias, hulc_band, transformed_reserves, ConfidenceBand, EstimatorKind};
use crate::error::{Error, Result};
use crate::ingest::{export_dataset, import_dataset, ingest_bid_csv, IngestError, NoiseOptions};
use crate::initial::{select, SelectionRule, SpliceRule};
use crate::lambda::GTable;
use crate::metrics::{
    binned_tv_distance, ks_distance, replicate_table, train_test_eval, tv_distance, StudyOptions, StudyReport,
    StudySetting, Target,
};
use crate::mle::AscentOptions;
use crate::model::{CurveKind, MonotoneCurve, ObservedDataset};
use crate::pipeline::{fit, FitOptions};
use crate::plot::{collect_series, render_svg, write_long_csv, Series};
use crate::simulate::{run_study_with_traces, write_bid_trace_file, ReservePolicy, SimConfig, ValuationDistribution};

#[derive(Debug, Parser)]
#[command(name = "auction-valuation", version, about = "Valuation distributions from second-price auction standing prices")]
pub struct Cli {
    /// Flat key=value file supplying values for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate auctions and write a dataset file.
    Simulate(SimulateArgs),
    /// Fit the initial and constrained likelihood estimates.
    Estimate(EstimateArgs),
    /// HulC confidence band for one estimator.
    Bands(BandsArgs),
    /// Distances between curves, or the train/test protocol on a dataset.
    Metrics(MetricsArgs),
    /// Simulation study averaging distances to the true CDF.
    Replicate(ReplicateArgs),
    /// Clean a bid log and write a dataset file.
    Ingest(IngestArgs),
    /// Long-format plot data and an optional SVG chart.
    Plot(PlotArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::Bands(_) => "bands",
            Command::Metrics(_) => "metrics",
            Command::Replicate(_) => "replicate",
            Command::Ingest(_) => "ingest",
            Command::Plot(_) => "plot",
        }
    }
}

fn parse_dist(s: &str) -> std::result::Result<String, String> {
    s.parse::<ValuationDistribution>().map(|_| s.to_string()).map_err(|e| e.to_string())
}

fn parse_reserve(s: &str) -> std::result::Result<String, String> {
    s.parse::<ReservePolicy>().map(|_| s.to_string()).map_err(|e| e.to_string())
}

fn parse_setting(s: &str) -> std::result::Result<String, String> {
    study_setting(s).map(|_| s.to_string())
}

/// Options of the estimation pipeline shared by several subcommands.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    /// Fraction of auctions the low-reserve window must hold.
    #[arg(long, default_value_t = 0.25)]
    pub q: f64,
    /// Half-width of the low-reserve window (default: 1% of the median final price, at least 0.01).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Use every auction with reserve below this value instead of the window rule.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Where the bridge between the first-price and final-price estimates ends.
    #[arg(long, value_enum, default_value_t = SpliceArg::MaxAnchor)]
    pub splice: SpliceArg,
    /// Stop once a sweep improves the log-likelihood by at most this much.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpliceArg {
    MaxAnchor,
    FirstPrice,
}

impl FitArgs {
    pub fn options(&self) -> FitOptions {
        let selection = match self.threshold {
            Some(t) => SelectionRule::Threshold(t),
            None => SelectionRule::Window { q: self.q, epsilon: self.epsilon },
        };
        let splice = match self.splice {
            SpliceArg::MaxAnchor => SpliceRule::MaxAnchor,
            SpliceArg::FirstPrice => SpliceRule::FirstPrice,
        };
        FitOptions {
            selection,
            splice,
            ascent: AscentOptions { tol: self.tol, max_sweeps: self.max_sweeps, ..AscentOptions::default() },
            also_unconstrained: false,
        }
    }
}

/// Monte Carlo table of the expected jump count.
#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GTableArgs {
    /// Poisson draws per grid point.
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_reps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub g_spacing: f64,
    #[arg(long, default_value_t = 1)]
    pub g_seed: u64,
    /// Cache file, reused when its parameters match.
    #[arg(long, value_name = "FILE")]
    pub g_cache: Option<PathBuf>,
}

impl GTableArgs {
    pub fn build(&self, upper: f64) -> Result<GTable> {
        let upper = upper.max(5.0);
        let table = match &self.g_cache {
            Some(path) => GTable::load_or_build(path, upper, self.g_spacing, self.mc_reps, self.g_seed)?,
            None => GTable::regular(upper, self.g_spacing, self.mc_reps, self.g_seed)?,
        };
        Ok(table)
    }

    /// Table reaching the argument that matches the dataset's mean jump
    /// count, using the bound `g(x) <= 2 ln x + 2 gamma - 2`.
    pub fn build_for(&self, dataset: &ObservedDataset, fit: &FitArgs) -> Result<GTable> {
        let members = select(dataset, fit.options().selection).map(|s| s.members).unwrap_or_default();
        let members: Vec<usize> = if members.is_empty() { (0..dataset.len()).collect() } else { members };
        let mean = members.iter().map(|&k| dataset.auctions()[k].num_jumps() as f64).sum::<f64>() / members.len() as f64;
        let euler = 0.577_215_664_901_532_9;
        self.build(1.25 * ((mean + 2.0 - 2.0 * euler) / 2.0).exp() + 1.0)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Valuation distribution, e.g. uniform:1,20 or gamma:10,2.
    #[arg(long, value_parser = parse_dist)]
    pub dist: String,
    #[arg(long = "num-auctions", visible_alias = "K", default_value_t = 100)]
    pub num_auctions: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    pub tau: f64,
    /// A constant, uniform:low,high or fixed:r;r;...
    #[arg(long, default_value = "0", value_parser = parse_reserve)]
    pub reserve: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound of the noise separating tied reserves.
    #[arg(long, default_value_t = 0.01)]
    pub tie_noise: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the bid-level trace as a bid-log CSV.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Curves CSV with the estimates on shared knots.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Diagnostics JSON (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub diagnostics: Option<PathBuf>,
    /// Also fit the likelihood without the boundary constraint.
    #[arg(long)]
    pub unconstrained: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub g: GTableArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Cmle,
    Init,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Cmle => EstimatorKind::ConstrainedMle,
            EstimatorArg::Init => EstimatorKind::Init,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BandsArgs {
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub alpha: f64,
    /// Median bias of the estimator; estimated by simulation when absent.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Cmle)]
    pub estimator: EstimatorArg,
    /// Simulated datasets for the median-bias estimate.
    #[arg(long, default_value_t = 100)]
    pub bias_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub g: GTableArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsArgs {
    /// Curves CSV as written by `estimate`.
    #[arg(long, value_name = "FILE", conflicts_with = "data")]
    pub curves: Option<PathBuf>,
    /// Column of `--curves` to measure.
    #[arg(long, default_value = "f_cmle")]
    pub column: String,
    /// Compare against this distribution.
    #[arg(long, value_parser = parse_dist, conflicts_with = "against")]
    pub truth: Option<String>,
    /// Compare against a column of another curves CSV.
    #[arg(long, value_name = "FILE")]
    pub against: Option<PathBuf>,
    /// Column of `--against` (defaults to `--column`).
    #[arg(long)]
    pub against_column: Option<String>,
    /// Cells of the binned total variation.
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Dataset for the train/test protocol.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub g: GTableArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplicateArgs {
    /// NAME:K with NAME in uniform, piecewise, pareto, gamma, beta, or
    /// DIST@K with an explicit distribution. Repeatable.
    #[arg(long, required = true, value_parser = parse_setting)]
    pub setting: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 100.0)]
    pub tau: f64,
    #[arg(long, default_value = "0", value_parser = parse_reserve)]
    pub reserve: String,
    /// Output CSV (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Per-replicate distances.
    #[arg(long, value_name = "FILE")]
    pub raw: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub g: GTableArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Bid log with columns auctionid, bid, bidtime, bidder, bidderrate, openbid, price.
    pub input: PathBuf,
    /// Auction length in the bid-time unit.
    #[arg(long)]
    pub duration: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Cleaning report JSON (stdout when absent).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Upper bound of the Uniform noise added to each bid.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlotArgs {
    #[arg(long, value_name = "FILE")]
    pub curves: PathBuf,
    /// Band CSV as written by `bands`.
    #[arg(long, value_name = "FILE")]
    pub band: Option<PathBuf>,
    /// Add the CDF of this distribution as a series.
    #[arg(long, value_parser = parse_dist)]
    pub truth: Option<String>,
    /// Long-format CSV with columns x, series, value.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value = "Estimated valuation CDF")]
    pub title: String,
}

/// Keys that may appear in a config file without naming a flag.
const IGNORED_KEYS: [&str; 2] = ["command", "crate-version"];

/// Reads a flat `key=value` file. Blank lines and lines starting with `#`
/// are skipped.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

enum ParseFailure {
    Clap(clap::Error),
    Config(Error),
}

/// Appends config-file values for every flag not given on the command line.
fn merge_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, ParseFailure> {
    let loose = Cli::command().ignore_errors(true).try_get_matches_from(&argv).map_err(ParseFailure::Clap)?;
    let Some(path) = loose.get_one::<PathBuf>("config").cloned() else {
        return Ok(argv);
    };
    let Some((name, sub)) = loose.subcommand() else {
        return Ok(argv);
    };
    let entries = read_config(&path).map_err(ParseFailure::Config)?;
    let root = Cli::command();
    let cmd = root.find_subcommand(name).expect("matched subcommand exists");
    let mut argv = argv;
    for (key, value) in entries {
        if IGNORED_KEYS.contains(&key.as_str()) {
            continue;
        }
        let id = key.replace('-', "_");
        let arg = cmd
            .get_arguments()
            .find(|a| {
                a.get_id().as_str() == id
                    || a.get_long() == Some(key.as_str())
                    || a.get_all_aliases().is_some_and(|al| al.contains(&key.as_str()))
            })
            .ok_or_else(|| ParseFailure::Config(Error::Config(format!("unknown key {key:?} for {name}"))))?;
        if matches!(sub.value_source(arg.get_id().as_str()), Some(ValueSource::CommandLine)) {
            continue;
        }
        let long = arg.get_long().map(|l| format!("--{l}"));
        match (arg.get_action(), long) {
            (_, None) => argv.push(value.into()),
            (ArgAction::SetTrue, Some(flag)) => {
                let on = value
                    .parse::<bool>()
                    .map_err(|_| ParseFailure::Config(Error::Config(format!("{key} expects true or false"))))?;
                if on {
                    argv.push(flag.into());
                }
            }
            (ArgAction::Append, Some(flag)) => {
                for v in value.split_whitespace() {
                    argv.push(format!("{flag}={v}").into());
                }
            }
            (_, Some(flag)) => argv.push(format!("{flag}={value}").into()),
        }
    }
    Ok(argv)
}

fn parse(argv: Vec<OsString>) -> std::result::Result<Cli, ParseFailure> {
    let argv = merge_config(argv)?;
    let matches = Cli::command().try_get_matches_from(argv).map_err(ParseFailure::Clap)?;
    Cli::from_arg_matches(&matches).map_err(ParseFailure::Clap)
}

/// Resolved settings as `(key, value)` pairs, keyed by long flag name.
pub fn provenance<T: Serialize>(command: &str, args: &T) -> Vec<(String, String)> {
    let mut out = vec![
        ("command".to_string(), command.to_string()),
        ("crate-version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ];
    if let Ok(Value::Object(map)) = serde_json::to_value(args) {
        for (k, v) in map {
            let text = match v {
                Value::Null => continue,
                Value::String(s) => s,
                Value::Array(items) => items
                    .iter()
                    .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(" "),
                other => other.to_string(),
            };
            out.push((k, text));
        }
    }
    out
}

fn config_json(prov: &[(String, String)]) -> Value {
    Value::Object(prov.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_header<W: Write>(out: &mut W, prov: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in prov {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Named simulation settings with their distributions.
pub fn named_distribution(name: &str) -> Option<&'static str> {
    match name {
        "uniform" => Some("uniform:1,20"),
        "piecewise" => Some("piecewise:0.5,1,2;0.5,3,4"),
        "pareto" => Some("pareto:3,100"),
        "gamma" => Some("gamma:10,2"),
        "beta" => Some("beta:2,2"),
        _ => None,
    }
}

/// Parses `NAME:K` or `DIST@K`.
pub fn study_setting(s: &str) -> std::result::Result<StudySetting, String> {
    let (dist, k, label) = if let Some((d, k)) = s.rsplit_once('@') {
        (d.to_string(), k, s.replace(',', " "))
    } else if let Some((name, k)) = s.split_once(':') {
        let d = named_distribution(name).ok_or_else(|| format!("unknown setting {name:?}"))?;
        (d.to_string(), k, format!("{name}{k}"))
    } else {
        return Err(format!("expected NAME:K or DIST@K, got {s:?}"));
    };
    let num_auctions: usize = k.parse().map_err(|_| format!("bad auction count {k:?}"))?;
    if num_auctions == 0 {
        return Err("auction count must be positive".into());
    }
    let dist = dist.parse::<ValuationDistribution>().map_err(|e| e.to_string())?;
    Ok(StudySetting { label, dist, num_auctions })
}

fn format_error(line: usize, message: impl Into<String>) -> Error {
    IngestError::Format { line, message: message.into() }.into()
}

/// Reads a CSV of curves: a column `x` of knots and one column per curve.
/// Lines starting with `#` are skipped.
pub fn read_curves(path: &Path) -> Result<Vec<(String, MonotoneCurve)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut header: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => {
                if fields.first() != Some(&"x") {
                    return Err(format_error(i + 1, "first column must be x"));
                }
                columns = vec![Vec::new(); fields.len()];
                header = Some(fields.iter().map(|s| s.to_string()).collect());
            }
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(format_error(i + 1, format!("expected {} fields", h.len())));
                }
                for (col, f) in columns.iter_mut().zip(&fields) {
                    col.push(f.parse().map_err(|_| format_error(i + 1, format!("bad number {f:?}")))?);
                }
            }
        }
    }
    let header = header.ok_or_else(|| format_error(0, "no header"))?;
    let xs = columns[0].clone();
    header
        .into_iter()
        .zip(columns)
        .skip(1)
        .map(|(name, vals)| Ok((name, MonotoneCurve::new(xs.clone(), vals, CurveKind::Linear)?)))
        .collect()
}

fn pick_curve(curves: Vec<(String, MonotoneCurve)>, column: &str, path: &Path) -> Result<MonotoneCurve> {
    let names: Vec<String> = curves.iter().map(|(n, _)| n.clone()).collect();
    curves
        .into_iter()
        .find(|(n, _)| n == column)
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Config(format!("{} has no column {column:?} (found {})", path.display(), names.join(", "))))
}

/// Reads a band CSV as written by `bands`.
pub fn read_band(path: &Path) -> Result<ConfidenceBand> {
    let reader = BufReader::new(File::open(path)?);
    let mut meta = BTreeMap::new();
    let mut band = ConfidenceBand {
        knots: vec![],
        lower: vec![],
        upper: vec![],
        estimate: None,
        alpha: f64::NAN,
        batches: 0,
    };
    let mut estimate = Vec::new();
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(format_error(i + 1, "expected x,lower,upper,estimate"));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format_error(i + 1, format!("bad number {s:?}")));
        band.knots.push(num(f[0])?);
        band.lower.push(num(f[1])?);
        band.upper.push(num(f[2])?);
        if !f[3].trim().is_empty() {
            estimate.push(num(f[3])?);
        }
    }
    if estimate.len() == band.knots.len() && !estimate.is_empty() {
        band.estimate = Some(estimate);
    }
    band.alpha = meta.get("alpha").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    band.batches = meta.get("batches").and_then(|v| v.parse().ok()).unwrap_or(0);
    Ok(band)
}

fn load_dataset(path: &Path) -> Result<ObservedDataset> {
    Ok(import_dataset(path)?.0)
}

fn cmd_simulate(a: &SimulateArgs, prov: &[(String, String)]) -> Result<()> {
    let dist: ValuationDistribution = a.dist.parse()?;
    let reserve: ReservePolicy = a.reserve.parse()?;
    let mut config = SimConfig::new(a.lambda, a.tau, a.num_auctions, a.seed).with_reserve(reserve);
    config.tie_noise = a.tie_noise;
    let (dataset, traces) = run_study_with_traces(&config, &dist)?;
    export_dataset(&dataset, prov, &a.out)?;
    if let Some(t) = &a.trace {
        write_bid_trace_file(&traces, t)?;
    }
    log::info!("wrote {} auctions to {}", dataset.len(), a.out.display());
    Ok(())
}

fn union_knots(curves: &[&MonotoneCurve]) -> Vec<f64> {
    let mut xs: Vec<f64> = curves.iter().flat_map(|c| c.knots().iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

fn cmd_estimate(a: &EstimateArgs, prov: &[(String, String)]) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let table = a.g.build_for(&dataset, &a.fit)?;
    let mut opts = a.fit.options();
    opts.also_unconstrained = a.unconstrained;
    let f = fit(&dataset, &table, &opts)?;
    let mut named: Vec<(&str, &MonotoneCurve)> = vec![("f_init", f.f_init()), ("f_cmle", &f.f_mle)];
    if let Some((_, c)) = &f.unconstrained {
        named.push(("f_mle", c));
    }
    let xs = union_knots(&named.iter().map(|(_, c)| *c).collect::<Vec<_>>());
    let mut out = create(&a.out)?;
    write_header(&mut out, prov)?;
    let names: Vec<&str> = named.iter().map(|(n, _)| *n).collect();
    writeln!(out, "x,{}", names.join(","))?;
    for &x in &xs {
        let vals: Vec<String> = named.iter().map(|(_, c)| c.eval(x).to_string()).collect();
        writeln!(out, "{x},{}", vals.join(","))?;
    }
    out.flush()?;
    let diag = json!({
        "auctions": dataset.len(),
        "lambda_hat": f.lambda.lambda_hat,
        "mean_jumps": f.lambda.mean_jumps,
        "low_reserve": {
            "r_min": f.selection.r_min,
            "epsilon": f.selection.epsilon,
            "size": f.selection.members.len(),
        },
        "anchors": f.initial.anchors,
        "pooled_prices": f.z.len(),
        "xbar_min": f.xbar_min,
        "projected_start": f.projected.len(),
        "sweeps": f.ascent.sweeps,
        "converged": f.ascent.converged,
        "initial_log_lik": f.ascent.log[0],
        "final_log_lik": f.ascent.final_log_lik(),
        "unconstrained": f.unconstrained.as_ref().map(|(r, _)| json!({
            "sweeps": r.sweeps,
            "converged": r.converged,
            "final_log_lik": r.final_log_lik(),
        })),
        "config": config_json(prov),
    });
    write_json(a.diagnostics.as_deref(), &diag)
}

fn cmd_bands(a: &BandsArgs, prov: &[(String, String)]) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let table = a.g.build_for(&dataset, &a.fit)?;
    let opts = a.fit.options();
    let kind: EstimatorKind = a.estimator.into();
    let full = fit(&dataset, &table, &opts)?;
    let estimate = match kind {
        EstimatorKind::Init => full.f_init().clone(),
        EstimatorKind::ConstrainedMle => full.f_mle.clone(),
    };
    let delta = match a.delta {
        Some(d) => d,
        None => {
            let profile = transformed_reserves(&dataset, &full.selection.members, &estimate);
            let bias = estimate_median_bias(
                kind,
                dataset.len(),
                full.lambda.lambda_hat,
                dataset.duration(),
                &profile,
                a.bias_reps,
                crate::rng::derive_seed(a.seed, 1),
                &table,
                &opts,
            )?;
            log::info!("median bias {} ({} failed replicates)", bias.delta, bias.failed);
            bias.delta
        }
    };
    let band = hulc_band(&dataset, kind, a.alpha, delta, a.seed, &table, &opts)?.with_estimate(&estimate);
    let mut out = create(&a.out)?;
    write_header(&mut out, prov)?;
    writeln!(out, "# delta={delta}")?;
    band.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_metrics(a: &MetricsArgs, prov: &[(String, String)]) -> Result<()> {
    let mut rows: Vec<(String, f64)> = Vec::new();
    if let Some(data) = &a.data {
        let dataset = load_dataset(data)?;
        let table = a.g.build_for(&dataset, &a.fit)?;
        let r = train_test_eval(&dataset, a.train_fraction, a.reps, a.seed, &table, &a.fit.options())?;
        rows.push(("avg_tv_init".into(), r.avg_tv_init));
        rows.push(("avg_tv_mle".into(), r.avg_tv_mle));
        rows.push(("replications".into(), r.replications as f64));
        rows.push(("skipped".into(), r.skipped as f64));
    } else {
        let path = a.curves.as_ref().ok_or_else(|| Error::Config("metrics needs --curves or --data".into()))?;
        let curve = pick_curve(read_curves(path)?, &a.column, path)?;
        let other;
        let dist;
        let target: Target = match (&a.truth, &a.against) {
            (Some(t), None) => {
                dist = t.parse::<ValuationDistribution>()?;
                Target::Dist(&dist)
            }
            (None, Some(p)) => {
                other = pick_curve(read_curves(p)?, a.against_column.as_deref().unwrap_or(&a.column), p)?;
                Target::Curve(&other)
            }
            _ => return Err(Error::Config("metrics needs exactly one of --truth or --against".into())),
        };
        rows.push(("ks".into(), ks_distance(&curve, target)));
        rows.push(("tv".into(), tv_distance(&curve, target)?));
        rows.push(("binned_tv".into(), binned_tv_distance(&curve, target, a.bins)?));
    }
    let mut out = output(a.out.as_deref())?;
    write_header(&mut out, prov)?;
    writeln!(out, "metric,value")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}")?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_replicate(a: &ReplicateArgs, prov: &[(String, String)]) -> Result<()> {
    let settings = a
        .setting
        .iter()
        .map(|s| study_setting(s).map_err(Error::Config))
        .collect::<Result<Vec<_>>>()?;
    let opts = StudyOptions { lambda: a.lambda, tau: a.tau, reserve: a.reserve.parse()?, fit: a.fit.options() };
    let table = a.g.build(1.5 * a.lambda * a.tau + 10.0)?;
    let reports = replicate_table(&settings, a.reps, a.seed, &opts, &table);
    let mut out = output(a.out.as_deref())?;
    write_header(&mut out, prov)?;
    writeln!(out, "{}", StudyReport::csv_header())?;
    for r in &reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    if let Some(raw) = &a.raw {
        let mut w = create(raw)?;
        write_header(&mut w, prov)?;
        writeln!(w, "setting,replicate,ks_mle,ks_init,tv_mle,tv_init,binned_tv_mle,binned_tv_init,lambda_hat,sweeps")?;
        for r in &reports {
            for d in &r.raw {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.label,
                    d.replicate,
                    d.ks_mle,
                    d.ks_init,
                    d.tv_mle,
                    d.tv_init,
                    d.binned_tv_mle,
                    d.binned_tv_init,
                    d.lambda_hat,
                    d.sweeps
                )?;
            }
        }
        w.flush()?;
    }
    if reports.iter().all(|r| r.replicates == 0) {
        return Err(crate::metrics::MetricError::AllFailed("see warnings".into()).into());
    }
    Ok(())
}

fn cmd_ingest(a: &IngestArgs, prov: &[(String, String)]) -> Result<()> {
    let (dataset, report) = ingest_bid_csv(&a.input, a.duration, NoiseOptions { seed: a.seed, amplitude: a.noise })?;
    export_dataset(&dataset, prov, &a.out)?;
    let value = json!({ "report": report, "config": config_json(prov) });
    write_json(a.report.as_deref(), &value)
}

fn cmd_plot(a: &PlotArgs, prov: &[(String, String)]) -> Result<()> {
    let curves = read_curves(&a.curves)?;
    let band = a.band.as_deref().map(read_band).transpose()?;
    let named: Vec<(&str, &MonotoneCurve)> = curves.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let mut series = collect_series(&named, band.as_ref());
    if let Some(t) = &a.truth {
        let dist: ValuationDistribution = t.parse()?;
        let xs = union_knots(&curves.iter().map(|(_, c)| c).collect::<Vec<_>>());
        series.push(Series { name: "truth".into(), points: xs.iter().map(|&x| (x, dist.cdf(x))).collect() });
    }
    let mut out = create(&a.out)?;
    write_long_csv(&series, prov, &mut out)?;
    out.flush()?;
    if let Some(svg) = &a.svg {
        std::fs::write(svg, render_svg(&series, &a.title))?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<()> {
    let name = cli.command.name();
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &provenance(name, a)),
        Command::Estimate(a) => cmd_estimate(a, &provenance(name, a)),
        Command::Bands(a) => cmd_bands(a, &provenance(name, a)),
        Command::Metrics(a) => cmd_metrics(a, &provenance(name, a)),
        Command::Replicate(a) => cmd_replicate(a, &provenance(name, a)),
        Command::Ingest(a) => cmd_ingest(a, &provenance(name, a)),
        Command::Plot(a) => cmd_plot(a, &provenance(name, a)),
    }
}

/// Parses `argv` (including the program name), runs it and returns the
/// process exit code: 0 on success, 2 for usage errors, 3 for invalid
/// data, 4 for numerical failures and 5 for I/O errors.
pub fn run(argv: Vec<OsString>) -> i32 {
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
        Err(ParseFailure::Config(e)) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.class().exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn settings_parse() {
        let s = study_setting("uniform:100").unwrap();
        assert_eq!((s.label.as_str(), s.num_auctions), ("uniform100", 100));
        assert_eq!(s.dist, ValuationDistribution::uniform(1.0, 20.0).unwrap());
        let s = study_setting("gamma:5,1@20").unwrap();
        assert_eq!(s.num_auctions, 20);
        assert!(study_setting("nope:10").is_err());
        assert!(study_setting("uniform:0").is_err());
    }

    #[test]
    fn missing_required_flag_is_a_usage_error() {
        assert_eq!(run(args("auction-valuation simulate --K 10")), 2);
        assert_eq!(run(args("auction-valuation frobnicate")), 2);
    }

    #[test]
    fn config_fills_flags_and_flags_win() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "# comment\ndist=gamma:10,2\nnum-auctions=7\nseed=3\n").unwrap();
        let argv = args(&format!("auction-valuation simulate --config {} --seed 9 --out x.csv", conf.display()));
        let Ok(cli) = parse(argv) else { panic!("parse failed") };
        let Command::Simulate(a) = cli.command else { panic!("wrong command") };
        assert_eq!((a.dist.as_str(), a.num_auctions, a.seed), ("gamma:10,2", 7, 9));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "colour=blue\n").unwrap();
        let argv = args(&format!("auction-valuation simulate --config {} --dist uniform:0,1 --out x", conf.display()));
        assert!(matches!(parse(argv), Err(ParseFailure::Config(_))));
    }

    #[test]
    fn provenance_round_trips_through_config() {
        let argv = args("auction-valuation estimate --data d.csv --out c.csv --unconstrained --q 0.3 --mc-reps 50");
        let Ok(cli) = parse(argv) else { panic!("parse failed") };
        let Command::Estimate(a) = &cli.command else { panic!("wrong command") };
        let prov = provenance("estimate", a);
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("again.conf");
        let text: String = prov.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(&conf, text).unwrap();
        let Ok(again) = parse(args(&format!("auction-valuation estimate --config {}", conf.display()))) else {
            panic!("reparse failed")
        };
        let Command::Estimate(b) = &again.command else { panic!("wrong command") };
        assert_eq!(provenance("estimate", b), prov);
    }
}
