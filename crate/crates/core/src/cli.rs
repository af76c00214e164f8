//! The `submax` command line.
//!
//! Every subcommand writes its result to `--out` (or stdout) and a
//! provenance record to `<out>.provenance.json` (or one `provenance:` line on
//! stderr). Exit codes are [`EXIT_OK`], [`EXIT_BATCH`], [`EXIT_SOLVER`],
//! [`EXIT_USAGE`] and [`EXIT_DATA`].

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{self, SimulationOptions};
use crate::io::{read_matrix, write_matrix, MatrixFormat};
use crate::matrix::{embed_signal, gaussian_matrix, PlantedSignal, SubmatrixIndex};
use crate::rng;
use crate::search::{self, SearchConfig, StatisticMode, DEFAULT_MAX_ITERS};
use crate::significance::{self, DEFAULT_LEVEL};
use crate::thresholds::{
    self, RootPolicy, ThresholdQuery, DEFAULT_EPSILON, DEFAULT_LOWER_CONSTANT,
};

pub const EXIT_OK: i32 = 0;
/// Every row of a batch failed, or a checked invariant did not hold.
pub const EXIT_BATCH: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;

#[derive(Debug, Parser)]
#[command(
    name = "submax",
    version,
    about = "Thresholds, bounds and search for large-average submatrices"
)]
pub struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output format (each command has its own default).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file (default stdout).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long, global = true, env = "SUBMAX_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size thresholds and tail bounds.
    Threshold(ThresholdArgs),
    /// Bonferroni-style significance of an observed block.
    Significance(SignificanceArgs),
    /// Search a matrix file for a large-average block.
    Search(SearchArgs),
    /// Monte Carlo simulation of block size against average.
    Simulate(SimulateArgs),
    /// Planted-signal singular value experiment.
    Spectral(SpectralArgs),
    /// Scan the χ² left/right tail comparison.
    Chi2check(Chi2Args),
    /// Recompute a simulation CSV and compare it byte for byte.
    Replay(ReplayArgs),
    /// Write a Gaussian matrix, optionally with a planted block.
    Generate(GenerateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub tau: f64,
    /// Matrix aspect ratio (rectangular mode when --alpha or --beta is given).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Block aspect ratio, at least 1.
    #[arg(long)]
    pub beta: Option<f64>,
    /// ANOVA thresholds; needs 0 < tau < 1.
    #[arg(long)]
    pub anova: bool,
    /// Additive constant of the rectangular average threshold. The
    /// rectangular thresholds are only determined up to this constant.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c1: f64,
    /// Additive constant of the rectangular ANOVA threshold.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c2: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Offset above the threshold at which the tail bound is evaluated.
    #[arg(long, default_value_t = 1)]
    pub r: u64,
    /// Accept the smallest root in (0, n) when the bracket has none.
    #[arg(long)]
    pub widen: bool,
    /// Lower-end constant of the concentration interval (above 8 ln 2).
    #[arg(long, default_value_t = DEFAULT_LOWER_CONSTANT)]
    pub lower_constant: f64,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("statistic").required(true).args(["avg", "anova_residual"])))]
pub struct SignificanceArgs {
    /// Matrix columns.
    #[arg(long)]
    pub n: usize,
    /// Matrix rows (default n).
    #[arg(long)]
    pub m: Option<usize>,
    /// Block rows.
    #[arg(long)]
    pub k: usize,
    /// Block columns (default k).
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub avg: Option<f64>,
    #[arg(long)]
    pub anova_residual: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Matrix file, CSV or GRMMAT01 binary.
    #[arg(long)]
    pub input: PathBuf,
    /// Skip a CSV header row.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub k: usize,
    /// Block columns (default k).
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Exhaustive enumeration instead of the alternating search.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Matrix columns (and rows for square runs).
    #[arg(long)]
    pub n: usize,
    /// Block sizes: a range `1..30` or a list `5,10,15`.
    #[arg(long, value_parser = parse_ks, required_unless_present = "validate_bounds")]
    pub k: Option<KList>,
    #[arg(long, default_value_t = 100)]
    pub restarts: usize,
    /// Rectangular run: matrix has ceil(alpha n) rows.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Rectangular run: blocks are ceil(beta k) x k.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c1: f64,
    #[arg(long, default_value_t = DEFAULT_LOWER_CONSTANT)]
    pub lower_constant: f64,
    /// Only averages above this enter the plot data.
    #[arg(long, default_value_t = 0.5)]
    pub min_tau: f64,
    /// Record wall time per row (makes output run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Also write the tidy (tau, k, series) plot table here.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    /// Exhaustive bound validation at small n instead of a search run.
    #[arg(long)]
    pub validate_bounds: bool,
    /// Threshold average (bound validation).
    #[arg(long, requires = "validate_bounds")]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 1000, requires = "validate_bounds")]
    pub trials: usize,
    /// Validate the ANOVA bound instead of the average bound.
    #[arg(long, requires = "validate_bounds")]
    pub anova: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KList(pub Vec<usize>);

/// Parses `a..b`, `a..=b` (both inclusive), `a,b,c` or a single integer.
pub fn parse_ks(s: &str) -> std::result::Result<KList, String> {
    let bad = |_| format!("cannot parse block sizes {s:?}");
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(bad)?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(bad)?;
        if a > b {
            return Err(format!("empty range {s:?}"));
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(bad))
            .collect::<std::result::Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(format!("block sizes must be positive: {s:?}"));
    }
    Ok(KList(ks))
}

#[derive(Debug, Args, Serialize)]
pub struct SpectralArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Chi2Args {
    #[arg(long, default_value_t = 50)]
    pub ell_max: u64,
    #[arg(long, default_value_t = 20)]
    pub grid_points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    /// Simulation CSV to replay.
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    /// Planted block rows (0 for none).
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub amplitude: f64,
}

/// Fully resolved configuration of a run.
#[derive(Debug, Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    command: &'static str,
    seed: u64,
    threads: Option<usize>,
    format: Option<Format>,
    out: Option<&'a Path>,
    args: Value,
    derived_seeds: BTreeMap<String, u64>,
}

/// What a command produced: the bytes for `--out`, seeds it derived and
/// the exit code.
struct Output {
    bytes: Vec<u8>,
    derived_seeds: BTreeMap<String, u64>,
    code: i32,
}

impl Output {
    fn ok(bytes: Vec<u8>) -> Self {
        Output {
            bytes,
            derived_seeds: BTreeMap::new(),
            code: EXIT_OK,
        }
    }
}

/// Maps a library error to an exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Domain(_) | Error::BudgetExceeded { .. } => EXIT_USAGE,
        Error::NoRoot { .. } | Error::NoConvergence { .. } => EXIT_SOLVER,
        Error::Data(_) | Error::Io(_) => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();

    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument(
            "--threads must be at least 1".into(),
        )),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Io(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("submax: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = finish(&cli, argv, &output) {
        eprintln!("submax: {e}");
        return exit_code(&e);
    }
    output.code
}

fn finish(cli: &Cli, argv: Vec<String>, output: &Output) -> Result<()> {
    let (command, args) = describe(&cli.command);
    let provenance = Provenance {
        tool: "submax",
        version: env!("CARGO_PKG_VERSION"),
        argv,
        command,
        seed: cli.seed,
        threads: cli.threads,
        format: cli.format,
        out: cli.out.as_deref(),
        args,
        derived_seeds: output.derived_seeds.clone(),
    };
    match &cli.out {
        Some(path) => {
            fs::write(path, &output.bytes)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let mut side = path.clone().into_os_string();
            side.push(".provenance.json");
            let mut buf = Vec::new();
            experiments::write_json(&provenance, &mut buf)?;
            fs::write(&side, buf).map_err(|e| Error::Io(e.to_string()))?;
        }
        None => {
            io::stdout().write_all(&output.bytes)?;
            io::stdout().flush()?;
            let line = serde_json::to_string(&provenance).map_err(|e| Error::Io(e.to_string()))?;
            eprintln!("provenance: {line}");
        }
    }
    Ok(())
}

fn describe(cmd: &Command) -> (&'static str, Value) {
    let v = |a: &dyn erased::Ser| a.to_value();
    match cmd {
        Command::Threshold(a) => ("threshold", v(a)),
        Command::Significance(a) => ("significance", v(a)),
        Command::Search(a) => ("search", v(a)),
        Command::Simulate(a) => ("simulate", v(a)),
        Command::Spectral(a) => ("spectral", v(a)),
        Command::Chi2check(a) => ("chi2check", v(a)),
        Command::Replay(a) => ("replay", v(a)),
        Command::Generate(a) => ("generate", v(a)),
    }
}

mod erased {
    pub trait Ser {
        fn to_value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Ser for T {
        fn to_value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Threshold(a) => cmd_threshold(a, cli.format.unwrap_or(Format::Json)),
        Command::Significance(a) => cmd_significance(a, cli.format.unwrap_or(Format::Json)),
        Command::Search(a) => cmd_search(a, cli.seed),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, cli.format.unwrap_or(Format::Csv)),
        Command::Spectral(a) => cmd_spectral(a, cli.seed, cli.format.unwrap_or(Format::Csv)),
        Command::Chi2check(a) => cmd_chi2check(a, cli.format),
        Command::Replay(a) => cmd_replay(a, cli.format.unwrap_or(Format::Json)),
        Command::Generate(a) => cmd_generate(a, cli.seed, cli.out.as_deref()),
    }
}

/// One flat record, as a JSON object or a two-line CSV.
fn render_object(obj: Map<String, Value>, format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Json => experiments::write_json(&obj, &mut buf)?,
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut buf);
            w.write_record(obj.keys())?;
            w.write_record(obj.values().map(|v| match v {
                Value::Null => String::new(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }))?;
            w.flush()?;
        }
    }
    Ok(buf)
}

fn render_rows<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Json => experiments::write_json(rows, &mut buf)?,
        Format::Csv => experiments::write_csv(rows, &mut buf)?,
    }
    Ok(buf)
}

fn object(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn cmd_threshold_value(a: &ThresholdArgs) -> Result<Map<String, Value>> {
    let rect = a.alpha.is_some() || a.beta.is_some();
    let q = ThresholdQuery::new(a.n, a.tau)
        .alpha(a.alpha.unwrap_or(1.0))
        .beta(a.beta.unwrap_or(1.0))
        .epsilon(a.epsilon)
        .r(a.r);
    let bound_pairs =
        |b: thresholds::Bound| vec![("bound", json!(b.value)), ("log_bound", json!(b.log_value))];
    let mut pairs = vec![("n", json!(a.n)), ("tau", json!(a.tau)), ("r", json!(a.r))];
    match (rect, a.anova) {
        (false, false) => {
            let policy = if a.widen {
                RootPolicy::Widen
            } else {
                RootPolicy::Strict
            };
            let root = thresholds::solve_s_with(a.n, a.tau, policy)?;
            let interval =
                thresholds::theorem1_interval_with(a.n, a.tau, a.lower_constant, policy)?;
            pairs.extend([
                ("s_root", json!(root.s)),
                ("root_regime", json!(root.regime)),
                ("s_asymptotic", json!(thresholds::asymptotic_s(a.n, a.tau)?)),
                ("interval_lower", json!(interval.lower)),
                ("interval_upper", json!(interval.upper)),
            ]);
            pairs.extend(bound_pairs(thresholds::prob_bound_avg(&q)?));
        }
        (false, true) => {
            q.validate_anova()?;
            pairs.extend([
                ("h", json!(thresholds::h_of_tau(a.tau)?)),
                ("t", json!(thresholds::anova_threshold(a.n, a.tau)?)),
            ]);
            pairs.extend(bound_pairs(thresholds::prob_bound_anova(&q)?));
        }
        (true, false) => {
            pairs.extend([
                ("alpha", json!(q.alpha)),
                ("beta", json!(q.beta)),
                ("c1", json!(a.c1)),
                (
                    "rect_threshold",
                    json!(thresholds::rect_avg_threshold(&q, a.c1)?),
                ),
            ]);
            pairs.extend(bound_pairs(thresholds::rect_avg_bound(&q)?));
        }
        (true, true) => {
            q.validate_anova()?;
            pairs.extend([
                ("alpha", json!(q.alpha)),
                ("beta", json!(q.beta)),
                ("c2", json!(a.c2)),
                (
                    "rect_anova_threshold",
                    json!(thresholds::rect_anova_threshold(&q, a.c2)?),
                ),
            ]);
            pairs.extend(bound_pairs(thresholds::rect_anova_bound(&q)?));
        }
    }
    Ok(object(pairs))
}

fn cmd_threshold(a: &ThresholdArgs, format: Format) -> Result<Output> {
    Ok(Output::ok(render_object(cmd_threshold_value(a)?, format)?))
}

fn cmd_significance(a: &SignificanceArgs, format: Format) -> Result<Output> {
    let m = a.m.unwrap_or(a.n);
    let l = a.l.unwrap_or(a.k);
    let report = match (a.avg, a.anova_residual) {
        (Some(avg), None) => significance::average_significance(m, a.n, a.k, l, avg, a.level)?,
        (None, Some(res)) => significance::anova_significance(m, a.n, a.k, l, res, a.level)?,
        _ => {
            return Err(Error::InvalidArgument(
                "give exactly one of --avg and --anova-residual".into(),
            ))
        }
    };
    let bytes = match format {
        Format::Json => {
            let mut buf = Vec::new();
            experiments::write_json(&report, &mut buf)?;
            buf
        }
        Format::Csv => {
            let mut obj = match serde_json::to_value(&report) {
                Ok(Value::Object(o)) => o,
                _ => Map::new(),
            };
            let cf = obj.remove("closed_form");
            let cf = cf.as_ref().and_then(Value::as_object);
            let field = |k: &str| cf.and_then(|c| c.get(k)).cloned().unwrap_or(Value::Null);
            let cf_bound = cf.and_then(|c| c.get("bound")).and_then(Value::as_object);
            obj.insert("closed_form_shape".into(), field("shape"));
            obj.insert("closed_form_threshold".into(), field("threshold"));
            obj.insert("closed_form_r".into(), field("r"));
            obj.insert(
                "closed_form_log_bound".into(),
                cf_bound
                    .and_then(|b| b.get("log_value"))
                    .cloned()
                    .unwrap_or(Value::Null),
            );
            render_object(obj, Format::Csv)?
        }
    };
    Ok(Output::ok(bytes))
}

fn cmd_search(a: &SearchArgs, seed: u64) -> Result<Output> {
    let w = read_matrix(&a.input, a.header)?;
    let l = a.l.unwrap_or(a.k);
    let mut value = if a.exact {
        let (index, average) = search::exhaustive_max_average(&w, a.k, l)?;
        json!({
            "method": "exhaustive",
            "rows": index.rows(),
            "cols": index.cols(),
            "average": average,
        })
    } else {
        let cfg = SearchConfig::new(a.k, l, a.restarts, seed).with_max_iters(a.max_iters);
        let result = search::multi_restart_search(&w, &cfg)?;
        let mut v = serde_json::to_value(&result).map_err(|e| Error::Io(e.to_string()))?;
        v["method"] = json!("alternating");
        v
    };
    let average = value["average"].as_f64().unwrap_or(f64::NAN);
    let sig = significance::average_significance(w.rows(), w.cols(), a.k, l, average, a.level)?;
    value["significance"] = serde_json::to_value(&sig).map_err(|e| Error::Io(e.to_string()))?;
    let mut bytes = Vec::new();
    experiments::write_json(&value, &mut bytes)?;
    let mut out = Output::ok(bytes);
    if !a.exact {
        out.derived_seeds.insert("restart_i".into(), seed);
        out.derived_seeds
            .insert("restart_0".into(), rng::split(seed, 0));
    }
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, format: Format) -> Result<Output> {
    if a.validate_bounds {
        let tau = a
            .tau
            .ok_or_else(|| Error::InvalidArgument("--validate-bounds needs --tau".into()))?;
        let mode = if a.anova {
            StatisticMode::Anova
        } else {
            StatisticMode::Average
        };
        let report = experiments::run_bound_validation(a.n, tau, a.trials, seed, mode)?;
        let bytes = match format {
            Format::Json => {
                let mut buf = Vec::new();
                experiments::write_json(&report, &mut buf)?;
                buf
            }
            Format::Csv => render_rows(&report.rows, Format::Csv)?,
        };
        let mut out = Output::ok(bytes);
        out.code = if report.all_ok() { EXIT_OK } else { EXIT_BATCH };
        out.derived_seeds
            .insert("trial_0".into(), rng::split(seed, 0));
        return Ok(out);
    }

    let ks = &a.k.as_ref().expect("clap requires --k").0;
    let opts = SimulationOptions {
        record_timing: a.timing,
        lower_constant: a.lower_constant,
        min_tau: Some(a.min_tau),
    };
    let records = if a.alpha.is_some() || a.beta.is_some() {
        let (alpha, beta) = (a.alpha.unwrap_or(1.0), a.beta.unwrap_or(1.0));
        experiments::run_rect_simulation(a.n, alpha, beta, ks, a.restarts, seed, a.c1, &opts)?
    } else {
        experiments::run_square_simulation(a.n, ks, a.restarts, seed, &opts)?
    };
    if let Some(path) = &a.plot_data {
        let points = experiments::plot_data(&records, &opts)?;
        let mut buf = Vec::new();
        experiments::write_csv(&points, &mut buf)?;
        fs::write(path, buf).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            experiments::write_records_csv(&records, &mut buf)?;
            buf
        }
        Format::Json => render_rows(&records, Format::Json)?,
    };
    let mut out = Output::ok(bytes);
    for r in &records {
        out.derived_seeds.insert(format!("k={}", r.l), r.seed);
    }
    if records.iter().all(|r| r.error.is_some()) {
        out.code = EXIT_BATCH;
    }
    Ok(out)
}

fn cmd_spectral(a: &SpectralArgs, seed: u64, format: Format) -> Result<Output> {
    let l = a.l.unwrap_or(a.k);
    let records =
        experiments::run_spectral_experiment(a.n, a.alpha, a.k, l, a.amplitude, a.trials, seed)?;
    let mut out = Output::ok(render_rows(&records, format)?);
    for r in &records {
        out.derived_seeds
            .insert(format!("trial={}", r.trial), r.seed);
    }
    if records.iter().any(|r| !r.ok) {
        out.code = EXIT_BATCH;
    }
    Ok(out)
}

fn cmd_chi2check(a: &Chi2Args, format: Option<Format>) -> Result<Output> {
    let report = experiments::run_chi2_lemma_scan(a.ell_max, a.grid_points)?;
    let bytes = match format {
        Some(Format::Json) => {
            let mut buf = Vec::new();
            experiments::write_json(&report, &mut buf)?;
            buf
        }
        Some(Format::Csv) => render_rows(&report.violations, Format::Csv)?,
        None => format!("{}\n", report.summary()).into_bytes(),
    };
    let mut out = Output::ok(bytes);
    if !report.violations.is_empty() {
        out.code = EXIT_BATCH;
    }
    Ok(out)
}

fn cmd_replay(a: &ReplayArgs, format: Format) -> Result<Output> {
    let file =
        fs::File::open(&a.input).map_err(|e| Error::Io(format!("{}: {e}", a.input.display())))?;
    let records = experiments::read_records_csv(file)?;
    let report = experiments::replay(&records)?;
    let bytes = match format {
        Format::Json => {
            let mut buf = Vec::new();
            experiments::write_json(&report, &mut buf)?;
            buf
        }
        Format::Csv => render_object(
            object(vec![
                ("total", json!(report.total)),
                ("matched", json!(report.matched)),
                ("mismatched", json!(report.mismatches.len())),
            ]),
            Format::Csv,
        )?,
    };
    let mut out = Output::ok(bytes);
    if !report.is_exact() {
        out.code = EXIT_BATCH;
    }
    Ok(out)
}

fn cmd_generate(a: &GenerateArgs, seed: u64, out: Option<&Path>) -> Result<Output> {
    let path = out.ok_or_else(|| Error::InvalidArgument("generate needs --out".into()))?;
    let mut w = gaussian_matrix(a.m, a.n, rng::split(seed, 0))?;
    let l = a.l.unwrap_or(a.k);
    let planted = if a.k > 0 {
        if a.k > a.m || l == 0 || l > a.n {
            return Err(Error::InvalidArgument(format!(
                "a {}x{l} block does not fit",
                a.k
            )));
        }
        let mut picker = rng::chacha(rng::split(seed, 1));
        let rows = sample(&mut picker, a.m, a.k).into_vec();
        let cols = sample(&mut picker, a.n, l).into_vec();
        let index = SubmatrixIndex::new(rows, cols)?;
        w = embed_signal(&w, &PlantedSignal::new(index.clone(), a.amplitude)?)?;
        Some(index)
    } else {
        None
    };
    write_matrix(&w, path, MatrixFormat::from_path(path))?;
    // The matrix goes to --out; the sidecar then describes it.
    let description = json!({ "m": a.m, "n": a.n, "amplitude": a.amplitude, "planted": planted });
    let mut bytes = Vec::new();
    experiments::write_json(&description, &mut bytes)?;
    io::stderr().write_all(&bytes)?;
    let mut out = Output::ok(fs::read(path)?);
    out.derived_seeds
        .insert("matrix".into(), rng::split(seed, 0));
    out.derived_seeds
        .insert("planted".into(), rng::split(seed, 1));
    Ok(out)
}
