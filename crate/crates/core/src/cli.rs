//! Command-line front end: `detect`, `trace`, `generate` and `bench`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::detector::{
    default_threshold, default_window, detect, resolve_config, DetectError, DetectionReport,
    DetectorConfig,
};
use crate::evaluation::{
    metrics_csv, run_replications, scenario_grid, BenchCell, MetricRow, ScenarioId,
};
use crate::generator::{build_scenario, build_toy, GeneratorError, GroundTruth};
use crate::netdata::{
    parse_graph_sequence, sequence_sparsity_estimate, GraphSequence, NetDataError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "subtrack",
    version,
    about = "Subspace change-point detection for dynamic networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect change points in a DNET file and write a JSON report.
    Detect(DetectArgs),
    /// Write the per-window statistic trace of a DNET file as CSV.
    Trace(TraceArgs),
    /// Simulate a dynamic block-model sequence.
    Generate(GenerateArgs),
    /// Run seeded replications of a scenario grid.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct TuningArgs {
    /// Window length L.
    #[arg(long)]
    pub window: Option<usize>,
    /// Eigenvalue threshold b.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Tune L and b from the data (the default when neither is given).
    #[arg(long, conflicts_with_all = ["window", "threshold"])]
    pub auto: bool,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the statistic trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// I, II, III or toy.
    #[arg(long, default_value = "I")]
    pub scenario: String,
    /// Swept parameter value, e.g. `0.1`, `1/10` or `80/n`.
    #[arg(long)]
    pub param: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long = "T", default_value_t = 200)]
    pub t_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// DNET output path; the truth sidecar goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// I, II or III.
    #[arg(long)]
    pub scenario: String,
    /// Restrict the grid to these values (repeatable).
    #[arg(long)]
    pub param: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Defaults to 200 for scenarios I and II and 150 for III.
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: NetDataError },
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Generate(#[from] GeneratorError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Detect(DetectError::DegenerateRank { .. } | DetectError::TooShort { .. }) => {
                EXIT_DEGENERATE
            }
            _ => EXIT_USAGE,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `0.1`, `1/10` or `80/n`.
pub fn parse_param(s: &str, n: usize) -> std::result::Result<f64, String> {
    let s = s.trim();
    let number = |x: &str| -> std::result::Result<f64, String> {
        let x = x.trim();
        if x == "n" {
            return Ok(n as f64);
        }
        x.parse::<f64>()
            .map_err(|_| format!("invalid parameter value `{s}`"))
    };
    let value = match s.split_once('/') {
        Some((num, den)) => number(num)? / number(den)?,
        None => number(s)?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("invalid parameter value `{s}`"))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_output_parent(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "parent directory does not exist",
            ),
        })
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, contents.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn read_sequence(path: &Path) -> Result<GraphSequence> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_graph_sequence(BufReader::new(file)).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn config_for(g: &GraphSequence, tuning: &TuningArgs) -> Result<DetectorConfig> {
    if tuning.auto || (tuning.window.is_none() && tuning.threshold.is_none()) {
        return Ok(resolve_config(g, None)?);
    }
    let window = tuning.window.unwrap_or_else(|| default_window(g.len()));
    let threshold = match tuning.threshold {
        Some(b) => b,
        None => {
            let rho = sequence_sparsity_estimate(g);
            default_threshold(g.n(), g.len(), window, rho)
        }
    };
    let config = DetectorConfig::new(window, threshold);
    config.validate()?;
    Ok(config)
}

fn run_detection(input: &Path, tuning: &TuningArgs) -> Result<DetectionReport> {
    let g = read_sequence(input)?;
    let config = config_for(&g, tuning)?;
    log::info!(
        "n={} T={} window={} threshold={}",
        g.n(),
        g.len(),
        config.window,
        config.threshold
    );
    let report = detect(&g, Some(config))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    for p in args.out.iter().chain(args.trace.iter()) {
        check_output_parent(p)?;
    }
    let report = run_detection(&args.input, &args.tuning)?;
    let trace_path = args
        .trace
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned());
    if let Some(p) = &args.trace {
        write_atomic(p, report.trace.to_csv().as_bytes())?;
    }
    emit(args.out.as_deref(), &report.to_json(trace_path.as_deref()))
}

fn cmd_trace(args: &TraceArgs) -> Result<()> {
    if let Some(p) = &args.out {
        check_output_parent(p)?;
    }
    let report = run_detection(&args.input, &args.tuning)?;
    emit(args.out.as_deref(), &report.trace.to_csv())
}

#[derive(Serialize)]
struct TruthSidecar<'a> {
    scenario: &'a str,
    n: usize,
    #[serde(rename = "T")]
    t_len: usize,
    seed: u64,
    change_points: &'a [usize],
    segment_ranks: Vec<usize>,
    labels: &'a [Vec<usize>],
}

/// `dir/name.truth.json` for `dir/name.ext`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    out.with_file_name(format!("{stem}.truth.json"))
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    check_output_parent(&args.out)?;
    let (name, truth, g): (&str, GroundTruth, GraphSequence) =
        if args.scenario.eq_ignore_ascii_case("toy") {
            if args.param.is_some() {
                return Err(CliError::Usage(
                    "--param does not apply to the toy model".into(),
                ));
            }
            let (truth, g) = build_toy(args.seed)?;
            ("toy", truth, g)
        } else {
            let id = ScenarioId::parse(&args.scenario)
                .ok_or_else(|| CliError::Usage(format!("unknown scenario `{}`", args.scenario)))?;
            let value = match &args.param {
                Some(p) => parse_param(p, args.n).map_err(CliError::Usage)?,
                None => id.default_grid(args.n)[0],
            };
            let (truth, g) = build_scenario(&id.params(args.n, args.t_len, value, args.seed))?;
            (id.name(), truth, g)
        };
    let sidecar = TruthSidecar {
        scenario: name,
        n: truth.n(),
        t_len: truth.len(),
        seed: args.seed,
        change_points: truth.change_points(),
        segment_ranks: truth.segment_ranks(),
        labels: truth.labels(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');
    write_atomic(&args.out, g.to_dnet().as_bytes())?;
    write_atomic(&sidecar_path(&args.out), json.as_bytes())?;
    log::info!("wrote {} layers, {} edges", g.len(), g.total_edges());
    Ok(())
}

fn summary_table(rows: &[MetricRow]) -> String {
    let mut s = format!(
        "{:<10} {:<8} {:>16} {:>16} {:>4} {:>8}\n",
        "param", "method", "|K-K*|", "Hausdorff", "R", "failures"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<10.4} {:<8} {:>7.3} ({:>6.3}) {:>7.3} ({:>6.3}) {:>4} {:>8}\n",
            r.param,
            r.method.name(),
            r.count_mean,
            r.count_se,
            r.haus_mean,
            r.haus_se,
            r.reps,
            r.failures
        ));
    }
    s
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let id = ScenarioId::parse(&args.scenario)
        .ok_or_else(|| CliError::Usage(format!("unknown scenario `{}`", args.scenario)))?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if !args.out_dir.is_dir() {
        return Err(CliError::Io {
            path: args.out_dir.clone(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        });
    }
    let t_len = args
        .t_len
        .unwrap_or(if id == ScenarioId::III { 150 } else { 200 });
    let mut cells = scenario_grid(id, args.n, t_len);
    if !args.param.is_empty() {
        let values = args
            .param
            .iter()
            .map(|p| parse_param(p, args.n))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(CliError::Usage)?;
        cells = values
            .into_iter()
            .map(|param| BenchCell {
                scenario: id,
                n: args.n,
                t_len,
                param,
            })
            .collect();
    }
    for cell in &cells {
        cell.params(0).validate()?;
    }
    let rows = run_replications(&cells, args.reps, args.seed);
    for r in rows.iter().filter(|r| r.failures > 0) {
        log::warn!(
            "param {}: {} of {} replications failed",
            r.param,
            r.failures,
            args.reps
        );
    }
    let base = args.out_dir.join(format!("scenario_{}", id.name()));
    write_atomic(&base.with_extension("csv"), metrics_csv(&rows).as_bytes())?;
    let mut json = serde_json::to_string_pretty(&rows).expect("rows serialize");
    json.push('\n');
    write_atomic(&base.with_extension("json"), json.as_bytes())?;
    emit(None, &summary_table(&rows))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_forms() {
        assert_eq!(parse_param("0.1", 100).unwrap(), 0.1);
        assert_eq!(parse_param("1/10", 100).unwrap(), 0.1);
        assert_eq!(parse_param("80/n", 100).unwrap(), 0.8);
        assert!(parse_param("abc", 100).is_err());
        assert!(parse_param("1/0", 100).is_err());
    }

    #[test]
    fn sidecar_next_to_output() {
        assert_eq!(
            sidecar_path(Path::new("a/b/seq.dnet")),
            PathBuf::from("a/b/seq.truth.json")
        );
        assert_eq!(
            sidecar_path(Path::new("seq")),
            PathBuf::from("seq.truth.json")
        );
    }

    #[test]
    fn auto_conflicts_with_window() {
        assert!(
            Cli::try_parse_from(["subtrack", "detect", "x", "--auto", "--window", "3"]).is_err()
        );
        assert!(Cli::try_parse_from(["subtrack", "detect", "x", "--bogus"]).is_err());
    }
}
