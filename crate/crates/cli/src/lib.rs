//! Command-line front end. Every subcommand is a request to the service:
//! either the one named by `--server` or an embedded instance bound to a
//! loopback port for the duration of the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use kroncd::detectors::{DetectorConfig, DetectorKind};
use kroncd::estimators::FixedPointConfig;
use kroncd::io::{load_mits, save_map, save_mits};
use kroncd::simlab::{MseBenchConfig, RocScenario, StackSpec};
use kroncd::wire::{DetectRequest, ErrorKind, GenStackRequest, MseBenchRequest, RocBenchRequest, WireStack};
use kroncd_client::{Client, ClientError};

pub const FULL_MSE_TRIALS: usize = 1000;
pub const FULL_ROC_TRIALS: usize = 5000;
pub const DEFAULT_MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "kroncd", version, about = "Robust Kronecker-structured change detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads, or `auto`
    #[arg(long, global = true)]
    pub threads: Option<Threads>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Service root URL; an embedded service is started when absent
    #[arg(long, global = true)]
    pub server: Option<String>,

    /// Largest tolerated fraction of failed windows or trials
    #[arg(long, global = true)]
    pub max_failure_rate: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a detection map from an image stack
    Detect(DetectArgs),
    /// Estimation error against the intrinsic Cramér-Rao bound
    MseBench(MseArgs),
    /// ROC curves of the detectors on simulated series
    RocBench(RocArgs),
    /// Write a synthetic image stack
    GenStack(GenStackArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Stack path (`<name>`, `<name>.json` or `<name>.bin`)
    pub stack: PathBuf,
    #[arg(long)]
    pub detector: Option<DetectorKind>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MseArgs {
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated stream lengths
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<usize>>,
    /// Full trial count (1000)
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    /// Restrict to these detectors (repeatable)
    #[arg(long)]
    pub detector: Vec<DetectorKind>,
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated online stream lengths
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    /// Full trial count (5000)
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct GenStackArgs {
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// File stem inside the output directory
    #[arg(long, default_value = "stack")]
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threads {
    Count(usize),
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"auto\" or a count, got {s:?}")))
        }
    }
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
            Ok(k) => Ok(Threads::Count(k)),
        }
    }
}

impl Threads {
    fn count(self) -> Option<usize> {
        match self {
            Threads::Count(k) => Some(k),
            Threads::Auto => None,
        }
    }
}

/// Contents of `--config`. Top-level keys apply to every subcommand and
/// override the per-command sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detector: Option<DetectorKind>,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub window: Option<usize>,
    pub alpha0: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<Threads>,
    pub out: Option<PathBuf>,
    pub max_failure_rate: Option<f64>,
    pub fixed_point: Option<FixedPointConfig>,
    pub mse: Option<MseBenchConfig>,
    pub roc: Option<RocScenario>,
    pub stack: Option<StackSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Internal,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data | ErrorKind::NotFound => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::Internal => 1,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl From<kroncd::Error> for CliError {
    fn from(err: kroncd::Error) -> Self {
        Self {
            kind: ErrorKind::of(&err),
            message: err.to_string(),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(err: ClientError) -> Self {
        Self {
            kind: err.kind().unwrap_or(ErrorKind::Internal),
            message: err.to_string(),
        }
    }
}

fn io_error(path: &Path, err: std::io::Error) -> CliError {
    CliError {
        kind: ErrorKind::Data,
        message: format!("{}: {err}", path.display()),
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Settings shared by all subcommands after merging flags over the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub max_failure_rate: f64,
}

fn resolve_common(cli: &Cli, cfg: &RunConfig) -> Result<Common, CliError> {
    let max_failure_rate = cli
        .max_failure_rate
        .or(cfg.max_failure_rate)
        .unwrap_or(DEFAULT_MAX_FAILURE_RATE);
    if !(0.0..=1.0).contains(&max_failure_rate) {
        return Err(CliError::config(format!(
            "max_failure_rate must lie in [0, 1], got {max_failure_rate}"
        )));
    }
    if let Some(Threads::Count(0)) = cfg.threads {
        return Err(CliError::config("threads must be at least 1"));
    }
    Ok(Common {
        seed: cli.seed.or(cfg.seed),
        threads: cli.threads.or(cfg.threads).and_then(Threads::count),
        out: cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
        max_failure_rate,
    })
}

fn first<T: Copy>(options: &[Option<T>]) -> Option<T> {
    options.iter().copied().flatten().next()
}

fn alpha_checked(alpha0: f64) -> Result<f64, CliError> {
    if alpha0 > 0.0 && alpha0.is_finite() {
        Ok(alpha0)
    } else {
        Err(CliError::config(format!("alpha0 must be positive, got {alpha0}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectPlan {
    pub stack: PathBuf,
    pub detector: DetectorKind,
    pub a: usize,
    pub b: usize,
    pub window: usize,
    pub config: DetectorConfig,
}

pub const DEFAULT_WINDOW: usize = 5;

pub fn resolve_detect(args: &DetectArgs, cfg: &RunConfig) -> Result<DetectPlan, CliError> {
    let roc = RocScenario::default();
    let mut config = DetectorConfig::default();
    if let Some(fp) = cfg.fixed_point {
        config.fixed_point = fp;
    }
    if let Some(alpha0) = first(&[args.alpha0, cfg.alpha0]) {
        config.sgd.alpha0 = alpha_checked(alpha0)?;
    }
    config.validate()?;
    let window = first(&[args.window, cfg.window]).unwrap_or(DEFAULT_WINDOW);
    if window == 0 || window % 2 == 0 {
        return Err(CliError::config(format!("window must be odd, got {window}")));
    }
    Ok(DetectPlan {
        stack: args.stack.clone(),
        detector: first(&[args.detector, cfg.detector]).unwrap_or(DetectorKind::Ksg),
        a: first(&[args.a, cfg.a]).unwrap_or(roc.a),
        b: first(&[args.b, cfg.b]).unwrap_or(roc.b),
        window,
        config,
    })
}

pub fn resolve_mse(args: &MseArgs, common: &Common, cfg: &RunConfig) -> Result<MseBenchConfig, CliError> {
    let mut bench = cfg.mse.clone().unwrap_or_default();
    if let Some(a) = first(&[args.a, cfg.a]) {
        bench.a = a;
    }
    if let Some(b) = first(&[args.b, cfg.b]) {
        bench.b = b;
    }
    if let Some(alpha0) = first(&[args.alpha0, cfg.alpha0]) {
        bench.sgd.alpha0 = alpha_checked(alpha0)?;
    }
    if let Some(fp) = cfg.fixed_point {
        bench.fixed_point = fp;
    }
    if args.full_scale {
        bench.trials = FULL_MSE_TRIALS;
    }
    if let Some(trials) = first(&[args.trials, cfg.trials]) {
        bench.trials = trials;
    }
    if let Some(grid) = &args.t_grid {
        bench.t_grid = grid.clone();
    }
    if let Some(seed) = common.seed {
        bench.seed = seed;
    }
    bench.validate()?;
    Ok(bench)
}

pub fn resolve_roc(args: &RocArgs, common: &Common, cfg: &RunConfig) -> Result<RocScenario, CliError> {
    let mut scenario = cfg.roc.clone().unwrap_or_default();
    if let Some(a) = first(&[args.a, cfg.a]) {
        scenario.a = a;
    }
    if let Some(b) = first(&[args.b, cfg.b]) {
        scenario.b = b;
    }
    if let Some(alpha0) = first(&[args.alpha0, cfg.alpha0]) {
        scenario.detector.sgd.alpha0 = alpha_checked(alpha0)?;
    }
    if let Some(fp) = cfg.fixed_point {
        scenario.detector.fixed_point = fp;
    }
    if !args.detector.is_empty() {
        scenario.detectors = args.detector.clone();
    } else if let Some(kind) = cfg.detector {
        scenario.detectors = vec![kind];
    }
    if args.full_scale {
        scenario.trials = FULL_ROC_TRIALS;
    }
    if let Some(trials) = first(&[args.trials, cfg.trials]) {
        scenario.trials = trials;
    }
    if let Some(horizons) = &args.horizons {
        scenario.horizons = horizons.clone();
    }
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

pub fn resolve_stack(args: &GenStackArgs, common: &Common, cfg: &RunConfig) -> Result<StackSpec, CliError> {
    let mut spec = cfg.stack.clone().unwrap_or_default();
    if let Some(a) = first(&[args.a, cfg.a]) {
        spec.a = a;
    }
    if let Some(b) = first(&[args.b, cfg.b]) {
        spec.b = b;
    }
    if let Some(frames) = args.frames {
        spec.frames = frames;
    }
    if let Some(height) = args.height {
        spec.height = height;
    }
    if let Some(width) = args.width {
        spec.width = width;
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn check_rate(what: &str, failed: usize, total: usize, ceiling: f64) -> Result<(), CliError> {
    let rate = if total == 0 { 0.0 } else { failed as f64 / total as f64 };
    if rate > ceiling {
        Err(CliError::numerical(format!(
            "{failed} of {total} {what} failed ({rate:.3} > ceiling {ceiling})"
        )))
    } else {
        Ok(())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Runs one subcommand against `client`. Returns the summary printed on
/// stdout.
pub async fn execute(cli: &Cli, client: &Client) -> Result<serde_json::Value, CliError> {
    let cfg = match &cli.config {
        Some(path) => load_run_config(path)?,
        None => RunConfig::default(),
    };
    let common = resolve_common(cli, &cfg)?;
    match &cli.command {
        Command::Detect(args) => {
            let plan = resolve_detect(args, &cfg)?;
            let stack = load_mits(&plan.stack).map_err(|e| match e {
                kroncd::Error::Io(io) => io_error(&plan.stack, io),
                e => e.into(),
            })?;
            if plan.a * plan.b != stack.channels() {
                return Err(CliError::config(format!(
                    "a*b = {} but the stack has p = {}",
                    plan.a * plan.b,
                    stack.channels()
                )));
            }
            let req = DetectRequest {
                stack: WireStack::from_stack(&stack),
                detector: plan.detector,
                a: plan.a,
                b: plan.b,
                window: plan.window,
                config: plan.config,
                threads: common.threads,
            };
            let map = client.detect(&req).await?.map.to_map()?;
            ensure_dir(&common.out)?;
            let base = common.out.join("map");
            save_map(&map, &base)?;
            check_rate("windows", map.nan_count(), map.values.len(), common.max_failure_rate)?;
            Ok(json!({
                "command": "detect",
                "detector": plan.detector,
                "rows": map.rows,
                "cols": map.cols,
                "nan_count": map.nan_count(),
                "map": base.with_extension("json"),
            }))
        }
        Command::MseBench(args) => {
            let config = resolve_mse(args, &common, &cfg)?;
            let trials = config.trials;
            let report = client
                .mse_bench(&MseBenchRequest {
                    config,
                    threads: common.threads,
                })
                .await?;
            ensure_dir(&common.out)?;
            let csv = common.out.join("mse.csv");
            write_file(&csv, report.to_csv()?)?;
            write_file(&common.out.join("mse.json"), to_json(&report)?)?;
            check_rate("trials", report.failures, trials, common.max_failure_rate)?;
            Ok(json!({
                "command": "mse-bench",
                "trials_ok": report.trials_ok,
                "failures": report.failures,
                "csv": csv,
            }))
        }
        Command::RocBench(args) => {
            let scenario = resolve_roc(args, &common, &cfg)?;
            let trials = scenario.trials;
            let report = client
                .roc_bench(&RocBenchRequest {
                    scenario,
                    threads: common.threads,
                })
                .await?;
            ensure_dir(&common.out)?;
            let csv = common.out.join("roc.csv");
            write_file(&csv, report.to_csv()?)?;
            write_file(&common.out.join("roc.json"), to_json(&report)?)?;
            let worst = report.curves.iter().map(|c| c.failures).max().unwrap_or(0);
            check_rate("trials", worst, trials, common.max_failure_rate)?;
            let auc: serde_json::Map<String, serde_json::Value> = report
                .curves
                .iter()
                .map(|c| (format!("{}@{}", c.detector, c.horizon), json!(c.auc)))
                .collect();
            Ok(json!({ "command": "roc-bench", "auc": auc, "csv": csv }))
        }
        Command::GenStack(args) => {
            let spec = resolve_stack(args, &common, &cfg)?;
            let stack = client.gen_stack(&GenStackRequest { spec }).await?.stack.to_stack()?;
            ensure_dir(&common.out)?;
            let base = common.out.join(&args.name);
            save_mits(&stack, &base)?;
            Ok(json!({
                "command": "gen-stack",
                "T": stack.frames(),
                "height": stack.height(),
                "width": stack.width(),
                "p": stack.channels(),
                "stack": base.with_extension("json"),
            }))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))
}

/// Runs `cli` against `--server`, or against an embedded service that is shut
/// down before returning.
pub async fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(url) = &cli.server {
        return execute(cli, &Client::new(url.clone())).await;
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| CliError::internal(format!("cannot start embedded service: {e}")))?;
    let addr = listener.local_addr().map_err(|e| CliError::internal(e.to_string()))?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(kroncd_service::serve(listener, async {
        let _ = stopped.await;
    }));
    let result = execute(cli, &Client::new(format!("http://{addr}"))).await;
    let _ = stop.send(());
    let _ = server.await;
    result
}
