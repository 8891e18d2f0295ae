mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(name = "knotsaw", version, about = "Knot-aware sawing-angle optimization for scanned logs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Global {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic logs (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log: point cloud plus ground truth.
    Generate(commands::GenerateArgs),
    /// Fit a height map to a point cloud.
    Heightmap(commands::HeightmapArgs),
    /// Align two scans with ICP and optionally transfer labels.
    Register(commands::RegisterArgs),
    /// LoG knot detection on a height map.
    Detect(commands::DetectArgs),
    /// Knot function of a probability map.
    Knotfn(commands::KnotfnArgs),
    /// Sawing angle minimizing knot mass on board corners.
    Optimize(commands::OptimizeArgs),
    /// Virtually saw a synthetic log at one angle.
    Saw(commands::SawArgs),
    /// mAP of detections against ground truth.
    Evaluate(commands::EvaluateArgs),
    /// Full pipeline from scan to sawing report, for one log or a batch.
    Pipeline(pipeline::PipelineArgs),
}

/// A failure tagged with the stage it came from, printed as JSON on stderr.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &str, kind: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            kind: kind.to_string(),
            message: message.into(),
        }
    }

    fn to_json(&self) -> String {
        serde_json::json!({ "stage": self.stage, "kind": self.kind, "message": self.message }).to_string()
    }
}

pub type CliResult<T> = Result<T, StageError>;

/// Tags errors with a stage name.
pub trait AtStage<T> {
    fn at(self, stage: &str) -> CliResult<T>;
}

impl<T> AtStage<T> for knotsaw_core::Result<T> {
    fn at(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| StageError::new(stage, e.kind(), e.to_string()))
    }
}

impl<T> AtStage<T> for std::io::Result<T> {
    fn at(self, stage: &str) -> CliResult<T> {
        self.map_err(|e| StageError::new(stage, "IOError", e.to_string()))
    }
}

fn load_config(g: &Global) -> CliResult<Config> {
    let mut c = match &g.config {
        Some(p) => Config::load(p).at("config")?,
        None => Config::default(),
    };
    for kv in &g.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| StageError::new("config", "InvalidParams", format!("--set `{kv}` is not KEY=VALUE")))?;
        c.set(k.trim(), v).at("config")?;
    }
    if let Some(seed) = g.seed {
        c.gen.seed = seed;
    }
    c.validate().at("config")?;
    Ok(c)
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.global.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.jobs)
            .build_global()
            .map_err(|e| StageError::new("config", "InvalidInput", e.to_string()))?;
    }
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Generate(a) => commands::generate(&cfg, &a),
        Command::Heightmap(a) => commands::heightmap(&cfg, &a),
        Command::Register(a) => commands::register(&cfg, &a),
        Command::Detect(a) => commands::detect(&cfg, &a),
        Command::Knotfn(a) => commands::knotfn(&a),
        Command::Optimize(a) => commands::optimize(&cfg, &a),
        Command::Saw(a) => commands::saw(&cfg, &a),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a),
        Command::Pipeline(a) => pipeline::run(&cfg, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
