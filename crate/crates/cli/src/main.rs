use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use scenegen_core::codegen::CodegenMode;
use scenegen_core::config::BackendKind;
use scenegen_core::scene_json::SCHEMA_VERSION;

mod commands;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VERIFY_FAILED: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "scenegen", version, about = "Industrial scene layouts from natural-language descriptions")]
pub struct Cli {
    /// TOML config file; repeatable, later files win. Defaults to ./scenegen.toml when present.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Vec<PathBuf>,

    /// Model backend. Overrides config and SCENEGEN_BACKEND.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,

    /// Run seed; every module derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Log level for stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Backend {
    Scripted,
    Network,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Scripted => BackendKind::Scripted,
            Backend::Network => BackendKind::Network,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Codegen {
    Deterministic,
    Llm,
}

impl From<Codegen> for CodegenMode {
    fn from(c: Codegen) -> Self {
        match c {
            Codegen::Deterministic => CodegenMode::Deterministic,
            Codegen::Llm => CodegenMode::Llm,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Description to scene JSON, optionally C# and SVG.
    Generate(GenerateArgs),
    /// Check a scene file against its description; prints the report as JSON.
    Verify(VerifyArgs),
    /// Grow a description pool from seeds.
    Evolve(EvolveArgs),
    /// Collect assign/verify/reassign conversations from a pool.
    Collect(CollectArgs),
    /// Run a description suite and report pass@k per category.
    Bench(BenchArgs),
    /// Draw a scene file as SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Description text; use --file to read it from a file instead.
    pub description: Option<String>,
    #[arg(long, value_name = "FILE", conflicts_with = "description")]
    pub file: Option<PathBuf>,
    /// Scene JSON output.
    #[arg(long, default_value = "scene.json")]
    pub out: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub emit_cs: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub emit_svg: Option<PathBuf>,
    /// How C# is produced when --emit-cs is given.
    #[arg(long, value_enum, default_value = "deterministic")]
    pub codegen: Codegen,
    /// Write every intermediate artifact as JSON.
    #[arg(long, value_name = "PATH")]
    pub dump_stages: Option<PathBuf>,
    /// Feedback rounds after the first placement.
    #[arg(long)]
    pub max_iters: Option<u32>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub scene: PathBuf,
    /// Check against this text instead of the description stored in the scene.
    #[arg(long)]
    pub description: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// JSONL of {"text": ...} lines or full pool records.
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub target: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Total rewrite attempts (0: 20 per missing description).
    #[arg(long, default_value_t = 0)]
    pub max_iterations: usize,
    /// Duplicate threshold on estimated Jaccard similarity.
    #[arg(long, default_value_t = scenegen_core::evolve::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Error rate of the weak scripted assigner (default from config).
    #[arg(long)]
    pub error_rate: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub validation_fraction: f64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// JSONL of {"id", "description", "category"}.
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub k: u64,
    /// JSON report; the table goes to stdout.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    pub scene: PathBuf,
    #[arg(long, default_value = "scene.svg")]
    pub out: PathBuf,
    /// Pixels per millimetre.
    #[arg(long, default_value_t = scenegen_core::codegen::DEFAULT_SCALE)]
    pub scale: f64,
}

fn after_help() -> String {
    format!(
        "Scene JSON (schema version {SCHEMA_VERSION}):\n  \
         {{\"description\": TEXT, \"objects\": [{{\"name\": TEXT, \"model\": TEXT, \
         \"position\": [X, Y, 0], \"orientation\": DEGREES}}]}}\n  \
         Positions are integer millimetres, +x front, +y left; orientation is \
         counter-clockwise from +x in [0, 360).\n\n\
         Exit codes: 0 ok, 1 usage or I/O error, 2 verification failed, 3 pipeline error.\n\n\
         Environment: SCENEGEN_BACKEND, SCENEGEN_API_BASE, SCENEGEN_API_KEY, SCENEGEN_MODEL \
         override config files."
    )
}

fn main() -> ExitCode {
    // clap exits with 2 on bad usage, which here means a failed verification
    let parsed = Cli::command()
        .after_help(after_help())
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(&cli, argv) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("scenegen: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
