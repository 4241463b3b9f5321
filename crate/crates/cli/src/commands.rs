use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenegen_core::analysis::analyze;
use scenegen_core::bench::{read_suite, run_suite, BenchOptions};
use scenegen_core::codegen::emit_svg;
use scenegen_core::config::{BackendKind, Config};
use scenegen_core::engine::verify;
use scenegen_core::evolve::{
    collect_trajectories, evolve, read_pool, write_jsonl, EvolveOptions, MinHashParams, TrajectoryOptions,
    TrajectoryTask,
};
use scenegen_core::llm::{Backend, Gateway, NetworkBackend, ScriptedBackend};
use scenegen_core::manifest::{sub_seed, RunManifest};
use scenegen_core::pipeline::{generate, GenerateOptions};
use scenegen_core::scene::ObjectLibrary;
use scenegen_core::scene_json;
use serde_json::json;
use tracing::{info, warn};

use crate::{
    BenchArgs, Cli, CollectArgs, Command, EvolveArgs, GenerateArgs, RenderArgs, VerifyArgs, EXIT_OK, EXIT_PIPELINE,
    EXIT_USAGE, EXIT_VERIFY_FAILED,
};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.to_string(),
    }
}

fn pipeline(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_PIPELINE,
        message: message.to_string(),
    }
}

type Outcome = Result<u8, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn settings(cli: &Cli) -> Result<Config, Failure> {
    let paths = if cli.config.is_empty() {
        vec![PathBuf::from("scenegen.toml")]
    } else {
        for p in &cli.config {
            if !p.exists() {
                return Err(usage(format!("{}: no such config file", p.display())));
            }
        }
        cli.config.clone()
    };
    let mut cfg = Config::load(&paths, &Config::process_env()).map_err(usage)?;
    if let Some(b) = cli.backend {
        cfg.backend = b.into();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn gateway(cfg: &Config, library: &ObjectLibrary) -> Gateway {
    let backend: Arc<dyn Backend> = match cfg.backend {
        BackendKind::Scripted => Arc::new(ScriptedBackend::new(sub_seed(cfg.seed, "scripted"), library.clone())),
        BackendKind::Network => {
            let mut b = NetworkBackend::new(&cfg.api_base, &cfg.api_key, &cfg.model);
            b.timeout = Duration::from_secs(cfg.timeout_secs);
            Arc::new(b)
        }
    };
    Gateway::new(backend)
        .with_max_in_flight(cfg.max_in_flight)
        .with_max_retries(cfg.max_retries)
}

struct Run {
    manifest: RunManifest,
    path: PathBuf,
}

impl Run {
    fn start(cli: &Cli, argv: Vec<String>, cfg: &Config, backend_id: String, main_output: &Path) -> Self {
        let path = cli
            .manifest
            .clone()
            .unwrap_or_else(|| main_output.with_extension("manifest.json"));
        Self {
            manifest: RunManifest::start(argv, cfg.seed, backend_id),
            path,
        }
    }

    fn output(&mut self, p: &Path) {
        self.manifest.output(p);
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.manifest.finish();
        self.manifest
            .write(&self.path)
            .map_err(|e| usage(format!("{}: {e}", self.path.display())))
    }
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Outcome {
    let cfg = settings(cli)?;
    let library = ObjectLibrary::default();
    match &cli.command {
        Command::Generate(a) => cmd_generate(cli, argv, &cfg, &library, a),
        Command::Verify(a) => cmd_verify(&library, a),
        Command::Evolve(a) => cmd_evolve(cli, argv, &cfg, &library, a),
        Command::Collect(a) => cmd_collect(cli, argv, &cfg, &library, a),
        Command::Bench(a) => cmd_bench(cli, argv, &cfg, &library, a),
        Command::Render(a) => cmd_render(cli, argv, &cfg, a),
    }
}

fn cmd_generate(cli: &Cli, argv: Vec<String>, cfg: &Config, library: &ObjectLibrary, a: &GenerateArgs) -> Outcome {
    let text = match (&a.description, &a.file) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => read_text(f)?,
        (None, None) => return Err(usage("give a description or --file")),
    };
    let gw = gateway(cfg, library);
    let mut run = Run::start(cli, argv, cfg, gw.backend_id(), &a.out);
    let opts = GenerateOptions {
        max_iters: a.max_iters.unwrap_or(cfg.max_iters),
        temperature: cfg.temperature,
        codegen: a.emit_cs.as_ref().map(|_| a.codegen.into()),
    };
    let out = match generate(&text, library, &gw, &opts) {
        Ok(o) => o,
        Err(e) => {
            run.finish()?;
            return Err(pipeline(e));
        }
    };
    write_text(&a.out, &scene_json::emit(&out.scene))?;
    run.output(&a.out);
    if let (Some(path), Some(code)) = (&a.emit_cs, &out.code) {
        write_text(path, &code.code)?;
        run.output(path);
        if !code.report.ok {
            warn!(report = %code.report, "generated code failed validation");
        }
    }
    if let Some(path) = &a.emit_svg {
        write_text(path, &emit_svg(&out.scene, scenegen_core::codegen::DEFAULT_SCALE))?;
        run.output(path);
    }
    if let Some(path) = &a.dump_stages {
        let dump = serde_json::to_string_pretty(&out).map_err(usage)?;
        write_text(path, &(dump + "\n"))?;
        run.output(path);
    }
    run.finish()?;
    println!("{}", out.report.to_json());
    info!(iterations = out.iterations, ok = out.report.ok, "generated");
    Ok(if out.report.ok { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_verify(library: &ObjectLibrary, a: &VerifyArgs) -> Outcome {
    let scene = scene_json::parse(&read_text(&a.scene)?).map_err(usage)?;
    let description = a.description.as_deref().unwrap_or(&scene.source_description);
    let analysis = analyze(description, library);
    let report = verify(&scene, &analysis.layout_for(&scene.objects));
    let mut v = serde_json::to_value(&report).map_err(usage)?;
    v["parse_coverage"] = json!({
        "complete": analysis.complete,
        "notes": analysis.notes,
    });
    println!("{}", serde_json::to_string_pretty(&v).map_err(usage)?);
    Ok(if report.ok { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_evolve(cli: &Cli, argv: Vec<String>, cfg: &Config, library: &ObjectLibrary, a: &EvolveArgs) -> Outcome {
    let opts = EvolveOptions {
        max_iterations: a.max_iterations,
        threshold: a.threshold,
        temperature: cfg.temperature,
        ..EvolveOptions::default()
    };
    let seeds = read_pool(open(&a.seeds)?, opts.params).map_err(usage)?;
    let gw = gateway(cfg, library);
    let mut run = Run::start(cli, argv, cfg, gw.backend_id(), &a.out);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "evolve"));
    let out = evolve(seeds, a.target, library, &gw, &opts, &mut rng).map_err(pipeline)?;
    let mut w = BufWriter::new(File::create(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?);
    write_jsonl(&mut w, &out.pool).and_then(|_| w.flush()).map_err(usage)?;
    run.output(&a.out);
    run.finish()?;
    if out.budget_exhausted {
        eprintln!(
            "warning: rewrite budget exhausted at {} of {} descriptions",
            out.pool.len(),
            a.target
        );
    }
    eprintln!(
        "pool {} (attempts {}, invalid {}, duplicate {}, failed {})",
        out.pool.len(),
        out.attempts,
        out.rejected_invalid,
        out.rejected_duplicate,
        out.failed_rewrites
    );
    Ok(EXIT_OK)
}

fn cmd_collect(cli: &Cli, argv: Vec<String>, cfg: &Config, library: &ObjectLibrary, a: &CollectArgs) -> Outcome {
    let pool = read_pool(open(&a.pool)?, MinHashParams::default()).map_err(usage)?;
    let rate = a.error_rate.unwrap_or(cfg.error_rate);
    if !(0.0..=1.0).contains(&rate) {
        return Err(usage("--error-rate must be within [0, 1]"));
    }
    let strong = gateway(cfg, library);
    let weak = Gateway::new(Arc::new(ScriptedBackend::weak(
        sub_seed(cfg.seed, "weak"),
        library.clone(),
        rate,
    )));
    let mut run = Run::start(
        cli,
        argv,
        cfg,
        format!("{} / {}", strong.backend_id(), weak.backend_id()),
        &a.out,
    );
    let opts = TrajectoryOptions {
        temperature: cfg.temperature,
        validation_fraction: a.validation_fraction,
    };
    let records = collect_trajectories(&pool, &strong, &weak, library, &opts);
    let mut w = BufWriter::new(File::create(&a.out).map_err(|e| usage(format!("{}: {e}", a.out.display())))?);
    write_jsonl(&mut w, &records).and_then(|_| w.flush()).map_err(usage)?;
    run.output(&a.out);
    run.finish()?;
    let count = |t: TrajectoryTask| records.iter().filter(|r| r.task == t).count();
    eprintln!(
        "{} records: assign {}, verify {} (pos {}, neg {}), reassign {}",
        records.len(),
        count(TrajectoryTask::Assign),
        count(TrajectoryTask::VerifyPos) + count(TrajectoryTask::VerifyNeg),
        count(TrajectoryTask::VerifyPos),
        count(TrajectoryTask::VerifyNeg),
        count(TrajectoryTask::Reassign)
    );
    Ok(EXIT_OK)
}

fn cmd_bench(cli: &Cli, argv: Vec<String>, cfg: &Config, library: &ObjectLibrary, a: &BenchArgs) -> Outcome {
    let suite = read_suite(open(&a.suite)?).map_err(usage)?;
    let gw = gateway(cfg, library);
    let mut run = Run::start(cli, argv, cfg, gw.backend_id(), &a.out);
    let opts = BenchOptions {
        samples: a.samples,
        k: a.k,
        seed: cfg.seed,
        generate: GenerateOptions {
            max_iters: cfg.max_iters,
            temperature: cfg.temperature,
            codegen: None,
        },
    };
    let report = run_suite(&suite, library, &gw, &opts).map_err(usage)?;
    write_text(&a.out, &report.to_json())?;
    run.output(&a.out);
    run.finish()?;
    print!("{}", report.to_table());
    Ok(EXIT_OK)
}

fn cmd_render(cli: &Cli, argv: Vec<String>, cfg: &Config, a: &RenderArgs) -> Outcome {
    let scene = scene_json::parse(&read_text(&a.scene)?).map_err(usage)?;
    if !(a.scale.is_finite() && a.scale > 0.0) {
        return Err(usage("--scale must be positive"));
    }
    let mut run = Run::start(cli, argv, cfg, "none".into(), &a.out);
    write_text(&a.out, &emit_svg(&scene, a.scale))?;
    run.output(&a.out);
    run.finish()?;
    Ok(EXIT_OK)
}
