mod config;
mod manifest;
mod tasks;

use anyhow::{bail, Context as _, Result};
use clap::Parser;
use manifest::{digest_inputs, Manifest};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use varhjb::report::Status;

/// Runs one configured task and writes its artifacts to the output directory.
#[derive(Debug, Parser)]
#[command(name = "varhjb", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Size of the worker pool.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("HJB_LOG_LEVEL").ok().as_deref() {
        None | Some("") => log::LevelFilter::Warn,
        Some("error") => log::LevelFilter::Error,
        Some("warn") => log::LevelFilter::Warn,
        Some("info") => log::LevelFilter::Info,
        Some("debug") => log::LevelFilter::Debug,
        Some(other) => bail!("HJB_LOG_LEVEL must be one of error, warn, info, debug (got {other:?})"),
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn exit_code(status: Status) -> u8 {
    match status {
        Status::Fail => 2,
        Status::Pass | Status::Inconclusive => 0,
    }
}

fn run(args: &Args) -> Result<u8> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("cannot read {}", args.config.display()))?;
    let mut cfg = config::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&args.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => bail!("no output directory: pass --out or set output_dir"),
    };
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!("--workers must be at least 1");
    }

    let mut inputs = vec![(args.config.display().to_string(), text.into_bytes())];
    for f in cfg.input_files(&base) {
        let bytes = std::fs::read(&f).with_context(|| format!("cannot read input {}", f.display()))?;
        inputs.push((f.display().to_string(), bytes));
    }
    let (inputs_sha256, inputs) = digest_inputs(&inputs);
    let mut manifest = Manifest {
        schema_version: cfg.schema_version,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        library_version: varhjb::VERSION.into(),
        task: cfg.task.name().into(),
        seed: cfg.seed,
        workers,
        status: "running".into(),
        inputs_sha256,
        inputs,
        config: serde_json::to_value(&cfg)?,
        verdict: None,
        error: None,
        outputs: Vec::new(),
    };
    manifest.write(&out)?;
    log::info!("task {} seed {} workers {workers} -> {}", cfg.task.name(), cfg.seed, out.display());

    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let ctx = tasks::Context {
        config: &cfg,
        seed: cfg.seed,
        base: &base,
        out: &out,
    };
    let result = pool.install(|| tasks::run_task(&ctx));
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(format!("{e:#}"));
            manifest.write(&out)?;
            return Err(e);
        }
    };
    let summary_path = out.join("summary.txt");
    let summary = format!("task: {}\nverdict: {}\n{}\n", cfg.task.name(), output.verdict, output.summary);
    std::fs::write(&summary_path, &summary)?;
    let mut files = output.files;
    files.push(summary_path);
    manifest.add_outputs(&out, &files)?;
    manifest.status = "complete".into();
    manifest.verdict = Some(output.verdict.to_string());
    manifest.write(&out)?;
    if !args.quiet {
        print!("{summary}");
    }
    Ok(exit_code(output.verdict))
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_logging() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
