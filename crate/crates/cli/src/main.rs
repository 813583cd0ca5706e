use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alr_cli::experiment::{execute, load_results, ExperimentConfig};
use alr_cli::render::{render_to_file, RenderConfig};
use alr_cli::server::{serve, AppState};
use alr_cli::summary::summarize;
use alr_core::controller::AlrConfig;
use clap::{Parser, Subcommand};

/// Exit code for configuration and usage errors.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "alr", version, about = "Active lighting recurrence experiments and session service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write per-run artifacts plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; must not exist. Overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the seed axis with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Render one frame to .png or .pgm with a JSON sidecar.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        /// Session config used when a create request has no body.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the summary of a finished experiment directory.
    SweepReport {
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn config_error(path: &Path, e: anyhow::Error) -> Failure {
    Failure::Config(format!("{}: {e:#}", path.display()))
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{e:#}"))
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, parallel: Option<usize>) -> Result<(), Failure> {
    let mut exp = ExperimentConfig::from_json(&read(config)?).map_err(|e| config_error(config, e))?;
    if let Some(s) = seed {
        exp.sweep.seeds = Some(vec![s]);
    }
    if parallel.is_some() {
        exp.parallel = parallel;
    }
    let out = out.or_else(|| exp.out.clone()).ok_or_else(|| Failure::Config("no output directory: pass --out or set `out`".into()))?;
    let planned = exp.plan().len();
    println!("planned {planned} runs");
    let (results, summary) = execute(&exp, &out).map_err(runtime)?;
    print!("{}", summary.to_markdown());
    let failed = results.iter().filter(|r| r.record.error.is_some()).count();
    println!("results in {}", out.display());
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} of {planned} runs failed")));
    }
    Ok(())
}

fn cmd_render(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let mut rc = RenderConfig::from_json(&read(config)?).map_err(|e| config_error(config, e))?;
    if let Some(s) = seed {
        rc.seed = s;
    }
    let side = render_to_file(&rc, out).map_err(runtime)?;
    println!("wrote {} ({}x{}, peak {})", out.display(), side.width, side.height, side.peak);
    Ok(())
}

fn cmd_serve(config: Option<PathBuf>, port: u16, seed: Option<u64>) -> Result<(), Failure> {
    let base = match &config {
        Some(path) => {
            let mut c = AlrConfig::from_json(&read(path)?).map_err(|e| config_error(path, e.into()))?;
            if let Some(s) = seed {
                c.seed = s;
            }
            Some(c)
        }
        None => None,
    };
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(serve(AppState::new(base), SocketAddr::from(([127, 0, 0, 1], port)))).map_err(runtime)
}

fn cmd_sweep_report(out: &Path) -> Result<(), Failure> {
    let results = load_results(out).map_err(runtime)?;
    let summary = summarize(&results);
    std::fs::write(out.join("summary.csv"), summary.to_csv()).map_err(runtime)?;
    std::fs::write(out.join("summary.md"), summary.to_markdown()).map_err(runtime)?;
    print!("{}", summary.to_markdown());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, parallel } => cmd_run(&config, out, seed, parallel),
        Command::Render { config, out, seed } => cmd_render(&config, &out, seed),
        Command::Serve { config, port, seed } => cmd_serve(config, port, seed),
        Command::SweepReport { out } => cmd_sweep_report(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
