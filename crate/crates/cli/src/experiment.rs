//! Batch experiments: a base session config swept over a cross product of
//! axes, with every run's artifacts written under one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use alr_core::controller::{start_session, AlrConfig, AlrReport, SessionStatus};
use alr_core::scene::Preset;
use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::summary::{summarize, Summary};

/// Sweep axes. An absent axis keeps the base value; an empty list yields no
/// runs at all.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_deg: Option<Vec<f64>>,
    #[serde(default)]
    pub pixel_noise: Option<Vec<f64>>,
    #[serde(default)]
    pub presets: Option<Vec<Preset>>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base: AlrConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[serde(default)]
    pub parallel: Option<usize>,
}

/// Where one run sits in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub preset: Preset,
    pub mu: f64,
    pub beta_deg: f64,
    pub pixel_noise: f64,
    pub seed: u64,
}

/// Per-run record written next to the run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub key: RunKey,
    pub status: Option<SessionStatus>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub record: RunRecord,
    pub report: Option<AlrReport>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.base.validate().context("base config")?;
        for (i, (_, config)) in c.plan().iter().enumerate() {
            config.validate().with_context(|| format!("sweep run {i}"))?;
        }
        Ok(c)
    }

    /// The cross product, in a fixed order: preset, mu, beta, noise, seed.
    pub fn plan(&self) -> Vec<(RunKey, AlrConfig)> {
        let b = &self.base;
        let s = &self.sweep;
        let presets = s.presets.clone().unwrap_or_else(|| vec![b.scene.preset]);
        let mus = s.mu.clone().unwrap_or_else(|| vec![b.mu]);
        let betas = s.beta_deg.clone().unwrap_or_else(|| vec![b.ambiguity_beta_deg]);
        let noises = s.pixel_noise.clone().unwrap_or_else(|| vec![b.noise.pixel_sigma]);
        let seeds = s.seeds.clone().unwrap_or_else(|| vec![b.seed]);
        let mut out = Vec::new();
        for &preset in &presets {
            for &mu in &mus {
                for &beta_deg in &betas {
                    for &pixel_noise in &noises {
                        for &seed in &seeds {
                            let mut c = b.clone();
                            c.scene.preset = preset;
                            c.mu = mu;
                            c.ambiguity_beta_deg = beta_deg;
                            c.noise.pixel_sigma = pixel_noise;
                            c.seed = seed;
                            out.push((RunKey { preset, mu, beta_deg, pixel_noise, seed }, c));
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn run_dir(root: &Path, index: usize) -> PathBuf {
    root.join("runs").join(format!("{index:04}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn execute_one(root: &Path, index: usize, key: RunKey, config: &AlrConfig) -> anyhow::Result<RunResult> {
    let dir = run_dir(root, index);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), config)?;
    let outcome = start_session(config).and_then(|mut s| {
        let report = s.run_to_termination()?;
        Ok((report, s))
    });
    let result = match outcome {
        Ok((report, session)) => {
            fs::write(dir.join("trajectory.csv"), report.trajectory_csv())?;
            write_json(&dir.join("report.json"), &report)?;
            let reference = session.reference_image();
            let peak = reference.max_valid().max(f64::MIN_POSITIVE);
            reference.write_png(dir.join("reference.png"), peak)?;
            if let Some(best) = session.best_image() {
                best.write_png(dir.join("best.png"), peak)?;
                best.save_pgm16(dir.join("best.pgm"), peak)?;
            }
            fs::write(dir.join("ball.png"), session.ball_png()?)?;
            let record = RunRecord { index, key, status: Some(report.status), error: None };
            RunResult { record, report: Some(report) }
        }
        Err(e) => {
            log::error!("run {index} failed: {e}");
            RunResult { record: RunRecord { index, key, status: None, error: Some(e.to_string()) }, report: None }
        }
    };
    write_json(&dir.join("run.json"), &result.record)?;
    Ok(result)
}

/// Runs the sweep into a staging directory next to `out` and renames it into
/// place once everything is written. `out` must not exist yet.
pub fn execute(config: &ExperimentConfig, out: &Path) -> anyhow::Result<(Vec<RunResult>, Summary)> {
    if out.exists() {
        bail!("output directory {} already exists", out.display());
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = out.file_name().context("output path has no final component")?.to_string_lossy();
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;

    let plan = config.plan();
    log::info!("experiment: {} runs", plan.len());
    write_json(&staging.join("experiment.json"), config)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.parallel.unwrap_or(0)).build()?;
    let results: Vec<RunResult> = pool.install(|| {
        plan.par_iter().enumerate().map(|(i, (key, c))| execute_one(&staging, i, *key, c)).collect::<anyhow::Result<Vec<_>>>()
    })?;

    let summary = summarize(&results);
    fs::write(staging.join("summary.csv"), summary.to_csv())?;
    fs::write(staging.join("summary.md"), summary.to_markdown())?;
    fs::rename(&staging, out).with_context(|| format!("moving results to {}", out.display()))?;
    Ok((results, summary))
}

/// Reloads the run records and reports of a finished experiment.
pub fn load_results(root: &Path) -> anyhow::Result<Vec<RunResult>> {
    let runs = root.join("runs");
    let mut results = Vec::new();
    if runs.is_dir() {
        let mut dirs: Vec<PathBuf> = fs::read_dir(&runs)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        dirs.sort();
        for dir in dirs {
            let record: RunRecord =
                serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?).with_context(|| format!("{}/run.json", dir.display()))?;
            let report_path = dir.join("report.json");
            let report = if report_path.exists() {
                Some(serde_json::from_str(&fs::read_to_string(&report_path)?).with_context(|| format!("{}", report_path.display()))?)
            } else {
                None
            };
            results.push(RunResult { record, report });
        }
    } else if !root.is_dir() {
        bail!("{} is not an experiment directory", root.display());
    }
    results.sort_by_key(|r| r.record.index);
    Ok(results)
}
