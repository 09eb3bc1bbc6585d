use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use feeder_marl::env::{run_episode, AgentPolicy, Controllers, Environment};
use feeder_marl::metrics::{
    compare, histogram_csv, series_csv, summarize_log, voltage_histogram, EpisodeLog, LogSummary,
};
use feeder_marl::ppo::{checkpoint, curves_csv, PpoError, Trainer};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::{self, RunManifest};

pub const CONFIG_FILE: &str = "config.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const TABLE_FILE: &str = "comparison.txt";
pub const COMPARISON_FILE: &str = "comparison.json";
const HISTOGRAM_BIN: f64 = 0.005;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_COMPARE: u8 = 5;
pub const EXIT_OTHER: u8 = 1;

pub trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

pub struct Run {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
}

fn start(command: &str, ctx: &Run, inputs: Vec<PathBuf>) -> RunManifest {
    RunManifest {
        command: command.into(),
        version: manifest::version(),
        config_hash: Some(ctx.config.hash()),
        seed: Some(ctx.config.seed()),
        preset: Some(ctx.config.preset.to_string()),
        config_path: ctx.config_path.clone(),
        inputs,
        started: manifest::now(),
        finished: String::new(),
        files: Vec::new(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).code(EXIT_OTHER)
}

fn prepare_out(ctx: &Run) -> Result<(), Failure> {
    fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display())).code(EXIT_OTHER)?;
    let text = serde_json::to_string_pretty(&ctx.config).code(EXIT_OTHER)? + "\n";
    write(&ctx.out.join(CONFIG_FILE), &text)
}

fn environment(cfg: &RunConfig) -> Result<Environment, Failure> {
    Environment::new(cfg.scenario.clone()).context("scenario cannot be built").code(EXIT_CONFIG)
}

fn training_code(e: &PpoError) -> u8 {
    match e {
        PpoError::Checkpoint(_) => EXIT_CHECKPOINT,
        PpoError::Config(_) => EXIT_CONFIG,
        _ => EXIT_TRAINING,
    }
}

/// Trains from scratch, or from `out/checkpoint` with `resume`.
/// `halt_after` stops right after the checkpoint of that update, as if the
/// process had been killed there.
pub fn train(ctx: &Run, resume: bool, halt_after: Option<usize>) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let hash = cfg.hash();
    let ckpt = ctx.out.join(CHECKPOINT_DIR);
    let mut m = start("train", ctx, Vec::new());
    prepare_out(ctx)?;
    let mut env = environment(cfg)?;
    let mut trainer = if resume && checkpoint::exists(&ckpt) {
        checkpoint::resume(&ckpt, &mut env, &hash).code(EXIT_CHECKPOINT)?
    } else {
        Trainer::new(&mut env, cfg.ppo.clone(), cfg.seed()).code(EXIT_TRAINING)?
    };
    if resume {
        m.inputs.push(ckpt.clone());
    }
    let mut halted = false;
    let res = trainer.run(&mut env, |t, e| {
        if t.updates % cfg.checkpoint_every == 0 || halt_after == Some(t.updates) {
            checkpoint::save(&ckpt, t, e, &hash)?;
        }
        if let Some(r) = t.last_mean_reward() {
            eprintln!("update {:>5}  step {:>8}  mean reward {r:.5}", t.updates, t.steps);
        }
        if halt_after == Some(t.updates) {
            halted = true;
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    });
    if let Err(e) = res {
        let code = training_code(&e);
        return Err(Failure { code, error: anyhow!(e).context("training aborted") });
    }
    if halted {
        return Ok(());
    }
    checkpoint::save(&ckpt, &trainer, &env, &hash).code(EXIT_CHECKPOINT)?;
    write(&ctx.out.join(CURVES_FILE), &curves_csv(&trainer.curves))?;
    manifest::finish(m, &ctx.out).code(EXIT_OTHER)?;
    Ok(())
}

#[derive(Serialize)]
struct Report<'a> {
    controller: &'a str,
    config_hash: String,
    summary: LogSummary,
}

fn write_episode(ctx: &Run, log: &EpisodeLog, controller: &str) -> Result<(), Failure> {
    log.write_dir(&ctx.out).code(EXIT_OTHER)?;
    let summary = summarize_log(log).code(EXIT_OTHER)?;
    let report = Report { controller, config_hash: ctx.config.hash(), summary };
    write(&ctx.out.join(REPORT_FILE), &(serde_json::to_string_pretty(&report).code(EXIT_OTHER)? + "\n"))?;
    write(&ctx.out.join(SERIES_FILE), &series_csv(log, ctx.config.smoothing_window).code(EXIT_OTHER)?)?;
    let h = voltage_histogram(log, HISTOGRAM_BIN).code(EXIT_OTHER)?;
    write(&ctx.out.join(HISTOGRAM_FILE), &histogram_csv(&h))
}

/// Accepts a training output directory or its checkpoint subdirectory.
fn checkpoint_dir(dir: &Path) -> PathBuf {
    let nested = dir.join(CHECKPOINT_DIR);
    if checkpoint::exists(&nested) {
        nested
    } else {
        dir.to_path_buf()
    }
}

pub fn evaluate(ctx: &Run, checkpoint: &Path) -> Result<(), Failure> {
    let m = start("evaluate", ctx, vec![checkpoint.to_path_buf()]);
    let mut env = environment(&ctx.config)?;
    let policies = checkpoint::load_policies(&checkpoint_dir(checkpoint), &env)
        .context("checkpoint does not fit the scenario")
        .code(EXIT_CHECKPOINT)?;
    prepare_out(ctx)?;
    let refs: Vec<&dyn AgentPolicy> = policies.iter().map(|p| p as &dyn AgentPolicy).collect();
    let log = run_episode(&mut env, Controllers::Policies(&refs)).code(EXIT_OTHER)?;
    write_episode(ctx, &log, "rl")?;
    manifest::finish(m, &ctx.out).code(EXIT_OTHER)?;
    Ok(())
}

pub fn baseline(ctx: &Run) -> Result<(), Failure> {
    let m = start("baseline", ctx, Vec::new());
    let mut env = environment(&ctx.config)?;
    prepare_out(ctx)?;
    let log = run_episode(&mut env, Controllers::RbcOnly).code(EXIT_OTHER)?;
    write_episode(ctx, &log, "rbc")?;
    manifest::finish(m, &ctx.out).code(EXIT_OTHER)?;
    Ok(())
}

/// `baseline_dir` and `other_dir` are evaluate/baseline output directories.
pub fn compare_runs(baseline_dir: &Path, other_dir: &Path, out: &Path) -> Result<(), Failure> {
    let read = |d: &Path| EpisodeLog::read_dir(d).with_context(|| format!("cannot read episode log in {}", d.display()));
    let base = read(baseline_dir).code(EXIT_COMPARE)?;
    let other = read(other_dir).code(EXIT_COMPARE)?;
    let report = compare(&other, &base).code(EXIT_COMPARE)?;
    let m = RunManifest {
        command: "compare".into(),
        version: manifest::version(),
        config_hash: None,
        seed: None,
        preset: None,
        config_path: None,
        inputs: vec![baseline_dir.to_path_buf(), other_dir.to_path_buf()],
        started: manifest::now(),
        finished: String::new(),
        files: Vec::new(),
    };
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display())).code(EXIT_OTHER)?;
    let table = report.to_table();
    write(&out.join(TABLE_FILE), &table)?;
    write(&out.join(COMPARISON_FILE), &(serde_json::to_string_pretty(&report).code(EXIT_OTHER)? + "\n"))?;
    print!("{table}");
    manifest::finish(m, out).code(EXIT_OTHER)?;
    Ok(())
}
