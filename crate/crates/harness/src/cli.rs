//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::agent::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{self, checkpoint_path};
use crate::protocols::{self, Ablation};
use crate::report;
use crate::runlog::RunLog;
use crate::setup::Setup;
use crate::train::{self, RunContext};

#[derive(Debug, Parser)]
#[command(name = "rcrl", version, about = "Reward-conditioned RL experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run only this seed instead of the config's list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationArg {
    Alpha,
    Spread,
    Distribution,
    Conditioning,
    Exploration,
    Capacity,
    Multihead,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Alpha => Ablation::Alpha,
            AblationArg::Spread => Ablation::Spread,
            AblationArg::Distribution => Ablation::Distribution,
            AblationArg::Conditioning => Ablation::Conditioning,
            AblationArg::Exploration => Ablation::Exploration,
            AblationArg::Capacity => Ablation::Capacity,
            AblationArg::Multihead => Ablation::Multihead,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train under the configured mixture and log nominal evaluations.
    Train(Common),
    /// Evaluate a checkpoint conditioned on every pool entry.
    ZeroShot {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to sweep; defaults to the one `train` wrote, training if absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Pretrain, finetune on a target task, and compare against baselines.
    Transfer(Common),
    /// Run the ST, ST+RCRL, ST+expanded and MT regimes.
    Decompose(Common),
    /// Sweep one knob.
    Ablate {
        #[arg(value_enum)]
        kind: AblationArg,
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate every log under the output directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory to read logs from; defaults to the output directory.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train(c) | Command::Transfer(c) | Command::Decompose(c) => c,
            Command::ZeroShot { common, .. } | Command::Ablate { common, .. } | Command::Report { common, .. } => common,
        }
    }
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    seed: u64,
    id: usize,
    task: &'a str,
    behavior: f64,
    raw: f64,
    normalized: f64,
}

fn seeds(cfg: &ExperimentConfig, flag: Option<u64>) -> Vec<u64> {
    flag.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

/// Runs one command; `root` is the value of the output-root variable.
/// Returns the files written.
pub fn run(cli: Cli, root: Option<&Path>) -> Result<Vec<PathBuf>> {
    let common = cli.command.common();
    let cfg = ExperimentConfig::load(&common.config)?;
    let out = output::resolve_out(common.out.as_deref(), &cfg, root);
    let seeds = seeds(&cfg, common.seed);
    let mut written = Vec::new();
    let mut log = RunLog::new();
    match &cli.command {
        Command::Train(_) => {
            let mut setup = Setup::new(&cfg)?;
            for &seed in &seeds {
                let run = train::run_training_with(&cfg, &mut setup, "rcrl", seed)?;
                let mut ckpt = Checkpoint::new(&setup.env, run.agent, setup.pool.clone());
                let p = checkpoint_path(&out, "rcrl", seed);
                ckpt.save(&p)?;
                written.push(p);
                log.extend(run.log)?;
            }
        }
        Command::ZeroShot { checkpoint, .. } => {
            let mut setup = Setup::new(&cfg)?;
            let mut w = csv_writer(&out.join("zero-shot.csv"))?;
            for &seed in &seeds {
                let default = checkpoint_path(&out, "rcrl", seed);
                let ckpt = match checkpoint {
                    Some(p) => Checkpoint::load(p)?,
                    None if default.exists() => Checkpoint::load(&default)?,
                    None => {
                        let run = train::run_training_with(&cfg, &mut setup, "rcrl", seed)?;
                        log.extend(run.log)?;
                        let mut c = Checkpoint::new(&setup.env, run.agent, setup.pool.clone());
                        c.save(&default)?;
                        written.push(default);
                        c
                    }
                };
                let rows = protocols::run_zero_shot_sweep(&ckpt, &mut setup, cfg.eval_episodes, seed)?;
                for r in &rows {
                    w.serialize(SweepCsvRow {
                        seed,
                        id: r.id,
                        task: &r.task,
                        behavior: r.behavior,
                        raw: r.raw,
                        normalized: r.normalized,
                    })?;
                }
                let ctx = RunContext::new(&cfg, "zero-shot", seed);
                log.extend(protocols::sweep_log(&ctx, &rows, 0)?)?;
            }
            w.flush().map_err(HarnessError::io(out.join("zero-shot.csv")))?;
            written.push(out.join("zero-shot.csv"));
        }
        Command::Transfer(_) => {
            for &seed in &seeds {
                log.extend(protocols::run_transfer_experiment(&cfg, seed)?)?;
            }
        }
        Command::Decompose(_) => {
            for &seed in &seeds {
                for (_, run) in protocols::run_decomposition(&cfg, seed)? {
                    log.extend(run.log)?;
                }
            }
        }
        Command::Ablate { kind, .. } => {
            for &seed in &seeds {
                log.extend(protocols::run_ablation((*kind).into(), &cfg, seed)?)?;
            }
        }
        Command::Report { logs, .. } => {
            let dir = logs.clone().unwrap_or_else(|| out.clone());
            log = output::load_logs(&dir)?;
            written.extend(report::write_report(&log, &out)?);
            return Ok(written);
        }
    }
    written.extend(output::write_logs(&out, &log)?);
    // The report covers every log under `out`, so a later command does not hide earlier ones.
    written.extend(report::write_report(&output::load_logs(&out)?, &out)?);
    Ok(written)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    Ok(csv::Writer::from_path(path)?)
}
