//! Output directory layout: `<out>/<variant>/seed-<n>.jsonl`, checkpoints
//! next to their logs, reports at the top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::runlog::RunLog;

/// Environment variable naming the directory relative output paths live under.
pub const OUT_ROOT_VAR: &str = "RCRL_OUT_ROOT";

/// `--out`, else the config's `out`, else `runs/<name>`; relative paths are
/// placed under `root` when given.
pub fn resolve_out(flag: Option<&Path>, cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let p = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    match root {
        Some(r) if p.is_relative() => r.join(p),
        _ => p,
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.+".contains(c) { c } else { '_' })
        .collect()
}

pub fn seed_log_path(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(file_safe(variant)).join(format!("seed-{seed}.jsonl"))
}

pub fn checkpoint_path(out: &Path, variant: &str, seed: u64) -> PathBuf {
    out.join(file_safe(variant)).join(format!("seed-{seed}.ckpt.json"))
}

/// Splits a log by (variant, seed) and writes one file each.
pub fn write_logs(out: &Path, log: &RunLog) -> Result<Vec<PathBuf>> {
    let mut parts: BTreeMap<(String, u64), RunLog> = BTreeMap::new();
    for r in log.records() {
        parts
            .entry((r.variant.clone(), r.seed))
            .or_default()
            .push(r.clone())?;
    }
    let mut paths = Vec::with_capacity(parts.len());
    for ((variant, seed), part) in parts {
        let p = seed_log_path(out, &variant, seed);
        part.save(&p)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Every `*.jsonl` below `dir`, visited in sorted order.
pub fn load_logs(dir: &Path) -> Result<RunLog> {
    let mut files = Vec::new();
    collect(dir, &mut files)?;
    files.sort();
    let mut log = RunLog::new();
    for f in files {
        log.extend(RunLog::load(&f)?)?;
    }
    Ok(log)
}

fn collect(dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(HarnessError::io(dir))? {
        let path = entry.map_err(HarnessError::io(dir))?.path();
        if path.is_dir() {
            collect(&path, files)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    Ok(())
}
