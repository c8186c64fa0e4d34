//! Append-only evaluation logs, stored as JSON lines.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// One evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub experiment: String,
    pub variant: String,
    /// Name of the evaluated reward.
    pub task: String,
    pub seed: u64,
    pub step: u64,
    /// Pool id the agent was conditioned on.
    pub id: u64,
    /// Mean undiscounted return.
    pub raw: f64,
    pub normalized: f64,
    /// Mean behavior metric of the evaluation episodes.
    pub behavior: f64,
}

impl RunRecord {
    fn stream(&self) -> (&str, &str, &str, u64) {
        (&self.experiment, &self.variant, &self.task, self.seed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    records: Vec<RunRecord>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `r`; steps must strictly increase within each
    /// (experiment, variant, task, seed) stream.
    pub fn push(&mut self, r: RunRecord) -> Result<()> {
        if let Some(prev) = self.records.iter().rev().find(|p| p.stream() == r.stream()) {
            if r.step <= prev.step {
                return Err(HarnessError::Log {
                    path: "<memory>".into(),
                    line: self.records.len() + 1,
                    message: format!("step {} does not follow {}", r.step, prev.step),
                });
            }
        }
        if !r.raw.is_finite() || !r.normalized.is_finite() || !r.behavior.is_finite() {
            return Err(HarnessError::Log {
                path: "<memory>".into(),
                line: self.records.len() + 1,
                message: "non-finite score".into(),
            });
        }
        self.records.push(r);
        Ok(())
    }

    pub fn extend(&mut self, other: RunLog) -> Result<()> {
        for r in other.records {
            self.push(r)?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    /// Final record of each (variant, task, seed) stream, in first-seen order.
    pub fn finals(&self) -> Vec<&RunRecord> {
        let mut order: Vec<(&str, &str, &str, u64)> = Vec::new();
        let mut last: BTreeMap<(&str, &str, &str, u64), &RunRecord> = BTreeMap::new();
        for r in &self.records {
            if !last.contains_key(&r.stream()) {
                order.push(r.stream());
            }
            last.insert(r.stream(), r);
        }
        order.into_iter().map(|k| last[&k]).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_jsonl()?.as_bytes())
            .map_err(HarnessError::io("<writer>"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        }
        std::fs::write(path, self.to_jsonl()?).map_err(HarnessError::io(path))
    }

    /// Parses one record per non-empty line, enforcing the step invariant.
    pub fn parse_jsonl(text: &str, source: &str) -> Result<Self> {
        let mut log = RunLog::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: RunRecord = serde_json::from_str(line).map_err(|e| HarnessError::Log {
                path: source.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            log.push(r).map_err(|e| match e {
                HarnessError::Log { message, .. } => HarnessError::Log {
                    path: source.into(),
                    line: i + 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(log)
    }

    pub fn read<R: BufRead>(mut r: R, source: &str) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text).map_err(HarnessError::io(source))?;
        Self::parse_jsonl(&text, source)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::parse_jsonl(&text, &path.display().to_string())
    }
}
