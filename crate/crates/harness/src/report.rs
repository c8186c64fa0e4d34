//! Plot-ready CSV summaries of run logs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rcrl_core::Rng;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::runlog::{RunLog, RunRecord};
use crate::stats::{bootstrap_ci, mean, Interval};

pub const RESAMPLES: usize = 2000;
pub const LEVEL: f64 = 0.95;
const BOOTSTRAP_SEED: u64 = 0;

#[derive(Debug, Serialize)]
struct Row<'a> {
    experiment: &'a str,
    variant: &'a str,
    task: &'a str,
    seed: u64,
    step: u64,
    raw: f64,
    normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub variant: String,
    pub step: u64,
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatCell {
    pub experiment: String,
    pub source: String,
    pub target: String,
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Bootstrap interval of the mean, or a point interval below two samples.
pub fn interval(xs: &[f64], rng: &mut Rng) -> Result<Interval> {
    if xs.len() < 2 {
        let m = mean(xs);
        return Ok(Interval { low: m, high: m, mean: m });
    }
    bootstrap_ci(xs, RESAMPLES, LEVEL, rng)
}

/// Normalized scores per (experiment, variant, step), flattened over tasks
/// and seeds.
pub fn timeseries(log: &RunLog) -> Result<Vec<Summary>> {
    let mut groups: BTreeMap<(&str, &str, u64), Vec<f64>> = BTreeMap::new();
    for r in log.records() {
        groups
            .entry((&r.experiment, &r.variant, r.step))
            .or_default()
            .push(r.normalized);
    }
    summarize(groups)
}

/// Final normalized score of every (variant, task, seed) stream, flattened
/// per (experiment, variant).
pub fn finals(log: &RunLog) -> Result<Vec<Summary>> {
    let mut groups: BTreeMap<(&str, &str, u64), Vec<f64>> = BTreeMap::new();
    let mut last_step: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for r in log.finals() {
        groups.entry((&r.experiment, &r.variant, 0)).or_default().push(r.normalized);
        let s = last_step.entry((&r.experiment, &r.variant)).or_default();
        *s = (*s).max(r.step);
    }
    let mut out = summarize(groups)?;
    for s in &mut out {
        s.step = last_step[&(s.experiment.as_str(), s.variant.as_str())];
    }
    Ok(out)
}

fn summarize(groups: BTreeMap<(&str, &str, u64), Vec<f64>>) -> Result<Vec<Summary>> {
    let mut rng = Rng::seed_from_u64(BOOTSTRAP_SEED);
    groups
        .into_iter()
        .map(|((e, v, step), xs)| {
            let ci = interval(&xs, &mut rng)?;
            Ok(Summary {
                experiment: e.into(),
                variant: v.into(),
                step,
                n: xs.len(),
                mean: ci.mean,
                low: ci.low,
                high: ci.high,
            })
        })
        .collect()
}

/// Source × target grid of final transfer scores, read from variants named
/// `<prefix><source>`.
pub fn heatmap(log: &RunLog, prefix: &str) -> Result<Vec<HeatCell>> {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in log.finals() {
        if let Some(src) = r.variant.strip_prefix(prefix) {
            groups.entry((&r.experiment, src, &r.task)).or_default().push(r.normalized);
        }
    }
    let mut rng = Rng::seed_from_u64(BOOTSTRAP_SEED);
    groups
        .into_iter()
        .map(|((e, s, t), xs)| {
            let ci = interval(&xs, &mut rng)?;
            Ok(HeatCell {
                experiment: e.into(),
                source: s.into(),
                target: t.into(),
                n: xs.len(),
                mean: ci.mean,
                low: ci.low,
                high: ci.high,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(HarnessError::io(path))
}

pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn row(r: &RunRecord) -> Row<'_> {
    Row {
        experiment: &r.experiment,
        variant: &r.variant,
        task: &r.task,
        seed: r.seed,
        step: r.step,
        raw: r.raw,
        normalized: r.normalized,
    }
}

/// Writes `report.csv`, `timeseries.csv`, `final.csv` and, when transfer
/// variants are present, `heatmap.csv`. Returns the written paths.
pub fn write_report(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let mut written = Vec::new();
    let p = dir.join("report.csv");
    write_csv(&p, log.records().iter().map(row))?;
    written.push(p);
    let p = dir.join("timeseries.csv");
    write_csv(&p, timeseries(log)?)?;
    written.push(p);
    let p = dir.join("final.csv");
    write_csv(&p, finals(log)?)?;
    written.push(p);
    let cells = heatmap(log, "rcrl-from-")?;
    if !cells.is_empty() {
        let p = dir.join("heatmap.csv");
        write_csv(&p, cells)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(variant: &str, task: &str, seed: u64, step: u64, normalized: f64) -> RunRecord {
        RunRecord {
            experiment: "e".into(),
            variant: variant.into(),
            task: task.into(),
            seed,
            step,
            id: 0,
            raw: normalized * 10.0,
            normalized,
            behavior: 0.0,
        }
    }

    #[test]
    fn report_columns() {
        let text = records_csv(&[rec("v", "t", 1, 5, 0.5)]).unwrap();
        assert_eq!(
            text,
            "experiment,variant,task,seed,step,raw,normalized\ne,v,t,1,5,5.0,0.5\n"
        );
    }

    #[test]
    fn finals_flatten_tasks_and_seeds() {
        let mut log = RunLog::new();
        log.push(rec("v", "a", 0, 1, 0.0)).unwrap();
        log.push(rec("v", "a", 0, 2, 1.0)).unwrap();
        log.push(rec("v", "b", 0, 2, 0.5)).unwrap();
        log.push(rec("v", "a", 1, 2, 0.0)).unwrap();
        let f = finals(&log).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].n, f[0].mean, f[0].step), (3, 0.5, 2));
        let ts = timeseries(&log).unwrap();
        assert_eq!(ts.iter().map(|s| s.n).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn heatmap_reads_source_from_variant() {
        let mut log = RunLog::new();
        log.push(rec("rcrl-from-x", "y", 0, 3, 0.25)).unwrap();
        log.push(rec("rcrl-from-x", "y", 1, 3, 0.75)).unwrap();
        log.push(rec("scratch", "y", 0, 3, 0.1)).unwrap();
        let h = heatmap(&log, "rcrl-from-").unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!((h[0].source.as_str(), h[0].target.as_str(), h[0].mean), ("x", "y", 0.5));
    }
}
