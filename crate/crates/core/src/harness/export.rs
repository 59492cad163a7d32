use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::ExperimentReport;
use crate::controller::{Policy, StepRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedFiles {
    pub summary: PathBuf,
    pub histogram: PathBuf,
    pub trajectories: Option<PathBuf>,
    pub timing: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    run: usize,
    policy: Policy,
    #[serde(flatten)]
    record: &'a StepRecord,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report types serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `summary.json`, `histogram.csv`, `timing.json` when timing is
/// known, and `trajectories.jsonl` when trajectories were recorded.
pub fn export(report: &ExperimentReport, dir: &Path) -> Result<ExportedFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let summary = dir.join("summary.json");
    let mut slim = report.clone();
    slim.policies.iter_mut().for_each(|p| p.trajectories = None);
    write_json(&summary, &slim)?;

    let histogram = dir.join("histogram.csv");
    let mut w = create(&histogram)?;
    let io = |e| Error::io(&histogram, e);
    writeln!(w, "policy,bin_left,bin_right,count").map_err(io)?;
    for p in &report.policies {
        for b in &p.histogram {
            writeln!(w, "{},{},{},{}", p.policy, b.left, b.right, b.count).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;

    let has_trajectories = report.policies.iter().any(|p| p.trajectories.as_ref().is_some_and(|t| !t.is_empty()));
    let trajectories = if has_trajectories {
        let path = dir.join("trajectories.jsonl");
        let mut w = create(&path)?;
        for p in &report.policies {
            for (run, t) in p.trajectories.iter().flatten() {
                for record in &t.records {
                    let line = serde_json::to_string(&TrajectoryLine { run: *run, policy: p.policy, record })
                        .expect("records serialize");
                    writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };

    let timing = match &report.timing {
        Some(t) => {
            let path = dir.join("timing.json");
            write_json(&path, t)?;
            Some(path)
        }
        None => None,
    };

    Ok(ExportedFiles { summary, histogram, trajectories, timing })
}
