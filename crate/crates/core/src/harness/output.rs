//! CSV files written by a run, and the long-format export for plotting.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::curve::{CurvePoint, EvalRecord};
use super::trainer::{HeldOutRecord, SeedState};

pub const LEGEND_FILE: &str = "legend.csv";
pub const HELD_OUT_FILE: &str = "heldout.csv";
pub const AGENT_LOG_FILE: &str = "agent_log.csv";

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| Error::format(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `steps, seed, r0..r{n-1}, mean`, one row per checkpoint.
pub fn write_evals(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let n = records.first().map_or(0, |r| r.returns.len());
    let mut header = strings(&["steps", "seed"]);
    header.extend((0..n).map(|i| format!("r{i}")));
    header.push("mean".into());
    write_rows(
        path,
        &header,
        records.iter().map(|r| {
            let mut row = vec![r.steps.to_string(), r.seed.to_string()];
            row.extend(r.returns.iter().map(f64::to_string));
            row.push(r.mean.to_string());
            row
        }),
    )
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    write_rows(
        path,
        &strings(&["steps", "mean", "ci_low", "ci_high"]),
        curve
            .iter()
            .map(|p| vec![p.steps.to_string(), p.mean.to_string(), p.ci_low.to_string(), p.ci_high.to_string()]),
    )
}

pub fn write_legend(path: &Path, entries: &[(String, String, String)]) -> Result<()> {
    write_rows(
        path,
        &strings(&["slug", "label", "method"]),
        entries.iter().map(|(s, l, m)| vec![s.clone(), l.clone(), m.clone()]),
    )
}

pub fn write_held_out(path: &Path, records: &[HeldOutRecord]) -> Result<()> {
    write_rows(
        path,
        &strings(&["label", "collector", "seed", "steps", "error"]),
        records.iter().map(|r| {
            vec![
                r.label.clone(),
                r.collector.as_str().to_string(),
                r.seed.to_string(),
                r.steps.to_string(),
                r.error.to_string(),
            ]
        }),
    )
}

pub fn write_agent_log(path: &Path, states: &[SeedState]) -> Result<()> {
    let rows = states.iter().flat_map(|s| {
        s.agents.values().flat_map(move |a| {
            a.log.iter().map(move |r| {
                vec![
                    a.id.clone(),
                    s.seed.to_string(),
                    r.iteration.to_string(),
                    r.steps.to_string(),
                    r.accepted.to_string(),
                    r.kl.to_string(),
                    r.improvement.to_string(),
                    r.backtracks.to_string(),
                    r.value_loss.map_or(String::new(), |v| v.to_string()),
                    r.mean_return.to_string(),
                ]
            })
        })
    });
    write_rows(
        path,
        &strings(&[
            "agent",
            "seed",
            "iteration",
            "steps",
            "accepted",
            "kl",
            "improvement",
            "backtracks",
            "value_loss",
            "mean_return",
        ]),
        rows,
    )
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.records().map(|rec| rec.map_err(|e| Error::format(path, e))).collect()
}

fn find_legends(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_legends(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == LEGEND_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Gathers every curve under `runs` into one long-format CSV with columns
/// `run, label, steps, mean, ci_low, ci_high`. Returns the number of rows.
pub fn plot_data(runs: &Path, out: &Path) -> Result<usize> {
    let mut legends = Vec::new();
    find_legends(runs, &mut legends)?;
    if legends.is_empty() {
        return Err(Error::State(format!("no finished runs under {}", runs.display())));
    }
    let mut rows = Vec::new();
    for legend in legends {
        let dir = legend.parent().expect("file has a parent");
        let run = dir.strip_prefix(runs).unwrap_or(dir).display().to_string();
        for entry in read_records(&legend)? {
            let (slug, label) = (&entry[0], &entry[1]);
            for point in read_records(&dir.join(format!("{slug}_curve.csv")))? {
                let mut row = vec![run.clone(), label.to_string()];
                row.extend(point.iter().map(str::to_string));
                rows.push(row);
            }
        }
    }
    let n = rows.len();
    write_rows(out, &strings(&["run", "label", "steps", "mean", "ci_low", "ci_high"]), rows)?;
    Ok(n)
}
