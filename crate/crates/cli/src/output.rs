//! CSV and JSON files.
//!
//! Every CSV starts with a comment line carrying the config fingerprint and
//! run labels, followed by the column header:
//!
//! ```text
//! # config_fingerprint=3f2a... mode=transfer rank=16
//! k,dist_to_target,u,surrogate_norm,residual,gap,onestep_transfer_err
//! 0,5.8690474380116498e-1,2.1600000000000000e-1,1.0000000000000000e0,,1.23e-5,...
//! ```
//!
//! Floats are written with 17 significant digits in scientific notation,
//! which round-trips every `f64`. Absent channels are empty fields. Lines
//! end in `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use htcontrol::closed_loop::{RunMode, SpectraSnapshot, StepRecord, TrajectoryLog};
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const TRAJECTORY_HEADER: &str = "k,dist_to_target,u,surrogate_norm,residual,gap,onestep_transfer_err";
pub const SPECTRA_HEADER: &str = "node_id,alpha,sigma";
pub const SWEEP_HEADER: &str = "rank,tube,final_dist,max_residual";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Labels carried on the comment line of every CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FileLabels {
    pub fingerprint: String,
    pub mode: Option<RunMode>,
    pub rank: Option<usize>,
    pub k: Option<usize>,
}

impl FileLabels {
    fn render(&self) -> String {
        let mut line = format!("# config_fingerprint={}", self.fingerprint);
        if let Some(mode) = self.mode {
            write!(line, " mode={mode}").unwrap();
        }
        if let Some(rank) = self.rank {
            write!(line, " rank={rank}").unwrap();
        }
        if let Some(k) = self.k {
            write!(line, " k={k}").unwrap();
        }
        line
    }

    fn parse(path: &Path, line: &str) -> CliResult<Self> {
        let body = line
            .strip_prefix("# ")
            .ok_or_else(|| CliError::parse(path, 1, "missing `# config_fingerprint=...` line"))?;
        let mut labels = FileLabels::default();
        let mut seen_fingerprint = false;
        for item in body.split_whitespace() {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::parse(path, 1, format!("bad label `{item}`")))?;
            let bad = |what: &str| CliError::parse(path, 1, format!("bad {what} `{value}`"));
            match key {
                "config_fingerprint" => {
                    labels.fingerprint = value.to_string();
                    seen_fingerprint = true;
                }
                "mode" => labels.mode = Some(value.parse().map_err(|_| bad("mode"))?),
                "rank" => labels.rank = Some(value.parse().map_err(|_| bad("rank"))?),
                "k" => labels.k = Some(value.parse().map_err(|_| bad("step"))?),
                _ => return Err(CliError::parse(path, 1, format!("unknown label `{key}`"))),
            }
        }
        if !seen_fingerprint || labels.fingerprint.is_empty() {
            return Err(CliError::parse(path, 1, "missing config_fingerprint"));
        }
        Ok(labels)
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_file(path, &text)
}

pub fn trajectory_csv(log: &TrajectoryLog, fingerprint: &str) -> String {
    let labels = FileLabels {
        fingerprint: fingerprint.into(),
        mode: Some(log.mode),
        rank: log.rank,
        k: None,
    };
    let mut out = format!("{}\n{TRAJECTORY_HEADER}\n", labels.render());
    for r in &log.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.dist_to_target),
            fmt_f64(r.u),
            fmt_f64(r.surrogate_norm),
            fmt_opt(r.residual),
            fmt_opt(r.gap),
            fmt_opt(r.onestep_transfer_err),
        )
        .unwrap();
    }
    out
}

pub fn spectra_csv(snapshot: &SpectraSnapshot, log: &TrajectoryLog, fingerprint: &str) -> String {
    let labels = FileLabels {
        fingerprint: fingerprint.into(),
        mode: Some(log.mode),
        rank: log.rank,
        k: Some(snapshot.k),
    };
    let mut out = format!("{}\n{SPECTRA_HEADER}\n", labels.render());
    for (node, sigma) in &snapshot.spectra {
        for (i, s) in sigma.iter().enumerate() {
            writeln!(out, "{node},{},{}", i + 1, fmt_f64(*s)).unwrap();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rank: usize,
    pub tube: f64,
    pub final_dist: f64,
    pub max_residual: f64,
}

pub fn sweep_csv(rows: &[SweepRow], fingerprint: &str) -> String {
    let labels = FileLabels {
        fingerprint: fingerprint.into(),
        ..FileLabels::default()
    };
    let mut out = format!("{}\n{SWEEP_HEADER}\n", labels.render());
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.rank,
            fmt_f64(row.tube),
            fmt_f64(row.final_dist),
            fmt_f64(row.max_residual)
        )
        .unwrap();
    }
    out
}

/// Writes `trajectory.csv` and one `spectra_<k>.csv` per snapshot into `dir`.
pub fn write_log(dir: &Path, log: &TrajectoryLog, fingerprint: &str) -> CliResult<()> {
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(log, fingerprint))?;
    for snapshot in &log.spectra {
        write_file(
            &dir.join(format!("spectra_{}.csv", snapshot.k)),
            &spectra_csv(snapshot, log, fingerprint),
        )?;
    }
    Ok(())
}

/// A CSV file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedCsv {
    Trajectory(TrajectoryLog),
    Spectra(SpectraSnapshot),
    Sweep(Vec<SweepRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedFile {
    pub path: PathBuf,
    pub labels: FileLabels,
    pub content: LoadedCsv,
}

struct Row<'a> {
    path: &'a Path,
    line: usize,
    fields: Vec<&'a str>,
}

impl Row<'_> {
    fn err(&self, message: impl Into<String>) -> CliError {
        CliError::parse(self.path, self.line, message)
    }

    fn int(&self, i: usize) -> CliResult<usize> {
        self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("column {} is not an integer: `{}`", i + 1, self.fields[i])))
    }

    fn float(&self, i: usize) -> CliResult<f64> {
        self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("column {} is not a number: `{}`", i + 1, self.fields[i])))
    }

    fn opt_float(&self, i: usize) -> CliResult<Option<f64>> {
        if self.fields[i].is_empty() {
            Ok(None)
        } else {
            self.float(i).map(Some)
        }
    }
}

pub fn read_csv(path: &Path) -> CliResult<LoadedFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| CliError::parse(path, 1, "empty file"))?;
    let labels = FileLabels::parse(path, first)?;
    let header = lines
        .next()
        .ok_or_else(|| CliError::parse(path, 2, "missing column header"))?;
    let columns = header.split(',').count();
    let rows = lines.enumerate().map(|(i, line)| {
        let row = Row {
            path,
            line: i + 3,
            fields: line.split(',').collect(),
        };
        if row.fields.len() == columns {
            Ok(row)
        } else {
            Err(row.err(format!("expected {columns} fields, found {}", row.fields.len())))
        }
    });

    let content = match header {
        TRAJECTORY_HEADER => {
            let mut records = Vec::new();
            for row in rows {
                let row = row?;
                let k = row.int(0)?;
                if k != records.len() {
                    return Err(row.err(format!("expected step {}, found {k}", records.len())));
                }
                records.push(StepRecord {
                    k,
                    dist_to_target: row.float(1)?,
                    u: row.float(2)?,
                    surrogate_norm: row.float(3)?,
                    residual: row.opt_float(4)?,
                    gap: row.opt_float(5)?,
                    onestep_transfer_err: row.opt_float(6)?,
                    plant_norm: None,
                    surrogate_dist: None,
                });
            }
            if records.is_empty() {
                return Err(CliError::parse(path, 3, "trajectory has no records"));
            }
            let mode = labels.mode.unwrap_or_else(|| infer_mode(&records));
            let mut log = TrajectoryLog::new(mode, labels.rank);
            log.fingerprint = Some(labels.fingerprint.clone());
            log.records = records;
            LoadedCsv::Trajectory(log)
        }
        SPECTRA_HEADER => {
            let mut spectra: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for row in rows {
                let row = row?;
                let (node, alpha) = (row.int(0)?, row.int(1)?);
                let sigma = spectra.entry(node).or_default();
                if alpha != sigma.len() + 1 {
                    return Err(row.err(format!(
                        "node {node}: expected alpha {}, found {alpha}",
                        sigma.len() + 1
                    )));
                }
                sigma.push(row.float(2)?);
            }
            let k = labels
                .k
                .ok_or_else(|| CliError::parse(path, 1, "spectra file without a step label"))?;
            LoadedCsv::Spectra(SpectraSnapshot { k, spectra })
        }
        SWEEP_HEADER => {
            let mut sweep = Vec::new();
            for row in rows {
                let row = row?;
                sweep.push(SweepRow {
                    rank: row.int(0)?,
                    tube: row.float(1)?,
                    final_dist: row.float(2)?,
                    max_residual: row.float(3)?,
                });
            }
            LoadedCsv::Sweep(sweep)
        }
        other => return Err(CliError::parse(path, 2, format!("unrecognized header `{other}`"))),
    };
    Ok(LoadedFile {
        path: path.to_path_buf(),
        labels,
        content,
    })
}

fn infer_mode(records: &[StepRecord]) -> RunMode {
    if records.iter().any(|r| r.gap.is_some()) {
        RunMode::Transfer
    } else if records.iter().any(|r| r.residual.is_some()) {
        RunMode::Surrogate
    } else {
        RunMode::Nominal
    }
}
