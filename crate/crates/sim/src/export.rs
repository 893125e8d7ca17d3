//! Trace directory layout:
//!
//! ```text
//! run_000.csv ...        t, mean_loss, d_t, vectors_cum, scalars_cum, epsilon
//! loss_vs_vectors.csv    t, vectors_cum, mean_loss, stderr  (ensemble mean)
//! summary.json
//! config.json            the resolved configuration
//! ledger.json            per run and worker privacy reports (private runs)
//! ```
//!
//! Absent values (`d_t` without a known optimum, `epsilon` without privacy)
//! are written as empty fields.

use std::fs;
use std::path::{Path, PathBuf};

use leasgd_core::privacy::LedgerReport;
use leasgd_core::{Error as CoreError, RunTrace, TraceRow};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, SimError};
use crate::experiment::{mean_curve, Experiment, Summary};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LEDGER_FILE: &str = "ledger.json";
pub const CURVE_FILE: &str = "loss_vs_vectors.csv";

/// One line of a per-run trace file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: u64,
    pub mean_loss: f64,
    pub d_t: Option<f64>,
    pub vectors_cum: u64,
    pub scalars_cum: u64,
    pub epsilon: Option<f64>,
}

impl From<&TraceRow> for CsvRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            t: r.t,
            mean_loss: r.mean_loss,
            d_t: r.d_t,
            vectors_cum: r.vectors_cum,
            scalars_cum: r.scalars_cum,
            epsilon: r.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub run: usize,
    pub seed: u64,
    pub worker: usize,
    pub report: LedgerReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub runs: Vec<PathBuf>,
    pub summary: PathBuf,
    pub curve: PathBuf,
    pub ledger: Option<PathBuf>,
}

pub fn run_file_name(run: usize) -> String {
    format!("run_{run:03}.csv")
}

/// Write every file of the trace directory. An empty ensemble is rejected
/// before anything touches the file system.
pub fn export(experiment: &Experiment, config: &RunConfig, dir: &Path) -> Result<ExportPaths> {
    if experiment.traces.is_empty() {
        return Err(SimError::Analysis(CoreError::EmptyEnsemble));
    }
    let curve = mean_curve(&experiment.traces)?;
    let ledgers = ledger_entries(&experiment.traces, experiment.summary.delta)?;

    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let runs = experiment
        .traces
        .iter()
        .enumerate()
        .map(|(i, trace)| {
            let path = dir.join(run_file_name(i));
            write_csv(&path, trace.rows.iter().map(CsvRow::from))?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    let curve_path = dir.join(CURVE_FILE);
    write_csv(&curve_path, curve)?;
    let summary = dir.join(SUMMARY_FILE);
    write_json(&summary, &experiment.summary)?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    let ledger = if ledgers.is_empty() {
        None
    } else {
        let path = dir.join(LEDGER_FILE);
        write_json(&path, &ledgers)?;
        Some(path)
    };
    Ok(ExportPaths {
        runs,
        summary,
        curve: curve_path,
        ledger,
    })
}

fn ledger_entries(traces: &[RunTrace], delta: Option<f64>) -> Result<Vec<LedgerEntry>> {
    let Some(delta) = delta else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (run, trace) in traces.iter().enumerate() {
        for (worker, ledger) in trace.ledgers.iter().enumerate() {
            if !ledger.is_private() || ledger.steps() == 0 {
                continue;
            }
            out.push(LedgerEntry {
                run,
                seed: trace.seed,
                worker,
                report: ledger.report(delta).map_err(SimError::Analysis)?,
            });
        }
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |source| SimError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| SimError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |source| SimError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    reader.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| SimError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| SimError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| SimError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    read_json(&dir.join(SUMMARY_FILE))
}

/// All `run_NNN.csv` files of a trace directory, in run order.
pub fn read_runs(dir: &Path) -> Result<Vec<Vec<CsvRow>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| SimError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SimError::Analysis(CoreError::EmptyEnsemble));
    }
    paths.iter().map(|p| read_csv(p)).collect()
}
