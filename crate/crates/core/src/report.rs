//! Evidence files: per-receipt CSV, summary CSV, δ CSV, a text report in
//! the layout of the reference gas tables, and run metadata.
//!
//! Numbers are written with a period decimal separator and no grouping.
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ScenarioSpec, SystemId};
use crate::gasmodel::Component;
use crate::scenarios::{Campaign, SystemRun};
use crate::stats::{self, Metric, SummaryTable, SystemSamples};

pub const RECEIPT_COLUMNS: [&str; 12] = [
    "system",
    "opIndex",
    "txGasUsed",
    "pvg",
    "actualGasUsed",
    "l1FeeShare",
    "accountValidation",
    "paymasterValidation",
    "execution",
    "postOp",
    "entryPointOverhead",
    "settlementBurn",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O on {path}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("receipt {op_index} of {system} breaks actualGasUsed = txGasUsed + pvg")]
    Identity { system: String, op_index: usize },
    #[error("malformed receipts file: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn receipts_csv(campaign: &Campaign) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECEIPT_COLUMNS)?;
    for run in &campaign.runs {
        for r in &run.receipts {
            let g = &r.receipt;
            if !g.identity_holds() {
                return Err(ReportError::Identity { system: run.system.to_string(), op_index: r.op_index });
            }
            let mut row = vec![
                run.system.label().to_string(),
                r.op_index.to_string(),
                g.tx_gas_used.to_string(),
                g.pvg.to_string(),
                g.actual_gas_used.to_string(),
                format!("{:.4}", g.l1_fee_share),
            ];
            row.extend(Component::ALL.iter().map(|&c| g.component(c).to_string()));
            row.push(g.settlement_burn.to_string());
            w.write_record(&row)?;
        }
    }
    finish(w)
}

/// Reads back `txGasUsed`/`actualGasUsed` per system, in order of first
/// appearance.
pub fn read_receipts_csv(text: &str) -> Result<Vec<SystemSamples>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| ReportError::Malformed(format!("missing column {name}")))
    };
    let (sys, tx, pvg, actual) = (col("system")?, col("txGasUsed")?, col("pvg")?, col("actualGasUsed")?);
    let mut out: Vec<SystemSamples> = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let num = |i: usize| -> Result<u64, ReportError> {
            record
                .get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| ReportError::Malformed(format!("row {}: bad number in column {}", line + 1, &headers[i])))
        };
        let (t, p, a) = (num(tx)?, num(pvg)?, num(actual)?);
        if t + p != a {
            return Err(ReportError::Malformed(format!("row {}: actualGasUsed != txGasUsed + pvg", line + 1)));
        }
        let name = record.get(sys).unwrap_or_default();
        let idx = match out.iter().position(|s| s.system == name) {
            Some(i) => i,
            None => {
                out.push(SystemSamples { system: name.to_string(), tx_gas: Vec::new(), actual_gas: Vec::new() });
                out.len() - 1
            }
        };
        out[idx].tx_gas.push(t as f64);
        out[idx].actual_gas.push(a as f64);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn summary_csv(table: &SummaryTable) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "system", "metric", "n", "mean", "median", "sigma", "ciLow", "ciHigh", "skewness", "excessKurtosis",
    ])?;
    for row in &table.rows {
        let s = &row.summary;
        w.write_record([
            row.system.clone(),
            row.metric.name().to_string(),
            s.n.to_string(),
            format!("{:.3}", s.mean),
            format!("{:.3}", s.median),
            format!("{:.3}", s.sigma),
            format!("{:.3}", s.ci95.0),
            format!("{:.3}", s.ci95.1),
            opt(s.skewness),
            opt(s.excess_kurtosis),
        ])?;
    }
    finish(w)
}

pub fn deltas_csv(table: &SummaryTable) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a", "b", "delta", "magnitude"])?;
    for d in &table.deltas {
        w.write_record([d.a.clone(), d.b.clone(), format!("{:.3}", d.result.delta), format!("{:?}", d.result.magnitude)])?;
    }
    finish(w)
}

/// Text tables: txGasUsed with CI half-widths, the PVG decomposition of
/// actualGasUsed, then the δ matrix.
pub fn render_report(table: &SummaryTable, campaign: Option<&Campaign>) -> String {
    let mut systems: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !systems.contains(&r.system.as_str()) {
            systems.push(&r.system);
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "L2 execution gas (txGasUsed), mean +/- 95% CI half-width");
    let _ = writeln!(out, "{:<12} {:>4} {:>12} {:>10} {:>10}", "system", "n", "mean", "+/-", "sigma");
    for sys in &systems {
        if let Some(s) = table.row(sys, Metric::TxGasUsed) {
            let half = (s.ci95.1 - s.ci95.0) / 2.0;
            let _ = writeln!(out, "{:<12} {:>4} {:>12.0} {:>10.0} {:>10.1}", sys, s.n, s.mean, half, s.sigma);
        }
    }
    let _ = writeln!(out, "\nGas decomposition (means)");
    let _ = writeln!(out, "{:<12} {:>14} {:>12} {:>10}", "system", "actualGasUsed", "txGasUsed", "PVG");
    for sys in &systems {
        if let (Some(a), Some(t)) = (table.row(sys, Metric::ActualGasUsed), table.row(sys, Metric::TxGasUsed)) {
            let _ = writeln!(out, "{:<12} {:>14.0} {:>12.0} {:>10.0}", sys, a.mean, t.mean, a.mean - t.mean);
        }
    }
    if !table.deltas.is_empty() {
        let _ = writeln!(out, "\nCliff's delta on txGasUsed (row vs column; positive means the row is lower)");
        let _ = write!(out, "{:<12}", "");
        for sys in &systems {
            let _ = write!(out, " {:>11}", sys);
        }
        let _ = writeln!(out);
        for a in &systems {
            let _ = write!(out, "{:<12}", a);
            for b in &systems {
                match table.delta(a, b) {
                    Some(d) => {
                        let _ = write!(out, " {:>11.3}", d.delta);
                    }
                    None => {
                        let _ = write!(out, " {:>11}", "-");
                    }
                }
            }
            let _ = writeln!(out);
        }
    }
    if let Some(c) = campaign {
        let _ = writeln!(out, "\nExcluded operations and conservation");
        for run in &c.runs {
            let _ = writeln!(
                out,
                "{:<12} excluded {:>3}  conserved {}",
                run.system.label(),
                run.excluded.len(),
                if run.conserved() { "yes" } else { "NO" }
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metadata {
    pub tool_version: &'static str,
    pub scenario: String,
    pub seed: u64,
    pub n: usize,
    pub gas_mode: crate::gasmodel::GasMode,
    pub noise: bool,
    pub resamples: usize,
    pub bootstrap: &'static str,
    pub systems: Vec<SystemId>,
    pub receipts: BTreeMap<String, usize>,
    pub excluded: BTreeMap<String, Vec<crate::scenarios::Excluded>>,
    pub conserved: BTreeMap<String, bool>,
}

pub fn metadata(spec: &ScenarioSpec, campaign: &Campaign) -> Metadata {
    let by_system = |f: &dyn Fn(&SystemRun) -> usize| -> BTreeMap<String, usize> {
        campaign.runs.iter().map(|r| (r.system.to_string(), f(r))).collect()
    };
    Metadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        scenario: spec.run.name.clone(),
        seed: spec.run.seed,
        n: spec.run.n,
        gas_mode: spec.run.gas_mode,
        noise: spec.run.noise,
        resamples: spec.run.resamples,
        bootstrap: "percentile bootstrap of the mean, nearest-rank quantiles, ChaCha8 stream = summary row index",
        systems: spec.run.systems.clone(),
        receipts: by_system(&|r| r.receipts.len()),
        excluded: campaign.runs.iter().map(|r| (r.system.to_string(), r.excluded.clone())).collect(),
        conserved: campaign.runs.iter().map(|r| (r.system.to_string(), r.conserved())).collect(),
    }
}

/// Paths written by [`write_campaign`].
#[derive(Clone, Debug)]
pub struct CampaignFiles {
    pub receipts: PathBuf,
    pub summary: PathBuf,
    pub deltas: PathBuf,
    pub report: PathBuf,
    pub metadata: PathBuf,
}

/// Summarizes `campaign` and writes every evidence file into `dir`.
pub fn write_campaign(dir: &Path, spec: &ScenarioSpec, campaign: &Campaign) -> Result<CampaignFiles, crate::Error> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table = stats::summarize(&campaign.samples(), spec.run.resamples, spec.run.seed)?;
    let files = CampaignFiles {
        receipts: dir.join("receipts.csv"),
        summary: dir.join("summary.csv"),
        deltas: dir.join("deltas.csv"),
        report: dir.join("report.txt"),
        metadata: dir.join("metadata.json"),
    };
    let receipts = receipts_csv(campaign)?;
    let summary = summary_csv(&table)?;
    let deltas = deltas_csv(&table)?;
    let report = render_report(&table, Some(campaign));
    let meta = serde_json::to_string_pretty(&metadata(spec, campaign)).expect("metadata serializes") + "\n";
    write_atomic(&files.receipts, receipts.as_bytes())?;
    write_atomic(&files.summary, summary.as_bytes())?;
    write_atomic(&files.deltas, deltas.as_bytes())?;
    write_atomic(&files.report, report.as_bytes())?;
    write_atomic(&files.metadata, meta.as_bytes())?;
    Ok(files)
}
