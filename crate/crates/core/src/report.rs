//! JSON reports and their CSV projections.
//!
//! A report is a pure function of config and seed: wall-clock time lives in
//! a separate `<stem>.timing.json`, so identical inputs give byte-identical
//! reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{NamedScan, ScalarResult, Verdict};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    /// SHA-256 of the raw config bytes.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub request: serde_json::Value,
    pub results: Vec<ScalarResult>,
    pub scans: Vec<NamedScan>,
    pub verdicts: Vec<Verdict>,
    pub series: Vec<Series>,
    pub provenance: Provenance,
}

pub fn config_hash(raw: &[u8]) -> String {
    Sha256::digest(raw)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Report {
    pub fn new(command: &str, request: serde_json::Value, seed: u64, raw_config: &[u8]) -> Self {
        Report {
            schema: REPORT_SCHEMA,
            command: command.to_string(),
            request,
            results: Vec::new(),
            scans: Vec::new(),
            verdicts: Vec::new(),
            series: Vec::new(),
            provenance: Provenance {
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config_hash(raw_config),
            },
        }
    }

    pub fn result(&self, name: &str) -> Option<&ScalarResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read report {}: {e}", path.display()))?;
        let r: Report = serde_json::from_str(&text)
            .map_err(|e| format!("report {} does not parse: {e}", path.display()))?;
        if r.schema != REPORT_SCHEMA {
            return Err(format!("unsupported report schema {}", r.schema));
        }
        Ok(r)
    }
}

#[derive(Serialize)]
struct ColumnDoc {
    file: String,
    columns: Vec<String>,
    rows: usize,
}

fn write_csv(path: &Path, columns: &[String], rows: &[Vec<f64>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    w.write_record(columns).map_err(std::io::Error::other)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// One CSV per scan (`cutoff,value,error`) and per series, named
/// `<stem>.<name>.csv`, plus `<stem>.columns.json` listing every file's columns.
pub fn emit_plot_data(
    report: &Report,
    stem: &str,
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut docs = Vec::new();
    let mut emit = |name: &str, columns: Vec<String>, rows: Vec<Vec<f64>>| -> std::io::Result<()> {
        let file = format!("{stem}.{name}.csv");
        let path = out_dir.join(&file);
        write_csv(&path, &columns, &rows)?;
        docs.push(ColumnDoc {
            file,
            columns,
            rows: rows.len(),
        });
        written.push(path);
        Ok(())
    };
    for s in &report.scans {
        let r = &s.record;
        let rows = (0..r.cutoffs.len())
            .map(|i| vec![r.cutoffs[i], r.values[i], r.errors[i]])
            .collect();
        emit(
            &s.name,
            vec!["cutoff".into(), "value".into(), "error".into()],
            rows,
        )?;
    }
    for s in &report.series {
        emit(&s.name, s.columns.clone(), s.rows.clone())?;
    }
    let side = out_dir.join(format!("{stem}.columns.json"));
    let mut text = serde_json::to_string_pretty(&docs).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&side, text)?;
    written.push(side);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{ScanRecord, ScanVerdict};

    fn sample() -> Report {
        let mut r = Report::new("scan-divergence", serde_json::json!({"a": 1}), 3, b"{}");
        r.scans.push(NamedScan {
            name: "energy_rate".into(),
            record: ScanRecord {
                cutoffs: vec![5.0, 10.0, 20.0, 40.0],
                values: vec![1.0, 2.0, 4.0, 8.0],
                errors: vec![0.0; 4],
                verdict: ScanVerdict::Diverging,
            },
        });
        r.series.push(Series {
            name: "history".into(),
            columns: vec!["step".into(), "x".into()],
            rows: vec![vec![0.0, 1.5]],
        });
        r
    }

    #[test]
    fn round_trip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = sample();
        r.write(&p).unwrap();
        assert_eq!(Report::read(&p).unwrap(), r);
        assert_eq!(
            config_hash(b"{}"),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
    }

    #[test]
    fn plot_data_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&sample(), "r", dir.path()).unwrap();
        let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(f).unwrap()).collect();
        let again = emit_plot_data(&sample(), "r", dir.path()).unwrap();
        assert_eq!(files, again);
        assert_eq!(
            first,
            again
                .iter()
                .map(|f| fs::read(f).unwrap())
                .collect::<Vec<_>>()
        );
        let scan = fs::read_to_string(dir.path().join("r.energy_rate.csv")).unwrap();
        assert_eq!(scan.lines().count(), 5);
        assert!(scan.starts_with("cutoff,value,error\n"));
    }
}
