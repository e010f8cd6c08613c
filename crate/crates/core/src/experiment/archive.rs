//! Report tables and result archives.
//!
//! Every table is long format: key columns followed by estimate, stderr, n.
//! CSV floats carry 17 significant digits so files diff cleanly between runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Format};
use crate::error::{invalid, LabError, Result};
use crate::stats::Estimate;

/// A float with 17 significant digits.
pub fn fmt_f(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{x:.16e}")
}

pub fn fmt_coords(c: &[i64]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub key: Vec<String>,
    pub estimate: f64,
    pub stderr: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub name: String,
    pub keys: Vec<String>,
    pub rows: Vec<Row>,
}

impl ReportTable {
    pub fn new(name: &str, keys: &[&str]) -> Self {
        ReportTable { name: name.into(), keys: keys.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, key: Vec<String>, e: Estimate) {
        debug_assert_eq!(key.len(), self.keys.len());
        self.rows.push(Row { key, estimate: e.value, stderr: e.stderr, n: e.n });
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = self.keys.clone();
        h.extend(["estimate", "stderr", "n"].map(String::from));
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(vec![]);
        let io = |e: csv::Error| LabError::Data(e.to_string());
        w.write_record(self.header()).map_err(io)?;
        for r in &self.rows {
            let mut rec = r.key.clone();
            rec.extend([fmt_f(r.estimate), fmt_f(r.stderr), r.n.to_string()]);
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| LabError::Data(e.to_string()))
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let io = |e: csv::Error| LabError::Data(e.to_string());
        let header: Vec<String> = r.headers().map_err(io)?.iter().map(String::from).collect();
        let nk = header.len().checked_sub(3).filter(|_| header.ends_with(&["estimate".into(), "stderr".into(), "n".into()]));
        let Some(nk) = nk else { return invalid(format!("table {name} lacks estimate/stderr/n columns")) };
        let mut t = ReportTable { name: name.into(), keys: header[..nk].to_vec(), rows: vec![] };
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let f = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| LabError::Data(format!("bad number '{}' in {name}", &rec[i])))
            };
            t.rows.push(Row {
                key: (0..nk).map(|i| rec[i].to_string()).collect(),
                estimate: f(nk)?,
                stderr: f(nk + 1)?,
                n: rec[nk + 2].parse().map_err(|_| LabError::Data(format!("bad count in {name}")))?,
            });
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_seconds: f64,
    pub tables: Vec<String>,
    /// problems found by the run (inconclusive scans, failed assertions)
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultArchive {
    pub manifest: Manifest,
    pub tables: Vec<ReportTable>,
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    manifest: Manifest,
    table: ReportTable,
}

fn io_err(path: &Path, e: std::io::Error) -> LabError {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
}

impl ResultArchive {
    pub fn new(config: ExperimentConfig, tables: Vec<ReportTable>, flags: Vec<String>, wall_seconds: f64) -> Self {
        let manifest = Manifest {
            config,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_seconds,
            tables: tables.iter().map(|t| t.name.clone()).collect(),
            flags,
        };
        ResultArchive { manifest, tables }
    }

    pub fn table(&self, name: &str) -> Option<&ReportTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Write `manifest.json` plus one file per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut written = Vec::new();
        let mpath = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&mpath, text).map_err(|e| io_err(&mpath, e))?;
        written.push(mpath);
        for t in &self.tables {
            let (path, body) = match self.manifest.config.format {
                Format::Csv => (dir.join(format!("{}.csv", t.name)), t.to_csv()?),
                Format::Json => (
                    dir.join(format!("{}.json", t.name)),
                    serde_json::to_string_pretty(&JsonReport { manifest: self.manifest.clone(), table: t.clone() })?,
                ),
            };
            fs::write(&path, body).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut tables = Vec::new();
        for name in &manifest.tables {
            let t = match manifest.config.format {
                Format::Csv => {
                    let path = dir.join(format!("{name}.csv"));
                    ReportTable::from_csv(name, &fs::read_to_string(&path).map_err(|e| io_err(&path, e))?)?
                }
                Format::Json => {
                    let path = dir.join(format!("{name}.json"));
                    let r: JsonReport =
                        serde_json::from_str(&fs::read_to_string(&path).map_err(|e| io_err(&path, e))?)?;
                    r.table
                }
            };
            tables.push(t);
        }
        Ok(ResultArchive { manifest, tables })
    }
}

/// Pool archives from runs that differ only in seed or stream. Rows with
/// equal keys combine as independent sample means:
/// mean = sum n_i m_i / N, stderr = sqrt(sum n_i^2 se_i^2) / N.
pub fn merge(archives: &[ResultArchive]) -> Result<ResultArchive> {
    let Some(first) = archives.first() else { return invalid("nothing to merge") };
    for a in &archives[1..] {
        if !first.manifest.config.compatible(&a.manifest.config) {
            return invalid("archives come from different configurations");
        }
        if a.manifest.tables != first.manifest.tables {
            return invalid("archives hold different tables");
        }
    }
    let mut tables = Vec::new();
    for (ti, t0) in first.tables.iter().enumerate() {
        let mut pooled: BTreeMap<Vec<String>, Vec<&Row>> = BTreeMap::new();
        let mut order: Vec<Vec<String>> = Vec::new();
        for a in archives {
            let t = &a.tables[ti];
            if t.keys != t0.keys {
                return invalid(format!("table {} has different columns", t0.name));
            }
            for r in &t.rows {
                pooled
                    .entry(r.key.clone())
                    .or_insert_with(|| {
                        order.push(r.key.clone());
                        vec![]
                    })
                    .push(r);
            }
        }
        let mut out = ReportTable { name: t0.name.clone(), keys: t0.keys.clone(), rows: vec![] };
        for key in order {
            let rows = &pooled[&key];
            let n: u64 = rows.iter().map(|r| r.n).sum();
            // a lone row passes through untouched; exact rows (n = 0) keep the first value
            let row = if rows.len() == 1 || n == 0 {
                Row { n, ..rows[0].clone() }
            } else {
                let nf = n as f64;
                let s: f64 = rows.iter().map(|r| r.n as f64 * r.estimate).sum();
                let v: f64 = rows.iter().map(|r| (r.n as f64 * r.stderr).powi(2)).sum();
                Row { key, estimate: s / nf, stderr: v.sqrt() / nf, n }
            };
            out.rows.push(row);
        }
        tables.push(out);
    }
    let mut config = first.manifest.config.clone();
    config.command = first.manifest.config.command.clone();
    let wall = archives.iter().map(|a| a.manifest.wall_seconds).sum();
    let flags = archives.iter().flat_map(|a| a.manifest.flags.clone()).collect();
    Ok(ResultArchive::new(config, tables, flags, wall))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(seed: u64, values: &[(f64, f64, u64)]) -> ResultArchive {
        let mut c = ExperimentConfig::new("two-point");
        c.seed = seed;
        let mut t = ReportTable::new("tau", &["x"]);
        for (i, &(m, s, n)) in values.iter().enumerate() {
            t.push(vec![i.to_string()], Estimate::new(m, s, n));
        }
        ResultArchive::new(c, vec![t], vec![], 0.0)
    }

    #[test]
    fn csv_round_trip_keeps_17_digits() {
        let a = archive(1, &[(0.1 + 0.2, 1.0 / 3.0, 10), (0.0, 0.0, 0)]);
        let text = a.tables[0].to_csv().unwrap();
        assert!(text.starts_with("x,estimate,stderr,n\n"));
        let back = ReportTable::from_csv("tau", &text).unwrap();
        assert_eq!(back, a.tables[0]);
        assert!(ReportTable::from_csv("bad", "a,b\n1,2\n").is_err());
    }

    #[test]
    fn merge_pools_means() {
        let a = archive(1, &[(1.0, 0.2, 100)]);
        let b = archive(2, &[(2.0, 0.2, 300)]);
        let m = merge(&[a.clone(), b]).unwrap();
        let r = &m.tables[0].rows[0];
        assert!((r.estimate - 1.75).abs() < 1e-15);
        assert_eq!(r.n, 400);
        assert!((r.stderr - (100f64.powi(2) * 0.04 + 300f64.powi(2) * 0.04).sqrt() / 400.0).abs() < 1e-15);
        assert_eq!(merge(std::slice::from_ref(&a)).unwrap().tables, a.tables);
        let mut c = archive(3, &[(1.0, 0.1, 10)]);
        c.manifest.config.dim = 5;
        assert!(merge(&[a, c]).is_err());
    }

    #[test]
    fn write_and_read_both_formats() {
        let dir = std::env::temp_dir().join(format!("lacelab-archive-{}", std::process::id()));
        for format in [Format::Csv, Format::Json] {
            let mut a = archive(1, &[(0.5, 0.1, 7)]);
            a.manifest.config.format = format;
            a.write(&dir).unwrap();
            assert_eq!(ResultArchive::read(&dir).unwrap(), a);
        }
        fs::remove_dir_all(&dir).ok();
    }
}
