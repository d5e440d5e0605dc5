//! CSV readers and writers for the three dataset files.
//!
//! Headers are fixed and checked verbatim; telemetry rows that fail to parse
//! are skipped, counted, and reported with their line number rather than
//! aborting the load.

use super::{ActionRecord, ActionSource, Cell, ModemSample, Partitions, SiteTopology};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const TELEMETRY_HEADER: [&str; 9] = [
    "wan_id", "carrier", "lte_rsrp", "lte_sinr", "lte_rsrq", "latency_ms", "time", "latitude",
    "longitude",
];
pub const ACTIONS_HEADER: [&str; 3] = ["wan_id", "time", "source"];
pub const TOPOLOGY_HEADER: [&str; 5] = ["cell_id", "site_id", "latitude", "longitude", "azimuth_deg"];

/// A telemetry row that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    /// 1-based line number in the file (header is line 1).
    pub line: u64,
    pub reason: String,
}

/// Accounting for one telemetry load.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub accepted: u64,
    pub skipped: u64,
    pub errors: Vec<RowError>,
}

fn check_header(got: &csv::StringRecord, want: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(Error::Schema(format!(
            "{what} header is {got:?}, expected {want:?}"
        )));
    }
    Ok(())
}

/// Load a telemetry CSV into per-modem partitions sorted by time.
///
/// Duplicate `(wan_id, time)` pairs keep the last occurrence in file order.
pub fn load_telemetry(path: impl AsRef<Path>) -> Result<(Partitions, LoadReport)> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    check_header(reader.headers()?, &TELEMETRY_HEADER, "telemetry")?;

    let mut partitions = Partitions::new();
    let mut report = LoadReport::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_sample(&record) {
            Ok(sample) => {
                report.accepted += 1;
                partitions.entry(sample.wan_id.clone()).or_default().push(sample);
            }
            Err(reason) => {
                report.skipped += 1;
                report.errors.push(RowError { line, reason });
            }
        }
    }
    for samples in partitions.values_mut() {
        // Stable sort keeps file order within equal timestamps, so keeping
        // the last of each run implements last-wins dedup.
        samples.sort_by_key(|s| s.time);
        samples.reverse();
        samples.dedup_by(|a, b| a.time == b.time);
        samples.reverse();
    }
    partitions.retain(|_, v| !v.is_empty());
    Ok((partitions, report))
}

fn parse_sample(record: &csv::StringRecord) -> std::result::Result<ModemSample, String> {
    if record.len() != TELEMETRY_HEADER.len() {
        return Err(format!("expected {} fields, got {}", TELEMETRY_HEADER.len(), record.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or("");
    let num = |i: usize| -> std::result::Result<f64, String> {
        field(i)
            .parse::<f64>()
            .map_err(|_| format!("bad {} value {:?}", TELEMETRY_HEADER[i], field(i)))
    };
    let wan_id = field(0).trim();
    if wan_id.is_empty() {
        return Err("empty wan_id".into());
    }
    Ok(ModemSample {
        wan_id: wan_id.to_string(),
        carrier: field(1).to_string(),
        rsrp: num(2)?,
        sinr: num(3)?,
        rsrq: num(4)?,
        latency_ms: num(5)?,
        time: field(6)
            .parse::<i64>()
            .map_err(|_| format!("bad time value {:?}", field(6)))?,
        latitude: num(7)?,
        longitude: num(8)?,
    })
}

/// Write partitions back out, rows ordered by (wan_id, time).
pub fn save_telemetry(path: impl AsRef<Path>, partitions: &Partitions) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{}", TELEMETRY_HEADER.join(","))?;
    let mut row = String::new();
    for samples in partitions.values() {
        for s in samples {
            row.clear();
            write!(
                row,
                "{},{},{},{},{},{},{},{},{}",
                s.wan_id, s.carrier, s.rsrp, s.sinr, s.rsrq, s.latency_ms, s.time, s.latitude,
                s.longitude
            )
            .expect("write to string");
            writeln!(out, "{row}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load the actions CSV, sorted by (time, wan_id). Strict: any bad row fails.
pub fn load_actions(path: impl AsRef<Path>) -> Result<Vec<ActionRecord>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    check_header(reader.headers()?, &ACTIONS_HEADER, "actions")?;
    let mut actions = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Schema(format!("actions line {line}: {what}"));
        if record.len() != ACTIONS_HEADER.len() {
            return Err(bad("wrong field count"));
        }
        let source = match record.get(2).unwrap_or("") {
            "manual" => ActionSource::Manual,
            "automated" => ActionSource::Automated,
            other => return Err(bad(&format!("unknown source {other:?}"))),
        };
        actions.push(ActionRecord {
            wan_id: record.get(0).unwrap_or("").to_string(),
            time: record
                .get(1)
                .unwrap_or("")
                .parse::<i64>()
                .map_err(|_| bad("bad time"))?,
            source,
        });
    }
    actions.sort_by(|a, b| (a.time, &a.wan_id).cmp(&(b.time, &b.wan_id)));
    Ok(actions)
}

pub fn save_actions(path: impl AsRef<Path>, actions: &[ActionRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{}", ACTIONS_HEADER.join(","))?;
    for a in actions {
        writeln!(out, "{},{},{}", a.wan_id, a.time, a.source)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<SiteTopology> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    check_header(reader.headers()?, &TOPOLOGY_HEADER, "topology")?;
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Schema(format!("topology line {line}: {what}"));
        if record.len() != TOPOLOGY_HEADER.len() {
            return Err(bad("wrong field count"));
        }
        let num = |i: usize| {
            record
                .get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad {}", TOPOLOGY_HEADER[i])))
        };
        cells.push(Cell {
            cell_id: record.get(0).unwrap_or("").to_string(),
            site_id: record.get(1).unwrap_or("").to_string(),
            latitude: num(2)?,
            longitude: num(3)?,
            azimuth_deg: num(4)?,
        });
    }
    Ok(SiteTopology { cells })
}

pub fn save_topology(path: impl AsRef<Path>, topology: &SiteTopology) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    writeln!(out, "{}", TOPOLOGY_HEADER.join(","))?;
    for c in &topology.cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.cell_id, c.site_id, c.latitude, c.longitude, c.azimuth_deg
        )?;
    }
    out.flush()?;
    Ok(())
}
