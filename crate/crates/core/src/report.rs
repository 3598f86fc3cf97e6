//! CSV and manifest emission. Every writer sorts its rows and formats
//! numbers through Rust's shortest-round-trip float display, so a given
//! result always serializes to the same bytes. Timings and environment
//! details go to the JSON manifest, never into the CSVs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::cluster::ClusterResult;
use crate::analysis::sensitivity::SensitivityReport;
use crate::analysis::stats::{ConnectivityEntry, IntraShare};
use crate::analysis::sweep::SweepRow;
use crate::analysis::{ImpactReport, InterconnectReport, RiskProfile};
use crate::embed::{CsMap, PcNcMap};
use crate::identify::ImpactedSet;
use crate::ingest::DatasetBundle;
use crate::model::SegmentId;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} line {line}: expected header {expected:?}")]
    BadHeader { path: PathBuf, line: u64, expected: String },
    #[error("{path} line {line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },
    #[error("{path} line {line}: unknown segment {key:?}")]
    UnknownSegment { path: PathBuf, line: u64, key: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, source: csv::Error) -> ReportError {
    ReportError::Csv { path: path.to_path_buf(), source }
}

/// Shortest round-trip decimal form: 3.0 prints as "3", 0.25 as "0.25".
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), ReportError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

pub fn write_impact_report(path: &Path, report: &ImpactReport) -> Result<(), ReportError> {
    write_rows(
        path,
        &["component", "impacted", "total", "fraction"],
        report.iter().map(|(c, ci)| {
            vec![
                c.as_str().to_string(),
                fmt_f64(ci.impacted),
                ci.total.to_string(),
                fmt_f64(ci.fraction()),
            ]
        }),
    )
}

pub fn write_risk_profile<E: Ord + Display>(
    path: &Path,
    profile: &RiskProfile<E>,
) -> Result<(), ReportError> {
    write_rows(
        path,
        &["entity", "affected", "total", "fraction"],
        profile.entries.iter().map(|(e, r)| {
            vec![
                e.to_string(),
                fmt_f64(r.affected),
                r.total.to_string(),
                fmt_f64(r.fraction()),
            ]
        }),
    )
}

pub fn write_interconnect(path: &Path, report: &InterconnectReport) -> Result<(), ReportError> {
    write_rows(
        path,
        &[
            "country",
            "intra_affected",
            "intra_total",
            "intra_fraction",
            "inter_affected",
            "inter_total",
            "inter_fraction",
        ],
        report.entries.iter().map(|(c, e)| {
            vec![
                c.to_string(),
                e.intra_affected.to_string(),
                e.intra_total.to_string(),
                fmt_f64(e.intra_fraction()),
                e.inter_affected.to_string(),
                e.inter_total.to_string(),
                fmt_f64(e.inter_fraction()),
            ]
        }),
    )
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), ReportError> {
    write_rows(
        path,
        &["p", "strategy", "component", "mean_fraction"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.p),
                r.strategy.as_str().to_string(),
                r.component.as_str().to_string(),
                fmt_f64(r.mean_fraction),
            ]
        }),
    )
}

pub fn write_clusters(path: &Path, result: &ClusterResult) -> Result<(), ReportError> {
    write_rows(
        path,
        &["country", "cluster_id"],
        result
            .assignments
            .iter()
            .map(|(c, id)| vec![c.to_string(), id.to_string()]),
    )
}

pub fn write_dendrogram(path: &Path, result: &ClusterResult) -> Result<(), ReportError> {
    write_rows(
        path,
        &["merge_idx", "left", "right", "distance"],
        result.merges.iter().enumerate().map(|(i, m)| {
            vec![i.to_string(), m.left.clone(), m.right.clone(), fmt_f64(m.distance)]
        }),
    )
}

/// Appends one mix's rows; a sweep over mixes calls this once per report
/// into the same row buffer before writing.
pub fn sensitivity_rows(report: &SensitivityReport) -> Vec<Vec<String>> {
    report
        .mean
        .iter()
        .map(|(c, ci)| {
            vec![report.mix.label(), c.as_str().to_string(), fmt_f64(ci.fraction())]
        })
        .collect()
}

pub fn write_sensitivity(path: &Path, reports: &[SensitivityReport]) -> Result<(), ReportError> {
    write_rows(
        path,
        &["mix", "component", "mean_fraction"],
        reports.iter().flat_map(sensitivity_rows),
    )
}

pub fn write_impacted_segments(
    path: &Path,
    set: &ImpactedSet,
    bundle: &DatasetBundle,
) -> Result<(), ReportError> {
    write_rows(
        path,
        &["cable", "station_a", "station_b"],
        set.segments.iter().map(|&id| {
            let seg = &bundle.segments.get(id).segment;
            vec![seg.cable.clone(), seg.station_a.clone(), seg.station_b.clone()]
        }),
    )
}

/// Reads a segment list written by `write_impacted_segments` back into an
/// impacted set, so analyses can run on a previously identified failure.
pub fn read_impacted_segments(
    path: &Path,
    bundle: &DatasetBundle,
) -> Result<ImpactedSet, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    {
        let headers = rdr.headers().map_err(|e| csv_err(path, e))?;
        let expected = ["cable", "station_a", "station_b"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(ReportError::BadHeader {
                path: path.to_path_buf(),
                line: 1,
                expected: expected.join(","),
            });
        }
    }
    let mut set = ImpactedSet::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 3 {
            return Err(ReportError::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let seg = crate::model::CableSegment::new(
            rec[0].to_string(),
            rec[1].to_string(),
            rec[2].to_string(),
        )
        .map_err(|e| ReportError::Parse {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        let id: SegmentId = bundle.segments.lookup(&seg).ok_or_else(|| {
            ReportError::UnknownSegment {
                path: path.to_path_buf(),
                line,
                key: seg.to_string(),
            }
        })?;
        set.segments.insert(id);
    }
    Ok(set)
}

pub fn write_connectivity<E: Display>(
    path: &Path,
    entries: &BTreeMap<E, ConnectivityEntry>,
) -> Result<(), ReportError> {
    write_rows(
        path,
        &["entity", "segments", "cables", "stations", "p_countries"],
        entries.iter().map(|(e, c)| {
            vec![
                e.to_string(),
                c.segments.to_string(),
                c.cables.to_string(),
                c.stations.to_string(),
                c.p_countries.to_string(),
            ]
        }),
    )
}

pub fn write_intra_share(
    path: &Path,
    entries: &BTreeMap<crate::model::CountryCode, IntraShare>,
) -> Result<(), ReportError> {
    write_rows(
        path,
        &["country", "intra_links", "total_links", "fraction"],
        entries.iter().map(|(c, s)| {
            vec![
                c.to_string(),
                s.intra_links.to_string(),
                s.total_links.to_string(),
                fmt_f64(s.fraction()),
            ]
        }),
    )
}

pub fn write_cs_map_dump<E>(
    path: &Path,
    map: &CsMap<E>,
    bundle: &DatasetBundle,
) -> Result<(), ReportError>
where
    E: Ord + Copy + std::hash::Hash + Display,
{
    write_rows(
        path,
        &["segment", "entity", "link_count"],
        map.dump_rows().into_iter().map(|(s, e, n)| {
            vec![
                bundle.segments.get(s).segment.to_string(),
                e.to_string(),
                n.to_string(),
            ]
        }),
    )
}

pub fn write_pc_nc_dump(path: &Path, map: &PcNcMap) -> Result<(), ReportError> {
    write_rows(
        path,
        &["p_country", "n_country", "link_count"],
        map.iter().map(|((pc, nc), links)| {
            vec![pc.to_string(), nc.to_string(), links.len().to_string()]
        }),
    )
}

pub fn sha256_file(path: &Path) -> Result<String, ReportError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = BufReader::new(f);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// What a run did: inputs and outputs by content digest, stage timings, and
/// anything worth flagging. The one output where wall-clock time belongs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub mode: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u128>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, mode: &str, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            mode: mode.to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), ReportError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<(), ReportError> {
        let digest = sha256_file(path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, digest);
        Ok(())
    }

    pub fn timing(&mut self, stage: &str, ms: u128) {
        self.timings_ms.insert(stage.to_string(), ms);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn write(&self, path: &Path) -> Result<(), ReportError> {
        let mut f = File::create(path).map_err(|e| io_err(path, e))?;
        serde_json::to_writer_pretty(&mut f, self)
            .map_err(|e| ReportError::Json { path: path.to_path_buf(), source: e })?;
        f.write_all(b"\n").map_err(|e| io_err(path, e))?;
        Ok(())
    }
}
