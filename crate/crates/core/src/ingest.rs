//! File ingestion: landing-station CSV, cross-layer JSONL, and intensity
//! grid CSV, plus the writers that produce the same formats.
//!
//! Loading normalizes everything: station and segment ids are assigned in
//! sorted identity order and records are sorted by canonical content, so a
//! permutation of input lines yields an identical in-memory dataset.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::hazard::{HazardError, IntensityGrid};
use crate::model::{
    CableSegment, CountryCode, CrossLayerRecord, GeoPoint, IpEndpoint, LandingStation,
    ModelError, Prediction, SegmentTable, StationRegistry,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: record has no predictions")]
    EmptyPredictions { path: PathBuf, line: usize },
    #[error("{path}:{line}: {reason}")]
    Range { path: PathBuf, line: usize, reason: String },
    #[error("{path}: duplicate station id {id:?}")]
    DuplicateStation { path: PathBuf, id: String },
    #[error("{path}: expected header {expected:?}, got {got:?}")]
    BadHeader { path: PathBuf, expected: &'static str, got: String },
}

/// Per-file load statistics. Dropped records are warnings, not errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub lines: usize,
    pub loaded: usize,
    /// Records dropped because a prediction referenced an unknown station.
    pub dropped_unknown_station: usize,
    /// Records whose prediction list contained the same canonical segment
    /// more than once; the duplicate with the higher score was kept.
    pub deduped_predictions: usize,
}

/// Everything one run needs: stations, the interned segment universe, the
/// normalized record list, and any loaded intensity grids by model name.
#[derive(Debug, Clone, Default)]
pub struct DatasetBundle {
    pub stations: StationRegistry,
    pub segments: SegmentTable,
    pub records: Vec<CrossLayerRecord>,
    pub grids: BTreeMap<String, Arc<IntensityGrid>>,
}

/// An unnormalized record: two endpoints plus (segment, score) predictions.
pub type RawLink = (IpEndpoint, IpEndpoint, Vec<(CableSegment, f64)>);

impl DatasetBundle {
    pub fn load(
        stations_path: &Path,
        crosslayer_path: &Path,
    ) -> Result<(DatasetBundle, LoadSummary), IngestError> {
        let stations = load_stations(stations_path)?;
        let (segments, records, summary) = load_cross_layer(crosslayer_path, &stations)?;
        Ok((
            DatasetBundle { stations, segments, records, grids: BTreeMap::new() },
            summary,
        ))
    }

    /// Builds a bundle from in-memory parts, applying the same normalization
    /// as file loading. Records referencing unknown stations are an error
    /// here, not a warning: in-memory construction has no excuse.
    pub fn from_parts(
        stations: Vec<LandingStation>,
        records: Vec<RawLink>,
    ) -> Result<DatasetBundle, ModelError> {
        let registry = StationRegistry::build(stations)?;
        let mut segs: Vec<CableSegment> = Vec::new();
        for (_, _, preds) in &records {
            for (seg, _) in preds {
                segs.push(seg.clone());
            }
        }
        let table = SegmentTable::build(segs, &registry)?;
        let mut out = Vec::with_capacity(records.len());
        for (a, b, preds) in records {
            let mut ps = Vec::with_capacity(preds.len());
            for (seg, score) in preds {
                let id = table.lookup(&seg).expect("segment interned above");
                ps.push(Prediction::new(id, score)?);
            }
            out.push(CrossLayerRecord::new(a, b, ps)?);
        }
        out.sort_by(|a, b| a.canonical_cmp(b));
        Ok(DatasetBundle {
            stations: registry,
            segments: table,
            records: out,
            grids: BTreeMap::new(),
        })
    }

    pub fn add_grid(&mut self, name: &str, grid: IntensityGrid) {
        self.grids.insert(name.to_string(), Arc::new(grid));
    }
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), source }
}

pub fn load_stations(path: &Path) -> Result<StationRegistry, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => IngestError::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("{other:?}"),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let expected = "id,lat,lon,country";
    let got: Vec<&str> = headers.iter().collect();
    if got != ["id", "lat", "lon", "country"] {
        return Err(IngestError::BadHeader {
            path: path.to_path_buf(),
            expected,
            got: got.join(","),
        });
    }

    let mut stations = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let parse = |reason: String| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let row = row.map_err(|e| parse(e.to_string()))?;
        if row.len() != 4 {
            return Err(parse(format!("expected 4 fields, got {}", row.len())));
        }
        let id = row[0].trim();
        if id.is_empty() {
            return Err(parse("empty station id".into()));
        }
        let lat: f64 = row[1].trim().parse().map_err(|_| parse(format!("bad latitude {:?}", &row[1])))?;
        let lon: f64 = row[2].trim().parse().map_err(|_| parse(format!("bad longitude {:?}", &row[2])))?;
        let country = CountryCode::new(row[3].trim()).map_err(|e| parse(e.to_string()))?;
        let st = LandingStation::new(id.to_string(), lat, lon, country).map_err(|e| {
            IngestError::Range { path: path.to_path_buf(), line, reason: e.to_string() }
        })?;
        stations.push(st);
    }

    StationRegistry::build(stations).map_err(|e| match e {
        ModelError::DuplicateStation(id) => {
            IngestError::DuplicateStation { path: path.to_path_buf(), id }
        }
        other => IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: other.to_string(),
        },
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    ip: String,
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    asn: Option<u64>,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrediction {
    cable: String,
    sa: String,
    sb: String,
    score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    a: RawEndpoint,
    b: RawEndpoint,
    pred: Vec<RawPrediction>,
}

fn endpoint_from_raw(raw: RawEndpoint) -> Result<IpEndpoint, String> {
    let country = match raw.country {
        None => None,
        Some(c) => Some(CountryCode::new(&c).map_err(|e| e.to_string())?),
    };
    let asn = match raw.asn {
        None => None,
        Some(a) => {
            if a > u32::MAX as u64 {
                return Err(format!("ASN {a} out of 32-bit range"));
            }
            Some(a as u32)
        }
    };
    let coord = match (raw.lat, raw.lon) {
        (None, None) => None,
        (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon).map_err(|e| e.to_string())?),
        _ => return Err("endpoint has lat without lon or lon without lat".into()),
    };
    IpEndpoint::new(&raw.ip, country, asn, coord).map_err(|e| e.to_string())
}

pub fn load_cross_layer(
    path: &Path,
    stations: &StationRegistry,
) -> Result<(SegmentTable, Vec<CrossLayerRecord>, LoadSummary), IngestError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);

    // First pass: parse lines, resolve stations, collect the segment set.
    struct Pending {
        a: IpEndpoint,
        b: IpEndpoint,
        preds: Vec<(CableSegment, f64)>,
    }
    let mut pending = Vec::new();
    let mut summary = LoadSummary::default();
    let mut segment_set: Vec<CableSegment> = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines += 1;
        let parse = |reason: String| IngestError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            reason,
        };
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if raw.pred.is_empty() {
            return Err(IngestError::EmptyPredictions {
                path: path.to_path_buf(),
                line: lineno,
            });
        }
        let a = endpoint_from_raw(raw.a).map_err(parse)?;
        let b = endpoint_from_raw(raw.b).map_err(parse)?;

        let mut preds = Vec::with_capacity(raw.pred.len());
        let mut known = true;
        for p in raw.pred {
            if !(0.0..=1.0).contains(&p.score) || !p.score.is_finite() {
                return Err(parse(format!("prediction score {} outside [0, 1]", p.score)));
            }
            let seg = CableSegment::new(p.cable, p.sa, p.sb).map_err(|e| parse(e.to_string()))?;
            if stations.lookup(&seg.station_a).is_none() || stations.lookup(&seg.station_b).is_none()
            {
                known = false;
            }
            preds.push((seg, p.score));
        }
        if !known {
            summary.dropped_unknown_station += 1;
            continue;
        }
        for (seg, _) in &preds {
            segment_set.push(seg.clone());
        }
        pending.push(Pending { a, b, preds });
    }

    let table = SegmentTable::build(segment_set, stations).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;

    let mut records = Vec::with_capacity(pending.len());
    for p in pending {
        let n_raw = p.preds.len();
        let preds: Vec<Prediction> = p
            .preds
            .into_iter()
            .map(|(seg, score)| {
                let id = table.lookup(&seg).expect("segment interned above");
                Prediction::new(id, score).expect("score validated above")
            })
            .collect();
        let rec = CrossLayerRecord::new(p.a, p.b, preds).expect("non-empty checked above");
        if rec.predictions().len() < n_raw {
            summary.deduped_predictions += 1;
        }
        records.push(rec);
    }
    records.sort_by(|a, b| a.canonical_cmp(b));
    summary.loaded = records.len();

    Ok((table, records, summary))
}

pub fn load_intensity_grid(
    path: &Path,
    resolution_deg: f64,
    units: &str,
) -> Result<IntensityGrid, IngestError> {
    let mut grid = IntensityGrid::new(resolution_deg, units).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path, io),
            other => IngestError::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("{other:?}"),
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != ["lat", "lon", "value"] {
        return Err(IngestError::BadHeader {
            path: path.to_path_buf(),
            expected: "lat,lon,value",
            got: got.join(","),
        });
    }

    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let parse = |reason: String| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let row = row.map_err(|e| parse(e.to_string()))?;
        if row.len() != 3 {
            return Err(parse(format!("expected 3 fields, got {}", row.len())));
        }
        let lat: f64 = row[0].trim().parse().map_err(|_| parse(format!("bad latitude {:?}", &row[0])))?;
        let lon: f64 = row[1].trim().parse().map_err(|_| parse(format!("bad longitude {:?}", &row[1])))?;
        let value: f64 = row[2].trim().parse().map_err(|_| parse(format!("bad value {:?}", &row[2])))?;
        grid.insert_sample(lat, lon, value).map_err(|e| match e {
            HazardError::OutOfRange { .. } => IngestError::Range {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            },
            other => parse(other.to_string()),
        })?;
    }
    Ok(grid)
}

pub fn write_stations(path: &Path, stations: &StationRegistry) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: format!("{other:?}"),
        },
    })?;
    w.write_record(["id", "lat", "lon", "country"])
        .map_err(|e| IngestError::Parse { path: path.to_path_buf(), line: 0, reason: e.to_string() })?;
    for (_, st) in stations.iter() {
        w.write_record([
            st.id.as_str(),
            &st.lat.to_string(),
            &st.lon.to_string(),
            st.country.as_str(),
        ])
        .map_err(|e| IngestError::Parse { path: path.to_path_buf(), line: 0, reason: e.to_string() })?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_cross_layer(
    path: &Path,
    table: &SegmentTable,
    records: &[CrossLayerRecord],
) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    );
    let endpoint_json = |e: &IpEndpoint| {
        serde_json::json!({
            "ip": e.ip,
            "country": e.country.map(|c| c.as_str().to_string()),
            "asn": e.asn,
            "lat": e.coord.map(|p| p.lat),
            "lon": e.coord.map(|p| p.lon),
        })
    };
    for rec in records {
        let preds: Vec<serde_json::Value> = rec
            .predictions()
            .iter()
            .map(|p| {
                let seg = &table.get(p.segment).segment;
                serde_json::json!({
                    "cable": seg.cable,
                    "sa": seg.station_a,
                    "sb": seg.station_b,
                    "score": p.score(),
                })
            })
            .collect();
        let line = serde_json::json!({
            "a": endpoint_json(&rec.a),
            "b": endpoint_json(&rec.b),
            "pred": preds,
        });
        writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn write_grid(path: &Path, grid: &IntensityGrid) -> Result<(), IngestError> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| io_err(path, e))?,
    );
    writeln!(out, "lat,lon,value").map_err(|e| io_err(path, e))?;
    for (center, v) in grid.iter_cells() {
        writeln!(out, "{},{},{}", center.lat, center.lon, v).map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}
