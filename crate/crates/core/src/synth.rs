//! Deterministic synthetic worlds for testing, plus brute-force oracles
//! that recompute analysis results straight from the records, skipping the
//! cross-layer maps entirely. Differences between a pipeline result and its
//! oracle mean a bug in one of them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::sensitivity::SensitivityMix;
use crate::analysis::stats::{ConnectivityEntry, IntraShare};
use crate::analysis::{Component, ComponentImpact, ImpactReport, InterconnectEntry};
use crate::embed::PredictionMode;
use crate::hazard::{pga_to_mmi, standard_defaults, EventModel, IntensityGrid, IntensitySource, ValueTransform};
use crate::ingest::DatasetBundle;
use crate::model::{
    AsLink, CableSegment, CountryCode, CrossLayerRecord, IpEndpoint, LandingStation, LinkId,
    LinkKind, Prediction, SegmentId,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad world spec: {0}")]
    BadSpec(String),
    #[error("no standard model defaults for {0:?}")]
    UnknownModel(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Hazard(#[from] crate::hazard::HazardError),
}

fn default_parallel_group_size() -> usize {
    4
}

/// Shape of a generated hazard grid. Values are in the model's native grid
/// units, so for a PGA-driven model the ranges are PGA values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Model kind; must have standard defaults ("earthquake", "hurricane",
    /// "sea_rise").
    pub name: String,
    pub resolution_deg: f64,
    /// Cells scattered uniformly over the world box.
    pub background_cells: usize,
    pub background_range: (f64, f64),
    /// Cells placed on top of randomly chosen landing stations, so they are
    /// guaranteed to sit within any probe radius of a station.
    pub hot_spots: usize,
    pub hot_range: (f64, f64),
    #[serde(default)]
    pub threshold_override: Option<f64>,
    #[serde(default)]
    pub probe_km_override: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            name: "hurricane".into(),
            resolution_deg: 0.5,
            background_cells: 40,
            background_range: (0.0, 40.0),
            hot_spots: 5,
            hot_range: (80.0, 120.0),
            threshold_override: None,
            probe_km_override: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_countries: usize,
    pub n_stations: usize,
    /// Cables with 1 to `segments_per_cable_max` chained segments each.
    pub n_cables: usize,
    pub segments_per_cable_max: usize,
    /// Groups of single-segment cables sharing one station pair, for
    /// exercising parallel-cable prediction weights.
    pub parallel_groups: usize,
    pub parallel_group_size: usize,
    pub n_links: usize,
    pub max_predictions: usize,
    pub n_asns: usize,
    pub unknown_country_fraction: f64,
    pub unknown_asn_fraction: f64,
    pub lat_range: (f64, f64),
    pub lon_range: (f64, f64),
    pub grid: Option<GridSpec>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 0,
            n_countries: 8,
            n_stations: 24,
            n_cables: 10,
            segments_per_cable_max: 3,
            parallel_groups: 1,
            parallel_group_size: default_parallel_group_size(),
            n_links: 200,
            max_predictions: 3,
            n_asns: 12,
            unknown_country_fraction: 0.1,
            unknown_asn_fraction: 0.1,
            lat_range: (-55.0, 55.0),
            lon_range: (-170.0, 170.0),
            grid: None,
        }
    }
}

#[derive(Debug)]
pub struct SynthWorld {
    pub bundle: DatasetBundle,
    /// The hazard model matching the generated grid, when one was asked for.
    pub model: Option<EventModel>,
}

fn country_code(i: usize) -> CountryCode {
    let a = (b'A' + (i / 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    CountryCode::new(&format!("{a}{b}")).expect("two ascii letters")
}

fn link_ip(n: usize) -> String {
    format!("10.{}.{}.{}", (n >> 16) & 255, (n >> 8) & 255, n & 255)
}

fn validate(spec: &WorldSpec) -> Result<(), SynthError> {
    let bad = |m: &str| Err(SynthError::BadSpec(m.to_string()));
    if spec.n_countries == 0 || spec.n_countries > 26 * 26 {
        return bad("n_countries must be in 1..=676");
    }
    if spec.n_stations < 2 {
        return bad("need at least 2 stations");
    }
    if spec.segments_per_cable_max == 0 {
        return bad("segments_per_cable_max must be at least 1");
    }
    if spec.segments_per_cable_max + 1 > spec.n_stations {
        return bad("segments_per_cable_max needs more stations");
    }
    if spec.n_cables == 0 && spec.parallel_groups == 0 {
        return bad("need at least one cable or parallel group");
    }
    if spec.parallel_groups > 0 && spec.parallel_group_size < 2 {
        return bad("parallel_group_size must be at least 2");
    }
    if spec.max_predictions == 0 {
        return bad("max_predictions must be at least 1");
    }
    for (name, f) in [
        ("unknown_country_fraction", spec.unknown_country_fraction),
        ("unknown_asn_fraction", spec.unknown_asn_fraction),
    ] {
        if !(0.0..=1.0).contains(&f) {
            return Err(SynthError::BadSpec(format!("{name} must be in [0, 1]")));
        }
    }
    if spec.n_asns == 0 {
        return bad("n_asns must be at least 1");
    }
    let ((lat_lo, lat_hi), (lon_lo, lon_hi)) = (spec.lat_range, spec.lon_range);
    if !(lat_lo < lat_hi && (-90.0..=90.0).contains(&lat_lo) && (-90.0..=90.0).contains(&lat_hi)) {
        return bad("lat_range must be an increasing pair within [-90, 90]");
    }
    if !(lon_lo < lon_hi && (-180.0..=180.0).contains(&lon_lo) && (-180.0..=180.0).contains(&lon_hi))
    {
        return bad("lon_range must be an increasing pair within [-180, 180]");
    }
    if let Some(g) = &spec.grid {
        if g.resolution_deg <= 0.0 {
            return bad("grid resolution must be positive");
        }
        if g.background_range.0 > g.background_range.1 || g.hot_range.0 > g.hot_range.1 {
            return bad("grid value ranges must be ordered pairs");
        }
    }
    Ok(())
}

/// Generates a world from the spec. The same spec always produces the same
/// world, byte for byte: generation draws from a single ChaCha8 stream in a
/// fixed order (stations, cables, links, grid).
pub fn generate_world(spec: &WorldSpec) -> Result<SynthWorld, SynthError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let countries: Vec<CountryCode> = (0..spec.n_countries).map(country_code).collect();
    let mut stations = Vec::with_capacity(spec.n_stations);
    for i in 0..spec.n_stations {
        let lat = rng.gen_range(spec.lat_range.0..=spec.lat_range.1);
        let lon = rng.gen_range(spec.lon_range.0..=spec.lon_range.1);
        let country = countries[rng.gen_range(0..countries.len())];
        stations.push(LandingStation::new(format!("st{i:04}"), lat, lon, country)?);
    }
    let station_id = |i: usize| format!("st{i:04}");

    // Chained segments guarantee distinct station pairs within a cable.
    let mut segments: Vec<CableSegment> = Vec::new();
    for c in 0..spec.n_cables {
        let n_seg = rng.gen_range(1..=spec.segments_per_cable_max);
        let mut picks: Vec<usize> = (0..spec.n_stations).collect();
        for i in 0..=n_seg {
            let j = rng.gen_range(i..picks.len());
            picks.swap(i, j);
        }
        for w in picks[..=n_seg].windows(2) {
            segments.push(CableSegment::new(
                format!("cab{c:03}"),
                station_id(w[0]),
                station_id(w[1]),
            )?);
        }
    }
    for g in 0..spec.parallel_groups {
        let a = rng.gen_range(0..spec.n_stations);
        let mut b = rng.gen_range(0..spec.n_stations - 1);
        if b >= a {
            b += 1;
        }
        for k in 0..spec.parallel_group_size {
            segments.push(CableSegment::new(
                format!("par{g:02}x{k}"),
                station_id(a),
                station_id(b),
            )?);
        }
    }

    let mut records = Vec::with_capacity(spec.n_links);
    let max_k = spec.max_predictions.min(segments.len());
    for l in 0..spec.n_links {
        let mut endpoint = |ip_idx: usize| -> Result<IpEndpoint, SynthError> {
            let country = if rng.gen::<f64>() < spec.unknown_country_fraction {
                None
            } else {
                Some(countries[rng.gen_range(0..countries.len())])
            };
            let asn = if rng.gen::<f64>() < spec.unknown_asn_fraction {
                None
            } else {
                Some(rng.gen_range(1..=spec.n_asns) as u32)
            };
            Ok(IpEndpoint::new(&link_ip(ip_idx), country, asn, None)?)
        };
        let a = endpoint(2 * l)?;
        let b = endpoint(2 * l + 1)?;
        let k = rng.gen_range(1..=max_k);
        let mut seg_idx: Vec<usize> = Vec::with_capacity(k);
        while seg_idx.len() < k {
            let s = rng.gen_range(0..segments.len());
            if !seg_idx.contains(&s) {
                seg_idx.push(s);
            }
        }
        let mut scores: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        scores.sort_by(|x, y| y.total_cmp(x));
        let preds: Vec<(CableSegment, f64)> = seg_idx
            .into_iter()
            .zip(scores)
            .map(|(s, sc)| (segments[s].clone(), sc))
            .collect();
        records.push((a, b, preds));
    }

    let mut bundle = DatasetBundle::from_parts(stations, records)?;

    let model = match &spec.grid {
        None => None,
        Some(g) => {
            let defaults = standard_defaults(&g.name)
                .ok_or_else(|| SynthError::UnknownModel(g.name.clone()))?;
            if defaults.latitude_rule {
                return Err(SynthError::BadSpec(
                    "latitude-rule models take no grid".to_string(),
                ));
            }
            let mut grid = IntensityGrid::new(g.resolution_deg, &g.name)?;
            let res = g.resolution_deg;
            let snap = |v: f64, lo: f64, hi: f64| ((v / res).round() * res).clamp(lo, hi);
            let value = |range: (f64, f64), rng: &mut ChaCha8Rng| {
                if range.0 == range.1 {
                    range.0
                } else {
                    rng.gen_range(range.0..=range.1)
                }
            };
            for _ in 0..g.background_cells {
                let lat = snap(rng.gen_range(spec.lat_range.0..=spec.lat_range.1), -90.0, 90.0);
                let lon = snap(rng.gen_range(spec.lon_range.0..=spec.lon_range.1), -180.0, 180.0);
                let v = value(g.background_range, &mut rng);
                grid.insert_sample(lat, lon, v)?;
            }
            for _ in 0..g.hot_spots {
                let st = bundle.stations.get(rng.gen_range(0..bundle.stations.len() as u32));
                let lat = snap(st.lat, -90.0, 90.0);
                let lon = snap(st.lon, -180.0, 180.0);
                let v = value(g.hot_range, &mut rng);
                grid.insert_sample(lat, lon, v)?;
            }
            bundle.add_grid(&g.name, grid);
            let transform = if defaults.pga_to_mmi {
                ValueTransform::PgaToMmi(Default::default())
            } else {
                ValueTransform::Identity
            };
            Some(EventModel {
                name: g.name.clone(),
                source: IntensitySource::Grid(bundle.grids[&g.name].clone()),
                transform,
                threshold: g.threshold_override.unwrap_or(defaults.threshold),
                direction: defaults.direction,
                probe_km: g.probe_km_override.unwrap_or(defaults.probe_km),
            })
        }
    };

    Ok(SynthWorld { bundle, model })
}

/// The predictions of `rec` that count under `mode`. Local twin of the
/// embedding-side helper so the oracles share no code with the maps.
fn active(rec: &CrossLayerRecord, mode: PredictionMode) -> &[Prediction] {
    match mode {
        PredictionMode::Top => &rec.predictions()[..1],
        PredictionMode::Weighted => rec.predictions(),
    }
}

fn known_countries(rec: &CrossLayerRecord) -> Vec<CountryCode> {
    let mut cs: Vec<CountryCode> = rec.a.country.into_iter().chain(rec.b.country).collect();
    cs.sort();
    cs.dedup();
    cs
}

fn known_asns(rec: &CrossLayerRecord) -> Vec<u32> {
    let mut asns: Vec<u32> = rec.a.asn.into_iter().chain(rec.b.asn).collect();
    asns.sort_unstable();
    asns.dedup();
    asns
}

fn rides_impacted(
    rec: &CrossLayerRecord,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> bool {
    active(rec, mode).iter().any(|p| impacted.contains(&p.segment))
}

/// Links counted as impacted: at least one active prediction on an impacted
/// segment, and at least one geolocated endpoint. Links with no known
/// endpoint country stay outside the country maps and so outside every
/// impact count.
pub fn oracle_impacted_links(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> Vec<LinkId> {
    bundle
        .records
        .iter()
        .enumerate()
        .filter(|(_, rec)| !known_countries(rec).is_empty() && rides_impacted(rec, impacted, mode))
        .map(|(l, _)| l as LinkId)
        .collect()
}

pub fn oracle_impact(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> ImpactReport {
    let mut all_ips: HashSet<&str> = HashSet::new();
    let mut all_as_links: HashSet<AsLink> = HashSet::new();
    let mut all_ases: HashSet<u32> = HashSet::new();
    for rec in &bundle.records {
        all_ips.insert(rec.a.ip.as_str());
        all_ips.insert(rec.b.ip.as_str());
        if let Some(al) = rec.as_link() {
            all_as_links.insert(al);
        }
        all_ases.extend(known_asns(rec));
    }

    let mut hit_cables: BTreeSet<u32> = BTreeSet::new();
    for &s in impacted {
        hit_cables.insert(bundle.segments.get(s).cable_idx);
    }
    let links = oracle_impacted_links(bundle, impacted, mode);
    let mut ips: HashSet<&str> = HashSet::new();
    let mut as_links: HashSet<AsLink> = HashSet::new();
    let mut ases: HashSet<u32> = HashSet::new();
    for &l in &links {
        let rec = &bundle.records[l as usize];
        ips.insert(rec.a.ip.as_str());
        ips.insert(rec.b.ip.as_str());
        if let Some(al) = rec.as_link() {
            as_links.insert(al);
        }
        ases.extend(known_asns(rec));
    }

    let mut report = ImpactReport::default();
    let mut set = |c: Component, impacted: usize, total: usize| {
        report.set(c, ComponentImpact { impacted: impacted as f64, total: total as u64 });
    };
    set(Component::CableSegments, impacted.len(), bundle.segments.len());
    set(Component::Cables, hit_cables.len(), bundle.segments.cable_count());
    set(Component::IpLinks, links.len(), bundle.records.len());
    set(Component::Ips, ips.len(), all_ips.len());
    set(Component::AsLinks, as_links.len(), all_as_links.len());
    set(Component::Ases, ases.len(), all_ases.len());
    report
}

fn oracle_risk<E, F>(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
    entities_of: F,
) -> BTreeMap<E, (f64, u64)>
where
    E: Ord + Copy,
    F: Fn(&CrossLayerRecord) -> Vec<E>,
{
    let mut out: BTreeMap<E, (f64, u64)> = BTreeMap::new();
    for rec in &bundle.records {
        let ents = entities_of(rec);
        if ents.is_empty() {
            continue;
        }
        let hits = active(rec, mode)
            .iter()
            .filter(|p| impacted.contains(&p.segment))
            .count();
        let mass = match mode {
            PredictionMode::Top => {
                if hits > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            PredictionMode::Weighted => (hits as f64 * rec.weight()).min(1.0),
        };
        for e in ents {
            let slot = out.entry(e).or_insert((0.0, 0));
            slot.0 += mass;
            slot.1 += 1;
        }
    }
    out
}

/// (affected mass, total links) per country, straight from the records.
pub fn oracle_risk_country(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> BTreeMap<CountryCode, (f64, u64)> {
    oracle_risk(bundle, impacted, mode, known_countries)
}

pub fn oracle_risk_asn(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> BTreeMap<u32, (f64, u64)> {
    oracle_risk(bundle, impacted, mode, known_asns)
}

pub fn oracle_interconnect(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mode: PredictionMode,
) -> BTreeMap<CountryCode, InterconnectEntry> {
    let mut out: BTreeMap<CountryCode, InterconnectEntry> = BTreeMap::new();
    for rec in &bundle.records {
        let Some(kind) = rec.as_link().map(|al| al.kind()) else { continue };
        let affected = rides_impacted(rec, impacted, mode);
        for c in known_countries(rec) {
            let e = out.entry(c).or_default();
            match kind {
                LinkKind::Intra => {
                    e.intra_total += 1;
                    if affected {
                        e.intra_affected += 1;
                    }
                }
                LinkKind::Inter => {
                    e.inter_total += 1;
                    if affected {
                        e.inter_affected += 1;
                    }
                }
            }
        }
    }
    out
}

/// Physical reach per country and per ASN, from the records and the station
/// registry alone.
pub fn oracle_connectivity(
    bundle: &DatasetBundle,
    mode: PredictionMode,
) -> (BTreeMap<CountryCode, ConnectivityEntry>, BTreeMap<u32, ConnectivityEntry>) {
    fn collect<E: Ord + Copy, F: Fn(&CrossLayerRecord) -> Vec<E>>(
        bundle: &DatasetBundle,
        mode: PredictionMode,
        entities_of: F,
    ) -> BTreeMap<E, ConnectivityEntry> {
        let mut segs: BTreeMap<E, BTreeSet<SegmentId>> = BTreeMap::new();
        for rec in &bundle.records {
            for p in active(rec, mode) {
                for e in entities_of(rec) {
                    segs.entry(e).or_default().insert(p.segment);
                }
            }
        }
        segs.into_iter()
            .map(|(e, ss)| {
                let mut cables: BTreeSet<u32> = BTreeSet::new();
                let mut stations: BTreeSet<u32> = BTreeSet::new();
                let mut p_countries: BTreeSet<CountryCode> = BTreeSet::new();
                for &s in &ss {
                    let entry = bundle.segments.get(s);
                    cables.insert(entry.cable_idx);
                    for st in [entry.station_a, entry.station_b] {
                        stations.insert(st);
                        p_countries.insert(bundle.stations.get(st).country);
                    }
                }
                (
                    e,
                    ConnectivityEntry {
                        segments: ss.len() as u64,
                        cables: cables.len() as u64,
                        stations: stations.len() as u64,
                        p_countries: p_countries.len() as u64,
                    },
                )
            })
            .collect()
    }
    (
        collect(bundle, mode, known_countries),
        collect(bundle, mode, known_asns),
    )
}

/// Intra-AS share of each landing country's link traffic, from the records
/// and the station registry alone.
pub fn oracle_intra_share(
    bundle: &DatasetBundle,
    mode: PredictionMode,
) -> BTreeMap<CountryCode, IntraShare> {
    let mut per_pc: BTreeMap<CountryCode, BTreeSet<LinkId>> = BTreeMap::new();
    for (l, rec) in bundle.records.iter().enumerate() {
        if known_countries(rec).is_empty() {
            continue;
        }
        for p in active(rec, mode) {
            let entry = bundle.segments.get(p.segment);
            for st in [entry.station_a, entry.station_b] {
                per_pc
                    .entry(bundle.stations.get(st).country)
                    .or_default()
                    .insert(l as LinkId);
            }
        }
    }
    per_pc
        .into_iter()
        .map(|(pc, links)| {
            let mut share = IntraShare::default();
            for &l in &links {
                match bundle.records[l as usize].as_link().map(|al| al.kind()) {
                    Some(LinkKind::Intra) => {
                        share.intra_links += 1;
                        share.total_links += 1;
                    }
                    Some(LinkKind::Inter) => share.total_links += 1,
                    None => {}
                }
            }
            (pc, share)
        })
        .collect()
}

/// Per-link survival probability under a sensitivity mix, for the links in
/// scope (top prediction impacted, at least one known endpoint country), in
/// link id order. The sum is the expected surviving link count.
pub fn oracle_sensitivity_survival(
    bundle: &DatasetBundle,
    impacted: &BTreeSet<SegmentId>,
    mix: SensitivityMix,
) -> Vec<f64> {
    let scope = oracle_impacted_links(bundle, impacted, PredictionMode::Top);
    scope
        .iter()
        .map(|&l| {
            let preds = bundle.records[l as usize].predictions();
            let p_top = mix.top as f64 / 100.0;
            let p_sec = mix.secondary as f64 / 100.0;
            let sec_term = if preds.len() == 1 {
                1.0
            } else {
                let hits = preds[1..]
                    .iter()
                    .filter(|p| impacted.contains(&p.segment))
                    .count();
                hits as f64 / (preds.len() - 1) as f64
            };
            p_top + p_sec * sec_term
        })
        .collect()
}

/// Converts PGA grid values the way the pipeline would, for oracle-side
/// threshold checks.
pub fn oracle_pga_to_mmi(pga: f64) -> Option<f64> {
    pga_to_mmi(pga).ok()
}
