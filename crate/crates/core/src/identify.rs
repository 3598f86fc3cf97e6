//! Failure identification: from a hazard model to the set of impacted cable
//! segments. The pipeline filters grid points by threshold, clips to a
//! region, samples a fraction of the survivors, probes for landing stations
//! near the sampled points, and collects the segments those stations anchor.
//! Manual failures (named segments, stations, or whole cables) bypass the
//! hazard stages and can be unioned with model-driven events.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hazard::{within_km, EventModel, IntensitySource};
use crate::ingest::DatasetBundle;
use crate::model::{
    CableSegment, CountryCode, GeoPoint, Region, SegmentId, SegmentTable, StationIdx,
    StationRegistry,
};

#[derive(Debug, Error, PartialEq)]
pub enum IdentifyError {
    #[error("failure probability must be in (0, 1], got {0}")]
    BadProbability(f64),
    #[error("unknown {kind} {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("scenario names neither a hazard model nor a manual failure")]
    EmptyScenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// The most severe points, deterministically.
    TopN,
    /// Uniform without replacement.
    Random,
    /// Sequential draws without replacement, probability proportional to
    /// severity at each draw.
    Weighted,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::TopN => "top_n",
            Strategy::Random => "random",
            Strategy::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "top_n" | "top" | "topn" => Ok(Strategy::TopN),
            "random" => Ok(Strategy::Random),
            "weighted" => Ok(Strategy::Weighted),
            other => Err(format!(
                "unknown strategy {other:?}: expected top_n, random, or weighted"
            )),
        }
    }
}

/// How much of the candidate point set fails, and how it is chosen. The
/// seed is ignored by TOP_N, which is fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureDistribution {
    pub probability: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePoint {
    pub point: GeoPoint,
    /// Intensity after any unit conversion, in the model's threshold units.
    pub intensity: f64,
}

/// Result of failure identification. Sets are ordered so two equal results
/// serialize identically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpactedSet {
    pub segments: BTreeSet<SegmentId>,
    pub stations: BTreeSet<StationIdx>,
    pub sampled_points: Vec<CandidatePoint>,
}

impl ImpactedSet {
    pub fn union(mut sets: Vec<ImpactedSet>) -> ImpactedSet {
        let mut out = ImpactedSet::default();
        for s in sets.drain(..) {
            out.segments.extend(s.segments);
            out.stations.extend(s.stations);
            out.sampled_points.extend(s.sampled_points);
        }
        sort_points(&mut out.sampled_points);
        out.sampled_points.dedup_by(|a, b| {
            a.point.lat.to_bits() == b.point.lat.to_bits()
                && a.point.lon.to_bits() == b.point.lon.to_bits()
                && a.intensity.to_bits() == b.intensity.to_bits()
        });
        out
    }
}

/// Explicitly named failures: individual segments (a cut at a known
/// location), whole landing stations, or whole cables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManualFailure {
    pub segments: Vec<CableSegment>,
    pub stations: Vec<String>,
    pub cables: Vec<String>,
}

/// Resolves an arbitrary point to a country for COUNTRIES-region clipping.
#[derive(Debug, Clone, Default)]
pub enum PointInCountry {
    /// Fallback: the country of the nearest landing station. Ties go to the
    /// station earliest in registry (id) order.
    #[default]
    NearestStation,
    /// Exact membership from configured polygons.
    Polygons(CountryPolygons),
}

/// Country outlines as rings of (lat, lon) vertices, tested even-odd in
/// plate carree; rings spanning the antimeridian are not supported.
#[derive(Debug, Clone, Default)]
pub struct CountryPolygons {
    pub rings: BTreeMap<CountryCode, Vec<Vec<(f64, f64)>>>,
}

impl CountryPolygons {
    fn contains(&self, country: CountryCode, p: GeoPoint) -> bool {
        let Some(rings) = self.rings.get(&country) else { return false };
        let mut inside = false;
        for ring in rings {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            let mut j = n - 1;
            for i in 0..n {
                let (lat_i, lon_i) = ring[i];
                let (lat_j, lon_j) = ring[j];
                if (lon_i > p.lon) != (lon_j > p.lon) {
                    let t = (p.lon - lon_i) / (lon_j - lon_i);
                    if p.lat < lat_i + t * (lat_j - lat_i) {
                        inside = !inside;
                    }
                }
                j = i;
            }
        }
        inside
    }
}

impl PointInCountry {
    pub fn resolve(&self, p: GeoPoint, stations: &StationRegistry) -> Option<CountryCode> {
        match self {
            PointInCountry::NearestStation => {
                let mut best: Option<(f64, CountryCode)> = None;
                for (_, st) in stations.iter() {
                    let d = crate::hazard::haversine_km(p, st.point());
                    match best {
                        Some((bd, _)) if bd <= d => {}
                        _ => best = Some((d, st.country)),
                    }
                }
                best.map(|(_, c)| c)
            }
            PointInCountry::Polygons(polys) => {
                polys
                    .rings
                    .keys()
                    .find(|&&c| polys.contains(c, p))
                    .copied()
            }
        }
    }
}

fn sort_points(points: &mut [CandidatePoint]) {
    points.sort_by(|a, b| {
        a.point
            .lat
            .total_cmp(&b.point.lat)
            .then_with(|| a.point.lon.total_cmp(&b.point.lon))
            .then_with(|| a.intensity.total_cmp(&b.intensity))
    });
}

fn in_region(
    p: GeoPoint,
    country_of_point: impl Fn() -> Option<CountryCode>,
    region: &Region,
) -> bool {
    match region {
        Region::Global => true,
        Region::BBox { lat_min, lat_max, lon_min, lon_max } => {
            (*lat_min..=*lat_max).contains(&p.lat) && (*lon_min..=*lon_max).contains(&p.lon)
        }
        Region::Countries(codes) => match country_of_point() {
            Some(c) => codes.binary_search(&c).is_ok(),
            None => false,
        },
    }
}

/// Points where the hazard exceeds its threshold, clipped to `region`,
/// sorted by (lat, lon). For gridded sources these are cell centers; for the
/// latitude rule they are the landing stations themselves, which makes the
/// downstream sampling and probing stages uniform across model kinds.
pub fn candidate_points(
    model: &EventModel,
    region: &Region,
    bundle: &DatasetBundle,
    resolver: &PointInCountry,
) -> Vec<CandidatePoint> {
    let mut out: Vec<CandidatePoint> = Vec::new();
    match &model.source {
        IntensitySource::Grid(grid) => {
            for (center, raw) in grid.iter_cells() {
                let Some(v) = model.transform.apply(raw) else { continue };
                if !model.exceeds(v) {
                    continue;
                }
                if !in_region(center, || resolver.resolve(center, &bundle.stations), region) {
                    continue;
                }
                out.push(CandidatePoint { point: center, intensity: v });
            }
        }
        IntensitySource::LatitudeRule => {
            for (_, st) in bundle.stations.iter() {
                let p = st.point();
                let v = p.lat.abs();
                if !model.exceeds(v) {
                    continue;
                }
                // Station country is known exactly; no resolver needed.
                if !in_region(p, || Some(st.country), region) {
                    continue;
                }
                out.push(CandidatePoint { point: p, intensity: v });
            }
        }
    }
    sort_points(&mut out);
    out.dedup_by(|a, b| {
        a.point.lat.to_bits() == b.point.lat.to_bits()
            && a.point.lon.to_bits() == b.point.lon.to_bits()
    });
    out
}

/// ceil(p * n) clamped to [1, n], with a small epsilon so decimal
/// probabilities like 0.05 do not round up through float error.
fn sample_size(p: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (p * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

/// Fenwick tree over f64 weights supporting prefix search, used for
/// sequential weighted draws without replacement.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            let mut idx = i + 1;
            while idx <= n {
                tree[idx] += w;
                idx += idx & idx.wrapping_neg();
            }
        }
        Fenwick { tree }
    }

    fn total(&self) -> f64 {
        self.prefix(self.tree.len() - 1)
    }

    fn prefix(&self, mut idx: usize) -> f64 {
        let mut s = 0.0;
        while idx > 0 {
            s += self.tree[idx];
            idx -= idx & idx.wrapping_neg();
        }
        s
    }

    fn add(&mut self, i: usize, delta: f64) {
        let n = self.tree.len() - 1;
        let mut idx = i + 1;
        while idx <= n {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos // zero-based index of the found element
    }
}

/// Chooses which candidate points actually fail. Deterministic for a given
/// (strategy, seed); the returned points are re-sorted canonically so the
/// selection order never leaks into output.
pub fn sample_points(
    candidates: &[CandidatePoint],
    dist: &FailureDistribution,
    model: &EventModel,
) -> Result<Vec<CandidatePoint>, IdentifyError> {
    if !dist.probability.is_finite() || dist.probability <= 0.0 || dist.probability > 1.0 {
        return Err(IdentifyError::BadProbability(dist.probability));
    }
    let n = candidates.len();
    let k = sample_size(dist.probability, n);
    if k == 0 {
        return Ok(Vec::new());
    }

    let chosen: Vec<usize> = match dist.strategy {
        Strategy::TopN => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                let sa = model.severity(candidates[a].intensity);
                let sb = model.severity(candidates[b].intensity);
                sb.total_cmp(&sa).then_with(|| {
                    let pa = candidates[a].point;
                    let pb = candidates[b].point;
                    pa.lat.total_cmp(&pb.lat).then(pa.lon.total_cmp(&pb.lon))
                })
            });
            idx.truncate(k);
            idx
        }
        Strategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.gen_range(i..n);
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx
        }
        Strategy::Weighted => {
            let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
            let weights: Vec<f64> = candidates
                .iter()
                .map(|c| model.severity(c.intensity).max(0.0))
                .collect();
            let mut fen = Fenwick::new(&weights);
            let mut live = vec![true; n];
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let total = fen.total();
                if total > 0.0 {
                    let r = rng.gen::<f64>() * total;
                    let mut i = fen.find(r).min(n - 1);
                    // Float roundoff can land on an exhausted slot; walk to
                    // the nearest live one.
                    while !live[i] {
                        i = (i + 1) % n;
                    }
                    out.push(i);
                    live[i] = false;
                    fen.add(i, -weights[i]);
                } else {
                    // Remaining weights are all zero: severity gives no
                    // ordering, fill in canonical point order.
                    let i = live.iter().position(|&l| l).expect("k <= n");
                    out.push(i);
                    live[i] = false;
                }
            }
            out
        }
    };

    let mut points: Vec<CandidatePoint> = chosen.into_iter().map(|i| candidates[i]).collect();
    sort_points(&mut points);
    Ok(points)
}

/// Landing stations within the probing radius of at least one sampled point.
pub fn at_risk_stations(
    sampled: &[CandidatePoint],
    stations: &StationRegistry,
    probe_km: f64,
) -> BTreeSet<StationIdx> {
    let mut out = BTreeSet::new();
    for (idx, st) in stations.iter() {
        let p = st.point();
        if sampled.iter().any(|c| within_km(c.point, p, probe_km)) {
            out.insert(idx);
        }
    }
    out
}

/// Segments anchored at any of the given stations.
pub fn impacted_segments(
    stations: &BTreeSet<StationIdx>,
    table: &SegmentTable,
) -> BTreeSet<SegmentId> {
    let mut out = BTreeSet::new();
    for (id, e) in table.iter() {
        if stations.contains(&e.station_a) || stations.contains(&e.station_b) {
            out.insert(id);
        }
    }
    out
}

/// Full model-driven identification for one event.
pub fn identify_event(
    bundle: &DatasetBundle,
    model: &EventModel,
    region: &Region,
    dist: &FailureDistribution,
    resolver: &PointInCountry,
) -> Result<ImpactedSet, IdentifyError> {
    let candidates = candidate_points(model, region, bundle, resolver);
    let sampled = sample_points(&candidates, dist, model)?;
    let stations = at_risk_stations(&sampled, &bundle.stations, model.probe_km);
    let segments = impacted_segments(&stations, &bundle.segments);
    Ok(ImpactedSet { segments, stations, sampled_points: sampled })
}

/// Resolves a manual failure against the dataset. Unknown segment, station,
/// or cable names are hard errors: a silently ignored typo would fake a
/// healthy network.
pub fn manual_failure(
    bundle: &DatasetBundle,
    manual: &ManualFailure,
) -> Result<ImpactedSet, IdentifyError> {
    let mut set = ImpactedSet::default();
    for seg in &manual.segments {
        let id = bundle.segments.lookup(seg).ok_or_else(|| IdentifyError::UnknownId {
            kind: "segment",
            id: seg.to_string(),
        })?;
        set.segments.insert(id);
    }
    for name in &manual.stations {
        let idx = bundle.stations.lookup(name).ok_or_else(|| IdentifyError::UnknownId {
            kind: "station",
            id: name.clone(),
        })?;
        set.stations.insert(idx);
        for (id, e) in bundle.segments.iter() {
            if e.station_a == idx || e.station_b == idx {
                set.segments.insert(id);
            }
        }
    }
    for cable in &manual.cables {
        let mut found = false;
        for (id, e) in bundle.segments.iter() {
            if bundle.segments.cable_name(e.cable_idx) == cable {
                set.segments.insert(id);
                found = true;
            }
        }
        if !found {
            return Err(IdentifyError::UnknownId { kind: "cable", id: cable.clone() });
        }
    }
    Ok(set)
}

/// One scenario: a hazard model, a manual failure, or both unioned.
pub struct Scenario<'a> {
    pub model: Option<&'a EventModel>,
    pub region: Region,
    pub distribution: FailureDistribution,
    pub manual: Option<&'a ManualFailure>,
}

pub fn identify(
    bundle: &DatasetBundle,
    scenario: &Scenario<'_>,
    resolver: &PointInCountry,
) -> Result<ImpactedSet, IdentifyError> {
    let mut sets = Vec::new();
    if let Some(model) = scenario.model {
        sets.push(identify_event(
            bundle,
            model,
            &scenario.region,
            &scenario.distribution,
            resolver,
        )?);
    }
    if let Some(manual) = scenario.manual {
        sets.push(manual_failure(bundle, manual)?);
    }
    if sets.is_empty() {
        return Err(IdentifyError::EmptyScenario);
    }
    Ok(ImpactedSet::union(sets))
}
