//! Domain model for the cross-layer pipeline: landing stations, cable
//! segments, IP-layer records, and the identity rules that make every
//! downstream aggregation order-independent.
//!
//! Invariants enforced here:
//! * segment identity is order-insensitive in its two stations (canonical
//!   form sorts them lexicographically),
//! * link identity is order-insensitive in its two endpoint IPs,
//! * prediction lists are non-empty, duplicate-free, and sorted by score
//!   descending with ties broken by segment identity,
//! * ASN 0 never appears as a concrete value (it is the unknown marker).

use std::collections::HashMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("degenerate segment: cable {cable} connects station {station} to itself")]
    DegenerateSegment { cable: String, station: String },
    #[error("invalid country code {0:?}: expected two ASCII letters")]
    BadCountryCode(String),
    #[error("{what} out of range: {value}")]
    BadCoordinate { what: &'static str, value: f64 },
    #[error("invalid IP address {0:?}")]
    BadIp(String),
    #[error("prediction list is empty")]
    EmptyPredictions,
    #[error("prediction score {0} outside [0, 1]")]
    BadScore(f64),
    #[error("duplicate station id {0:?}")]
    DuplicateStation(String),
    #[error("unknown station id {0:?}")]
    UnknownStation(String),
}

/// Two-letter uppercase country code. Synthetic datasets use arbitrary
/// letter pairs, so validation is shape-only, not an ISO membership check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(s: &str) -> Result<Self, ModelError> {
        let bytes = s.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(|b| b.is_ascii_alphabetic()) {
            return Err(ModelError::BadCountryCode(s.to_string()));
        }
        Ok(CountryCode([
            bytes[0].to_ascii_uppercase(),
            bytes[1].to_ascii_uppercase(),
        ]))
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("country codes are ASCII")
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CountryCode::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(ModelError::BadCoordinate { what: "latitude", value: lat });
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(ModelError::BadCoordinate { what: "longitude", value: lon });
        }
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandingStation {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub country: CountryCode,
}

impl LandingStation {
    pub fn new(id: String, lat: f64, lon: f64, country: CountryCode) -> Result<Self, ModelError> {
        GeoPoint::new(lat, lon)?;
        Ok(LandingStation { id, lat, lon, country })
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

/// Index into a [`StationRegistry`]. Stable for a given dataset because the
/// registry sorts stations by id before assigning indices.
pub type StationIdx = u32;

/// Landing stations keyed by their opaque string id. Construction sorts by
/// id, so the registry is independent of input file order.
#[derive(Debug, Clone, Default)]
pub struct StationRegistry {
    stations: Vec<LandingStation>,
    by_id: HashMap<String, StationIdx>,
}

impl StationRegistry {
    pub fn build(mut stations: Vec<LandingStation>) -> Result<Self, ModelError> {
        stations.sort_by(|a, b| a.id.cmp(&b.id));
        let mut by_id = HashMap::with_capacity(stations.len());
        for (i, st) in stations.iter().enumerate() {
            if by_id.insert(st.id.clone(), i as StationIdx).is_some() {
                return Err(ModelError::DuplicateStation(st.id.clone()));
            }
        }
        Ok(StationRegistry { stations, by_id })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn get(&self, idx: StationIdx) -> &LandingStation {
        &self.stations[idx as usize]
    }

    pub fn lookup(&self, id: &str) -> Option<StationIdx> {
        self.by_id.get(id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StationIdx, &LandingStation)> {
        self.stations.iter().enumerate().map(|(i, s)| (i as StationIdx, s))
    }
}

/// A cable segment between two landing stations. Canonical form keeps
/// `station_a <= station_b`, so `(c, A, B)` and `(c, B, A)` are the same
/// segment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CableSegment {
    pub cable: String,
    pub station_a: String,
    pub station_b: String,
}

impl CableSegment {
    pub fn new(cable: String, sa: String, sb: String) -> Result<Self, ModelError> {
        if sa == sb {
            return Err(ModelError::DegenerateSegment { cable, station: sa });
        }
        let (station_a, station_b) = if sa <= sb { (sa, sb) } else { (sb, sa) };
        Ok(CableSegment { cable, station_a, station_b })
    }
}

impl fmt::Display for CableSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.cable, self.station_a, self.station_b)
    }
}

/// Handle into a [`SegmentTable`]. Ids are assigned in sorted segment
/// identity order, so `SegmentId` order equals lexicographic identity order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub u32);

#[derive(Debug, Clone)]
pub struct SegmentEntry {
    pub segment: CableSegment,
    pub cable_idx: u32,
    pub station_a: StationIdx,
    pub station_b: StationIdx,
}

/// Interned universe of cable segments referenced by at least one record,
/// with station and cable cross-references resolved.
#[derive(Debug, Clone, Default)]
pub struct SegmentTable {
    entries: Vec<SegmentEntry>,
    by_key: HashMap<CableSegment, SegmentId>,
    cables: Vec<String>,
}

impl SegmentTable {
    /// Builds the table from the set of distinct segments. Segments are
    /// sorted by identity first so ids are permutation-independent.
    pub fn build(
        mut segments: Vec<CableSegment>,
        registry: &StationRegistry,
    ) -> Result<Self, ModelError> {
        segments.sort();
        segments.dedup();

        let mut cables: Vec<String> = segments.iter().map(|s| s.cable.clone()).collect();
        cables.sort();
        cables.dedup();
        let cable_idx_of: HashMap<&str, u32> = cables
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i as u32))
            .collect();

        let mut entries = Vec::with_capacity(segments.len());
        let mut by_key = HashMap::with_capacity(segments.len());
        for seg in segments {
            let sa = registry
                .lookup(&seg.station_a)
                .ok_or_else(|| ModelError::UnknownStation(seg.station_a.clone()))?;
            let sb = registry
                .lookup(&seg.station_b)
                .ok_or_else(|| ModelError::UnknownStation(seg.station_b.clone()))?;
            let id = SegmentId(entries.len() as u32);
            by_key.insert(seg.clone(), id);
            entries.push(SegmentEntry {
                cable_idx: cable_idx_of[seg.cable.as_str()],
                station_a: sa,
                station_b: sb,
                segment: seg,
            });
        }
        Ok(SegmentTable { entries, by_key, cables })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: SegmentId) -> &SegmentEntry {
        &self.entries[id.0 as usize]
    }

    pub fn lookup(&self, seg: &CableSegment) -> Option<SegmentId> {
        self.by_key.get(seg).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = SegmentId> {
        (0..self.entries.len() as u32).map(SegmentId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SegmentId, &SegmentEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (SegmentId(i as u32), e))
    }

    pub fn cable_count(&self) -> usize {
        self.cables.len()
    }

    pub fn cable_name(&self, idx: u32) -> &str {
        &self.cables[idx as usize]
    }

    /// The one or two countries whose shores this segment lands on.
    pub fn p_countries(&self, id: SegmentId, registry: &StationRegistry) -> Vec<CountryCode> {
        let e = self.get(id);
        let ca = registry.get(e.station_a).country;
        let cb = registry.get(e.station_b).country;
        if ca == cb {
            vec![ca]
        } else {
            let (lo, hi) = if ca < cb { (ca, cb) } else { (cb, ca) };
            vec![lo, hi]
        }
    }
}

/// One end of an IP link. `country`, `asn`, and `coord` may each be unknown;
/// ASN 0 is normalized to unknown at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IpEndpoint {
    pub ip: String,
    pub country: Option<CountryCode>,
    pub asn: Option<u32>,
    pub coord: Option<GeoPoint>,
}

impl IpEndpoint {
    pub fn new(
        ip: &str,
        country: Option<CountryCode>,
        asn: Option<u32>,
        coord: Option<GeoPoint>,
    ) -> Result<Self, ModelError> {
        let addr: IpAddr = ip.trim().parse().map_err(|_| ModelError::BadIp(ip.to_string()))?;
        Ok(IpEndpoint {
            ip: addr.to_string(),
            country,
            asn: asn.filter(|&a| a != 0),
            coord,
        })
    }

    fn addr(&self) -> IpAddr {
        self.ip.parse().expect("endpoint IPs are canonical")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prediction {
    pub segment: SegmentId,
    /// Confidence in [0, 1], stored as raw bits so the type can be `Ord`.
    score_bits: u64,
}

impl Prediction {
    pub fn new(segment: SegmentId, score: f64) -> Result<Self, ModelError> {
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(ModelError::BadScore(score));
        }
        Ok(Prediction { segment, score_bits: score.to_bits() })
    }

    pub fn score(&self) -> f64 {
        f64::from_bits(self.score_bits)
    }
}

/// An IP link with its candidate cable segments, sorted by score descending
/// (ties by segment identity). Link identity ignores endpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossLayerRecord {
    pub a: IpEndpoint,
    pub b: IpEndpoint,
    predictions: Vec<Prediction>,
}

impl CrossLayerRecord {
    /// Canonicalizes endpoint order, sorts predictions, and merges duplicate
    /// segments keeping the highest score. Duplicates can appear in raw input
    /// when two listed predictions collapse to one canonical segment.
    pub fn new(
        a: IpEndpoint,
        b: IpEndpoint,
        mut predictions: Vec<Prediction>,
    ) -> Result<Self, ModelError> {
        if predictions.is_empty() {
            return Err(ModelError::EmptyPredictions);
        }
        predictions.sort_by_key(|p| p.segment);
        predictions.dedup_by(|next, kept| {
            if next.segment == kept.segment {
                if next.score() > kept.score() {
                    kept.score_bits = next.score_bits;
                }
                true
            } else {
                false
            }
        });
        predictions.sort_by(|p, q| {
            q.score()
                .total_cmp(&p.score())
                .then_with(|| p.segment.cmp(&q.segment))
        });
        let (a, b) = if a.addr() <= b.addr() { (a, b) } else { (b, a) };
        Ok(CrossLayerRecord { a, b, predictions })
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }

    pub fn top(&self) -> Prediction {
        self.predictions[0]
    }

    /// Per-segment weight under weighted attribution: `1/k` for `k`
    /// predictions, so a fully impacted link contributes exactly 1.
    pub fn weight(&self) -> f64 {
        1.0 / self.predictions.len() as f64
    }

    pub fn as_link(&self) -> Option<AsLink> {
        match (self.a.asn, self.b.asn) {
            (Some(x), Some(y)) => Some(AsLink::new(x, y)),
            _ => None,
        }
    }

    /// Total order over canonical record content. Distinct records that share
    /// an endpoint pair are ordered by their remaining fields, which keeps
    /// dataset normalization independent of input line order.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        fn endpoint_key(e: &IpEndpoint) -> (&str, Option<CountryCode>, Option<u32>, [u64; 2]) {
            let coord = e
                .coord
                .map(|p| [p.lat.to_bits(), p.lon.to_bits()])
                .unwrap_or([u64::MAX, u64::MAX]);
            (&e.ip, e.country, e.asn, coord)
        }
        endpoint_key(&self.a)
            .cmp(&endpoint_key(&other.a))
            .then_with(|| endpoint_key(&self.b).cmp(&endpoint_key(&other.b)))
            .then_with(|| self.predictions.cmp(&other.predictions))
    }
}

/// Index of a record in a normalized dataset.
pub type LinkId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkKind {
    Intra,
    Inter,
}

/// An AS-level adjacency; order-insensitive in its two ASNs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsLink {
    pub lo: u32,
    pub hi: u32,
}

impl AsLink {
    pub fn new(a: u32, b: u32) -> Self {
        if a <= b {
            AsLink { lo: a, hi: b }
        } else {
            AsLink { lo: b, hi: a }
        }
    }

    pub fn kind(&self) -> LinkKind {
        if self.lo == self.hi {
            LinkKind::Intra
        } else {
            LinkKind::Inter
        }
    }
}

/// Spatial scope for failure identification.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Global,
    Countries(Vec<CountryCode>),
    BBox { lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64 },
}

impl Region {
    pub fn bbox(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, ModelError> {
        GeoPoint::new(lat_min, lon_min)?;
        GeoPoint::new(lat_max, lon_max)?;
        if lat_min > lat_max {
            return Err(ModelError::BadCoordinate { what: "latitude range", value: lat_min });
        }
        if lon_min > lon_max {
            return Err(ModelError::BadCoordinate { what: "longitude range", value: lon_min });
        }
        Ok(Region::BBox { lat_min, lat_max, lon_min, lon_max })
    }

    pub fn countries(codes: Vec<CountryCode>) -> Self {
        let mut codes = codes;
        codes.sort();
        codes.dedup();
        Region::Countries(codes)
    }
}
