//! Cross-layer map embedding: indexes tying cable segments to the IP links
//! riding them, aggregated by endpoint country (CS-NC), endpoint AS (CS-AS),
//! and landing country against endpoint country (PC-NC).
//!
//! Terminology used throughout: an N-Country of a link is a country hosting
//! one of its IP endpoints; a P-Country of a segment is a country hosting
//! one of its landing stations.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::ingest::DatasetBundle;
use crate::model::{CountryCode, CrossLayerRecord, LinkId, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PredictionMode {
    /// Only the first (highest-score) prediction of each record counts.
    #[default]
    Top,
    /// Every prediction counts, each carrying weight 1/k for k predictions.
    Weighted,
}

impl PredictionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionMode::Top => "top",
            PredictionMode::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for PredictionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "top" => Ok(PredictionMode::Top),
            "weighted" => Ok(PredictionMode::Weighted),
            other => Err(format!("unknown prediction mode {other:?}: expected top or weighted")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("maps were built in {built} mode but {requested} mode was requested")]
    ModeMismatch { built: &'static str, requested: &'static str },
}

/// The segments of `rec` that participate under `mode`.
pub fn active_segments(rec: &CrossLayerRecord, mode: PredictionMode) -> &[crate::model::Prediction] {
    match mode {
        PredictionMode::Top => &rec.predictions()[..1],
        PredictionMode::Weighted => rec.predictions(),
    }
}

/// Map from (cable segment, entity) to the links riding that segment with an
/// endpoint in that entity. The entity is a country for CS-NC and an ASN for
/// CS-AS. Link lists are sorted and duplicate-free; a link with both
/// endpoints in the same entity appears once.
#[derive(Debug, Clone)]
pub struct CsMap<E: Ord + Copy + std::hash::Hash> {
    mode: PredictionMode,
    per_segment: HashMap<SegmentId, BTreeMap<E, Vec<LinkId>>>,
    /// entity -> count of distinct links with an endpoint in that entity.
    /// Mode-independent: every prediction of a link maps to the same link.
    totals: BTreeMap<E, u64>,
}

impl<E: Ord + Copy + std::hash::Hash> CsMap<E> {
    fn build<F>(bundle: &DatasetBundle, mode: PredictionMode, entities_of: F) -> Self
    where
        F: Fn(&CrossLayerRecord) -> Vec<E>,
    {
        let mut per_segment: HashMap<SegmentId, BTreeMap<E, Vec<LinkId>>> = HashMap::new();
        let mut totals: BTreeMap<E, u64> = BTreeMap::new();
        for (lid, rec) in bundle.records.iter().enumerate() {
            let lid = lid as LinkId;
            let ents = entities_of(rec);
            if ents.is_empty() {
                continue;
            }
            for &e in &ents {
                *totals.entry(e).or_insert(0) += 1;
            }
            for p in active_segments(rec, mode) {
                let by_entity = per_segment.entry(p.segment).or_default();
                for &e in &ents {
                    // Records are visited in increasing link id, and each
                    // (segment, entity) pair is touched at most once per
                    // record, so the vectors stay sorted and unique.
                    by_entity.entry(e).or_default().push(lid);
                }
            }
        }
        CsMap { mode, per_segment, totals }
    }

    pub fn mode(&self) -> PredictionMode {
        self.mode
    }

    pub fn links_for(&self, segment: SegmentId, entity: E) -> &[LinkId] {
        self.per_segment
            .get(&segment)
            .and_then(|m| m.get(&entity))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Entities riding `segment`, in entity order.
    pub fn entities_of(&self, segment: SegmentId) -> impl Iterator<Item = (E, &[LinkId])> {
        self.per_segment
            .get(&segment)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&e, v)| (e, v.as_slice())))
    }

    pub fn total(&self, entity: E) -> u64 {
        self.totals.get(&entity).copied().unwrap_or(0)
    }

    pub fn totals(&self) -> &BTreeMap<E, u64> {
        &self.totals
    }

    /// Segment ids present in the map, sorted.
    pub fn segments(&self) -> Vec<SegmentId> {
        let mut v: Vec<SegmentId> = self.per_segment.keys().copied().collect();
        v.sort();
        v
    }

    /// Flat (segment, entity, link count) rows in canonical order, for the
    /// debug dump.
    pub fn dump_rows(&self) -> Vec<(SegmentId, E, usize)> {
        let mut rows = Vec::new();
        for (&s, by_entity) in &self.per_segment {
            for (&e, links) in by_entity {
                rows.push((s, e, links.len()));
            }
        }
        rows.sort();
        rows
    }
}

/// Map from (P-Country, N-Country) to the links that ride a segment landing
/// in the P-Country while having an endpoint in the N-Country.
#[derive(Debug, Clone, Default)]
pub struct PcNcMap {
    entries: BTreeMap<(CountryCode, CountryCode), Vec<LinkId>>,
}

impl PcNcMap {
    /// Derives the map by composing CS-NC with segment landing countries.
    pub fn build(cs_nc: &CsMap<CountryCode>, bundle: &DatasetBundle) -> Self {
        let mut entries: BTreeMap<(CountryCode, CountryCode), Vec<LinkId>> = BTreeMap::new();
        for (&seg, by_country) in &cs_nc.per_segment {
            let pcs = bundle.segments.p_countries(seg, &bundle.stations);
            for (&nc, links) in by_country {
                for &pc in &pcs {
                    entries.entry((pc, nc)).or_default().extend_from_slice(links);
                }
            }
        }
        for links in entries.values_mut() {
            links.sort_unstable();
            links.dedup();
        }
        PcNcMap { entries }
    }

    pub fn links_for(&self, p_country: CountryCode, n_country: CountryCode) -> &[LinkId] {
        self.entries
            .get(&(p_country, n_country))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = ((CountryCode, CountryCode), &[LinkId])> {
        self.entries.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn p_countries(&self) -> Vec<CountryCode> {
        let mut v: Vec<CountryCode> = self.entries.keys().map(|&(pc, _)| pc).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn n_countries(&self) -> Vec<CountryCode> {
        let mut v: Vec<CountryCode> = self.entries.keys().map(|&(_, nc)| nc).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// All cross-layer maps for one dataset under one prediction mode, plus the
/// per-link weights used by weighted risk attribution.
#[derive(Debug, Clone)]
pub struct EmbeddedMaps {
    mode: PredictionMode,
    pub cs_nc: CsMap<CountryCode>,
    pub cs_as: CsMap<u32>,
    pub pc_nc: PcNcMap,
    link_weights: Vec<f64>,
}

impl EmbeddedMaps {
    pub fn build(bundle: &DatasetBundle, mode: PredictionMode) -> Self {
        let cs_nc = CsMap::build(bundle, mode, |rec| {
            let mut cs: Vec<CountryCode> = rec
                .a
                .country
                .into_iter()
                .chain(rec.b.country)
                .collect();
            cs.sort();
            cs.dedup();
            cs
        });
        let cs_as = CsMap::build(bundle, mode, |rec| {
            let mut asns: Vec<u32> = rec.a.asn.into_iter().chain(rec.b.asn).collect();
            asns.sort_unstable();
            asns.dedup();
            asns
        });
        let pc_nc = PcNcMap::build(&cs_nc, bundle);
        let link_weights = bundle.records.iter().map(|r| r.weight()).collect();
        EmbeddedMaps { mode, cs_nc, cs_as, pc_nc, link_weights }
    }

    pub fn mode(&self) -> PredictionMode {
        self.mode
    }

    pub fn ensure_mode(&self, requested: PredictionMode) -> Result<(), EmbedError> {
        if self.mode == requested {
            Ok(())
        } else {
            Err(EmbedError::ModeMismatch {
                built: self.mode.as_str(),
                requested: requested.as_str(),
            })
        }
    }

    /// Weight of `link` toward any one of its predicted segments: 1/k for k
    /// predictions. The value does not depend on which segment is asked
    /// about, because prediction lists are duplicate-free.
    pub fn weight_of(&self, link: LinkId) -> f64 {
        self.link_weights[link as usize]
    }
}

/// Segments with a landing station in `country`, sorted.
pub fn segments_of_p_country(bundle: &DatasetBundle, country: CountryCode) -> Vec<SegmentId> {
    bundle
        .segments
        .iter()
        .filter(|(_, e)| {
            bundle.stations.get(e.station_a).country == country
                || bundle.stations.get(e.station_b).country == country
        })
        .map(|(id, _)| id)
        .collect()
}
