//! Resilience analyses over an impacted-segment set: component impact
//! counts, per-country and per-AS risk profiles, intra/inter-AS splits, and
//! multi-event unions. Heavier analyses live in submodules.

pub mod cluster;
pub mod sensitivity;
pub mod stats;
pub mod sweep;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::embed::{CsMap, EmbeddedMaps, PredictionMode};
use crate::identify::ImpactedSet;
use crate::ingest::DatasetBundle;
use crate::model::{AsLink, CountryCode, LinkId, LinkKind};

/// The six components every impact report covers, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    CableSegments,
    Cables,
    IpLinks,
    Ips,
    AsLinks,
    Ases,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::CableSegments,
        Component::Cables,
        Component::IpLinks,
        Component::Ips,
        Component::AsLinks,
        Component::Ases,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::CableSegments => "cable_segments",
            Component::Cables => "cables",
            Component::IpLinks => "ip_links",
            Component::Ips => "ips",
            Component::AsLinks => "as_links",
            Component::Ases => "ases",
        }
    }

    pub fn index(&self) -> usize {
        Component::ALL.iter().position(|c| c == self).expect("component in ALL")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentImpact {
    /// Impacted count. Integral for single runs; fractional after averaging.
    pub impacted: f64,
    pub total: u64,
}

impl ComponentImpact {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.impacted / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImpactReport {
    by_component: [ComponentImpact; 6],
}

impl ImpactReport {
    pub fn get(&self, c: Component) -> ComponentImpact {
        self.by_component[c.index()]
    }

    pub fn set(&mut self, c: Component, v: ComponentImpact) {
        self.by_component[c.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Component, ComponentImpact)> + '_ {
        Component::ALL.iter().map(|&c| (c, self.get(c)))
    }

    pub fn fractions(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        for (i, c) in Component::ALL.iter().enumerate() {
            out[i] = self.get(*c).fraction();
        }
        out
    }
}

/// Distinct-entity totals for the network-layer components, independent of
/// any impact.
pub fn component_totals(bundle: &DatasetBundle) -> ImpactReport {
    let mut ips: HashSet<&str> = HashSet::new();
    let mut as_links: HashSet<AsLink> = HashSet::new();
    let mut ases: HashSet<u32> = HashSet::new();
    for rec in &bundle.records {
        ips.insert(rec.a.ip.as_str());
        ips.insert(rec.b.ip.as_str());
        if let Some(al) = rec.as_link() {
            as_links.insert(al);
        }
        ases.extend(rec.a.asn);
        ases.extend(rec.b.asn);
    }
    let mut report = ImpactReport::default();
    let set = |r: &mut ImpactReport, c: Component, total: usize| {
        r.set(c, ComponentImpact { impacted: 0.0, total: total as u64 });
    };
    set(&mut report, Component::CableSegments, bundle.segments.len());
    set(&mut report, Component::Cables, bundle.segments.cable_count());
    set(&mut report, Component::IpLinks, bundle.records.len());
    set(&mut report, Component::Ips, ips.len());
    set(&mut report, Component::AsLinks, as_links.len());
    set(&mut report, Component::Ases, ases.len());
    report
}

/// Links associated with any impacted segment, retrieved through the CS-NC
/// map: links whose endpoints all lack a country never enter the map and so
/// never count as impacted, mirroring the coverage limits of the inputs.
pub fn impacted_links(maps: &EmbeddedMaps, impacted: &ImpactedSet) -> Vec<LinkId> {
    let mut links: Vec<LinkId> = Vec::new();
    for &seg in &impacted.segments {
        for (_, ls) in maps.cs_nc.entities_of(seg) {
            links.extend_from_slice(ls);
        }
    }
    links.sort_unstable();
    links.dedup();
    links
}

/// Impact counts and fractions across all six components.
pub fn cross_layer_impact(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
) -> ImpactReport {
    let mut report = component_totals(bundle);

    let mut cables: BTreeSet<u32> = BTreeSet::new();
    for &seg in &impacted.segments {
        cables.insert(bundle.segments.get(seg).cable_idx);
    }

    let links = impacted_links(maps, impacted);
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
        ases.extend(rec.a.asn);
        ases.extend(rec.b.asn);
    }

    let mut set = |c: Component, impacted: usize| {
        let total = report.get(c).total;
        report.set(c, ComponentImpact { impacted: impacted as f64, total });
    };
    set(Component::CableSegments, impacted.segments.len());
    set(Component::Cables, cables.len());
    set(Component::IpLinks, links.len());
    set(Component::Ips, ips.len());
    set(Component::AsLinks, as_links.len());
    set(Component::Ases, ases.len());
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEntry {
    /// Affected link mass: a distinct-link count under TOP attribution, a
    /// weighted sum (per-link capped at 1) under WEIGHTED.
    pub affected: f64,
    pub total: u64,
}

impl RiskEntry {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.affected / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskProfile<E: Ord> {
    pub mode: PredictionMode,
    pub entries: BTreeMap<E, RiskEntry>,
}

fn risk_profile<E: Ord + Copy + std::hash::Hash>(
    map: &CsMap<E>,
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
) -> RiskProfile<E> {
    // Gather every (entity, link) occurrence across impacted segments; the
    // number of occurrences of a link under one entity is the number of its
    // impacted predictions.
    let mut occurrences: BTreeMap<E, Vec<LinkId>> = BTreeMap::new();
    for &seg in &impacted.segments {
        for (e, links) in map.entities_of(seg) {
            occurrences.entry(e).or_default().extend_from_slice(links);
        }
    }

    let mut entries: BTreeMap<E, RiskEntry> = map
        .totals()
        .iter()
        .map(|(&e, &total)| (e, RiskEntry { affected: 0.0, total }))
        .collect();

    for (e, mut links) in occurrences {
        links.sort_unstable();
        let mut affected = 0.0;
        let mut i = 0;
        while i < links.len() {
            let mut j = i + 1;
            while j < links.len() && links[j] == links[i] {
                j += 1;
            }
            affected += match map.mode() {
                PredictionMode::Top => 1.0,
                PredictionMode::Weighted => {
                    ((j - i) as f64 * maps.weight_of(links[i])).min(1.0)
                }
            };
            i = j;
        }
        entries.get_mut(&e).expect("occurrence entity has a total").affected = affected;
    }

    RiskProfile { mode: map.mode(), entries }
}

pub fn risk_profile_country(
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
) -> RiskProfile<CountryCode> {
    risk_profile(&maps.cs_nc, maps, impacted)
}

pub fn risk_profile_asn(maps: &EmbeddedMaps, impacted: &ImpactedSet) -> RiskProfile<u32> {
    risk_profile(&maps.cs_as, maps, impacted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InterconnectEntry {
    pub intra_affected: u64,
    pub intra_total: u64,
    pub inter_affected: u64,
    pub inter_total: u64,
}

impl InterconnectEntry {
    pub fn intra_fraction(&self) -> f64 {
        if self.intra_total == 0 {
            0.0
        } else {
            self.intra_affected as f64 / self.intra_total as f64
        }
    }

    pub fn inter_fraction(&self) -> f64 {
        if self.inter_total == 0 {
            0.0
        } else {
            self.inter_affected as f64 / self.inter_total as f64
        }
    }
}

/// Per-country split of link impact into intra-AS and inter-AS classes.
/// Links with an unknown ASN on either end belong to neither class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterconnectReport {
    pub entries: BTreeMap<CountryCode, InterconnectEntry>,
}

pub fn intra_inter_impact(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
) -> InterconnectReport {
    let mut entries: BTreeMap<CountryCode, InterconnectEntry> = BTreeMap::new();

    for rec in &bundle.records {
        let Some(kind) = rec.as_link().map(|al| al.kind()) else { continue };
        let mut cs: Vec<CountryCode> = rec.a.country.into_iter().chain(rec.b.country).collect();
        cs.sort();
        cs.dedup();
        for c in cs {
            let e = entries.entry(c).or_default();
            match kind {
                LinkKind::Intra => e.intra_total += 1,
                LinkKind::Inter => e.inter_total += 1,
            }
        }
    }

    // Affected links per country, through the CS-NC map.
    let mut per_country: BTreeMap<CountryCode, Vec<LinkId>> = BTreeMap::new();
    for &seg in &impacted.segments {
        for (c, links) in maps.cs_nc.entities_of(seg) {
            per_country.entry(c).or_default().extend_from_slice(links);
        }
    }
    for (c, mut links) in per_country {
        links.sort_unstable();
        links.dedup();
        let Some(e) = entries.get_mut(&c) else { continue };
        for l in links {
            match bundle.records[l as usize].as_link().map(|al| al.kind()) {
                Some(LinkKind::Intra) => e.intra_affected += 1,
                Some(LinkKind::Inter) => e.inter_affected += 1,
                None => {}
            }
        }
    }

    InterconnectReport { entries }
}

/// Joint profile of several events applied together.
#[derive(Debug, Clone)]
pub struct MultiEventProfile {
    pub union: ImpactedSet,
    pub impact: ImpactReport,
    pub risk_country: RiskProfile<CountryCode>,
    pub risk_asn: RiskProfile<u32>,
    pub interconnect: InterconnectReport,
}

pub fn multi_event_profile(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    sets: Vec<ImpactedSet>,
) -> MultiEventProfile {
    let union = ImpactedSet::union(sets);
    let impact = cross_layer_impact(bundle, maps, &union);
    let risk_country = risk_profile_country(maps, &union);
    let risk_asn = risk_profile_asn(maps, &union);
    let interconnect = intra_inter_impact(bundle, maps, &union);
    MultiEventProfile { union, impact, risk_country, risk_asn, interconnect }
}
