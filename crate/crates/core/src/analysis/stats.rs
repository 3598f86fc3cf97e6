//! Event-independent connectivity statistics: how much physical
//! infrastructure each country or AS depends on, and how domestic each
//! country's cable usage is.

use std::collections::{BTreeMap, BTreeSet};

use crate::embed::{CsMap, EmbeddedMaps};
use crate::ingest::DatasetBundle;
use crate::model::{CountryCode, LinkId, LinkKind, StationIdx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConnectivityEntry {
    pub segments: u64,
    pub cables: u64,
    pub stations: u64,
    /// Distinct landing countries this entity's links depend on. For an
    /// N-Country this can exceed what its own shores host: traffic of a
    /// country often lands far beyond its borders.
    pub p_countries: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ConnectivityStats {
    pub per_country: BTreeMap<CountryCode, ConnectivityEntry>,
    pub per_asn: BTreeMap<u32, ConnectivityEntry>,
}

fn connectivity_of<E: Ord + Copy + std::hash::Hash>(
    map: &CsMap<E>,
    bundle: &DatasetBundle,
) -> BTreeMap<E, ConnectivityEntry> {
    struct Acc {
        segments: u64,
        cables: BTreeSet<u32>,
        stations: BTreeSet<StationIdx>,
        p_countries: BTreeSet<CountryCode>,
    }
    let mut acc: BTreeMap<E, Acc> = BTreeMap::new();
    for seg in map.segments() {
        let entry = bundle.segments.get(seg);
        let pcs = bundle.segments.p_countries(seg, &bundle.stations);
        for (e, _) in map.entities_of(seg) {
            let a = acc.entry(e).or_insert_with(|| Acc {
                segments: 0,
                cables: BTreeSet::new(),
                stations: BTreeSet::new(),
                p_countries: BTreeSet::new(),
            });
            a.segments += 1;
            a.cables.insert(entry.cable_idx);
            a.stations.insert(entry.station_a);
            a.stations.insert(entry.station_b);
            a.p_countries.extend(pcs.iter().copied());
        }
    }
    acc.into_iter()
        .map(|(e, a)| {
            (
                e,
                ConnectivityEntry {
                    segments: a.segments,
                    cables: a.cables.len() as u64,
                    stations: a.stations.len() as u64,
                    p_countries: a.p_countries.len() as u64,
                },
            )
        })
        .collect()
}

/// Distinct physical components each N-Country and each AS relies on, under
/// the prediction mode the maps were built with.
pub fn connectivity_stats(bundle: &DatasetBundle, maps: &EmbeddedMaps) -> ConnectivityStats {
    ConnectivityStats {
        per_country: connectivity_of(&maps.cs_nc, bundle),
        per_asn: connectivity_of(&maps.cs_as, bundle),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntraShare {
    pub intra_links: u64,
    /// AS-resolvable links riding this country's cables.
    pub total_links: u64,
}

impl IntraShare {
    pub fn fraction(&self) -> f64 {
        if self.total_links == 0 {
            0.0
        } else {
            self.intra_links as f64 / self.total_links as f64
        }
    }
}

/// For each landing country: what share of the links using its submarine
/// cables is intra-AS. Link sets come from the CS-NC map, so links with no
/// geolocated endpoint are not attributed; links with an unknown ASN are
/// excluded from both numerator and denominator.
pub fn intra_fraction_per_p_country(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
) -> BTreeMap<CountryCode, IntraShare> {
    let mut links_by_pc: BTreeMap<CountryCode, BTreeSet<LinkId>> = BTreeMap::new();
    for seg in maps.cs_nc.segments() {
        let pcs = bundle.segments.p_countries(seg, &bundle.stations);
        for (_, links) in maps.cs_nc.entities_of(seg) {
            for &pc in &pcs {
                links_by_pc.entry(pc).or_default().extend(links.iter().copied());
            }
        }
    }
    links_by_pc
        .into_iter()
        .map(|(pc, links)| {
            let mut share = IntraShare::default();
            for l in links {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddedMaps, PredictionMode};
    use crate::model::{CableSegment, IpEndpoint, LandingStation};

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    fn seg(c: &str, a: &str, b: &str) -> CableSegment {
        CableSegment::new(c.into(), a.into(), b.into()).unwrap()
    }

    fn ep(ip: &str, country: &str, asn: u32) -> IpEndpoint {
        IpEndpoint::new(ip, Some(cc(country)), Some(asn), None).unwrap()
    }

    /// DE is landlocked here: no landing stations, but its links ride
    /// cables landing in FR, PT, and US.
    fn landlocked_world() -> DatasetBundle {
        DatasetBundle::from_parts(
            vec![
                LandingStation::new("FR1".into(), 48.0, -4.0, cc("FR")).unwrap(),
                LandingStation::new("PT1".into(), 38.7, -9.4, cc("PT")).unwrap(),
                LandingStation::new("US1".into(), 40.5, -74.0, cc("US")).unwrap(),
            ],
            vec![
                (
                    ep("10.0.0.1", "DE", 3320),
                    ep("10.0.0.2", "US", 701),
                    vec![(seg("atl1", "FR1", "US1"), 0.9)],
                ),
                (
                    ep("10.0.0.3", "DE", 3320),
                    ep("10.0.0.4", "US", 701),
                    vec![(seg("atl2", "PT1", "US1"), 0.9)],
                ),
                (
                    ep("10.0.0.5", "FR", 5511),
                    ep("10.0.0.6", "FR", 5511),
                    vec![(seg("bay", "FR1", "PT1"), 0.9)],
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn landlocked_country_reaches_foreign_shores() {
        let b = landlocked_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let stats = connectivity_stats(&b, &maps);
        let de = stats.per_country[&cc("DE")];
        assert_eq!(de.segments, 2);
        assert_eq!(de.cables, 2);
        assert_eq!(de.stations, 3);
        // DE itself hosts no landings yet depends on three landing countries.
        assert_eq!(de.p_countries, 3);
        let fr = stats.per_country[&cc("FR")];
        assert_eq!(fr.segments, 1);
        assert_eq!(fr.p_countries, 2);
    }

    #[test]
    fn per_asn_connectivity() {
        let b = landlocked_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let stats = connectivity_stats(&b, &maps);
        assert_eq!(stats.per_asn[&3320].segments, 2);
        assert_eq!(stats.per_asn[&701].segments, 2);
        assert_eq!(stats.per_asn[&5511].segments, 1);
    }

    #[test]
    fn intra_share_per_landing_country() {
        let b = landlocked_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let shares = intra_fraction_per_p_country(&b, &maps);
        // FR's shores carry the DE-US inter link and the FR-FR intra link.
        let fr = shares[&cc("FR")];
        assert_eq!(fr.total_links, 2);
        assert_eq!(fr.intra_links, 1);
        assert_eq!(fr.fraction(), 0.5);
        // US shores carry only inter links.
        let us = shares[&cc("US")];
        assert_eq!(us.intra_links, 0);
        assert_eq!(us.total_links, 2);
        // DE has no shores, so it never appears as a P-Country.
        assert!(!shares.contains_key(&cc("DE")));
    }
}
