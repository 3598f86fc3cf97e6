//! Cross-checks pipeline analyses against the brute-force oracles on seeded
//! synthetic worlds. The oracles recompute everything straight from the
//! records, so any disagreement points at a bug in the maps or an analysis.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xresil_core::analysis::sensitivity::{sensitivity_run, SensitivityMix};
use xresil_core::analysis::stats::{connectivity_stats, intra_fraction_per_p_country};
use xresil_core::analysis::{
    cross_layer_impact, impacted_links, intra_inter_impact, risk_profile_asn,
    risk_profile_country,
};
use xresil_core::embed::{EmbeddedMaps, PredictionMode};
use xresil_core::identify::ImpactedSet;
use xresil_core::ingest::DatasetBundle;
use xresil_core::model::SegmentId;
use xresil_core::synth::{
    generate_world, oracle_connectivity, oracle_impact, oracle_impacted_links,
    oracle_interconnect, oracle_intra_share, oracle_risk_asn, oracle_risk_country,
    oracle_sensitivity_survival, WorldSpec,
};

fn spec_for(seed: u64) -> WorldSpec {
    // Vary the world shape with the seed so the suite sweeps small dense
    // worlds as well as larger sparse ones.
    WorldSpec {
        seed,
        n_countries: 3 + (seed % 9) as usize,
        n_stations: 6 + (seed % 20) as usize,
        n_cables: 3 + (seed % 8) as usize,
        segments_per_cable_max: 1 + (seed % 3) as usize,
        parallel_groups: (seed % 3) as usize,
        n_links: 40 + (seed * 37 % 400) as usize,
        max_predictions: 1 + (seed % 4) as usize,
        n_asns: 2 + (seed % 10) as usize,
        unknown_country_fraction: (seed % 5) as f64 * 0.08,
        unknown_asn_fraction: (seed % 4) as f64 * 0.1,
        ..WorldSpec::default()
    }
}

fn random_impacted(bundle: &DatasetBundle, rng: &mut ChaCha8Rng, p: f64) -> ImpactedSet {
    let mut set = ImpactedSet::default();
    for id in bundle.segments.ids() {
        if rng.gen::<f64>() < p {
            set.segments.insert(id);
        }
    }
    set
}

fn assert_close(a: f64, b: f64, what: &str, seed: u64) {
    assert!(
        (a - b).abs() <= 1e-12,
        "{what} mismatch at seed {seed}: pipeline {a} vs oracle {b}"
    );
}

fn check_world(seed: u64) {
    let world = generate_world(&spec_for(seed)).expect("world generation");
    let bundle = &world.bundle;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);

    for mode in [PredictionMode::Top, PredictionMode::Weighted] {
        let maps = EmbeddedMaps::build(bundle, mode);
        let impacted = random_impacted(bundle, &mut rng, 0.3);
        let segs: &BTreeSet<SegmentId> = &impacted.segments;

        let links = impacted_links(&maps, &impacted);
        assert_eq!(links, oracle_impacted_links(bundle, segs, mode), "links seed {seed}");

        let impact = cross_layer_impact(bundle, &maps, &impacted);
        let expect = oracle_impact(bundle, segs, mode);
        for (c, got) in impact.iter() {
            let want = expect.get(c);
            assert_eq!(got.impacted, want.impacted, "{c:?} impacted seed {seed}");
            assert_eq!(got.total, want.total, "{c:?} total seed {seed}");
            assert_close(got.fraction(), want.fraction(), "impact fraction", seed);
        }

        let risk_c = risk_profile_country(&maps, &impacted);
        let want_c = oracle_risk_country(bundle, segs, mode);
        assert_eq!(
            risk_c.entries.keys().collect::<Vec<_>>(),
            want_c.keys().collect::<Vec<_>>(),
            "risk country coverage seed {seed}"
        );
        for (cc, e) in &risk_c.entries {
            let (aff, tot) = want_c[cc];
            assert_eq!(e.total, tot, "risk total for {cc} seed {seed}");
            assert_close(e.affected, aff, "risk affected", seed);
        }

        let risk_a = risk_profile_asn(&maps, &impacted);
        let want_a = oracle_risk_asn(bundle, segs, mode);
        assert_eq!(
            risk_a.entries.keys().collect::<Vec<_>>(),
            want_a.keys().collect::<Vec<_>>(),
            "risk asn coverage seed {seed}"
        );
        for (asn, e) in &risk_a.entries {
            let (aff, tot) = want_a[asn];
            assert_eq!(e.total, tot, "risk total for AS{asn} seed {seed}");
            assert_close(e.affected, aff, "risk asn affected", seed);
        }

        let inter = intra_inter_impact(bundle, &maps, &impacted);
        assert_eq!(inter.entries, oracle_interconnect(bundle, segs, mode), "interconnect seed {seed}");

        let conn = connectivity_stats(bundle, &maps);
        let (want_cc, want_asn) = oracle_connectivity(bundle, mode);
        assert_eq!(conn.per_country, want_cc, "connectivity country seed {seed}");
        assert_eq!(conn.per_asn, want_asn, "connectivity asn seed {seed}");

        let shares = intra_fraction_per_p_country(bundle, &maps);
        assert_eq!(shares, oracle_intra_share(bundle, mode), "intra share seed {seed}");
    }
}

#[test]
fn analyses_match_oracles_across_worlds() {
    for seed in 0..60 {
        check_world(seed);
    }
}

#[test]
fn sensitivity_mean_tracks_expectation() {
    let world = generate_world(&spec_for(7)).expect("world generation");
    let bundle = &world.bundle;
    let maps = EmbeddedMaps::build(bundle, PredictionMode::Top);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let impacted = random_impacted(bundle, &mut rng, 0.4);

    let mix = SensitivityMix::new(70, 20, 10).unwrap();
    let rounds = 4000u32;
    let report = sensitivity_run(bundle, &maps, &impacted, mix, rounds, 5).unwrap();

    let survival = oracle_sensitivity_survival(bundle, &impacted.segments, mix);
    let expected: f64 = survival.iter().sum();
    let var: f64 = survival.iter().map(|p| p * (1.0 - p)).sum();
    let se = (var / rounds as f64).sqrt();
    let got = report.mean.get(xresil_core::analysis::Component::IpLinks).impacted;
    assert!(
        (got - expected).abs() <= 4.0 * se + 1e-9,
        "mean impacted links {got} vs expectation {expected} (se {se})"
    );
}

#[test]
fn empty_impacted_set_zeroes_affected_counts() {
    let world = generate_world(&spec_for(11)).expect("world generation");
    let bundle = &world.bundle;
    for mode in [PredictionMode::Top, PredictionMode::Weighted] {
        let maps = EmbeddedMaps::build(bundle, mode);
        let impacted = ImpactedSet::default();
        let impact = cross_layer_impact(bundle, &maps, &impacted);
        for (_, e) in impact.iter() {
            assert_eq!(e.impacted, 0.0);
        }
        let risk = risk_profile_country(&maps, &impacted);
        assert!(risk.entries.values().all(|e| e.affected == 0.0));
    }
}

#[test]
fn full_impacted_set_hits_every_mapped_link() {
    let world = generate_world(&spec_for(23)).expect("world generation");
    let bundle = &world.bundle;
    for mode in [PredictionMode::Top, PredictionMode::Weighted] {
        let maps = EmbeddedMaps::build(bundle, mode);
        let mut impacted = ImpactedSet::default();
        impacted.segments.extend(bundle.segments.ids());
        let links = impacted_links(&maps, &impacted);
        // Every link with at least one known endpoint country must show up.
        let expect = oracle_impacted_links(bundle, &impacted.segments, mode);
        assert_eq!(links, expect);
        let impact = cross_layer_impact(bundle, &maps, &impacted);
        use xresil_core::analysis::Component;
        assert_eq!(
            impact.get(Component::CableSegments).impacted as u64,
            impact.get(Component::CableSegments).total
        );
        assert_eq!(impact.get(Component::Cables).impacted as u64, impact.get(Component::Cables).total);
    }
}
