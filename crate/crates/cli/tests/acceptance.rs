//! Acceptance gate for the whole pipeline. Each test covers one criterion
//! and prints a single PASS line (visible with --nocapture); a failing
//! assertion is the FAIL. A global lock serializes the criteria so the
//! timing and peak-memory checks are not skewed by sibling tests.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xresil_core::analysis::cluster::{correlation_clusters, FeatureSpace};
use xresil_core::analysis::sensitivity::{sensitivity_run, SensitivityMix};
use xresil_core::analysis::stats::{connectivity_stats, intra_fraction_per_p_country};
use xresil_core::analysis::{
    cross_layer_impact, intra_inter_impact, multi_event_profile, risk_profile_asn,
    risk_profile_country, Component,
};
use xresil_core::embed::{EmbeddedMaps, PredictionMode};
use xresil_core::hazard::{
    standard_defaults, EventModel, IntensityGrid, IntensitySource, MmiConversion, ValueTransform,
};
use xresil_core::identify::{
    identify_event, sample_points, CandidatePoint, FailureDistribution, ImpactedSet,
    PointInCountry, Strategy,
};
use xresil_core::ingest::DatasetBundle;
use xresil_core::model::{
    CableSegment, CountryCode, GeoPoint, IpEndpoint, LandingStation, Region, SegmentId,
};
use xresil_core::synth::{
    generate_world, oracle_connectivity, oracle_impact, oracle_interconnect, oracle_intra_share,
    oracle_risk_asn, oracle_risk_country, oracle_sensitivity_survival, GridSpec, WorldSpec,
};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn pass(n: u32, name: &str, detail: &str) {
    if detail.is_empty() {
        println!("ACCEPTANCE {n} ({name}): PASS");
    } else {
        println!("ACCEPTANCE {n} ({name}): PASS [{detail}]");
    }
}

fn cc(s: &str) -> CountryCode {
    CountryCode::new(s).unwrap()
}

fn code(i: usize) -> CountryCode {
    let a = (b'A' + (i / 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    cc(&format!("{a}{b}"))
}

fn ip(n: usize) -> String {
    format!("10.{}.{}.{}", (n >> 16) & 255, (n >> 8) & 255, n & 255)
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

// ---------------------------------------------------------------------------
// 1. Analyses agree with brute-force oracles on 1,000 seeded worlds.

fn equivalence_spec(seed: u64) -> WorldSpec {
    let n_links = if seed % 100 == 99 { 10_000 } else { 50 + (seed * 97 % 1500) as usize };
    WorldSpec {
        seed,
        n_countries: 3 + (seed % 10) as usize,
        n_stations: 6 + (seed % 24) as usize,
        n_cables: 3 + (seed % 9) as usize,
        segments_per_cable_max: 1 + (seed % 3) as usize,
        parallel_groups: (seed % 3) as usize,
        n_links,
        max_predictions: 1 + (seed % 4) as usize,
        n_asns: 2 + (seed % 12) as usize,
        unknown_country_fraction: (seed % 5) as f64 * 0.08,
        unknown_asn_fraction: (seed % 4) as f64 * 0.1,
        ..WorldSpec::default()
    }
}

#[test]
fn c01_oracle_equivalence() {
    let _g = gate();
    let started = Instant::now();
    for seed in 0..1000u64 {
        let world = generate_world(&equivalence_spec(seed)).expect("world generation");
        let bundle = &world.bundle;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1b54a32d192ed03);
        for mode in [PredictionMode::Top, PredictionMode::Weighted] {
            let maps = EmbeddedMaps::build(bundle, mode);
            let impacted = random_impacted(bundle, &mut rng, 0.3);
            let segs: &BTreeSet<SegmentId> = &impacted.segments;

            let impact = cross_layer_impact(bundle, &maps, &impacted);
            let want = oracle_impact(bundle, segs, mode);
            for (c, got) in impact.iter() {
                let w = want.get(c);
                assert_eq!(got.impacted, w.impacted, "{c:?} count seed {seed} {mode:?}");
                assert_eq!(got.total, w.total, "{c:?} total seed {seed} {mode:?}");
                assert!(
                    (got.fraction() - w.fraction()).abs() <= 1e-12,
                    "{c:?} fraction seed {seed} {mode:?}"
                );
            }

            let risk_c = risk_profile_country(&maps, &impacted);
            let want_c = oracle_risk_country(bundle, segs, mode);
            assert_eq!(risk_c.entries.len(), want_c.len(), "risk coverage seed {seed}");
            for (country, e) in &risk_c.entries {
                let (aff, tot) = want_c[country];
                assert_eq!(e.total, tot, "risk total {country} seed {seed}");
                assert!((e.affected - aff).abs() <= 1e-12, "risk affected {country} seed {seed}");
            }
            let risk_a = risk_profile_asn(&maps, &impacted);
            let want_a = oracle_risk_asn(bundle, segs, mode);
            assert_eq!(risk_a.entries.len(), want_a.len(), "asn coverage seed {seed}");
            for (asn, e) in &risk_a.entries {
                let (aff, tot) = want_a[asn];
                assert_eq!(e.total, tot, "risk total AS{asn} seed {seed}");
                assert!((e.affected - aff).abs() <= 1e-12, "risk affected AS{asn} seed {seed}");
            }

            let inter = intra_inter_impact(bundle, &maps, &impacted);
            assert_eq!(inter.entries, oracle_interconnect(bundle, segs, mode), "interconnect seed {seed}");

            let conn = connectivity_stats(bundle, &maps);
            let (want_cc, want_asn) = oracle_connectivity(bundle, mode);
            assert_eq!(conn.per_country, want_cc, "connectivity seed {seed}");
            assert_eq!(conn.per_asn, want_asn, "connectivity asn seed {seed}");

            assert_eq!(
                intra_fraction_per_p_country(bundle, &maps),
                oracle_intra_share(bundle, mode),
                "intra share seed {seed}"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "equivalence sweep took {elapsed:?}, budget is 5 min");
    pass(1, "oracle equivalence", &format!("1000 worlds in {:.1?}", elapsed));
}

// ---------------------------------------------------------------------------
// 2. Identical config and seed give byte-identical CSVs, across repeated
//    runs and across thread counts.

fn xresil(args: &[&str], dir: &Path, threads: Option<&str>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xresil"));
    cmd.args(args).current_dir(dir).env_remove("XRESIL_THREADS");
    if let Some(t) = threads {
        cmd.env("XRESIL_THREADS", t);
    }
    let out = cmd.output().expect("spawn xresil");
    assert!(
        out.status.success(),
        "xresil {:?} exited {:?}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

fn assert_dirs_match(a: &Path, b: &Path, label: &str) {
    let names = csv_files(a);
    assert_eq!(names, csv_files(b), "{label}: different file sets");
    for name in &names {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{label}: {name} differs");
    }
}

#[test]
fn c02_pipeline_determinism() {
    let _g = gate();
    let root = tempfile::tempdir().unwrap();
    let spec = WorldSpec {
        seed: 11,
        n_countries: 8,
        n_stations: 20,
        n_cables: 8,
        parallel_groups: 2,
        n_links: 400,
        max_predictions: 3,
        n_asns: 10,
        grid: Some(GridSpec::default()),
        ..WorldSpec::default()
    };
    let spec_path = root.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    xresil(&["synth", "--spec", "spec.json", "--out", "world"], root.path(), None);

    // Extend the emitted config so every optional output is exercised.
    let config_path = root.path().join("world/config.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config_path).unwrap()).unwrap();
    let obj = config.as_object_mut().unwrap();
    obj.insert(
        "sweep".into(),
        serde_json::json!({
            "probabilities": [0.1, 0.5, 1.0],
            "strategies": ["top_n", "random", "weighted"],
            "runs": 4,
        }),
    );
    obj.insert("cluster".into(), serde_json::json!({"cut": 0.8}));
    obj.insert(
        "sensitivity".into(),
        serde_json::json!({"mixes": [[100, 0, 0], [90, 7, 3]], "rounds": 20}),
    );
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    for (out, threads) in [
        ("out_a", None),
        ("out_b", None),
        ("out_t1", Some("1")),
        ("out_t8", Some("8")),
    ] {
        xresil(&["run", "--config", "world/config.json", "--out", out], root.path(), threads);
    }

    let base = root.path().join("out_a");
    let produced = csv_files(&base);
    for expect in [
        "impacted_segments.csv",
        "impact_report.csv",
        "risk_country.csv",
        "risk_asn.csv",
        "interconnect.csv",
        "connectivity_country.csv",
        "connectivity_asn.csv",
        "intra_fraction_p_country.csv",
        "sweep.csv",
        "clusters.csv",
        "dendrogram.csv",
        "sensitivity.csv",
    ] {
        assert!(produced.iter().any(|n| n == expect), "missing output {expect}");
    }
    assert_dirs_match(&base, &root.path().join("out_b"), "repeat run");
    assert_dirs_match(&base, &root.path().join("out_t1"), "1 thread");
    assert_dirs_match(&base, &root.path().join("out_t8"), "8 threads");
    pass(2, "pipeline determinism", &format!("{} CSVs byte-identical x4 runs", produced.len()));
}

// ---------------------------------------------------------------------------
// 3. Hand-built fixture: each standard model reproduces the impacted set
//    worked out by hand from the grid geometry.

struct Fixture {
    bundle: DatasetBundle,
    grid: Arc<IntensityGrid>,
}

/// Five cells, four stations, six segments. Distances (haversine):
///   N1 sits on cell A; N2 is 95.6 km from A and 4.6 km from B;
///   S1 is 22.2 km from C and 88.9 km from D; H1 is 5.6 km from E.
fn hand_fixture() -> Fixture {
    let mut grid = IntensityGrid::new(1.0, "raw").unwrap();
    grid.insert_sample(35.0, 139.0, 200.0).unwrap(); // A: quake + hurricane
    grid.insert_sample(35.0, 140.0, 50.0).unwrap(); // B: below every threshold
    grid.insert_sample(1.0, 103.0, 80.0).unwrap(); // C: hurricane only
    grid.insert_sample(1.0, 104.0, 0.5).unwrap(); // D: sea rise only
    grid.insert_sample(60.0, -45.0, 0.9).unwrap(); // E: sea rise only

    let stations = vec![
        LandingStation::new("N1".into(), 35.0, 139.0, cc("JP")).unwrap(),
        LandingStation::new("N2".into(), 35.0, 140.05, cc("JP")).unwrap(),
        LandingStation::new("S1".into(), 1.0, 103.2, cc("SG")).unwrap(),
        LandingStation::new("H1".into(), 60.0, -44.9, cc("GL")).unwrap(),
    ];
    let seg = |c: &str, a: &str, b: &str| CableSegment::new(c.into(), a.into(), b.into()).unwrap();
    let segments = [
        seg("c1", "N1", "N2"),
        seg("c1", "N2", "S1"),
        seg("c2", "N1", "S1"),
        seg("c3", "S1", "H1"),
        seg("c4", "N1", "H1"),
        seg("c5", "N2", "H1"),
    ];
    let records = segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = IpEndpoint::new(&ip(2 * i), Some(cc("US")), Some(1), None).unwrap();
            let b = IpEndpoint::new(&ip(2 * i + 1), Some(cc("US")), Some(1), None).unwrap();
            (a, b, vec![(s.clone(), 0.9)])
        })
        .collect();
    Fixture {
        bundle: DatasetBundle::from_parts(stations, records).unwrap(),
        grid: Arc::new(grid),
    }
}

fn standard_model(kind: &str, grid: &Arc<IntensityGrid>) -> EventModel {
    let d = standard_defaults(kind).expect("standard kind");
    EventModel {
        name: kind.into(),
        source: if d.latitude_rule {
            IntensitySource::LatitudeRule
        } else {
            IntensitySource::Grid(Arc::clone(grid))
        },
        transform: if d.pga_to_mmi {
            ValueTransform::PgaToMmi(MmiConversion::default())
        } else {
            ValueTransform::Identity
        },
        threshold: d.threshold,
        direction: d.direction,
        probe_km: d.probe_km,
    }
}

#[test]
fn c03_workflow_fidelity() {
    let _g = gate();
    let fx = hand_fixture();
    let bundle = &fx.bundle;
    let st = |id: &str| bundle.stations.lookup(id).unwrap();
    let sg = |c: &str, a: &str, b: &str| {
        bundle
            .segments
            .lookup(&CableSegment::new(c.into(), a.into(), b.into()).unwrap())
            .unwrap()
    };
    let dist = FailureDistribution { probability: 1.0, strategy: Strategy::TopN, seed: 0 };
    let resolver = PointInCountry::default();

    // (model kind, sampled (lat, lon, intensity), stations, segments)
    let mmi_200 = 6.913810983956731; // -1.6 + 3.7 * log10(200)
    let cases = [
        (
            "earthquake",
            vec![(35.0, 139.0, mmi_200)],
            vec!["N1"],
            vec![("c1", "N1", "N2"), ("c2", "N1", "S1"), ("c4", "N1", "H1")],
        ),
        (
            "hurricane",
            vec![(1.0, 103.0, 80.0), (35.0, 139.0, 200.0)],
            vec!["N1", "S1"],
            vec![
                ("c1", "N1", "N2"),
                ("c1", "N2", "S1"),
                ("c2", "N1", "S1"),
                ("c3", "S1", "H1"),
                ("c4", "N1", "H1"),
            ],
        ),
        (
            "sea_rise",
            vec![(1.0, 104.0, 0.5), (60.0, -45.0, 0.9)],
            vec!["H1"],
            vec![("c3", "S1", "H1"), ("c4", "N1", "H1"), ("c5", "N2", "H1")],
        ),
        (
            "solar",
            vec![(60.0, -44.9, 60.0)],
            vec!["H1"],
            vec![("c3", "S1", "H1"), ("c4", "N1", "H1"), ("c5", "N2", "H1")],
        ),
    ];

    for (kind, points, stations, segments) in cases {
        let model = standard_model(kind, &fx.grid);
        let got = identify_event(bundle, &model, &Region::Global, &dist, &resolver).unwrap();

        assert_eq!(got.sampled_points.len(), points.len(), "{kind}: sampled count");
        for (got_p, (lat, lon, intensity)) in got.sampled_points.iter().zip(&points) {
            assert_eq!(got_p.point.lat, *lat, "{kind}: sampled lat");
            assert_eq!(got_p.point.lon, *lon, "{kind}: sampled lon");
            assert!(
                (got_p.intensity - intensity).abs() < 1e-9,
                "{kind}: intensity {} vs {intensity}",
                got_p.intensity
            );
        }
        let want_st: BTreeSet<_> = stations.iter().map(|s| st(s)).collect();
        assert_eq!(got.stations, want_st, "{kind}: stations");
        let want_sg: BTreeSet<_> = segments.iter().map(|(c, a, b)| sg(c, a, b)).collect();
        assert_eq!(got.segments, want_sg, "{kind}: segments");
    }
    pass(3, "workflow fidelity", "4 standard models on the hand fixture");
}

// ---------------------------------------------------------------------------
// 4. TOP_N impact fractions never decrease as the failure probability grows.

#[test]
fn c04_topn_monotonicity() {
    let _g = gate();
    for seed in 0..20u64 {
        let spec = WorldSpec {
            seed: 1000 + seed,
            n_countries: 6,
            n_stations: 16 + (seed % 8) as usize,
            n_cables: 6,
            parallel_groups: 1,
            n_links: 500,
            max_predictions: 2,
            grid: Some(GridSpec {
                background_cells: 60,
                hot_spots: 6,
                ..GridSpec::default()
            }),
            ..WorldSpec::default()
        };
        let world = generate_world(&spec).unwrap();
        let bundle = &world.bundle;
        let model = world.model.as_ref().expect("grid world has a model");
        let maps = EmbeddedMaps::build(bundle, PredictionMode::Top);
        let resolver = PointInCountry::default();

        let mut last = [0.0f64; 6];
        for step in 1..=100u32 {
            let dist = FailureDistribution {
                probability: step as f64 / 100.0,
                strategy: Strategy::TopN,
                seed: 7,
            };
            let impacted = identify_event(bundle, model, &Region::Global, &dist, &resolver).unwrap();
            let report = cross_layer_impact(bundle, &maps, &impacted);
            for (i, (c, e)) in report.iter().enumerate() {
                let f = e.fraction();
                assert!(
                    f >= last[i],
                    "seed {seed} {c:?}: fraction dropped {} -> {f} at p={}",
                    last[i],
                    dist.probability
                );
                last[i] = f;
            }
        }
    }
    pass(4, "monotonicity", "20 worlds x 100 probability steps, 0 violations");
}

// ---------------------------------------------------------------------------
// 5. Multi-event profiles equal the single-event analysis of the manually
//    unioned segment set.

#[test]
fn c05_multi_event_union() {
    let _g = gate();

    // The basic set algebra first: {s1, s2} u {s2, s3} = {s1, s2, s3}.
    let stations = vec![
        LandingStation::new("X1".into(), 0.0, 0.0, cc("US")).unwrap(),
        LandingStation::new("X2".into(), 0.0, 1.0, cc("US")).unwrap(),
        LandingStation::new("X3".into(), 0.0, 2.0, cc("GB")).unwrap(),
        LandingStation::new("X4".into(), 0.0, 3.0, cc("GB")).unwrap(),
    ];
    let s1 = CableSegment::new("cA".into(), "X1".into(), "X2".into()).unwrap();
    let s2 = CableSegment::new("cA".into(), "X2".into(), "X3".into()).unwrap();
    let s3 = CableSegment::new("cB".into(), "X3".into(), "X4".into()).unwrap();
    let records = [&s1, &s2, &s3]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let a = IpEndpoint::new(&ip(2 * i), Some(cc("DE")), Some(3), None).unwrap();
            let b = IpEndpoint::new(&ip(2 * i + 1), Some(cc("FR")), Some(4), None).unwrap();
            (a, b, vec![((*s).clone(), 0.8)])
        })
        .collect();
    let toy = DatasetBundle::from_parts(stations, records).unwrap();
    let toy_maps = EmbeddedMaps::build(&toy, PredictionMode::Top);
    let id_of = |s: &CableSegment| toy.segments.lookup(s).unwrap();
    let mut left = ImpactedSet::default();
    left.segments.extend([id_of(&s1), id_of(&s2)]);
    let mut right = ImpactedSet::default();
    right.segments.extend([id_of(&s2), id_of(&s3)]);
    let profile = multi_event_profile(&toy, &toy_maps, vec![left, right]);
    let want: BTreeSet<SegmentId> = [id_of(&s1), id_of(&s2), id_of(&s3)].into_iter().collect();
    assert_eq!(profile.union.segments, want);
    assert_eq!(profile.union.segments.len(), 3);

    // Random scenario pairs across worlds.
    for seed in 0..30u64 {
        let spec = WorldSpec {
            seed: 2000 + seed,
            n_links: 300,
            parallel_groups: 1,
            grid: Some(GridSpec::default()),
            ..WorldSpec::default()
        };
        let world = generate_world(&spec).unwrap();
        let bundle = &world.bundle;
        let model = world.model.as_ref().unwrap();
        let resolver = PointInCountry::default();
        let d1 = FailureDistribution { probability: 0.4, strategy: Strategy::Random, seed };
        let d2 = FailureDistribution { probability: 0.5, strategy: Strategy::Weighted, seed: seed + 1 };
        let a = identify_event(bundle, model, &Region::Global, &d1, &resolver).unwrap();
        let b = identify_event(bundle, model, &Region::Global, &d2, &resolver).unwrap();

        for mode in [PredictionMode::Top, PredictionMode::Weighted] {
            let maps = EmbeddedMaps::build(bundle, mode);
            let profile = multi_event_profile(bundle, &maps, vec![a.clone(), b.clone()]);

            let manual = ImpactedSet {
                segments: a.segments.union(&b.segments).copied().collect(),
                stations: a.stations.union(&b.stations).copied().collect(),
                ..Default::default()
            };
            assert_eq!(profile.union.segments, manual.segments, "seed {seed}");
            assert_eq!(profile.union.stations, manual.stations, "seed {seed}");
            assert_eq!(profile.impact, cross_layer_impact(bundle, &maps, &manual), "seed {seed}");
            assert_eq!(profile.risk_country, risk_profile_country(&maps, &manual), "seed {seed}");
            assert_eq!(profile.risk_asn, risk_profile_asn(&maps, &manual), "seed {seed}");
            assert_eq!(profile.interconnect, intra_inter_impact(bundle, &maps, &manual), "seed {seed}");
        }
    }
    pass(5, "multi-event union", "worked example + 30 random scenario pairs, exact");
}

// ---------------------------------------------------------------------------
// 6. Weighted attribution: one of four parallel predictions contributes
//    exactly 1/4; all four together cap at exactly 1.

#[test]
fn c06_weighted_mechanism() {
    let _g = gate();
    let stations = vec![
        LandingStation::new("A".into(), 0.0, 0.0, cc("US")).unwrap(),
        LandingStation::new("B".into(), 0.0, 10.0, cc("GB")).unwrap(),
    ];
    let segs: Vec<CableSegment> = (1..=4)
        .map(|i| CableSegment::new(format!("p{i}"), "A".into(), "B".into()).unwrap())
        .collect();
    let a = IpEndpoint::new("10.0.0.1", Some(cc("DE")), Some(7), None).unwrap();
    let b = IpEndpoint::new("10.0.0.2", Some(cc("DE")), Some(7), None).unwrap();
    let preds = vec![
        (segs[0].clone(), 0.9),
        (segs[1].clone(), 0.8),
        (segs[2].clone(), 0.7),
        (segs[3].clone(), 0.6),
    ];
    let bundle = DatasetBundle::from_parts(stations, vec![(a, b, preds)]).unwrap();
    let maps = EmbeddedMaps::build(&bundle, PredictionMode::Weighted);
    let de = cc("DE");

    let affected_for = |k: usize| {
        let mut impacted = ImpactedSet::default();
        impacted.segments.extend(segs.iter().take(k).map(|s| bundle.segments.lookup(s).unwrap()));
        risk_profile_country(&maps, &impacted).entries[&de].affected
    };
    assert_eq!(affected_for(1), 0.25, "single impacted prediction contributes w = 1/4");
    assert_eq!(affected_for(2), 0.5);
    assert_eq!(affected_for(3), 0.75);
    assert_eq!(affected_for(4), 1.0, "cap holds the link at full weight");
    pass(6, "weighted attribution", "1/4 per prediction, capped at 1");
}

// ---------------------------------------------------------------------------
// 7. Clustering recovers planted block structure for k in {2, 3, 4}, and
//    the cluster count never increases as the cut rises.

/// Each block has its own four landing countries and three endpoint
/// countries whose usage splits 6:2, 2:6, and 4:4 across the block's two
/// cables. Blocks share nothing, so inter-block merges come last.
fn block_world(k: usize) -> DatasetBundle {
    let mut stations = Vec::new();
    for b in 0..k {
        for j in 0..4 {
            let i = b * 4 + j;
            let st = LandingStation::new(
                format!("S{b}_{j}"),
                i as f64 * 0.5 - 40.0,
                i as f64 * 0.5,
                code(i),
            )
            .unwrap();
            stations.push(st);
        }
    }
    let mut records = Vec::new();
    let mut n = 0usize;
    let splits = [(6usize, 2usize), (2, 6), (4, 4)];
    for b in 0..k {
        let sega = CableSegment::new(format!("x{b}a"), format!("S{b}_0"), format!("S{b}_1")).unwrap();
        let segb = CableSegment::new(format!("x{b}b"), format!("S{b}_2"), format!("S{b}_3")).unwrap();
        for (j, (m1, m2)) in splits.iter().enumerate() {
            let nc = code(200 + b * 3 + j);
            for (seg, m) in [(&sega, m1), (&segb, m2)] {
                for _ in 0..*m {
                    let a = IpEndpoint::new(&ip(n), Some(nc), Some(1), None).unwrap();
                    let b2 = IpEndpoint::new(&ip(n + 1), Some(nc), Some(1), None).unwrap();
                    n += 2;
                    records.push((a, b2, vec![(seg.clone(), 0.9)]));
                }
            }
        }
    }
    DatasetBundle::from_parts(stations, records).unwrap()
}

#[test]
fn c07_clustering_recovery() {
    let _g = gate();
    for k in 2..=4usize {
        let bundle = block_world(k);
        let maps = EmbeddedMaps::build(&bundle, PredictionMode::Top);
        let full = correlation_clusters(&maps.pc_nc, 0.0, FeatureSpace::Correlation).unwrap();
        let n = 3 * k;
        assert_eq!(full.merges.len(), n - 1);

        // Blocks take n - k merges; the cut goes in the gap before the
        // first inter-block merge.
        let last_intra = full.merges[n - k - 1].distance;
        let first_inter = full.merges[n - k].distance;
        assert!(
            first_inter > last_intra + 1e-9,
            "k={k}: no gap between intra ({last_intra}) and inter ({first_inter}) merges"
        );
        let cut = (last_intra + first_inter) / 2.0;
        let result = correlation_clusters(&maps.pc_nc, cut, FeatureSpace::Correlation).unwrap();
        assert!(result.residual.is_empty(), "k={k}: unexpected residual countries");

        let ids: BTreeSet<u32> = result.assignments.values().copied().collect();
        assert_eq!(ids, (1..=k as u32).collect::<BTreeSet<u32>>(), "k={k}: cluster ids");
        for b in 0..k {
            let block_ids: BTreeSet<u32> = (0..3)
                .map(|j| result.assignments[&code(200 + b * 3 + j)])
                .collect();
            assert_eq!(block_ids.len(), 1, "k={k}: block {b} split across clusters");
        }
        for b in 1..k {
            assert_ne!(
                result.assignments[&code(200 + (b - 1) * 3)],
                result.assignments[&code(200 + b * 3)],
                "k={k}: blocks {} and {b} fused below the cut",
                b - 1
            );
        }

        // Count monotonicity over a threshold sweep.
        let top = full.merges.last().unwrap().distance * 1.05;
        let mut last_count = usize::MAX;
        for i in 0..50 {
            let cut = top * i as f64 / 49.0;
            let r = correlation_clusters(&maps.pc_nc, cut, FeatureSpace::Correlation).unwrap();
            let count = r.assignments.values().collect::<BTreeSet<_>>().len();
            assert!(
                count <= last_count,
                "k={k}: cluster count rose from {last_count} to {count} at cut {cut}"
            );
            last_count = count;
        }
        assert_eq!(last_count, 1, "k={k}: everything merges at the top cut");
    }
    pass(7, "clustering recovery", "blocks recovered for k=2,3,4; count non-increasing over 50 cuts");
}

// ---------------------------------------------------------------------------
// 8. Sensitivity mixes: all-top equals baseline, all-incorrect zeroes the
//    logical layer, and a mixed run matches the per-link expectation oracle
//    within 3 Monte-Carlo standard errors.

#[test]
fn c08_sensitivity_protocol() {
    let _g = gate();
    let spec = WorldSpec {
        seed: 77,
        n_countries: 8,
        n_stations: 24,
        n_cables: 8,
        parallel_groups: 2,
        n_links: 3000,
        max_predictions: 3,
        ..WorldSpec::default()
    };
    let world = generate_world(&spec).unwrap();
    let bundle = &world.bundle;
    let maps = EmbeddedMaps::build(bundle, PredictionMode::Top);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let impacted = random_impacted(bundle, &mut rng, 0.35);

    let all_top = SensitivityMix::new(100, 0, 0).unwrap();
    let report = sensitivity_run(bundle, &maps, &impacted, all_top, 10, 1).unwrap();
    for (c, e) in report.mean.iter() {
        assert_eq!(e.impacted, report.baseline.get(c).impacted, "{c:?}: all-top must equal baseline");
        assert_eq!(e.total, report.baseline.get(c).total);
    }

    let all_wrong = SensitivityMix::new(0, 0, 100).unwrap();
    let report = sensitivity_run(bundle, &maps, &impacted, all_wrong, 10, 1).unwrap();
    for c in [Component::IpLinks, Component::Ips, Component::AsLinks, Component::Ases] {
        assert_eq!(report.mean.get(c).impacted, 0.0, "{c:?}: all-incorrect leaves nothing");
    }
    for c in [Component::CableSegments, Component::Cables] {
        assert_eq!(
            report.mean.get(c).impacted,
            report.baseline.get(c).impacted,
            "{c:?}: physical layer is not perturbed"
        );
    }

    let mix = SensitivityMix::new(77, 19, 4).unwrap();
    let rounds = 10u32;
    let report = sensitivity_run(bundle, &maps, &impacted, mix, rounds, 424242).unwrap();
    let survival = oracle_sensitivity_survival(bundle, &impacted.segments, mix);
    let expected: f64 = survival.iter().sum();
    let se = (survival.iter().map(|p| p * (1.0 - p)).sum::<f64>() / rounds as f64).sqrt();
    let got = report.mean.get(Component::IpLinks).impacted;
    assert!(
        (got - expected).abs() <= 3.0 * se,
        "mean {got} vs expected {expected}, 3se = {}",
        3.0 * se
    );
    pass(
        8,
        "sensitivity protocol",
        &format!("77-19-4 mean {:.1} vs expectation {:.1} (3se {:.1})", got, expected, 3.0 * se),
    );
}

// ---------------------------------------------------------------------------
// 9. Weighted sampling statistics match ordered-pair enumeration.

#[test]
fn c09_sampling_statistics() {
    let _g = gate();
    let weights = [10.0, 1.0, 1.0, 1.0];
    let candidates: Vec<CandidatePoint> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| CandidatePoint {
            point: GeoPoint { lat: i as f64, lon: 0.0 },
            intensity: w,
        })
        .collect();
    let grid = IntensityGrid::new(1.0, "raw").unwrap();
    let model = EventModel {
        name: "flat".into(),
        source: IntensitySource::Grid(Arc::new(grid)),
        transform: ValueTransform::Identity,
        threshold: 0.0,
        direction: xresil_core::hazard::Direction::Above,
        probe_km: 10.0,
    };

    // Exact inclusion probabilities from enumerating ordered draw pairs.
    let total: f64 = weights.iter().sum();
    let mut want = [0.0f64; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let p = weights[i] / total * weights[j] / (total - weights[i]);
                want[i] += p;
                want[j] += p;
            }
        }
    }

    let trials = 10_000u64;
    let mut counts = [0u64; 4];
    for seed in 0..trials {
        let dist = FailureDistribution { probability: 0.5, strategy: Strategy::Weighted, seed };
        let sampled = sample_points(&candidates, &dist, &model).unwrap();
        assert_eq!(sampled.len(), 2);
        for s in &sampled {
            counts[s.point.lat as usize] += 1;
        }
    }
    for c in 0..4 {
        let emp = counts[c] as f64 / trials as f64;
        assert!(
            (emp - want[c]).abs() <= 0.02,
            "candidate {c}: empirical {emp:.4} vs exact {:.4}",
            want[c]
        );
    }
    pass(
        9,
        "sampling statistics",
        &format!(
            "inclusion {:.3}/{:.3}/{:.3}/{:.3} within 2% of enumeration",
            counts[0] as f64 / trials as f64,
            counts[1] as f64 / trials as f64,
            counts[2] as f64 / trials as f64,
            counts[3] as f64 / trials as f64
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. A million-link world runs embed + identify + analyze inside 60 s and
//     4 GB peak memory.

fn peak_rss_kb() -> u64 {
    std::fs::read_to_string("/proc/self/status")
        .unwrap()
        .lines()
        .find(|l| l.starts_with("VmHWM:"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
        .expect("VmHWM in /proc/self/status")
}

#[test]
fn c10_performance() {
    let _g = gate();
    let spec = WorldSpec {
        seed: 5,
        n_countries: 40,
        n_stations: 400,
        n_cables: 200,
        segments_per_cable_max: 3,
        parallel_groups: 10,
        parallel_group_size: 4,
        n_links: 1_000_000,
        max_predictions: 3,
        n_asns: 200,
        grid: Some(GridSpec {
            background_cells: 500,
            hot_spots: 40,
            ..GridSpec::default()
        }),
        ..WorldSpec::default()
    };
    let world = generate_world(&spec).unwrap();
    let bundle = &world.bundle;
    let model = world.model.as_ref().unwrap();
    assert_eq!(bundle.records.len(), 1_000_000);

    let started = Instant::now();
    let maps = EmbeddedMaps::build(bundle, PredictionMode::Top);
    let dist = FailureDistribution { probability: 0.3, strategy: Strategy::TopN, seed: 9 };
    let impacted =
        identify_event(bundle, model, &Region::Global, &dist, &PointInCountry::default()).unwrap();
    let impact = cross_layer_impact(bundle, &maps, &impacted);
    let risk_c = risk_profile_country(&maps, &impacted);
    let risk_a = risk_profile_asn(&maps, &impacted);
    let inter = intra_inter_impact(bundle, &maps, &impacted);
    let conn = connectivity_stats(bundle, &maps);
    let shares = intra_fraction_per_p_country(bundle, &maps);
    let elapsed = started.elapsed();

    assert_eq!(impact.get(Component::IpLinks).total, 1_000_000);
    assert_eq!(impact.get(Component::Ips).total, 2_000_000);
    assert!(!impacted.segments.is_empty(), "hot spots guarantee impact");
    assert!(impact.get(Component::IpLinks).impacted > 0.0);
    assert!(!risk_c.entries.is_empty() && !risk_a.entries.is_empty());
    assert!(!inter.entries.is_empty() && !conn.per_country.is_empty() && !shares.is_empty());

    let peak_gb = peak_rss_kb() as f64 / (1024.0 * 1024.0);
    assert!(elapsed.as_secs_f64() < 60.0, "pipeline took {elapsed:?}, budget 60 s");
    assert!(peak_gb < 4.0, "peak rss {peak_gb:.2} GB, budget 4 GB");
    pass(10, "performance", &format!("10^6 links in {:.1?}, peak {peak_gb:.2} GB", elapsed));
}
