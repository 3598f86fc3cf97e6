//! xresil: cross-layer resilience analysis of the submarine cable network.
//!
//! Every subcommand reads one JSON config, writes deterministic CSVs plus a
//! manifest.json into --out, and exits 0 on success, 1 on a configuration
//! error, 2 on a data error, and 3 on anything internal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use xresil_core::analysis::cluster::{correlation_clusters, ClusterError};
use xresil_core::analysis::sensitivity::{sensitivity_run, SensitivityError, SensitivityReport};
use xresil_core::analysis::stats::{connectivity_stats, intra_fraction_per_p_country};
use xresil_core::analysis::sweep::probability_sweep;
use xresil_core::analysis::{
    cross_layer_impact, intra_inter_impact, multi_event_profile, risk_profile_asn,
    risk_profile_country,
};
use xresil_core::config::{ConfigError, ResolvedRun, RunConfig};
use xresil_core::embed::{EmbeddedMaps, PredictionMode};
use xresil_core::identify::{self, IdentifyError, ImpactedSet, Scenario};
use xresil_core::ingest::{write_cross_layer, write_grid, write_stations, IngestError};
use xresil_core::report::{
    read_impacted_segments, write_clusters, write_connectivity, write_cs_map_dump,
    write_dendrogram, write_impact_report, write_impacted_segments, write_interconnect,
    write_intra_share, write_pc_nc_dump, write_risk_profile, write_sensitivity, write_sweep,
    ReportError, RunManifest,
};
use xresil_core::synth::{generate_world, SynthError, WorldSpec};

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: EXIT_DATA, message: message.into() }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INTERNAL, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match &e {
            ConfigError::Ingest(_) => Failure::data(e.to_string()),
            _ => Failure::config(e.to_string()),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<IdentifyError> for Failure {
    fn from(e: IdentifyError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<ClusterError> for Failure {
    fn from(e: ClusterError) -> Self {
        match &e {
            ClusterError::InsufficientData(_) => Failure::data(e.to_string()),
            ClusterError::BadThreshold(_) => Failure::config(e.to_string()),
        }
    }
}

impl From<SensitivityError> for Failure {
    fn from(e: SensitivityError) -> Self {
        match &e {
            SensitivityError::WrongMode => Failure::internal(e.to_string()),
            _ => Failure::config(e.to_string()),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match &e {
            ReportError::BadHeader { .. }
            | ReportError::Parse { .. }
            | ReportError::UnknownSegment { .. } => Failure::data(e.to_string()),
            _ => Failure::internal(e.to_string()),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match &e {
            SynthError::BadSpec(_) | SynthError::UnknownModel(_) => {
                Failure::config(e.to_string())
            }
            _ => Failure::internal(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "xresil",
    version,
    about = "Cross-layer resilience analysis: cables, IP links, disasters"
)]
struct Cli {
    /// Log verbosity: error, warn, info, debug, or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config prediction mode: top or weighted.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Impacted segment list from a previous identify run. Without it the
    /// config scenario is identified first.
    #[arg(long)]
    impacted: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// World spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: embed, identify, and every configured analysis.
    Run(CommonArgs),
    /// Build the cross-layer maps and dump them with connectivity stats.
    Embed(CommonArgs),
    /// Identify impacted segments for the configured scenario.
    Identify(CommonArgs),
    /// Impact, risk, and interconnection reports for an impacted set.
    Analyze(AnalyzeArgs),
    /// Mean impact over a grid of failure probabilities and strategies.
    Sweep(CommonArgs),
    /// Cluster countries by shared physical dependencies.
    Cluster(CommonArgs),
    /// Robustness of impact numbers to link mapping error.
    Sensitivity(CommonArgs),
    /// Generate a synthetic world and a ready-to-run config for it.
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();

    if let Err(f) = init_thread_pool() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }

    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Identify(args) => cmd_identify(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// XRESIL_THREADS pins the rayon pool size. Results are identical at any
/// thread count; the knob only trades wall time for cores.
fn init_thread_pool() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("XRESIL_THREADS") else { return Ok(()) };
    let n: usize = raw
        .parse()
        .map_err(|_| Failure::config(format!("XRESIL_THREADS must be a thread count, got {raw:?}")))?;
    if n == 0 {
        return Err(Failure::config("XRESIL_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::internal(format!("thread pool: {e}")))
}

fn load_run(args: &CommonArgs) -> Result<(ResolvedRun, Vec<PathBuf>), Failure> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    if let Some(mode) = &args.mode {
        mode.parse::<PredictionMode>().map_err(Failure::config)?;
        cfg.mode = Some(mode.clone());
    }
    let base = args.config.parent().unwrap_or_else(|| Path::new("."));
    let run = cfg.resolve(base)?;
    info!(
        "loaded {} stations, {} segments, {} links ({} dropped on unknown stations)",
        run.bundle.stations.len(),
        run.bundle.segments.len(),
        run.bundle.records.len(),
        run.load_summary.dropped_unknown_station,
    );
    let mut inputs = vec![args.config.clone()];
    inputs.extend(run.input_paths.iter().cloned());
    Ok((run, inputs))
}

fn ensure_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))
}

fn new_manifest(command: &str, run: &ResolvedRun, inputs: &[PathBuf]) -> Result<RunManifest, Failure> {
    let mut m = RunManifest::new(command, run.mode.as_str(), run.seed);
    for path in inputs {
        m.record_input(path)?;
    }
    if run.load_summary.dropped_unknown_station > 0 {
        m.warn(format!(
            "{} links dropped: prediction references an unknown station",
            run.load_summary.dropped_unknown_station
        ));
    }
    if run.load_summary.deduped_predictions > 0 {
        m.warn(format!(
            "{} duplicate predictions merged keeping the best score",
            run.load_summary.deduped_predictions
        ));
    }
    Ok(m)
}

fn identify_union(run: &ResolvedRun) -> Result<ImpactedSet, Failure> {
    if run.scenarios.is_empty() {
        return Err(Failure::config("config has no scenario"));
    }
    let mut sets = Vec::new();
    for sc in &run.scenarios {
        let scenario = Scenario {
            model: sc.model.as_ref().map(|m| &run.models[m]),
            region: sc.region.clone(),
            distribution: sc.distribution,
            manual: sc.manual.as_ref(),
        };
        sets.push(identify::identify(&run.bundle, &scenario, &run.resolver)?);
    }
    let union = ImpactedSet::union(sets);
    info!(
        "identified {} impacted segments across {} stations",
        union.segments.len(),
        union.stations.len()
    );
    Ok(union)
}

/// Sensitivity always perturbs top predictions, so it runs on top-mode maps
/// regardless of the configured mode.
fn sensitivity_maps<'a>(run: &'a ResolvedRun, maps: &'a EmbeddedMaps) -> std::borrow::Cow<'a, EmbeddedMaps> {
    if maps.mode() == PredictionMode::Top {
        std::borrow::Cow::Borrowed(maps)
    } else {
        std::borrow::Cow::Owned(EmbeddedMaps::build(&run.bundle, PredictionMode::Top))
    }
}

fn run_sensitivity(
    run: &ResolvedRun,
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
) -> Result<Vec<SensitivityReport>, Failure> {
    let Some(cfg) = &run.sensitivity else {
        return Err(Failure::config("config has no sensitivity section"));
    };
    let top_maps = sensitivity_maps(run, maps);
    let mut reports = Vec::new();
    for &mix in &cfg.mixes {
        reports.push(sensitivity_run(
            &run.bundle,
            top_maps.as_ref(),
            impacted,
            mix,
            cfg.rounds,
            run.seed,
        )?);
    }
    Ok(reports)
}

fn cmd_run(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let mut manifest = new_manifest("run", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, run.mode);
    manifest.timing("embed", t.elapsed().as_millis());

    let t = Instant::now();
    let impacted = identify_union(&run)?;
    manifest.timing("identify", t.elapsed().as_millis());

    let t = Instant::now();
    let profile = multi_event_profile(&run.bundle, &maps, vec![impacted]);
    let connectivity = connectivity_stats(&run.bundle, &maps);
    let intra_share = intra_fraction_per_p_country(&run.bundle, &maps);
    manifest.timing("analyze", t.elapsed().as_millis());

    let out = &args.out;
    write_impacted_segments(&out.join("impacted_segments.csv"), &profile.union, &run.bundle)?;
    write_impact_report(&out.join("impact_report.csv"), &profile.impact)?;
    write_risk_profile(&out.join("risk_country.csv"), &profile.risk_country)?;
    write_risk_profile(&out.join("risk_asn.csv"), &profile.risk_asn)?;
    write_interconnect(&out.join("interconnect.csv"), &profile.interconnect)?;
    write_connectivity(&out.join("connectivity_country.csv"), &connectivity.per_country)?;
    write_connectivity(&out.join("connectivity_asn.csv"), &connectivity.per_asn)?;
    write_intra_share(&out.join("intra_fraction_p_country.csv"), &intra_share)?;
    let mut outputs = vec![
        "impacted_segments.csv",
        "impact_report.csv",
        "risk_country.csv",
        "risk_asn.csv",
        "interconnect.csv",
        "connectivity_country.csv",
        "connectivity_asn.csv",
        "intra_fraction_p_country.csv",
    ];

    if let Some(sw) = &run.sweep {
        let t = Instant::now();
        let rows = probability_sweep(
            &run.bundle,
            &maps,
            &run.models[&sw.model],
            &sw.region,
            &run.resolver,
            &sw.probabilities,
            &sw.strategies,
            sw.runs,
            run.seed,
        )?;
        write_sweep(&out.join("sweep.csv"), &rows)?;
        manifest.timing("sweep", t.elapsed().as_millis());
        outputs.push("sweep.csv");
    }

    if let Some(cl) = &run.cluster {
        let t = Instant::now();
        let result = correlation_clusters(&maps.pc_nc, cl.cut, cl.space)?;
        write_clusters(&out.join("clusters.csv"), &result)?;
        write_dendrogram(&out.join("dendrogram.csv"), &result)?;
        manifest.timing("cluster", t.elapsed().as_millis());
        outputs.push("clusters.csv");
        outputs.push("dendrogram.csv");
    }

    if run.sensitivity.is_some() {
        let t = Instant::now();
        if run.mode != PredictionMode::Top {
            manifest.warn("sensitivity ran on top-mode maps");
        }
        let reports = run_sensitivity(&run, &maps, &profile.union)?;
        write_sensitivity(&out.join("sensitivity.csv"), &reports)?;
        manifest.timing("sensitivity", t.elapsed().as_millis());
        outputs.push("sensitivity.csv");
    }

    for name in outputs {
        manifest.record_output(&out.join(name))?;
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_embed(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let mut manifest = new_manifest("embed", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, run.mode);
    let connectivity = connectivity_stats(&run.bundle, &maps);
    let intra_share = intra_fraction_per_p_country(&run.bundle, &maps);
    manifest.timing("embed", t.elapsed().as_millis());

    let out = &args.out;
    write_cs_map_dump(&out.join("map_cs_nc.csv"), &maps.cs_nc, &run.bundle)?;
    write_cs_map_dump(&out.join("map_cs_as.csv"), &maps.cs_as, &run.bundle)?;
    write_pc_nc_dump(&out.join("map_pc_nc.csv"), &maps.pc_nc)?;
    write_connectivity(&out.join("connectivity_country.csv"), &connectivity.per_country)?;
    write_connectivity(&out.join("connectivity_asn.csv"), &connectivity.per_asn)?;
    write_intra_share(&out.join("intra_fraction_p_country.csv"), &intra_share)?;
    for name in [
        "map_cs_nc.csv",
        "map_cs_as.csv",
        "map_pc_nc.csv",
        "connectivity_country.csv",
        "connectivity_asn.csv",
        "intra_fraction_p_country.csv",
    ] {
        manifest.record_output(&out.join(name))?;
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_identify(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let mut manifest = new_manifest("identify", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let impacted = identify_union(&run)?;
    manifest.timing("identify", t.elapsed().as_millis());

    write_impacted_segments(&args.out.join("impacted_segments.csv"), &impacted, &run.bundle)?;
    manifest.record_output(&args.out.join("impacted_segments.csv"))?;
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, mut inputs) = load_run(&args.common)?;
    if let Some(p) = &args.impacted {
        inputs.push(p.clone());
    }
    ensure_out(&args.common.out)?;
    let mut manifest = new_manifest("analyze", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, run.mode);
    let impacted = match &args.impacted {
        Some(path) => read_impacted_segments(path, &run.bundle)?,
        None => identify_union(&run)?,
    };
    let impact = cross_layer_impact(&run.bundle, &maps, &impacted);
    let risk_country = risk_profile_country(&maps, &impacted);
    let risk_asn = risk_profile_asn(&maps, &impacted);
    let interconnect = intra_inter_impact(&run.bundle, &maps, &impacted);
    manifest.timing("analyze", t.elapsed().as_millis());

    let out = &args.common.out;
    write_impact_report(&out.join("impact_report.csv"), &impact)?;
    write_risk_profile(&out.join("risk_country.csv"), &risk_country)?;
    write_risk_profile(&out.join("risk_asn.csv"), &risk_asn)?;
    write_interconnect(&out.join("interconnect.csv"), &interconnect)?;
    for name in ["impact_report.csv", "risk_country.csv", "risk_asn.csv", "interconnect.csv"] {
        manifest.record_output(&out.join(name))?;
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let Some(sw) = run.sweep.clone() else {
        return Err(Failure::config("config has no sweep section"));
    };
    let mut manifest = new_manifest("sweep", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, run.mode);
    let rows = probability_sweep(
        &run.bundle,
        &maps,
        &run.models[&sw.model],
        &sw.region,
        &run.resolver,
        &sw.probabilities,
        &sw.strategies,
        sw.runs,
        run.seed,
    )?;
    manifest.timing("sweep", t.elapsed().as_millis());

    write_sweep(&args.out.join("sweep.csv"), &rows)?;
    manifest.record_output(&args.out.join("sweep.csv"))?;
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_cluster(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let Some(cl) = run.cluster else {
        return Err(Failure::config("config has no cluster section"));
    };
    let mut manifest = new_manifest("cluster", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, run.mode);
    let result = correlation_clusters(&maps.pc_nc, cl.cut, cl.space)?;
    manifest.timing("cluster", t.elapsed().as_millis());
    info!(
        "{} clusters, {} countries in the residual cluster",
        result.assignments.values().filter(|&&c| c != 0).collect::<std::collections::BTreeSet<_>>().len(),
        result.residual.len()
    );

    write_clusters(&args.out.join("clusters.csv"), &result)?;
    write_dendrogram(&args.out.join("dendrogram.csv"), &result)?;
    manifest.record_output(&args.out.join("clusters.csv"))?;
    manifest.record_output(&args.out.join("dendrogram.csv"))?;
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_sensitivity(args: &CommonArgs) -> Result<(), Failure> {
    let t_load = Instant::now();
    let (run, inputs) = load_run(args)?;
    ensure_out(&args.out)?;
    let mut manifest = new_manifest("sensitivity", &run, &inputs)?;
    manifest.timing("load", t_load.elapsed().as_millis());

    let t = Instant::now();
    let maps = EmbeddedMaps::build(&run.bundle, PredictionMode::Top);
    let impacted = identify_union(&run)?;
    let reports = run_sensitivity(&run, &maps, &impacted)?;
    manifest.timing("sensitivity", t.elapsed().as_millis());

    write_sensitivity(&args.out.join("sensitivity.csv"), &reports)?;
    manifest.record_output(&args.out.join("sensitivity.csv"))?;
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| Failure::config(format!("{}: {e}", args.spec.display())))?;
    let mut spec: WorldSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    ensure_out(&args.out)?;

    let t = Instant::now();
    let world = generate_world(&spec)?;
    let mut manifest = RunManifest::new("synth", "top", spec.seed);
    manifest.record_input(&args.spec)?;
    manifest.timing("synth", t.elapsed().as_millis());

    let out = &args.out;
    write_stations(&out.join("stations.csv"), &world.bundle.stations)?;
    write_cross_layer(&out.join("crosslayer.jsonl"), &world.bundle.segments, &world.bundle.records)?;
    let mut outputs = vec!["stations.csv".to_string(), "crosslayer.jsonl".to_string()];

    let mut grids = BTreeMap::new();
    for (name, grid) in &world.bundle.grids {
        let file = format!("grid_{name}.csv");
        write_grid(&out.join(&file), grid)?;
        grids.insert(
            name.clone(),
            serde_json::json!({"path": file, "resolution_deg": grid.resolution_deg()}),
        );
        outputs.push(file);
    }

    // A config wired to the emitted files, runnable as is.
    let mut config = serde_json::json!({
        "data": {
            "stations": "stations.csv",
            "crosslayer": "crosslayer.jsonl",
            "grids": grids,
        },
        "mode": "top",
        "seed": spec.seed,
    });
    if let Some(model) = &world.model {
        config["models"] = serde_json::json!([{
            "name": model.name,
            "kind": model.name,
            "grid": model.name,
            "threshold": model.threshold,
            "probe_km": model.probe_km,
        }]);
        config["scenario"] = serde_json::json!({
            "model": model.name,
            "distribution": {"probability": 0.3, "strategy": "top_n", "seed": spec.seed},
        });
    }
    let config_path = out.join("config.json");
    let pretty = serde_json::to_string_pretty(&config)
        .map_err(|e| Failure::internal(format!("config serialization: {e}")))?;
    std::fs::write(&config_path, pretty + "\n")
        .map_err(|e| Failure::internal(format!("{}: {e}", config_path.display())))?;
    outputs.push("config.json".to_string());

    for name in &outputs {
        manifest.record_output(&out.join(name))?;
    }
    manifest.write(&out.join("manifest.json"))?;
    info!(
        "world: {} stations, {} segments, {} links",
        world.bundle.stations.len(),
        world.bundle.segments.len(),
        world.bundle.records.len()
    );
    Ok(())
}
