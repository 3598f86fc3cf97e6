//! Run configuration: one JSON file naming the data files, the hazard
//! models, and the scenario parameters. Paths are resolved relative to the
//! config file so a config directory can move as a unit. `resolve` turns
//! the raw config into loaded data and validated library types; everything
//! it rejects is a configuration mistake, not a data or internal error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::analysis::cluster::FeatureSpace;
use crate::analysis::sensitivity::SensitivityMix;
use crate::embed::PredictionMode;
use crate::hazard::{
    standard_defaults, Direction, EventModel, IntensitySource, MmiConversion, ValueTransform,
};
use crate::identify::{CountryPolygons, FailureDistribution, ManualFailure, PointInCountry, Strategy};
use crate::ingest::{load_intensity_grid, DatasetBundle, IngestError, LoadSummary};
use crate::model::{CableSegment, CountryCode, Region};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("model {model:?}: no defaults for kind {kind:?}")]
    UnknownModelKind { model: String, kind: String },
    #[error("model {model:?}: grid {grid:?} is not declared under data.grids")]
    UnknownGrid { model: String, grid: String },
    #[error("model {model:?}: kind {kind:?} needs a grid")]
    MissingGrid { model: String, kind: String },
    #[error("scenario references unknown model {0:?}")]
    UnknownModelName(String),
    #[error("{0}")]
    BadValue(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFileConfig {
    pub path: PathBuf,
    pub resolution_deg: f64,
    #[serde(default)]
    pub units: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub stations: PathBuf,
    pub crosslayer: PathBuf,
    #[serde(default)]
    pub grids: BTreeMap<String, GridFileConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Picks the default threshold, direction, probe radius, and transform:
    /// "earthquake", "hurricane", "sea_rise", or "solar". Every default can
    /// be overridden field by field.
    pub kind: String,
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub direction: Option<String>,
    #[serde(default)]
    pub probe_km: Option<f64>,
    #[serde(default)]
    pub transform: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Global,
    Countries { countries: Vec<String> },
    Bbox { lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub probability: f64,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualConfig {
    #[serde(default)]
    pub segments: Vec<(String, String, String)>,
    #[serde(default)]
    pub stations: Vec<String>,
    #[serde(default)]
    pub cables: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub distribution: Option<DistributionConfig>,
    #[serde(default)]
    pub manual: Option<ManualConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub probabilities: Vec<f64>,
    #[serde(default)]
    pub strategies: Option<Vec<String>>,
    #[serde(default)]
    pub runs: Option<u32>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub cut: f64,
    #[serde(default)]
    pub space: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub mixes: Vec<(u32, u32, u32)>,
    #[serde(default)]
    pub rounds: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmiConfig {
    pub low_intercept: Option<f64>,
    pub low_slope: Option<f64>,
    pub breakpoint_log10_pga: Option<f64>,
    pub high_intercept: Option<f64>,
    pub high_slope: Option<f64>,
    pub min_mmi: Option<f64>,
    pub max_mmi: Option<f64>,
}

impl MmiConfig {
    fn to_conversion(&self) -> MmiConversion {
        let d = MmiConversion::default();
        MmiConversion {
            low_intercept: self.low_intercept.unwrap_or(d.low_intercept),
            low_slope: self.low_slope.unwrap_or(d.low_slope),
            breakpoint_log10_pga: self.breakpoint_log10_pga.unwrap_or(d.breakpoint_log10_pga),
            high_intercept: self.high_intercept.unwrap_or(d.high_intercept),
            high_slope: self.high_slope.unwrap_or(d.high_slope),
            min_mmi: self.min_mmi.unwrap_or(d.min_mmi),
            max_mmi: self.max_mmi.unwrap_or(d.max_mmi),
        }
    }
}

/// Country outlines keyed by country code; each outline is a list of rings
/// of (lat, lon) vertices.
pub type CountryOutlines = BTreeMap<String, Vec<Vec<(f64, f64)>>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    /// Further scenarios for multi-event runs; unioned with `scenario`.
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub cluster: Option<ClusterConfig>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityConfig>,
    /// Enables polygon point-in-country resolution instead of
    /// nearest-station.
    #[serde(default)]
    pub polygons: Option<CountryOutlines>,
    #[serde(default)]
    pub mmi: Option<MmiConfig>,
}

#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    /// Key into the resolved model map.
    pub model: Option<String>,
    pub region: Region,
    pub distribution: FailureDistribution,
    pub manual: Option<ManualFailure>,
}

#[derive(Debug, Clone)]
pub struct ResolvedSweep {
    pub model: String,
    pub region: Region,
    pub probabilities: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub runs: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct ResolvedCluster {
    pub cut: f64,
    pub space: FeatureSpace,
}

#[derive(Debug, Clone)]
pub struct ResolvedSensitivity {
    pub mixes: Vec<SensitivityMix>,
    pub rounds: u32,
}

/// Everything a run needs, loaded and validated.
pub struct ResolvedRun {
    pub bundle: DatasetBundle,
    pub load_summary: LoadSummary,
    pub mode: PredictionMode,
    pub seed: u64,
    pub models: BTreeMap<String, EventModel>,
    pub scenarios: Vec<ResolvedScenario>,
    pub resolver: PointInCountry,
    pub sweep: Option<ResolvedSweep>,
    pub cluster: Option<ResolvedCluster>,
    pub sensitivity: Option<ResolvedSensitivity>,
    /// Input files actually read, for manifest digests.
    pub input_paths: Vec<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        serde_json::from_str(&text)
            .map_err(|e| ConfigError::Json { path: path.to_path_buf(), source: e })
    }

    /// Loads data and validates every cross-reference. `base` is the
    /// directory relative paths resolve against, normally the config file's
    /// parent.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun, ConfigError> {
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let stations_path = join(&self.data.stations);
        let crosslayer_path = join(&self.data.crosslayer);
        let (mut bundle, load_summary) = DatasetBundle::load(&stations_path, &crosslayer_path)?;
        let mut input_paths = vec![stations_path, crosslayer_path];
        for (name, g) in &self.data.grids {
            let path = join(&g.path);
            let units = g.units.clone().unwrap_or_else(|| name.clone());
            let grid = load_intensity_grid(&path, g.resolution_deg, &units)?;
            bundle.add_grid(name, grid);
            input_paths.push(path);
        }

        let mode: PredictionMode = match &self.mode {
            None => PredictionMode::Top,
            Some(s) => s.parse().map_err(bad)?,
        };
        let seed = self.seed.unwrap_or(0);

        let mmi = self.mmi.clone().unwrap_or_default().to_conversion();
        let mut models: BTreeMap<String, EventModel> = BTreeMap::new();
        for mc in &self.models {
            if models.contains_key(&mc.name) {
                return Err(bad(format!("duplicate model name {:?}", mc.name)));
            }
            models.insert(mc.name.clone(), resolve_model(mc, &bundle, mmi)?);
        }

        let mut scenarios = Vec::new();
        for sc in self.scenario.iter().chain(&self.scenarios) {
            scenarios.push(resolve_scenario(sc, &models, seed)?);
        }

        let resolver = match &self.polygons {
            None => PointInCountry::NearestStation,
            Some(polys) => {
                let mut rings: BTreeMap<CountryCode, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
                for (code, r) in polys {
                    let code = CountryCode::new(code)
                        .map_err(|e| bad(format!("polygons: {e}")))?;
                    rings.insert(code, r.clone());
                }
                PointInCountry::Polygons(CountryPolygons { rings })
            }
        };

        let sweep = match &self.sweep {
            None => None,
            Some(sw) => Some(resolve_sweep(sw, &scenarios, &models)?),
        };

        let cluster = match &self.cluster {
            None => None,
            Some(c) => {
                if !c.cut.is_finite() || c.cut < 0.0 {
                    return Err(bad(format!("cluster.cut must be non-negative, got {}", c.cut)));
                }
                let space = match &c.space {
                    None => FeatureSpace::Correlation,
                    Some(s) => s.parse().map_err(bad)?,
                };
                Some(ResolvedCluster { cut: c.cut, space })
            }
        };

        let sensitivity = match &self.sensitivity {
            None => None,
            Some(sc) => {
                if sc.mixes.is_empty() {
                    return Err(bad("sensitivity.mixes must not be empty"));
                }
                let mixes = sc
                    .mixes
                    .iter()
                    .map(|&(t, s, i)| SensitivityMix::new(t, s, i).map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                let rounds = sc.rounds.unwrap_or(100);
                if rounds == 0 {
                    return Err(bad("sensitivity.rounds must be at least 1"));
                }
                Some(ResolvedSensitivity { mixes, rounds })
            }
        };

        Ok(ResolvedRun {
            bundle,
            load_summary,
            mode,
            seed,
            models,
            scenarios,
            resolver,
            sweep,
            cluster,
            sensitivity,
            input_paths,
        })
    }
}

fn resolve_model(
    mc: &ModelConfig,
    bundle: &DatasetBundle,
    mmi: MmiConversion,
) -> Result<EventModel, ConfigError> {
    let defaults = standard_defaults(&mc.kind).ok_or_else(|| ConfigError::UnknownModelKind {
        model: mc.name.clone(),
        kind: mc.kind.clone(),
    })?;

    let source = if defaults.latitude_rule {
        if mc.grid.is_some() {
            return Err(bad(format!(
                "model {:?}: kind {:?} uses the latitude rule and takes no grid",
                mc.name, mc.kind
            )));
        }
        IntensitySource::LatitudeRule
    } else {
        let grid_name = mc.grid.as_ref().ok_or_else(|| ConfigError::MissingGrid {
            model: mc.name.clone(),
            kind: mc.kind.clone(),
        })?;
        let grid = bundle.grids.get(grid_name).ok_or_else(|| ConfigError::UnknownGrid {
            model: mc.name.clone(),
            grid: grid_name.clone(),
        })?;
        IntensitySource::Grid(grid.clone())
    };

    let transform = match mc.transform.as_deref() {
        None => {
            if defaults.pga_to_mmi {
                ValueTransform::PgaToMmi(mmi)
            } else {
                ValueTransform::Identity
            }
        }
        Some("identity") => ValueTransform::Identity,
        Some("pga_to_mmi") => ValueTransform::PgaToMmi(mmi),
        Some(other) => {
            return Err(bad(format!(
                "model {:?}: unknown transform {other:?}: expected identity or pga_to_mmi",
                mc.name
            )))
        }
    };

    let direction = match &mc.direction {
        None => defaults.direction,
        Some(s) => s.parse::<Direction>().map_err(|e| bad(e.to_string()))?,
    };

    let model = EventModel {
        name: mc.name.clone(),
        source,
        transform,
        threshold: mc.threshold.unwrap_or(defaults.threshold),
        direction,
        probe_km: mc.probe_km.unwrap_or(defaults.probe_km),
    };
    model.validate().map_err(|e| bad(format!("model {:?}: {e}", mc.name)))?;
    Ok(model)
}

fn resolve_scenario(
    sc: &ScenarioConfig,
    models: &BTreeMap<String, EventModel>,
    default_seed: u64,
) -> Result<ResolvedScenario, ConfigError> {
    if sc.model.is_none() && sc.manual.is_none() {
        return Err(bad("scenario needs a model, a manual failure, or both"));
    }
    if let Some(name) = &sc.model {
        if !models.contains_key(name) {
            return Err(ConfigError::UnknownModelName(name.clone()));
        }
    }

    let region = match &sc.region {
        None | Some(RegionConfig::Global) => Region::Global,
        Some(RegionConfig::Countries { countries }) => {
            let codes = countries
                .iter()
                .map(|c| CountryCode::new(c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("scenario region: {e}")))?;
            if codes.is_empty() {
                return Err(bad("scenario region: countries list must not be empty"));
            }
            Region::countries(codes)
        }
        Some(RegionConfig::Bbox { lat_min, lat_max, lon_min, lon_max }) => {
            Region::bbox(*lat_min, *lat_max, *lon_min, *lon_max)
                .map_err(|e| bad(format!("scenario region: {e}")))?
        }
    };

    let distribution = match &sc.distribution {
        None => FailureDistribution {
            probability: 1.0,
            strategy: Strategy::TopN,
            seed: default_seed,
        },
        Some(d) => {
            if !d.probability.is_finite() || d.probability <= 0.0 || d.probability > 1.0 {
                return Err(bad(format!(
                    "scenario distribution: probability must be in (0, 1], got {}",
                    d.probability
                )));
            }
            let strategy = match &d.strategy {
                None => Strategy::TopN,
                Some(s) => s.parse().map_err(bad)?,
            };
            FailureDistribution {
                probability: d.probability,
                strategy,
                seed: d.seed.unwrap_or(default_seed),
            }
        }
    };

    let manual = match &sc.manual {
        None => None,
        Some(m) => {
            let segments = m
                .segments
                .iter()
                .map(|(c, a, b)| CableSegment::new(c.clone(), a.clone(), b.clone()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("manual failure: {e}")))?;
            Some(ManualFailure {
                segments,
                stations: m.stations.clone(),
                cables: m.cables.clone(),
            })
        }
    };

    Ok(ResolvedScenario { model: sc.model.clone(), region, distribution, manual })
}

fn resolve_sweep(
    sw: &SweepConfig,
    scenarios: &[ResolvedScenario],
    models: &BTreeMap<String, EventModel>,
) -> Result<ResolvedSweep, ConfigError> {
    if sw.probabilities.is_empty() {
        return Err(bad("sweep.probabilities must not be empty"));
    }
    for &p in &sw.probabilities {
        if !p.is_finite() || p <= 0.0 || p > 1.0 {
            return Err(bad(format!("sweep probability must be in (0, 1], got {p}")));
        }
    }
    let model = match (&sw.model, scenarios.iter().find_map(|s| s.model.clone())) {
        (Some(m), _) => m.clone(),
        (None, Some(m)) => m,
        (None, None) => return Err(bad("sweep needs a model, from sweep.model or a scenario")),
    };
    if !models.contains_key(&model) {
        return Err(ConfigError::UnknownModelName(model));
    }
    let region = scenarios
        .iter()
        .find(|s| s.model.as_deref() == Some(model.as_str()))
        .map(|s| s.region.clone())
        .unwrap_or(Region::Global);
    let strategies = match &sw.strategies {
        None => vec![Strategy::TopN, Strategy::Random, Strategy::Weighted],
        Some(ss) => {
            if ss.is_empty() {
                return Err(bad("sweep.strategies must not be empty"));
            }
            ss.iter()
                .map(|s| s.parse().map_err(bad))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let runs = sw.runs.unwrap_or(10);
    if runs == 0 {
        return Err(bad("sweep.runs must be at least 1"));
    }
    Ok(ResolvedSweep { model, region, probabilities: sw.probabilities.clone(), strategies, runs })
}
