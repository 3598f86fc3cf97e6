//! Failure-probability sweep: impact fractions as the failed share of
//! candidate points grows, per sampling strategy, averaged over runs for the
//! randomized strategies.

use rayon::prelude::*;

use crate::analysis::{cross_layer_impact, Component};
use crate::embed::EmbeddedMaps;
use crate::hazard::EventModel;
use crate::identify::{
    at_risk_stations, candidate_points, impacted_segments, sample_points, CandidatePoint,
    FailureDistribution, IdentifyError, ImpactedSet, PointInCountry, Strategy,
};
use crate::ingest::DatasetBundle;
use crate::model::Region;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub strategy: Strategy,
    pub component: Component,
    pub mean_fraction: f64,
}

/// Runs the sweep over every (probability, strategy) cell. TOP_N is
/// deterministic and runs once per cell; RANDOM and WEIGHTED average `runs`
/// runs seeded `base_seed + run_index`. Cells are independent, so they are
/// evaluated in parallel and reassembled in index order; results do not
/// depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn probability_sweep(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    model: &EventModel,
    region: &Region,
    resolver: &PointInCountry,
    ps: &[f64],
    strategies: &[Strategy],
    runs: u32,
    base_seed: u64,
) -> Result<Vec<SweepRow>, IdentifyError> {
    let candidates = candidate_points(model, region, bundle, resolver);

    let cells: Vec<(f64, Strategy)> = ps
        .iter()
        .flat_map(|&p| strategies.iter().map(move |&s| (p, s)))
        .collect();

    let results: Vec<Result<Vec<SweepRow>, IdentifyError>> = cells
        .par_iter()
        .map(|&(p, strategy)| sweep_cell(bundle, maps, model, &candidates, p, strategy, runs, base_seed))
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * Component::ALL.len());
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.p.total_cmp(&b.p)
            .then_with(|| a.strategy.as_str().cmp(b.strategy.as_str()))
            .then_with(|| a.component.cmp(&b.component))
    });
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn sweep_cell(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    model: &EventModel,
    candidates: &[CandidatePoint],
    p: f64,
    strategy: Strategy,
    runs: u32,
    base_seed: u64,
) -> Result<Vec<SweepRow>, IdentifyError> {
    let n_runs = match strategy {
        Strategy::TopN => 1,
        _ => runs.max(1),
    };
    let mut sums = [0.0; 6];
    for run in 0..n_runs {
        let dist = FailureDistribution {
            probability: p,
            strategy,
            seed: base_seed + run as u64,
        };
        let sampled = sample_points(candidates, &dist, model)?;
        let stations = at_risk_stations(&sampled, &bundle.stations, model.probe_km);
        let segments = impacted_segments(&stations, &bundle.segments);
        let set = ImpactedSet { segments, stations, sampled_points: sampled };
        let report = cross_layer_impact(bundle, maps, &set);
        for (i, f) in report.fractions().into_iter().enumerate() {
            sums[i] += f;
        }
    }
    Ok(Component::ALL
        .iter()
        .enumerate()
        .map(|(i, &component)| SweepRow {
            p,
            strategy,
            component,
            mean_fraction: sums[i] / n_runs as f64,
        })
        .collect())
}
