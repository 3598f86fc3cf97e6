//! Robustness of the logical-layer impact numbers to mapping error. Each
//! round re-draws the true segment of every impacted link from a
//! (top, secondary, incorrect) percentage mix and recomputes the IP and AS
//! component counts against the same impacted segments. The physical
//! components do not depend on the link mapping and keep their baseline
//! values.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{
    cross_layer_impact, impacted_links, Component, ComponentImpact, ImpactReport,
};
use crate::embed::{EmbeddedMaps, PredictionMode};
use crate::identify::ImpactedSet;
use crate::ingest::DatasetBundle;
use crate::model::AsLink;

#[derive(Debug, Error, PartialEq)]
pub enum SensitivityError {
    #[error("mix percentages must sum to 100, got {0}")]
    BadMix(u32),
    #[error("sensitivity needs top-mode maps: the perturbation model reassigns one true segment per link")]
    WrongMode,
    #[error("rounds must be at least 1")]
    NoRounds,
}

/// Percentage split of link prediction outcomes: `top` of links map to
/// their first prediction, `secondary` to a uniformly chosen lower-ranked
/// one, `incorrect` to none of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensitivityMix {
    pub top: u32,
    pub secondary: u32,
    pub incorrect: u32,
}

impl SensitivityMix {
    pub fn new(top: u32, secondary: u32, incorrect: u32) -> Result<Self, SensitivityError> {
        let sum = top + secondary + incorrect;
        if sum != 100 {
            return Err(SensitivityError::BadMix(sum));
        }
        Ok(SensitivityMix { top, secondary, incorrect })
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.top, self.secondary, self.incorrect)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub mix: SensitivityMix,
    pub rounds: u32,
    pub baseline: ImpactReport,
    /// Mean impacted counts over all rounds; totals match the baseline, so
    /// `fraction()` gives the mean fraction directly.
    pub mean: ImpactReport,
}

/// Runs `rounds` perturbation rounds against the impacted set. Round `r`
/// draws from a fresh ChaCha8 stream seeded `base_seed + r`; links are
/// visited in id order, so results depend only on the inputs and the seed.
pub fn sensitivity_run(
    bundle: &DatasetBundle,
    maps: &EmbeddedMaps,
    impacted: &ImpactedSet,
    mix: SensitivityMix,
    rounds: u32,
    base_seed: u64,
) -> Result<SensitivityReport, SensitivityError> {
    if maps.mode() != PredictionMode::Top {
        return Err(SensitivityError::WrongMode);
    }
    if rounds == 0 {
        return Err(SensitivityError::NoRounds);
    }

    let baseline = cross_layer_impact(bundle, maps, impacted);
    let scope = impacted_links(maps, impacted);

    let mut sums = [0.0f64; 3];
    let mut sum_links = 0.0f64;
    for round in 0..rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(round as u64));
        let mut ips: HashSet<&str> = HashSet::new();
        let mut as_links: HashSet<AsLink> = HashSet::new();
        let mut ases: HashSet<u32> = HashSet::new();
        let mut n_links = 0u64;
        for &l in &scope {
            let rec = &bundle.records[l as usize];
            let draw = rng.gen_range(0..100u32);
            let still_impacted = if draw < mix.top {
                // Top prediction correct; it is impacted by construction.
                true
            } else if draw < mix.top + mix.secondary {
                let preds = rec.predictions();
                if preds.len() == 1 {
                    // No secondary to fall back to: the one prediction is
                    // the truth.
                    true
                } else {
                    let idx = rng.gen_range(1..preds.len());
                    impacted.segments.contains(&preds[idx].segment)
                }
            } else {
                false
            };
            if still_impacted {
                n_links += 1;
                ips.insert(rec.a.ip.as_str());
                ips.insert(rec.b.ip.as_str());
                if let Some(al) = rec.as_link() {
                    as_links.insert(al);
                }
                ases.extend(rec.a.asn);
                ases.extend(rec.b.asn);
            }
        }
        sum_links += n_links as f64;
        sums[0] += ips.len() as f64;
        sums[1] += as_links.len() as f64;
        sums[2] += ases.len() as f64;
    }

    let n = rounds as f64;
    let mut mean = baseline;
    let mut set = |c: Component, v: f64| {
        let total = baseline.get(c).total;
        mean.set(c, ComponentImpact { impacted: v / n, total });
    };
    set(Component::IpLinks, sum_links);
    set(Component::Ips, sums[0]);
    set(Component::AsLinks, sums[1]);
    set(Component::Ases, sums[2]);

    Ok(SensitivityReport { mix, rounds, baseline, mean })
}
