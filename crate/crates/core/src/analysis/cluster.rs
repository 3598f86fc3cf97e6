//! Country clustering by shared physical dependencies. Each N-Country gets
//! a usage vector over the landing-country universe (link counts from the
//! PC-NC map, normalized to sum 1); countries are then clustered by Ward
//! agglomeration, by default on the rows of the Pearson correlation matrix
//! of those vectors so that countries correlate by usage *pattern* rather
//! than absolute volume.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::embed::PcNcMap;
use crate::model::CountryCode;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least 2 countries with usable feature vectors, got {0}")]
    InsufficientData(usize),
    #[error("distance threshold must be non-negative and finite, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSpace {
    /// Rows of the Pearson correlation matrix of the normalized vectors.
    #[default]
    Correlation,
    /// The normalized usage vectors themselves.
    Raw,
}

impl std::str::FromStr for FeatureSpace {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "correlation" => Ok(FeatureSpace::Correlation),
            "raw" => Ok(FeatureSpace::Raw),
            other => Err(format!("unknown feature space {other:?}: expected correlation or raw")),
        }
    }
}

/// One merge of the dendrogram. `left`/`right` name either a leaf country
/// code or `#k`, the cluster created by merge `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: String,
    pub right: String,
    pub distance: f64,
    pub size: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster id per country; ids run 1..=k ordered by each cluster's
    /// smallest member code. Id 0 is the residual cluster for countries
    /// whose feature vector was degenerate.
    pub assignments: BTreeMap<CountryCode, u32>,
    pub residual: Vec<CountryCode>,
    pub merges: Vec<Merge>,
    /// Per-country provenance: the normalized usage vector that fed the
    /// clustering, over `p_country_universe`.
    pub features: BTreeMap<CountryCode, Vec<f64>>,
    pub p_country_universe: Vec<CountryCode>,
    pub cut: f64,
    pub space: FeatureSpace,
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx < 1e-24 || syy < 1e-24 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Clusters N-Countries from the PC-NC map, cutting the Ward dendrogram at
/// `cut`. Countries whose vector cannot be correlated (zero or constant,
/// which happens when the data underdetermines their usage pattern) land in
/// the residual cluster instead of distorting the real ones.
pub fn correlation_clusters(
    pc_nc: &PcNcMap,
    cut: f64,
    space: FeatureSpace,
) -> Result<ClusterResult, ClusterError> {
    if !cut.is_finite() || cut < 0.0 {
        return Err(ClusterError::BadThreshold(cut));
    }
    let universe = pc_nc.p_countries();
    let n_countries = pc_nc.n_countries();

    let mut features: BTreeMap<CountryCode, Vec<f64>> = BTreeMap::new();
    let mut residual: Vec<CountryCode> = Vec::new();
    let mut usable: Vec<CountryCode> = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();

    for &nc in &n_countries {
        let mut v: Vec<f64> = universe
            .iter()
            .map(|&pc| pc_nc.links_for(pc, nc).len() as f64)
            .collect();
        let sum: f64 = v.iter().sum();
        if sum <= 0.0 {
            residual.push(nc);
            features.insert(nc, v);
            continue;
        }
        for x in &mut v {
            *x /= sum;
        }
        features.insert(nc, v.clone());
        usable.push(nc);
        vectors.push(v);
    }

    // Build the rows the clustering actually runs on.
    let rows: Vec<Vec<f64>> = match space {
        FeatureSpace::Raw => vectors,
        FeatureSpace::Correlation => {
            let n = usable.len();
            let mut corr = vec![vec![0.0; n]; n];
            let mut degenerate = vec![false; n];
            for i in 0..n {
                match pearson(&vectors[i], &vectors[i]) {
                    Some(_) => {}
                    None => degenerate[i] = true,
                }
            }
            for i in 0..n {
                corr[i][i] = 1.0;
                for j in (i + 1)..n {
                    let r = if degenerate[i] || degenerate[j] {
                        0.0
                    } else {
                        pearson(&vectors[i], &vectors[j]).unwrap_or(0.0)
                    };
                    corr[i][j] = r;
                    corr[j][i] = r;
                }
            }
            // Constant vectors have no correlation pattern: move them to
            // the residual cluster.
            let mut kept = Vec::new();
            let mut kept_codes = Vec::new();
            for (i, row) in corr.into_iter().enumerate() {
                if degenerate[i] {
                    residual.push(usable[i]);
                } else {
                    kept.push(row);
                    kept_codes.push(usable[i]);
                }
            }
            // Drop degenerate columns so row length matches the kept set.
            let keep_idx: Vec<usize> =
                (0..degenerate.len()).filter(|&i| !degenerate[i]).collect();
            usable = kept_codes;
            kept.into_iter()
                .map(|row| keep_idx.iter().map(|&i| row[i]).collect())
                .collect()
        }
    };

    residual.sort();
    let n = usable.len();
    if n < 2 {
        return Err(ClusterError::InsufficientData(n));
    }

    let (merges, flat) = ward_cluster(&usable, &rows, cut);

    let mut assignments: BTreeMap<CountryCode, u32> = BTreeMap::new();
    for (&code, &cid) in usable.iter().zip(flat.iter()) {
        assignments.insert(code, cid);
    }
    for &code in &residual {
        assignments.insert(code, 0);
    }

    Ok(ClusterResult {
        assignments,
        residual,
        merges,
        features,
        p_country_universe: universe,
        cut,
        space,
    })
}

/// Ward agglomeration via the Lance-Williams update on a dense distance
/// matrix. Returns the merge list and the flat assignment at `cut` (merges
/// with distance <= cut applied). Ties pick the pair with the smallest
/// (smallest-member, other-member) leaf indices, which together with the
/// sorted input order makes the result independent of input permutation.
fn ward_cluster(codes: &[CountryCode], rows: &[Vec<f64>], cut: f64) -> (Vec<Merge>, Vec<u32>) {
    let n = codes.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&rows[i], &rows[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    struct Node {
        size: u32,
        /// Smallest leaf index inside, for deterministic tie-breaking.
        min_leaf: usize,
        label: String,
        /// Leaf indices inside, for the flat cut.
        members: Vec<usize>,
    }
    let mut nodes: Vec<Option<Node>> = (0..n)
        .map(|i| {
            Some(Node {
                size: 1,
                min_leaf: i,
                label: codes[i].to_string(),
                members: vec![i],
            })
        })
        .collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges: Vec<Merge> = Vec::with_capacity(n - 1);
    let mut flat = vec![0u32; n];
    let mut flat_groups: Vec<Vec<usize>> = Vec::new();
    let mut cut_done = false;

    for merge_idx in 0..(n - 1) {
        // Find the closest active pair.
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[(ai + 1)..] {
                let d = dist[i][j];
                let key_ij = {
                    let (ni, nj) = (nodes[i].as_ref().unwrap(), nodes[j].as_ref().unwrap());
                    let (lo, hi) = if ni.min_leaf < nj.min_leaf {
                        (ni.min_leaf, nj.min_leaf)
                    } else {
                        (nj.min_leaf, ni.min_leaf)
                    };
                    (lo, hi)
                };
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => {
                        let (nbi, nbj) =
                            (nodes[bi].as_ref().unwrap(), nodes[bj].as_ref().unwrap());
                        let (blo, bhi) = if nbi.min_leaf < nbj.min_leaf {
                            (nbi.min_leaf, nbj.min_leaf)
                        } else {
                            (nbj.min_leaf, nbi.min_leaf)
                        };
                        d < bd || (d == bd && key_ij < (blo, bhi))
                    }
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, i, j) = best.expect("at least two active clusters");

        // Record the flat partition the moment merges pass the cut; the
        // Ward merge sequence is monotone so no later merge can undo it.
        if !cut_done && d > cut {
            flat_groups = active
                .iter()
                .map(|&k| nodes[k].as_ref().unwrap().members.clone())
                .collect();
            cut_done = true;
        }

        let ni = nodes[i].take().expect("active node");
        let nj = nodes[j].take().expect("active node");
        let size = ni.size + nj.size;
        // Present the smaller-min-leaf side first for a stable dendrogram.
        let (left, right) = if ni.min_leaf <= nj.min_leaf {
            (ni.label.clone(), nj.label.clone())
        } else {
            (nj.label.clone(), ni.label.clone())
        };
        merges.push(Merge { left, right, distance: d, size });

        // Lance-Williams update for Ward: the merged cluster lives in slot i.
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nk = nodes[k].as_ref().unwrap().size as f64;
            let a = (ni.size as f64 + nk) * dist[i][k] * dist[i][k];
            let b = (nj.size as f64 + nk) * dist[j][k] * dist[j][k];
            let c = nk * d * d;
            let nd = ((a + b - c) / (size as f64 + nk)).max(0.0).sqrt();
            dist[i][k] = nd;
            dist[k][i] = nd;
        }
        let mut members = ni.members;
        members.extend(nj.members);
        nodes[i] = Some(Node {
            size,
            min_leaf: ni.min_leaf.min(nj.min_leaf),
            label: format!("#{merge_idx}"),
            members,
        });
        active.retain(|&k| k != j);
    }

    if !cut_done {
        // Every merge fell at or below the cut: one big cluster.
        flat_groups = vec![(0..n).collect()];
    }

    // Cluster ids 1..=k by smallest member country code.
    flat_groups.sort_by_key(|g| g.iter().map(|&i| codes[i]).min());
    for (cid, group) in flat_groups.iter().enumerate() {
        for &leaf in group {
            flat[leaf] = cid as u32 + 1;
        }
    }
    (merges, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddedMaps, PredictionMode};
    use crate::ingest::DatasetBundle;
    use crate::model::{CableSegment, IpEndpoint, LandingStation};

    fn cc(s: &str) -> CountryCode {
        CountryCode::new(s).unwrap()
    }

    /// Two blocks of countries with disjoint landing dependencies:
    /// {AA, AB} use P-countries {PA, PB}; {BA, BB} use {PC, PD}.
    fn block_world() -> DatasetBundle {
        let seg = |c: &str, a: &str, b: &str| {
            CableSegment::new(c.into(), a.into(), b.into()).unwrap()
        };
        let st = |id: &str, lat: f64, country: &str| {
            LandingStation::new(id.into(), lat, 10.0, cc(country)).unwrap()
        };
        let ep = |ip: &str, country: &str| {
            IpEndpoint::new(ip, Some(cc(country)), Some(1), None).unwrap()
        };
        let mut records = Vec::new();
        let mut ip = 0u32;
        let mut next_ip = || {
            ip += 1;
            format!("10.0.{}.{}", ip / 256, ip % 256)
        };
        // Block 1: AA and AB depend entirely on the PA-PB shores, so their
        // usage vectors coincide.
        for nc in ["AA", "AB"] {
            for _ in 0..3 {
                records.push((
                    ep(&next_ip(), nc),
                    ep(&next_ip(), nc),
                    vec![(seg("c1", "P1", "P2"), 0.9)],
                ));
            }
            records.push((
                ep(&next_ip(), nc),
                ep(&next_ip(), nc),
                vec![(seg("c2", "P1", "P2"), 0.9)],
            ));
        }
        // Block 2: BA and BB depend entirely on the PC-PD shores.
        for nc in ["BA", "BB"] {
            records.push((
                ep(&next_ip(), nc),
                ep(&next_ip(), nc),
                vec![(seg("c3", "P3", "P4"), 0.9)],
            ));
            for _ in 0..3 {
                records.push((
                    ep(&next_ip(), nc),
                    ep(&next_ip(), nc),
                    vec![(seg("c4", "P3", "P4"), 0.9)],
                ));
            }
        }
        DatasetBundle::from_parts(
            vec![
                st("P1", 10.0, "PA"),
                st("P2", 20.0, "PB"),
                st("P3", 30.0, "PC"),
                st("P4", 40.0, "PD"),
            ],
            records,
        )
        .unwrap()
    }

    #[test]
    fn blocks_recovered_at_a_separating_cut() {
        let b = block_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let res = correlation_clusters(&maps.pc_nc, 0.5, FeatureSpace::Correlation).unwrap();
        assert_eq!(res.assignments[&cc("AA")], res.assignments[&cc("AB")]);
        assert_eq!(res.assignments[&cc("BA")], res.assignments[&cc("BB")]);
        assert_ne!(res.assignments[&cc("AA")], res.assignments[&cc("BA")]);
        assert_eq!(res.merges.len(), 3);
    }

    #[test]
    fn merge_distances_are_monotone() {
        let b = block_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        for space in [FeatureSpace::Correlation, FeatureSpace::Raw] {
            let res = correlation_clusters(&maps.pc_nc, 0.0, space).unwrap();
            for w in res.merges.windows(2) {
                assert!(
                    w[1].distance >= w[0].distance - 1e-12,
                    "non-monotone dendrogram: {:?}",
                    res.merges
                );
            }
        }
    }

    #[test]
    fn cluster_count_non_increasing_in_cut() {
        let b = block_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let full = correlation_clusters(&maps.pc_nc, 0.0, FeatureSpace::Correlation).unwrap();
        let top = full.merges.last().unwrap().distance;
        let mut last = usize::MAX;
        for i in 0..=30 {
            let cut = top * 1.05 * i as f64 / 30.0;
            let res = correlation_clusters(&maps.pc_nc, cut, FeatureSpace::Correlation).unwrap();
            let mut ids: Vec<u32> = res.assignments.values().copied().filter(|&c| c != 0).collect();
            ids.sort_unstable();
            ids.dedup();
            assert!(ids.len() <= last, "cut {cut}: {} > {last}", ids.len());
            last = ids.len();
        }
        assert_eq!(last, 1);
    }

    #[test]
    fn zero_cut_keeps_blocks_apart() {
        let b = block_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let res = correlation_clusters(&maps.pc_nc, 0.0, FeatureSpace::Raw).unwrap();
        // AA and AB have identical raw vectors (distance 0): merged even at
        // cut 0. The blocks stay apart.
        assert_eq!(res.assignments[&cc("AA")], res.assignments[&cc("AB")]);
        assert_ne!(res.assignments[&cc("AA")], res.assignments[&cc("BA")]);
    }

    #[test]
    fn insufficient_data_rejected() {
        let pc_nc = PcNcMap::default();
        assert_eq!(
            correlation_clusters(&pc_nc, 0.5, FeatureSpace::Correlation).unwrap_err(),
            ClusterError::InsufficientData(0)
        );
    }

    #[test]
    fn bad_threshold_rejected() {
        let pc_nc = PcNcMap::default();
        assert!(matches!(
            correlation_clusters(&pc_nc, -1.0, FeatureSpace::Correlation).unwrap_err(),
            ClusterError::BadThreshold(_)
        ));
    }

    #[test]
    fn cluster_ids_start_at_one_and_are_contiguous() {
        let b = block_world();
        let maps = EmbeddedMaps::build(&b, PredictionMode::Top);
        let res = correlation_clusters(&maps.pc_nc, 0.5, FeatureSpace::Correlation).unwrap();
        let mut ids: Vec<u32> = res.assignments.values().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids, vec![1, 2]);
    }
}
