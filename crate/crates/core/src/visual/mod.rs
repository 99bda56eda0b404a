//! Perceptual hashing, exact-hash dedup, DBSCAN clustering, cluster
//! merging and validation sampling.

mod dbscan;
pub mod io;
mod phash;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dbscan::{dbscan, dbscan_with, euclidean, DbscanParams, NeighborIndex, EXACT_SEARCH_LIMIT, GRID_MAX_DIM};
pub use phash::{hamming, phash, phash_coefficients, resize_area_average, PHash64};

/// Cluster id of noise points.
pub const NOISE: i64 = -1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisualError {
    #[error("image {width}x{height} is smaller than 8x8")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("vector {sha256} has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize, sha256: String },
    #[error("vector {0} contains a non-finite value")]
    NonFiniteValue(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("merge map contains a cycle through cluster {0}")]
    CyclicMergeMap(i64),
    #[error("cannot read {path}: {reason}")]
    Input { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sha256: String,
    pub values: Vec<f64>,
}

impl From<&PHash64> for FeatureVector {
    fn from(hash: &PHash64) -> Self {
        FeatureVector {
            sha256: hash.source_sha256.clone(),
            values: hash.to_features(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Dedup,
    Dbscan,
    Merged,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub sha256: String,
    pub cluster_id: i64,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupGroup {
    pub bits: u64,
    /// Lexicographically smallest member.
    pub representative: String,
    /// Sorted, distinct members including the representative.
    pub members: Vec<String>,
}

/// Groups of identical hashes, ordered by representative.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dedup {
    pub groups: Vec<DedupGroup>,
}

impl Dedup {
    pub fn unique_count(&self) -> usize {
        self.groups.len()
    }

    pub fn representatives(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.representative.as_str())
    }

    /// Hashes of the representatives, for feeding back into clustering.
    pub fn representative_hashes(&self) -> Vec<PHash64> {
        self.groups
            .iter()
            .map(|g| PHash64 {
                bits: g.bits,
                source_sha256: g.representative.clone(),
            })
            .collect()
    }

    /// Extends assignments over representatives to every group member.
    /// Members of groups whose representative is unassigned become noise.
    pub fn reattach(&self, assignments: &[ClusterAssignment]) -> Vec<ClusterAssignment> {
        let by_rep: BTreeMap<&str, &ClusterAssignment> =
            assignments.iter().map(|a| (a.sha256.as_str(), a)).collect();
        let mut out = Vec::new();
        for group in &self.groups {
            let (cluster_id, stage) = by_rep
                .get(group.representative.as_str())
                .map_or((NOISE, Stage::Dedup), |a| (a.cluster_id, a.stage));
            out.extend(group.members.iter().map(|m| ClusterAssignment {
                sha256: m.clone(),
                cluster_id,
                stage,
            }));
        }
        out.sort_by(|a, b| a.sha256.cmp(&b.sha256));
        out
    }
}

/// Groups documents by exact 64-bit hash equality.
pub fn dedup_exact(hashes: &[PHash64]) -> Dedup {
    let mut by_bits: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    for h in hashes {
        by_bits.entry(h.bits).or_default().insert(&h.source_sha256);
    }
    let mut groups: Vec<DedupGroup> = by_bits
        .into_iter()
        .map(|(bits, members)| {
            let members: Vec<String> = members.into_iter().map(str::to_string).collect();
            DedupGroup {
                bits,
                representative: members[0].clone(),
                members,
            }
        })
        .collect();
    groups.sort_by(|a, b| a.representative.cmp(&b.representative));
    Dedup { groups }
}

/// Rewrites labels through the transitive closure of `merge_map`.
/// Self-mappings are ignored; any longer cycle is an error.
pub fn merge_clusters(
    assignments: &[ClusterAssignment],
    merge_map: &BTreeMap<i64, i64>,
) -> Result<Vec<ClusterAssignment>, VisualError> {
    let mut resolved: BTreeMap<i64, i64> = BTreeMap::new();
    for &start in merge_map.keys() {
        let mut path = vec![start];
        let mut current = start;
        let target = loop {
            if let Some(&done) = resolved.get(&current) {
                break done;
            }
            match merge_map.get(&current) {
                Some(&next) if next != current => {
                    if path.contains(&next) {
                        return Err(VisualError::CyclicMergeMap(next));
                    }
                    path.push(next);
                    current = next;
                }
                _ => break current,
            }
        };
        for id in path {
            resolved.insert(id, target);
        }
    }
    Ok(assignments
        .iter()
        .map(|a| ClusterAssignment {
            sha256: a.sha256.clone(),
            cluster_id: resolved.get(&a.cluster_id).copied().unwrap_or(a.cluster_id),
            stage: Stage::Merged,
        })
        .collect())
}

/// Up to `per_cluster` documents drawn uniformly without replacement from
/// each non-noise cluster. Output is ordered by cluster, then sha256.
pub fn sample_for_validation(
    assignments: &[ClusterAssignment],
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<String>, VisualError> {
    if per_cluster == 0 {
        return Err(VisualError::InvalidParameter("per_cluster must be at least 1".into()));
    }
    let mut clusters: BTreeMap<i64, BTreeSet<&str>> = BTreeMap::new();
    for a in assignments.iter().filter(|a| a.cluster_id != NOISE) {
        clusters.entry(a.cluster_id).or_default().insert(&a.sha256);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for members in clusters.values() {
        let mut members: Vec<&str> = members.iter().copied().collect();
        if members.len() > per_cluster {
            members.shuffle(&mut rng);
            members.truncate(per_cluster);
            members.sort_unstable();
        }
        out.extend(members.into_iter().map(str::to_string));
    }
    Ok(out)
}
