use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub per_cluster: BTreeMap<i64, BTreeSet<String>>,
    pub budget: usize,
    pub coverage: BTreeMap<i64, f64>,
}

impl SamplingPlan {
    pub fn selected_count(&self) -> usize {
        self.per_cluster.values().map(BTreeSet::len).sum()
    }
}

/// Distinct URLs per cluster. A URL listed under several clusters belongs to
/// the lowest cluster id.
pub fn distinct_cluster_urls(cluster_urls: &BTreeMap<i64, BTreeSet<String>>) -> BTreeMap<i64, Vec<&str>> {
    let mut seen = BTreeSet::new();
    cluster_urls
        .iter()
        .map(|(&id, urls)| (id, urls.iter().map(String::as_str).filter(|u| seen.insert(*u)).collect()))
        .collect()
}

/// Max-min water-filling: each round grants one random unselected URL to
/// every cluster that still has one, until the budget runs out. When the
/// last round cannot serve everyone, recipients are drawn in seeded order.
///
/// The round-by-round process is evaluated in closed form: every cluster
/// receives `min(size, level)` for the largest affordable `level`, and the
/// remainder goes one each to a seeded-random subset of the larger clusters.
pub fn plan_url_sampling(cluster_urls: &BTreeMap<i64, BTreeSet<String>>, budget: usize, seed: u64) -> SamplingPlan {
    let clusters = distinct_cluster_urls(cluster_urls);
    let cost = |level: usize| -> usize { clusters.values().map(|u| u.len().min(level)).sum() };
    let max_size = clusters.values().map(Vec::len).max().unwrap_or(0);
    let (mut lo, mut hi) = (0usize, max_size);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if cost(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let level = lo;
    let remainder = budget.saturating_sub(cost(level));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extra: Vec<i64> = clusters.iter().filter(|(_, u)| u.len() > level).map(|(&id, _)| id).collect();
    extra.shuffle(&mut rng);
    let bonus: BTreeSet<i64> = extra.into_iter().take(remainder).collect();

    let mut per_cluster = BTreeMap::new();
    let mut coverage = BTreeMap::new();
    for (&id, urls) in &clusters {
        let take = urls.len().min(level) + usize::from(bonus.contains(&id));
        let mut order = urls.clone();
        order.shuffle(&mut rng);
        let chosen: BTreeSet<String> = order.into_iter().take(take).map(str::to_string).collect();
        let fraction = if urls.is_empty() { 1.0 } else { chosen.len() as f64 / urls.len() as f64 };
        coverage.insert(id, fraction);
        per_cluster.insert(id, chosen);
    }
    SamplingPlan {
        per_cluster,
        budget,
        coverage,
    }
}
