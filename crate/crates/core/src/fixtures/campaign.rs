use chrono::NaiveDate;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{DocumentRecord, Provider};

/// Shape of one campaign-table row to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignTarget {
    pub cluster_id: i64,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
    pub active_days: usize,
    pub volume: usize,
    pub unique_phash: usize,
}

impl CampaignTarget {
    /// Target whose active-day count is the nearest integer to
    /// `pct_active` percent of the inclusive span.
    pub fn from_pct(cluster_id: i64, first_seen: NaiveDate, last_seen: NaiveDate, pct_active: f64, volume: usize) -> Self {
        let span = (last_seen - first_seen).num_days() as usize + 1;
        let active_days = ((pct_active / 100.0 * span as f64).round() as usize).clamp(1.min(span), span);
        CampaignTarget {
            cluster_id,
            first_seen,
            last_seen,
            active_days,
            volume,
            unique_phash: volume,
        }
    }

    pub fn span_days(&self) -> usize {
        (self.last_seen - self.first_seen).num_days() as usize + 1
    }
}

/// Documents whose upload days and hashes reproduce `target` exactly:
/// both endpoint days are active, every active day has at least one
/// upload, and hashes cycle over `unique_phash` values.
///
/// Panics when the target is infeasible (e.g. fewer documents than days).
pub fn campaign_stream(target: &CampaignTarget, seed: u64) -> Vec<DocumentRecord> {
    let span = target.span_days();
    assert!(target.last_seen >= target.first_seen, "inverted span");
    assert!(target.active_days >= 1 && target.active_days <= span, "active days outside span");
    assert!(span == 1 || target.active_days >= 2, "multi-day span needs both endpoints active");
    assert!(target.volume >= target.active_days, "fewer documents than active days");
    assert!(target.unique_phash >= 1 && target.unique_phash <= target.volume, "bad unique hash count");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets = vec![0usize];
    if span > 1 {
        offsets.push(span - 1);
        let interior = index::sample(&mut rng, span - 2, target.active_days - 2);
        offsets.extend(interior.into_iter().map(|i| i + 1));
    }
    offsets.sort_unstable();
    let mut per_day = vec![1usize; offsets.len()];
    for _ in 0..target.volume - offsets.len() {
        let d = rng.gen_range(0..per_day.len());
        per_day[d] += 1;
    }
    let mut out = Vec::with_capacity(target.volume);
    for (offset, count) in offsets.iter().zip(per_day) {
        let day = target.first_seen + chrono::Days::new(*offset as u64);
        for _ in 0..count {
            let n = out.len();
            out.push(DocumentRecord {
                sha256: format!("{:016x}{:048x}", target.cluster_id as u64, n),
                cluster_id: target.cluster_id,
                first_seen: day,
                provider: if n % 3 == 0 { Provider::PartnerB } else { Provider::PartnerA },
                phash: Some((n % target.unique_phash) as u64),
                language: None,
                tags: Default::default(),
            });
        }
    }
    out
}
