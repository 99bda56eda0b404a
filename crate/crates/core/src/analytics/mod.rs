//! Per-cluster volume, activity, language, score-timeline and
//! attachment-evidence aggregates.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::visual::NOISE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("document {sha256} first seen {date} outside the collection window {window}")]
    OutsideWindow { sha256: String, date: NaiveDate, window: CollectionWindow },
    #[error("document {0} has a language confidence outside [0, 1]")]
    BadConfidence(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provider {
    PartnerA,
    PartnerB,
    Other(String),
}

impl Provider {
    pub fn as_str(&self) -> &str {
        match self {
            Provider::PartnerA => "partner-a",
            Provider::PartnerB => "partner-b",
            Provider::Other(name) => name,
        }
    }
}

impl From<&str> for Provider {
    fn from(s: &str) -> Self {
        match s {
            "partner-a" => Provider::PartnerA,
            "partner-b" => Provider::PartnerB,
            other => Provider::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Provider {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Provider {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Provider::from(String::deserialize(d)?.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageLabel {
    pub code: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub sha256: String,
    pub cluster_id: i64,
    pub first_seen: NaiveDate,
    pub provider: Provider,
    /// 64-bit perceptual hash of the first-page render.
    #[serde(default)]
    pub phash: Option<u64>,
    #[serde(default)]
    pub language: Option<LanguageLabel>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

/// Inclusive UTC date range of the data collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for CollectionWindow {
    fn default() -> Self {
        CollectionWindow {
            start: NaiveDate::from_ymd_opt(2020, 12, 16).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2021, 6, 23).expect("valid date"),
        }
    }
}

impl fmt::Display for CollectionWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

impl CollectionWindow {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Checks window membership and confidence ranges.
    pub fn validate(&self, records: &[DocumentRecord]) -> Result<(), AnalyticsError> {
        for r in records {
            if !self.contains(r.first_seen) {
                return Err(AnalyticsError::OutsideWindow {
                    sha256: r.sha256.clone(),
                    date: r.first_seen,
                    window: *self,
                });
            }
            if let Some(l) = &r.language {
                if !(0.0..=1.0).contains(&l.confidence) {
                    return Err(AnalyticsError::BadConfidence(r.sha256.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub cluster_id: i64,
    pub volume: usize,
    pub unique_phash: usize,
    /// Volume divided by the number of active days.
    pub avg_per_day: f64,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
    pub active_days: usize,
    /// Inclusive span from first to last upload.
    pub span_days: usize,
    pub pct_active: f64,
}

/// Round half up to an integer.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Round half up to one decimal place.
pub fn round_half_up_1dp(x: f64) -> f64 {
    // The small bias absorbs binary representation error (95.75 is stored
    // as 95.7499..).
    ((x * 10.0) + 0.5 + 1e-9).floor() / 10.0
}

impl CampaignStats {
    pub fn avg_per_day_display(&self) -> i64 {
        round_half_up(self.avg_per_day)
    }

    pub fn pct_active_display(&self) -> String {
        format!("{:.1}%", round_half_up_1dp(self.pct_active))
    }
}

/// `dd.mm.yy`, the short display form used in campaign tables.
pub fn short_date(date: NaiveDate) -> String {
    format!("{:02}.{:02}.{:02}", date.day(), date.month(), date.year().rem_euclid(100))
}

/// Aggregates per cluster. Noise (-1) is not a campaign and is skipped.
/// Documents without a hash count as distinct fingerprints.
pub fn campaign_stats(records: &[DocumentRecord]) -> BTreeMap<i64, CampaignStats> {
    struct Acc<'a> {
        volume: usize,
        days: BTreeSet<NaiveDate>,
        hashes: HashSet<u64>,
        unhashed: HashSet<&'a str>,
        shas: HashSet<&'a str>,
    }
    let mut by_cluster: BTreeMap<i64, Acc<'_>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.cluster_id != NOISE) {
        let acc = by_cluster.entry(r.cluster_id).or_insert_with(|| Acc {
            volume: 0,
            days: BTreeSet::new(),
            hashes: HashSet::new(),
            unhashed: HashSet::new(),
            shas: HashSet::new(),
        });
        if !acc.shas.insert(&r.sha256) {
            continue;
        }
        acc.volume += 1;
        acc.days.insert(r.first_seen);
        match r.phash {
            Some(bits) => {
                acc.hashes.insert(bits);
            }
            None => {
                acc.unhashed.insert(&r.sha256);
            }
        }
    }
    by_cluster
        .into_iter()
        .filter_map(|(cluster_id, acc)| {
            let first_seen = *acc.days.first()?;
            let last_seen = *acc.days.last()?;
            let span_days = (last_seen - first_seen).num_days() as usize + 1;
            let active_days = acc.days.len();
            Some((
                cluster_id,
                CampaignStats {
                    cluster_id,
                    volume: acc.volume,
                    unique_phash: acc.hashes.len() + acc.unhashed.len(),
                    avg_per_day: acc.volume as f64 / active_days as f64,
                    first_seen,
                    last_seen,
                    active_days,
                    span_days,
                    pct_active: 100.0 * active_days as f64 / span_days as f64,
                },
            ))
        })
        .collect()
}

/// Empirical CDF: distinct values ascending with the fraction of inputs
/// less than or equal to each.
pub fn cdf_series(values: &[f64]) -> Result<Vec<(f64, f64)>, AnalyticsError> {
    if values.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// Daily VirusTotal-score sampler: up to `per_provider_cap` files per
/// provider among files first seen before the sampling day, each file
/// selected at most once over the sampler's lifetime.
#[derive(Debug, Clone)]
pub struct ScoreTimelineSampler {
    seed: u64,
    per_provider_cap: usize,
    consumed: HashSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySelection {
    pub day: NaiveDate,
    pub by_provider: BTreeMap<String, Vec<String>>,
}

impl DailySelection {
    pub fn len(&self) -> usize {
        self.by_provider.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub const DEFAULT_PER_PROVIDER_CAP: usize = 500;

impl ScoreTimelineSampler {
    pub fn new(seed: u64, per_provider_cap: usize) -> Self {
        ScoreTimelineSampler {
            seed,
            per_provider_cap,
            consumed: HashSet::new(),
        }
    }

    pub fn consumed(&self) -> usize {
        self.consumed.len()
    }

    pub fn is_consumed(&self, sha256: &str) -> bool {
        self.consumed.contains(sha256)
    }

    pub fn select(&mut self, pool: &[DocumentRecord], day: NaiveDate) -> DailySelection {
        let mut eligible: BTreeMap<&Provider, BTreeSet<&str>> = BTreeMap::new();
        let mut claimed = HashSet::new();
        let mut by_provider: Vec<(&Provider, &str)> = pool
            .iter()
            .filter(|r| r.first_seen < day && !self.consumed.contains(&r.sha256))
            .map(|r| (&r.provider, r.sha256.as_str()))
            .collect();
        by_provider.sort();
        for (provider, sha) in by_provider {
            if claimed.insert(sha) {
                eligible.entry(provider).or_default().insert(sha);
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(day.num_days_from_ce() as u64);
        let mut selection = DailySelection {
            day,
            by_provider: BTreeMap::new(),
        };
        for (provider, shas) in eligible {
            let shas: Vec<&str> = shas.into_iter().collect();
            let take = shas.len().min(self.per_provider_cap);
            let mut picked: Vec<String> = index::sample(&mut rng, shas.len(), take)
                .into_iter()
                .map(|i| shas[i].to_string())
                .collect();
            picked.sort();
            self.consumed.extend(picked.iter().cloned());
            selection.by_provider.insert(provider.to_string(), picked);
        }
        selection
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreObservation {
    pub sha256: String,
    pub cohort: String,
    pub day_offset: i64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    pub cohort: String,
    pub day_offset: i64,
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
}

/// Mean and variance of scores per (cohort, day offset).
pub fn score_timeline_aggregate(observations: &[ScoreObservation]) -> Vec<TimelinePoint> {
    let mut groups: BTreeMap<(&str, i64), Vec<f64>> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.score.is_finite()) {
        groups.entry((&o.cohort, o.day_offset)).or_default().push(o.score);
    }
    groups
        .into_iter()
        .map(|((cohort, day_offset), scores)| {
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let variance = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
            TimelinePoint {
                cohort: cohort.to_string(),
                day_offset,
                count: scores.len(),
                mean,
                variance,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentEvidence {
    /// Total spam-trap matches over the cluster's files.
    pub hits: u64,
    /// Files with at least two spam-trap matches.
    pub files: usize,
    pub tagged_files: usize,
    pub meets_threshold: bool,
}

/// Minimum matches per file, and matching files per cluster.
pub const ATTACHMENT_MIN: u64 = 2;

/// A cluster meets the threshold when at least two files were each found
/// at least twice in spam traps, or at least two files carry an attachment
/// tag. The two sources are evaluated independently.
pub fn attachment_evidence(
    records: &[DocumentRecord],
    spamtrap_hits: &BTreeMap<String, u64>,
    tagged: &BTreeSet<String>,
) -> BTreeMap<i64, AttachmentEvidence> {
    let mut clusters: BTreeMap<i64, BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.cluster_id != NOISE) {
        clusters.entry(r.cluster_id).or_default().insert(&r.sha256);
    }
    clusters
        .into_iter()
        .map(|(cluster, shas)| {
            let mut ev = AttachmentEvidence::default();
            for sha in shas {
                let hits = spamtrap_hits.get(sha).copied().unwrap_or(0);
                ev.hits += hits;
                if hits >= ATTACHMENT_MIN {
                    ev.files += 1;
                }
                if tagged.contains(sha) {
                    ev.tagged_files += 1;
                }
            }
            ev.meets_threshold = ev.files >= ATTACHMENT_MIN as usize || ev.tagged_files >= ATTACHMENT_MIN as usize;
            (cluster, ev)
        })
        .collect()
}

pub const HIGH_CONFIDENCE: f64 = 0.90;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRollup {
    /// Document counts per language among high-confidence labels.
    pub languages: BTreeMap<String, usize>,
    pub labeled: usize,
    /// Exactly one language observed.
    pub regional: bool,
}

pub fn language_rollup(records: &[DocumentRecord], min_confidence: f64) -> BTreeMap<i64, LanguageRollup> {
    let mut out: BTreeMap<i64, LanguageRollup> = BTreeMap::new();
    for r in records.iter().filter(|r| r.cluster_id != NOISE) {
        let entry = out.entry(r.cluster_id).or_default();
        if let Some(label) = r.language.as_ref().filter(|l| l.confidence >= min_confidence) {
            *entry.languages.entry(label.code.clone()).or_default() += 1;
            entry.labeled += 1;
        }
    }
    for rollup in out.values_mut() {
        rollup.regional = rollup.languages.len() == 1;
    }
    out
}

/// Share of each language over all documents with a high-confidence label.
pub fn language_shares(records: &[DocumentRecord], min_confidence: f64) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for label in records.iter().filter_map(|r| r.language.as_ref()) {
        if label.confidence >= min_confidence {
            *counts.entry(label.code.clone()).or_default() += 1;
            total += 1;
        }
    }
    counts
        .into_iter()
        .map(|(code, n)| (code, n as f64 / total as f64))
        .collect()
}
