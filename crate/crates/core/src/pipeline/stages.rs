use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ingest::{read_sidecar, CorpusRecord, DocumentMeta, ParseStatus};
use super::jsonl::{read_jsonl, schema, write_jsonl, Schema};
use super::{Context, PipelineError, StageReport};
use crate::analytics::{
    attachment_evidence, campaign_stats, language_rollup, score_timeline_aggregate, DocumentRecord, LanguageLabel,
    Provider, ScoreObservation, ScoreTimelineSampler, HIGH_CONFIDENCE,
};
use crate::bait::{extract_bait_urls, BaitUrl};
use crate::pdf::{normalize, parse_document, ObjectGraph};
use crate::seo::{extract_title, profile_document, SeoReport};
use crate::visual::io::{list_renders, load_gray, read_embeddings};
use crate::visual::{
    dbscan_with, dedup_exact, merge_clusters, phash, sample_for_validation, ClusterAssignment, DbscanParams, Dedup,
    DedupGroup, FeatureVector, NeighborIndex, PHash64, NOISE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PageScope {
    #[default]
    All,
    First,
}

impl FromStr for PageScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(PageScope::All),
            "first" => Ok(PageScope::First),
            other => Err(format!("expected 'all' or 'first', got '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrlRecord {
    pub sha256: String,
    pub urls: Vec<BaitUrl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhashRow {
    pub sha256: String,
    /// 16 lowercase hex digits.
    pub phash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupRow {
    pub phash: String,
    pub representative: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub cluster_id: i64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub day: NaiveDate,
    pub provider: String,
    pub sha256: Vec<String>,
}

/// Optional external inputs for `analyze`; each replaces the corresponding
/// work-directory intermediate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalyzeInputs {
    /// CSV `sha256,cluster_id`.
    pub labels: Option<PathBuf>,
    /// JSONL metadata rows (sidecar format).
    pub meta: Option<PathBuf>,
    /// JSONL `{sha256, code, confidence}`.
    pub langs: Option<PathBuf>,
    /// JSONL `{sha256, cohort, day_offset, score}`.
    pub scores: Option<PathBuf>,
    /// Spamtrap hits: JSON object `sha256 -> count` or JSONL `{sha256, hits}`.
    pub spamtrap: Option<PathBuf>,
}

pub(crate) fn require(ctx: &Context, s: Schema) -> Result<PathBuf, PipelineError> {
    let p = ctx.path(s.file);
    if p.exists() {
        Ok(p)
    } else {
        Err(PipelineError::MissingInput(format!("{} (run the producing stage first)", p.display())))
    }
}

pub(crate) fn load_corpus(ctx: &Context) -> Result<Vec<CorpusRecord>, PipelineError> {
    Ok(read_jsonl(&require(ctx, schema::CORPUS)?, schema::CORPUS)?.1)
}

pub(crate) fn load_urls(ctx: &Context) -> Result<Vec<UrlRecord>, PipelineError> {
    Ok(read_jsonl(&require(ctx, schema::URLS)?, schema::URLS)?.1)
}

fn parse_file(path: &Path) -> Result<ObjectGraph, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    std::panic::catch_unwind(|| parse_document(&bytes).map(normalize).map_err(|e| e.to_string()))
        .unwrap_or_else(|_| Err("parser panicked".into()))
}

pub(crate) fn extract_urls(ctx: &Context, pages: PageScope, report: &mut StageReport) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let docs: Vec<&CorpusRecord> = corpus.iter().filter(|r| r.status == ParseStatus::Ok).collect();
    report.input("documents", docs.len());
    let pool = ctx.pool()?;
    let results: Vec<Result<UrlRecord, (String, String)>> = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let graph = parse_file(&doc.path).map_err(|e| (doc.sha256.clone(), e))?;
                let extraction = extract_bait_urls(&graph);
                let urls = match pages {
                    PageScope::All => extraction.urls,
                    PageScope::First => extraction.urls.into_iter().filter(|u| u.page_index == 0).collect(),
                };
                Ok(UrlRecord {
                    sha256: doc.sha256.clone(),
                    urls,
                    warnings: extraction.warnings,
                })
            })
            .collect()
    });
    let mut records = Vec::new();
    for r in results {
        match r {
            Ok(rec) => {
                for u in &rec.urls {
                    match u.rejection {
                        None => report.count("accepted", 1),
                        Some(reason) => report.count(&format!("rejected_{}", reason.as_str()), 1),
                    }
                }
                if rec.urls.iter().any(BaitUrl::is_first_page_bait) {
                    report.count("documents_with_first_page_url", 1);
                }
                for w in &rec.warnings {
                    report.warn(w.split_whitespace().next().unwrap_or(w));
                }
                records.push(rec);
            }
            Err((sha, e)) => {
                log::warn!("{sha}: {e}");
                report.warn("parse-failed");
            }
        }
    }
    write_jsonl(&ctx.path(schema::URLS.file), schema::URLS, ctx.seed(), &records)?;
    report.output(schema::URLS.file);
    Ok(())
}

pub(crate) fn profile_seo(ctx: &Context, report: &mut StageReport) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let urls: BTreeMap<String, Vec<BaitUrl>> = load_urls(ctx)?.into_iter().map(|r| (r.sha256, r.urls)).collect();
    let docs: Vec<&CorpusRecord> = corpus.iter().filter(|r| urls.contains_key(&r.sha256)).collect();
    report.input("documents", docs.len());
    let cfg = ctx.config.seo;
    let pool = ctx.pool()?;
    let results: Vec<(SeoReport, Option<String>)> = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let (title, problem) = match parse_file(&doc.path) {
                    Ok(graph) => match extract_title(&graph, &doc.sha256) {
                        Ok(t) => (t, None),
                        Err(_) => (None, Some("malformed-title")),
                    },
                    Err(_) => (None, Some("parse-failed")),
                };
                let rep = profile_document(&doc.sha256, &urls[&doc.sha256], title, &cfg);
                (rep, problem.map(str::to_string))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    for (rep, problem) in results {
        if let Some(p) = problem {
            report.warn(&p);
        }
        if rep.seo_flag {
            report.count("seo_flagged", 1);
        }
        if rep.title.is_some() {
            report.count("titled", 1);
        }
        rows.push(rep);
    }
    write_jsonl(&ctx.path(schema::SEO.file), schema::SEO, ctx.seed(), &rows)?;
    report.output(schema::SEO.file);
    Ok(())
}

fn parse_phash_hex(text: &str) -> Option<u64> {
    let t = text.trim().trim_start_matches("0x");
    (t.len() <= 16).then(|| u64::from_str_radix(t, 16).ok()).flatten()
}

/// Reads precomputed hashes from JSONL (`{sha256, phash}`, optional
/// header) or CSV (`sha256,phash`, optional header row).
fn read_phash_table(path: &Path, report: &mut StageReport) -> Result<Vec<PHash64>, PipelineError> {
    let mut out = Vec::new();
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl" || e == "json");
    if is_jsonl {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<PhashRow>(line) {
                Ok(row) => match parse_phash_hex(&row.phash) {
                    Some(bits) => out.push(PHash64 {
                        bits,
                        source_sha256: row.sha256.to_ascii_lowercase(),
                    }),
                    None => report.warn("bad-phash"),
                },
                Err(_) if i == 0 => {}
                Err(e) => {
                    return Err(PipelineError::Decode {
                        path: path.display().to_string(),
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| PipelineError::MissingInput(format!("{}: {e}", path.display())))?;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| PipelineError::Decode {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            match (rec.get(0), rec.get(1).and_then(parse_phash_hex)) {
                (Some(sha), Some(bits)) => out.push(PHash64 {
                    bits,
                    source_sha256: sha.to_ascii_lowercase(),
                }),
                _ if i == 0 => {}
                _ => report.warn("bad-phash"),
            }
        }
    }
    Ok(out)
}

pub(crate) fn dedup(ctx: &Context, input: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let mut hashes = if input.is_dir() {
        let renders = list_renders(input)?;
        report.input("renders", renders.len());
        let pool = ctx.pool()?;
        let results: Vec<Result<PHash64, String>> = pool.install(|| {
            renders
                .par_iter()
                .map(|(sha, path)| {
                    let img = load_gray(path).map_err(|e| e.to_string())?;
                    phash(&img, sha).map_err(|e| format!("{}: {e}", path.display()))
                })
                .collect()
        });
        let mut ok = Vec::new();
        for r in results {
            match r {
                Ok(h) => ok.push(h),
                Err(e) => {
                    log::warn!("{e}");
                    report.warn("render-failed");
                }
            }
        }
        ok
    } else if input.is_file() {
        let table = read_phash_table(input, report)?;
        report.input("hashes", table.len());
        table
    } else {
        return Err(PipelineError::MissingInput(input.display().to_string()));
    };
    hashes.sort_by(|a, b| a.source_sha256.cmp(&b.source_sha256));
    hashes.dedup_by(|a, b| a.source_sha256 == b.source_sha256);
    let groups = dedup_exact(&hashes);
    report.count("documents", hashes.len());
    report.count("unique_phash", groups.unique_count());
    let phash_rows: Vec<PhashRow> = hashes
        .iter()
        .map(|h| PhashRow {
            sha256: h.source_sha256.clone(),
            phash: h.hex(),
        })
        .collect();
    let dedup_rows: Vec<DedupRow> = groups
        .groups
        .iter()
        .map(|g| DedupRow {
            phash: format!("{:016x}", g.bits),
            representative: g.representative.clone(),
            members: g.members.clone(),
        })
        .collect();
    write_jsonl(&ctx.path(schema::PHASH.file), schema::PHASH, ctx.seed(), &phash_rows)?;
    write_jsonl(&ctx.path(schema::DEDUP.file), schema::DEDUP, ctx.seed(), &dedup_rows)?;
    report.output(schema::PHASH.file);
    report.output(schema::DEDUP.file);
    Ok(())
}

fn read_merge_map(path: &Path) -> Result<BTreeMap<i64, i64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let raw: BTreeMap<String, i64> = serde_json::from_str(&text).map_err(|e| PipelineError::Decode {
        path: path.display().to_string(),
        line: 1,
        reason: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim().parse::<i64>().map(|k| (k, v)).map_err(|e| PipelineError::Decode {
                path: path.display().to_string(),
                line: 1,
                reason: format!("cluster id '{k}': {e}"),
            })
        })
        .collect()
}

pub(crate) fn cluster(
    ctx: &Context,
    embeddings: Option<&Path>,
    merge_map: Option<&Path>,
    report: &mut StageReport,
) -> Result<(), PipelineError> {
    let (_, rows) = read_jsonl::<DedupRow>(&require(ctx, schema::DEDUP)?, schema::DEDUP)?;
    let dedup = Dedup {
        groups: rows
            .into_iter()
            .filter_map(|r| {
                parse_phash_hex(&r.phash).map(|bits| DedupGroup {
                    bits,
                    representative: r.representative,
                    members: r.members,
                })
            })
            .collect(),
    };
    report.input("unique_phash", dedup.unique_count());
    let points: Vec<FeatureVector> = match embeddings {
        Some(path) => {
            let by_sha: BTreeMap<String, Vec<f64>> =
                read_embeddings(path)?.into_iter().map(|f| (f.sha256.to_ascii_lowercase(), f.values)).collect();
            report.input("embeddings", by_sha.len());
            dedup
                .representatives()
                .filter_map(|rep| match by_sha.get(rep) {
                    Some(values) => Some(FeatureVector {
                        sha256: rep.to_string(),
                        values: values.clone(),
                    }),
                    None => {
                        report.warn("missing-embedding");
                        None
                    }
                })
                .collect()
        }
        None => dedup.representative_hashes().iter().map(FeatureVector::from).collect(),
    };
    let params = DbscanParams {
        eps: ctx.config.dbscan.eps,
        min_pts: ctx.config.dbscan.min_pts,
        index: NeighborIndex::Auto,
    };
    let pool = ctx.pool()?;
    let labels = pool.install(|| dbscan_with(&points, &params))?;
    let mut assignments = dedup.reattach(&labels);
    if let Some(path) = merge_map {
        assignments = merge_clusters(&assignments, &read_merge_map(path)?)?;
    }
    let clusters: BTreeSet<i64> = assignments.iter().map(|a| a.cluster_id).filter(|&c| c != NOISE).collect();
    report.count("clusters", clusters.len());
    report.count("noise", assignments.iter().filter(|a| a.cluster_id == NOISE).count());
    report.count("documents", assignments.len());

    let sample = sample_for_validation(&assignments, ctx.config.sampler.validation_per_cluster, ctx.seed())?;
    let cluster_of: BTreeMap<&str, i64> = assignments.iter().map(|a| (a.sha256.as_str(), a.cluster_id)).collect();
    let validation: Vec<ValidationRow> = sample
        .into_iter()
        .map(|sha| ValidationRow {
            cluster_id: cluster_of[sha.as_str()],
            sha256: sha,
        })
        .collect();
    report.count("validation_sample", validation.len());
    write_jsonl(&ctx.path(schema::CLUSTERS.file), schema::CLUSTERS, ctx.seed(), &assignments)?;
    write_jsonl(&ctx.path(schema::VALIDATION.file), schema::VALIDATION, ctx.seed(), &validation)?;
    report.output(schema::CLUSTERS.file);
    report.output(schema::VALIDATION.file);
    Ok(())
}

fn read_labels_csv(path: &Path) -> Result<Vec<ClusterAssignment>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PipelineError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        match (rec.get(0), rec.get(1).map(str::parse::<i64>)) {
            (Some(sha), Some(Ok(cluster_id))) => out.push(ClusterAssignment {
                sha256: sha.to_ascii_lowercase(),
                cluster_id,
                stage: crate::visual::Stage::Manual,
            }),
            _ if i == 0 => {}
            _ => {
                return Err(PipelineError::Decode {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: "expected sha256,cluster_id".into(),
                })
            }
        }
    }
    Ok(out)
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| PipelineError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct LangRow {
    sha256: String,
    code: String,
    confidence: f64,
}

#[derive(Deserialize)]
struct HitRow {
    sha256: String,
    hits: u64,
}

fn read_spamtrap(path: &Path) -> Result<BTreeMap<String, u64>, PipelineError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        return serde_json::from_str(&text).map_err(|e| PipelineError::Decode {
            path: path.display().to_string(),
            line: 1,
            reason: e.to_string(),
        });
    }
    Ok(read_rows::<HitRow>(path)?.into_iter().map(|r| (r.sha256.to_ascii_lowercase(), r.hits)).collect())
}

/// Metadata by sha256 from an explicit file or the ingested corpus.
fn load_meta(ctx: &Context, path: Option<&Path>) -> Result<BTreeMap<String, DocumentMeta>, PipelineError> {
    match path {
        Some(p) => read_sidecar(p),
        None => Ok(load_corpus(ctx)?.into_iter().map(|r| (r.sha256.clone(), r.meta)).collect()),
    }
}

pub(crate) fn analyze(ctx: &Context, inputs: &AnalyzeInputs, report: &mut StageReport) -> Result<(), PipelineError> {
    let assignments = match &inputs.labels {
        Some(p) => read_labels_csv(p)?,
        None => read_jsonl::<ClusterAssignment>(&require(ctx, schema::CLUSTERS)?, schema::CLUSTERS)?.1,
    };
    let meta = load_meta(ctx, inputs.meta.as_deref())?;
    let phashes: BTreeMap<String, u64> = match ctx.path(schema::PHASH.file) {
        p if p.exists() => read_jsonl::<PhashRow>(&p, schema::PHASH)?
            .1
            .into_iter()
            .filter_map(|r| parse_phash_hex(&r.phash).map(|b| (r.sha256, b)))
            .collect(),
        _ => BTreeMap::new(),
    };
    let mut langs: BTreeMap<String, LanguageLabel> = BTreeMap::new();
    if let Some(p) = &inputs.langs {
        for r in read_rows::<LangRow>(p)? {
            langs.insert(r.sha256.to_ascii_lowercase(), LanguageLabel { code: r.code, confidence: r.confidence });
        }
    }
    report.input("labels", assignments.len());
    report.input("meta", meta.len());

    let window = ctx.config.window;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for a in &assignments {
        if !seen.insert(a.sha256.as_str()) {
            report.warn("duplicate-label");
            continue;
        }
        let Some(m) = meta.get(&a.sha256) else {
            report.warn("missing-meta-join");
            continue;
        };
        let Some(first_seen) = m.first_seen else {
            report.warn("missing-first-seen");
            continue;
        };
        if !window.contains(first_seen) {
            report.warn("outside-window");
            continue;
        }
        let mut language = langs.get(&a.sha256).cloned().or_else(|| m.language.clone());
        if language.as_ref().is_some_and(|l| !(0.0..=1.0).contains(&l.confidence)) {
            report.warn("bad-confidence");
            language = None;
        }
        records.push(DocumentRecord {
            sha256: a.sha256.clone(),
            cluster_id: a.cluster_id,
            first_seen,
            provider: m.provider.clone().unwrap_or_else(|| Provider::Other("unknown".into())),
            phash: phashes.get(&a.sha256).copied(),
            language,
            tags: m.tags.iter().cloned().collect(),
        });
    }
    report.count("records", records.len());

    let stats = campaign_stats(&records);
    report.count("campaigns", stats.len());
    write_jsonl(&ctx.path(schema::CAMPAIGNS.file), schema::CAMPAIGNS, ctx.seed(), stats.values())?;
    report.output(schema::CAMPAIGNS.file);

    let hits = match &inputs.spamtrap {
        Some(p) => read_spamtrap(p)?,
        None => BTreeMap::new(),
    };
    let tagged: BTreeSet<String> = records
        .iter()
        .filter(|r| r.tags.iter().any(|t| t.eq_ignore_ascii_case("attachment")))
        .map(|r| r.sha256.clone())
        .collect();
    let evidence = attachment_evidence(&records, &hits, &tagged);
    let rows: Vec<_> = evidence
        .iter()
        .map(|(cluster_id, e)| serde_json::json!({ "cluster_id": cluster_id, "evidence": e }))
        .collect();
    report.count("attachment_clusters", evidence.values().filter(|e| e.meets_threshold).count());
    write_jsonl(&ctx.path(schema::ATTACHMENTS.file), schema::ATTACHMENTS, ctx.seed(), &rows)?;
    report.output(schema::ATTACHMENTS.file);

    let rollup = language_rollup(&records, HIGH_CONFIDENCE);
    let rows: Vec<_> = rollup
        .iter()
        .map(|(cluster_id, r)| serde_json::json!({ "cluster_id": cluster_id, "rollup": r }))
        .collect();
    report.count("regional_clusters", rollup.values().filter(|r| r.regional).count());
    write_jsonl(&ctx.path(schema::LANGUAGES.file), schema::LANGUAGES, ctx.seed(), &rows)?;
    report.output(schema::LANGUAGES.file);

    if let Some(p) = &inputs.scores {
        let observations: Vec<ScoreObservation> = read_rows(p)?;
        report.input("score_observations", observations.len());
        let points = score_timeline_aggregate(&observations);
        write_jsonl(&ctx.path(schema::SCORE_TIMELINE.file), schema::SCORE_TIMELINE, ctx.seed(), &points)?;
        report.output(schema::SCORE_TIMELINE.file);
    }
    Ok(())
}

/// Replays the daily score-timeline selection over the collection window.
pub(crate) fn sample_timeline(ctx: &Context, report: &mut StageReport) -> Result<(), PipelineError> {
    let corpus = load_corpus(ctx)?;
    let pool: Vec<DocumentRecord> = corpus
        .into_iter()
        .filter_map(|r| {
            let first_seen = r.meta.first_seen?;
            Some(DocumentRecord {
                sha256: r.sha256,
                cluster_id: NOISE,
                first_seen,
                provider: r.meta.provider.unwrap_or_else(|| Provider::Other("unknown".into())),
                phash: None,
                language: None,
                tags: BTreeSet::new(),
            })
        })
        .collect();
    report.input("pool", pool.len());
    let mut sampler = ScoreTimelineSampler::new(ctx.seed(), ctx.config.sampler.per_provider_cap);
    let window = ctx.config.window;
    let mut rows = Vec::new();
    let mut day = window.start;
    while day <= window.end {
        let selection = sampler.select(&pool, day);
        for (provider, sha256) in selection.by_provider {
            rows.push(TimelineRow { day, provider, sha256 });
        }
        day = day + Days::new(1);
    }
    report.count("selected", sampler.consumed());
    write_jsonl(&ctx.path(schema::TIMELINE.file), schema::TIMELINE, ctx.seed(), &rows)?;
    report.output(schema::TIMELINE.file);
    Ok(())
}
