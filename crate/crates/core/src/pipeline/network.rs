use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jsonl::{append_jsonl, read_jsonl, schema, write_jsonl};
use super::stages::{load_urls, require};
use super::{Context, PipelineError, StageReport};
use crate::bait::canonicalize;
use crate::intel::{
    self, match_pages, monitor_directory, plan_url_sampling, redact_pdf_bodies, verify_directory_candidate,
    BlocklistArchive, DirectorySnapshot, EngineVotes, EntryReport, FetchCheck, IntelError, PageRequests,
    PoliteTransport, RecordingTransport, ReplayTransport, ReputationClient, ReputationStatus, SearchClient,
    SearchEngine, SnapshotStatus, Transport, UreqTransport,
};
use crate::seo::{has_pdf_suffix, SeoReport};
use crate::visual::{ClusterAssignment, NOISE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub cluster_id: i64,
    pub cluster_urls: usize,
    pub coverage: f64,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationRow {
    pub url: String,
    pub cluster_id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ReputationStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<EngineVotes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub source_sha256: String,
    #[serde(flatten)]
    pub verdict: intel::CandidateVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRow {
    #[serde(flatten)]
    pub snapshot: DirectorySnapshot,
    pub removed_entries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntryRow {
    pub index_url: String,
    pub observed_at: DateTime<Utc>,
    #[serde(flatten)]
    pub entry: EntryReport,
}

/// Live (polite, optionally recording) or replay transport per config.
fn transport(ctx: &Context, redact_payloads: bool) -> Result<Box<dyn Transport>, PipelineError> {
    let clients = &ctx.config.clients;
    if !clients.live {
        let log = clients.replay_log.as_ref().ok_or_else(|| {
            PipelineError::Config("network commands need a replay log (--replay) or live mode (--live)".into())
        })?;
        return Ok(Box::new(ReplayTransport::load(log)?));
    }
    let live = UreqTransport::new(Duration::from_secs(clients.timeout_secs), clients.max_body_bytes);
    let interval = Duration::from_millis(clients.rate_limit_ms);
    Ok(match &clients.record_log {
        Some(path) => {
            let mut rec = RecordingTransport::create(live, path)?;
            if redact_payloads {
                rec = rec.with_redaction(redact_pdf_bodies);
            }
            Box::new(PoliteTransport::new(rec, interval))
        }
        None => Box::new(PoliteTransport::new(live, interval)),
    })
}

fn load_clusters(ctx: &Context) -> Result<Vec<ClusterAssignment>, PipelineError> {
    Ok(read_jsonl(&require(ctx, schema::CLUSTERS)?, schema::CLUSTERS)?.1)
}

pub(crate) fn plan_sampling(ctx: &Context, report: &mut StageReport) -> Result<(), PipelineError> {
    let clusters = load_clusters(ctx)?;
    let urls = load_urls(ctx)?;
    let cluster_of: BTreeMap<&str, i64> = clusters.iter().map(|a| (a.sha256.as_str(), a.cluster_id)).collect();
    let mut cluster_urls: BTreeMap<i64, BTreeSet<String>> = BTreeMap::new();
    for rec in &urls {
        let Some(&cluster) = cluster_of.get(rec.sha256.as_str()) else {
            report.warn("missing-cluster-join");
            continue;
        };
        if cluster == NOISE {
            continue;
        }
        let set = cluster_urls.entry(cluster).or_default();
        set.extend(rec.urls.iter().filter(|u| u.is_accepted()).map(|u| u.url.clone()));
    }
    let budget = ctx.config.sampler.url_budget;
    let plan = plan_url_sampling(&cluster_urls, budget, ctx.seed());
    let distinct = intel::distinct_cluster_urls(&cluster_urls);
    let rows: Vec<SamplingRow> = plan
        .per_cluster
        .iter()
        .map(|(&cluster_id, selected)| SamplingRow {
            cluster_id,
            cluster_urls: distinct[&cluster_id].len(),
            coverage: plan.coverage[&cluster_id],
            selected: selected.iter().cloned().collect(),
        })
        .collect();
    report.input("clusters", rows.len());
    report.count("budget", budget);
    report.count("selected", plan.selected_count());
    write_jsonl(&ctx.path(schema::SAMPLING_PLAN.file), schema::SAMPLING_PLAN, ctx.seed(), &rows)?;
    report.output(schema::SAMPLING_PLAN.file);
    Ok(())
}

pub(crate) fn lookup_reputation(ctx: &Context, report: &mut StageReport) -> Result<(), PipelineError> {
    let (_, plan) = read_jsonl::<SamplingRow>(&require(ctx, schema::SAMPLING_PLAN)?, schema::SAMPLING_PLAN)?;
    let transport = transport(ctx, false)?;
    let vt = &ctx.config.clients.virustotal;
    let client = ReputationClient::new(transport.as_ref(), vt.api_key()).with_endpoint(&vt.endpoint);
    let mut rows = Vec::new();
    for row in &plan {
        for url in &row.selected {
            let mut out = ReputationRow {
                url: url.clone(),
                cluster_id: row.cluster_id,
                status: None,
                votes: None,
                error: None,
            };
            match intel::lookup_reputation(url, &client) {
                Ok(r) => {
                    report.count(&format!("status_{}", r.status.as_str()), 1);
                    out.status = Some(r.status);
                    out.votes = r.votes;
                }
                Err(e @ IntelError::Auth(_)) => return Err(e.into()),
                Err(e) => {
                    report.warn("lookup-failed");
                    out.error = Some(e.to_string());
                }
            }
            rows.push(out);
        }
    }
    report.input("urls", rows.len());
    write_jsonl(&ctx.path(schema::REPUTATION.file), schema::REPUTATION, ctx.seed(), &rows)?;
    report.output(schema::REPUTATION.file);
    Ok(())
}

fn load_seo(ctx: &Context) -> Result<Vec<SeoReport>, PipelineError> {
    Ok(read_jsonl(&require(ctx, schema::SEO)?, schema::SEO)?.1)
}

pub(crate) fn probe_search(ctx: &Context, fetch_and_check: bool, report: &mut StageReport) -> Result<(), PipelineError> {
    let seo = load_seo(ctx)?;
    let mut queries = BTreeMap::new();
    for r in seo.iter().filter(|r| r.seo_flag) {
        if let Some(t) = &r.title {
            queries.entry(t.title.clone()).or_insert_with(|| t.clone());
        }
    }
    let known: BTreeSet<String> = load_urls(ctx)?
        .iter()
        .flat_map(|r| r.urls.iter())
        .filter(|u| u.is_accepted() && has_pdf_suffix(&u.url))
        .map(|u| canonicalize(&u.url).unwrap_or_else(|| u.url.clone()))
        .collect();
    report.input("queries", queries.len());
    report.input("known_urls", known.len());

    let transport = transport(ctx, true)?;
    let clients = &ctx.config.clients;
    let check = FetchCheck {
        transport: transport.as_ref(),
        seo: &ctx.config.seo,
    };
    let mut results = Vec::new();
    for &engine in &clients.engines {
        let client = match engine {
            SearchEngine::Google => SearchClient::google(transport.as_ref(), &clients.google.api_key(), &clients.google.cx)
                .with_endpoint(&clients.google.endpoint),
            SearchEngine::Bing => {
                SearchClient::bing(transport.as_ref(), &clients.bing.api_key()).with_endpoint(&clients.bing.endpoint)
            }
        };
        for query in queries.values() {
            match intel::probe_search(query, &client, &known, fetch_and_check.then_some(&check), ctx.now) {
                Ok(r) => {
                    report.count("hits", r.rank_hits.len());
                    report.count("fetch_failures", r.fetch_failures.len());
                    results.push(r);
                }
                Err(IntelError::QuotaExceeded(e)) => {
                    log::warn!("quota exhausted for {e}; skipping remaining queries");
                    report.warn("quota-exceeded");
                    break;
                }
                Err(e @ IntelError::Auth(_)) => return Err(e.into()),
                Err(e) => {
                    log::warn!("{} probe failed: {e}", engine.as_str());
                    report.warn("probe-failed");
                }
            }
        }
    }
    report.count("probes", results.len());
    append_jsonl(&ctx.path(schema::PROBES.file), schema::PROBES, ctx.seed(), &results)?;
    report.output(schema::PROBES.file);
    Ok(())
}

fn read_index_list(path: &Path) -> Result<Vec<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub(crate) fn monitor_dirs(ctx: &Context, index_list: Option<&Path>, report: &mut StageReport) -> Result<(), PipelineError> {
    let transport = transport(ctx, true)?;
    let transport = transport.as_ref();
    let pool = ctx.pool()?;
    let indexes: Vec<String> = match index_list {
        Some(p) => read_index_list(p)?,
        None => {
            let mut candidates: BTreeMap<String, String> = BTreeMap::new();
            for r in load_seo(ctx)? {
                for c in r.directory_candidates {
                    candidates.entry(c).or_insert_with(|| r.sha256.clone());
                }
            }
            let verdicts: Vec<CandidateRow> = pool.install(|| {
                candidates
                    .par_iter()
                    .map(|(url, sha)| CandidateRow {
                        source_sha256: sha.clone(),
                        verdict: verify_directory_candidate(url, transport),
                    })
                    .collect()
            });
            report.input("candidates", verdicts.len());
            write_jsonl(&ctx.path(schema::CANDIDATES.file), schema::CANDIDATES, ctx.seed(), &verdicts)?;
            report.output(schema::CANDIDATES.file);
            verdicts.into_iter().filter(|v| v.verdict.is_index).map(|v| v.verdict.url).collect()
        }
    };
    let indexes: BTreeSet<String> = indexes.into_iter().collect();
    report.input("indexes", indexes.len());

    let snapshots_path = ctx.path(schema::SNAPSHOTS.file);
    let mut previous: BTreeMap<String, DirectorySnapshot> = BTreeMap::new();
    if snapshots_path.exists() {
        for row in read_jsonl::<SnapshotRow>(&snapshots_path, schema::SNAPSHOTS)?.1 {
            previous.insert(row.snapshot.index_url.clone(), row.snapshot);
        }
    }
    let seo = ctx.config.seo;
    let results: Vec<(String, Result<intel::MonitorResult, IntelError>)> = pool.install(|| {
        indexes
            .par_iter()
            .map(|url| (url.clone(), monitor_directory(url, previous.get(url), transport, &seo, ctx.now)))
            .collect()
    });
    let mut snapshot_rows = Vec::new();
    let mut entry_rows = Vec::new();
    for (url, result) in results {
        match result {
            Ok(r) => {
                if matches!(r.snapshot.status, SnapshotStatus::Failed { .. }) {
                    report.warn("index-unreachable");
                }
                report.count("new_entries", r.new_entries.len());
                report.count("removed_entries", r.removed_entries.len());
                report.count("new_seo_entries", r.new_entries.iter().filter(|e| e.seo_flag).count());
                entry_rows.extend(r.new_entries.into_iter().map(|entry| DirectoryEntryRow {
                    index_url: url.clone(),
                    observed_at: r.snapshot.observed_at,
                    entry,
                }));
                snapshot_rows.push(SnapshotRow {
                    snapshot: r.snapshot,
                    removed_entries: r.removed_entries,
                });
            }
            Err(e) => {
                log::warn!("{url}: {e}");
                report.warn("not-an-index");
            }
        }
    }
    append_jsonl(&snapshots_path, schema::SNAPSHOTS, ctx.seed(), &snapshot_rows)?;
    append_jsonl(&ctx.path(schema::DIRECTORY_ENTRIES.file), schema::DIRECTORY_ENTRIES, ctx.seed(), &entry_rows)?;
    report.output(schema::SNAPSHOTS.file);
    report.output(schema::DIRECTORY_ENTRIES.file);
    Ok(())
}

pub(crate) fn match_blocklist(ctx: &Context, requests: &Path, lists: &Path, report: &mut StageReport) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(requests).map_err(|e| PipelineError::io(requests, e))?;
    let mut pages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let page: PageRequests = serde_json::from_str(line).map_err(|e| PipelineError::Decode {
            path: requests.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        pages.push(page);
    }
    let archive = BlocklistArchive::load_dir(lists)?;
    report.input("pages", pages.len());
    report.input("snapshots", archive.snapshots.len());
    for list in archive.snapshots.values() {
        report.count("rules_malformed", list.stats.malformed);
        report.count("rules_cosmetic_skipped", list.stats.cosmetic_skipped);
        report.count("rules_unsupported_skipped", list.stats.unsupported_skipped);
    }
    let results = match_pages(&pages, &archive);
    report.count("pages_with_blocked_request", results.iter().filter(|r| !r.blocked.is_empty()).count());
    report.count("pages_without_snapshot", results.iter().filter(|r| r.snapshot.is_none()).count());
    write_jsonl(&ctx.path(schema::BLOCKLIST.file), schema::BLOCKLIST, ctx.seed(), &results)?;
    report.output(schema::BLOCKLIST.file);
    Ok(())
}
