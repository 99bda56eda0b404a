//! Networked probes: URL-reputation sampling and lookup, search-engine rank
//! probing, open-directory monitoring and blocklist matching. All traffic
//! goes through [`Transport`], so every probe can be recorded and replayed.

mod blocklist;
mod directory;
mod reputation;
mod sampling;
mod search;
mod transport;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bait::extract_bait_urls;
use crate::pdf::{normalize, parse_document};
use crate::seo::{classify_seo, cross_link_profile, extract_title, SeoHeuristicConfig};

pub use blocklist::{
    blocked_page_share, match_blocklist_rules, match_pages, BlocklistArchive, FilterList, NetworkRule, PageBlockResult,
    PageRequests, RuleStats,
};
pub use directory::{
    monitor_directory, parse_directory_index, verify_directory_candidate, CandidateVerdict, DirectoryEntry,
    DirectorySnapshot, EntryReport, MonitorResult, SnapshotStatus,
};
pub use reputation::{
    lookup_reputation, EngineVotes, ReputationClient, ReputationReport, ReputationStatus, ReputationSummary,
    VIRUSTOTAL_ENDPOINT,
};
pub use sampling::{distinct_cluster_urls, plan_url_sampling, SamplingPlan};
pub use search::{
    probe_search, summarize_probes, EngineSummary, FetchCheck, FetchFailure, MatchKind, RankHit, SearchClient,
    SearchEngine, SearchProbeResult, BING_ENDPOINT, GOOGLE_ENDPOINT, TOP_N,
};
pub use transport::{
    redact_pdf_bodies, HttpRequest, HttpResponse, PoliteTransport, RecordingTransport, ReplayEntry, ReplayTransport,
    Transport, UreqTransport,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IntelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("search quota exceeded for {0}")]
    QuotaExceeded(String),
    #[error("index unreachable: {0}")]
    IndexUnreachable(String),
    #[error("not a directory index page: {0}")]
    NotAnIndexPage(String),
    #[error("malformed rule at line {line}: {reason}")]
    MalformedRule { line: usize, reason: String },
    #[error("no recorded response for {0}")]
    ReplayMiss(String),
    #[error("invalid url: {0}")]
    InvalidUrl(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("not a parseable PDF: {0}")]
    NotPdf(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// What an in-memory inspection of a fetched PDF keeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdfInspection {
    pub sha256: String,
    pub seo_flag: bool,
    pub title: Option<String>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses `bytes` and applies the cross-link heuristic. Nothing is written.
pub fn inspect_pdf(bytes: &[u8], seo: &SeoHeuristicConfig) -> Result<PdfInspection, IntelError> {
    let sha256 = sha256_hex(bytes);
    let graph = normalize(parse_document(bytes).map_err(|e| IntelError::NotPdf(e.to_string()))?);
    let urls = extract_bait_urls(&graph).urls;
    let seo_flag = classify_seo(&cross_link_profile(&urls), seo);
    let title = extract_title(&graph, &sha256).ok().flatten().map(|t| t.title);
    Ok(PdfInspection { sha256, seo_flag, title })
}
