use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use super::transport::{HttpRequest, HttpResponse, Transport};
use super::{inspect_pdf, IntelError};
use crate::seo::SeoHeuristicConfig;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum SnapshotStatus {
    Ok,
    /// The index could not be fetched; entries are carried over.
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectorySnapshot {
    pub index_url: String,
    pub observed_at: DateTime<Utc>,
    pub status: SnapshotStatus,
    /// Sorted by url, one entry per url.
    pub entries: Vec<DirectoryEntry>,
}

impl DirectorySnapshot {
    pub fn urls(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.url.as_str()).collect()
    }
}

/// Metadata kept for a newly listed file. The payload itself is never
/// part of any returned value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryReport {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
    pub seo_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorResult {
    pub snapshot: DirectorySnapshot,
    pub new_entries: Vec<EntryReport>,
    pub removed_entries: Vec<String>,
}

fn anchor_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?is)<a\s[^>]*?href\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s>]+))[^>]*>.*?</a>([^<\r\n]*)"#).unwrap())
}

fn listing_meta_re() -> &'static Regex {
    // Apache/nginx autoindex trailer: "12-Mar-2021 10:04    1.2M".
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(\d{1,4}[-/][A-Za-z0-9]{2,3}[-/]\d{1,4}\s+\d{1,2}:\d{2}(?::\d{2})?)\s+(\d+(?:\.\d+)?[KMGT]?|-)").unwrap()
    })
}

fn parse_size(text: &str) -> Option<u64> {
    let (num, mult) = match text.chars().last()? {
        'K' => (&text[..text.len() - 1], 1u64 << 10),
        'M' => (&text[..text.len() - 1], 1 << 20),
        'G' => (&text[..text.len() - 1], 1 << 30),
        'T' => (&text[..text.len() - 1], 1 << 40),
        _ => (text, 1),
    };
    let value: f64 = num.parse().ok()?;
    Some((value * mult as f64).round() as u64)
}

fn looks_like_html(response: &HttpResponse) -> bool {
    if let Some(ct) = &response.content_type {
        return ct.to_ascii_lowercase().contains("html");
    }
    let head = String::from_utf8_lossy(&response.body[..response.body.len().min(2048)]).to_ascii_lowercase();
    head.contains("<html") || head.contains("<a ") || head.contains("<!doctype html")
}

/// `.pdf` anchors of an HTML index that resolve under `index_url`.
pub fn parse_directory_index(index_url: &str, html: &str) -> Result<Vec<DirectoryEntry>, IntelError> {
    let base = Url::parse(index_url).map_err(|e| IntelError::InvalidUrl(format!("{index_url}: {e}")))?;
    let mut entries: BTreeMap<String, DirectoryEntry> = BTreeMap::new();
    for cap in anchor_re().captures_iter(html) {
        let href = cap.get(1).or(cap.get(2)).or(cap.get(3)).map_or("", |m| m.as_str());
        let href = href.replace("&amp;", "&");
        let Ok(mut target) = base.join(&href) else { continue };
        target.set_fragment(None);
        target.set_query(None);
        let under_prefix = target.origin() == base.origin() && target.path().starts_with(base.path());
        if !under_prefix || !target.path().to_ascii_lowercase().ends_with(".pdf") {
            continue;
        }
        let (size, modified) = cap
            .get(4)
            .and_then(|t| listing_meta_re().captures(t.as_str()))
            .map_or((None, None), |m| (parse_size(&m[2]), Some(m[1].to_string())));
        entries.entry(target.to_string()).or_insert(DirectoryEntry {
            url: target.to_string(),
            size,
            modified,
        });
    }
    Ok(entries.into_values().collect())
}

fn fetch_index(index_url: &str, transport: &dyn Transport) -> Result<Vec<DirectoryEntry>, IntelError> {
    let response = transport
        .execute(&HttpRequest::get(index_url))
        .map_err(|e| IntelError::IndexUnreachable(format!("{index_url}: {e}")))?;
    if !response.is_success() {
        return Err(IntelError::IndexUnreachable(format!("{index_url}: HTTP {}", response.status)));
    }
    if !looks_like_html(&response) {
        return Err(IntelError::NotAnIndexPage(index_url.to_string()));
    }
    parse_directory_index(index_url, &response.text())
}

/// Takes a fresh snapshot of `index_url` and inspects files not listed in
/// `previous`. New files are fetched into memory, run through the bait and
/// cross-link pipeline, and reduced to metadata. An unreachable index
/// yields a failed snapshot that carries `previous` forward.
pub fn monitor_directory(
    index_url: &str,
    previous: Option<&DirectorySnapshot>,
    transport: &dyn Transport,
    seo: &SeoHeuristicConfig,
    observed_at: DateTime<Utc>,
) -> Result<MonitorResult, IntelError> {
    if !index_url.ends_with('/') {
        return Err(IntelError::InvalidUrl(format!("index url must end with '/': {index_url}")));
    }
    let entries = match fetch_index(index_url, transport) {
        Ok(entries) => entries,
        Err(IntelError::IndexUnreachable(reason)) => {
            return Ok(MonitorResult {
                snapshot: DirectorySnapshot {
                    index_url: index_url.to_string(),
                    observed_at,
                    status: SnapshotStatus::Failed { reason },
                    entries: previous.map(|p| p.entries.clone()).unwrap_or_default(),
                },
                new_entries: Vec::new(),
                removed_entries: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let before: BTreeSet<&str> = previous.map(DirectorySnapshot::urls).unwrap_or_default();
    let now: BTreeSet<&str> = entries.iter().map(|e| e.url.as_str()).collect();
    let removed_entries = before.difference(&now).map(|u| u.to_string()).collect();
    let new_entries = entries
        .iter()
        .filter(|e| !before.contains(e.url.as_str()))
        .map(|e| inspect_entry(&e.url, transport, seo))
        .collect();
    Ok(MonitorResult {
        snapshot: DirectorySnapshot {
            index_url: index_url.to_string(),
            observed_at,
            status: SnapshotStatus::Ok,
            entries,
        },
        new_entries,
        removed_entries,
    })
}

fn inspect_entry(url: &str, transport: &dyn Transport, seo: &SeoHeuristicConfig) -> EntryReport {
    let mut report = EntryReport {
        url: url.to_string(),
        sha256: None,
        size_bytes: None,
        seo_flag: false,
        title: None,
        error: None,
    };
    let response = match transport.execute(&HttpRequest::get(url)) {
        Ok(r) if r.is_success() => r,
        Ok(r) => {
            report.error = Some(format!("HTTP {}", r.status));
            return report;
        }
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    report.size_bytes = Some(response.body.len() as u64);
    match inspect_pdf(&response.body, seo) {
        Ok(inspection) => {
            report.sha256 = Some(inspection.sha256);
            report.seo_flag = inspection.seo_flag;
            report.title = inspection.title;
        }
        Err(e) => {
            report.sha256 = Some(super::sha256_hex(&response.body));
            report.error = Some(e.to_string());
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateVerdict {
    pub url: String,
    pub is_index: bool,
    pub pdf_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// True when the candidate serves an HTML index listing at least one `.pdf`
/// under its own host and path.
pub fn verify_directory_candidate(candidate_url: &str, transport: &dyn Transport) -> CandidateVerdict {
    let verdict = |pdf_count: usize, reason: Option<String>| CandidateVerdict {
        url: candidate_url.to_string(),
        is_index: pdf_count > 0,
        pdf_count,
        reason,
    };
    match fetch_index(candidate_url, transport) {
        Ok(entries) if entries.is_empty() => verdict(0, Some("no pdf anchors".into())),
        Ok(entries) => verdict(entries.len(), None),
        Err(e) => verdict(0, Some(e.to_string())),
    }
}
