use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::transport::{HttpRequest, Transport};
use super::{inspect_pdf, IntelError};
use crate::bait::canonicalize;
use crate::seo::{SeoHeuristicConfig, TitleQuery};

pub const TOP_N: usize = 10;
pub const GOOGLE_ENDPOINT: &str = "https://www.googleapis.com/customsearch/v1";
pub const BING_ENDPOINT: &str = "https://api.bing.microsoft.com/v7.0/search";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchEngine {
    Google,
    Bing,
}

impl SearchEngine {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchEngine::Google => "google",
            SearchEngine::Bing => "bing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    ExactUrl,
    CrossLinkHeuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHit {
    pub rank: u8,
    pub url: String,
    pub match_kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub rank: u8,
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchProbeResult {
    pub query: String,
    pub sha256: String,
    pub engine: SearchEngine,
    /// Result URLs in rank order (rank = position + 1).
    pub results: Vec<String>,
    pub rank_hits: Vec<RankHit>,
    pub fetch_failures: Vec<FetchFailure>,
    pub probed_at: DateTime<Utc>,
}

/// Web-search API client: Google Custom Search JSON or Bing Web Search v7.
pub struct SearchClient<T> {
    pub engine: SearchEngine,
    transport: T,
    endpoint: String,
    api_key: String,
    /// Google programmable search engine id; unused for Bing.
    cx: String,
}

impl<T: Transport> SearchClient<T> {
    pub fn google(transport: T, api_key: &str, cx: &str) -> Self {
        SearchClient {
            engine: SearchEngine::Google,
            transport,
            endpoint: GOOGLE_ENDPOINT.into(),
            api_key: api_key.into(),
            cx: cx.into(),
        }
    }

    pub fn bing(transport: T, api_key: &str) -> Self {
        SearchClient {
            engine: SearchEngine::Bing,
            transport,
            endpoint: BING_ENDPOINT.into(),
            api_key: api_key.into(),
            cx: String::new(),
        }
    }

    pub fn with_endpoint(mut self, endpoint: &str) -> Self {
        self.endpoint = endpoint.to_string();
        self
    }

    pub fn request_for(&self, query: &str) -> Result<HttpRequest, IntelError> {
        let mut url = url::Url::parse(&self.endpoint).map_err(|e| IntelError::InvalidUrl(format!("{}: {e}", self.endpoint)))?;
        match self.engine {
            SearchEngine::Google => {
                url.query_pairs_mut()
                    .append_pair("cx", &self.cx)
                    .append_pair("q", query)
                    .append_pair("num", "10");
                Ok(HttpRequest::get(url.as_str()).secret_query("key", &self.api_key))
            }
            SearchEngine::Bing => {
                url.query_pairs_mut().append_pair("q", query).append_pair("count", "10");
                Ok(HttpRequest::get(url.as_str()).secret_header("ocp-apim-subscription-key", &self.api_key))
            }
        }
    }

    /// Top result URLs for `query`, at most [`TOP_N`].
    pub fn top_results(&self, query: &str) -> Result<Vec<String>, IntelError> {
        let response = self.transport.execute(&self.request_for(query)?)?;
        let body = response.text().to_ascii_lowercase();
        let quota_hint = ["quota", "exceeded", "outofcallvolume"].iter().any(|k| body.contains(k));
        match response.status {
            429 => return Err(IntelError::QuotaExceeded(self.engine.as_str().into())),
            403 if quota_hint => return Err(IntelError::QuotaExceeded(self.engine.as_str().into())),
            401 | 403 => return Err(IntelError::Auth(response.status)),
            s if !(200..300).contains(&s) => {
                return Err(IntelError::Transport(format!("{} search: HTTP {s}", self.engine.as_str())))
            }
            _ => {}
        }
        let json: serde_json::Value = serde_json::from_slice(&response.body)
            .map_err(|e| IntelError::Decode(format!("{} search: {e}", self.engine.as_str())))?;
        let (list, key) = match self.engine {
            SearchEngine::Google => (&json["items"], "link"),
            SearchEngine::Bing => (&json["webPages"]["value"], "url"),
        };
        Ok(list
            .as_array()
            .map(|items| {
                items
                    .iter()
                    .filter_map(|i| i[key].as_str().map(str::to_string))
                    .take(TOP_N)
                    .collect()
            })
            .unwrap_or_default())
    }
}

/// Settings for downloading each result and re-running the cross-link
/// heuristic. Bodies stay in memory.
pub struct FetchCheck<'a> {
    pub transport: &'a dyn Transport,
    pub seo: &'a SeoHeuristicConfig,
}

/// Submits the verbatim title and records hits in the top ten. A result
/// equal to a known lure URL is an exact-url hit; otherwise, with
/// `fetch_check`, a result whose body is a PDF flagged by the cross-link
/// heuristic is a cross-link-heuristic hit. Each rank yields at most one hit.
pub fn probe_search<T: Transport>(
    query: &TitleQuery,
    client: &SearchClient<T>,
    known_urls: &BTreeSet<String>,
    fetch_check: Option<&FetchCheck<'_>>,
    probed_at: DateTime<Utc>,
) -> Result<SearchProbeResult, IntelError> {
    let results = client.top_results(&query.title)?;
    let known: BTreeSet<String> = known_urls.iter().map(|u| canonicalize(u).unwrap_or_else(|| u.clone())).collect();
    let mut rank_hits = Vec::new();
    let mut fetch_failures = Vec::new();
    for (pos, url) in results.iter().enumerate() {
        let rank = (pos + 1) as u8;
        let canonical = canonicalize(url).unwrap_or_else(|| url.clone());
        if known.contains(&canonical) {
            rank_hits.push(RankHit {
                rank,
                url: url.clone(),
                match_kind: MatchKind::ExactUrl,
            });
            continue;
        }
        let Some(check) = fetch_check else { continue };
        let outcome = check
            .transport
            .execute(&HttpRequest::get(url.as_str()))
            .and_then(|r| {
                if r.is_success() {
                    Ok(r)
                } else {
                    Err(IntelError::Transport(format!("HTTP {}", r.status)))
                }
            })
            .and_then(|r| inspect_pdf(&r.body, check.seo));
        match outcome {
            Ok(inspection) if inspection.seo_flag => rank_hits.push(RankHit {
                rank,
                url: url.clone(),
                match_kind: MatchKind::CrossLinkHeuristic,
            }),
            Ok(_) => {}
            Err(e) => fetch_failures.push(FetchFailure {
                rank,
                url: url.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok(SearchProbeResult {
        query: query.title.clone(),
        sha256: query.sha256.clone(),
        engine: client.engine,
        results,
        rank_hits,
        fetch_failures,
        probed_at,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub engine: SearchEngine,
    pub probes: usize,
    pub days: usize,
    pub exact_total: usize,
    pub heuristic_total: usize,
    pub exact_daily_avg: f64,
    pub heuristic_daily_avg: f64,
}

/// Per-engine hit totals and averages over the distinct UTC probe days.
pub fn summarize_probes<'a>(probes: impl IntoIterator<Item = &'a SearchProbeResult>) -> Vec<EngineSummary> {
    #[derive(Default)]
    struct Acc {
        probes: usize,
        days: BTreeSet<NaiveDate>,
        exact: usize,
        heuristic: usize,
    }
    let mut by_engine: BTreeMap<SearchEngine, Acc> = BTreeMap::new();
    for p in probes {
        let acc = by_engine.entry(p.engine).or_default();
        acc.probes += 1;
        acc.days.insert(p.probed_at.date_naive());
        for hit in &p.rank_hits {
            match hit.match_kind {
                MatchKind::ExactUrl => acc.exact += 1,
                MatchKind::CrossLinkHeuristic => acc.heuristic += 1,
            }
        }
    }
    by_engine
        .into_iter()
        .map(|(engine, acc)| {
            let days = acc.days.len();
            EngineSummary {
                engine,
                probes: acc.probes,
                days,
                exact_total: acc.exact,
                heuristic_total: acc.heuristic,
                exact_daily_avg: acc.exact as f64 / days as f64,
                heuristic_daily_avg: acc.heuristic as f64 / days as f64,
            }
        })
        .collect()
}
