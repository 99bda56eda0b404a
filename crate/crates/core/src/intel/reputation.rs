use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::transport::{HttpRequest, Transport};
use super::IntelError;

pub const VIRUSTOTAL_ENDPOINT: &str = "https://www.virustotal.com/api/v3";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReputationStatus {
    Unknown,
    Benign,
    Malicious,
}

impl ReputationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ReputationStatus::Unknown => "unknown",
            ReputationStatus::Benign => "benign",
            ReputationStatus::Malicious => "malicious",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineVotes {
    pub malicious: u64,
    pub suspicious: u64,
    pub harmless: u64,
    pub undetected: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationReport {
    pub url: String,
    pub status: ReputationStatus,
    pub votes: Option<EngineVotes>,
}

/// URL-report client for the VirusTotal v3 API.
pub struct ReputationClient<T> {
    transport: T,
    endpoint: String,
    api_key: String,
    max_retries: u32,
    backoff: Duration,
}

impl<T: Transport> ReputationClient<T> {
    pub fn new(transport: T, api_key: impl Into<String>) -> Self {
        ReputationClient {
            transport,
            endpoint: VIRUSTOTAL_ENDPOINT.to_string(),
            api_key: api_key.into(),
            max_retries: 3,
            backoff: Duration::from_secs(15),
        }
    }

    pub fn with_endpoint(mut self, endpoint: &str) -> Self {
        self.endpoint = endpoint.trim_end_matches('/').to_string();
        self
    }

    /// Retries after HTTP 429, sleeping `backoff * 2^attempt` between tries.
    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    pub fn request_for(&self, url: &str) -> HttpRequest {
        let id = URL_SAFE_NO_PAD.encode(url.as_bytes());
        HttpRequest::get(format!("{}/urls/{id}", self.endpoint)).secret_header("x-apikey", &self.api_key)
    }
}

#[derive(Deserialize)]
struct VtEnvelope {
    data: VtData,
}

#[derive(Deserialize)]
struct VtData {
    attributes: VtAttributes,
}

#[derive(Deserialize)]
struct VtAttributes {
    #[serde(default)]
    last_analysis_stats: Option<EngineVotes>,
}

/// Tri-state verdict: no report is unknown, one or more malicious votes is
/// malicious, anything else is benign.
pub fn lookup_reputation<T: Transport>(url: &str, client: &ReputationClient<T>) -> Result<ReputationReport, IntelError> {
    let request = client.request_for(url);
    let mut attempt = 0;
    let response = loop {
        let response = client.transport.execute(&request)?;
        if response.status != 429 {
            break response;
        }
        if attempt >= client.max_retries {
            return Err(IntelError::RateLimited { attempts: attempt + 1 });
        }
        std::thread::sleep(client.backoff * 2u32.saturating_pow(attempt));
        attempt += 1;
    };
    match response.status {
        404 => Ok(ReputationReport {
            url: url.to_string(),
            status: ReputationStatus::Unknown,
            votes: None,
        }),
        401 | 403 => Err(IntelError::Auth(response.status)),
        s if (200..300).contains(&s) => {
            let envelope: VtEnvelope = serde_json::from_slice(&response.body)
                .map_err(|e| IntelError::Decode(format!("reputation for {url}: {e}")))?;
            let votes = envelope.data.attributes.last_analysis_stats;
            let status = match &votes {
                None => ReputationStatus::Unknown,
                Some(v) if v.malicious >= 1 => ReputationStatus::Malicious,
                Some(_) => ReputationStatus::Benign,
            };
            Ok(ReputationReport {
                url: url.to_string(),
                status,
                votes,
            })
        }
        s => Err(IntelError::Transport(format!("reputation for {url}: HTTP {s}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReputationSummary {
    pub total: usize,
    pub unknown: usize,
    pub benign: usize,
    pub malicious: usize,
}

impl ReputationSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a ReputationReport>) -> Self {
        let mut s = ReputationSummary::default();
        for r in reports {
            s.total += 1;
            match r.status {
                ReputationStatus::Unknown => s.unknown += 1,
                ReputationStatus::Benign => s.benign += 1,
                ReputationStatus::Malicious => s.malicious += 1,
            }
        }
        s
    }

    /// Percentages of (unknown, benign, malicious).
    pub fn percentages(&self) -> (f64, f64, f64) {
        if self.total == 0 {
            return (0.0, 0.0, 0.0);
        }
        let pct = |n: usize| 100.0 * n as f64 / self.total as f64;
        (pct(self.unknown), pct(self.benign), pct(self.malicious))
    }
}
