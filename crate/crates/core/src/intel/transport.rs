//! Record/replay HTTP layer. Every client in this module talks through
//! [`Transport`], so tests run entirely from replay logs.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::IntelError;

/// A GET request whose secrets (API keys) are kept apart from the part
/// that is hashed and logged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    secret_query: Vec<(String, String)>,
    secret_headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            url: url.into(),
            headers: Vec::new(),
            secret_query: Vec::new(),
            secret_headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.to_string()));
        self
    }

    pub fn secret_query(mut self, name: &str, value: &str) -> Self {
        self.secret_query.push((name.to_string(), value.to_string()));
        self
    }

    pub fn secret_header(mut self, name: &str, value: &str) -> Self {
        self.secret_headers.push((name.to_ascii_lowercase(), value.to_string()));
        self
    }

    /// Stable key for replay lookup. Secrets are excluded, so logs recorded
    /// with one key replay under any other.
    pub fn fingerprint(&self) -> String {
        let mut headers = self.headers.clone();
        headers.sort();
        let mut h = Sha256::new();
        h.update(b"GET\n");
        h.update(self.url.as_bytes());
        for (k, v) in &headers {
            h.update(b"\n");
            h.update(k.as_bytes());
            h.update(b":");
            h.update(v.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// The URL actually sent on the wire, secrets included.
    pub fn wire_url(&self) -> Result<Url, IntelError> {
        let mut url = Url::parse(&self.url).map_err(|e| IntelError::InvalidUrl(format!("{}: {e}", self.url)))?;
        if !self.secret_query.is_empty() {
            let mut pairs = url.query_pairs_mut();
            for (k, v) in &self.secret_query {
                pairs.append_pair(k, v);
            }
        }
        Ok(url)
    }

    pub fn wire_headers(&self) -> impl Iterator<Item = &(String, String)> {
        self.headers.iter().chain(&self.secret_headers)
    }

    pub fn host(&self) -> String {
        Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(str::to_ascii_lowercase))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, content_type: Option<&str>, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            content_type: content_type.map(str::to_string),
            body: body.into(),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub trait Transport: Send + Sync {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        (**self).execute(request)
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        (**self).execute(request)
    }
}

/// One line of a replay log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request_hash: String,
    pub url: String,
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_type: Option<String>,
    /// Base64 body; absent when the body was redacted at record time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_sha256: Option<String>,
}

impl ReplayEntry {
    pub fn new(request: &HttpRequest, response: &HttpResponse) -> Self {
        ReplayEntry {
            request_hash: request.fingerprint(),
            url: request.url.clone(),
            status: response.status,
            content_type: response.content_type.clone(),
            body_b64: Some(STANDARD.encode(&response.body)),
            body_sha256: None,
        }
    }

    fn redacted(request: &HttpRequest, response: &HttpResponse) -> Self {
        ReplayEntry {
            body_b64: None,
            body_sha256: Some(hex::encode(Sha256::digest(&response.body))),
            ..ReplayEntry::new(request, &HttpResponse::new(response.status, response.content_type.as_deref(), []))
        }
    }
}

/// Immutable transport serving recorded responses keyed by request hash.
/// The first entry for a hash wins.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    entries: HashMap<String, ReplayEntry>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry(e.request_hash.clone()).or_insert(e);
        }
        ReplayTransport { entries: map }
    }

    /// Convenience for fixtures: `(request, response)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a HttpRequest, &'a HttpResponse)>) -> Self {
        Self::from_entries(pairs.into_iter().map(|(q, r)| ReplayEntry::new(q, r)))
    }

    pub fn load(path: &Path) -> Result<Self, IntelError> {
        let file = File::open(path).map_err(|e| IntelError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| IntelError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)
                .map_err(|e| IntelError::Decode(format!("{} line {}: {e}", path.display(), n + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        let entry = self
            .entries
            .get(&request.fingerprint())
            .ok_or_else(|| IntelError::ReplayMiss(request.url.clone()))?;
        let body = match &entry.body_b64 {
            Some(b64) => STANDARD
                .decode(b64)
                .map_err(|e| IntelError::Decode(format!("replay body for {}: {e}", entry.url)))?,
            None => return Err(IntelError::Transport(format!("{}: body was redacted at record time", entry.url))),
        };
        Ok(HttpResponse {
            status: entry.status,
            content_type: entry.content_type.clone(),
            body,
        })
    }
}

/// Live HTTP via `ureq`. Non-2xx statuses are returned, not raised.
pub struct UreqTransport {
    agent: ureq::Agent,
    max_body: u64,
}

impl UreqTransport {
    pub fn new(timeout: Duration, max_body: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .user_agent(concat!("baitline/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        UreqTransport { agent, max_body }
    }
}

impl Transport for UreqTransport {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        let url = request.wire_url()?;
        let mut call = self.agent.get(url.as_str());
        for (k, v) in request.wire_headers() {
            call = call.header(k.as_str(), v.as_str());
        }
        let mut response = call.call().map_err(|e| IntelError::Transport(format!("{}: {e}", request.url)))?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response
            .body_mut()
            .with_config()
            .limit(self.max_body)
            .read_to_vec()
            .map_err(|e| IntelError::Transport(format!("{}: {e}", request.url)))?;
        Ok(HttpResponse {
            status,
            content_type,
            body,
        })
    }
}

/// Appends every exchange to a replay log through a single serialized
/// writer. Responses matching `redact` are logged without their body.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<File>,
    redact: fn(&HttpResponse) -> bool,
}

/// Redaction predicate that drops PDF payloads from replay logs.
pub fn redact_pdf_bodies(response: &HttpResponse) -> bool {
    response.body.starts_with(b"%PDF")
        || response
            .content_type
            .as_deref()
            .is_some_and(|c| c.to_ascii_lowercase().contains("application/pdf"))
}

impl<T: Transport> RecordingTransport<T> {
    pub fn create(inner: T, path: &Path) -> Result<Self, IntelError> {
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| IntelError::Io(format!("{}: {e}", path.display())))?;
        Ok(RecordingTransport {
            inner,
            log: Mutex::new(log),
            redact: |_| false,
        })
    }

    pub fn with_redaction(mut self, redact: fn(&HttpResponse) -> bool) -> Self {
        self.redact = redact;
        self
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        let response = self.inner.execute(request)?;
        let entry = if (self.redact)(&response) {
            ReplayEntry::redacted(request, &response)
        } else {
            ReplayEntry::new(request, &response)
        };
        let line = serde_json::to_string(&entry).map_err(|e| IntelError::Decode(e.to_string()))?;
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(log, "{line}").map_err(|e| IntelError::Io(e.to_string()))?;
        Ok(response)
    }
}

/// Serializes requests per host with a minimum spacing; distinct hosts
/// proceed concurrently.
pub struct PoliteTransport<T> {
    inner: T,
    interval: Duration,
    hosts: Mutex<HashMap<String, Arc<Mutex<Option<Instant>>>>>,
}

impl<T: Transport> PoliteTransport<T> {
    pub fn new(inner: T, interval: Duration) -> Self {
        PoliteTransport {
            inner,
            interval,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    /// One request per second per host.
    pub fn per_second(inner: T) -> Self {
        Self::new(inner, Duration::from_secs(1))
    }
}

impl<T: Transport> Transport for PoliteTransport<T> {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        let slot = {
            let mut hosts = self.hosts.lock().unwrap_or_else(|e| e.into_inner());
            Arc::clone(hosts.entry(request.host()).or_default())
        };
        let mut last = slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let ready = prev + self.interval;
            let now = Instant::now();
            if ready > now {
                std::thread::sleep(ready - now);
            }
        }
        let result = self.inner.execute(request);
        *last = Some(Instant::now());
        result
    }
}
