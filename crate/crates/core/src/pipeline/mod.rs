//! Stage-by-stage orchestration. Each command reads cached intermediates
//! from the work directory, writes versioned JSONL, and appends one run
//! manifest line.

mod config;
mod ingest;
mod jsonl;
mod network;
mod report;
mod stages;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    ApiConfig, ClientsConfig, DbscanConfig, IngestConfig, PathsConfig, PipelineConfig, SamplerConfig, MALPDF_TAGS,
};
pub use ingest::{CorpusRecord, DocumentMeta, ParseStatus};
pub use jsonl::{append_jsonl, read_jsonl, schema, write_jsonl, JsonlHeader, Schema, SCHEMAS};
pub use network::{CandidateRow, DirectoryEntryRow, ReputationRow, SamplingRow};
pub use report::REPORT_FILES;
pub use stages::{AnalyzeInputs, DedupRow, PageScope, PhashRow, TimelineRow, UrlRecord, ValidationRow};

use crate::analytics::AnalyticsError;
use crate::intel::IntelError;
use crate::visual::VisualError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {reason}")]
    Decode { path: String, line: usize, reason: String },
    #[error("{path}: expected schema {expected}, found {found}")]
    SchemaMismatch { path: String, expected: String, found: String },
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Intel(#[from] IntelError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One invocation's record, appended to `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seed: u64,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub inputs: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub warnings: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const RUN_MANIFEST_FILE: &str = "runs.jsonl";

/// Counters a stage fills in for its manifest.
#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub inputs: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    pub warnings: BTreeMap<String, u64>,
}

impl StageReport {
    pub fn input(&mut self, name: &str, n: usize) {
        *self.inputs.entry(name.to_string()).or_default() += n as u64;
    }

    pub fn count(&mut self, name: &str, n: usize) {
        *self.counts.entry(name.to_string()).or_default() += n as u64;
    }

    pub fn warn(&mut self, name: &str) {
        *self.warnings.entry(name.to_string()).or_default() += 1;
    }

    pub fn output(&mut self, file: &str) {
        self.outputs.push(file.to_string());
    }
}

/// Everything a command needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    /// Timestamp recorded on probes and snapshots.
    pub now: DateTime<Utc>,
}

impl Context {
    pub fn new(config: PipelineConfig, out_dir: PathBuf) -> Self {
        Context {
            config,
            out_dir,
            now: Utc::now(),
        }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Ingest { input: PathBuf, sidecar: Option<PathBuf> },
    ExtractUrls { pages: PageScope },
    ProfileSeo,
    Dedup { input: PathBuf },
    Cluster { embeddings: Option<PathBuf>, merge_map: Option<PathBuf> },
    Analyze(AnalyzeInputs),
    SampleTimeline,
    PlanSampling,
    LookupReputation,
    ProbeSearch { fetch_and_check: bool },
    MonitorDirs { index_list: Option<PathBuf> },
    MatchBlocklist { requests: PathBuf, lists: PathBuf },
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::ExtractUrls { .. } => "extract-urls",
            Command::ProfileSeo => "profile-seo",
            Command::Dedup { .. } => "dedup",
            Command::Cluster { .. } => "cluster",
            Command::Analyze(_) => "analyze",
            Command::SampleTimeline => "sample-timeline",
            Command::PlanSampling => "plan-sampling",
            Command::LookupReputation => "lookup-reputation",
            Command::ProbeSearch { .. } => "probe-search",
            Command::MonitorDirs { .. } => "monitor-dirs",
            Command::MatchBlocklist { .. } => "match-blocklist",
            Command::Report => "report",
        }
    }
}

/// Runs one command and appends its manifest, whether or not it succeeded.
pub fn run(ctx: &Context, command: &Command) -> Result<RunManifest, PipelineError> {
    std::fs::create_dir_all(&ctx.out_dir).map_err(|e| PipelineError::io(&ctx.out_dir, e))?;
    let started_at = Utc::now();
    let mut report = StageReport::default();
    let result = match command {
        Command::Ingest { input, sidecar } => ingest::run(ctx, input, sidecar.as_deref(), &mut report),
        Command::ExtractUrls { pages } => stages::extract_urls(ctx, *pages, &mut report),
        Command::ProfileSeo => stages::profile_seo(ctx, &mut report),
        Command::Dedup { input } => stages::dedup(ctx, input, &mut report),
        Command::Cluster { embeddings, merge_map } => {
            stages::cluster(ctx, embeddings.as_deref(), merge_map.as_deref(), &mut report)
        }
        Command::Analyze(inputs) => stages::analyze(ctx, inputs, &mut report),
        Command::SampleTimeline => stages::sample_timeline(ctx, &mut report),
        Command::PlanSampling => network::plan_sampling(ctx, &mut report),
        Command::LookupReputation => network::lookup_reputation(ctx, &mut report),
        Command::ProbeSearch { fetch_and_check } => network::probe_search(ctx, *fetch_and_check, &mut report),
        Command::MonitorDirs { index_list } => network::monitor_dirs(ctx, index_list.as_deref(), &mut report),
        Command::MatchBlocklist { requests, lists } => network::match_blocklist(ctx, requests, lists, &mut report),
        Command::Report => report::run(ctx, &mut report),
    };
    let manifest = RunManifest {
        schema: "baitline.run_manifest".into(),
        version: 1,
        command: command.name().into(),
        config_hash: ctx.config.hash(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: ctx.seed(),
        started_at,
        finished_at: Utc::now(),
        inputs: report.inputs,
        outputs: report.outputs,
        counts: report.counts,
        warnings: report.warnings,
        error: result.as_ref().err().map(ToString::to_string),
    };
    let path = ctx.path(RUN_MANIFEST_FILE);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| PipelineError::io(&path, e))?;
    let line = serde_json::to_string(&manifest).expect("manifest serializes");
    writeln!(file, "{line}").map_err(|e| PipelineError::io(&path, e))?;
    result.map(|()| manifest)
}
