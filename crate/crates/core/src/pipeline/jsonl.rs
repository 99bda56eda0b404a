use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schema {
    pub name: &'static str,
    pub version: u32,
    pub file: &'static str,
}

impl Schema {
    const fn new(name: &'static str, file: &'static str) -> Self {
        Schema { name, version: 1, file }
    }
}

pub mod schema {
    use super::Schema;

    pub const CORPUS: Schema = Schema::new("baitline.corpus", "corpus.jsonl");
    pub const URLS: Schema = Schema::new("baitline.urls", "urls.jsonl");
    pub const SEO: Schema = Schema::new("baitline.seo", "seo.jsonl");
    pub const PHASH: Schema = Schema::new("baitline.phash", "phash.jsonl");
    pub const DEDUP: Schema = Schema::new("baitline.dedup", "dedup.jsonl");
    pub const CLUSTERS: Schema = Schema::new("baitline.clusters", "clusters.jsonl");
    pub const VALIDATION: Schema = Schema::new("baitline.validation_sample", "validation_sample.jsonl");
    pub const CAMPAIGNS: Schema = Schema::new("baitline.campaigns", "campaigns.jsonl");
    pub const ATTACHMENTS: Schema = Schema::new("baitline.attachments", "attachments.jsonl");
    pub const LANGUAGES: Schema = Schema::new("baitline.languages", "languages.jsonl");
    pub const SCORE_TIMELINE: Schema = Schema::new("baitline.score_timeline", "score_timeline.jsonl");
    pub const TIMELINE: Schema = Schema::new("baitline.timeline_selection", "timeline_selection.jsonl");
    pub const SAMPLING_PLAN: Schema = Schema::new("baitline.sampling_plan", "sampling_plan.jsonl");
    pub const REPUTATION: Schema = Schema::new("baitline.reputation", "reputation.jsonl");
    pub const PROBES: Schema = Schema::new("baitline.probes", "probes.jsonl");
    pub const CANDIDATES: Schema = Schema::new("baitline.directory_candidates", "candidates.jsonl");
    pub const SNAPSHOTS: Schema = Schema::new("baitline.snapshots", "snapshots.jsonl");
    pub const DIRECTORY_ENTRIES: Schema = Schema::new("baitline.directory_entries", "directory_entries.jsonl");
    pub const BLOCKLIST: Schema = Schema::new("baitline.blocklist_matches", "blocklist_matches.jsonl");
}

pub const SCHEMAS: [Schema; 19] = [
    schema::CORPUS,
    schema::URLS,
    schema::SEO,
    schema::PHASH,
    schema::DEDUP,
    schema::CLUSTERS,
    schema::VALIDATION,
    schema::CAMPAIGNS,
    schema::ATTACHMENTS,
    schema::LANGUAGES,
    schema::SCORE_TIMELINE,
    schema::TIMELINE,
    schema::SAMPLING_PLAN,
    schema::REPUTATION,
    schema::PROBES,
    schema::CANDIDATES,
    schema::SNAPSHOTS,
    schema::DIRECTORY_ENTRIES,
    schema::BLOCKLIST,
];

/// First line of every JSONL output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonlHeader {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
}

fn write_lines<T: Serialize>(out: &mut impl Write, records: impl IntoIterator<Item = T>) -> std::io::Result<usize> {
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut *out, &r)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

/// Writes header + records through a temporary file renamed into place.
pub fn write_jsonl<T: Serialize>(
    path: &Path,
    schema: Schema,
    seed: u64,
    records: impl IntoIterator<Item = T>,
) -> Result<usize, PipelineError> {
    let tmp = path.with_extension("jsonl.tmp");
    let file = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let header = JsonlHeader {
        schema: schema.name.into(),
        version: schema.version,
        seed,
    };
    let n = write_lines(&mut out, std::iter::once(&header))
        .and_then(|_| write_lines(&mut out, records))
        .and_then(|n| out.flush().map(|()| n))
        .map_err(|e| PipelineError::io(&tmp, e))?;
    drop(out);
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))?;
    Ok(n)
}

fn check_header(path: &Path, line: Option<std::io::Result<String>>, schema: Schema) -> Result<JsonlHeader, PipelineError> {
    let mismatch = |found: String| PipelineError::SchemaMismatch {
        path: path.display().to_string(),
        expected: format!("{} v{}", schema.name, schema.version),
        found,
    };
    let line = line
        .ok_or_else(|| mismatch("empty file".into()))?
        .map_err(|e| PipelineError::io(path, e))?;
    let header: JsonlHeader = serde_json::from_str(&line).map_err(|_| mismatch("no header line".into()))?;
    if header.schema != schema.name || header.version != schema.version {
        return Err(mismatch(format!("{} v{}", header.schema, header.version)));
    }
    Ok(header)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, schema: Schema) -> Result<(JsonlHeader, Vec<T>), PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = check_header(path, lines.next(), schema)?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Decode {
            path: path.display().to_string(),
            line: i + 2,
            reason: e.to_string(),
        })?);
    }
    Ok((header, out))
}

/// Appends to a log, creating it with a header when absent.
pub fn append_jsonl<T: Serialize>(
    path: &Path,
    schema: Schema,
    seed: u64,
    records: impl IntoIterator<Item = T>,
) -> Result<usize, PipelineError> {
    if !path.exists() {
        return write_jsonl(path, schema, seed, records);
    }
    let first = BufReader::new(File::open(path).map_err(|e| PipelineError::io(path, e))?).lines().next();
    check_header(path, first, schema)?;
    let file = OpenOptions::new().append(true).open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let n = write_lines(&mut out, records).map_err(|e| PipelineError::io(path, e))?;
    out.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(n)
}
