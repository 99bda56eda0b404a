use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::jsonl::{schema, write_jsonl};
use super::{Context, PipelineError, StageReport};
use crate::analytics::{LanguageLabel, Provider};
use crate::bait::PageIndex;
use crate::pdf::{normalize, parse_document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseStatus {
    Ok,
    ParseFailed,
    ReadFailed,
}

/// Feed metadata for one document, as supplied in the ingest sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocumentMeta {
    /// Key of the sidecar row; corpus records carry it at the top level.
    #[serde(default, skip_serializing)]
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_seen: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<Provider>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<LanguageLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub sha256: String,
    pub path: PathBuf,
    pub size: u64,
    pub status: ParseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub meta: DocumentMeta,
}

/// Reads a sidecar: JSONL rows, a JSON array of rows, or a JSON object
/// mapping sha256 to a tag list.
pub(crate) fn read_sidecar(path: &Path) -> Result<BTreeMap<String, DocumentMeta>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let decode = |line: usize, e: serde_json::Error| PipelineError::Decode {
        path: path.display().to_string(),
        line,
        reason: e.to_string(),
    };
    let rows: Vec<DocumentMeta> = if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| decode(1, e))?;
        if value.is_object() {
            let map: BTreeMap<String, Vec<String>> = serde_json::from_value(value).map_err(|e| decode(1, e))?;
            map.into_iter()
                .map(|(sha256, tags)| DocumentMeta {
                    sha256,
                    tags,
                    ..DocumentMeta::default()
                })
                .collect()
        } else {
            serde_json::from_value(value).map_err(|e| decode(1, e))?
        }
    } else {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                rows.push(serde_json::from_str(line).map_err(|e| decode(i + 1, e))?);
            }
        }
        rows
    };
    Ok(rows
        .into_iter()
        .map(|mut m| {
            m.sha256 = m.sha256.to_ascii_lowercase();
            (m.sha256.clone(), m)
        })
        .collect())
}

fn inspect(bytes: &[u8]) -> Result<(usize, Vec<String>), String> {
    catch_unwind(AssertUnwindSafe(|| {
        let graph = normalize(parse_document(bytes).map_err(|e| e.to_string())?);
        Ok((PageIndex::build(&graph).page_count(), graph.parse_warnings.clone()))
    }))
    .unwrap_or_else(|_| Err("parser panicked".into()))
}

pub(crate) fn run(ctx: &Context, input: &Path, sidecar: Option<&Path>, report: &mut StageReport) -> Result<(), PipelineError> {
    if !input.is_dir() {
        return Err(PipelineError::MissingInput(input.display().to_string()));
    }
    let sidecar = sidecar.or(ctx.config.paths.sidecar.as_deref());
    let meta = match sidecar {
        Some(p) => read_sidecar(p)?,
        None => BTreeMap::new(),
    };
    report.input("sidecar_rows", meta.len());

    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(input)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && !e.file_name().to_string_lossy().starts_with('.'))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    report.input("files", files.len());

    let pool = ctx.pool()?;
    let scanned: Vec<(PathBuf, Result<Vec<u8>, String>)> = pool.install(|| {
        files
            .into_par_iter()
            .map(|p| {
                let bytes = std::fs::read(&p).map_err(|e| e.to_string());
                (p, bytes)
            })
            .collect()
    });

    let mut seen = BTreeSet::new();
    let mut pending = Vec::new();
    let mut records = Vec::new();
    for (path, bytes) in scanned {
        let bytes = match bytes {
            Ok(b) => b,
            Err(e) => {
                log::warn!("cannot read {}: {e}", path.display());
                report.count("read_failed", 1);
                records.push(CorpusRecord {
                    sha256: String::new(),
                    path,
                    size: 0,
                    status: ParseStatus::ReadFailed,
                    page_count: None,
                    warnings: Vec::new(),
                    error: Some(e),
                    meta: DocumentMeta::default(),
                });
                continue;
            }
        };
        let sha = hex::encode(Sha256::digest(&bytes));
        if !seen.insert(sha.clone()) {
            report.count("duplicates", 1);
            continue;
        }
        let doc_meta = meta.get(&sha).cloned().unwrap_or_else(|| DocumentMeta {
            sha256: sha.clone(),
            ..DocumentMeta::default()
        });
        if doc_meta.tags.iter().any(|t| ctx.config.ingest.is_excluded(t)) {
            report.count("excluded_malpdf", 1);
            continue;
        }
        pending.push((path, sha, bytes, doc_meta));
    }

    let parsed: Vec<CorpusRecord> = pool.install(|| {
        pending
            .into_par_iter()
            .map(|(path, sha256, bytes, meta)| {
                let (status, page_count, warnings, error) = match inspect(&bytes) {
                    Ok((pages, warnings)) => (ParseStatus::Ok, Some(pages), warnings, None),
                    Err(e) => (ParseStatus::ParseFailed, None, Vec::new(), Some(e)),
                };
                CorpusRecord {
                    sha256,
                    path,
                    size: bytes.len() as u64,
                    status,
                    page_count,
                    warnings,
                    error,
                    meta,
                }
            })
            .collect()
    });
    for r in &parsed {
        match r.status {
            ParseStatus::Ok => report.count("parsed", 1),
            _ => {
                log::warn!("{}: {}", r.path.display(), r.error.as_deref().unwrap_or("parse failed"));
                report.count("parse_failed", 1);
            }
        }
        for w in &r.warnings {
            report.warn(w.split_whitespace().next().unwrap_or(w));
        }
    }
    records.extend(parsed);
    records.sort_by(|a, b| a.sha256.cmp(&b.sha256).then_with(|| a.path.cmp(&b.path)));
    report.count("documents", records.len());
    write_jsonl(&ctx.path(schema::CORPUS.file), schema::CORPUS, ctx.seed(), &records)?;
    report.output(schema::CORPUS.file);
    Ok(())
}
