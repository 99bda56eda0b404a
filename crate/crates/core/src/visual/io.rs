//! Render and embedding inputs.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use image::GrayImage;
use serde::Deserialize;

use super::{FeatureVector, VisualError};

fn input_error(path: &Path, reason: impl ToString) -> VisualError {
    VisualError::Input {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Loads a PNG or binary PPM render as 8-bit grayscale.
pub fn load_gray(path: &Path) -> Result<GrayImage, VisualError> {
    let img = image::ImageReader::open(path)
        .map_err(|e| input_error(path, e))?
        .with_guessed_format()
        .map_err(|e| input_error(path, e))?
        .decode()
        .map_err(|e| input_error(path, e))?;
    Ok(img.to_luma8())
}

/// `<sha256>.png` / `<sha256>.ppm` files in `dir`, sorted by sha256.
pub fn list_renders(dir: &Path) -> Result<Vec<(String, PathBuf)>, VisualError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| input_error(dir, e))? {
        let path = entry.map_err(|e| input_error(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "ppm")) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_ascii_lowercase(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Deserialize)]
struct JsonEmbedding {
    sha256: String,
    values: Vec<f64>,
}

/// Reads `<sha256>, v1..vd` rows from CSV (optional header) or
/// `{"sha256": .., "values": [..]}` lines from JSONL.
pub fn read_embeddings(path: &Path) -> Result<Vec<FeatureVector>, VisualError> {
    let is_jsonl = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json"));
    if is_jsonl {
        let reader = BufReader::new(File::open(path).map_err(|e| input_error(path, e))?);
        let mut out = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| input_error(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonEmbedding =
                serde_json::from_str(&line).map_err(|e| input_error(path, format!("line {}: {e}", n + 1)))?;
            out.push(FeatureVector {
                sha256: row.sha256,
                values: row.values,
            });
        }
        return Ok(out);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_error(path, e))?;
    let mut out = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_error(path, e))?;
        let Some(sha) = record.get(0).filter(|s| !s.is_empty()) else {
            continue;
        };
        let values: Result<Vec<f64>, _> = record.iter().skip(1).map(str::parse::<f64>).collect();
        match values {
            Ok(values) => out.push(FeatureVector {
                sha256: sha.to_string(),
                values,
            }),
            Err(_) if n == 0 => continue,
            Err(e) => return Err(input_error(path, format!("row {}: {e}", n + 1))),
        }
    }
    Ok(out)
}
