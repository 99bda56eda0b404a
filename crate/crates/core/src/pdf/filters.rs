//! Stream filter chain: Flate (with PNG/TIFF predictors), ASCIIHex,
//! ASCII85 and RunLength. Image codecs are reported as unsupported.

use std::io::Read;

use flate2::read::{DeflateDecoder, ZlibDecoder};
use thiserror::Error;

use super::{Dictionary, PdfStream, PdfValue, MAX_DECODED_STREAM};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("unsupported filter {0}")]
    UnsupportedFilter(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Filter {
    Flate,
    AsciiHex,
    Ascii85,
    RunLength,
}

fn filter_from_name(name: &str) -> Result<Filter, FilterError> {
    match name {
        "FlateDecode" | "Fl" => Ok(Filter::Flate),
        "ASCIIHexDecode" | "AHx" => Ok(Filter::AsciiHex),
        "ASCII85Decode" | "A85" => Ok(Filter::Ascii85),
        "RunLengthDecode" | "RL" => Ok(Filter::RunLength),
        other => Err(FilterError::UnsupportedFilter(other.to_string())),
    }
}

/// Filter names and their (optional) decode parameters, in declaration order.
fn filter_chain(dict: &Dictionary) -> Result<Vec<(Filter, Option<&Dictionary>)>, FilterError> {
    let names: Vec<&PdfValue> = match dict.get("Filter") {
        None | Some(PdfValue::Null) => return Ok(Vec::new()),
        Some(PdfValue::Array(items)) => items.iter().collect(),
        Some(single) => vec![single],
    };
    let params: Vec<Option<&Dictionary>> = match dict.get("DecodeParms") {
        Some(PdfValue::Array(items)) => items.iter().map(PdfValue::as_dict).collect(),
        Some(PdfValue::Dictionary(d)) => vec![Some(d)],
        _ => Vec::new(),
    };
    names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let name = name.as_name().ok_or_else(|| {
                FilterError::UnsupportedFilter(format!("non-name filter ({})", name.type_name()))
            })?;
            Ok((filter_from_name(name)?, params.get(i).copied().flatten()))
        })
        .collect()
}

/// Applies the stream's filter chain in declaration order.
///
/// Partial output from a failing filter is discarded.
pub fn decode_stream(stream: &PdfStream) -> Result<Vec<u8>, FilterError> {
    let chain = filter_chain(&stream.dict)?;
    let mut data = stream.raw.clone();
    for (filter, params) in chain {
        data = match filter {
            Filter::Flate => {
                let inflated = inflate(&data)?;
                apply_predictor(inflated, params)?
            }
            Filter::AsciiHex => ascii_hex(&data)?,
            Filter::Ascii85 => ascii85(&data)?,
            Filter::RunLength => run_length(&data)?,
        };
        if data.len() > MAX_DECODED_STREAM {
            return Err(FilterError::CorruptStream("decoded size limit exceeded".into()));
        }
    }
    Ok(data)
}

fn read_capped(mut reader: impl Read) -> std::io::Result<Vec<u8>> {
    let mut out = Vec::new();
    reader
        .by_ref()
        .take(MAX_DECODED_STREAM as u64 + 1)
        .read_to_end(&mut out)?;
    Ok(out)
}

fn inflate(data: &[u8]) -> Result<Vec<u8>, FilterError> {
    let result = match read_capped(ZlibDecoder::new(data)) {
        Ok(out) => Ok(out),
        // Some producers emit raw deflate without the zlib wrapper.
        Err(zlib_err) => read_capped(DeflateDecoder::new(data)).map_err(|_| zlib_err),
    };
    let out = result.map_err(|e| FilterError::CorruptStream(format!("flate: {e}")))?;
    if out.len() > MAX_DECODED_STREAM {
        return Err(FilterError::CorruptStream("decoded size limit exceeded".into()));
    }
    Ok(out)
}

fn param_int(params: Option<&Dictionary>, key: &str, default: i64) -> i64 {
    params
        .and_then(|p| p.get(key))
        .and_then(PdfValue::as_i64)
        .unwrap_or(default)
}

fn apply_predictor(data: Vec<u8>, params: Option<&Dictionary>) -> Result<Vec<u8>, FilterError> {
    let predictor = param_int(params, "Predictor", 1);
    if predictor <= 1 {
        return Ok(data);
    }
    let colors = param_int(params, "Colors", 1).clamp(1, 32) as usize;
    let bits = param_int(params, "BitsPerComponent", 8).clamp(1, 16) as usize;
    let columns = param_int(params, "Columns", 1).clamp(1, 1 << 20) as usize;
    let bytes_per_pixel = (colors * bits).div_ceil(8).max(1);
    let row_len = (colors * bits * columns).div_ceil(8).min(data.len().max(1));
    match predictor {
        2 => tiff_predictor(data, bits, bytes_per_pixel, row_len),
        10..=15 => png_predictor(&data, bytes_per_pixel, row_len),
        other => Err(FilterError::CorruptStream(format!("unknown predictor {other}"))),
    }
}

fn tiff_predictor(
    mut data: Vec<u8>,
    bits: usize,
    bytes_per_pixel: usize,
    row_len: usize,
) -> Result<Vec<u8>, FilterError> {
    if bits != 8 {
        return Err(FilterError::CorruptStream(format!(
            "TIFF predictor with {bits} bits per component"
        )));
    }
    for row in data.chunks_mut(row_len) {
        for i in bytes_per_pixel..row.len() {
            row[i] = row[i].wrapping_add(row[i - bytes_per_pixel]);
        }
    }
    Ok(data)
}

fn png_predictor(data: &[u8], bpp: usize, row_len: usize) -> Result<Vec<u8>, FilterError> {
    let mut out = Vec::with_capacity(data.len());
    let mut previous = vec![0u8; row_len];
    for chunk in data.chunks(row_len + 1) {
        let (&kind, encoded) = chunk
            .split_first()
            .ok_or_else(|| FilterError::CorruptStream("empty predictor row".into()))?;
        let mut row = encoded.to_vec();
        row.resize(row_len, 0);
        for i in 0..row_len {
            let left = if i >= bpp { row[i - bpp] } else { 0 };
            let up = previous[i];
            let up_left = if i >= bpp { previous[i - bpp] } else { 0 };
            let predicted = match kind {
                0 => 0,
                1 => left,
                2 => up,
                3 => ((u16::from(left) + u16::from(up)) / 2) as u8,
                4 => paeth(left, up, up_left),
                other => {
                    return Err(FilterError::CorruptStream(format!(
                        "unknown PNG row filter {other}"
                    )))
                }
            };
            row[i] = row[i].wrapping_add(predicted);
        }
        out.extend_from_slice(&row[..encoded.len().min(row_len)]);
        previous = row;
    }
    Ok(out)
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = i16::from(a) + i16::from(b) - i16::from(c);
    let pa = (p - i16::from(a)).abs();
    let pb = (p - i16::from(b)).abs();
    let pc = (p - i16::from(c)).abs();
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

fn ascii_hex(data: &[u8]) -> Result<Vec<u8>, FilterError> {
    let mut out = Vec::with_capacity(data.len() / 2);
    let mut high: Option<u8> = None;
    for &b in data {
        let nibble = match b {
            b'>' => break,
            b'0'..=b'9' => b - b'0',
            b'a'..=b'f' => b - b'a' + 10,
            b'A'..=b'F' => b - b'A' + 10,
            _ if super::lexer::is_whitespace(b) => continue,
            other => {
                return Err(FilterError::CorruptStream(format!(
                    "invalid hex digit 0x{other:02x}"
                )))
            }
        };
        match high.take() {
            Some(h) => out.push((h << 4) | nibble),
            None => high = Some(nibble),
        }
    }
    if let Some(h) = high {
        out.push(h << 4);
    }
    Ok(out)
}

fn ascii85(data: &[u8]) -> Result<Vec<u8>, FilterError> {
    let body = data.strip_prefix(b"<~").unwrap_or(data);
    let mut out = Vec::with_capacity(body.len() * 4 / 5);
    let mut group = [0u8; 5];
    let mut filled = 0;
    for &b in body {
        match b {
            b'~' => break,
            b'z' if filled == 0 => out.extend_from_slice(&[0; 4]),
            b'!'..=b'u' => {
                group[filled] = b - b'!';
                filled += 1;
                if filled == 5 {
                    out.extend_from_slice(&a85_group(&group)?);
                    filled = 0;
                }
            }
            _ if super::lexer::is_whitespace(b) => {}
            other => {
                return Err(FilterError::CorruptStream(format!(
                    "invalid ASCII85 byte 0x{other:02x}"
                )))
            }
        }
    }
    if filled == 1 {
        return Err(FilterError::CorruptStream("dangling ASCII85 digit".into()));
    }
    if filled > 1 {
        for slot in group.iter_mut().skip(filled) {
            *slot = b'u' - b'!';
        }
        let decoded = a85_group(&group)?;
        out.extend_from_slice(&decoded[..filled - 1]);
    }
    Ok(out)
}

fn a85_group(group: &[u8; 5]) -> Result<[u8; 4], FilterError> {
    let value = group
        .iter()
        .fold(0u64, |acc, &digit| acc * 85 + u64::from(digit));
    u32::try_from(value)
        .map(u32::to_be_bytes)
        .map_err(|_| FilterError::CorruptStream("ASCII85 group overflow".into()))
}

fn run_length(data: &[u8]) -> Result<Vec<u8>, FilterError> {
    let mut out = Vec::with_capacity(data.len());
    let mut i = 0;
    while i < data.len() {
        let length = data[i];
        i += 1;
        match length {
            128 => break,
            0..=127 => {
                let n = usize::from(length) + 1;
                let literal = data
                    .get(i..i + n)
                    .ok_or_else(|| FilterError::CorruptStream("truncated run-length literal".into()))?;
                out.extend_from_slice(literal);
                i += n;
            }
            _ => {
                let byte = *data
                    .get(i)
                    .ok_or_else(|| FilterError::CorruptStream("truncated run-length repeat".into()))?;
                out.extend(std::iter::repeat_n(byte, 257 - usize::from(length)));
                i += 1;
            }
        }
    }
    Ok(out)
}
