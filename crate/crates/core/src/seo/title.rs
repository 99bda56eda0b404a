use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SeoError;
use crate::pdf::{ObjectGraph, PdfValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TitleSource {
    InfoDictionary,
    XmpMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleQuery {
    pub sha256: String,
    pub title: String,
    pub source: TitleSource,
}

/// PDFDocEncoding code points 0x18..=0x1F.
const PDFDOC_18: [char; 8] = ['\u{02D8}', '\u{02C7}', '\u{02C6}', '\u{02D9}', '\u{02DD}', '\u{02DB}', '\u{02DA}', '\u{02DC}'];

/// PDFDocEncoding code points 0x80..=0xA0 (0x9F is undefined).
const PDFDOC_80: [char; 33] = [
    '\u{2022}', '\u{2020}', '\u{2021}', '\u{2026}', '\u{2014}', '\u{2013}', '\u{0192}', '\u{2044}',
    '\u{2039}', '\u{203A}', '\u{2212}', '\u{2030}', '\u{201E}', '\u{201C}', '\u{201D}', '\u{2018}',
    '\u{2019}', '\u{201A}', '\u{2122}', '\u{FB01}', '\u{FB02}', '\u{0141}', '\u{0152}', '\u{0160}',
    '\u{0178}', '\u{017D}', '\u{0131}', '\u{0142}', '\u{0153}', '\u{0161}', '\u{017E}', '\u{FFFD}',
    '\u{20AC}',
];

/// Decodes a PDF text string: UTF-16BE or UTF-8 when a byte-order mark is
/// present, PDFDocEncoding otherwise.
pub fn decode_text_string(bytes: &[u8]) -> Result<String, SeoError> {
    if let Some(rest) = bytes.strip_prefix(&[0xFE, 0xFF]) {
        if rest.len() % 2 != 0 {
            return Err(SeoError::MalformedTitleString("odd UTF-16 length".into()));
        }
        let units: Vec<u16> = rest.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        return String::from_utf16(&units)
            .map_err(|_| SeoError::MalformedTitleString("unpaired UTF-16 surrogate".into()));
    }
    if let Some(rest) = bytes.strip_prefix(&[0xEF, 0xBB, 0xBF]) {
        return String::from_utf8(rest.to_vec())
            .map_err(|_| SeoError::MalformedTitleString("invalid UTF-8".into()));
    }
    Ok(bytes
        .iter()
        .map(|&b| match b {
            0x18..=0x1F => PDFDOC_18[(b - 0x18) as usize],
            0x80..=0xA0 => PDFDOC_80[(b - 0x80) as usize],
            _ => char::from(b),
        })
        .collect())
}

/// Drops control characters (whitespace controls become spaces) and
/// collapses whitespace runs.
pub fn clean_title(raw: &str) -> String {
    let spaced: String = raw
        .chars()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Reads trailer Info Title, then the Catalog's XMP `dc:title`.
///
/// A malformed Info title falls through to XMP; the error is returned only
/// when no usable title is found.
pub fn extract_title(graph: &ObjectGraph, sha256: &str) -> Result<Option<TitleQuery>, SeoError> {
    let query = |title: String, source| {
        Some(TitleQuery {
            sha256: sha256.to_string(),
            title,
            source,
        })
    };
    let mut failure = None;
    let info_title = graph
        .lookup_dict(&graph.trailer, "Info")
        .and_then(|info| graph.lookup(info, "Title"))
        .and_then(PdfValue::as_bytes);
    if let Some(bytes) = info_title {
        match decode_text_string(bytes).map(|t| clean_title(&t)) {
            Ok(title) if !title.is_empty() => return Ok(query(title, TitleSource::InfoDictionary)),
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    }
    let xmp = graph
        .catalog()
        .and_then(|c| graph.lookup(c, "Metadata"))
        .and_then(|m| match m {
            PdfValue::Stream(s) => Some(s.content()),
            _ => None,
        });
    if let Some(packet) = xmp {
        match xmp_title(packet) {
            Ok(Some(title)) => return Ok(query(title, TitleSource::XmpMetadata)),
            Ok(None) => {}
            Err(e) => failure = failure.or(Some(e)),
        }
    }
    failure.map_or(Ok(None), Err)
}

fn xmp_title(packet: &[u8]) -> Result<Option<String>, SeoError> {
    static TITLE: OnceLock<Regex> = OnceLock::new();
    static ITEM: OnceLock<Regex> = OnceLock::new();
    let title_re = TITLE.get_or_init(|| Regex::new(r"(?s)<dc:title(?:\s[^>]*)?>(.*?)</dc:title>").unwrap());
    let item_re = ITEM.get_or_init(|| Regex::new(r"(?s)<rdf:li(\s[^>]*)?>(.*?)</rdf:li>").unwrap());

    let text = std::str::from_utf8(packet)
        .map_err(|_| SeoError::MalformedTitleString("XMP packet is not UTF-8".into()))?;
    let Some(block) = title_re.captures(text).map(|c| c.get(1).map_or("", |m| m.as_str())) else {
        return Ok(None);
    };
    let items: Vec<(bool, &str)> = item_re
        .captures_iter(block)
        .map(|c| {
            let attrs = c.get(1).map_or("", |m| m.as_str());
            (attrs.contains("x-default"), c.get(2).map_or("", |m| m.as_str()))
        })
        .collect();
    let raw = items
        .iter()
        .find(|(default, _)| *default)
        .or_else(|| items.first())
        .map_or(block, |(_, t)| t);
    let title = clean_title(&unescape_xml(raw));
    Ok((!title.is_empty()).then_some(title))
}

fn unescape_xml(text: &str) -> String {
    static ENTITY: OnceLock<Regex> = OnceLock::new();
    let re = ENTITY.get_or_init(|| Regex::new(r"&(#x[0-9a-fA-F]+|#[0-9]+|amp|lt|gt|quot|apos);").unwrap());
    re.replace_all(text, |c: &regex::Captures<'_>| {
        let entity = &c[1];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            _ if entity.starts_with("#x") => u32::from_str_radix(&entity[2..], 16).ok().and_then(char::from_u32),
            _ => entity[1..].parse().ok().and_then(char::from_u32),
        };
        decoded.map_or_else(|| c[0].to_string(), String::from)
    })
    .into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdfdoc_special_bytes() {
        assert_eq!(decode_text_string(b"caf\xE9 \x8Dq\x8E \x80\x93").unwrap(), "caf\u{e9} \u{201C}q\u{201D} \u{2022}\u{FB01}");
    }

    #[test]
    fn utf16_with_bom() {
        let mut bytes = vec![0xFE, 0xFF];
        for u in "Ünïcode ✓".encode_utf16() {
            bytes.extend_from_slice(&u.to_be_bytes());
        }
        assert_eq!(decode_text_string(&bytes).unwrap(), "Ünïcode ✓");
        assert!(decode_text_string(&[0xFE, 0xFF, 0x00]).is_err());
        assert!(decode_text_string(&[0xFE, 0xFF, 0xD8, 0x00]).is_err());
    }

    #[test]
    fn cleaning_collapses_whitespace_and_controls() {
        assert_eq!(clean_title("  a\t\tb\n c\u{7}d  "), "a b cd");
    }

    #[test]
    fn xmp_prefers_default_language() {
        let xmp = br#"<x:xmpmeta><dc:title><rdf:Alt><rdf:li xml:lang="de">Titel</rdf:li><rdf:li xml:lang="x-default">Tom &amp; Jerry &#x263A;</rdf:li></rdf:Alt></dc:title></x:xmpmeta>"#;
        assert_eq!(xmp_title(xmp).unwrap().as_deref(), Some("Tom & Jerry \u{263A}"));
        assert_eq!(xmp_title(b"<x:xmpmeta/>").unwrap(), None);
    }
}
