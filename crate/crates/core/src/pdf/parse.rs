use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::bytes::Regex;

use super::filters::decode_stream;
use super::lexer::Lexer;
use super::{
    Dictionary, ObjectGraph, ObjectId, PdfError, PdfStream, PdfValue, MAX_OBJECTS,
    WARN_XREF_RECOVERED,
};

/// Trailer keys carried into the graph; xref-stream plumbing is dropped so
/// both the xref path and the recovery path yield the same trailer shape.
const TRAILER_KEYS: [&str; 5] = ["Size", "Root", "Info", "ID", "Encrypt"];

#[derive(Debug, Clone, Copy)]
enum XrefEntry {
    Free,
    InUse { offset: u64, generation: u16 },
    Compressed,
}

/// Parses raw PDF bytes into an object graph.
///
/// The cross-reference chain is tried first. Any inconsistency (missing
/// `startxref`, an entry whose offset does not hold the announced object)
/// switches to a linear scan over `N G obj` headers and records the
/// `xref-recovered` warning.
pub fn parse_document(bytes: &[u8]) -> Result<ObjectGraph, PdfError> {
    if bytes.is_empty() {
        return Err(PdfError::UnparseableDocument);
    }
    let parser = DocumentParser::new(bytes);
    let mut graph = ObjectGraph::default();
    let (objects, trailer) = match parser.parse_via_xref() {
        Ok(parsed) => parsed,
        Err(reason) => {
            log::debug!("xref unusable ({reason}), scanning for objects");
            graph.warn(WARN_XREF_RECOVERED);
            parser.recover()
        }
    };
    if objects.is_empty() {
        return Err(PdfError::UnparseableDocument);
    }
    if objects.len() >= MAX_OBJECTS {
        graph.warn(format!("object-limit {MAX_OBJECTS} reached"));
    }
    graph.objects = objects;
    graph.trailer = trailer;
    graph.encryption_flag = graph.trailer.contains_key("Encrypt");
    graph.locate_catalog();
    graph.refresh_dangling_warnings();
    Ok(graph)
}

fn object_header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?-u)\b(\d{1,10})[\x00\t\n\x0c\r ]+(\d{1,5})[\x00\t\n\x0c\r ]+obj\b").unwrap())
}

fn trailer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?-u)\btrailer\b").unwrap())
}

fn endstream_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?-u)endstream").unwrap())
}

struct DocumentParser<'a> {
    data: &'a [u8],
    /// Offset of the `%PDF-` header; xref offsets may be relative to it.
    header_offset: usize,
    endstream_positions: OnceLock<Vec<usize>>,
}

impl<'a> DocumentParser<'a> {
    fn new(data: &'a [u8]) -> Self {
        let window = &data[..data.len().min(1024)];
        let header_offset = window
            .windows(5)
            .position(|w| w == b"%PDF-")
            .unwrap_or(0);
        DocumentParser {
            data,
            header_offset,
            endstream_positions: OnceLock::new(),
        }
    }

    fn next_endstream(&self, from: usize) -> Option<usize> {
        let positions = self.endstream_positions.get_or_init(|| {
            endstream_regex()
                .find_iter(self.data)
                .map(|m| m.start())
                .collect()
        });
        let idx = positions.partition_point(|&p| p < from);
        positions.get(idx).copied()
    }

    fn parse_via_xref(&self) -> Result<(BTreeMap<ObjectId, PdfValue>, Dictionary), String> {
        let startxref = find_last(self.data, b"startxref").ok_or("no startxref")?;
        let mut lexer = Lexer::new(self.data, startxref + b"startxref".len());
        let first = lexer.read_unsigned().ok_or("startxref without offset")?;

        let mut entries: BTreeMap<u32, XrefEntry> = BTreeMap::new();
        let mut trailer = Dictionary::new();
        let mut pending = vec![first];
        let mut seen = BTreeSet::new();
        while let Some(offset) = pending.pop() {
            if !seen.insert(offset) {
                continue;
            }
            if seen.len() > 4096 {
                return Err("xref chain too long".into());
            }
            let section = self.parse_xref_section(offset)?;
            for (number, entry) in section.entries {
                entries.entry(number).or_insert(entry);
            }
            for (key, value) in &section.trailer {
                if TRAILER_KEYS.contains(&key.as_str()) {
                    trailer.entry(key.clone()).or_insert_with(|| value.clone());
                }
            }
            // Older sections are processed after newer ones so newer
            // definitions win. XRefStm belongs to the same revision.
            if let Some(prev) = section.trailer.get("Prev").and_then(PdfValue::as_i64) {
                pending.push(u64::try_from(prev).map_err(|_| "negative Prev")?);
            }
            if let Some(stm) = section.trailer.get("XRefStm").and_then(PdfValue::as_i64) {
                pending.push(u64::try_from(stm).map_err(|_| "negative XRefStm")?);
            }
            if entries.len() > MAX_OBJECTS {
                return Err("xref exceeds object limit".into());
            }
        }

        let mut objects = BTreeMap::new();
        for (&number, entry) in &entries {
            let XrefEntry::InUse { offset, generation } = *entry else {
                continue;
            };
            if number == 0 && offset == 0 {
                continue;
            }
            let (id, value, _) = self
                .parse_object_at_offset(offset)
                .ok_or_else(|| format!("object {number} not found at offset {offset}"))?;
            if id.number != number || id.generation != generation {
                return Err(format!("offset {offset} holds {id}, expected {number} {generation}"));
            }
            objects.insert(id, value);
        }
        if objects.is_empty() {
            return Err("xref lists no objects".into());
        }
        Ok((objects, trailer))
    }

    /// Parses an indirect object at an xref offset, trying the raw offset
    /// and then the offset shifted by any junk before the header.
    fn parse_object_at_offset(&self, offset: u64) -> Option<(ObjectId, PdfValue, usize)> {
        let offset = usize::try_from(offset).ok()?;
        self.parse_indirect_object(offset).or_else(|| {
            (self.header_offset > 0)
                .then(|| self.parse_indirect_object(offset.checked_add(self.header_offset)?))
                .flatten()
        })
    }

    fn parse_xref_section(&self, offset: u64) -> Result<XrefSection, String> {
        let offset = usize::try_from(offset).map_err(|_| "xref offset overflow")?;
        let candidates = [Some(offset), offset.checked_add(self.header_offset)];
        for start in candidates.into_iter().flatten() {
            if start >= self.data.len() {
                continue;
            }
            let mut lexer = Lexer::new(self.data, start);
            if lexer.eat_keyword(b"xref") {
                return parse_xref_table(&mut lexer);
            }
            if let Some((_, PdfValue::Stream(stream), _)) = self.parse_indirect_object(start) {
                if super::dict_has_name(&stream.dict, "Type", "XRef") {
                    return parse_xref_stream(&stream);
                }
            }
        }
        Err(format!("no xref section at offset {offset}"))
    }

    fn recover(&self) -> (BTreeMap<ObjectId, PdfValue>, Dictionary) {
        let mut objects = BTreeMap::new();
        let mut pos = 0;
        while let Some(m) = object_header_regex().find_at(self.data, pos) {
            if objects.len() >= MAX_OBJECTS {
                break;
            }
            match self.parse_indirect_object(m.start()) {
                Some((id, value, end)) => {
                    objects.insert(id, value);
                    pos = end.max(m.end());
                }
                None => pos = m.end(),
            }
        }

        let mut trailer = Dictionary::new();
        let mut merge = |dict: &Dictionary| {
            for key in TRAILER_KEYS {
                if let Some(value) = dict.get(key) {
                    trailer.insert(key.to_string(), value.clone());
                }
            }
        };
        // Trailer dictionaries and xref streams, merged in file order so the
        // last revision wins.
        let mut sources: Vec<(usize, Dictionary)> = trailer_regex()
            .find_iter(self.data)
            .filter_map(|m| {
                let mut lexer = Lexer::new(self.data, m.end());
                match lexer.parse_value() {
                    Ok(PdfValue::Dictionary(d)) => Some((m.start(), d)),
                    _ => None,
                }
            })
            .collect();
        for (number, value) in &objects {
            if let PdfValue::Stream(s) = value {
                if super::dict_has_name(&s.dict, "Type", "XRef") {
                    // File position is unknown after the scan; object number
                    // is a fair proxy for revision order.
                    sources.push((number.number as usize, s.dict.clone()));
                }
            }
        }
        sources.sort_by_key(|(pos, _)| *pos);
        for (_, dict) in &sources {
            merge(dict);
        }
        (objects, trailer)
    }

    /// Parses `N G obj <value> [stream ... endstream] [endobj]` at `pos`.
    fn parse_indirect_object(&self, pos: usize) -> Option<(ObjectId, PdfValue, usize)> {
        let mut lexer = Lexer::new(self.data, pos);
        let number = u32::try_from(lexer.read_unsigned()?).ok()?;
        let generation = u16::try_from(lexer.read_unsigned()?).ok()?;
        if !lexer.eat_keyword(b"obj") {
            return None;
        }
        let id = ObjectId::new(number, generation);
        let value_start = lexer.pos;
        let value = match lexer.parse_value() {
            Ok(v) => v,
            Err(_) => {
                lexer.pos = value_start;
                if lexer.eat_keyword(b"endobj") {
                    return Some((id, PdfValue::Null, lexer.pos));
                }
                return None;
            }
        };
        let value = match value {
            PdfValue::Dictionary(dict) if lexer.eat_keyword(b"stream") => {
                let (raw, end) = self.read_stream_data(&dict, lexer.pos);
                lexer.pos = end;
                PdfValue::Stream(PdfStream {
                    dict,
                    raw,
                    decoded: None,
                })
            }
            other => other,
        };
        lexer.eat_keyword(b"endobj");
        Some((id, value, lexer.pos))
    }

    /// Returns the stream payload and the position after `endstream`.
    fn read_stream_data(&self, dict: &Dictionary, after_keyword: usize) -> (Vec<u8>, usize) {
        let data = self.data;
        let mut start = after_keyword;
        if data.get(start) == Some(&b'\r') {
            start += 1;
        }
        if data.get(start) == Some(&b'\n') {
            start += 1;
        }
        let declared = dict
            .get("Length")
            .and_then(PdfValue::as_i64)
            .and_then(|l| usize::try_from(l).ok());
        if let Some(length) = declared {
            if let Some(end) = start.checked_add(length).filter(|&e| e <= data.len()) {
                let mut lexer = Lexer::new(data, end);
                if lexer.eat_keyword(b"endstream") {
                    return (data[start..end].to_vec(), lexer.pos);
                }
            }
        }
        match self.next_endstream(start) {
            Some(marker) => {
                let mut end = marker;
                if end > start && data[end - 1] == b'\n' {
                    end -= 1;
                }
                if end > start && data[end - 1] == b'\r' {
                    end -= 1;
                }
                (data[start..end].to_vec(), marker + b"endstream".len())
            }
            None => (data[start.min(data.len())..].to_vec(), data.len()),
        }
    }
}

struct XrefSection {
    entries: Vec<(u32, XrefEntry)>,
    trailer: Dictionary,
}

fn parse_xref_table(lexer: &mut Lexer<'_>) -> Result<XrefSection, String> {
    let mut entries = Vec::new();
    loop {
        if lexer.eat_keyword(b"trailer") {
            break;
        }
        let first = lexer.read_unsigned().ok_or("malformed xref subsection header")?;
        let count = lexer.read_unsigned().ok_or("malformed xref subsection header")?;
        if count > MAX_OBJECTS as u64 || entries.len() as u64 + count > MAX_OBJECTS as u64 {
            return Err("xref subsection exceeds object limit".into());
        }
        for i in 0..count {
            let offset = lexer.read_unsigned().ok_or("malformed xref entry")?;
            let generation = lexer.read_unsigned().ok_or("malformed xref entry")?;
            let kind = lexer.read_keyword();
            let number = u32::try_from(first + i).map_err(|_| "object number overflow")?;
            let entry = match kind {
                b"n" => XrefEntry::InUse {
                    offset,
                    generation: u16::try_from(generation).map_err(|_| "generation overflow")?,
                },
                b"f" => XrefEntry::Free,
                _ => return Err("malformed xref entry type".into()),
            };
            entries.push((number, entry));
        }
    }
    match lexer.parse_value() {
        Ok(PdfValue::Dictionary(trailer)) => Ok(XrefSection { entries, trailer }),
        _ => Err("malformed trailer".into()),
    }
}

fn parse_xref_stream(stream: &PdfStream) -> Result<XrefSection, String> {
    let data = decode_stream(stream).map_err(|e| format!("xref stream: {e}"))?;
    let widths: Vec<usize> = stream
        .dict
        .get("W")
        .and_then(PdfValue::as_array)
        .ok_or("xref stream without W")?
        .iter()
        .map(|w| w.as_i64().and_then(|w| usize::try_from(w).ok()).filter(|&w| w <= 8))
        .collect::<Option<_>>()
        .ok_or("invalid W entry")?;
    if widths.len() != 3 {
        return Err("W must have three fields".into());
    }
    let row_len: usize = widths.iter().sum();
    if row_len == 0 {
        return Err("zero-width xref rows".into());
    }
    let size = stream
        .dict
        .get("Size")
        .and_then(PdfValue::as_i64)
        .unwrap_or(0)
        .max(0);
    let index: Vec<i64> = match stream.dict.get("Index").and_then(PdfValue::as_array) {
        Some(items) => items.iter().filter_map(PdfValue::as_i64).collect(),
        None => vec![0, size],
    };
    let mut rows = data.chunks_exact(row_len);
    let mut entries = Vec::new();
    for pair in index.chunks_exact(2) {
        let (first, count) = (pair[0], pair[1]);
        if first < 0 || count < 0 || entries.len() as i64 + count > MAX_OBJECTS as i64 {
            return Err("invalid xref stream Index".into());
        }
        for i in 0..count {
            let Some(row) = rows.next() else { break };
            let mut fields = [0u64; 3];
            let mut at = 0;
            for (field, &width) in fields.iter_mut().zip(&widths) {
                *field = row[at..at + width]
                    .iter()
                    .fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
                at += width;
            }
            if widths[0] == 0 {
                fields[0] = 1;
            }
            let number = u32::try_from(first + i).map_err(|_| "object number overflow")?;
            let entry = match fields[0] {
                0 => XrefEntry::Free,
                1 => XrefEntry::InUse {
                    offset: fields[1],
                    generation: u16::try_from(fields[2]).unwrap_or(u16::MAX),
                },
                2 => XrefEntry::Compressed,
                _ => continue,
            };
            entries.push((number, entry));
        }
    }
    Ok(XrefSection {
        entries,
        trailer: stream.dict.clone(),
    })
}

fn find_last(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).rposition(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &[u8] = b"%PDF-1.4\n1 0 obj\n<< /Type /Catalog /Pages 2 0 R >>\nendobj\n2 0 obj\n<< /Type /Pages /Kids [] /Count 0 >>\nendobj\n";

    fn with_xref(body: &[u8]) -> Vec<u8> {
        let mut out = body.to_vec();
        let offsets: Vec<usize> = object_header_regex()
            .find_iter(body)
            .map(|m| m.start())
            .collect();
        let xref = out.len();
        out.extend_from_slice(format!("xref\n0 {}\n0000000000 65535 f \n", offsets.len() + 1).as_bytes());
        for o in &offsets {
            out.extend_from_slice(format!("{o:010} 00000 n \n").as_bytes());
        }
        out.extend_from_slice(
            format!(
                "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n",
                offsets.len() + 1
            )
            .as_bytes(),
        );
        out
    }

    #[test]
    fn minimal_document_has_catalog_and_no_warnings() {
        let graph = parse_document(&with_xref(MINIMAL)).unwrap();
        assert_eq!(graph.catalog_id, Some(ObjectId::new(1, 0)));
        assert_eq!(graph.objects.len(), 2);
        assert!(graph.parse_warnings.is_empty(), "{:?}", graph.parse_warnings);
        assert!(!graph.encryption_flag);
    }

    #[test]
    fn missing_xref_falls_back_to_scan() {
        let graph = parse_document(MINIMAL).unwrap();
        assert_eq!(graph.objects.len(), 2);
        assert!(graph.parse_warnings.iter().any(|w| w == WARN_XREF_RECOVERED));
        // No trailer at all: catalog found by type.
        assert_eq!(graph.catalog_id, Some(ObjectId::new(1, 0)));
    }

    #[test]
    fn empty_and_garbage_inputs_are_unparseable() {
        assert_eq!(parse_document(b""), Err(PdfError::UnparseableDocument));
        assert_eq!(
            parse_document(b"just some text"),
            Err(PdfError::UnparseableDocument)
        );
    }

    #[test]
    fn later_definition_wins_in_recovery() {
        let doc = b"1 0 obj (old) endobj\n1 0 obj (new) endobj\n";
        let graph = parse_document(doc).unwrap();
        assert_eq!(
            graph.objects[&ObjectId::new(1, 0)],
            PdfValue::String(b"new".to_vec())
        );
    }

    #[test]
    fn stream_length_mismatch_uses_endstream_marker() {
        let doc = b"1 0 obj << /Length 999 >> stream\nabc\nendstream endobj\n";
        let graph = parse_document(doc).unwrap();
        match &graph.objects[&ObjectId::new(1, 0)] {
            PdfValue::Stream(s) => assert_eq!(s.raw, b"abc"),
            other => panic!("expected stream, got {other:?}"),
        }
    }

    #[test]
    fn dangling_references_are_warned() {
        let doc = b"1 0 obj << /Type /Catalog /Pages 9 0 R >> endobj\n";
        let graph = parse_document(doc).unwrap();
        assert!(graph
            .parse_warnings
            .iter()
            .any(|w| w == "dangling-reference 9 0"));
    }

    #[test]
    fn encrypt_entry_sets_flag() {
        let doc = b"1 0 obj << /Type /Catalog >> endobj\n2 0 obj << /Filter /Standard >> endobj\ntrailer << /Root 1 0 R /Encrypt 2 0 R >>\n";
        let graph = parse_document(doc).unwrap();
        assert!(graph.encryption_flag);
    }
}
