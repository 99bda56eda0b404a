use std::collections::BTreeMap;
use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

/// Cross-reference layout used when serializing a [`PdfBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XrefLayout {
    /// Classic `xref` table plus `trailer`.
    Table,
    /// Non-stream objects packed into one object stream, indexed by a
    /// Flate-compressed xref stream with a PNG Up predictor.
    CompressedStream,
    /// Classic table whose offsets all point a few bytes too far.
    CorruptOffsets,
}

#[derive(Debug, Clone)]
enum Body {
    Direct(String),
    Stream { dict: String, data: Vec<u8> },
}

/// Minimal PDF writer for tests and synthetic corpora.
#[derive(Debug, Clone, Default)]
pub struct PdfBuilder {
    objects: BTreeMap<u32, Body>,
    next: u32,
    root: Option<u32>,
    info: Option<u32>,
    encrypt: Option<u32>,
}

pub fn zlib(data: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::default());
    enc.write_all(data).expect("in-memory write");
    enc.finish().expect("in-memory write")
}

/// PDF literal string with `\`, `(` and `)` escaped.
pub fn literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('(');
    for c in text.chars() {
        if matches!(c, '\\' | '(' | ')') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push(')');
    out
}

/// PDF hex string.
pub fn hex_string(bytes: &[u8]) -> String {
    format!("<{}>", hex::encode_upper(bytes))
}

/// UTF-16BE text string with byte-order mark, hex encoded.
pub fn utf16_string(text: &str) -> String {
    let mut bytes = vec![0xFE, 0xFF];
    for unit in text.encode_utf16() {
        bytes.extend_from_slice(&unit.to_be_bytes());
    }
    hex_string(&bytes)
}

impl PdfBuilder {
    pub fn new() -> Self {
        PdfBuilder {
            next: 1,
            ..Default::default()
        }
    }

    /// Allocates an object number to be filled later with [`PdfBuilder::set`].
    pub fn reserve(&mut self) -> u32 {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn set(&mut self, id: u32, body: impl Into<String>) {
        self.objects.insert(id, Body::Direct(body.into()));
    }

    pub fn add(&mut self, body: impl Into<String>) -> u32 {
        let id = self.reserve();
        self.set(id, body);
        id
    }

    /// Adds a stream; `dict_entries` must not contain `/Length`.
    pub fn add_stream(&mut self, dict_entries: &str, data: Vec<u8>) -> u32 {
        let id = self.reserve();
        self.objects.insert(
            id,
            Body::Stream {
                dict: dict_entries.to_string(),
                data,
            },
        );
        id
    }

    pub fn add_flate_stream(&mut self, dict_entries: &str, data: &[u8]) -> u32 {
        let entries = format!("{dict_entries} /Filter /FlateDecode");
        self.add_stream(entries.trim(), zlib(data))
    }

    pub fn set_root(&mut self, id: u32) {
        self.root = Some(id);
    }

    pub fn set_info(&mut self, id: u32) {
        self.info = Some(id);
    }

    pub fn set_encrypt(&mut self, id: u32) {
        self.encrypt = Some(id);
    }

    /// Objects present in the normalized graph of the serialized file.
    pub fn object_count(&self, layout: XrefLayout) -> usize {
        match layout {
            XrefLayout::CompressedStream => self.objects.len() + 2,
            _ => self.objects.len(),
        }
    }

    fn trailer_entries(&self, size: u32) -> String {
        let mut t = format!("/Size {size}");
        if let Some(r) = self.root {
            t.push_str(&format!(" /Root {r} 0 R"));
        }
        if let Some(i) = self.info {
            t.push_str(&format!(" /Info {i} 0 R"));
        }
        if let Some(e) = self.encrypt {
            t.push_str(&format!(" /Encrypt {e} 0 R"));
        }
        t
    }

    pub fn build(&self, layout: XrefLayout) -> Vec<u8> {
        match layout {
            XrefLayout::Table => self.build_table(0),
            XrefLayout::CorruptOffsets => self.build_table(7),
            XrefLayout::CompressedStream => self.build_compressed(),
        }
    }

    fn header() -> Vec<u8> {
        b"%PDF-1.7\n%\xE2\xE3\xCF\xD3\n".to_vec()
    }

    fn write_object(out: &mut Vec<u8>, id: u32, body: &Body) {
        match body {
            Body::Direct(text) => {
                out.extend_from_slice(format!("{id} 0 obj\n{text}\nendobj\n").as_bytes());
            }
            Body::Stream { dict, data } => {
                out.extend_from_slice(
                    format!("{id} 0 obj\n<< {dict} /Length {} >>\nstream\n", data.len()).as_bytes(),
                );
                out.extend_from_slice(data);
                out.extend_from_slice(b"\nendstream\nendobj\n");
            }
        }
    }

    fn build_table(&self, skew: u64) -> Vec<u8> {
        let mut out = Self::header();
        let mut offsets = BTreeMap::new();
        for (&id, body) in &self.objects {
            offsets.insert(id, out.len() as u64);
            Self::write_object(&mut out, id, body);
        }
        let size = self.objects.keys().max().map_or(1, |m| m + 1);
        let xref_at = out.len();
        out.extend_from_slice(format!("xref\n0 {size}\n0000000000 65535 f \n").as_bytes());
        for id in 1..size {
            let line = match offsets.get(&id) {
                Some(off) => format!("{:010} 00000 n \n", off + skew),
                None => "0000000000 00000 f \n".to_string(),
            };
            out.extend_from_slice(line.as_bytes());
        }
        out.extend_from_slice(
            format!(
                "trailer\n<< {} >>\nstartxref\n{xref_at}\n%%EOF\n",
                self.trailer_entries(size)
            )
            .as_bytes(),
        );
        out
    }

    fn build_compressed(&self) -> Vec<u8> {
        let max_id = self.objects.keys().max().copied().unwrap_or(0);
        let objstm_id = max_id + 1;
        let xref_id = max_id + 2;
        let size = xref_id + 1;

        let packed: Vec<(u32, &String)> = self
            .objects
            .iter()
            .filter_map(|(&id, body)| match body {
                Body::Direct(text) if Some(id) != self.encrypt => Some((id, text)),
                _ => None,
            })
            .collect();
        let mut header = String::new();
        let mut body = String::new();
        for (id, text) in &packed {
            header.push_str(&format!("{id} {} ", body.len()));
            body.push_str(text);
            body.push('\n');
        }
        let objstm_data = zlib(format!("{header}{body}").as_bytes());

        let mut out = Self::header();
        // (type, field2, field3) per object number.
        let mut rows: BTreeMap<u32, (u8, u32, u16)> = BTreeMap::new();
        for (&id, obj) in &self.objects {
            if let Some(index) = packed.iter().position(|(pid, _)| *pid == id) {
                rows.insert(id, (2, objstm_id, index as u16));
            } else {
                rows.insert(id, (1, out.len() as u32, 0));
                Self::write_object(&mut out, id, obj);
            }
        }
        rows.insert(objstm_id, (1, out.len() as u32, 0));
        Self::write_object(
            &mut out,
            objstm_id,
            &Body::Stream {
                dict: format!(
                    "/Type /ObjStm /N {} /First {} /Filter /FlateDecode",
                    packed.len(),
                    header.len()
                ),
                data: objstm_data,
            },
        );
        let xref_at = out.len() as u32;
        rows.insert(xref_id, (1, xref_at, 0));

        const COLUMNS: usize = 7;
        let mut raw_rows = Vec::with_capacity(size as usize);
        for id in 0..size {
            let (kind, f2, f3) = match rows.get(&id) {
                Some(&row) => row,
                None if id == 0 => (0, 0, 65535),
                None => (0, 0, 0),
            };
            let mut row = vec![kind];
            row.extend_from_slice(&f2.to_be_bytes());
            row.extend_from_slice(&f3.to_be_bytes());
            raw_rows.push(row);
        }
        let mut predicted = Vec::with_capacity(raw_rows.len() * (COLUMNS + 1));
        let mut previous = vec![0u8; COLUMNS];
        for row in &raw_rows {
            predicted.push(2);
            predicted.extend(row.iter().zip(&previous).map(|(b, p)| b.wrapping_sub(*p)));
            previous.clone_from(row);
        }
        Self::write_object(
            &mut out,
            xref_id,
            &Body::Stream {
                dict: format!(
                    "/Type /XRef /W [1 4 2] /Index [0 {size}] {} /Filter /FlateDecode \
                     /DecodeParms << /Predictor 12 /Columns {COLUMNS} >>",
                    self.trailer_entries(size)
                ),
                data: zlib(&predicted),
            },
        );
        out.extend_from_slice(format!("startxref\n{xref_at}\n%%EOF\n").as_bytes());
        out
    }
}

/// One page worth of link targets for [`link_document`].
pub type PageLinks<'a> = &'a [&'a str];

/// Table-layout document with one page per entry of `pages`; each URL
/// becomes a Link annotation with a URI action and a 100x20 rectangle.
pub fn link_document(pages: &[PageLinks<'_>], title: Option<&str>) -> Vec<u8> {
    let mut b = PdfBuilder::new();
    let catalog = b.reserve();
    let tree = b.reserve();
    let mut kids = Vec::new();
    for links in pages {
        let page = b.reserve();
        let mut annots = Vec::new();
        for (i, url) in links.iter().enumerate() {
            let y = 700 - 30 * i as i64;
            annots.push(b.add(format!(
                "<< /Type /Annot /Subtype /Link /Rect [72 {y} 172 {}] /A << /S /URI /URI {} >> >>",
                y + 20,
                literal(url)
            )));
        }
        let annots = annots
            .iter()
            .map(|id| format!("{id} 0 R"))
            .collect::<Vec<_>>()
            .join(" ");
        b.set(
            page,
            format!("<< /Type /Page /Parent {tree} 0 R /MediaBox [0 0 612 792] /Annots [{annots}] >>"),
        );
        kids.push(format!("{page} 0 R"));
    }
    b.set(
        tree,
        format!("<< /Type /Pages /Kids [{}] /Count {} >>", kids.join(" "), kids.len()),
    );
    b.set(catalog, format!("<< /Type /Catalog /Pages {tree} 0 R >>"));
    b.set_root(catalog);
    if let Some(title) = title {
        let info = b.add(format!("<< /Title {} >>", literal(title)));
        b.set_info(info);
    }
    b.build(XrefLayout::Table)
}
