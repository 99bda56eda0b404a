//! PDF object model: a tolerant parser that turns raw bytes into a
//! navigable, decoded [`ObjectGraph`].
//!
//! The parser never trusts the cross-reference data. When the xref chain is
//! missing or points at garbage, a linear scan over `N G obj ... endobj`
//! spans rebuilds the object map. Streams are decoded by [`normalize`],
//! which also expands compressed object streams.

mod dump;
mod filters;
mod lexer;
mod normalize;
mod parse;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dump::dump_graph;
pub use filters::{decode_stream, FilterError};
pub use normalize::normalize;
pub use parse::parse_document;

/// Hard cap on objects kept per document.
pub const MAX_OBJECTS: usize = 1_000_000;
/// Hard cap on decoded bytes per stream (256 MiB).
pub const MAX_DECODED_STREAM: usize = 256 * 1024 * 1024;

/// Warning emitted when the object map had to be rebuilt by a linear scan.
pub const WARN_XREF_RECOVERED: &str = "xref-recovered";

/// Indirect object identifier: object number plus generation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ObjectId {
    pub number: u32,
    pub generation: u16,
}

impl ObjectId {
    pub const fn new(number: u32, generation: u16) -> Self {
        ObjectId { number, generation }
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.number, self.generation)
    }
}

pub type Dictionary = BTreeMap<String, PdfValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct PdfStream {
    pub dict: Dictionary,
    pub raw: Vec<u8>,
    /// Present iff every filter in the chain was applied successfully.
    pub decoded: Option<Vec<u8>>,
}

impl PdfStream {
    /// Decoded bytes when available, raw bytes otherwise.
    pub fn content(&self) -> &[u8] {
        self.decoded.as_deref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PdfValue {
    Null,
    Boolean(bool),
    Integer(i64),
    Real(f64),
    String(Vec<u8>),
    Name(String),
    Array(Vec<PdfValue>),
    Dictionary(Dictionary),
    Reference(ObjectId),
    Stream(PdfStream),
}

impl PdfValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            PdfValue::Null => "null",
            PdfValue::Boolean(_) => "boolean",
            PdfValue::Integer(_) => "integer",
            PdfValue::Real(_) => "real",
            PdfValue::String(_) => "string",
            PdfValue::Name(_) => "name",
            PdfValue::Array(_) => "array",
            PdfValue::Dictionary(_) => "dictionary",
            PdfValue::Reference(_) => "reference",
            PdfValue::Stream(_) => "stream",
        }
    }

    /// Dictionary of a dictionary or stream value.
    pub fn as_dict(&self) -> Option<&Dictionary> {
        match self {
            PdfValue::Dictionary(d) => Some(d),
            PdfValue::Stream(s) => Some(&s.dict),
            _ => None,
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            PdfValue::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            PdfValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[PdfValue]> {
        match self {
            PdfValue::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            PdfValue::Integer(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PdfValue::Integer(i) => Some(*i as f64),
            PdfValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_reference(&self) -> Option<ObjectId> {
        match self {
            PdfValue::Reference(id) => Some(*id),
            _ => None,
        }
    }

    /// Calls `f` for every reference reachable inside this value without
    /// crossing into other indirect objects.
    pub fn for_each_reference(&self, f: &mut impl FnMut(ObjectId)) {
        match self {
            PdfValue::Reference(id) => f(*id),
            PdfValue::Array(items) => items.iter().for_each(|v| v.for_each_reference(f)),
            PdfValue::Dictionary(d) => d.values().for_each(|v| v.for_each_reference(f)),
            PdfValue::Stream(s) => s.dict.values().for_each(|v| v.for_each_reference(f)),
            _ => {}
        }
    }
}

/// Returns true when `dict[key]` is the name `name`.
pub fn dict_has_name(dict: &Dictionary, key: &str, name: &str) -> bool {
    dict.get(key).and_then(PdfValue::as_name) == Some(name)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectGraph {
    pub objects: BTreeMap<ObjectId, PdfValue>,
    pub trailer: Dictionary,
    pub catalog_id: Option<ObjectId>,
    pub encryption_flag: bool,
    pub parse_warnings: Vec<String>,
}

impl ObjectGraph {
    pub fn get(&self, id: ObjectId) -> Option<&PdfValue> {
        self.objects.get(&id)
    }

    /// Follows references (bounded, so reference loops terminate) until a
    /// direct value is reached. Dangling references yield `None`.
    pub fn resolve<'a>(&'a self, value: &'a PdfValue) -> Option<&'a PdfValue> {
        let mut current = value;
        for _ in 0..32 {
            match current {
                PdfValue::Reference(id) => current = self.objects.get(id)?,
                other => return Some(other),
            }
        }
        None
    }

    /// Looks up `key` in `dict` and resolves the result.
    pub fn lookup<'a>(&'a self, dict: &'a Dictionary, key: &str) -> Option<&'a PdfValue> {
        dict.get(key).and_then(|v| self.resolve(v))
    }

    pub fn lookup_dict<'a>(&'a self, dict: &'a Dictionary, key: &str) -> Option<&'a Dictionary> {
        self.lookup(dict, key).and_then(PdfValue::as_dict)
    }

    pub fn catalog(&self) -> Option<&Dictionary> {
        self.catalog_id
            .and_then(|id| self.objects.get(&id))
            .and_then(PdfValue::as_dict)
    }

    pub(crate) fn warn(&mut self, warning: impl Into<String>) {
        let warning = warning.into();
        if !self.parse_warnings.contains(&warning) {
            self.parse_warnings.push(warning);
        }
    }

    /// Every reference target that does not resolve within `objects`.
    pub fn dangling_references(&self) -> Vec<ObjectId> {
        let mut dangling = std::collections::BTreeSet::new();
        let mut check = |id: ObjectId| {
            if !self.objects.contains_key(&id) {
                dangling.insert(id);
            }
        };
        for value in self.objects.values() {
            value.for_each_reference(&mut check);
        }
        for value in self.trailer.values() {
            value.for_each_reference(&mut check);
        }
        dangling.into_iter().collect()
    }

    /// Re-derives the catalog id: the trailer's Root when it is a Catalog
    /// dictionary, otherwise the highest-numbered Catalog in the map.
    pub(crate) fn locate_catalog(&mut self) {
        let is_catalog = |v: &PdfValue| {
            v.as_dict()
                .map(|d| dict_has_name(d, "Type", "Catalog"))
                .unwrap_or(false)
        };
        let from_root = self
            .trailer
            .get("Root")
            .and_then(PdfValue::as_reference)
            .filter(|id| self.objects.get(id).map(is_catalog).unwrap_or(false));
        self.catalog_id = from_root.or_else(|| {
            self.objects
                .iter()
                .rev()
                .find(|(_, v)| is_catalog(v))
                .map(|(id, _)| *id)
        });
    }

    /// Replaces all dangling-reference warnings with the current set.
    pub(crate) fn refresh_dangling_warnings(&mut self) {
        self.parse_warnings
            .retain(|w| !w.starts_with("dangling-reference "));
        for id in self.dangling_references() {
            self.parse_warnings.push(format!("dangling-reference {id}"));
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PdfError {
    #[error("no recoverable objects in document")]
    UnparseableDocument,
}
