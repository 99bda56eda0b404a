use serde_json::{json, Map, Value};

use super::{ObjectGraph, PdfValue};

fn summarize(value: &PdfValue) -> String {
    match value {
        PdfValue::Null => "null".into(),
        PdfValue::Boolean(b) => b.to_string(),
        PdfValue::Integer(i) => i.to_string(),
        PdfValue::Real(r) => r.to_string(),
        PdfValue::String(s) => {
            let text = String::from_utf8_lossy(s);
            let preview: String = text.chars().take(64).collect();
            format!("({preview})")
        }
        PdfValue::Name(n) => format!("/{n}"),
        PdfValue::Array(items) => format!("array[{}]", items.len()),
        PdfValue::Reference(id) => format!("{id} R"),
        PdfValue::Dictionary(d) => {
            let kind = d.get("Type").and_then(PdfValue::as_name).unwrap_or("-");
            let subtype = d.get("Subtype").and_then(PdfValue::as_name);
            match subtype {
                Some(s) => format!("/Type /{kind} /Subtype /{s}, {} keys", d.len()),
                None => format!("/Type /{kind}, {} keys", d.len()),
            }
        }
        PdfValue::Stream(s) => {
            let kind = s.dict.get("Type").and_then(PdfValue::as_name).unwrap_or("-");
            match &s.decoded {
                Some(d) => format!("/Type /{kind}, raw {} bytes, decoded {} bytes", s.raw.len(), d.len()),
                None => format!("/Type /{kind}, raw {} bytes, undecoded", s.raw.len()),
            }
        }
    }
}

/// Debug dump of a graph: object id → {type, summary}.
pub fn dump_graph(graph: &ObjectGraph) -> Value {
    let objects: Map<String, Value> = graph
        .objects
        .iter()
        .map(|(id, value)| {
            (
                id.to_string(),
                json!({ "type": value.type_name(), "summary": summarize(value) }),
            )
        })
        .collect();
    json!({
        "catalog": graph.catalog_id.map(|id| id.to_string()),
        "encrypted": graph.encryption_flag,
        "warnings": graph.parse_warnings,
        "objects": objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdf::parse_document;

    #[test]
    fn dump_lists_every_object() {
        let graph =
            parse_document(b"1 0 obj << /Type /Catalog >> endobj 2 0 obj (text) endobj").unwrap();
        let dump = dump_graph(&graph);
        assert_eq!(dump["catalog"], "1 0");
        assert_eq!(dump["objects"]["1 0"]["type"], "dictionary");
        assert_eq!(dump["objects"]["2 0"]["summary"], "(text)");
    }
}
