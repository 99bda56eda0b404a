use super::filters::{decode_stream, FilterError};
use super::lexer::Lexer;
use super::{dict_has_name, ObjectGraph, ObjectId, PdfStream, PdfValue, MAX_OBJECTS};

/// Decodes every decodable stream and expands object streams into the
/// object map. Idempotent: a normalized graph passes through unchanged.
///
/// Streams of encrypted documents are left raw.
pub fn normalize(mut graph: ObjectGraph) -> ObjectGraph {
    if graph.encryption_flag {
        graph.warn("encrypted-streams-skipped");
    } else {
        decode_all_streams(&mut graph);
        expand_object_streams(&mut graph);
    }
    graph.locate_catalog();
    graph.refresh_dangling_warnings();
    graph
}

fn decode_all_streams(graph: &mut ObjectGraph) {
    let pending: Vec<ObjectId> = graph
        .objects
        .iter()
        .filter_map(|(id, v)| match v {
            PdfValue::Stream(s) if s.decoded.is_none() => Some(*id),
            _ => None,
        })
        .collect();
    for id in pending {
        let result = {
            let Some(PdfValue::Stream(stream)) = graph.objects.get(&id) else {
                continue;
            };
            decode_stream(&with_resolved_filters(graph, stream))
        };
        match result {
            Ok(bytes) => {
                if let Some(PdfValue::Stream(stream)) = graph.objects.get_mut(&id) {
                    stream.decoded = Some(bytes);
                }
            }
            Err(FilterError::UnsupportedFilter(name)) => {
                graph.warn(format!("unsupported-filter {name} in {id}"));
            }
            Err(FilterError::CorruptStream(reason)) => {
                graph.warn(format!("corrupt-stream {id}: {reason}"));
            }
        }
    }
}

/// Copy of the stream whose Filter and DecodeParms entries are direct.
fn with_resolved_filters(graph: &ObjectGraph, stream: &PdfStream) -> PdfStream {
    let mut resolved = PdfStream {
        dict: stream.dict.clone(),
        raw: stream.raw.clone(),
        decoded: None,
    };
    for key in ["Filter", "DecodeParms"] {
        if let Some(value) = stream.dict.get(key) {
            let direct = match graph.resolve(value) {
                Some(PdfValue::Array(items)) => PdfValue::Array(
                    items
                        .iter()
                        .map(|item| graph.resolve(item).cloned().unwrap_or(PdfValue::Null))
                        .collect(),
                ),
                Some(other) => other.clone(),
                None => PdfValue::Null,
            };
            resolved.dict.insert(key.to_string(), direct);
        }
    }
    resolved
}

fn expand_object_streams(graph: &mut ObjectGraph) {
    let containers: Vec<ObjectId> = graph
        .objects
        .iter()
        .filter_map(|(id, v)| match v {
            PdfValue::Stream(s) if dict_has_name(&s.dict, "Type", "ObjStm") && s.decoded.is_some() => {
                Some(*id)
            }
            _ => None,
        })
        .collect();
    for container in containers {
        let Some(PdfValue::Stream(stream)) = graph.objects.get(&container) else {
            continue;
        };
        let extracted = match read_object_stream(stream) {
            Ok(objects) => objects,
            Err(reason) => {
                graph.warn(format!("bad-object-stream {container}: {reason}"));
                continue;
            }
        };
        for (number, value) in extracted {
            if graph.objects.len() >= MAX_OBJECTS {
                graph.warn(format!("object-limit {MAX_OBJECTS} reached"));
                return;
            }
            // Directly defined objects take precedence over compressed copies.
            graph
                .objects
                .entry(ObjectId::new(number, 0))
                .or_insert(value);
        }
    }
}

fn read_object_stream(stream: &PdfStream) -> Result<Vec<(u32, PdfValue)>, String> {
    let data = stream.decoded.as_deref().ok_or("not decoded")?;
    let count = stream
        .dict
        .get("N")
        .and_then(PdfValue::as_i64)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or("missing N")?;
    let first = stream
        .dict
        .get("First")
        .and_then(PdfValue::as_i64)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or("missing First")?;
    if count > MAX_OBJECTS {
        return Err("N exceeds object limit".into());
    }
    let mut header = Lexer::new(data, 0);
    let mut slots = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let number = header.read_unsigned().ok_or("truncated header")?;
        let offset = header.read_unsigned().ok_or("truncated header")?;
        let number = u32::try_from(number).map_err(|_| "object number overflow")?;
        slots.push((number, offset));
    }
    let mut objects = Vec::with_capacity(slots.len());
    for (number, offset) in slots {
        let Some(pos) = usize::try_from(offset)
            .ok()
            .and_then(|o| o.checked_add(first))
            .filter(|&p| p < data.len())
        else {
            continue;
        };
        if let Ok(value) = Lexer::new(data, pos).parse_value() {
            objects.push((number, value));
        }
    }
    Ok(objects)
}
