//! Link-annotation traversal, page attribution and URL validation.
//!
//! Only annotations reachable from the Catalog are considered clickable.
//! URL-looking text inside content streams is never extracted.

pub mod psl;
pub mod url;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::pdf::{dict_has_name, Dictionary, ObjectGraph, ObjectId, PdfValue};

pub use self::psl::{PublicSuffixList, PSL_SNAPSHOT_VERSION};
pub use self::url::{canonicalize, validate_url, Rejection, UrlValidator, DEFAULT_STATIC_EXTENSIONS};

pub const WARN_MISSING_CATALOG: &str = "missing-catalog";

/// Action carried by a link annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkAction {
    Uri,
    RemoteGoto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAnnotation {
    /// Indirect object holding the annotation dictionary.
    pub object_id: ObjectId,
    pub page_index: i64,
    pub rect: [f64; 4],
    /// Target exactly as written in the action.
    pub uri: String,
    pub clickable_area: f64,
    pub action: LinkAction,
}

impl LinkAnnotation {
    /// Signed area; inverted rectangles give a negative value.
    pub fn signed_area(&self) -> f64 {
        let [x1, y1, x2, y2] = self.rect;
        (x2 - x1) * (y2 - y1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaitUrl {
    pub url: String,
    pub page_index: i64,
    pub source: LinkAnnotation,
    pub rejection: Option<Rejection>,
}

impl BaitUrl {
    pub fn is_accepted(&self) -> bool {
        self.rejection.is_none()
    }

    pub fn is_first_page_bait(&self) -> bool {
        self.page_index == 0 && self.is_accepted()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTraversal {
    pub annotations: Vec<LinkAnnotation>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaitExtraction {
    pub urls: Vec<BaitUrl>,
    pub warnings: Vec<String>,
}

/// Page ownership derived from a depth-first walk of the Pages tree.
#[derive(Debug, Clone, Default)]
pub struct PageIndex {
    pages: Vec<ObjectId>,
    /// Object id -> (page index, position in that page's Annots array).
    owners: HashMap<ObjectId, (usize, usize)>,
}

impl PageIndex {
    pub fn build(graph: &ObjectGraph) -> Self {
        let mut index = PageIndex::default();
        let Some(root) = graph
            .catalog()
            .and_then(|c| c.get("Pages"))
            .and_then(PdfValue::as_reference)
        else {
            return index;
        };
        let mut visited = HashSet::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                continue;
            }
            let Some(node) = graph.get(id).and_then(PdfValue::as_dict) else {
                continue;
            };
            let kids = graph.lookup(node, "Kids").and_then(PdfValue::as_array);
            let is_leaf = dict_has_name(node, "Type", "Page")
                || (kids.is_none() && !dict_has_name(node, "Type", "Pages"));
            if is_leaf {
                index.add_page(graph, id, node);
            } else if let Some(kids) = kids {
                stack.extend(kids.iter().rev().filter_map(PdfValue::as_reference));
            }
        }
        index
    }

    fn add_page(&mut self, graph: &ObjectGraph, id: ObjectId, page: &Dictionary) {
        let page_no = self.pages.len();
        self.pages.push(id);
        self.owners.entry(id).or_insert((page_no, 0));
        if let Some(annots_id) = page.get("Annots").and_then(PdfValue::as_reference) {
            self.owners.entry(annots_id).or_insert((page_no, 0));
        }
        let annots = graph.lookup(page, "Annots").and_then(PdfValue::as_array);
        for (pos, annot) in annots.unwrap_or_default().iter().enumerate() {
            if let Some(annot_id) = annot.as_reference() {
                self.owners.entry(annot_id).or_insert((page_no, pos));
            }
        }
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> &[ObjectId] {
        &self.pages
    }

    /// 0-based page index, or -1 when no page owns the object.
    pub fn page_of(&self, id: ObjectId) -> i64 {
        self.owners.get(&id).map(|&(p, _)| p as i64).unwrap_or(-1)
    }

    fn position_of(&self, id: ObjectId) -> usize {
        self.owners.get(&id).map(|&(_, pos)| pos).unwrap_or(usize::MAX)
    }
}

/// Page index of `annotation_id` in depth-first Pages-tree order, -1 when
/// no page references it.
pub fn resolve_page_index(graph: &ObjectGraph, annotation_id: ObjectId) -> i64 {
    PageIndex::build(graph).page_of(annotation_id)
}

/// Breadth-first walk from the Catalog; every indirect object is expanded
/// at most once. Emits link annotations with a URI or remote go-to action.
pub fn traverse_links(graph: &ObjectGraph) -> LinkTraversal {
    let mut out = LinkTraversal::default();
    let Some(catalog_id) = graph.catalog_id.filter(|_| graph.catalog().is_some()) else {
        out.warnings.push(WARN_MISSING_CATALOG.to_string());
        return out;
    };
    let pages = PageIndex::build(graph);

    let mut visited = HashSet::from([catalog_id]);
    let mut queue = VecDeque::from([catalog_id]);
    let mut seen_annotations = HashSet::new();
    while let Some(id) = queue.pop_front() {
        let Some(value) = graph.get(id) else {
            continue;
        };
        let mut dicts = Vec::new();
        collect_dicts(value, &mut dicts);
        for (ordinal, dict) in dicts.into_iter().enumerate() {
            if let Some(mut annotation) = link_annotation(graph, id, dict) {
                if !seen_annotations.insert((id, ordinal)) {
                    continue;
                }
                annotation.page_index = pages.page_of(id);
                if annotation.page_index < 0 {
                    out.warnings.push(format!("unattributable-page {id}"));
                }
                out.annotations.push(annotation);
            }
        }
        value.for_each_reference(&mut |next| {
            if graph.objects.contains_key(&next) && visited.insert(next) {
                queue.push_back(next);
            }
        });
    }
    out
}

/// All dictionaries inside `value` (itself included), in document order,
/// without crossing indirect references.
fn collect_dicts<'a>(value: &'a PdfValue, out: &mut Vec<&'a Dictionary>) {
    match value {
        PdfValue::Dictionary(d) => {
            out.push(d);
            d.values().for_each(|v| collect_dicts(v, out));
        }
        PdfValue::Stream(s) => s.dict.values().for_each(|v| collect_dicts(v, out)),
        PdfValue::Array(items) => items.iter().for_each(|v| collect_dicts(v, out)),
        _ => {}
    }
}

fn link_annotation(graph: &ObjectGraph, id: ObjectId, dict: &Dictionary) -> Option<LinkAnnotation> {
    if !dict_has_name(dict, "Subtype", "Link") {
        return None;
    }
    let rect = read_rect(graph, dict)?;
    let action = graph.lookup_dict(dict, "A");
    if !dict_has_name(dict, "Type", "Annot") && action.is_none() {
        return None;
    }
    let action = action?;
    let (kind, target) = match graph.lookup(action, "S").and_then(PdfValue::as_name)? {
        "URI" => (LinkAction::Uri, graph.lookup(action, "URI")?.as_bytes()?.to_vec()),
        "GoToR" => (LinkAction::RemoteGoto, file_spec(graph, graph.lookup(action, "F")?)?),
        _ => return None,
    };
    let [x1, y1, x2, y2] = rect;
    Some(LinkAnnotation {
        object_id: id,
        page_index: -1,
        rect,
        uri: String::from_utf8_lossy(&target).into_owned(),
        clickable_area: ((x2 - x1) * (y2 - y1)).abs(),
        action: kind,
    })
}

fn read_rect(graph: &ObjectGraph, dict: &Dictionary) -> Option<[f64; 4]> {
    let items = graph.lookup(dict, "Rect")?.as_array()?;
    if items.len() != 4 {
        return None;
    }
    let mut rect = [0.0; 4];
    for (slot, item) in rect.iter_mut().zip(items) {
        *slot = graph.resolve(item)?.as_f64().filter(|v| v.is_finite())?;
    }
    Some(rect)
}

fn file_spec(graph: &ObjectGraph, spec: &PdfValue) -> Option<Vec<u8>> {
    match spec {
        PdfValue::String(s) => Some(s.clone()),
        PdfValue::Dictionary(d) => ["UF", "F"]
            .iter()
            .find_map(|k| graph.lookup(d, k).and_then(PdfValue::as_bytes))
            .map(<[u8]>::to_vec),
        _ => None,
    }
}

/// Traversal, page attribution and validation composed. Records are ordered
/// by page (unattributed last), then Annots position, then object id.
pub fn extract_bait_urls(graph: &ObjectGraph) -> BaitExtraction {
    extract_bait_urls_with(graph, UrlValidator::shared())
}

pub fn extract_bait_urls_with(graph: &ObjectGraph, validator: &UrlValidator) -> BaitExtraction {
    let traversal = traverse_links(graph);
    let pages = PageIndex::build(graph);
    let mut annotations: Vec<(usize, LinkAnnotation)> = traversal
        .annotations
        .into_iter()
        .enumerate()
        .collect();
    annotations.sort_by_key(|(seq, a)| {
        let page = if a.page_index < 0 { i64::MAX } else { a.page_index };
        (page, pages.position_of(a.object_id), a.object_id, *seq)
    });
    let urls = annotations
        .into_iter()
        .map(|(_, annotation)| {
            let (url, rejection) = classify(&annotation, validator);
            BaitUrl {
                url,
                page_index: annotation.page_index,
                source: annotation,
                rejection,
            }
        })
        .collect();
    BaitExtraction {
        urls,
        warnings: traversal.warnings,
    }
}

fn classify(annotation: &LinkAnnotation, validator: &UrlValidator) -> (String, Option<Rejection>) {
    let fallback = || canonicalize(&annotation.uri).unwrap_or_else(|| annotation.uri.clone());
    if annotation.action == LinkAction::RemoteGoto {
        return (annotation.uri.clone(), Some(Rejection::RemoteGoto));
    }
    let area = annotation.signed_area();
    if area.is_nan() || area <= 0.0 {
        return (fallback(), Some(Rejection::NullArea));
    }
    match validator.validate(&annotation.uri) {
        Ok(url) => (url, None),
        Err(rejection) => (fallback(), Some(rejection)),
    }
}

/// Per-page counts of unique accepted URLs and of documents with at least
/// one accepted URL on that page. Merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageUrlHistogram {
    urls: BTreeMap<i64, BTreeSet<String>>,
    documents: BTreeMap<i64, BTreeSet<String>>,
    documents_with_urls: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageBucket {
    pub page_index: i64,
    pub unique_urls: usize,
    pub unique_documents: usize,
}

impl PageUrlHistogram {
    pub fn add_document(&mut self, sha256: &str, urls: &[BaitUrl]) {
        for url in urls.iter().filter(|u| u.is_accepted()) {
            self.urls.entry(url.page_index).or_default().insert(url.url.clone());
            self.documents
                .entry(url.page_index)
                .or_default()
                .insert(sha256.to_string());
            self.documents_with_urls.insert(sha256.to_string());
        }
    }

    pub fn merge(mut self, other: PageUrlHistogram) -> PageUrlHistogram {
        for (page, set) in other.urls {
            self.urls.entry(page).or_default().extend(set);
        }
        for (page, set) in other.documents {
            self.documents.entry(page).or_default().extend(set);
        }
        self.documents_with_urls.extend(other.documents_with_urls);
        self
    }

    pub fn buckets(&self) -> Vec<PageBucket> {
        self.urls
            .iter()
            .map(|(&page, urls)| PageBucket {
                page_index: page,
                unique_urls: urls.len(),
                unique_documents: self.documents.get(&page).map_or(0, BTreeSet::len),
            })
            .collect()
    }

    /// Share of (page, URL) entries that sit on the first page.
    pub fn first_page_url_share(&self) -> f64 {
        let total: usize = self.urls.values().map(BTreeSet::len).sum();
        let first = self.urls.get(&0).map_or(0, BTreeSet::len);
        ratio(first, total)
    }

    /// Share of documents with any accepted URL that have one on page 0.
    pub fn first_page_document_share(&self) -> f64 {
        let first = self.documents.get(&0).map_or(0, BTreeSet::len);
        ratio(first, self.documents_with_urls.len())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Histogram over a corpus of per-document extraction results.
pub fn page_url_distribution<'a, I>(corpus: I) -> PageUrlHistogram
where
    I: IntoIterator<Item = (&'a str, &'a [BaitUrl])>,
{
    let mut histogram = PageUrlHistogram::default();
    for (sha, urls) in corpus {
        histogram.add_document(sha, urls);
    }
    histogram
}
