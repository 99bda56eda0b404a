use baitline_core::bait::{
    extract_bait_urls, page_url_distribution, resolve_page_index, traverse_links, validate_url, BaitUrl,
    LinkAction, Rejection, WARN_MISSING_CATALOG,
};
use baitline_core::fixtures::{link_document, literal, PdfBuilder, XrefLayout};
use baitline_core::pdf::{normalize, parse_document, ObjectGraph, ObjectId};
use proptest::prelude::*;

fn graph(bytes: &[u8]) -> ObjectGraph {
    normalize(parse_document(bytes).unwrap())
}

fn link(b: &mut PdfBuilder, url: &str, rect: &str) -> u32 {
    b.add(format!(
        "<< /Type /Annot /Subtype /Link /Rect {rect} /A << /S /URI /URI {} >> >>",
        literal(url)
    ))
}

#[test]
fn minimal_link_on_first_page() {
    let g = graph(&link_document(&[&["https://a.example/x"]], None));
    let links = traverse_links(&g).annotations;
    assert_eq!(links.len(), 1);
    assert_eq!(links[0].page_index, 0);
    assert_eq!(links[0].uri, "https://a.example/x");
    assert_eq!(links[0].action, LinkAction::Uri);
    assert_eq!(links[0].clickable_area, 2000.0);
}

#[test]
fn orphaned_uri_objects_are_not_emitted() {
    let mut b = PdfBuilder::new();
    let page = b.add("<< /Type /Page /MediaBox [0 0 612 792] >>");
    let pages = b.add(format!("<< /Type /Pages /Kids [{page} 0 R] /Count 1 >>"));
    let catalog = b.add(format!("<< /Type /Catalog /Pages {pages} 0 R >>"));
    b.set_root(catalog);
    link(&mut b, "https://orphan.example.com/", "[0 0 10 10]");
    b.add("<< /S /URI /URI (https://bare.example.com/) >>");
    let g = graph(&b.build(XrefLayout::Table));
    assert!(traverse_links(&g).annotations.is_empty());
}

#[test]
fn cyclic_page_tree_terminates_and_emits_once() {
    let mut b = PdfBuilder::new();
    let root = b.reserve();
    let inner = b.reserve();
    let a1 = link(&mut b, "https://one.example.com/", "[0 0 10 10]");
    let a2 = link(&mut b, "https://two.example.com/", "[0 0 10 10]");
    let p1 = b.add(format!("<< /Type /Page /Parent {inner} 0 R /Annots [{a1} 0 R] >>"));
    let p2 = b.add(format!("<< /Type /Page /Parent {root} 0 R /Annots [{a2} 0 R {a2} 0 R] >>"));
    b.set(inner, format!("<< /Type /Pages /Parent {root} 0 R /Kids [{p1} 0 R {root} 0 R {inner} 0 R] >>"));
    b.set(root, format!("<< /Type /Pages /Kids [{inner} 0 R {p2} 0 R {inner} 0 R] >>"));
    let catalog = b.add(format!("<< /Type /Catalog /Pages {root} 0 R >>"));
    b.set_root(catalog);
    let g = graph(&b.build(XrefLayout::Table));
    let links = traverse_links(&g).annotations;
    assert_eq!(links.len(), 2);
    let mut pages: Vec<_> = links.iter().map(|l| (l.uri.as_str(), l.page_index)).collect();
    pages.sort();
    assert_eq!(pages, [("https://one.example.com/", 0), ("https://two.example.com/", 1)]);
}

#[test]
fn page_index_follows_depth_first_order() {
    let g = graph(&link_document(
        &[&["https://a.example.com/1"], &["https://a.example.com/2"], &["https://a.example.com/3"]],
        None,
    ));
    let second = traverse_links(&g)
        .annotations
        .into_iter()
        .find(|l| l.uri.ends_with("/2"))
        .unwrap();
    assert_eq!(resolve_page_index(&g, second.object_id), 1);
}

#[test]
fn nested_tree_last_leaf_index() {
    let mut b = PdfBuilder::new();
    let root = b.reserve();
    let left = b.reserve();
    let right = b.reserve();
    let leaves: Vec<u32> = (0..5).map(|_| b.reserve()).collect();
    let annot = link(&mut b, "https://last.example.com/", "[0 0 5 5]");
    for (i, &leaf) in leaves.iter().enumerate() {
        let parent = if i < 2 { left } else { right };
        let annots = if i == 4 { format!("/Annots [{annot} 0 R]") } else { String::new() };
        b.set(leaf, format!("<< /Type /Page /Parent {parent} 0 R {annots} >>"));
    }
    let kids = |ids: &[u32]| ids.iter().map(|i| format!("{i} 0 R")).collect::<Vec<_>>().join(" ");
    b.set(left, format!("<< /Type /Pages /Kids [{}] >>", kids(&leaves[..2])));
    b.set(right, format!("<< /Type /Pages /Kids [{}] >>", kids(&leaves[2..])));
    b.set(root, format!("<< /Type /Pages /Kids [{left} 0 R {right} 0 R] >>"));
    let catalog = b.add(format!("<< /Type /Catalog /Pages {root} 0 R >>"));
    b.set_root(catalog);
    let g = graph(&b.build(XrefLayout::CompressedStream));
    assert_eq!(resolve_page_index(&g, ObjectId::new(annot, 0)), leaves.len() as i64 - 1);
}

#[test]
fn unreferenced_annotation_has_no_page() {
    let mut b = PdfBuilder::new();
    let pages = b.add("<< /Type /Pages /Kids [] >>");
    let orphan = link(&mut b, "https://x.example.com/", "[0 0 1 1]");
    // Reachable through the catalog but owned by no page.
    let catalog = b.add(format!("<< /Type /Catalog /Pages {pages} 0 R /Extra [{orphan} 0 R] >>"));
    b.set_root(catalog);
    let g = graph(&b.build(XrefLayout::Table));
    assert_eq!(resolve_page_index(&g, ObjectId::new(orphan, 0)), -1);
    let traversal = traverse_links(&g);
    assert_eq!(traversal.annotations[0].page_index, -1);
    assert!(traversal.warnings.iter().any(|w| w.starts_with("unattributable-page")));
}

#[test]
fn missing_catalog_yields_warning() {
    let g = parse_document(b"1 0 obj << /Foo 1 >> endobj").unwrap();
    let t = traverse_links(&g);
    assert!(t.annotations.is_empty());
    assert_eq!(t.warnings, [WARN_MISSING_CATALOG]);
}

#[test]
fn two_pages_give_one_first_page_bait() {
    let g = graph(&link_document(&[&["https://p1.example.com/"], &["https://p2.example.com/"]], None));
    let urls = extract_bait_urls(&g).urls;
    assert_eq!(urls.len(), 2);
    assert_eq!(urls.iter().filter(|u| u.is_first_page_bait()).count(), 1);
    assert_eq!(urls[0].url, "https://p1.example.com/");
}

#[test]
fn zero_area_rect_is_null_area() {
    let mut b = PdfBuilder::new();
    let annot = link(&mut b, "https://ok.example.com/", "[0 0 0 0]");
    let page = b.add(format!("<< /Type /Page /Annots [{annot} 0 R] >>"));
    let pages = b.add(format!("<< /Type /Pages /Kids [{page} 0 R] >>"));
    let catalog = b.add(format!("<< /Type /Catalog /Pages {pages} 0 R >>"));
    b.set_root(catalog);
    let urls = extract_bait_urls(&graph(&b.build(XrefLayout::Table))).urls;
    assert_eq!(urls.len(), 1);
    assert_eq!(urls[0].rejection, Some(Rejection::NullArea));
    assert_eq!(urls[0].source.clickable_area, 0.0);
}

#[test]
fn remote_goto_is_flagged() {
    let mut b = PdfBuilder::new();
    let annot = b.add("<< /Type /Annot /Subtype /Link /Rect [0 0 9 9] /A << /S /GoToR /F << /Type /Filespec /F (doc.pdf) >> /D [0 /Fit] >> >>");
    let page = b.add(format!("<< /Type /Page /Annots [{annot} 0 R] >>"));
    let pages = b.add(format!("<< /Type /Pages /Kids [{page} 0 R] >>"));
    let catalog = b.add(format!("<< /Type /Catalog /Pages {pages} 0 R >>"));
    b.set_root(catalog);
    let urls = extract_bait_urls(&graph(&b.build(XrefLayout::Table))).urls;
    assert_eq!(urls[0].url, "doc.pdf");
    assert_eq!(urls[0].rejection, Some(Rejection::RemoteGoto));
}

fn urls_of(doc: &[u8]) -> Vec<BaitUrl> {
    extract_bait_urls(&graph(doc)).urls
}

#[test]
fn distribution_of_one_first_page_url_per_document() {
    let docs: Vec<(String, Vec<BaitUrl>)> = (0..5)
        .map(|i| {
            let url = format!("https://d{i}.example.com/");
            (format!("sha{i}"), urls_of(&link_document(&[&[url.as_str()], &[]], None)))
        })
        .collect();
    let h = page_url_distribution(docs.iter().map(|(s, u)| (s.as_str(), u.as_slice())));
    assert_eq!(h.first_page_url_share(), 1.0);
    assert_eq!(h.first_page_document_share(), 1.0);
    assert_eq!(h.buckets().len(), 1);
}

#[test]
fn distribution_matches_seventy_thirty_split() {
    // 7 URLs on page 0 and 3 on page 1 across 10 documents.
    let docs: Vec<(String, Vec<BaitUrl>)> = (0..10)
        .map(|i| {
            let url = format!("https://split{i}.example.com/");
            let bytes = if i < 7 {
                link_document(&[&[url.as_str()], &[]], None)
            } else {
                link_document(&[&[], &[url.as_str()]], None)
            };
            (format!("sha{i}"), urls_of(&bytes))
        })
        .collect();
    let mut h = page_url_distribution(docs[..4].iter().map(|(s, u)| (s.as_str(), u.as_slice())));
    h = h.merge(page_url_distribution(docs[4..].iter().map(|(s, u)| (s.as_str(), u.as_slice()))));
    let buckets = h.buckets();
    assert_eq!((buckets[0].page_index, buckets[0].unique_urls, buckets[0].unique_documents), (0, 7, 7));
    assert_eq!((buckets[1].page_index, buckets[1].unique_urls, buckets[1].unique_documents), (1, 3, 3));
    assert!((h.first_page_url_share() - 0.7).abs() < 1e-12);
}

proptest! {
    #[test]
    fn injected_orphans_never_surface(n_orphans in 0usize..6, n_links in 1usize..4, compressed in any::<bool>()) {
        let mut b = PdfBuilder::new();
        let annots: Vec<u32> = (0..n_links)
            .map(|i| link(&mut b, &format!("https://real{i}.example.com/"), "[0 0 10 10]"))
            .collect();
        let refs: Vec<String> = annots.iter().map(|a| format!("{a} 0 R")).collect();
        let page = b.add(format!("<< /Type /Page /Annots [{}] >>", refs.join(" ")));
        for i in 0..n_orphans {
            let orphan = link(&mut b, &format!("https://orphan{i}.example.com/"), "[0 0 10 10]");
            // Orphans may point at reachable objects; only inbound edges matter.
            b.add(format!("<< /Type /Page /Annots [{orphan} 0 R] /Parent {page} 0 R >>"));
        }
        let pages = b.add(format!("<< /Type /Pages /Kids [{page} 0 R] >>"));
        let catalog = b.add(format!("<< /Type /Catalog /Pages {pages} 0 R >>"));
        b.set_root(catalog);
        let layout = if compressed { XrefLayout::CompressedStream } else { XrefLayout::Table };
        let links = traverse_links(&graph(&b.build(layout))).annotations;
        prop_assert_eq!(links.len(), n_links);
        prop_assert!(links.iter().all(|l| l.uri.contains("real")));
    }

    #[test]
    fn canonicalization_is_idempotent(host in "[a-zA-Z]{1,10}", tld in prop::sample::select(vec!["com", "ORG", "co.uk", "xyz", "nope"]),
                                      path in "[a-zA-Z0-9/._-]{0,20}", frag in proptest::option::of("[a-z]{0,5}")) {
        let raw = format!("HtTpS://{host}.{tld}/{path}{}", frag.map(|f| format!("#{f}")).unwrap_or_default());
        let first = validate_url(&raw);
        prop_assert_eq!(&first, &validate_url(&raw));
        if let Ok(canonical) = first {
            prop_assert!(!canonical.contains('#'));
            prop_assert_eq!(validate_url(&canonical), Ok(canonical.clone()));
        }
    }
}
