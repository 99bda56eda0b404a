use std::collections::BTreeSet;

use baitline_core::bait::{extract_bait_urls, BaitUrl};
use baitline_core::fixtures::{synthetic_corpus, ExpectedUrl};
use baitline_core::pdf::{normalize, parse_document, WARN_XREF_RECOVERED};

fn as_expected(urls: &[BaitUrl]) -> Vec<ExpectedUrl> {
    let mut out: Vec<ExpectedUrl> = urls
        .iter()
        .map(|u| ExpectedUrl {
            page_index: u.page_index,
            url: u.url.clone(),
            rejection: u.rejection.map(|r| r.as_str().to_string()),
        })
        .collect();
    out.sort();
    out
}

#[test]
fn corpus_extraction_matches_manifest() {
    for doc in synthetic_corpus(60, 7) {
        let graph = normalize(parse_document(&doc.bytes).unwrap());
        let got = extract_bait_urls(&graph);
        let mut want = doc.expected.clone();
        want.sort();
        assert_eq!(as_expected(&got.urls), want, "{} ({})", doc.name, doc.layout);
        assert_eq!(graph.objects.len(), doc.object_count, "{}", doc.name);
        let seen: BTreeSet<&str> = got.urls.iter().map(|u| u.url.as_str()).collect();
        for decoy in &doc.decoys {
            assert!(!seen.contains(decoy.as_str()), "{} leaked {decoy}", doc.name);
        }
        let recovered = graph.parse_warnings.iter().any(|w| w == WARN_XREF_RECOVERED);
        assert_eq!(recovered, doc.layout == "CorruptOffsets", "{} {:?}", doc.name, graph.parse_warnings);
    }
}
