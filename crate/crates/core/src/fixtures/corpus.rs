use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::builder::{hex_string, literal, utf16_string, PdfBuilder, XrefLayout};

/// Link flavours planted in synthetic documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LinkKind {
    Valid,
    ValidMixedCase,
    Loopback,
    Scheme,
    BadTld,
    Static,
    NullArea,
    InvertedRect,
    RemoteGoto,
}

const KINDS: [LinkKind; 9] = [
    LinkKind::Valid,
    LinkKind::ValidMixedCase,
    LinkKind::Loopback,
    LinkKind::Scheme,
    LinkKind::BadTld,
    LinkKind::Static,
    LinkKind::NullArea,
    LinkKind::InvertedRect,
    LinkKind::RemoteGoto,
];

/// One record the extractor must produce.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExpectedUrl {
    pub page_index: i64,
    pub url: String,
    /// Rejection code in its serialized form, `None` when accepted.
    pub rejection: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureDocument {
    pub name: String,
    pub sha256: String,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub layout: String,
    pub object_count: usize,
    pub page_count: usize,
    pub title: String,
    pub expected: Vec<ExpectedUrl>,
    /// URLs that exist in the file but must never be extracted.
    pub decoys: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Deterministic corpus of `n` documents covering orphaned URI objects,
/// zero-area rectangles, cyclic and nested page trees, compressed streams
/// and all three cross-reference layouts.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<FixtureDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synthetic_document(i, &mut rng)).collect()
}

fn synthetic_document(doc: usize, rng: &mut ChaCha8Rng) -> FixtureDocument {
    let layout = [XrefLayout::Table, XrefLayout::CompressedStream, XrefLayout::CorruptOffsets][doc % 3];
    let page_count = rng.gen_range(1..=4usize);
    let nested = page_count >= 2 && rng.gen_bool(0.5);
    let cyclic = nested && doc.is_multiple_of(2);

    let mut b = PdfBuilder::new();
    let catalog = b.reserve();
    let root_pages = b.reserve();
    let inner_pages = nested.then(|| b.reserve());
    let page_ids: Vec<u32> = (0..page_count).map(|_| b.reserve()).collect();

    let mut expected = Vec::new();
    let mut decoys = Vec::new();
    let mut link_no = 0usize;

    for (page_index, &page_id) in page_ids.iter().enumerate() {
        let mut annots = Vec::new();
        let links = if page_index == 0 { rng.gen_range(1..=3) } else { rng.gen_range(0..=3) };
        for _ in 0..links {
            let kind = *KINDS.choose(rng).expect("non-empty");
            link_no += 1;
            let (annot, record) = planted_link(&mut b, rng, doc, link_no, page_id, kind);
            annots.push(annot);
            expected.push(ExpectedUrl {
                page_index: page_index as i64,
                ..record
            });
        }
        if rng.gen_bool(0.3) {
            let url = format!("https://widget{doc}.example.com/form");
            annots.push(format!(
                "<< /Type /Annot /Subtype /Widget /Rect [10 10 90 30] /A << /S /URI /URI {} >> >>",
                literal(&url)
            ));
            decoys.push(url);
        }
        if rng.gen_bool(0.2) {
            annots.push(b.add("<< /Type /Annot /Subtype /Link /Rect [0 0 50 50] /Dest [0 /Fit] >>").to_string() + " 0 R");
        }

        let text_url = format!("https://text{doc}-{page_index}.example.com/only-in-text");
        let contents = b.add_flate_stream(
            "",
            format!("BT /F1 12 Tf 72 720 Td (Visit {text_url} now) Tj ET").as_bytes(),
        );
        decoys.push(text_url);

        let parent = match inner_pages {
            Some(inner) if page_index < page_count / 2 => inner,
            _ => root_pages,
        };
        let annots_entry = if annots.is_empty() {
            String::new()
        } else if rng.gen_bool(0.5) {
            format!("/Annots [{}]", annots.join(" "))
        } else {
            format!("/Annots {} 0 R", b.add(format!("[{}]", annots.join(" "))))
        };
        b.set(
            page_id,
            format!(
                "<< /Type /Page /Parent {parent} 0 R /MediaBox [0 0 612 792] /Contents {contents} 0 R {annots_entry} >>"
            ),
        );
    }

    let refs = |ids: &[u32]| ids.iter().map(|id| format!("{id} 0 R")).collect::<Vec<_>>().join(" ");
    match inner_pages {
        Some(inner) => {
            let split = page_count / 2;
            let mut inner_kids = refs(&page_ids[..split]);
            if cyclic {
                // Kids pointing back to an ancestor.
                inner_kids.push_str(&format!(" {root_pages} 0 R"));
            }
            b.set(
                inner,
                format!("<< /Type /Pages /Parent {root_pages} 0 R /Kids [{inner_kids}] /Count {split} >>"),
            );
            b.set(
                root_pages,
                format!(
                    "<< /Type /Pages /Kids [{inner} 0 R {}] /Count {page_count} >>",
                    refs(&page_ids[split..])
                ),
            );
        }
        None => b.set(
            root_pages,
            format!("<< /Type /Pages /Kids [{}] /Count {page_count} >>", refs(&page_ids)),
        ),
    }
    b.set(catalog, format!("<< /Type /Catalog /Pages {root_pages} 0 R >>"));
    b.set_root(catalog);

    // Orphans: a complete link annotation and a bare URI action that no
    // Catalog-reachable object references.
    let orphan_url = format!("https://orphan{doc}.example.com/hidden");
    b.add(format!(
        "<< /Type /Annot /Subtype /Link /Rect [0 0 100 100] /P {} 0 R /A << /S /URI /URI {} >> >>",
        page_ids[0],
        literal(&orphan_url)
    ));
    let orphan_action = format!("https://orphan-action{doc}.example.com/");
    b.add(format!("<< /S /URI /URI {} >>", literal(&orphan_action)));
    decoys.push(orphan_url);
    decoys.push(orphan_action);

    let title = format!("Free download guide {doc} pdf");
    let title_entry = if doc % 4 == 1 { utf16_string(&title) } else { literal(&title) };
    let info = b.add(format!("<< /Title {title_entry} /Producer (baitline fixtures) >>"));
    b.set_info(info);

    let bytes = b.build(layout);
    FixtureDocument {
        name: format!("synthetic-{doc:04}.pdf"),
        sha256: sha256_hex(&bytes),
        object_count: b.object_count(layout),
        layout: format!("{layout:?}"),
        bytes,
        page_count,
        title,
        expected,
        decoys,
    }
}

/// Adds one link annotation; returns the Annots entry and the expected
/// record (page index filled in by the caller).
fn planted_link(
    b: &mut PdfBuilder,
    rng: &mut ChaCha8Rng,
    doc: usize,
    link: usize,
    page_id: u32,
    kind: LinkKind,
) -> (String, ExpectedUrl) {
    let host_tld = ["com", "org", "net", "co.uk", "de", "info"][link % 6];
    let (uri, url, rejection): (String, String, Option<&str>) = match kind {
        LinkKind::Valid | LinkKind::NullArea | LinkKind::InvertedRect => {
            let u = format!("https://lure{doc}.example.{host_tld}/landing/{link}?ref=pdf");
            let reject = (kind != LinkKind::Valid).then_some("null-area");
            (u.clone(), u, reject)
        }
        LinkKind::ValidMixedCase => (
            format!("HTTP://WWW.Lure{doc}.Example.{}/Go/{link}#Top", host_tld.to_uppercase()),
            format!("http://www.lure{doc}.example.{host_tld}/Go/{link}"),
            None,
        ),
        LinkKind::Loopback => {
            let u = format!("http://127.0.{}.1/p{link}", doc % 250);
            (u.clone(), u, Some("loopback"))
        }
        LinkKind::Scheme => {
            let u = format!("ftp://files{doc}.example.org/f{link}");
            (u.clone(), u, Some("scheme"))
        }
        LinkKind::BadTld => {
            let u = format!("https://lure{doc}.notarealtld/x{link}");
            (u.clone(), u, Some("invalid-tld"))
        }
        LinkKind::Static => {
            let u = format!("https://cdn{doc}.example.net/img/{link}.PNG");
            (u.clone(), u, Some("static-resource"))
        }
        LinkKind::RemoteGoto => {
            let u = format!("other-{link}.pdf");
            (u.clone(), u, Some("remote-goto"))
        }
    };
    let rect = match kind {
        LinkKind::NullArea => "[100 300 100 340]".to_string(),
        LinkKind::InvertedRect => "[200 300 120 330]".to_string(),
        _ => {
            let x = rng.gen_range(20..400);
            let y = rng.gen_range(20..700);
            format!("[{x} {y} {} {}.5]", x + rng.gen_range(10..200), y + 15)
        }
    };
    let encoded = if rng.gen_bool(0.25) {
        hex_string(uri.as_bytes())
    } else {
        literal(&uri)
    };
    let action_body = if kind == LinkKind::RemoteGoto {
        format!("<< /S /GoToR /F {encoded} /D [0 /Fit] >>")
    } else {
        format!("<< /Type /Action /S /URI /URI {encoded} >>")
    };
    let action = if rng.gen_bool(0.5) {
        action_body
    } else {
        format!("{} 0 R", b.add(action_body))
    };
    let type_entry = if rng.gen_bool(0.8) { "/Type /Annot " } else { "" };
    let annot_body = format!(
        "<< {type_entry}/Subtype /Link /Rect {rect} /Border [0 0 0] /P {page_id} 0 R /A {action} >>"
    );
    let annot = if rng.gen_bool(0.85) {
        format!("{} 0 R", b.add(annot_body))
    } else {
        annot_body
    };
    (
        annot,
        ExpectedUrl {
            page_index: -1,
            url,
            rejection: rejection.map(str::to_string),
        },
    )
}
