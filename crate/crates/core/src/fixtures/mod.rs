//! Synthetic PDF generation for tests, benchmarks and the fuzz driver.
//!
//! Every generated document ships with a manifest of the URL records the
//! extractor is expected to produce.

mod builder;
mod campaign;
mod corpus;

pub use builder::{hex_string, link_document, literal, utf16_string, zlib, PageLinks, PdfBuilder, XrefLayout};
pub use campaign::{campaign_stream, CampaignTarget};
pub use corpus::{sha256_hex, synthetic_corpus, ExpectedUrl, FixtureDocument};
