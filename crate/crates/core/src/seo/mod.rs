//! Cross-link profiling, the SEO-structure heuristic, title queries,
//! open-directory candidates and keyword statistics.

mod title;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::bait::BaitUrl;

pub use title::{clean_title, decode_text_string, extract_title, TitleQuery, TitleSource};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeoError {
    #[error("malformed title string: {0}")]
    MalformedTitleString(String),
    #[error("invalid heuristic config: min_pdf_suffix ({min_pdf_suffix}) must be below min_total_urls ({min_total_urls})")]
    InvalidConfig { min_total_urls: usize, min_pdf_suffix: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossLinkProfile {
    pub total_urls: usize,
    pub pdf_suffix_count: usize,
    pub first_url_is_pdf: bool,
    pub per_page_counts: Vec<usize>,
    pub distinct_hosts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeoHeuristicConfig {
    pub min_total_urls: usize,
    pub min_pdf_suffix: usize,
}

impl Default for SeoHeuristicConfig {
    fn default() -> Self {
        SeoHeuristicConfig {
            min_total_urls: 11,
            min_pdf_suffix: 10,
        }
    }
}

impl SeoHeuristicConfig {
    pub fn validate(&self) -> Result<(), SeoError> {
        if self.min_pdf_suffix < self.min_total_urls {
            Ok(())
        } else {
            Err(SeoError::InvalidConfig {
                min_total_urls: self.min_total_urls,
                min_pdf_suffix: self.min_pdf_suffix,
            })
        }
    }
}

/// True when the URL path (not the query) ends in `.pdf`, any case.
pub fn has_pdf_suffix(url: &str) -> bool {
    match Url::parse(url) {
        Ok(u) => u.path().to_ascii_lowercase().ends_with(".pdf"),
        Err(_) => {
            let path = url.split(['?', '#']).next().unwrap_or("");
            path.to_ascii_lowercase().ends_with(".pdf")
        }
    }
}

/// Profile over accepted URLs with a known page, in (page, annotation) order.
pub fn cross_link_profile(urls: &[BaitUrl]) -> CrossLinkProfile {
    let mut accepted: Vec<&BaitUrl> = urls
        .iter()
        .filter(|u| u.is_accepted() && u.page_index >= 0)
        .collect();
    accepted.sort_by_key(|u| u.page_index);
    let Some(first) = accepted.first() else {
        return CrossLinkProfile::default();
    };
    let pages = accepted.last().map_or(0, |u| u.page_index as usize + 1);
    let mut per_page_counts = vec![0; pages];
    let mut hosts = BTreeSet::new();
    for url in &accepted {
        per_page_counts[url.page_index as usize] += 1;
        if let Some(host) = Url::parse(&url.url).ok().and_then(|u| u.host_str().map(str::to_string)) {
            hosts.insert(host);
        }
    }
    CrossLinkProfile {
        total_urls: accepted.len(),
        pdf_suffix_count: accepted.iter().filter(|u| has_pdf_suffix(&u.url)).count(),
        first_url_is_pdf: has_pdf_suffix(&first.url),
        per_page_counts,
        distinct_hosts: hosts.len(),
    }
}

pub fn classify_seo(profile: &CrossLinkProfile, cfg: &SeoHeuristicConfig) -> bool {
    profile.total_urls >= cfg.min_total_urls
        && profile.pdf_suffix_count >= cfg.min_pdf_suffix
        && !profile.first_url_is_pdf
}

/// Parent directories of `url`, deepest first, ending at the origin root.
/// Query and fragment are dropped; every candidate ends with `/`.
pub fn derive_directory_candidates(url: &str) -> Vec<String> {
    let Ok(parsed) = Url::parse(url) else {
        return Vec::new();
    };
    if parsed.cannot_be_a_base() {
        return Vec::new();
    }
    let origin = parsed.origin().ascii_serialization();
    let mut segments: Vec<&str> = parsed.path().trim_start_matches('/').split('/').collect();
    // The final segment is the file name (empty for directory URLs).
    segments.pop();
    let mut out = Vec::with_capacity(segments.len() + 1);
    while !segments.is_empty() {
        out.push(format!("{origin}/{}/", segments.join("/")));
        segments.pop();
    }
    out.push(format!("{origin}/"));
    out
}

/// Lowercase tokens split on non-alphanumeric boundaries.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Unigram and bigram counts where each token (pair) counts once per title.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeywordStats {
    pub titles: usize,
    pub unigram: BTreeMap<String, u64>,
    pub bigram: BTreeMap<(String, String), u64>,
}

impl KeywordStats {
    pub fn add_title(&mut self, title: &str) {
        let tokens = tokenize(title);
        let unique: BTreeSet<&String> = tokens.iter().collect();
        for token in unique {
            *self.unigram.entry(token.clone()).or_default() += 1;
        }
        let pairs: BTreeSet<(&String, &String)> = tokens.windows(2).map(|w| (&w[0], &w[1])).collect();
        for (a, b) in pairs {
            *self.bigram.entry((a.clone(), b.clone())).or_default() += 1;
        }
        self.titles += 1;
    }

    pub fn merge(mut self, other: KeywordStats) -> KeywordStats {
        self.titles += other.titles;
        for (k, v) in other.unigram {
            *self.unigram.entry(k).or_default() += v;
        }
        for (k, v) in other.bigram {
            *self.bigram.entry(k).or_default() += v;
        }
        self
    }

    /// Highest counts first, ties broken alphabetically.
    pub fn top_unigrams(&self, n: usize) -> Vec<(&str, u64)> {
        let mut all: Vec<(&str, u64)> = self.unigram.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        all.truncate(n);
        all
    }

    pub fn top_bigrams(&self, n: usize) -> Vec<((&str, &str), u64)> {
        let mut all: Vec<((&str, &str), u64)> = self
            .bigram
            .iter()
            .map(|((a, b), &v)| ((a.as_str(), b.as_str()), v))
            .collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        all.truncate(n);
        all
    }
}

pub fn keyword_stats<'a, I>(titles: I) -> KeywordStats
where
    I: IntoIterator<Item = &'a str>,
{
    let mut stats = KeywordStats::default();
    for title in titles {
        stats.add_title(title);
    }
    stats
}

/// Per-document SEO record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeoReport {
    pub sha256: String,
    pub seo_flag: bool,
    pub profile: CrossLinkProfile,
    pub title: Option<TitleQuery>,
    pub directory_candidates: Vec<String>,
}

/// Profiles one document. Directory candidates are derived from the
/// document's `.pdf` links when the heuristic fires.
pub fn profile_document(
    sha256: &str,
    urls: &[BaitUrl],
    title: Option<TitleQuery>,
    cfg: &SeoHeuristicConfig,
) -> SeoReport {
    let profile = cross_link_profile(urls);
    let seo_flag = classify_seo(&profile, cfg);
    let mut directory_candidates = Vec::new();
    if seo_flag {
        let mut seen = BTreeSet::new();
        for url in urls.iter().filter(|u| u.is_accepted() && has_pdf_suffix(&u.url)) {
            for candidate in derive_directory_candidates(&url.url) {
                if seen.insert(candidate.clone()) {
                    directory_candidates.push(candidate);
                }
            }
        }
    }
    SeoReport {
        sha256: sha256.to_string(),
        seo_flag,
        profile,
        title,
        directory_candidates,
    }
}
