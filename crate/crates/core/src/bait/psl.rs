//! Public-suffix matching over the vendored list snapshot.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Vendored list, `VERSION: 2025-04-07_15-51-09_UTC`.
const SNAPSHOT: &str = include_str!("../../data/public_suffix_list.dat");

/// Snapshot timestamp of the vendored list.
pub const PSL_SNAPSHOT_VERSION: &str = "2025-04-07_15-51-09_UTC";

#[derive(Debug, Default)]
pub struct PublicSuffixList {
    exact: HashSet<String>,
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

impl PublicSuffixList {
    /// Parses list text. Only the ICANN section is used unless
    /// `include_private` is set; private-section suffixes are ordinary
    /// registrable domains from the registry's point of view.
    pub fn parse(text: &str, include_private: bool) -> Self {
        let mut list = PublicSuffixList::default();
        for line in text.lines() {
            let line = line.trim();
            if line.contains("===BEGIN PRIVATE DOMAINS===") && !include_private {
                break;
            }
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            if rule.starts_with("//") {
                continue;
            }
            let ascii = |r: &str| idna::domain_to_ascii(r).unwrap_or_else(|_| r.to_lowercase());
            if let Some(rest) = rule.strip_prefix('!') {
                list.exception.insert(ascii(rest));
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcard.insert(ascii(rest));
            } else {
                list.exact.insert(ascii(rule));
            }
        }
        list
    }

    pub fn vendored() -> &'static PublicSuffixList {
        static LIST: OnceLock<PublicSuffixList> = OnceLock::new();
        LIST.get_or_init(|| PublicSuffixList::parse(SNAPSHOT, false))
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of labels in the public suffix of `host` when an explicit
    /// rule matches. `None` means only the implicit `*` rule applies, i.e.
    /// the top-level domain is unknown.
    pub fn suffix_labels(&self, host: &str) -> Option<usize> {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let mut best: Option<usize> = None;
        for take in 1..=labels.len() {
            let candidate = labels[labels.len() - take..].join(".");
            if self.exception.contains(&candidate) {
                // Exception rules win and make the suffix one label shorter.
                return Some(take - 1);
            }
            if self.exact.contains(&candidate) {
                best = Some(take);
            }
            if take < labels.len() && self.wildcard.contains(&candidate) {
                best = Some(take + 1);
            }
        }
        best
    }

    /// True when `host` sits strictly below a listed public suffix, so it
    /// has a registrable domain.
    pub fn has_registrable_domain(&self, host: &str) -> bool {
        let labels = host.trim_end_matches('.').split('.').count();
        matches!(self.suffix_labels(host), Some(n) if n >= 1 && labels > n)
    }
}
