//! Ad-block network filter matching (`||`, `|`, `^`, `*`, `@@`).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::IntelError;

/// Options that only narrow the request type; without request context they
/// are treated as matching.
const TYPE_OPTIONS: &[&str] = &[
    "script", "image", "stylesheet", "object", "xmlhttprequest", "xhr", "subdocument", "frame", "ping", "media", "font",
    "websocket", "other", "popup", "document", "doc", "third-party", "3p", "first-party", "1p", "important",
    "match-case", "all", "css",
];

#[derive(Debug, Clone)]
pub struct NetworkRule {
    pub text: String,
    pub exception: bool,
    matcher: Regex,
}

impl NetworkRule {
    pub fn matches(&self, url: &str) -> bool {
        self.matcher.is_match(url)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    pub lines: usize,
    pub blocking: usize,
    pub exceptions: usize,
    pub comments: usize,
    pub cosmetic_skipped: usize,
    pub unsupported_skipped: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct FilterList {
    pub rules: Vec<NetworkRule>,
    pub stats: RuleStats,
    pub malformed: Vec<IntelError>,
}

enum Parsed {
    Rule(NetworkRule),
    Comment,
    Cosmetic,
    Unsupported,
}

fn is_cosmetic(line: &str) -> bool {
    ["##", "#@#", "#?#", "#$#", "#%#", "#@$#", "#@?#"].iter().any(|m| line.contains(m))
}

fn separator() -> &'static str {
    r"(?:[^A-Za-z0-9_\-.%]|$)"
}

/// Compiles a filter pattern (no options) to a regex over the full URL.
fn pattern_regex(pattern: &str, match_case: bool) -> Result<Regex, String> {
    let mut rest = pattern;
    let mut re = String::new();
    if !match_case {
        re.push_str("(?i)");
    }
    if let Some(r) = rest.strip_prefix("||") {
        re.push_str(r"^[a-z][a-z0-9+.\-]*://(?:[^/?#@]*@)?(?:[^/?#:]*\.)?");
        rest = r;
    } else if let Some(r) = rest.strip_prefix('|') {
        re.push('^');
        rest = r;
    }
    let end_anchor = rest.ends_with('|') && !rest.is_empty();
    if end_anchor {
        rest = &rest[..rest.len() - 1];
    }
    let core = rest.trim_matches('*');
    if core.is_empty() {
        return Err("empty pattern".into());
    }
    for c in rest.chars() {
        match c {
            '*' => re.push_str(".*"),
            '^' => re.push_str(separator()),
            c if c.is_whitespace() => return Err("whitespace in pattern".into()),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    if end_anchor {
        re.push('$');
    }
    Regex::new(&re).map_err(|e| e.to_string())
}

fn parse_line(line: &str, number: usize) -> Result<Parsed, IntelError> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('!') || line.starts_with('[') {
        return Ok(Parsed::Comment);
    }
    if is_cosmetic(line) {
        return Ok(Parsed::Cosmetic);
    }
    let malformed = |reason: &str| IntelError::MalformedRule {
        line: number,
        reason: format!("{reason}: {line}"),
    };
    let (exception, body) = match line.strip_prefix("@@") {
        Some(b) => (true, b),
        None => (false, line),
    };
    // Regex rules are out of scope.
    if body.len() > 1 && body.starts_with('/') && body.ends_with('/') {
        return Ok(Parsed::Unsupported);
    }
    let (pattern, options) = match body.rfind('$') {
        Some(i) if !body[i + 1..].contains('/') => (&body[..i], Some(&body[i + 1..])),
        _ => (body, None),
    };
    let mut match_case = false;
    if let Some(options) = options {
        for opt in options.split(',') {
            let opt = opt.trim();
            let name = opt.trim_start_matches('~');
            if name.is_empty() {
                return Err(malformed("empty option"));
            }
            if name == "match-case" {
                match_case = true;
            } else if !TYPE_OPTIONS.contains(&name) {
                return Ok(Parsed::Unsupported);
            }
        }
    }
    let matcher = pattern_regex(pattern, match_case).map_err(|r| malformed(&r))?;
    Ok(Parsed::Rule(NetworkRule {
        text: line.to_string(),
        exception,
        matcher,
    }))
}

impl FilterList {
    pub fn parse(text: &str) -> Self {
        let mut list = FilterList::default();
        for (i, line) in text.lines().enumerate() {
            list.stats.lines += 1;
            match parse_line(line, i + 1) {
                Ok(Parsed::Rule(rule)) => {
                    if rule.exception {
                        list.stats.exceptions += 1;
                    } else {
                        list.stats.blocking += 1;
                    }
                    list.rules.push(rule);
                }
                Ok(Parsed::Comment) => list.stats.comments += 1,
                Ok(Parsed::Cosmetic) => list.stats.cosmetic_skipped += 1,
                Ok(Parsed::Unsupported) => list.stats.unsupported_skipped += 1,
                Err(e) => {
                    list.stats.malformed += 1;
                    list.malformed.push(e);
                }
            }
        }
        list
    }

    pub fn load(path: &Path) -> Result<Self, IntelError> {
        let text = std::fs::read_to_string(path).map_err(|e| IntelError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::parse(&text))
    }

    /// Blocked by some rule and not rescued by an exception.
    pub fn is_blocked(&self, url: &str) -> bool {
        let mut blocked = false;
        for rule in &self.rules {
            if rule.matches(url) {
                if rule.exception {
                    return false;
                }
                blocked = true;
            }
        }
        blocked
    }
}

/// URLs blocked by `rules`, in input order.
pub fn match_blocklist_rules<'a>(request_urls: impl IntoIterator<Item = &'a str>, rules: &FilterList) -> Vec<String> {
    request_urls
        .into_iter()
        .filter(|u| rules.is_blocked(u))
        .map(str::to_string)
        .collect()
}

/// Dated filter-list snapshots; a lookup uses the nearest snapshot on or
/// before the requested date.
#[derive(Debug, Clone, Default)]
pub struct BlocklistArchive {
    pub snapshots: BTreeMap<NaiveDate, FilterList>,
}

fn date_in_name() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d{4})-(\d{2})-(\d{2})").unwrap())
}

impl BlocklistArchive {
    /// Loads every file in `dir` whose name contains a `YYYY-MM-DD` date.
    /// Files sharing a date are concatenated in name order.
    pub fn load_dir(dir: &Path) -> Result<Self, IntelError> {
        let mut by_date: BTreeMap<NaiveDate, Vec<(String, String)>> = BTreeMap::new();
        let read = std::fs::read_dir(dir).map_err(|e| IntelError::Io(format!("{}: {e}", dir.display())))?;
        for entry in read {
            let path = entry.map_err(|e| IntelError::Io(e.to_string()))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let Some(c) = date_in_name().captures(&name) else { continue };
            let Some(date) = NaiveDate::from_ymd_opt(c[1].parse().unwrap_or(0), c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0)) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| IntelError::Io(format!("{}: {e}", path.display())))?;
            by_date.entry(date).or_default().push((name, text));
        }
        let snapshots = by_date
            .into_iter()
            .map(|(date, mut files)| {
                files.sort();
                let text: Vec<String> = files.into_iter().map(|(_, t)| t).collect();
                (date, FilterList::parse(&text.join("\n")))
            })
            .collect();
        Ok(BlocklistArchive { snapshots })
    }

    pub fn select(&self, date: NaiveDate) -> Option<(NaiveDate, &FilterList)> {
        self.snapshots.range(..=date).next_back().map(|(d, l)| (*d, l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRequests {
    pub page_url: String,
    pub observed: NaiveDate,
    pub requests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBlockResult {
    pub page_url: String,
    pub observed: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<NaiveDate>,
    pub blocked: Vec<String>,
}

/// Matches each page's requests against the snapshot nearest before its
/// observation date. Pages with no earlier snapshot get `snapshot: None`.
pub fn match_pages(pages: &[PageRequests], archive: &BlocklistArchive) -> Vec<PageBlockResult> {
    pages
        .iter()
        .map(|p| {
            let chosen = archive.select(p.observed);
            PageBlockResult {
                page_url: p.page_url.clone(),
                observed: p.observed,
                snapshot: chosen.map(|(d, _)| d),
                blocked: chosen.map_or_else(Vec::new, |(_, list)| {
                    match_blocklist_rules(p.requests.iter().map(String::as_str), list)
                }),
            }
        })
        .collect()
}

/// Percentage of pages with at least one blocked request.
pub fn blocked_page_share(results: &[PageBlockResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    100.0 * results.iter().filter(|r| !r.blocked.is_empty()).count() as f64 / results.len() as f64
}
