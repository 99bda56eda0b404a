//! Well-formedness filters and canonicalization for extracted URLs.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use url::{Host, Url};

use super::psl::PublicSuffixList;

/// Extensions treated as static resources when they end the URL path.
pub const DEFAULT_STATIC_EXTENSIONS: [&str; 12] = [
    "png", "jpg", "jpeg", "gif", "bmp", "svg", "ico", "css", "json", "woff", "woff2", "ttf",
];

/// Why a URL was not accepted as a bait link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    Scheme,
    Loopback,
    InvalidTld,
    StaticResource,
    NullArea,
    Malformed,
    RemoteGoto,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::Scheme => "scheme",
            Rejection::Loopback => "loopback",
            Rejection::InvalidTld => "invalid-tld",
            Rejection::StaticResource => "static-resource",
            Rejection::NullArea => "null-area",
            Rejection::Malformed => "malformed",
            Rejection::RemoteGoto => "remote-goto",
        }
    }
}

#[derive(Debug, Clone)]
pub struct UrlValidator {
    psl: &'static PublicSuffixList,
    static_extensions: BTreeSet<String>,
}

impl Default for UrlValidator {
    fn default() -> Self {
        UrlValidator::with_extensions(DEFAULT_STATIC_EXTENSIONS)
    }
}

impl UrlValidator {
    pub fn with_extensions<I, S>(extensions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        UrlValidator {
            psl: PublicSuffixList::vendored(),
            static_extensions: extensions
                .into_iter()
                .map(|e| e.as_ref().trim_start_matches('.').to_ascii_lowercase())
                .collect(),
        }
    }

    pub fn shared() -> &'static UrlValidator {
        static DEFAULT: OnceLock<UrlValidator> = OnceLock::new();
        DEFAULT.get_or_init(UrlValidator::default)
    }

    /// Returns the canonical URL, or the first filter it fails. Filters run
    /// in the order scheme, loopback, top-level domain, static resource.
    pub fn validate(&self, raw: &str) -> Result<String, Rejection> {
        let url = Url::parse(raw.trim()).map_err(|_| Rejection::Malformed)?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(Rejection::Scheme);
        }
        match url.host() {
            None => return Err(Rejection::Malformed),
            Some(Host::Domain(domain)) => {
                let domain = domain.trim_end_matches('.');
                if domain == "localhost" || domain.ends_with(".localhost") {
                    return Err(Rejection::Loopback);
                }
                if !self.psl.has_registrable_domain(domain) {
                    return Err(Rejection::InvalidTld);
                }
            }
            Some(Host::Ipv4(ip)) => {
                if is_loopback(IpAddr::V4(ip)) {
                    return Err(Rejection::Loopback);
                }
            }
            Some(Host::Ipv6(ip)) => {
                if is_loopback(IpAddr::V6(ip)) {
                    return Err(Rejection::Loopback);
                }
            }
        }
        if self.is_static_resource(&url) {
            return Err(Rejection::StaticResource);
        }
        Ok(canonical(url))
    }

    fn is_static_resource(&self, url: &Url) -> bool {
        let last = url.path().rsplit('/').next().unwrap_or("");
        last.rsplit_once('.')
            .map(|(_, ext)| self.static_extensions.contains(&ext.to_ascii_lowercase()))
            .unwrap_or(false)
    }
}

/// Validates with the default extension set.
pub fn validate_url(raw: &str) -> Result<String, Rejection> {
    UrlValidator::shared().validate(raw)
}

/// Lowercased scheme and host, fragment removed. `None` when unparseable.
pub fn canonicalize(raw: &str) -> Option<String> {
    Url::parse(raw.trim()).ok().map(canonical)
}

fn canonical(mut url: Url) -> String {
    url.set_fragment(None);
    url.into()
}

fn is_loopback(ip: IpAddr) -> bool {
    match ip {
        IpAddr::V4(v4) => v4.octets()[0] == 127,
        IpAddr::V6(v6) => {
            v6 == Ipv6Addr::LOCALHOST
                || v6
                    .to_ipv4_mapped()
                    .map(|v4: Ipv4Addr| v4.octets()[0] == 127)
                    .unwrap_or(false)
        }
    }
}
