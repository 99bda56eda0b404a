//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Environment:
//! - `BAITLINE_DATASET`: pipeline output directory for the dataset-scale
//!   replication (`phash.jsonl`, `urls.jsonl`, optional `langs.jsonl`).
//!   Without it that criterion prints SKIPPED.
//! - `BAITLINE_FUZZ_SECS`: fuzz duration in seconds (default 3600).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use baitline_core::analytics::{
    campaign_stats, language_shares, DocumentRecord, LanguageLabel, Provider, ScoreTimelineSampler, HIGH_CONFIDENCE,
};
use baitline_core::bait::{extract_bait_urls, page_url_distribution, BaitUrl};
use baitline_core::fixtures::{campaign_stream, link_document, synthetic_corpus, CampaignTarget, ExpectedUrl};
use baitline_core::intel::*;
use baitline_core::pdf::{normalize, parse_document};
use baitline_core::pipeline::{read_jsonl, schema, PhashRow, UrlRecord};
use baitline_core::seo::{classify_seo, derive_directory_candidates, CrossLinkProfile, SeoHeuristicConfig, TitleQuery, TitleSource};
use baitline_core::visual::{dbscan, dedup_exact, hamming, phash, FeatureVector, PHash64, NOISE};
use chrono::{Days, NaiveDate, TimeZone, Utc};
use image::{GrayImage, Luma};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skipped(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

// ------------------------------------------------------------ extraction

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

fn fixture_exactness() -> Check {
    let corpus = synthetic_corpus(60, 2021);
    let layouts: BTreeSet<&str> = corpus.iter().map(|d| d.layout.as_str()).collect();
    let start = Instant::now();
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut expected_total = 0usize;
    for doc in &corpus {
        let graph = normalize(parse_document(&doc.bytes).map_err(|e| format!("{}: {e}", doc.name))?);
        let got: BTreeSet<ExpectedUrl> = as_expected(&extract_bait_urls(&graph).urls).into_iter().collect();
        let want: BTreeSet<ExpectedUrl> = doc.expected.iter().cloned().collect();
        expected_total += want.len();
        fp += got.difference(&want).count();
        fn_ += want.difference(&got).count();
        let leaked = doc.decoys.iter().filter(|d| got.iter().any(|g| &g.url == *d)).count();
        fp += leaked;
    }
    let elapsed = start.elapsed();
    ensure!(fp == 0 && fn_ == 0, "{fp} false positives, {fn_} false negatives");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?} (limit 5 s)");
    Ok(format!(
        "{} docs, {} layouts, {expected_total} expected URLs, 0 FP / 0 FN, {:.0} ms (limit 5 s)",
        corpus.len(),
        layouts.len(),
        elapsed.as_secs_f64() * 1000.0
    ))
}

// ------------------------------------------------------------ DBSCAN

/// Textbook quadratic DBSCAN: expand clusters from unvisited core points
/// in input order; a border point keeps the first cluster that reaches it.
fn brute_force_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<i64>, Vec<bool>) {
    let n = points.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let neigh: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect()).collect();
    let core: Vec<bool> = neigh.iter().map(|v| v.len() >= min_pts).collect();
    let mut label = vec![NOISE; n];
    let mut next = 0;
    for i in 0..n {
        if !core[i] || label[i] != NOISE {
            continue;
        }
        let mut stack = vec![i];
        label[i] = next;
        while let Some(p) = stack.pop() {
            for &q in &neigh[p] {
                if label[q] == NOISE {
                    label[q] = next;
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    (label, core)
}

fn same_partition(a: &[i64], b: &[i64], members: impl Iterator<Item = usize>) -> bool {
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    for i in members {
        if (a[i] == NOISE) != (b[i] == NOISE) {
            return false;
        }
        if a[i] == NOISE {
            continue;
        }
        if *ab.entry(a[i]).or_insert(b[i]) != b[i] || *ba.entry(b[i]).or_insert(a[i]) != a[i] {
            return false;
        }
    }
    true
}

fn dbscan_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let mut border_total = 0;
    for instance in 0..20 {
        let centers: Vec<(f64, f64)> = (0..8).map(|_| (rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0))).collect();
        let raw: Vec<Vec<f64>> = (0..500)
            .map(|i| {
                let (cx, cy) = centers[i % centers.len()];
                if i % 10 == 0 {
                    vec![rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0)]
                } else {
                    vec![cx + rng.gen_range(-10.0..10.0), cy + rng.gen_range(-10.0..10.0)]
                }
            })
            .collect();
        let eps = 0.8 + instance as f64 * 0.35;
        // Input order equals sha256 order, so the scan order is shared.
        let points: Vec<FeatureVector> = raw
            .iter()
            .enumerate()
            .map(|(i, v)| FeatureVector { sha256: format!("{i:06}"), values: v.clone() })
            .collect();
        let got: Vec<i64> = dbscan(&points, eps, 3).map_err(|e| e.to_string())?.iter().map(|a| a.cluster_id).collect();
        let (want, core) = brute_force_dbscan(&raw, eps, 3);
        ensure!(same_partition(&got, &want, 0..500), "instance {instance} (eps {eps:.2}) differs from brute force");
        border_total += (0..500).filter(|&i| !core[i] && want[i] != NOISE).count();
    }
    Ok(format!("20/20 instances (n=500, d=2, min_pts=3) identical up to relabeling; {border_total} border points"))
}

// ------------------------------------------------------------ pHash

fn render(seed: u64, w: u32, h: u32) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c) = (rng.gen_range(1..9u32), rng.gen_range(1..9u32), rng.gen_range(0..255u32));
    GrayImage::from_fn(w, h, |x, y| Luma([((x * a + y * b + c + (x * y) % 17) % 256) as u8]))
}

fn phash_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for t in 0..10_000 {
        let h = |bits: u64| PHash64 { bits, source_sha256: String::new() };
        let (x, y, z) = (h(rng.gen()), h(rng.gen()), h(rng.gen()));
        let y = if t % 100 == 0 { x.clone() } else { y };
        ensure!(hamming(&x, &x) == 0, "identity failed");
        ensure!((hamming(&x, &y) == 0) == (x.bits == y.bits), "identity of indiscernibles failed");
        ensure!(hamming(&x, &y) == hamming(&y, &x), "symmetry failed");
        ensure!(hamming(&x, &z) <= hamming(&x, &y) + hamming(&y, &z), "triangle inequality failed");
    }
    let mut hashes = Vec::new();
    for doc in 0..20u64 {
        let img = render(doc % 5, 160, 120);
        hashes.push(phash(&img, &format!("{doc:064x}")).map_err(|e| e.to_string())?);
    }
    let d = dedup_exact(&hashes);
    ensure!(d.unique_count() == 5, "identical renders gave {} groups, want 5", d.unique_count());
    ensure!(d.groups.iter().all(|g| g.members.len() == 4), "uneven groups");
    ensure!(dedup_exact(&d.representative_hashes()) == {
        let mut reps = d.clone();
        reps.groups.iter_mut().for_each(|g| g.members = vec![g.representative.clone()]);
        reps
    }, "dedup not idempotent");
    let mut shuffled = hashes.clone();
    shuffled.shuffle(&mut rng);
    ensure!(dedup_exact(&shuffled) == d, "dedup depends on input order");
    Ok("10000 triples: identity, symmetry, triangle hold; 20 renders of 5 images -> 5 groups; idempotent".into())
}

// ------------------------------------------------------------ SEO

fn seo_truth_table() -> Check {
    let cfg = SeoHeuristicConfig::default();
    let mut true_cells = Vec::new();
    for bits in 0..8u8 {
        let (many, pdf_heavy, first_not_pdf) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let total = if many { 12 } else { 10 };
        let pdf = if pdf_heavy { 10 } else { 9 };
        let profile = CrossLinkProfile {
            total_urls: total,
            pdf_suffix_count: pdf,
            first_url_is_pdf: !first_not_pdf,
            per_page_counts: vec![total],
            distinct_hosts: 1,
        };
        if classify_seo(&profile, &cfg) {
            true_cells.push((many, pdf_heavy, first_not_pdf));
        }
    }
    ensure!(true_cells == [(true, true, true)], "true cells {true_cells:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let depth = rng.gen_range(0..7);
        let segs: Vec<String> = (0..depth)
            .map(|_| (0..rng.gen_range(1..8)).map(|_| rng.gen_range(b'a'..=b'z') as char).collect())
            .collect();
        let mut url = format!("https://host{}.example.com/{}", rng.gen_range(0..50), segs.join("/"));
        if rng.gen_bool(0.3) {
            url.push_str("?q=1");
        }
        let c = derive_directory_candidates(&url);
        ensure!(!c.is_empty() && c.iter().all(|x| x.ends_with('/') && !x.contains('?')), "{url}: {c:?}");
        for w in c.windows(2) {
            ensure!(w[0].starts_with(&w[1]), "{url}: not prefix-closed {c:?}");
            ensure!(w[0].matches('/').count() > w[1].matches('/').count(), "{url}: depth not decreasing {c:?}");
        }
    }
    Ok("8 cells, unique true cell (total>=11, pdf>=10, first not .pdf); 100 URLs prefix-closed and depth-decreasing".into())
}

// ------------------------------------------------------------ sampling

fn sampling_protocols() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for instance in 0..1000 {
        let k = rng.gen_range(1..15);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(0..60)).collect();
        let budget = rng.gen_range(0..400);
        let input: BTreeMap<i64, BTreeSet<String>> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (i as i64, (0..n).map(|j| format!("https://c{i}.example.com/{j}")).collect()))
            .collect();
        let plan = plan_url_sampling(&input, budget, instance);
        let total: usize = sizes.iter().sum();
        ensure!(plan.selected_count() == budget.min(total), "instance {instance}: sum {} != min(budget, total)", plan.selected_count());
        let counts: Vec<usize> = (0..k).map(|i| plan.per_cluster[&(i as i64)].len()).collect();
        for (i, &c) in counts.iter().enumerate() {
            ensure!(c <= sizes[i], "instance {instance}: cluster {i} over its size");
            if c < sizes[i] {
                ensure!(counts.iter().all(|&d| d <= c + 1), "instance {instance}: not max-min fair {counts:?}");
            }
        }
    }

    let start = NaiveDate::from_ymd_opt(2020, 12, 16).unwrap();
    let providers = [Provider::PartnerA, Provider::PartnerB];
    let mut pool: Vec<DocumentRecord> = Vec::new();
    let mut sampler = ScoreTimelineSampler::new(5, 500);
    let mut seen: HashSet<String> = HashSet::new();
    let mut selected_total = 0;
    let mut capped_days = 0;
    for day in 0..200u64 {
        let today = start + Days::new(day);
        for p in &providers {
            for _ in 0..rng.gen_range(0..700) {
                pool.push(DocumentRecord {
                    sha256: format!("{:064x}", pool.len()),
                    cluster_id: 0,
                    first_seen: today,
                    provider: p.clone(),
                    phash: None,
                    language: None,
                    tags: BTreeSet::new(),
                });
            }
        }
        let sel = sampler.select(&pool, today);
        for (provider, files) in &sel.by_provider {
            ensure!(files.len() <= 500, "day {day}: {provider} got {}", files.len());
            capped_days += usize::from(files.len() == 500);
            for f in files {
                ensure!(seen.insert(f.clone()), "day {day}: {f} selected twice");
            }
        }
        selected_total += sel.len();
    }
    Ok(format!(
        "1000 plans exact and fair; 200 days, {selected_total} selections, no repeats, cap 500 hit on {capped_days} provider-days"
    ))
}

// ------------------------------------------------------------ campaigns

fn campaign_round_trip() -> Check {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let single = CampaignTarget {
        cluster_id: 1,
        first_seen: d(2021, 2, 3),
        last_seen: d(2021, 2, 3),
        active_days: 1,
        volume: 7,
        unique_phash: 7,
    };
    let recaptcha = CampaignTarget::from_pct(2, d(2020, 12, 16), d(2021, 6, 23), 95.8, 78_854);
    let mut targets = vec![single, recaptcha];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for id in 3..53 {
        let first = d(2020, 12, 16) + Days::new(rng.gen_range(0..150));
        let span = rng.gen_range(1..40u64);
        let last = first + Days::new(span - 1);
        let active = if span == 1 { 1 } else { rng.gen_range(2..=span as usize) };
        let volume = active + rng.gen_range(0..200);
        targets.push(CampaignTarget {
            cluster_id: id,
            first_seen: first,
            last_seen: last,
            active_days: active,
            volume,
            unique_phash: rng.gen_range(1..=volume),
        });
    }
    let records: Vec<DocumentRecord> = targets.iter().flat_map(|t| campaign_stream(t, t.cluster_id as u64)).collect();
    let stats = campaign_stats(&records);
    for t in &targets {
        let s = stats.get(&t.cluster_id).ok_or(format!("cluster {} missing", t.cluster_id))?;
        ensure!(
            (s.volume, s.unique_phash, s.first_seen, s.last_seen, s.active_days)
                == (t.volume, t.unique_phash, t.first_seen, t.last_seen, t.active_days),
            "cluster {} not recovered: {s:?}",
            t.cluster_id
        );
    }
    let one = &stats[&1];
    ensure!(one.pct_active_display() == "100.0%", "single-day cluster shows {}", one.pct_active_display());
    let rc = &stats[&2];
    ensure!((rc.pct_active - 95.8).abs() <= 0.1, "reCAPTCHA-shaped stream {:.3}% (want 95.8 +/- 0.1)", rc.pct_active);
    Ok(format!(
        "{} targets recovered exactly; single-day {}; reCAPTCHA-shaped {:.2}% (95.8 +/- 0.1)",
        targets.len(),
        one.pct_active_display(),
        rc.pct_active
    ))
}

// ------------------------------------------------------------ dataset

fn dataset_replication() -> Outcome {
    let Some(dir) = std::env::var_os("BAITLINE_DATASET") else {
        return Outcome::Skipped("BAITLINE_DATASET not set; fixture suites stand in for dataset-scale numbers".into());
    };
    match dataset_checks(Path::new(&dir)) {
        Ok(msg) => Outcome::Pass(msg),
        Err(msg) => Outcome::Fail(msg),
    }
}

fn dataset_checks(dir: &Path) -> Check {
    let mut parts = Vec::new();
    let mut failures = Vec::new();

    let phash_path = dir.join(schema::PHASH.file);
    if phash_path.exists() {
        let (_, rows) = read_jsonl::<PhashRow>(&phash_path, schema::PHASH).map_err(|e| e.to_string())?;
        let hashes: Vec<PHash64> = rows
            .iter()
            .filter_map(|r| u64::from_str_radix(&r.phash, 16).ok().map(|bits| PHash64 { bits, source_sha256: r.sha256.clone() }))
            .collect();
        let unique = dedup_exact(&hashes).unique_count();
        let msg = format!("dedup {} -> {unique} (want 185575 -> 176208 exactly)", hashes.len());
        if hashes.len() != 185_575 || unique != 176_208 {
            failures.push(msg.clone());
        }
        parts.push(msg);
    }

    let urls_path = dir.join(schema::URLS.file);
    if urls_path.exists() {
        let (_, rows) = read_jsonl::<UrlRecord>(&urls_path, schema::URLS).map_err(|e| e.to_string())?;
        let hist = page_url_distribution(rows.iter().map(|r| (r.sha256.as_str(), r.urls.as_slice())));
        let url_share = 100.0 * hist.first_page_url_share();
        let doc_share = 100.0 * hist.first_page_document_share();
        let msg = format!("first-page URL share {url_share:.1}% (86 +/- 2), document share {doc_share:.1}% (99 +/- 1)");
        if (url_share - 86.0).abs() > 2.0 || (doc_share - 99.0).abs() > 1.0 {
            failures.push(msg.clone());
        }
        parts.push(msg);
    }

    let langs_path = dir.join("langs.jsonl");
    if langs_path.exists() {
        #[derive(serde::Deserialize)]
        struct Row {
            sha256: String,
            code: String,
            confidence: f64,
        }
        let text = std::fs::read_to_string(&langs_path).map_err(|e| e.to_string())?;
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: Row = serde_json::from_str(line).map_err(|e| e.to_string())?;
            records.push(DocumentRecord {
                sha256: r.sha256,
                cluster_id: 0,
                first_seen: NaiveDate::MIN,
                provider: Provider::PartnerA,
                phash: None,
                language: Some(LanguageLabel { code: r.code, confidence: r.confidence }),
                tags: BTreeSet::new(),
            });
        }
        let en = 100.0 * language_shares(&records, HIGH_CONFIDENCE).get("en").copied().unwrap_or(0.0);
        let msg = format!("English share {en:.1}% (95 +/- 2)");
        if (en - 95.0).abs() > 2.0 {
            failures.push(msg.clone());
        }
        parts.push(msg);
    }

    ensure!(!parts.is_empty(), "{} holds none of phash.jsonl, urls.jsonl, langs.jsonl", dir.display());
    ensure!(failures.is_empty(), "{}", failures.join("; "));
    Ok(parts.join("; "))
}

// ------------------------------------------------------------ network

fn json(status: u16, body: &str) -> HttpResponse {
    HttpResponse::new(status, Some("application/json"), body.as_bytes())
}

fn pdf(bytes: Vec<u8>) -> HttpResponse {
    HttpResponse::new(200, Some("application/pdf"), bytes)
}

fn seo_pdf(marker: &str) -> Vec<u8> {
    let mut links = vec![format!("https://{marker}.com/landing")];
    links.extend((0..11).map(|i| format!("https://{marker}.com/files/doc-{i}.pdf")));
    let refs: Vec<&str> = links.iter().map(String::as_str).collect();
    link_document(&[&refs], Some("Free movie download pdf"))
}

/// Replay transport that counts requests and remembers served bodies.
struct Instrumented {
    inner: ReplayTransport,
    requests: AtomicU64,
    served: Mutex<Vec<Vec<u8>>>,
}

impl Transport for Instrumented {
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, IntelError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let r = self.inner.execute(request)?;
        self.served.lock().unwrap().push(r.body.clone());
        Ok(r)
    }
}

fn offline_network() -> Check {
    let at = Utc.with_ymd_and_hms(2021, 3, 1, 12, 0, 0).unwrap();
    let seo = SeoHeuristicConfig::default();

    // Search probes.
    let q = TitleQuery { sha256: "cd".repeat(32), title: "free movie download".into(), source: TitleSource::InfoDictionary };
    let shape_g = SearchClient::google(ReplayTransport::default(), "k", "cx");
    let shape_b = SearchClient::bing(ReplayTransport::default(), "k");
    let bing_results = ["https://seo-site.com/x.pdf", "https://known.com/a.pdf"];
    let google_body = r#"{"items":[{"link":"https://other.com/"},{"link":"https://KNOWN.com/a.pdf#p"}]}"#;
    let bing_body = format!(
        r#"{{"webPages":{{"value":[{{"url":"{}"}},{{"url":"{}"}}]}}}}"#,
        bing_results[0], bing_results[1]
    );
    let search_log = ReplayTransport::from_pairs([
        (&shape_g.request_for(&q.title).unwrap(), &json(200, google_body)),
        (&shape_b.request_for(&q.title).unwrap(), &json(200, &bing_body)),
        (&HttpRequest::get(bing_results[0]), &pdf(seo_pdf("seo-site"))),
        (&HttpRequest::get(bing_results[1]), &HttpResponse::new(404, None, "gone")),
    ]);
    let known: BTreeSet<String> = ["https://known.com/a.pdf".to_string()].into();
    let check = FetchCheck { transport: &search_log, seo: &seo };
    let google = probe_search(&q, &SearchClient::google(&search_log, "other", "cx"), &known, None, at).map_err(|e| e.to_string())?;
    ensure!(google.rank_hits.len() == 1 && google.rank_hits[0].rank == 2, "google hits {:?}", google.rank_hits);
    let bing = probe_search(&q, &SearchClient::bing(&search_log, "other"), &known, Some(&check), at).map_err(|e| e.to_string())?;
    let kinds: Vec<(u8, MatchKind)> = bing.rank_hits.iter().map(|h| (h.rank, h.match_kind)).collect();
    ensure!(kinds == [(1, MatchKind::CrossLinkHeuristic), (2, MatchKind::ExactUrl)], "bing hits {kinds:?}");

    // Directory monitoring with payload-persistence instrumentation.
    let index = "https://files.example.com/pub/docs/";
    let page = "<html><head><title>Index of /pub/docs</title></head><body><pre>\
        <a href=\"../\">../</a>\n<a href=\"a.pdf\">a.pdf</a>  01-Mar-2021 10:00  2.0K\n\
        <a href=\"b.pdf\">b.pdf</a>  01-Mar-2021 10:00  2.0K\n</pre></body></html>";
    let dir_log = ReplayTransport::from_pairs([
        (&HttpRequest::get(index), &HttpResponse::new(200, Some("text/html"), page)),
        (&HttpRequest::get(format!("{index}a.pdf")), &pdf(seo_pdf("payload-marker-a"))),
        (&HttpRequest::get(format!("{index}b.pdf")), &pdf(seo_pdf("payload-marker-b"))),
    ]);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let transport = Instrumented { inner: dir_log, requests: AtomicU64::new(0), served: Mutex::new(Vec::new()) };
    let first = monitor_directory(index, None, &transport, &seo, at).map_err(|e| e.to_string())?;
    let second = monitor_directory(index, Some(&first.snapshot), &transport, &seo, at).map_err(|e| e.to_string())?;
    ensure!(first.new_entries.len() == 2 && second.new_entries.is_empty(), "directory diff wrong");
    ensure!(first.new_entries.iter().all(|e| e.seo_flag), "new entries not inspected");
    let serialized = serde_json::to_string(&(&first, &second)).map_err(|e| e.to_string())?;
    ensure!(!serialized.contains("payload-marker") && !serialized.contains("%PDF"), "payload bytes persisted");
    ensure!(std::fs::read_dir(tmp.path()).map_err(|e| e.to_string())?.count() == 0, "files written");
    let pdfs_served = transport.served.lock().unwrap().iter().filter(|b| b.starts_with(b"%PDF")).count();

    // Reputation.
    let vt = |m: u64| {
        format!(r#"{{"data":{{"attributes":{{"last_analysis_stats":{{"malicious":{m},"suspicious":0,"harmless":70,"undetected":5}}}}}}}}"#)
    };
    let shape = ReputationClient::new(ReplayTransport::default(), "k");
    let rep_log = ReplayTransport::from_pairs([
        (&shape.request_for("https://bad.com/"), &json(200, &vt(4))),
        (&shape.request_for("https://fine.com/"), &json(200, &vt(0))),
        (&shape.request_for("https://new.com/"), &json(404, "{}")),
    ]);
    let client = ReputationClient::new(&rep_log, "other");
    let statuses: Vec<ReputationStatus> = ["https://bad.com/", "https://fine.com/", "https://new.com/"]
        .iter()
        .map(|u| lookup_reputation(u, &client).map(|r| r.status))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure!(
        statuses == [ReputationStatus::Malicious, ReputationStatus::Benign, ReputationStatus::Unknown],
        "reputation {statuses:?}"
    );

    // Blocklists.
    let lists = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(lists.path().join("easylist-2021-01-01.txt"), "||ads.com^\n@@||ads.com/ok/\n").map_err(|e| e.to_string())?;
    let archive = BlocklistArchive::load_dir(lists.path()).map_err(|e| e.to_string())?;
    let pages: Vec<PageRequests> = (0..5)
        .map(|i| PageRequests {
            page_url: format!("https://landing{i}.com/"),
            observed: NaiveDate::from_ymd_opt(2021, 2, 1).unwrap(),
            requests: vec![if i < 2 { "https://ads.com/x.js".into() } else { "https://ads.com/ok/y.js".into() }],
        })
        .collect();
    let share = blocked_page_share(&match_pages(&pages, &archive));
    ensure!(share == 40.0, "blocked share {share}");

    Ok(format!(
        "search exact+heuristic, directory diff ({} requests, {pdfs_served} PDFs inspected in memory, none persisted), \
         reputation tri-state, blocklist 40% share; replay only",
        transport.requests.load(Ordering::Relaxed)
    ))
}

// ------------------------------------------------------------ fuzz

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    const TOKENS: &[&[u8]] = &[
        b"obj", b"endobj", b"<<", b">>", b"[", b"]", b"R", b"stream\n", b"endstream", b"/Kids", b"/Annots",
        b"/URI", b"xref", b"trailer", b"startxref", b"/Filter /FlateDecode", b"/Length 999999", b"(", b")", b"\\",
        b"0 0 R", b"-1", b"9999999999", b"/Type /ObjStm", b"%%EOF",
    ];
    let mut data = seed.to_vec();
    for _ in 0..rng.gen_range(1..12) {
        if data.is_empty() {
            data.extend_from_slice(TOKENS[rng.gen_range(0..TOKENS.len())]);
            continue;
        }
        let pos = rng.gen_range(0..data.len());
        match rng.gen_range(0..7) {
            0 => data[pos] ^= 1 << rng.gen_range(0..8),
            1 => data[pos] = rng.gen(),
            2 => data.truncate(pos),
            3 => {
                let end = (pos + rng.gen_range(1..64)).min(data.len());
                data.drain(pos..end);
            }
            4 => {
                let t = TOKENS[rng.gen_range(0..TOKENS.len())];
                data.splice(pos..pos, t.iter().copied());
            }
            5 => {
                let end = (pos + rng.gen_range(1..256)).min(data.len());
                let chunk = data[pos..end].to_vec();
                let at = rng.gen_range(0..=data.len());
                data.splice(at..at, chunk);
            }
            _ => {
                let n = rng.gen_range(1..8);
                for b in data.iter_mut().skip(pos).take(n) {
                    if b.is_ascii_digit() {
                        *b = rng.gen_range(b'0'..=b'9');
                    }
                }
            }
        }
    }
    data
}

fn fuzz_one(bytes: &[u8]) {
    if let Ok(doc) = parse_document(bytes) {
        let graph = normalize(doc);
        let _ = extract_bait_urls(&graph);
    }
}

fn robustness() -> Check {
    let secs: u64 = std::env::var("BAITLINE_FUZZ_SECS").ok().and_then(|s| s.parse().ok()).unwrap_or(3600);
    let timeout = Duration::from_secs(2);
    let seeds: Arc<Vec<Vec<u8>>> = Arc::new(synthetic_corpus(60, 9).into_iter().map(|d| d.bytes).collect());
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let stop = Arc::new(AtomicBool::new(false));
    let executed = Arc::new(AtomicU64::new(0));
    let crashes: Arc<Mutex<Vec<Vec<u8>>>> = Arc::new(Mutex::new(Vec::new()));
    let epoch = Instant::now();
    // Per worker: start of the current document in ms since epoch + 1, 0 when idle.
    let busy: Arc<Vec<AtomicU64>> = Arc::new((0..workers).map(|_| AtomicU64::new(0)).collect());
    let current: Arc<Vec<Mutex<Vec<u8>>>> = Arc::new((0..workers).map(|_| Mutex::new(Vec::new())).collect());

    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let handles: Vec<_> = (0..workers)
        .map(|w| {
            let (seeds, stop, executed, crashes, busy, current) =
                (seeds.clone(), stop.clone(), executed.clone(), crashes.clone(), busy.clone(), current.clone());
            std::thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(0xF022 + w as u64);
                while !stop.load(Ordering::Relaxed) {
                    let seed = &seeds[rng.gen_range(0..seeds.len())];
                    let input = mutate(&mut rng, seed);
                    *current[w].lock().unwrap() = input.clone();
                    busy[w].store(epoch.elapsed().as_millis() as u64 + 1, Ordering::SeqCst);
                    if panic::catch_unwind(AssertUnwindSafe(|| fuzz_one(&input))).is_err() {
                        crashes.lock().unwrap().push(input);
                    }
                    busy[w].store(0, Ordering::SeqCst);
                    executed.fetch_add(1, Ordering::Relaxed);
                }
            })
        })
        .collect();

    let deadline = Duration::from_secs(secs);
    let mut hang: Option<Vec<u8>> = None;
    while epoch.elapsed() < deadline && hang.is_none() && crashes.lock().unwrap().is_empty() {
        std::thread::sleep(Duration::from_millis(100));
        let now = epoch.elapsed().as_millis() as u64 + 1;
        for w in 0..workers {
            let started = busy[w].load(Ordering::SeqCst);
            if started != 0 && now.saturating_sub(started) > timeout.as_millis() as u64 {
                hang = Some(current[w].lock().unwrap().clone());
            }
        }
    }
    stop.store(true, Ordering::SeqCst);
    if hang.is_none() {
        for h in handles {
            let _ = h.join();
        }
    }
    panic::set_hook(hook);

    let n = executed.load(Ordering::Relaxed);
    let elapsed = epoch.elapsed().as_secs();
    let save = |name: &str, bytes: &[u8]| {
        let path = std::env::temp_dir().join(name);
        let _ = std::fs::write(&path, bytes);
        path.display().to_string()
    };
    if let Some(input) = hang {
        return Err(format!("document exceeded 2 s after {n} runs; input saved to {}", save("baitline-fuzz-hang.pdf", &input)));
    }
    if let Some(input) = crashes.lock().unwrap().first() {
        return Err(format!("panic after {n} runs; input saved to {}", save("baitline-fuzz-crash.pdf", input)));
    }
    Ok(format!("{n} mutated documents over {elapsed} s on {workers} worker thread(s), 0 crashes, 0 hangs (2 s/document)"))
}

// ------------------------------------------------------------ driver

fn guarded(f: fn() -> Check) -> Outcome {
    match panic::catch_unwind(f) {
        Ok(Ok(msg)) => Outcome::Pass(msg),
        Ok(Err(msg)) => Outcome::Fail(msg),
        Err(p) => Outcome::Fail(format!(
            "panicked: {}",
            p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
        )),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("fixture-extraction-exactness", Box::new(|| guarded(fixture_exactness))),
        ("dbscan-oracle-equivalence", Box::new(|| guarded(dbscan_oracle))),
        ("phash-metric-suite", Box::new(|| guarded(phash_suite))),
        ("seo-truth-table", Box::new(|| guarded(seo_truth_table))),
        ("sampling-protocols", Box::new(|| guarded(sampling_protocols))),
        ("campaign-stats-round-trip", Box::new(|| guarded(campaign_round_trip))),
        ("dataset-scale-replication", Box::new(dataset_replication)),
        ("offline-network-suite", Box::new(|| guarded(offline_network))),
        ("robustness-fuzz", Box::new(|| guarded(robustness))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(msg) => println!("PASS {name}: {msg}"),
            Outcome::Fail(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
            Outcome::Skipped(msg) => println!("SKIPPED {name}: {msg}"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
