//! Final tables. Every file is a pure function of the stage outputs, so
//! reruns on the same inputs are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::jsonl::{read_jsonl, schema, Schema};
use super::network::{ReputationRow, SamplingRow};
use super::{Context, PipelineError, StageReport};
use crate::analytics::{cdf_series, short_date, CampaignStats, LanguageRollup};
use crate::bait::page_url_distribution;
use crate::intel::{blocked_page_share, summarize_probes, PageBlockResult, ReputationSummary, SearchProbeResult};
use crate::seo::{keyword_stats, SeoReport};

pub const REPORT_FILES: [&str; 12] = [
    "campaigns.csv",
    "cdf_volume.csv",
    "cdf_activity.csv",
    "keywords_unigrams.csv",
    "keywords_bigrams.csv",
    "url_pages.csv",
    "search_engines.csv",
    "reputation.csv",
    "languages.csv",
    "blocklist.csv",
    "sampling_coverage.csv",
    "summary.csv",
];

const TOP_KEYWORDS: usize = 50;

fn load<T: for<'de> Deserialize<'de>>(
    ctx: &Context,
    s: Schema,
    report: &mut StageReport,
) -> Result<Option<Vec<T>>, PipelineError> {
    let path = ctx.path(s.file);
    if !path.exists() {
        report.warn(&format!("missing-{}", s.file));
        return Ok(None);
    }
    report.input(s.file, 0);
    let rows = read_jsonl(&path, s)?.1;
    *report.inputs.get_mut(s.file).expect("just inserted") = rows.len() as u64;
    Ok(Some(rows))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), PipelineError> {
    let csv_err = |e: csv::Error| PipelineError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

fn cdf_rows(values: &[f64]) -> Vec<Vec<String>> {
    cdf_series(values)
        .map(|s| s.into_iter().map(|(v, f)| vec![format!("{v}"), format!("{f:.6}")]).collect())
        .unwrap_or_default()
}

pub(crate) fn run(ctx: &Context, report: &mut StageReport) -> Result<(), PipelineError> {
    let mut summary: Vec<(String, String)> = Vec::new();
    let emit = |report: &mut StageReport, file: &str, header: &[&str], rows: Vec<Vec<String>>| {
        report.count(file, rows.len());
        report.output(file);
        write_csv(&ctx.path(file), header, rows)
    };

    if let Some(mut campaigns) = load::<CampaignStats>(ctx, schema::CAMPAIGNS, report)? {
        campaigns.sort_by(|a, b| b.volume.cmp(&a.volume).then(a.cluster_id.cmp(&b.cluster_id)));
        let rows = campaigns
            .iter()
            .map(|c| {
                vec![
                    c.cluster_id.to_string(),
                    c.volume.to_string(),
                    c.unique_phash.to_string(),
                    c.avg_per_day_display().to_string(),
                    short_date(c.first_seen),
                    short_date(c.last_seen),
                    c.pct_active_display(),
                ]
            })
            .collect();
        let header = ["Cluster", "Volume", "# Unique Phash", "Avg/day", "First seen", "Last seen", "% Active"];
        emit(report, "campaigns.csv", &header, rows)?;
        let volumes: Vec<f64> = campaigns.iter().map(|c| c.volume as f64).collect();
        let activity: Vec<f64> = campaigns.iter().map(|c| c.pct_active).collect();
        emit(report, "cdf_volume.csv", &["volume", "cdf"], cdf_rows(&volumes))?;
        emit(report, "cdf_activity.csv", &["pct_active", "cdf"], cdf_rows(&activity))?;
        let total: usize = campaigns.iter().map(|c| c.volume).sum();
        let top3: usize = campaigns.iter().take(3).map(|c| c.volume).sum();
        summary.push(("clustered_documents".into(), total.to_string()));
        summary.push(("campaigns".into(), campaigns.len().to_string()));
        if total > 0 {
            summary.push(("top3_campaign_share_pct".into(), format!("{:.1}", 100.0 * top3 as f64 / total as f64)));
        }
    }

    if let Some(seo) = load::<SeoReport>(ctx, schema::SEO, report)? {
        let titles: BTreeSet<&str> = seo
            .iter()
            .filter(|r| r.seo_flag)
            .filter_map(|r| r.title.as_ref().map(|t| t.title.as_str()))
            .collect();
        let stats = keyword_stats(titles.iter().copied());
        let uni = stats
            .top_unigrams(TOP_KEYWORDS)
            .into_iter()
            .enumerate()
            .map(|(i, (k, n))| vec![(i + 1).to_string(), k.to_string(), n.to_string()])
            .collect();
        let bi = stats
            .top_bigrams(TOP_KEYWORDS)
            .into_iter()
            .enumerate()
            .map(|(i, ((a, b), n))| vec![(i + 1).to_string(), format!("{a} {b}"), n.to_string()])
            .collect();
        emit(report, "keywords_unigrams.csv", &["rank", "keyword", "titles"], uni)?;
        emit(report, "keywords_bigrams.csv", &["rank", "bigram", "titles"], bi)?;
        summary.push(("seo_documents".into(), seo.iter().filter(|r| r.seo_flag).count().to_string()));
        summary.push(("seo_distinct_titles".into(), titles.len().to_string()));
    }

    if let Some(urls) = load::<super::UrlRecord>(ctx, schema::URLS, report)? {
        let hist = page_url_distribution(urls.iter().map(|r| (r.sha256.as_str(), r.urls.as_slice())));
        let rows = hist
            .buckets()
            .into_iter()
            .map(|b| vec![b.page_index.to_string(), b.unique_urls.to_string(), b.unique_documents.to_string()])
            .collect();
        emit(report, "url_pages.csv", &["page_index", "unique_urls", "unique_documents"], rows)?;
        summary.push(("first_page_url_share_pct".into(), format!("{:.1}", 100.0 * hist.first_page_url_share())));
        summary.push((
            "first_page_document_share_pct".into(),
            format!("{:.1}", 100.0 * hist.first_page_document_share()),
        ));
    }

    if let Some(probes) = load::<SearchProbeResult>(ctx, schema::PROBES, report)? {
        let rows = summarize_probes(&probes)
            .into_iter()
            .map(|s| {
                vec![
                    s.engine.as_str().to_string(),
                    s.probes.to_string(),
                    s.days.to_string(),
                    s.exact_total.to_string(),
                    format!("{:.2}", s.exact_daily_avg),
                    s.heuristic_total.to_string(),
                    format!("{:.2}", s.heuristic_daily_avg),
                ]
            })
            .collect();
        let header = ["Engine", "Probes", "Days", "Exact total", "Exact daily avg", "Heuristic total", "Heuristic daily avg"];
        emit(report, "search_engines.csv", &header, rows)?;
    }

    if let Some(rep) = load::<ReputationRow>(ctx, schema::REPUTATION, report)? {
        let reports: Vec<_> = rep
            .iter()
            .filter_map(|r| {
                r.status.map(|status| crate::intel::ReputationReport {
                    url: r.url.clone(),
                    status,
                    votes: None,
                })
            })
            .collect();
        let s = ReputationSummary::from_reports(&reports);
        let (u, b, m) = s.percentages();
        let rows = vec![
            vec!["unknown".into(), s.unknown.to_string(), format!("{u:.1}")],
            vec!["benign".into(), s.benign.to_string(), format!("{b:.1}")],
            vec!["malicious".into(), s.malicious.to_string(), format!("{m:.1}")],
            vec!["error".into(), (rep.len() - s.total).to_string(), String::new()],
        ];
        emit(report, "reputation.csv", &["status", "urls", "pct"], rows)?;
    }

    if let Some(plan) = load::<SamplingRow>(ctx, schema::SAMPLING_PLAN, report)? {
        let rows = plan
            .iter()
            .map(|r| {
                vec![
                    r.cluster_id.to_string(),
                    r.cluster_urls.to_string(),
                    r.selected.len().to_string(),
                    format!("{:.2}", 100.0 * r.coverage),
                ]
            })
            .collect();
        emit(report, "sampling_coverage.csv", &["cluster", "urls", "selected", "coverage_pct"], rows)?;
    }

    #[derive(Deserialize)]
    struct LangRow {
        rollup: LanguageRollup,
    }
    if let Some(langs) = load::<LangRow>(ctx, schema::LANGUAGES, report)? {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut labeled = 0;
        for row in &langs {
            labeled += row.rollup.labeled;
            for (code, n) in &row.rollup.languages {
                *counts.entry(code).or_default() += n;
            }
        }
        let mut rows: Vec<(&str, usize)> = counts.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let rows = rows
            .into_iter()
            .map(|(code, n)| vec![code.to_string(), n.to_string(), format!("{:.1}", 100.0 * n as f64 / labeled as f64)])
            .collect();
        emit(report, "languages.csv", &["language", "documents", "pct"], rows)?;
        summary.push((
            "regional_clusters".into(),
            langs.iter().filter(|r| r.rollup.regional).count().to_string(),
        ));
    }

    if let Some(pages) = load::<PageBlockResult>(ctx, schema::BLOCKLIST, report)? {
        let blocked = pages.iter().filter(|p| !p.blocked.is_empty()).count();
        let rows = vec![vec![
            pages.len().to_string(),
            blocked.to_string(),
            format!("{:.1}", blocked_page_share(&pages)),
        ]];
        emit(report, "blocklist.csv", &["pages", "pages_with_blocked_request", "pct"], rows)?;
    }

    let rows = summary.into_iter().map(|(k, v)| vec![k, v]).collect();
    emit(report, "summary.csv", &["metric", "value"], rows)?;
    Ok(())
}
