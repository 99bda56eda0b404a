use std::collections::{BTreeMap, BTreeSet, HashSet};

use baitline_core::analytics::{
    attachment_evidence, campaign_stats, cdf_series, language_rollup, language_shares, round_half_up,
    score_timeline_aggregate, short_date, AnalyticsError, CollectionWindow, DocumentRecord, LanguageLabel, Provider,
    ScoreObservation, ScoreTimelineSampler, HIGH_CONFIDENCE,
};
use baitline_core::fixtures::{campaign_stream, CampaignTarget};
use chrono::{Days, NaiveDate};
use proptest::prelude::*;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn rec(sha: &str, cluster: i64, day: NaiveDate) -> DocumentRecord {
    DocumentRecord {
        sha256: sha.into(),
        cluster_id: cluster,
        first_seen: day,
        provider: Provider::PartnerA,
        phash: None,
        language: None,
        tags: BTreeSet::new(),
    }
}

#[test]
fn single_day_cluster_is_fully_active() {
    let target = CampaignTarget {
        cluster_id: 4,
        first_seen: date(2020, 12, 21),
        last_seen: date(2020, 12, 21),
        active_days: 1,
        volume: 5,
        unique_phash: 5,
    };
    let stats = &campaign_stats(&campaign_stream(&target, 1))[&4];
    assert_eq!(stats.pct_active, 100.0);
    assert_eq!(stats.pct_active_display(), "100.0%");
    assert_eq!(stats.avg_per_day_display(), 5);
    assert_eq!(stats.volume, 5);
}

#[test]
fn two_active_days_in_ten() {
    let records = [rec("a", 1, date(2021, 1, 1)), rec("b", 1, date(2021, 1, 10)), rec("c", 1, date(2021, 1, 10))];
    let s = &campaign_stats(&records)[&1];
    assert_eq!((s.span_days, s.active_days), (10, 2));
    assert!((s.pct_active - 20.0).abs() < 1e-12);
    assert_eq!(s.avg_per_day, 1.5);
    assert_eq!(s.avg_per_day_display(), 2, "half rounds up");
}

#[test]
fn recaptcha_shaped_stream_round_trips() {
    let target = CampaignTarget::from_pct(0, date(2020, 12, 16), date(2021, 6, 23), 95.8, 78_854);
    assert_eq!((target.span_days(), target.active_days), (190, 182));
    let records = campaign_stream(&target, 42);
    CollectionWindow::default().validate(&records).unwrap();
    let s = &campaign_stats(&records)[&0];
    assert_eq!(s.volume, 78_854);
    assert_eq!((short_date(s.first_seen), short_date(s.last_seen)), ("16.12.20".into(), "23.06.21".into()));
    assert!((s.pct_active - 95.8).abs() <= 0.1, "{}", s.pct_active);
    assert_eq!(s.pct_active_display(), "95.8%");
    assert_eq!(s.active_days, 182);
    assert_eq!(s.avg_per_day_display(), round_half_up(78_854.0 / 182.0));
}

#[test]
fn noise_and_duplicates_are_not_counted() {
    let day = date(2021, 2, 2);
    let mut a = rec("a", 3, day);
    a.phash = Some(9);
    let mut b = rec("b", 3, day);
    b.phash = Some(9);
    let stats = campaign_stats(&[a.clone(), a, b, rec("c", 3, day), rec("n", -1, day)]);
    assert_eq!(stats.len(), 1);
    assert_eq!((stats[&3].volume, stats[&3].unique_phash), (3, 2));
}

#[test]
fn window_validation() {
    let w = CollectionWindow::default();
    assert!(matches!(w.validate(&[rec("x", 0, date(2022, 1, 1))]), Err(AnalyticsError::OutsideWindow { .. })));
    let mut r = rec("y", 0, date(2021, 1, 1));
    r.language = Some(LanguageLabel { code: "en".into(), confidence: 1.5 });
    assert!(matches!(w.validate(&[r]), Err(AnalyticsError::BadConfidence(_))));
}

#[test]
fn cdf_examples() {
    assert_eq!(cdf_series(&[1.0, 1.0, 2.0]).unwrap(), [(1.0, 2.0 / 3.0), (2.0, 1.0)]);
    assert_eq!(cdf_series(&[4.0; 7]).unwrap(), [(4.0, 1.0)]);
    assert_eq!(cdf_series(&[]), Err(AnalyticsError::EmptyInput));
    assert_eq!(cdf_series(&[f64::NAN]), Err(AnalyticsError::NonFinite));
}

fn pool(n: usize, provider: Provider, day: NaiveDate, prefix: &str) -> Vec<DocumentRecord> {
    (0..n)
        .map(|i| DocumentRecord { provider: provider.clone(), ..rec(&format!("{prefix}{i:05}"), 0, day) })
        .collect()
}

#[test]
fn sampler_caps_and_never_repeats() {
    let d0 = date(2021, 3, 1);
    let mut all = pool(120, Provider::PartnerA, d0, "a");
    all.extend(pool(700, Provider::PartnerB, d0, "b"));
    let mut s = ScoreTimelineSampler::new(7, 500);
    assert!(s.select(&all, d0).is_empty(), "files seen on the sampling day are not eligible");
    let day1 = s.select(&all, d0 + Days::new(1));
    assert_eq!(day1.by_provider["partner-a"].len(), 120);
    assert_eq!(day1.by_provider["partner-b"].len(), 500);
    let day2 = s.select(&all, d0 + Days::new(2));
    assert_eq!(day2.len(), 200);
    let first: HashSet<&String> = day1.by_provider.values().flatten().collect();
    assert!(day2.by_provider.values().flatten().all(|x| !first.contains(x)));
    assert!(s.select(&all, d0 + Days::new(3)).is_empty());

    let mut again = ScoreTimelineSampler::new(7, 500);
    again.select(&all, d0);
    assert_eq!(again.select(&all, d0 + Days::new(1)), day1);
}

#[test]
fn timeline_aggregate_examples() {
    let obs = |cohort: &str, off, score| ScoreObservation { sha256: "x".into(), cohort: cohort.into(), day_offset: off, score };
    let flat: Vec<_> = (0..5).map(|o| obs("maldoc", o, 9.0)).collect();
    assert!(score_timeline_aggregate(&flat).iter().all(|p| p.mean == 9.0 && p.variance == 0.0));
    let pts = score_timeline_aggregate(&[obs("lure-all", 3, 4.0), obs("lure-all", 3, 6.0)]);
    assert_eq!((pts[0].mean, pts[0].variance, pts[0].count), (5.0, 1.0, 2));
}

#[test]
fn timeline_recovers_generated_drift() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let drift = |cohort: &str, offset: i64| match cohort {
        "benign" => 0.5,
        _ => 10.0 + 0.25 * offset as f64,
    };
    let mut obs = Vec::new();
    for cohort in ["benign", "lure-all"] {
        for offset in 0..30 {
            for k in 0..40 {
                // Symmetric +-noise pairs keep the mean exact.
                let noise = if k % 2 == 0 { rng.gen_range(0.0..2.0) } else { -obs.last().map_or(0.0, |o: &ScoreObservation| o.score - drift(cohort, offset)) };
                obs.push(ScoreObservation { sha256: format!("{k}"), cohort: cohort.into(), day_offset: offset, score: drift(cohort, offset) + noise });
            }
        }
    }
    for p in score_timeline_aggregate(&obs) {
        assert!((p.mean - drift(&p.cohort, p.day_offset)).abs() < 1e-9, "{p:?}");
    }
}

#[test]
fn attachment_examples() {
    let records: Vec<DocumentRecord> = ["a", "b", "c"].iter().map(|s| rec(s, 1, date(2021, 1, 1)))
        .chain(["d"].iter().map(|s| rec(s, 2, date(2021, 1, 1))))
        .chain((0..9).map(|i| rec(&format!("t{i}"), 3, date(2021, 1, 1))))
        .collect();
    let hits: BTreeMap<String, u64> = [("a", 3), ("b", 2), ("d", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let tagged: BTreeSet<String> = (0..9).map(|i| format!("t{i}")).collect();
    let ev = attachment_evidence(&records, &hits, &tagged);
    assert!(ev[&1].meets_threshold);
    assert_eq!((ev[&1].hits, ev[&1].files), (5, 2));
    assert!(!ev[&2].meets_threshold);
    assert!(ev[&3].meets_threshold);
    assert_eq!(ev[&3].tagged_files, 9);
}

#[test]
fn language_examples() {
    let with_lang = |sha: &str, cluster, code: &str, conf| DocumentRecord {
        language: Some(LanguageLabel { code: code.into(), confidence: conf }),
        ..rec(sha, cluster, date(2021, 1, 1))
    };
    let mut records: Vec<_> = (0..50).map(|i| with_lang(&format!("e{i}"), 1, "en", 0.99)).collect();
    records.push(with_lang("r", 2, "ru", 0.95));
    records.push(with_lang("s", 2, "en", 0.91));
    records.push(with_lang("low", 1, "es", 0.5));
    let r = language_rollup(&records, HIGH_CONFIDENCE);
    assert!(r[&1].regional);
    assert_eq!(r[&1].languages.keys().collect::<Vec<_>>(), ["en"]);
    assert!(!r[&2].regional);
    assert_eq!(r[&2].languages.len(), 2);
    let shares = language_shares(&records, HIGH_CONFIDENCE);
    assert!((shares["en"] - 51.0 / 52.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn pct_active_bounds(offsets in prop::collection::btree_set(0u64..60, 1..30)) {
        let start = date(2021, 1, 1);
        let records: Vec<_> = offsets.iter().map(|&o| rec(&format!("{o}"), 0, start + Days::new(o))).collect();
        let s = &campaign_stats(&records)[&0];
        prop_assert!((0.0..=100.0).contains(&s.pct_active));
        let full = offsets.len() as u64 == offsets.last().unwrap() - offsets.first().unwrap() + 1;
        prop_assert_eq!(s.pct_active == 100.0, full);
        prop_assert!(s.first_seen <= s.last_seen && s.unique_phash <= s.volume);
    }

    #[test]
    fn cdf_is_monotone(values in prop::collection::vec(-1e6f64..1e6, 1..60)) {
        let c = cdf_series(&values).unwrap();
        prop_assert!(c.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        prop_assert_eq!(c.last().unwrap().1, 1.0);
    }

    #[test]
    fn attachment_monotone(hits in prop::collection::vec(0u64..4, 4), extra in 0usize..4, tags in prop::collection::vec(any::<bool>(), 4)) {
        let records: Vec<_> = (0..4).map(|i| rec(&format!("f{i}"), 0, date(2021, 1, 1))).collect();
        let as_map = |h: &[u64]| h.iter().enumerate().map(|(i, v)| (format!("f{i}"), *v)).collect::<BTreeMap<_, _>>();
        let tagged: BTreeSet<String> = tags.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| format!("f{i}")).collect();
        let base = attachment_evidence(&records, &as_map(&hits), &tagged)[&0].meets_threshold;
        let mut more = hits.clone();
        more[extra] += 1;
        let mut more_tags = tagged.clone();
        more_tags.insert(format!("f{extra}"));
        prop_assert!(!base || attachment_evidence(&records, &as_map(&more), &tagged)[&0].meets_threshold);
        prop_assert!(!base || attachment_evidence(&records, &as_map(&hits), &more_tags)[&0].meets_threshold);
    }
}
