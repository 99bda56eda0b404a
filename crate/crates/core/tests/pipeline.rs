use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use baitline_core::fixtures::synthetic_corpus;
use baitline_core::intel::{HttpRequest, HttpResponse, ReplayEntry};
use baitline_core::pipeline::{
    read_jsonl, run, schema, write_jsonl, AnalyzeInputs, Command, Context, CorpusRecord, PageScope, ParseStatus,
    PipelineConfig, PipelineError, RunManifest, RUN_MANIFEST_FILE,
};
use chrono::{TimeZone, Utc};

fn write_pdfs(dir: &Path, n: usize) -> Vec<(String, PathBuf)> {
    fs::create_dir_all(dir).unwrap();
    synthetic_corpus(n, 7)
        .into_iter()
        .map(|doc| {
            let path = dir.join(&doc.name);
            fs::write(&path, &doc.bytes).unwrap();
            (doc.sha256, path)
        })
        .collect()
}

fn ctx(out: &Path, config: PipelineConfig) -> Context {
    let mut ctx = Context::new(config, out.to_path_buf());
    ctx.now = Utc.with_ymd_and_hms(2021, 3, 1, 12, 0, 0).unwrap();
    ctx
}

fn manifests(out: &Path) -> Vec<RunManifest> {
    fs::read_to_string(out.join(RUN_MANIFEST_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn count(m: &RunManifest, key: &str) -> u64 {
    m.counts.get(key).copied().unwrap_or(0)
}

#[test]
fn ingest_dedups_excludes_and_survives_corrupt_files() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let docs = write_pdfs(&input, 3);
    fs::copy(&docs[0].1, input.join("copy-of-first.pdf")).unwrap();
    fs::write(input.join("broken.pdf"), b"%PDF-1.4 this is not really a document").unwrap();
    fs::write(input.join(".hidden.pdf"), b"ignored").unwrap();
    let sidecar = tmp.path().join("meta.jsonl");
    fs::write(
        &sidecar,
        format!("{{\"sha256\":\"{}\",\"tags\":[\"pdf\",\"exploit\"]}}\n", docs[2].0.to_uppercase()),
    )
    .unwrap();

    let out = tmp.path().join("out");
    let ctx = ctx(&out, PipelineConfig::default());
    let m = run(&ctx, &Command::Ingest { input: input.clone(), sidecar: Some(sidecar) }).unwrap();
    assert_eq!(count(&m, "duplicates"), 1);
    assert_eq!(count(&m, "excluded_malpdf"), 1);

    let (header, rows) = read_jsonl::<CorpusRecord>(&out.join("corpus.jsonl"), schema::CORPUS).unwrap();
    assert_eq!(header.seed, 42);
    assert_eq!(rows.len(), 3);
    let shas: Vec<&str> = rows.iter().map(|r| r.sha256.as_str()).collect();
    assert!(shas.contains(&docs[0].0.as_str()) && shas.contains(&docs[1].0.as_str()));
    assert!(!shas.contains(&docs[2].0.as_str()));
    let broken = rows.iter().find(|r| r.path.ends_with("broken.pdf")).unwrap();
    assert_eq!(broken.status, ParseStatus::ParseFailed);
    assert!(broken.error.is_some());
    assert!(rows.windows(2).all(|w| w[0].sha256 <= w[1].sha256));

    // Downstream stages skip the failed record instead of aborting.
    run(&ctx, &Command::ExtractUrls { pages: PageScope::All }).unwrap();
    assert_eq!(manifests(&out).len(), 2);
}

/// Six documents in two tight hash groups and one outlier.
fn phash_table(shas: &[String]) -> String {
    let bits = [0x0u64, 0x0, 0x1, 0x3, u64::MAX, u64::MAX - 1, 0x00ff_00ff_00ff_00ff];
    let mut s = String::from("sha256,phash\n");
    for (sha, b) in shas.iter().zip(bits) {
        s.push_str(&format!("{sha},{b:016x}\n"));
    }
    s
}

#[test]
fn stages_chain_into_reproducible_report() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let docs = write_pdfs(&input, 7);
    let shas: Vec<String> = docs.iter().map(|d| d.0.clone()).collect();
    let sidecar = tmp.path().join("meta.jsonl");
    let mut meta = String::new();
    for (i, sha) in shas.iter().enumerate() {
        let provider = if i % 2 == 0 { "partner-a" } else { "partner-b" };
        meta.push_str(&format!(
            "{{\"sha256\":\"{sha}\",\"first_seen\":\"2021-01-{:02}\",\"provider\":\"{provider}\"}}\n",
            10 + i
        ));
    }
    fs::write(&sidecar, meta).unwrap();
    let table = tmp.path().join("phash.csv");
    fs::write(&table, phash_table(&shas)).unwrap();

    let mut config = PipelineConfig::default();
    config.dbscan.eps = 1.5;
    config.dbscan.min_pts = 2;
    let out = tmp.path().join("out");
    let ctx = ctx(&out, config);
    let commands = [
        Command::Ingest { input, sidecar: Some(sidecar) },
        Command::ExtractUrls { pages: PageScope::All },
        Command::ProfileSeo,
        Command::Dedup { input: table },
        Command::Cluster { embeddings: None, merge_map: None },
        Command::Analyze(AnalyzeInputs::default()),
        Command::SampleTimeline,
        Command::PlanSampling,
        Command::Report,
    ];
    for c in &commands {
        run(&ctx, c).unwrap_or_else(|e| panic!("{}: {e}", c.name()));
    }
    let runs = manifests(&out);
    assert_eq!(runs.len(), commands.len());
    assert!(runs.iter().all(|m| m.error.is_none() && m.seed == 42));

    let dedup = &runs[3];
    assert_eq!(count(dedup, "unique_phash"), 6, "{:?}", dedup.counts);
    let cluster = &runs[4];
    assert_eq!(count(cluster, "clusters"), 2, "{:?}", cluster.counts);

    let csv = fs::read_to_string(out.join("campaigns.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "Cluster,Volume,# Unique Phash,Avg/day,First seen,Last seen,% Active");
    assert_eq!(lines.count(), 2);

    let before: BTreeMap<String, Vec<u8>> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    assert!(before.len() >= 5);
    run(&ctx, &Command::Report).unwrap();
    for (name, bytes) in &before {
        assert_eq!(&fs::read(out.join(name)).unwrap(), bytes, "{name} changed on rerun");
    }
}

#[test]
fn empty_campaigns_give_header_only_table() {
    let tmp = tempfile::tempdir().unwrap();
    let ctx = ctx(tmp.path(), PipelineConfig::default());
    write_jsonl(&tmp.path().join("campaigns.jsonl"), schema::CAMPAIGNS, 42, std::iter::empty::<u8>()).unwrap();
    run(&ctx, &Command::Report).unwrap();
    let csv = fs::read_to_string(tmp.path().join("campaigns.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn schema_mismatch_is_reported_and_logged() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("corpus.jsonl"), "{\"schema\":\"baitline.urls\",\"version\":1,\"seed\":42}\n").unwrap();
    let ctx = ctx(tmp.path(), PipelineConfig::default());
    let err = run(&ctx, &Command::ExtractUrls { pages: PageScope::First }).unwrap_err();
    assert!(matches!(err, PipelineError::SchemaMismatch { .. }), "{err}");
    let runs = manifests(tmp.path());
    assert_eq!(runs.len(), 1);
    assert!(runs[0].error.is_some());

    let err = run(&ctx, &Command::PlanSampling).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput(_)), "{err}");
    assert_eq!(manifests(tmp.path()).len(), 2);
}

#[test]
fn network_stages_refuse_to_run_without_replay_or_live() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("indexes.txt");
    fs::write(&list, "https://files.example.com/pub/\n").unwrap();
    let ctx = ctx(tmp.path(), PipelineConfig::default());
    let err = run(&ctx, &Command::MonitorDirs { index_list: Some(list) }).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
}

fn replay_log(path: &Path, pairs: &[(&str, HttpResponse)]) {
    let mut s = String::new();
    for (url, resp) in pairs {
        s.push_str(&serde_json::to_string(&ReplayEntry::new(&HttpRequest::get(*url), resp)).unwrap());
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

#[test]
fn monitor_dirs_replays_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let index = "https://files.example.com/pub/";
    let html = "<html><head><title>Index of /pub</title></head><body>\
        <a href=\"a.pdf\">a.pdf</a> <a href=\"b.pdf\">b.pdf</a> <a href=\"../\">up</a></body></html>";
    let pdf = synthetic_corpus(1, 3).remove(0).bytes;
    let log = tmp.path().join("replay.jsonl");
    replay_log(
        &log,
        &[
            (index, HttpResponse::new(200, Some("text/html"), html)),
            ("https://files.example.com/pub/a.pdf", HttpResponse::new(200, Some("application/pdf"), pdf.clone())),
            ("https://files.example.com/pub/b.pdf", HttpResponse::new(200, Some("application/pdf"), pdf)),
        ],
    );
    let list = tmp.path().join("indexes.txt");
    fs::write(&list, format!("{index}\nhttps://gone.example.com/files/\n")).unwrap();

    let run_in = |dir: &Path| {
        let mut config = PipelineConfig::default();
        config.clients.replay_log = Some(log.clone());
        let ctx = ctx(dir, config);
        let first = run(&ctx, &Command::MonitorDirs { index_list: Some(list.clone()) }).unwrap();
        let second = run(&ctx, &Command::MonitorDirs { index_list: Some(list.clone()) }).unwrap();
        (first, second)
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let (first, second) = run_in(&a);
    run_in(&b);
    assert_eq!(count(&first, "new_entries"), 2);
    assert_eq!(count(&second, "new_entries"), 0);
    assert_eq!(first.warnings.get("index-unreachable").copied(), Some(1));
    for file in ["snapshots.jsonl", "directory_entries.jsonl"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let entries = fs::read_to_string(a.join("directory_entries.jsonl")).unwrap();
    assert!(!entries.contains("%PDF"));
}
