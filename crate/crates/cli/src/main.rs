use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use baitline_core::fixtures::synthetic_corpus;
use baitline_core::pipeline::{self, AnalyzeInputs, Command, Context, PageScope, PipelineConfig};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Lure-PDF triage pipeline: one subcommand per stage, cached
/// intermediates in the output directory.
#[derive(Parser, Debug)]
#[command(name = "baitline", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Primary input of the stage (directory, file or list, per command).
    #[arg(long = "in", global = true, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Work/output directory holding stage outputs.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Allow live network traffic.
    #[arg(long, global = true, conflicts_with = "replay")]
    live: bool,
    /// Serve network requests from this replay log.
    #[arg(long, global = true, value_name = "LOG")]
    replay: Option<PathBuf>,
    /// With --live, append every exchange to this replay log.
    #[arg(long, global = true, value_name = "LOG", requires = "live")]
    record: Option<PathBuf>,
    /// Timestamp recorded on probes and snapshots (RFC 3339); defaults to now.
    #[arg(long, global = true, value_name = "TIME")]
    at: Option<DateTime<Utc>>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Pages {
    All,
    First,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Hash, deduplicate, tag-filter and parse-check a directory of documents.
    Ingest {
        /// Metadata sidecar (JSONL rows or JSON sha256 -> tags map).
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Extract link-annotation URLs from every parsed document.
    ExtractUrls {
        #[arg(long, value_enum, default_value = "all")]
        pages: Pages,
    },
    /// Cross-link heuristic, titles and directory candidates.
    ProfileSeo,
    /// Perceptual hashes from renders (directory) or a hash table (file); exact dedup.
    Dedup,
    /// DBSCAN over deduplicated hashes or supplied embeddings.
    Cluster {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// JSON object mapping cluster id -> target cluster id.
        #[arg(long)]
        merge_map: Option<PathBuf>,
    },
    /// Campaign statistics, attachment evidence, language rollups, score timeline.
    Analyze {
        /// CSV sha256,cluster_id replacing clusters.jsonl.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// JSONL metadata replacing the ingested corpus metadata.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        langs: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        spamtrap: Option<PathBuf>,
    },
    /// Daily score-timeline file selection over the collection window.
    SampleTimeline,
    /// Budgeted per-cluster URL selection for reputation lookups.
    PlanSampling,
    /// Reputation lookups for the sampled URLs.
    LookupReputation,
    /// Search the titles of SEO documents and record top-10 hits.
    ProbeSearch {
        /// Download each result into memory and rerun the cross-link heuristic.
        #[arg(long)]
        fetch_and_check: bool,
    },
    /// Snapshot open directories and inspect newly listed PDFs in memory.
    MonitorDirs,
    /// Match logged page requests against dated filter lists.
    MatchBlocklist {
        /// Directory of filter lists with YYYY-MM-DD in their names.
        #[arg(long)]
        lists: PathBuf,
    },
    /// Tables and CSVs from all available stage outputs.
    Report,
    /// Write a synthetic PDF corpus and its ground-truth manifest.
    MakeFixtures {
        #[arg(long, default_value_t = 60)]
        count: usize,
    },
}

fn input(global: &Global, config: &PipelineConfig, what: &str) -> Result<PathBuf> {
    match global.input.clone().or_else(|| config.paths.input.clone()) {
        Some(p) => Ok(p),
        None => bail!("{what} needs --in"),
    }
}

fn make_fixtures(out: &std::path::Path, count: usize, seed: u64) -> Result<()> {
    let pdfs = out.join("pdfs");
    std::fs::create_dir_all(&pdfs).with_context(|| format!("creating {}", pdfs.display()))?;
    let corpus = synthetic_corpus(count, seed);
    let mut manifest = String::new();
    for doc in &corpus {
        std::fs::write(pdfs.join(&doc.name), &doc.bytes)?;
        manifest.push_str(&serde_json::to_string(doc)?);
        manifest.push('\n');
    }
    std::fs::write(out.join("fixtures_manifest.jsonl"), manifest)?;
    println!("wrote {} documents to {}", corpus.len(), pdfs.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    env_logger::Builder::new()
        .filter_level(match g.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .parse_default_env()
        .init();

    let mut config = match &g.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(w) = g.workers {
        config.workers = w;
    }
    if g.live {
        config.clients.live = true;
        config.clients.record_log = g.record.clone().or(config.clients.record_log);
    }
    if let Some(log) = &g.replay {
        config.clients.live = false;
        config.clients.replay_log = Some(log.clone());
    }
    config.validate()?;
    let out = g
        .out
        .clone()
        .or_else(|| config.paths.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let command = match &cli.command {
        Cmd::MakeFixtures { count } => return make_fixtures(&out, *count, config.seed),
        Cmd::Ingest { sidecar } => Command::Ingest {
            input: input(g, &config, "ingest")?,
            sidecar: sidecar.clone(),
        },
        Cmd::ExtractUrls { pages } => Command::ExtractUrls {
            pages: match pages {
                Pages::All => PageScope::All,
                Pages::First => PageScope::First,
            },
        },
        Cmd::ProfileSeo => Command::ProfileSeo,
        Cmd::Dedup => Command::Dedup {
            input: input(g, &config, "dedup")?,
        },
        Cmd::Cluster { embeddings, merge_map } => Command::Cluster {
            embeddings: embeddings.clone(),
            merge_map: merge_map.clone(),
        },
        Cmd::Analyze { labels, meta, langs, scores, spamtrap } => Command::Analyze(AnalyzeInputs {
            labels: labels.clone(),
            meta: meta.clone(),
            langs: langs.clone(),
            scores: scores.clone(),
            spamtrap: spamtrap.clone(),
        }),
        Cmd::SampleTimeline => Command::SampleTimeline,
        Cmd::PlanSampling => Command::PlanSampling,
        Cmd::LookupReputation => Command::LookupReputation,
        Cmd::ProbeSearch { fetch_and_check } => Command::ProbeSearch {
            fetch_and_check: *fetch_and_check,
        },
        Cmd::MonitorDirs => Command::MonitorDirs {
            index_list: g.input.clone(),
        },
        Cmd::MatchBlocklist { lists } => Command::MatchBlocklist {
            requests: input(g, &config, "match-blocklist")?,
            lists: lists.clone(),
        },
        Cmd::Report => Command::Report,
    };

    let mut ctx = Context::new(config, out);
    if let Some(at) = g.at {
        ctx.now = at;
    }
    let manifest = pipeline::run(&ctx, &command).with_context(|| format!("{} failed", command.name()))?;
    let counts: Vec<String> = manifest.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}: {}", manifest.command, counts.join(" "));
    if !manifest.warnings.is_empty() {
        let warnings: Vec<String> = manifest.warnings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("warnings: {}", warnings.join(" "));
    }
    Ok(())
}
