//! `pxtrank` subcommands.
//!
//! Every command reads the flat TOML settings (`--config`), applies
//! `--set key=value` overrides and its own flags on top, does its work and
//! writes a run manifest next to its primary output. Exit codes: 0 on
//! success, 1 for usage and configuration errors, 2 for bad input data,
//! 3 for runtime failures.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::catalog::{
    load_jsonl, load_jsonl_lines, validate_catalog, write_atomic, write_jsonl, CellKey,
    ContentItem, EmbeddingRecord, FeatureSnapshot, Judgment, SchemaContext, SlateExample,
};
use crate::config::Settings;
use crate::error::{Error, ErrorClass, Result};
use crate::features::FeatureStore;
use crate::metrics::MetricReport;
use crate::nn::{Checkpoint, RankerModel};
use crate::signal::{export_signals, SignalEntry, SignalTable};
use crate::trainer::{build_slates, evaluate, predict_slate, train};
use crate::truth::{
    accepted_sets, agreement, assign_relevance, consensus_vote, pooled_agreement, render_prompt,
    request_all, sample_candidates_with, AgreementReport, CandidateSet, ConsensusDecision,
    HttpLabeler, LabelRequest, LabelResponse, LabelerClient, MockLabeler, DEFAULT_TEMPLATE,
};
use crate::weak::{rank_all, RankedSlate};

#[derive(Debug, Parser)]
#[command(name = "pxtrank", version, about = "Provider-topic ranking pipeline")]
pub struct Cli {
    /// Flat TOML settings file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub parallelism: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CatalogArgs {
    #[arg(long, value_name = "JSONL")]
    pub snapshots: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub embeddings: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check snapshots and embeddings and report every violation.
    Validate {
        #[command(flatten)]
        catalog: CatalogArgs,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank every (topic, locale) cohort with the linear weak scorer.
    WeakRank {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw labeling candidates from weak rankings.
    SampleCandidates {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        positives: Option<usize>,
        #[arg(long)]
        negatives: Option<usize>,
    },
    /// Reduce annotator judgments to accepted providers.
    Consensus {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask a labeler to rank each candidate set.
    Label {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of canned responses, `<topic>.json`.
        #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
        mock_dir: Option<PathBuf>,
        /// HTTP endpoint accepting `{"prompt": ...}`.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Compare labeler rankings with human consensus.
    Agreement {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grade labeled candidates into training slates.
    BuildSlates {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a ranker and write a checkpoint.
    Train {
        #[arg(long)]
        slates: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss and validation NDCG; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        negative_sampling: Option<bool>,
    },
    /// Mean NDCG@k of a checkpoint on graded slates.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        slates: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Rank every cohort in the catalog with a checkpoint.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-content signal from rankings or a checkpoint.
    ExportSignal {
        #[arg(long)]
        content: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ranked slates to normalize into the provider-topic table.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        rankings: Option<PathBuf>,
        /// Checkpoint used to rank the catalog first.
        #[arg(long, requires_all = ["snapshots", "embeddings"])]
        model: Option<PathBuf>,
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Also write the normalized provider-topic table.
        #[arg(long)]
        table_out: Option<PathBuf>,
        #[arg(long)]
        floor: Option<f64>,
    },
    /// Write a synthetic catalog with planted relevance.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        topics: usize,
        #[arg(long, default_value_t = 30)]
        providers: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::WeakRank { .. } => "weak-rank",
            Command::SampleCandidates { .. } => "sample-candidates",
            Command::Consensus { .. } => "consensus",
            Command::Label { .. } => "label",
            Command::Agreement { .. } => "agreement",
            Command::BuildSlates { .. } => "build-slates",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::ExportSignal { .. } => "export-signal",
            Command::Synth { .. } => "synth",
        }
    }
}

/// What a run read and wrote, with content hashes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub elapsed_ms: u128,
}

struct Run {
    settings: Settings,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Where the manifest goes; `None` skips it.
    manifest: Option<PathBuf>,
}

impl Run {
    fn input(&mut self, p: &Path) -> PathBuf {
        self.inputs.push(p.to_path_buf());
        p.to_path_buf()
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    fn primary(&mut self, p: &Path) {
        self.output(p);
        self.manifest = Some(manifest_path(p));
    }

    fn schema(&self) -> SchemaContext {
        SchemaContext {
            embedding_dim: Some(self.settings.embedding_dim),
        }
    }

    fn store(&mut self, catalog: &CatalogArgs) -> Result<FeatureStore> {
        let snaps: Vec<FeatureSnapshot> = load_jsonl(self.input(&catalog.snapshots), self.schema())?;
        let embs: Vec<EmbeddingRecord> = load_jsonl(self.input(&catalog.embeddings), self.schema())?;
        FeatureStore::build(&snaps, &embs, self.settings.feature_params())
    }
}

/// `<out>.manifest.json` beside the output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn hash_all(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| Ok((p.display().to_string(), file_sha256(p)?)))
        .collect()
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Runtime => 3,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.class())
        }
    }
}

fn effective_settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::load(cli.config.as_deref())?;
    s.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(p) = cli.parallelism {
        s.parallelism = p;
    }
    let mut flags: Vec<String> = Vec::new();
    match &cli.command {
        Command::SampleCandidates {
            positives,
            negatives,
            ..
        } => {
            flags.extend(positives.map(|v| format!("positives={v}")));
            flags.extend(negatives.map(|v| format!("negatives={v}")));
        }
        Command::Label {
            template: Some(t), ..
        } => s.template = Some(t.clone()),
        Command::Train {
            model,
            epochs,
            negative_sampling,
            ..
        } => {
            flags.extend(model.as_ref().map(|v| format!("model=\"{v}\"")));
            flags.extend(epochs.map(|v| format!("epochs={v}")));
            flags.extend(negative_sampling.map(|v| format!("negative_sampling={v}")));
        }
        Command::Eval { k: Some(k), .. } => flags.push(format!("k={k}")),
        Command::ExportSignal { floor: Some(f), .. } => flags.push(format!("floor={f}")),
        _ => {}
    }
    s.apply_overrides(&flags)?;
    Ok(s)
}

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let settings = effective_settings(&cli)?;
    let mut r = Run {
        settings,
        inputs: Vec::new(),
        outputs: Vec::new(),
        manifest: None,
    };
    if let Some(c) = &cli.config {
        r.input(c);
    }
    let name = cli.command.name();
    match cli.command {
        Command::Validate { catalog, out } => cmd_validate(&mut r, &catalog, out.as_deref())?,
        Command::WeakRank { catalog, out } => {
            let store = r.store(&catalog)?;
            let slates = rank_all(&store, &r.settings.weight_profile()?)?;
            write_jsonl(&out, &slates)?;
            r.primary(&out);
            println!("ranked {} cohorts", slates.len());
        }
        Command::SampleCandidates { rankings, out, .. } => {
            cmd_sample(&mut r, &rankings, &out)?
        }
        Command::Consensus { judgments, out } => {
            let js: Vec<Judgment> = load_jsonl(r.input(&judgments), r.schema())?;
            let decisions = consensus_vote(&js, r.settings.quorum()?)?;
            let accepted = decisions.iter().filter(|d| d.accepted).count();
            let deviations = decisions.iter().filter(|d| d.deviation).count();
            if deviations > 0 {
                log::warn!("{deviations} decisions had an unexpected annotator count");
            }
            write_jsonl(&out, &decisions)?;
            r.primary(&out);
            println!("{accepted} of {} providers accepted", decisions.len());
        }
        Command::Label {
            candidates,
            out,
            mock_dir,
            endpoint,
            ..
        } => cmd_label(&mut r, &candidates, &out, mock_dir, endpoint)?,
        Command::Agreement {
            labels,
            decisions,
            out,
        } => cmd_agreement(&mut r, &labels, &decisions, out.as_deref())?,
        Command::BuildSlates {
            labels,
            candidates,
            out,
        } => cmd_build_slates(&mut r, &labels, &candidates, &out)?,
        Command::Train {
            slates,
            catalog,
            out,
            trace,
            ..
        } => cmd_train(&mut r, &slates, &catalog, &out, trace)?,
        Command::Eval {
            model,
            slates,
            catalog,
            out,
            ..
        } => cmd_eval(&mut r, &model, &slates, &catalog, &out)?,
        Command::Predict {
            model,
            catalog,
            out,
        } => {
            let model = Checkpoint::load(&r.input(&model))?.model;
            let store = r.store(&catalog)?;
            let slates = predict_all(&model, &store)?;
            write_jsonl(&out, &slates)?;
            r.primary(&out);
            println!("ranked {} cohorts", slates.len());
        }
        Command::ExportSignal {
            content,
            out,
            rankings,
            model,
            snapshots,
            embeddings,
            table_out,
            ..
        } => {
            let source = match (rankings, model, snapshots, embeddings) {
                (Some(rk), _, _, _) => SignalSource::Rankings(rk),
                (None, Some(m), Some(s), Some(e)) => SignalSource::Model(
                    m,
                    CatalogArgs {
                        snapshots: s,
                        embeddings: e,
                    },
                ),
                _ => {
                    return Err(Error::Parameter(
                        "export-signal needs --rankings or --model with --snapshots and --embeddings"
                            .into(),
                    ))
                }
            };
            cmd_export(&mut r, &content, &out, source, table_out.as_deref())?
        }
        Command::Synth {
            out_dir,
            topics,
            providers,
            dim,
        } => cmd_synth(&mut r, &out_dir, topics, providers, dim)?,
    }

    if let Some(path) = r.manifest.clone() {
        let manifest = RunManifest {
            command: name.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: r.settings.digest()?,
            seed: r.settings.seed,
            inputs: hash_all(&r.inputs)?,
            outputs: hash_all(&r.outputs)?,
            elapsed_ms: started.elapsed().as_millis(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Data(format!("manifest serialization failed: {e}")))?;
        bytes.push(b'\n');
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

fn cmd_validate(r: &mut Run, catalog: &CatalogArgs, out: Option<&Path>) -> Result<()> {
    // Wrong-width vectors are reported as violations, not load failures.
    let loose = SchemaContext::default();
    let snaps: Vec<(usize, FeatureSnapshot)> = load_jsonl_lines(r.input(&catalog.snapshots), loose)?;
    let embs: Vec<(usize, EmbeddingRecord)> = load_jsonl_lines(r.input(&catalog.embeddings), loose)?;
    let report = validate_catalog(
        snaps,
        embs,
        r.settings.embedding_dim,
    );
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Data(format!("report serialization failed: {e}")))?;
    match out {
        Some(p) => {
            write_atomic(p, format!("{json}\n").as_bytes())?;
            r.primary(p);
        }
        None => println!("{json}"),
    }
    if report.is_clean() {
        Ok(())
    } else {
        for v in &report.violations {
            eprintln!("{:?} {}: {} (lines {:?})", v.kind, v.subject, v.detail, v.lines);
        }
        Err(Error::Data(format!(
            "catalog has {} violation(s)",
            report.violations.len()
        )))
    }
}

/// Per-cohort seed so adding a topic does not reshuffle the others.
fn cohort_seed(seed: u64, slate: &RankedSlate) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(slate.topic.as_str().as_bytes());
    h.update(slate.locale.to_string().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn cmd_sample(r: &mut Run, rankings: &Path, out: &Path) -> Result<()> {
    let slates: Vec<RankedSlate> = load_jsonl(r.input(rankings), r.schema())?;
    let (n_pos, n_neg) = (r.settings.positives, r.settings.negatives);
    let mut sets = Vec::with_capacity(slates.len());
    for slate in &slates {
        // Negatives come from the same cohort: only those providers have
        // features for this topic.
        let pool: Vec<_> = slate.providers().cloned().collect();
        sets.push(sample_candidates_with(
            slate,
            &pool,
            n_pos,
            n_neg,
            cohort_seed(r.settings.seed, slate),
        )?);
    }
    let short = sets.iter().filter(|c| c.shortfall > 0).count();
    write_jsonl(out, &sets)?;
    r.primary(out);
    println!("{} candidate sets, {short} short of negatives", sets.len());
    Ok(())
}

fn cmd_label(
    r: &mut Run,
    candidates: &Path,
    out: &Path,
    mock_dir: Option<PathBuf>,
    endpoint: Option<String>,
) -> Result<()> {
    let sets: Vec<CandidateSet> = load_jsonl(r.input(candidates), r.schema())?;
    let template = match r.settings.template.clone() {
        Some(p) => std::fs::read_to_string(r.input(&p)).map_err(|e| Error::io(&p, e))?,
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let client: Box<dyn LabelerClient> = match (mock_dir, endpoint) {
        (Some(dir), _) => Box::new(MockLabeler::new(dir)),
        (None, Some(url)) => Box::new(HttpLabeler::new(
            url,
            Duration::from_secs(r.settings.timeout_secs),
        )),
        (None, None) => return Err(Error::Parameter("label needs --mock-dir or --endpoint".into())),
    };
    let mut jobs = Vec::with_capacity(sets.len());
    for set in sets {
        let prompt = render_prompt(&set.topic, &set.locale, &set, &template)?;
        let req = LabelRequest {
            topic: set.topic.clone(),
            locale: set.locale.clone(),
            prompt: prompt.text,
        };
        jobs.push((req, set));
    }
    let attempts = u32::try_from(r.settings.max_attempts).unwrap_or(u32::MAX);
    let labels: Vec<LabelResponse> = request_all(client.as_ref(), &jobs, attempts, r.settings.in_flight)
        .into_iter()
        .collect::<Result<_>>()?;
    for l in labels.iter().filter(|l| !l.additions.is_empty()) {
        log::info!(
            "({}, {}): labeler added {} provider(s) outside the candidates",
            l.topic,
            l.locale,
            l.additions.len()
        );
    }
    write_jsonl(out, &labels)?;
    r.primary(out);
    println!("labeled {} topics", labels.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct TopicAgreement {
    topic: String,
    locale: String,
    #[serde(flatten)]
    report: AgreementReport,
}

#[derive(Debug, Serialize)]
struct AgreementSummary {
    pooled: AgreementReport,
    topics: Vec<TopicAgreement>,
    /// Labeled topics without any accepted human provider.
    unmatched: Vec<String>,
}

fn cmd_agreement(r: &mut Run, labels: &Path, decisions: &Path, out: Option<&Path>) -> Result<()> {
    let labels: Vec<LabelResponse> = load_jsonl(r.input(labels), r.schema())?;
    let decisions: Vec<ConsensusDecision> = load_jsonl(r.input(decisions), r.schema())?;
    let human = accepted_sets(&decisions);
    let mut pairs = Vec::new();
    let mut topics = Vec::new();
    let mut unmatched = Vec::new();
    for l in &labels {
        match human.get(&(l.topic.clone(), l.locale.clone())) {
            Some(set) if !set.is_empty() => {
                topics.push(TopicAgreement {
                    topic: l.topic.to_string(),
                    locale: l.locale.to_string(),
                    report: agreement(l, set)?,
                });
                pairs.push((l, set));
            }
            _ => unmatched.push(format!("({}, {})", l.topic, l.locale)),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Input(
            "no labeled topic has an accepted human provider set".into(),
        ));
    }
    let summary = AgreementSummary {
        pooled: pooled_agreement(pairs),
        topics,
        unmatched,
    };
    println!(
        "precision {:.4} recall {:.4} {}",
        summary.pooled.precision,
        summary.pooled.recall,
        if summary.pooled.passed { "PASS" } else { "FAIL" }
    );
    if let Some(p) = out {
        let mut bytes = serde_json::to_vec_pretty(&summary)
            .map_err(|e| Error::Data(format!("report serialization failed: {e}")))?;
        bytes.push(b'\n');
        write_atomic(p, &bytes)?;
        r.primary(p);
    }
    Ok(())
}

fn cmd_build_slates(r: &mut Run, labels: &Path, candidates: &Path, out: &Path) -> Result<()> {
    let labels: Vec<LabelResponse> = load_jsonl(r.input(labels), r.schema())?;
    let sets: Vec<CandidateSet> = load_jsonl(r.input(candidates), r.schema())?;
    let by_key: BTreeMap<_, _> = sets
        .iter()
        .map(|c| ((c.topic.clone(), c.locale.clone()), c))
        .collect();
    let capacity = r.settings.slate_capacity;
    let mut slates = Vec::with_capacity(labels.len());
    for label in &labels {
        let Some(set) = by_key.get(&(label.topic.clone(), label.locale.clone())) else {
            return Err(Error::Input(format!(
                "no candidate set for labeled topic ({}, {})",
                label.topic, label.locale
            )));
        };
        // The labeler may rank a sampled negative; it then counts as ranked.
        let ranked: BTreeSet<_> = label.ranked_providers.iter().collect();
        let negatives: Vec<_> = set
            .negatives
            .iter()
            .filter(|p| !ranked.contains(p))
            .cloned()
            .collect();
        let ex = assign_relevance(label, &negatives, capacity)?;
        match ex.check(capacity, true) {
            Ok(()) => slates.push(ex),
            Err(e) => log::warn!("skipping ({}, {}): {e}", label.topic, label.locale),
        }
    }
    write_jsonl(out, &slates)?;
    r.primary(out);
    println!("{} slates from {} labels", slates.len(), labels.len());
    Ok(())
}

fn cmd_train(
    r: &mut Run,
    slates: &Path,
    catalog: &CatalogArgs,
    out: &Path,
    trace: Option<PathBuf>,
) -> Result<()> {
    let examples: Vec<SlateExample> = load_jsonl(r.input(slates), r.schema())?;
    let store = r.store(catalog)?;
    let config = r.settings.training_config();
    config.validate()?;
    let (slates, report) = build_slates(&examples, &store, true, config.slate_capacity)?;
    for (cell, why) in &report.dropped_items {
        log::warn!("dropped {cell}: {why}");
    }
    for s in &report.skipped_slates {
        log::warn!("skipped slate {s}");
    }
    let outcome = train(&config, &slates)?;
    outcome.checkpoint.save(out)?;
    let trace_path = trace.unwrap_or_else(|| {
        let mut name = out.file_name().map(OsString::from).unwrap_or_default();
        name.push(".trace.csv");
        out.with_file_name(name)
    });
    write_atomic(&trace_path, outcome.trace.to_csv().as_bytes())?;
    r.primary(out);
    r.output(&trace_path);
    if let Some(last) = outcome.trace.last() {
        println!(
            "{} model, {} epochs, loss {:.6}, validation ndcg@{} {:.4}",
            config.model, last.epoch, last.loss, config.ndcg_k, last.ndcg10
        );
    }
    Ok(())
}

fn cmd_eval(
    r: &mut Run,
    model: &Path,
    slates: &Path,
    catalog: &CatalogArgs,
    out: &Path,
) -> Result<()> {
    let model = Checkpoint::load(&r.input(model))?.model;
    let examples: Vec<SlateExample> = load_jsonl(r.input(slates), r.schema())?;
    let store = r.store(catalog)?;
    let (slates, report) = build_slates(&examples, &store, true, r.settings.slate_capacity)?;
    for (cell, why) in &report.dropped_items {
        log::warn!("dropped {cell}: {why}");
    }
    let refs: Vec<_> = slates.iter().collect();
    let k = r.settings.k;
    let ev = evaluate(&model, &refs, k, r.settings.parallelism)?;
    let row = MetricReport {
        metric: "ndcg".to_string(),
        k: Some(k),
        value: ev.mean,
        slate_count: ev.per_slate.len() - ev.skipped,
    };
    let csv = format!("{}\n{}\n", MetricReport::csv_header(), row.csv_row());
    write_atomic(out, csv.as_bytes())?;
    r.primary(out);
    println!("ndcg@{k} {:.4} over {} slates", ev.mean, row.slate_count);
    Ok(())
}

/// Model ranking of every cohort whose cells have both embeddings.
pub fn predict_all(model: &RankerModel, store: &FeatureStore) -> Result<Vec<RankedSlate>> {
    let mut out = Vec::new();
    for ((topic, locale), cells) in store.cohorts() {
        let mut candidates = Vec::with_capacity(cells.len());
        for (provider, _) in cells {
            let cell = CellKey {
                provider: provider.clone(),
                topic: topic.clone(),
                locale: locale.clone(),
            };
            match store.assemble(&cell) {
                Ok(input) => candidates.push((provider, input)),
                Err(e @ (Error::MissingEmbedding { .. } | Error::Data(_))) => {
                    log::warn!("skipping {cell}: {e}")
                }
                Err(e) => return Err(e),
            }
        }
        if candidates.is_empty() {
            log::warn!("no scorable providers for ({topic}, {locale})");
            continue;
        }
        out.push(predict_slate(model, topic, locale, &candidates)?);
    }
    Ok(out)
}

enum SignalSource {
    Rankings(PathBuf),
    Model(PathBuf, CatalogArgs),
}

fn cmd_export(
    r: &mut Run,
    content: &Path,
    out: &Path,
    source: SignalSource,
    table_out: Option<&Path>,
) -> Result<()> {
    let items: Vec<ContentItem> = load_jsonl(r.input(content), r.schema())?;
    let slates = match source {
        SignalSource::Rankings(p) => load_jsonl::<RankedSlate>(r.input(&p), r.schema())?,
        SignalSource::Model(m, catalog) => {
            let model = Checkpoint::load(&r.input(&m))?.model;
            let store = r.store(&catalog)?;
            predict_all(&model, &store)?
        }
    };
    let floor = r.settings.floor;
    let table = SignalTable::from_slates(&slates, floor)?;
    let signals = export_signals(&items, &table, floor)?;
    let flagged = signals.iter().filter(|s| !s.flags.is_empty()).count();
    write_jsonl(out, &signals)?;
    r.primary(out);
    if let Some(t) = table_out {
        let entries: Vec<SignalEntry> = table.entries();
        write_jsonl(t, &entries)?;
        r.output(t);
    }
    println!("{} signals, {flagged} flagged", signals.len());
    Ok(())
}

fn cmd_synth(r: &mut Run, dir: &Path, topics: usize, providers: usize, dim: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = crate::synth::make_synthetic_dataset(topics, providers, dim, r.settings.seed)?;
    let mut written = Vec::new();
    let mut put = |name: &str, n: Result<usize>| -> Result<()> {
        n?;
        written.push(dir.join(name));
        Ok(())
    };
    put("snapshots.jsonl", write_jsonl(dir.join("snapshots.jsonl"), &d.snapshots))?;
    put("embeddings.jsonl", write_jsonl(dir.join("embeddings.jsonl"), &d.embeddings))?;
    put("labels.jsonl", write_jsonl(dir.join("labels.jsonl"), &d.labels))?;
    put("candidates.jsonl", write_jsonl(dir.join("candidates.jsonl"), &d.candidates))?;
    put("content.jsonl", write_jsonl(dir.join("content.jsonl"), &d.content))?;
    put("slates.jsonl", write_jsonl(dir.join("slates.jsonl"), &d.slates))?;
    // A config that matches the data, so later steps only need --config.
    let mut cfg = r.settings.clone();
    cfg.embedding_dim = dim;
    cfg.as_of = d.params.as_of;
    let cfg_path = dir.join("config.toml");
    write_atomic(&cfg_path, cfg.canonical()?.as_bytes())?;
    for p in &written {
        r.output(p);
    }
    r.output(&cfg_path);
    r.manifest = Some(dir.join("synth.manifest.json"));
    println!(
        "{} topics, {} snapshots, {} content items in {}",
        d.slates.len(),
        d.snapshots.len(),
        d.content.len(),
        dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("pxtrank").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_land_in_settings() {
        let cli = parse(&[
            "--set",
            "lr=0.01",
            "--seed",
            "9",
            "train",
            "--slates",
            "s",
            "--snapshots",
            "a",
            "--embeddings",
            "b",
            "--out",
            "m.json",
            "--model",
            "pairwise",
            "--negative-sampling",
            "false",
        ]);
        let s = effective_settings(&cli).unwrap();
        assert_eq!(s.lr, 0.01);
        assert_eq!(s.seed, 9);
        assert_eq!(s.model, crate::trainer::ModelKind::Pairwise);
        assert!(!s.negative_sampling);
    }

    #[test]
    fn bad_flag_value_is_a_usage_error() {
        let cli = parse(&[
            "sample-candidates",
            "--rankings",
            "r",
            "--out",
            "o",
            "--negatives",
            "20",
        ]);
        // The range is checked when sampling, the key itself is fine.
        assert_eq!(effective_settings(&cli).unwrap().negatives, 20);
        let cli = parse(&["--set", "nope=1", "consensus", "--judgments", "j", "--out", "o"]);
        assert_eq!(exit_code(effective_settings(&cli).unwrap_err().class()), 1);
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(
            manifest_path(Path::new("/tmp/x/model.json")),
            PathBuf::from("/tmp/x/model.json.manifest.json")
        );
    }

    #[test]
    fn export_requires_a_source() {
        let r = Cli::try_parse_from(["pxtrank", "export-signal", "--content", "c", "--out", "o"]);
        assert!(r.is_err());
        let r = Cli::try_parse_from([
            "pxtrank", "export-signal", "--content", "c", "--out", "o", "--model", "m",
        ]);
        assert!(r.is_err());
    }
}
