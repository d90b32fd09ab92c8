// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! `scholarnet` command-line interface.
//!
//! Stage subcommands read and write the same files the full `run` writes
//! into its output directory, so any stage can be re-run on its own. Values
//! come from `--config`, then `SCHOLARNET_<KEY>` variables, then flags.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use scholarnet_core::cloning::{
    load_clone_labels, load_doc_vectors, make_clones, CloneOptions, ClusterParams, NodeSet,
};
use scholarnet_core::community::{nh_louvain, CommunityTree};
use scholarnet_core::graph::{build_graph, density, prune_edges, ResearchGraph};
use scholarnet_core::ingest::{load_corpus, write_corpus};
use scholarnet_core::pipeline::{
    ingest_corpus, run_pipeline, ConfigLayer, GraphSummary, PipelineConfig, PruneRule,
    SourceConfig, SourceKind, DEFAULT_MIN_COMMUNITY_SIZE, DEFAULT_MIN_PUBS,
    DEFAULT_PRUNE_THRESHOLD, MANIFEST_FILE,
};
use scholarnet_core::profiles::{similarity_matrix, DocTopicTable, SimilarityMatrix};
use scholarnet_core::refine::{refine_all, RefinedCommunities};
use scholarnet_core::report::{
    build_report, load_topic_words, write_report_files, ReportInputs, ReportOptions,
};
use scholarnet_core::synth::{generate_synthetic, Imbalance, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "scholarnet",
    version,
    about = "Topic-similarity research networks"
)]
struct Cli {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts (default `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeat for more logging.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or fetch publications and apply the publication-count filter.
    Ingest(IngestArgs),
    /// Split high-output researchers into clones.
    Clone(CloneArgs),
    /// Pairwise 1 - JSD similarity between node profiles.
    Similarity(SimilarityArgs),
    /// Build the complete similarity graph and prune it.
    Graph(GraphArgs),
    /// Nested Louvain community detection.
    Detect(DetectArgs),
    /// Merge clones inside each leaf community.
    Refine(RefineArgs),
    /// Edge-weight, community, overlap and word-score reports.
    Report(ReportArgs),
    /// Write a synthetic corpus with planted communities.
    Synth(SynthArgs),
    /// Run every stage in order.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    File,
    Openalex,
}

#[derive(Args)]
struct SourceFlags {
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    /// Documents file (JSON Lines) for `--source file`.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// OpenAlex institution id, e.g. I118792284.
    #[arg(long)]
    institution: Option<String>,
    #[arg(long = "from")]
    year_from: Option<i32>,
    #[arg(long = "to")]
    year_to: Option<i32>,
    /// API base URL override.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    min_pubs: Option<usize>,
}

impl SourceFlags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            source: self.source.map(|s| match s {
                SourceArg::File => SourceKind::File,
                SourceArg::Openalex => SourceKind::Openalex,
            }),
            corpus: self.corpus.clone(),
            institution: self.institution.clone(),
            year_from: self.year_from,
            year_to: self.year_to,
            endpoint: self.endpoint.clone(),
            min_pubs: self.min_pubs,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    source: SourceFlags,
    /// Output documents file (default `<out-dir>/corpus.jsonl`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CloneFlags {
    /// Multiple of the median publication count; `inf` disables cloning.
    #[arg(long)]
    threshold_factor: Option<f64>,
    /// Precomputed per-researcher document labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Precomputed document embeddings.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    min_samples: Option<usize>,
}

impl CloneFlags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            clone_threshold_factor: self.threshold_factor,
            clone_labels: self.labels.clone(),
            doc_vectors: self.vectors.clone(),
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Args)]
struct CloneArgs {
    /// Documents file (default `<out-dir>/corpus.jsonl`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    doc_topics: Option<PathBuf>,
    #[command(flatten)]
    clone: CloneFlags,
    /// Node set with clones (default `<out-dir>/nodes.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node set without clones (default `<out-dir>/nodes_base.json`).
    #[arg(long)]
    base_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimilarityArgs {
    /// Node set (default `<out-dir>/nodes.json`).
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Output matrix (default `<out-dir>/similarity.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(multiple = false)]
struct PruneFlags {
    /// Keep edges with weight at or above this similarity.
    #[arg(long)]
    threshold: Option<f64>,
    /// Choose the threshold that brings density down to this value.
    #[arg(long)]
    target_density: Option<f64>,
}

impl PruneFlags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            prune_threshold: self.threshold,
            target_density: self.target_density,
            ..ConfigLayer::default()
        }
    }
}

#[derive(Args)]
struct GraphArgs {
    /// Similarity matrix (default `<out-dir>/similarity.json`).
    #[arg(long)]
    similarity: Option<PathBuf>,
    #[command(flatten)]
    prune: PruneFlags,
    /// Pruned graph (default `<out-dir>/graph.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Complete graph (default `<out-dir>/graph_full.json`).
    #[arg(long)]
    full_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Pruned graph (default `<out-dir>/graph.json`).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Communities at or below this size are not split further.
    #[arg(long)]
    min_size: Option<usize>,
    /// Community tree (default `<out-dir>/communities.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RefineArgs {
    /// Pruned graph (default `<out-dir>/graph.json`).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Community tree (default `<out-dir>/communities.json`).
    #[arg(long)]
    communities: Option<PathBuf>,
    /// Refined communities (default `<out-dir>/refined.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Complete graph over unsplit researchers.
    #[arg(long)]
    before: PathBuf,
    /// Complete graph over clones.
    #[arg(long)]
    after: PathBuf,
    /// Refined communities.
    #[arg(long)]
    communities: PathBuf,
    #[arg(long)]
    topic_words: Option<PathBuf>,
    /// Node set with clones, for word scores and clone statistics.
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Node set without clones, for word scores of whole researchers.
    #[arg(long)]
    base_nodes: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    top_topics: Option<usize>,
    #[arg(long)]
    top_words: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    topics: usize,
    #[arg(long, default_value_t = 60)]
    researchers: usize,
    #[arg(long, default_value_t = 3)]
    communities: usize,
    /// Dual-topic high-output researchers, taken from the end of the roster.
    #[arg(long, default_value_t = 0)]
    bridging: usize,
    /// Pareto shape for skewed publication counts.
    #[arg(long)]
    pareto: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pubs_min: usize,
    #[arg(long, default_value_t = 20)]
    pubs_max: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceFlags,
    #[arg(long)]
    doc_topics: Option<PathBuf>,
    #[arg(long)]
    topic_words: Option<PathBuf>,
    #[command(flatten)]
    clone: CloneFlags,
    #[command(flatten)]
    prune: PruneFlags,
    #[arg(long)]
    min_size: Option<usize>,
    /// Only write the report and manifest.
    #[arg(long)]
    no_snapshots: bool,
}

/// Config file, environment, and global flags, lowest precedence first.
fn base_layers(cli: &Cli) -> Result<Vec<ConfigLayer>> {
    let mut layers = Vec::new();
    if let Some(path) = &cli.config {
        layers.push(ConfigLayer::from_file(path)?);
    }
    layers.push(ConfigLayer::from_process_env()?);
    layers.push(ConfigLayer {
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
        ..ConfigLayer::default()
    });
    Ok(layers)
}

fn merged(cli: &Cli, flags: ConfigLayer) -> Result<ConfigLayer> {
    let mut c = ConfigLayer::default();
    for layer in base_layers(cli)?.into_iter().chain([flags]) {
        c.overlay(layer);
    }
    Ok(c)
}

fn out_dir(c: &ConfigLayer) -> PathBuf {
    c.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn or_default(path: &Option<PathBuf>, c: &ConfigLayer, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| out_dir(c).join(name))
}

fn cluster_params(c: &ConfigLayer) -> ClusterParams {
    let d = ClusterParams::default();
    ClusterParams {
        min_cluster_size: c.min_cluster_size.unwrap_or(d.min_cluster_size),
        min_samples: c.min_samples.unwrap_or(d.min_samples),
        ..d
    }
}

fn prune_rule(c: &ConfigLayer) -> Result<PruneRule> {
    Ok(match (c.prune_threshold, c.target_density) {
        (Some(_), Some(_)) => bail!("prune_threshold and target_density are mutually exclusive"),
        (_, Some(d)) => PruneRule::TargetDensity(d),
        (t, None) => PruneRule::Threshold(t.unwrap_or(DEFAULT_PRUNE_THRESHOLD)),
    })
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let c = merged(cli, args.source.layer())?;
    let source = match c.source.unwrap_or(SourceKind::File) {
        SourceKind::File => SourceConfig::File {
            corpus: c
                .corpus
                .clone()
                .context("--corpus is required for --source file")?,
        },
        SourceKind::Openalex => SourceConfig::OpenAlex {
            institution: c
                .institution
                .clone()
                .context("--institution is required for --source openalex")?,
            year_from: c.year_from.unwrap_or(2004),
            year_to: c.year_to.unwrap_or(2025),
            endpoint: c.endpoint.clone(),
        },
    };
    let corpus = ingest_corpus(&source, c.min_pubs.unwrap_or(DEFAULT_MIN_PUBS))?;
    let out = or_default(&args.out, &c, "corpus.jsonl");
    write_corpus(&corpus, &out)?;
    println!(
        "{} publications, {} researchers -> {}",
        corpus.publications().len(),
        corpus.researchers().len(),
        out.display()
    );
    Ok(())
}

fn clone(cli: &Cli, args: &CloneArgs) -> Result<()> {
    let mut flags = args.clone.layer();
    flags.corpus = args.corpus.clone();
    flags.doc_topics = args.doc_topics.clone();
    let c = merged(cli, flags)?;
    let corpus = load_corpus(&or_default(&c.corpus, &c, "corpus.jsonl"))?;
    let table = DocTopicTable::load(&c.doc_topics.clone().context("--doc-topics is required")?)?;
    let labels = c
        .clone_labels
        .as_deref()
        .map(load_clone_labels)
        .transpose()?;
    let vectors = c.doc_vectors.as_deref().map(load_doc_vectors).transpose()?;
    let opts = CloneOptions {
        threshold_factor: c.clone_threshold_factor.unwrap_or(1.5),
        cluster: cluster_params(&c),
    };
    let nodes = make_clones(&corpus, &table, vectors.as_ref(), labels.as_ref(), &opts)?;
    let base = make_clones(
        &corpus,
        &table,
        None,
        None,
        &CloneOptions {
            threshold_factor: f64::INFINITY,
            ..opts
        },
    )?;
    nodes.save(&or_default(&args.out, &c, "nodes.json"))?;
    base.save(&or_default(&args.base_out, &c, "nodes_base.json"))?;
    let r = &nodes.report;
    println!(
        "{} researchers, {} high-impact, {} cloned, {} nodes",
        r.total_researchers,
        r.high_impact_count,
        r.cloned_count,
        nodes.nodes.len()
    );
    Ok(())
}

fn similarity(cli: &Cli, args: &SimilarityArgs) -> Result<()> {
    let c = merged(cli, ConfigLayer::default())?;
    let nodes = NodeSet::load(&or_default(&args.nodes, &c, "nodes.json"))?;
    let sim = similarity_matrix(&nodes.profiles())?;
    sim.save(&or_default(&args.out, &c, "similarity.json"))?;
    println!("{} x {} similarity matrix", sim.len(), sim.len());
    Ok(())
}

fn graph(cli: &Cli, args: &GraphArgs) -> Result<()> {
    let c = merged(cli, args.prune.layer())?;
    let sim = SimilarityMatrix::load(&or_default(&args.similarity, &c, "similarity.json"))?;
    let full = build_graph(&sim);
    let threshold = prune_rule(&c)?.threshold(&full);
    let pruned = prune_edges(&full, threshold);
    pruned.save(&or_default(&args.out, &c, "graph.json"))?;
    full.save(&or_default(&args.full_out, &c, "graph_full.json"))?;
    let s = GraphSummary {
        threshold,
        nodes: pruned.node_count(),
        edges_full: full.edge_count(),
        edges_pruned: pruned.edge_count(),
        density_full: density(&full),
        density_pruned: density(&pruned),
    };
    println!(
        "threshold {:.6}: kept {} of {} edges, density {:.4}",
        s.threshold, s.edges_pruned, s.edges_full, s.density_pruned
    );
    Ok(())
}

fn detect(cli: &Cli, args: &DetectArgs) -> Result<()> {
    let c = merged(
        cli,
        ConfigLayer {
            min_community_size: args.min_size,
            ..ConfigLayer::default()
        },
    )?;
    let g = ResearchGraph::load(&or_default(&args.graph, &c, "graph.json"))?;
    let min_size = c.min_community_size.unwrap_or(DEFAULT_MIN_COMMUNITY_SIZE);
    if min_size < 2 {
        bail!("--min-size must be at least 2");
    }
    let tree = nh_louvain(&g, min_size, c.seed.unwrap_or(0));
    tree.save(&or_default(&args.out, &c, "communities.json"))?;
    println!(
        "{} leaf communities, depth {}",
        tree.leaves().len(),
        tree.depth()
    );
    Ok(())
}

fn refine(cli: &Cli, args: &RefineArgs) -> Result<()> {
    let c = merged(cli, ConfigLayer::default())?;
    let g = ResearchGraph::load(&or_default(&args.graph, &c, "graph.json"))?;
    let tree = CommunityTree::load(&or_default(&args.communities, &c, "communities.json"))?;
    let refined = refine_all(&tree, &g)?;
    refined.save(&or_default(&args.out, &c, "refined.json"))?;
    println!(
        "{} communities, {} researchers in more than one",
        refined.communities.len(),
        refined.overlap.overlapping().len()
    );
    Ok(())
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let c = merged(
        cli,
        ConfigLayer {
            topic_words: args.topic_words.clone(),
            histogram_bins: args.bins,
            top_topics: args.top_topics,
            top_words: args.top_words,
            ..ConfigLayer::default()
        },
    )?;
    let before = ResearchGraph::load(&args.before)?;
    let after = ResearchGraph::load(&args.after)?;
    let refined = RefinedCommunities::load(&args.communities)?;
    let nodes = args.nodes.as_deref().map(NodeSet::load).transpose()?;
    let base_nodes = args.base_nodes.as_deref().map(NodeSet::load).transpose()?;
    let topic_words = c.topic_words.as_deref().map(load_topic_words).transpose()?;
    let d = ReportOptions::default();
    let files = build_report(&ReportInputs {
        before: &before,
        after: &after,
        refined: &refined,
        nodes: nodes.as_ref(),
        base_nodes: base_nodes.as_ref(),
        topic_words: topic_words.as_ref(),
        options: ReportOptions {
            histogram_bins: c.histogram_bins.unwrap_or(d.histogram_bins),
            top_topics: c.top_topics.unwrap_or(d.top_topics),
            top_words: c.top_words.unwrap_or(d.top_words),
        },
    })?;
    let dir = out_dir(&c);
    write_report_files(&dir, &files)?;
    println!("{} report files -> {}", files.len(), dir.display());
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let c = merged(cli, ConfigLayer::default())?;
    let spec = SyntheticSpec {
        topics: args.topics,
        researchers: args.researchers,
        communities: args.communities,
        bridging: args.bridging,
        imbalance: args
            .pareto
            .map_or(Imbalance::None, |shape| Imbalance::Pareto { shape }),
        pubs_min: args.pubs_min,
        pubs_max: args.pubs_max,
        seed: c.seed.unwrap_or(0),
        ..SyntheticSpec::default()
    };
    let s = generate_synthetic(&spec)?;
    let dir = out_dir(&c);
    let paths = s.write(&dir)?;
    println!(
        "{} publications by {} researchers -> {}",
        s.corpus.publications().len(),
        s.corpus.researchers().len(),
        paths.corpus.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn run(cli: &Cli, args: &RunArgs) -> Result<()> {
    let mut flags = args.source.layer();
    flags.overlay(args.clone.layer());
    flags.overlay(args.prune.layer());
    flags.doc_topics = args.doc_topics.clone();
    flags.topic_words = args.topic_words.clone();
    flags.min_community_size = args.min_size;
    if args.no_snapshots {
        flags.snapshots = Some(false);
    }
    let mut layers = base_layers(cli)?;
    layers.push(flags);
    let config = PipelineConfig::from_layers(layers)?;
    info!("writing to {}", config.out_dir.display());
    let run = run_pipeline(&config)?;
    println!(
        "{} nodes, {} communities, {} overlapping researchers; manifest {}",
        run.graph.node_count(),
        run.refined.communities.len(),
        run.refined.overlap.overlapping().len(),
        config.out_dir.join(MANIFEST_FILE).display()
    );
    Ok(())
}

/// The error and its causes, skipping causes already quoted by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !out.contains(&c) {
            out.push_str(": ");
            out.push_str(&c);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Ingest(a) => ingest(&cli, a),
        Command::Clone(a) => clone(&cli, a),
        Command::Similarity(a) => similarity(&cli, a),
        Command::Graph(a) => graph(&cli, a),
        Command::Detect(a) => detect(&cli, a),
        Command::Refine(a) => refine(&cli, a),
        Command::Report(a) => report(&cli, a),
        Command::Synth(a) => synth(&cli, a),
        Command::Run(a) => run(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::FAILURE
        }
    }
}
