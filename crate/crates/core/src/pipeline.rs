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

//! End-to-end pipeline: configuration layering, stage execution, snapshots
//! and the artifact manifest.
//!
//! Configuration is a flat TOML table. Values are layered as defaults, then
//! the config file, then `SCHOLARNET_<KEY>` environment variables, then
//! command-line flags. Every stage writes its artifacts under `out_dir` and
//! records their SHA-256 digests in `manifest.json`; the manifest holds only
//! relative paths so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cloning::{
    load_clone_labels, load_doc_vectors, make_clones_with, CloneOptions, ClusterParams, NodeSet,
};
use crate::community::{nh_louvain_with, CommunityTree};
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, density, prune_edges, threshold_for_density, GraphFile, ResearchGraph,
};
use crate::ingest::{
    corpus_bytes, fetch_openalex, filter_researchers, load_corpus, Corpus, OpenAlexConfig,
};
use crate::par::Execution;
use crate::profiles::{similarity_matrix_with, DocTopicTable};
use crate::refine::{refine_all_with, RefinedCommunities};
use crate::report::{build_report, load_topic_words, ReportInputs, ReportOptions};

pub const ENV_PREFIX: &str = "SCHOLARNET_";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    File,
    Openalex,
}

/// One configuration layer; unset keys defer to lower layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub source: Option<SourceKind>,
    pub corpus: Option<PathBuf>,
    pub institution: Option<String>,
    pub year_from: Option<i32>,
    pub year_to: Option<i32>,
    pub endpoint: Option<String>,
    pub doc_topics: Option<PathBuf>,
    pub topic_words: Option<PathBuf>,
    pub clone_labels: Option<PathBuf>,
    pub doc_vectors: Option<PathBuf>,
    pub min_pubs: Option<usize>,
    pub clone_threshold_factor: Option<f64>,
    pub prune_threshold: Option<f64>,
    pub target_density: Option<f64>,
    pub min_community_size: Option<usize>,
    pub seed: Option<u64>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub histogram_bins: Option<usize>,
    pub top_topics: Option<usize>,
    pub top_words: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub snapshots: Option<bool>,
}

pub const CONFIG_KEYS: [&str; 23] = [
    "source",
    "corpus",
    "institution",
    "year_from",
    "year_to",
    "endpoint",
    "doc_topics",
    "topic_words",
    "clone_labels",
    "doc_vectors",
    "min_pubs",
    "clone_threshold_factor",
    "prune_threshold",
    "target_density",
    "min_community_size",
    "seed",
    "min_cluster_size",
    "min_samples",
    "histogram_bins",
    "top_topics",
    "top_words",
    "out_dir",
    "snapshots",
];

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ConfigLayer {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut layer = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut layer.corpus,
            &mut layer.doc_topics,
            &mut layer.topic_words,
            &mut layer.clone_labels,
            &mut layer.doc_vectors,
            &mut layer.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(layer)
    }

    /// Builds a layer from `SCHOLARNET_<KEY>` variables. Each value is read
    /// as a TOML value when it parses as one of the right type, and as a
    /// plain string otherwise.
    pub fn from_env_vars<I, K, V>(vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table = toml::Table::new();
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                warn!("ignoring unknown variable {}", k.as_ref());
                continue;
            }
            let raw = v.as_ref();
            let typed = toml::from_str::<toml::Table>(&format!("{key} = {raw}"))
                .ok()
                .and_then(|t| t.get(&key).cloned())
                .filter(|value| {
                    let single: toml::Table = [(key.clone(), value.clone())].into_iter().collect();
                    toml::Value::Table(single).try_into::<ConfigLayer>().is_ok()
                });
            table.insert(
                key,
                typed.unwrap_or_else(|| toml::Value::String(raw.to_owned())),
            );
        }
        toml::Value::Table(table).try_into().map_err(|e| {
            Error::Config(format!(
                "environment: {}",
                e.to_string().trim().replace('\n', " ")
            ))
        })
    }

    pub fn from_process_env() -> Result<Self> {
        Self::from_env_vars(std::env::vars())
    }

    /// Sets every key that `top` sets. Choosing either pruning rule in `top`
    /// replaces whatever rule lower layers chose.
    pub fn overlay(&mut self, top: ConfigLayer) {
        macro_rules! take {
            ($($f:ident),*) => {$(if top.$f.is_some() { self.$f = top.$f; })*};
        }
        if top.prune_threshold.is_some() || top.target_density.is_some() {
            self.prune_threshold = top.prune_threshold;
            self.target_density = top.target_density;
        }
        take!(
            source,
            corpus,
            institution,
            year_from,
            year_to,
            endpoint,
            doc_topics,
            topic_words,
            clone_labels,
            doc_vectors,
            min_pubs,
            clone_threshold_factor,
            min_community_size,
            seed,
            min_cluster_size,
            min_samples,
            histogram_bins,
            top_topics,
            top_words,
            out_dir,
            snapshots
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum PruneRule {
    Threshold(f64),
    TargetDensity(f64),
}

impl PruneRule {
    /// The similarity threshold this rule applies to `g`.
    pub fn threshold(self, g: &ResearchGraph) -> f64 {
        match self {
            PruneRule::Threshold(t) => t,
            PruneRule::TargetDensity(d) => threshold_for_density(g, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceConfig {
    File {
        corpus: PathBuf,
    },
    OpenAlex {
        institution: String,
        year_from: i32,
        year_to: i32,
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    pub doc_topics: PathBuf,
    pub topic_words: Option<PathBuf>,
    pub clone_labels: Option<PathBuf>,
    pub doc_vectors: Option<PathBuf>,
    pub min_pubs: usize,
    /// Multiple of the median publication count; +inf disables cloning.
    pub clone_threshold_factor: f64,
    pub prune: PruneRule,
    pub min_community_size: usize,
    pub seed: u64,
    pub cluster: ClusterParams,
    pub report: ReportOptions,
    pub out_dir: PathBuf,
    pub snapshots: bool,
}

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MIN_COMMUNITY_SIZE: usize = 30;
pub const DEFAULT_MIN_PUBS: usize = 5;

impl PipelineConfig {
    /// Resolves layers from lowest to highest precedence.
    pub fn from_layers(layers: impl IntoIterator<Item = ConfigLayer>) -> Result<Self> {
        let mut c = ConfigLayer::default();
        for layer in layers {
            if layer.prune_threshold.is_some() && layer.target_density.is_some() {
                return Err(Error::Config(
                    "prune_threshold and target_density are mutually exclusive".into(),
                ));
            }
            c.overlay(layer);
        }
        let missing = |key: &str| Error::Config(format!("missing required key `{key}`"));

        let source = match c.source.unwrap_or(SourceKind::File) {
            SourceKind::File => SourceConfig::File {
                corpus: c.corpus.ok_or_else(|| missing("corpus"))?,
            },
            SourceKind::Openalex => {
                let (year_from, year_to) = (c.year_from.unwrap_or(2004), c.year_to.unwrap_or(2025));
                if year_from > year_to {
                    return Err(Error::Config(format!(
                        "year_from {year_from} is after year_to {year_to}"
                    )));
                }
                SourceConfig::OpenAlex {
                    institution: c.institution.ok_or_else(|| missing("institution"))?,
                    year_from,
                    year_to,
                    endpoint: c.endpoint,
                }
            }
        };
        let prune = match (c.prune_threshold, c.target_density) {
            (_, Some(d)) => PruneRule::TargetDensity(d),
            (t, None) => PruneRule::Threshold(t.unwrap_or(DEFAULT_PRUNE_THRESHOLD)),
        };
        match prune {
            PruneRule::Threshold(t) | PruneRule::TargetDensity(t) if !(0.0..=1.0).contains(&t) => {
                return Err(Error::Config(format!(
                    "pruning value {t} is outside [0, 1]"
                )));
            }
            _ => {}
        }
        let factor = c.clone_threshold_factor.unwrap_or(1.5);
        if factor.is_nan() || factor <= 0.0 {
            return Err(Error::Config(format!(
                "clone_threshold_factor must be positive, got {factor}"
            )));
        }
        let min_community_size = c.min_community_size.unwrap_or(DEFAULT_MIN_COMMUNITY_SIZE);
        if min_community_size < 2 {
            return Err(Error::Config(
                "min_community_size must be at least 2".into(),
            ));
        }
        let cluster = ClusterParams {
            min_cluster_size: c.min_cluster_size.unwrap_or(10),
            min_samples: c.min_samples.unwrap_or(5),
            ..ClusterParams::default()
        };
        if cluster.min_cluster_size == 0 || cluster.min_samples == 0 {
            return Err(Error::Config(
                "min_cluster_size and min_samples must be positive".into(),
            ));
        }
        let report = ReportOptions {
            histogram_bins: c.histogram_bins.unwrap_or(50),
            top_topics: c.top_topics.unwrap_or(crate::report::DEFAULT_TOP_TOPICS),
            top_words: c.top_words.unwrap_or(crate::report::DEFAULT_TOP_WORDS),
        };
        if report.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        Ok(PipelineConfig {
            source,
            doc_topics: c.doc_topics.ok_or_else(|| missing("doc_topics"))?,
            topic_words: c.topic_words,
            clone_labels: c.clone_labels,
            doc_vectors: c.doc_vectors,
            min_pubs: c.min_pubs.unwrap_or(DEFAULT_MIN_PUBS),
            clone_threshold_factor: factor,
            prune,
            min_community_size,
            seed: c.seed.unwrap_or(0),
            cluster,
            report,
            out_dir: c.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            snapshots: c.snapshots.unwrap_or(true),
        })
    }

    pub fn parameters(&self) -> RunParameters {
        RunParameters {
            seed: self.seed,
            min_pubs: self.min_pubs,
            clone_threshold_factor: self
                .clone_threshold_factor
                .is_finite()
                .then_some(self.clone_threshold_factor),
            prune: self.prune,
            min_community_size: self.min_community_size,
            cluster: self.cluster,
            report: self.report,
        }
    }

    pub fn clone_options(&self) -> CloneOptions {
        CloneOptions {
            threshold_factor: self.clone_threshold_factor,
            cluster: self.cluster,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub artifacts: Vec<Artifact>,
}

/// Run parameters that do not depend on where files live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParameters {
    pub seed: u64,
    pub min_pubs: usize,
    /// `None` when cloning is disabled.
    pub clone_threshold_factor: Option<f64>,
    pub prune: PruneRule,
    pub min_community_size: usize,
    pub cluster: ClusterParams,
    pub report: ReportOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub parameters: RunParameters,
    pub stages: Vec<StageRecord>,
    /// Set when the run stopped early; earlier artifacts are kept on disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path, "manifest")
    }
}

/// Graph-stage summary written next to the graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub threshold: f64,
    pub nodes: usize,
    pub edges_full: usize,
    pub edges_pruned: usize,
    pub density_full: f64,
    pub density_pruned: f64,
}

/// In-memory results of a full run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub manifest: Manifest,
    pub corpus: Corpus,
    pub nodes: NodeSet,
    pub base_nodes: NodeSet,
    pub graph: ResearchGraph,
    pub graph_full: ResearchGraph,
    pub graph_base: ResearchGraph,
    pub summary: GraphSummary,
    pub tree: CommunityTree,
    pub refined: RefinedCommunities,
}

pub const STAGES: [&str; 7] = [
    "ingest",
    "clone",
    "profiles",
    "graph",
    "community",
    "refine",
    "report",
];

struct Recorder<'a> {
    out_dir: &'a Path,
    snapshots: bool,
    stages: Vec<StageRecord>,
}

impl Recorder<'_> {
    /// Writes the artifacts `make` produces, unless snapshots are off and
    /// the stage is not forced. Names are relative to the output directory.
    fn record(
        &mut self,
        stage: &str,
        forced: bool,
        make: impl FnOnce() -> Result<Vec<(String, Vec<u8>)>>,
    ) -> Result<()> {
        let mut rec = StageRecord {
            stage: stage.to_owned(),
            artifacts: Vec::new(),
        };
        if self.snapshots || forced {
            for (name, bytes) in make()? {
                crate::io::write_bytes(&self.out_dir.join(&name), &bytes)?;
                rec.artifacts.push(Artifact {
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                    path: name,
                });
            }
        }
        self.stages.push(rec);
        Ok(())
    }
}

fn graph_bytes(g: &ResearchGraph) -> Vec<u8> {
    crate::io::to_json_bytes(&GraphFile::from(g))
}

/// Loads (or fetches) the corpus and applies the publication-count filter.
pub fn ingest_corpus(source: &SourceConfig, min_pubs: usize) -> Result<Corpus> {
    let corpus = match source {
        SourceConfig::File { corpus } => load_corpus(corpus)?,
        SourceConfig::OpenAlex {
            institution,
            year_from,
            year_to,
            endpoint,
        } => fetch_openalex(
            institution,
            (*year_from, *year_to),
            &OpenAlexConfig::from_env(endpoint.as_deref()),
        )?,
    };
    Ok(filter_researchers(&corpus, min_pubs))
}

/// Builds the complete similarity graph over a node set.
pub fn full_graph(nodes: &NodeSet, exec: Execution) -> Result<ResearchGraph> {
    Ok(build_graph(&similarity_matrix_with(
        &nodes.profiles(),
        exec,
    )?))
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    run_pipeline_with(config, Execution::default())
}

/// Runs every stage in order. On failure the manifest is still written with
/// `failed_stage` set, and the error names the stage.
pub fn run_pipeline_with(config: &PipelineConfig, exec: Execution) -> Result<PipelineRun> {
    let mut rec = Recorder {
        out_dir: &config.out_dir,
        snapshots: config.snapshots,
        stages: Vec::new(),
    };
    let result = run_stages(config, exec, &mut rec);
    let failed_stage = match &result {
        Err(Error::Stage { stage, .. }) => Some(stage.to_string()),
        Err(_) => Some("manifest".to_owned()),
        Ok(_) => None,
    };
    let manifest = Manifest {
        parameters: config.parameters(),
        stages: rec.stages,
        failed_stage,
    };
    crate::io::write_json(&config.out_dir.join(MANIFEST_FILE), &manifest)?;
    let mut run = result?;
    run.manifest = manifest;
    Ok(run)
}

fn run_stages(config: &PipelineConfig, exec: Execution, rec: &mut Recorder) -> Result<PipelineRun> {
    let stage = |name: &'static str| move |e: Error| e.in_stage(name);

    info!("ingest");
    let corpus = ingest_corpus(&config.source, config.min_pubs).map_err(stage("ingest"))?;
    if corpus.researchers().len() < 2 {
        return Err(Error::InvalidCorpus(format!(
            "{} researchers remain after filtering with min_pubs = {}",
            corpus.researchers().len(),
            config.min_pubs
        ))
        .in_stage("ingest"));
    }
    rec.record("ingest", false, || {
        Ok(vec![("corpus.jsonl".into(), corpus_bytes(&corpus))])
    })
    .map_err(stage("ingest"))?;

    info!("clone");
    let (nodes, base_nodes) = (|| {
        let table = DocTopicTable::load(&config.doc_topics)?;
        let labels = config
            .clone_labels
            .as_deref()
            .map(load_clone_labels)
            .transpose()?;
        let vectors = config
            .doc_vectors
            .as_deref()
            .map(load_doc_vectors)
            .transpose()?;
        let opts = config.clone_options();
        let nodes = make_clones_with(
            &corpus,
            &table,
            vectors.as_ref(),
            labels.as_ref(),
            &opts,
            exec,
        )?;
        let base_opts = CloneOptions {
            threshold_factor: f64::INFINITY,
            ..opts
        };
        let base = make_clones_with(&corpus, &table, None, None, &base_opts, exec)?;
        Ok::<_, Error>((nodes, base))
    })()
    .map_err(stage("clone"))?;
    rec.record("clone", false, || {
        Ok(vec![
            ("nodes.json".into(), crate::io::to_json_bytes(&nodes)),
            (
                "nodes_base.json".into(),
                crate::io::to_json_bytes(&base_nodes),
            ),
        ])
    })
    .map_err(stage("clone"))?;

    info!("profiles");
    let (sim, sim_base) = (|| {
        Ok::<_, Error>((
            similarity_matrix_with(&nodes.profiles(), exec)?,
            similarity_matrix_with(&base_nodes.profiles(), exec)?,
        ))
    })()
    .map_err(stage("profiles"))?;
    rec.record("profiles", false, || {
        Ok(vec![
            ("similarity.json".into(), crate::io::to_json_bytes(&sim)),
            (
                "similarity_base.json".into(),
                crate::io::to_json_bytes(&sim_base),
            ),
        ])
    })
    .map_err(stage("profiles"))?;

    info!("graph");
    let graph_full = build_graph(&sim);
    let graph_base = build_graph(&sim_base);
    drop((sim, sim_base));
    let threshold = config.prune.threshold(&graph_full);
    let graph = prune_edges(&graph_full, threshold);
    let summary = GraphSummary {
        threshold,
        nodes: graph.node_count(),
        edges_full: graph_full.edge_count(),
        edges_pruned: graph.edge_count(),
        density_full: density(&graph_full),
        density_pruned: density(&graph),
    };
    rec.record("graph", false, || {
        Ok(vec![
            ("graph.json".into(), graph_bytes(&graph)),
            ("graph_full.json".into(), graph_bytes(&graph_full)),
            ("graph_base.json".into(), graph_bytes(&graph_base)),
            (
                "graph_summary.json".into(),
                crate::io::to_json_bytes(&summary),
            ),
        ])
    })
    .map_err(stage("graph"))?;

    info!("community");
    let tree = nh_louvain_with(&graph, config.min_community_size, config.seed, exec);
    rec.record("community", false, || {
        Ok(vec![(
            "communities.json".into(),
            crate::io::to_json_bytes(&tree),
        )])
    })
    .map_err(stage("community"))?;

    info!("refine");
    let refined = refine_all_with(&tree, &graph, exec).map_err(stage("refine"))?;
    rec.record("refine", false, || {
        Ok(vec![(
            "refined.json".into(),
            crate::io::to_json_bytes(&refined),
        )])
    })
    .map_err(stage("refine"))?;

    info!("report");
    let topic_words = config
        .topic_words
        .as_deref()
        .map(load_topic_words)
        .transpose()
        .map_err(stage("report"))?;
    rec.record("report", true, || {
        let files = build_report(&ReportInputs {
            before: &graph_base,
            after: &graph_full,
            refined: &refined,
            nodes: Some(&nodes),
            base_nodes: Some(&base_nodes),
            topic_words: topic_words.as_ref(),
            options: config.report,
        })?;
        Ok(files
            .into_iter()
            .map(|f| (format!("report/{}", f.name), f.bytes))
            .collect())
    })
    .map_err(stage("report"))?;

    Ok(PipelineRun {
        // Filled in by the caller once the manifest is written.
        manifest: Manifest {
            parameters: config.parameters(),
            stages: Vec::new(),
            failed_stage: None,
        },
        corpus,
        nodes,
        base_nodes,
        graph,
        graph_full,
        graph_base,
        summary,
        tree,
        refined,
    })
}

/// Per-stage digests, for comparing runs.
pub fn manifest_digests(m: &Manifest) -> BTreeMap<String, String> {
    m.stages
        .iter()
        .flat_map(|s| {
            s.artifacts
                .iter()
                .map(|a| (a.path.clone(), a.sha256.clone()))
        })
        .collect()
}
