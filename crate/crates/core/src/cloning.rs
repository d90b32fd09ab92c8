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

//! Splitting high-output researchers into clones.
//!
//! A researcher whose publication count exceeds a multiple of the corpus
//! median has their documents clustered; each cluster, including the noise
//! group, becomes a clone node `<base_id>#<k>` with its own topic profile.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Corpus, CLONE_SEPARATOR};
use crate::par::{self, Execution};
use crate::profiles::{aggregate_profile, jsd_slices, DocTopicTable, TopicDistribution};

/// Cluster label for documents that belong to no cluster.
pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResearcherNode {
    pub node_id: String,
    pub base_id: String,
    /// 0 for an unsplit researcher, k >= 1 for the k-th clone.
    pub clone_index: usize,
    pub pub_ids: Vec<String>,
    pub profile: TopicDistribution,
}

pub fn clone_node_id(base_id: &str, k: usize) -> String {
    format!("{base_id}{CLONE_SEPARATOR}{k}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub total_researchers: usize,
    pub high_impact_count: usize,
    pub cloned_count: usize,
    /// Clone count for every high-impact researcher (1 when left unsplit).
    pub clones_per_researcher: BTreeMap<String, usize>,
    /// `None` when cloning is disabled.
    pub threshold_used: Option<f64>,
}

/// Nodes and clone statistics, as written by the clone stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub nodes: Vec<ResearcherNode>,
    pub report: CloneReport,
}

impl NodeSet {
    pub fn profiles(&self) -> BTreeMap<String, TopicDistribution> {
        self.nodes
            .iter()
            .map(|n| (n.node_id.clone(), n.profile.clone()))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path, "node set")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Externally computed labels: base_id -> (pub_id -> label).
pub type CloneLabels = BTreeMap<String, BTreeMap<String, i32>>;
/// Document embeddings: pub_id -> vector.
pub type DocVectors = BTreeMap<String, Vec<f64>>;

pub fn load_clone_labels(path: &Path) -> Result<CloneLabels> {
    crate::io::read_json(path, "clone labels")
}

pub fn load_doc_vectors(path: &Path) -> Result<DocVectors> {
    crate::io::read_json(path, "document vectors")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// 1.5 times the median publication count. An empty list gives +inf.
pub fn high_impact_threshold(pub_counts: &[usize]) -> f64 {
    threshold_with_factor(pub_counts, 1.5)
}

pub fn threshold_with_factor(pub_counts: &[usize], factor: f64) -> f64 {
    if pub_counts.is_empty() || factor.is_infinite() {
        return f64::INFINITY;
    }
    let mut v: Vec<f64> = pub_counts.iter().map(|&c| c as f64).collect();
    factor * median(&mut v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    JensenShannon,
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt(),
            // Square root of the divergence, which is a true metric.
            Metric::JensenShannon => jsd_slices(a, b)
                .expect("dimensions checked by caller")
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Clusters smaller than this are relabelled as noise.
    pub min_cluster_size: usize,
    /// Neighbourhood size (including the point) for a core point.
    pub min_samples: usize,
    pub metric: Metric,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 10,
            min_samples: 5,
            metric: Metric::JensenShannon,
        }
    }
}

/// Below this normalized gap the k-distance curve has no usable knee.
const KNEE_MIN_GAP: f64 = 0.5;

/// Radius at the knee of an ascending k-distance curve: the point farthest
/// below the chord of the normalized curve. When the tail never rises above
/// twice the knee value there is no separate sparse regime and the largest
/// k-distance is used instead, as it is when the curve has no pronounced bend.
pub fn knee_epsilon(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    let (lo, hi) = match (sorted.first(), sorted.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return 0.0,
    };
    if n < 3 || hi <= lo {
        return hi;
    }
    let mut best = (f64::NEG_INFINITY, hi);
    for (i, &y) in sorted.iter().enumerate() {
        let x = i as f64 / (n - 1) as f64;
        let gap = x - (y - lo) / (hi - lo);
        if gap > best.0 {
            best = (gap, y);
        }
    }
    let (gap, knee) = best;
    if gap < KNEE_MIN_GAP || hi <= 2.0 * knee {
        hi
    } else {
        knee
    }
}

/// DBSCAN over a full distance matrix. Points are visited in index order;
/// cluster ids are assigned in order of discovery.
pub fn dbscan(dist: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = dist.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[i][j] <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours
        .iter()
        .map(|nb| nb.len() >= min_samples)
        .collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != NOISE || !core[start] {
            continue;
        }
        labels[start] = next;
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Density clustering of one researcher's documents. Labels are contiguous
/// from 0 in pub_id order of first member; `-1` marks noise.
pub fn cluster_publications(
    doc_vectors: &BTreeMap<String, Vec<f64>>,
    params: &ClusterParams,
) -> Result<BTreeMap<String, i32>> {
    if doc_vectors.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "clustering needs at least 2 documents, got {}",
            doc_vectors.len()
        )));
    }
    let vectors: Vec<&[f64]> = doc_vectors.values().map(Vec::as_slice).collect();
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: v.len(),
        });
    }
    let n = vectors.len();
    if n < params.min_cluster_size {
        return Ok(doc_vectors.keys().map(|k| (k.clone(), 0)).collect());
    }
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| params.metric.distance(vectors[i], vectors[j]))
                .collect()
        })
        .collect();
    let k = params.min_samples.clamp(1, n);
    let mut kdist: Vec<f64> = dist
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(f64::total_cmp);
            r[k - 1]
        })
        .collect();
    kdist.sort_by(f64::total_cmp);
    let eps = knee_epsilon(&kdist);
    let raw = dbscan(&dist, eps, k);

    let mut sizes: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in &raw {
        *sizes.entry(l).or_default() += 1;
    }
    let mut relabel: BTreeMap<i32, i32> = BTreeMap::new();
    let labels = raw.iter().map(|&l| {
        if l == NOISE || sizes[&l] < params.min_cluster_size {
            NOISE
        } else {
            let next = relabel.len() as i32;
            *relabel.entry(l).or_insert(next)
        }
    });
    Ok(doc_vectors.keys().cloned().zip(labels).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloneOptions {
    /// Multiple of the median publication count; +inf disables cloning.
    pub threshold_factor: f64,
    pub cluster: ClusterParams,
}

impl Default for CloneOptions {
    fn default() -> Self {
        CloneOptions {
            threshold_factor: 1.5,
            cluster: ClusterParams::default(),
        }
    }
}

pub fn make_clones(
    corpus: &Corpus,
    doc_topics: &DocTopicTable,
    doc_vectors: Option<&DocVectors>,
    labels: Option<&CloneLabels>,
    options: &CloneOptions,
) -> Result<NodeSet> {
    make_clones_with(
        corpus,
        doc_topics,
        doc_vectors,
        labels,
        options,
        Execution::default(),
    )
}

/// Researchers are processed independently; output is ordered by base_id
/// then clone_index.
pub fn make_clones_with(
    corpus: &Corpus,
    doc_topics: &DocTopicTable,
    doc_vectors: Option<&DocVectors>,
    labels: Option<&CloneLabels>,
    options: &CloneOptions,
    exec: Execution,
) -> Result<NodeSet> {
    let researchers: Vec<(&String, &Vec<String>)> = corpus.researchers().iter().collect();
    let counts: Vec<usize> = researchers.iter().map(|(_, p)| p.len()).collect();
    let threshold = threshold_with_factor(&counts, options.threshold_factor);

    let per_researcher = par::try_map(exec, &researchers, |&(id, pubs)| {
        let high_impact = pubs.len() as f64 > threshold;
        let groups = if high_impact {
            researcher_labels(id, pubs, doc_topics, doc_vectors, labels, &options.cluster)?
        } else {
            vec![pubs.clone()]
        };
        let nodes = nodes_for(id, groups, doc_topics)?;
        Ok::<_, Error>((high_impact, nodes))
    })?;

    let mut nodes = Vec::new();
    let mut clones_per_researcher = BTreeMap::new();
    let mut high_impact_count = 0;
    let mut cloned_count = 0;
    for ((id, _), (high_impact, ns)) in researchers.iter().zip(per_researcher) {
        if high_impact {
            high_impact_count += 1;
            clones_per_researcher.insert((*id).clone(), ns.len());
            if ns.len() > 1 {
                cloned_count += 1;
            }
        }
        nodes.extend(ns);
    }
    Ok(NodeSet {
        nodes,
        report: CloneReport {
            total_researchers: researchers.len(),
            high_impact_count,
            cloned_count,
            clones_per_researcher,
            threshold_used: threshold.is_finite().then_some(threshold),
        },
    })
}

/// Publication groups for a high-impact researcher, in clone order. A single
/// group means the researcher stays unsplit.
fn researcher_labels(
    id: &str,
    pubs: &[String],
    doc_topics: &DocTopicTable,
    doc_vectors: Option<&DocVectors>,
    labels: Option<&CloneLabels>,
    params: &ClusterParams,
) -> Result<Vec<Vec<String>>> {
    let assigned: BTreeMap<String, i32> = if let Some(given) = labels.and_then(|l| l.get(id)) {
        pubs.iter()
            .map(|p| {
                given.get(p).map(|&l| (p.clone(), l)).ok_or_else(|| {
                    Error::InvalidInput(format!("clone labels for `{id}` miss publication `{p}`"))
                })
            })
            .collect::<Result<_>>()?
    } else {
        if labels.is_some() {
            warn!("no external clone labels for `{id}`; clustering internally");
        }
        let embedded = doc_vectors.filter(|v| pubs.iter().all(|p| v.contains_key(p)));
        let (vectors, metric) = match embedded {
            Some(v) => (
                pubs.iter().map(|p| (p.clone(), v[p].clone())).collect(),
                Metric::Euclidean,
            ),
            None => (
                pubs.iter()
                    .map(|p| {
                        doc_topics
                            .row(p)
                            .map(|r| (p.clone(), r.to_vec()))
                            .ok_or_else(|| Error::MissingPublication(p.clone()))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?,
                Metric::JensenShannon,
            ),
        };
        cluster_publications(&vectors, &ClusterParams { metric, ..*params })?
    };

    let mut by_label: BTreeMap<i32, Vec<String>> = BTreeMap::new();
    for (p, l) in assigned {
        by_label.entry(l).or_default().push(p);
    }
    let noise = by_label.remove(&NOISE);
    let mut groups: Vec<Vec<String>> = by_label.into_values().collect();
    groups.extend(noise);
    if groups.len() < 2 {
        return Ok(vec![pubs.to_vec()]);
    }
    Ok(groups)
}

fn nodes_for(
    base_id: &str,
    groups: Vec<Vec<String>>,
    doc_topics: &DocTopicTable,
) -> Result<Vec<ResearcherNode>> {
    let split = groups.len() > 1;
    groups
        .into_iter()
        .enumerate()
        .map(|(i, pub_ids)| {
            let (node_id, clone_index) = if split {
                (clone_node_id(base_id, i + 1), i + 1)
            } else {
                (base_id.to_owned(), 0)
            };
            let profile = aggregate_profile(doc_topics, &pub_ids).map_err(|e| match e {
                Error::DegenerateProfile { rows, .. } => Error::DegenerateProfile {
                    node: Some(node_id.clone()),
                    rows,
                },
                other => other,
            })?;
            Ok(ResearcherNode {
                node_id,
                base_id: base_id.to_owned(),
                clone_index,
                pub_ids,
                profile,
            })
        })
        .collect()
}

/// Union of publication ids over all nodes of each base researcher.
pub fn pubs_by_base(nodes: &[ResearcherNode]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for n in nodes {
        out.entry(n.base_id.clone())
            .or_default()
            .extend(n.pub_ids.iter().cloned());
    }
    out
}
