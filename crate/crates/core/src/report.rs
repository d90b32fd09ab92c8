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

//! Evaluation tables: clone statistics, edge-weight distributions, mean
//! incident weight before/after cloning, community summaries, overlap, and
//! wordcloud scores. Everything is emitted as plot-ready JSON/CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloning::{NodeSet, ResearcherNode};
use crate::error::{Error, Result};
use crate::graph::ResearchGraph;
use crate::refine::{merge_whole_graph, OverlapReport, RefinedCommunities, RefinedCommunity};

/// topic index -> ranked (word, probability) list
pub type TopicWords = BTreeMap<usize, Vec<(String, f64)>>;

pub fn load_topic_words(path: &Path) -> Result<TopicWords> {
    crate::io::read_json(path, "topic words")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin boundaries; the last bin is closed.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Uniform bins over [0, 1].
    pub fn unit(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram {
            bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub stddev: f64,
    /// Fisher-Pearson moment coefficient; 0 when the weights are constant.
    pub skewness: f64,
    pub histogram: Histogram,
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn weight_stats(weights: &[f64], bins: usize) -> Result<EdgeWeightStats> {
    if weights.is_empty() {
        return Err(Error::InvalidInput(
            "edge statistics need at least one edge".into(),
        ));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let m2 = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
    let m3 = weights.iter().map(|w| (w - mean).powi(3)).sum::<f64>() / n;
    let stddev = m2.sqrt();
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let mut sorted = weights.to_vec();
    Ok(EdgeWeightStats {
        count: weights.len(),
        mean,
        median: median_of(&mut sorted),
        stddev,
        skewness,
        histogram: Histogram::unit(weights, bins),
    })
}

pub fn edge_stats(g: &ResearchGraph, bins: usize) -> Result<EdgeWeightStats> {
    let weights: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
    weight_stats(&weights, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEdgeDelta {
    pub base_id: String,
    pub mean_before: f64,
    pub mean_after: f64,
}

impl MeanEdgeDelta {
    pub fn delta(&self) -> f64 {
        self.mean_after - self.mean_before
    }
}

fn mean_incident(g: &ResearchGraph, id: &str) -> Result<f64> {
    let i = g
        .index_of(id)
        .ok_or_else(|| Error::UnknownNode(id.to_owned()))?;
    let nb = g.neighbors(i);
    Ok(if nb.is_empty() {
        0.0
    } else {
        nb.iter().map(|&(_, w)| w).sum::<f64>() / nb.len() as f64
    })
}

/// Mean incident edge weight per researcher in both graphs, sorted by
/// ascending difference.
pub fn mean_edge_delta<S: AsRef<str>>(
    before: &ResearchGraph,
    after_merged: &ResearchGraph,
    base_ids: &[S],
) -> Result<Vec<MeanEdgeDelta>> {
    let mut out = base_ids
        .iter()
        .map(|id| {
            let id = id.as_ref();
            Ok(MeanEdgeDelta {
                base_id: id.to_owned(),
                mean_before: mean_incident(before, id)?,
                mean_after: mean_incident(after_merged, id)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        a.delta()
            .total_cmp(&b.delta())
            .then_with(|| a.base_id.cmp(&b.base_id))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub count: usize,
    pub max_size: usize,
    pub min_size: usize,
    pub avg_size: f64,
    pub median_size: f64,
    /// Mean over communities with at least two members.
    pub avg_density: Option<f64>,
    pub sizes: Vec<usize>,
}

pub fn community_stats(communities: &[RefinedCommunity]) -> Result<CommunitySummary> {
    if communities.is_empty() {
        return Err(Error::InvalidInput("no communities to summarize".into()));
    }
    let sizes: Vec<usize> = communities.iter().map(|c| c.members.len()).collect();
    let mut as_f: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let densities: Vec<f64> = communities.iter().filter_map(|c| c.density).collect();
    Ok(CommunitySummary {
        count: sizes.len(),
        max_size: *sizes.iter().max().unwrap(),
        min_size: *sizes.iter().min().unwrap(),
        avg_size: as_f.iter().sum::<f64>() / as_f.len() as f64,
        median_size: median_of(&mut as_f),
        avg_density: (!densities.is_empty())
            .then(|| densities.iter().sum::<f64>() / densities.len() as f64),
        sizes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordcloudTable {
    pub node_id: String,
    pub entries: Vec<WordScore>,
}

pub const DEFAULT_TOP_TOPICS: usize = 5;
pub const DEFAULT_TOP_WORDS: usize = 50;

/// Scores words of the node's `top_topics` most probable topics by
/// topic probability times word probability, summing over topics when a word
/// recurs, and keeps the `top_words` best.
pub fn wordcloud_scores(
    node: &ResearcherNode,
    topic_words: &TopicWords,
    top_topics: usize,
    top_words: usize,
) -> Result<WordcloudTable> {
    let probs = node.profile.probs();
    let mut topics: Vec<usize> = (0..probs.len()).collect();
    topics.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    topics.truncate(top_topics);

    let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
    for &t in &topics {
        let words = topic_words.get(&t).ok_or(Error::MissingTopic(t))?;
        for (w, p) in words {
            *scores.entry(w.as_str()).or_default() += probs[t] * p;
        }
    }
    let mut entries: Vec<WordScore> = scores
        .into_iter()
        .map(|(w, s)| WordScore {
            word: w.to_owned(),
            score: s,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.word.cmp(&b.word))
    });
    entries.truncate(top_words);
    Ok(WordcloudTable {
        node_id: node.node_id.clone(),
        entries,
    })
}

/// Clone summary in the layout of a typical "researchers with clones" table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneStats {
    pub total_researchers: usize,
    pub high_impact: usize,
    pub threshold: Option<f64>,
    pub cloned: usize,
    pub max_clones: usize,
    /// Publication count of the researcher with the most clones.
    pub max_clones_publications: usize,
    pub min_clones: usize,
    pub median_clones_high_impact: f64,
    /// Publications per node of the cloned network.
    pub max_node_publications: usize,
    pub avg_node_publications: f64,
    pub median_node_publications: f64,
}

pub fn clone_stats(set: &NodeSet) -> CloneStats {
    let r = &set.report;
    let mut pubs_by_base: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &set.nodes {
        *pubs_by_base.entry(n.base_id.as_str()).or_default() += n.pub_ids.len();
    }
    let cloned: Vec<(&String, &usize)> = r
        .clones_per_researcher
        .iter()
        .filter(|(_, &c)| c > 1)
        .collect();
    let top = cloned
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(id, &c)| (c, pubs_by_base.get(id.as_str()).copied().unwrap_or(0)));
    let mut hi: Vec<f64> = r
        .clones_per_researcher
        .values()
        .map(|&c| c as f64)
        .collect();
    let mut per_node: Vec<f64> = set.nodes.iter().map(|n| n.pub_ids.len() as f64).collect();
    CloneStats {
        total_researchers: r.total_researchers,
        high_impact: r.high_impact_count,
        threshold: r.threshold_used,
        cloned: r.cloned_count,
        max_clones: top.map_or(0, |t| t.0),
        max_clones_publications: top.map_or(0, |t| t.1),
        min_clones: cloned.iter().map(|(_, &c)| c).min().unwrap_or(0),
        median_clones_high_impact: if hi.is_empty() {
            0.0
        } else {
            median_of(&mut hi)
        },
        max_node_publications: set.nodes.iter().map(|n| n.pub_ids.len()).max().unwrap_or(0),
        avg_node_publications: if per_node.is_empty() {
            0.0
        } else {
            per_node.iter().sum::<f64>() / per_node.len() as f64
        },
        median_node_publications: if per_node.is_empty() {
            0.0
        } else {
            median_of(&mut per_node)
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub histogram_bins: usize,
    pub top_topics: usize,
    pub top_words: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            histogram_bins: 50,
            top_topics: DEFAULT_TOP_TOPICS,
            top_words: DEFAULT_TOP_WORDS,
        }
    }
}

pub struct ReportInputs<'a> {
    /// Fully connected graph over unsplit researchers.
    pub before: &'a ResearchGraph,
    /// Fully connected graph over clones; folded here with the max rule.
    pub after: &'a ResearchGraph,
    pub refined: &'a RefinedCommunities,
    pub nodes: Option<&'a NodeSet>,
    pub base_nodes: Option<&'a NodeSet>,
    pub topic_words: Option<&'a TopicWords>,
    pub options: ReportOptions,
}

/// A report artifact: path relative to the report directory plus contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Serialize)]
struct EdgeWeightsFile<'a> {
    before: &'a EdgeWeightStats,
    after: &'a EdgeWeightStats,
}

#[derive(Serialize)]
struct OverlapFile<'a> {
    overlapping: Vec<&'a str>,
    max_multiplicity: usize,
    median_multiplicity: Option<f64>,
    overlap_counts: &'a BTreeMap<usize, usize>,
    memberships: &'a BTreeMap<String, BTreeSet<usize>>,
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub fn build_report(inputs: &ReportInputs) -> Result<Vec<ReportFile>> {
    let opts = inputs.options;
    let merged = merge_whole_graph(inputs.after);
    let before = edge_stats(inputs.before, opts.histogram_bins)?;
    let after = edge_stats(&merged, opts.histogram_bins)?;

    let mut files = Vec::new();
    let mut push = |name: &str, bytes: Vec<u8>| {
        files.push(ReportFile {
            name: name.to_owned(),
            bytes,
        })
    };
    push(
        "edge_weights.json",
        crate::io::to_json_bytes(&EdgeWeightsFile {
            before: &before,
            after: &after,
        }),
    );
    push(
        "edge_histogram.csv",
        csv_bytes(
            &["bin_start", "bin_end", "before", "after"],
            (0..before.histogram.counts.len())
                .map(|i| {
                    vec![
                        before.histogram.bin_edges[i].to_string(),
                        before.histogram.bin_edges[i + 1].to_string(),
                        before.histogram.counts[i].to_string(),
                        after.histogram.counts[i].to_string(),
                    ]
                })
                .collect(),
        ),
    );

    // Researchers to compare: those that were cloned, or every shared base
    // identity when no node set is available.
    let compared: Vec<String> = match inputs.nodes {
        Some(set) => set
            .report
            .clones_per_researcher
            .iter()
            .filter(|(_, &c)| c > 1)
            .map(|(id, _)| id.clone())
            .collect(),
        None => merged
            .nodes()
            .iter()
            .filter(|n| inputs.before.index_of(n).is_some())
            .cloned()
            .collect(),
    };
    let deltas = mean_edge_delta(inputs.before, &merged, &compared)?;
    push(
        "mean_edge_delta.csv",
        csv_bytes(
            &["base_id", "mean_before", "mean_after", "delta"],
            deltas
                .iter()
                .map(|d| {
                    vec![
                        d.base_id.clone(),
                        d.mean_before.to_string(),
                        d.mean_after.to_string(),
                        d.delta().to_string(),
                    ]
                })
                .collect(),
        ),
    );

    let communities = &inputs.refined.communities;
    let summary = community_stats(communities)?;
    push("community_stats.json", crate::io::to_json_bytes(&summary));
    push(
        "communities.csv",
        csv_bytes(
            &["community_id", "size", "edges", "density", "members"],
            communities
                .iter()
                .map(|c| {
                    vec![
                        c.community_id.to_string(),
                        c.members.len().to_string(),
                        c.edges.len().to_string(),
                        c.density.map(|d| d.to_string()).unwrap_or_default(),
                        c.members.join(";"),
                    ]
                })
                .collect(),
        ),
    );

    let overlap: &OverlapReport = &inputs.refined.overlap;
    push(
        "overlap.json",
        crate::io::to_json_bytes(&OverlapFile {
            overlapping: overlap.overlapping(),
            max_multiplicity: overlap.max_multiplicity(),
            median_multiplicity: overlap.median_overlap(),
            overlap_counts: &overlap.overlap_counts,
            memberships: &overlap.memberships,
        }),
    );

    let clone_summary = inputs.nodes.map(clone_stats);
    if let Some(cs) = &clone_summary {
        push("clone_stats.json", crate::io::to_json_bytes(cs));
    }

    if let (Some(words), Some(set)) = (inputs.topic_words, inputs.nodes) {
        let mut tables = Vec::new();
        let cloned: BTreeSet<&str> = set
            .nodes
            .iter()
            .filter(|n| n.clone_index > 0)
            .map(|n| n.base_id.as_str())
            .collect();
        if let Some(base) = inputs.base_nodes {
            for n in base
                .nodes
                .iter()
                .filter(|n| cloned.contains(n.base_id.as_str()))
            {
                tables.push(wordcloud_scores(n, words, opts.top_topics, opts.top_words)?);
            }
        }
        for n in &set.nodes {
            tables.push(wordcloud_scores(n, words, opts.top_topics, opts.top_words)?);
        }
        push("wordclouds.json", crate::io::to_json_bytes(&tables));
    }

    let mut text = String::new();
    if let Some(cs) = &clone_summary {
        let _ = writeln!(text, "researchers: {}", cs.total_researchers);
        let _ = writeln!(text, "high-impact researchers: {}", cs.high_impact);
        let _ = writeln!(text, "researchers with clones: {}", cs.cloned);
        let _ = writeln!(
            text,
            "max clones: {} ({} publications)",
            cs.max_clones, cs.max_clones_publications
        );
    }
    let _ = writeln!(
        text,
        "edge weights before: mean {:.4} median {:.4} skew {:.4} ({} edges)",
        before.mean, before.median, before.skewness, before.count
    );
    let _ = writeln!(
        text,
        "edge weights after:  mean {:.4} median {:.4} skew {:.4} ({} edges)",
        after.mean, after.median, after.skewness, after.count
    );
    let decreased: Vec<&str> = deltas
        .iter()
        .filter(|d| d.delta() < 0.0)
        .map(|d| d.base_id.as_str())
        .collect();
    let _ = writeln!(
        text,
        "mean incident weight increased for {} of {} compared researchers",
        deltas.iter().filter(|d| d.delta() > 0.0).count(),
        deltas.len()
    );
    if !decreased.is_empty() {
        let _ = writeln!(
            text,
            "WARNING: mean incident weight decreased for {}",
            decreased.join(", ")
        );
    }
    let _ = writeln!(
        text,
        "communities: {} (size max {} min {} avg {:.2} median {:.1}), avg density {}",
        summary.count,
        summary.max_size,
        summary.min_size,
        summary.avg_size,
        summary.median_size,
        summary
            .avg_density
            .map(|d| format!("{d:.2}"))
            .unwrap_or_else(|| "n/a".into())
    );
    let _ = writeln!(
        text,
        "researchers in more than one community: {} (max {}, median {})",
        overlap.overlapping().len(),
        overlap.max_multiplicity(),
        overlap
            .median_overlap()
            .map(|m| m.to_string())
            .unwrap_or_else(|| "n/a".into())
    );
    push("summary.txt", text.into_bytes());
    Ok(files)
}

pub fn write_report_files(dir: &Path, files: &[ReportFile]) -> Result<()> {
    for f in files {
        crate::io::write_bytes(&dir.join(&f.name), &f.bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::TopicDistribution;

    fn graph(nodes: &[&str], edges: &[(&str, &str, f64)]) -> ResearchGraph {
        let e: Vec<(String, String, f64)> = edges
            .iter()
            .map(|(a, b, w)| (a.to_string(), b.to_string(), *w))
            .collect();
        ResearchGraph::from_named(nodes.iter().map(|s| s.to_string()).collect(), &e).unwrap()
    }

    fn node(id: &str, profile: &[f64]) -> ResearcherNode {
        ResearcherNode {
            node_id: id.into(),
            base_id: id.into(),
            clone_index: 0,
            pub_ids: vec!["p".into()],
            profile: TopicDistribution::new(profile.to_vec()).unwrap(),
        }
    }

    #[test]
    fn stats_examples() {
        let s = weight_stats(&[0.5, 0.5, 0.5], 50).unwrap();
        assert_eq!((s.mean, s.stddev, s.skewness), (0.5, 0.0, 0.0));
        let s = weight_stats(&[0.2, 0.4, 0.6], 50).unwrap();
        assert!((s.mean - 0.4).abs() < 1e-15);
        assert_eq!(s.median, 0.4);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 3);
        assert!(weight_stats(&[0.1, 0.1, 0.9], 50).unwrap().skewness > 0.0);
        assert!(weight_stats(&[], 50).is_err());
    }

    #[test]
    fn histogram_closes_last_bin() {
        let h = Histogram::unit(&[0.0, 0.5, 1.0], 4);
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
        assert_eq!(h.bin_edges.len(), 5);
    }

    #[test]
    fn delta_examples() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 0.4), ("A", "C", 0.2)]);
        let d = mean_edge_delta(&g, &g, &["A", "B"]).unwrap();
        assert!(d.iter().all(|x| x.delta() == 0.0));

        // A split into two clones; the fold keeps A-C at 0.8
        let after = graph(
            &["A#1", "A#2", "B", "C"],
            &[("A#1", "B", 0.4), ("A#2", "C", 0.8), ("A#1", "C", 0.1)],
        );
        let merged = merge_whole_graph(&after);
        let d = mean_edge_delta(&g, &merged, &["A"]).unwrap();
        assert!((d[0].mean_before - 0.3).abs() < 1e-15);
        assert!((d[0].mean_after - 0.6).abs() < 1e-15);
        assert!(d[0].delta() > 0.0);
        assert!(mean_edge_delta(&g, &merged, &["Z"]).is_err());
    }

    fn community(id: usize, members: &[&str], edges: usize) -> RefinedCommunity {
        let n = members.len();
        RefinedCommunity {
            community_id: id,
            source_leaf: id,
            members: members.iter().map(|s| s.to_string()).collect(),
            edges: Vec::new(),
            density: (n >= 2).then(|| edges as f64 / (n * (n - 1) / 2) as f64),
        }
    }

    #[test]
    fn community_summary_examples() {
        let s = community_stats(&[community(0, &["a", "b"], 1)]).unwrap();
        assert_eq!((s.count, s.max_size, s.min_size), (1, 2, 2));
        assert_eq!(
            (s.avg_size, s.median_size, s.avg_density),
            (2.0, 2.0, Some(1.0))
        );
        let s = community_stats(&[
            community(0, &["a", "b", "c"], 3),
            community(1, &["d", "e", "f", "g", "h"], 4),
        ])
        .unwrap();
        assert_eq!((s.avg_size, s.median_size), (4.0, 4.0));
        let total: usize = s.sizes.iter().sum();
        assert_eq!(total as f64 / s.sizes.len() as f64, s.avg_size);
    }

    #[test]
    fn wordcloud_examples() {
        let mut words: TopicWords = BTreeMap::new();
        words.insert(0, vec![("bayesian".into(), 0.1)]);
        words.insert(1, vec![("swarm".into(), 0.2)]);
        let t = wordcloud_scores(&node("n", &[0.6, 0.4]), &words, 1, 50).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert!((t.entries[0].score - 0.06).abs() < 1e-15);

        words.insert(1, vec![("bayesian".into(), 0.05), ("swarm".into(), 0.15)]);
        let t = wordcloud_scores(&node("n", &[0.6, 0.4]), &words, 5, 50).unwrap();
        assert_eq!(t.entries[0].word, "bayesian");
        assert!((t.entries[0].score - 0.08).abs() < 1e-15);
        assert!(t.entries.windows(2).all(|w| w[0].score >= w[1].score));

        words.remove(&1);
        assert!(matches!(
            wordcloud_scores(&node("n", &[0.6, 0.4]), &words, 2, 50),
            Err(Error::MissingTopic(1))
        ));
    }

    #[test]
    fn wordcloud_ignores_word_order() {
        let mut a: TopicWords = BTreeMap::new();
        a.insert(
            0,
            vec![("x".into(), 0.3), ("y".into(), 0.2), ("z".into(), 0.2)],
        );
        let mut b = a.clone();
        b.get_mut(&0).unwrap().reverse();
        let n = node("n", &[1.0]);
        assert_eq!(
            wordcloud_scores(&n, &a, 5, 2).unwrap(),
            wordcloud_scores(&n, &b, 5, 2).unwrap()
        );
    }
}
