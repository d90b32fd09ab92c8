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

//! Folding clones back into base researchers.
//!
//! Inside each detected community, every clone is replaced by its base
//! identity and parallel edges between two base identities collapse to the
//! heaviest of them. Clones of one researcher that ended up in different
//! communities stay separate memberships, which is where overlap comes from.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::community::CommunityTree;
use crate::error::{Error, Result};
use crate::graph::ResearchGraph;
use crate::ingest::CLONE_SEPARATOR;
use crate::par::{self, Execution};

/// Strips a `#k` clone suffix (k >= 1).
pub fn base_identity(node_id: &str) -> &str {
    match node_id.rsplit_once(CLONE_SEPARATOR) {
        Some((base, k)) if k.parse::<usize>().is_ok_and(|k| k >= 1) => base,
        _ => node_id,
    }
}

/// Base identities in order of first appearance plus max-weight edges keyed
/// by `(min, max)` base name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldedGraph {
    pub members: Vec<String>,
    pub edges: BTreeMap<(String, String), f64>,
}

/// Merges clones within one community subgraph.
pub fn refine_community(subgraph: &ResearchGraph, community: &[String]) -> FoldedGraph {
    let mut seen = BTreeSet::new();
    let mut members = Vec::new();
    let mut add = |b: &str, members: &mut Vec<String>| {
        if seen.insert(b.to_owned()) {
            members.push(b.to_owned());
        }
    };
    let mut edges: BTreeMap<(String, String), f64> = BTreeMap::new();
    for u in community {
        let bu = base_identity(u);
        add(bu, &mut members);
        let Some(ui) = subgraph.index_of(u) else {
            continue;
        };
        for &(vi, w) in subgraph.neighbors(ui) {
            let bv = base_identity(&subgraph.nodes()[vi]);
            if bu != bv {
                add(bv, &mut members);
                let key = if bu < bv {
                    (bu.to_owned(), bv.to_owned())
                } else {
                    (bv.to_owned(), bu.to_owned())
                };
                let slot = edges.entry(key).or_insert(w);
                *slot = slot.max(w);
            }
        }
    }
    FoldedGraph { members, edges }
}

impl FoldedGraph {
    pub fn density(&self) -> Option<f64> {
        let n = self.members.len();
        (n >= 2).then(|| self.edges.len() as f64 / (n as f64 * (n as f64 - 1.0) / 2.0))
    }

    pub fn into_graph(self) -> ResearchGraph {
        let edges: Vec<(String, String, f64)> = self
            .edges
            .into_iter()
            .map(|((a, b), w)| (a, b, w))
            .collect();
        ResearchGraph::from_named(self.members, &edges).expect("folded graph is valid")
    }
}

/// The whole graph treated as a single community.
pub fn merge_whole_graph(g: &ResearchGraph) -> ResearchGraph {
    refine_community(g, g.nodes()).into_graph()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedEdge {
    pub u: String,
    pub v: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedCommunity {
    pub community_id: usize,
    /// Index of the source leaf in left-to-right leaf order.
    pub source_leaf: usize,
    pub members: Vec<String>,
    pub edges: Vec<RefinedEdge>,
    /// `None` for single-member communities.
    pub density: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub memberships: BTreeMap<String, BTreeSet<usize>>,
    /// membership multiplicity -> number of researchers
    pub overlap_counts: BTreeMap<usize, usize>,
}

impl OverlapReport {
    pub fn from_communities(communities: &[RefinedCommunity]) -> Self {
        let mut memberships: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for c in communities {
            for m in &c.members {
                memberships
                    .entry(m.clone())
                    .or_default()
                    .insert(c.community_id);
            }
        }
        let mut overlap_counts = BTreeMap::new();
        for set in memberships.values() {
            *overlap_counts.entry(set.len()).or_default() += 1;
        }
        OverlapReport {
            memberships,
            overlap_counts,
        }
    }

    pub fn multiplicity(&self, base_id: &str) -> usize {
        self.memberships.get(base_id).map_or(0, BTreeSet::len)
    }

    /// Researchers in more than one community.
    pub fn overlapping(&self) -> Vec<&str> {
        self.memberships
            .iter()
            .filter(|(_, s)| s.len() > 1)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn max_multiplicity(&self) -> usize {
        self.overlap_counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Median multiplicity among overlapping researchers.
    pub fn median_overlap(&self) -> Option<f64> {
        let mut v: Vec<usize> = self
            .memberships
            .values()
            .map(BTreeSet::len)
            .filter(|&m| m > 1)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable();
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2] as f64
        } else {
            (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
        })
    }
}

/// Refined communities and overlap, as written by the refine stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedCommunities {
    pub communities: Vec<RefinedCommunity>,
    pub overlap: OverlapReport,
}

impl RefinedCommunities {
    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path, "refined communities")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

pub fn refine_all(tree: &CommunityTree, g: &ResearchGraph) -> Result<RefinedCommunities> {
    refine_all_with(tree, g, Execution::default())
}

/// Refines every leaf of `tree` against the graph it was detected on.
pub fn refine_all_with(
    tree: &CommunityTree,
    g: &ResearchGraph,
    exec: Execution,
) -> Result<RefinedCommunities> {
    let leaves = tree.leaves();
    let communities = par::try_map(exec, &leaves, |leaf| {
        let idx = leaf
            .nodes
            .iter()
            .map(|n| g.index_of(n).ok_or_else(|| Error::UnknownNode(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(refine_community(&g.induced_subgraph(&idx), &leaf.nodes))
    })?
    .into_iter()
    .enumerate()
    .map(|(i, folded)| RefinedCommunity {
        community_id: i,
        source_leaf: i,
        density: folded.density(),
        members: folded.members,
        edges: folded
            .edges
            .into_iter()
            .map(|((u, v), weight)| RefinedEdge { u, v, weight })
            .collect(),
    })
    .collect::<Vec<_>>();
    let overlap = OverlapReport::from_communities(&communities);
    Ok(RefinedCommunities {
        communities,
        overlap,
    })
}
