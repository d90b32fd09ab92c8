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

//! The weighted undirected research network and edge pruning.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Undirected graph over named nodes. Each edge is stored once with `u < v`,
/// edges are sorted by `(u, v)`, weights are strictly positive and there are
/// no self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ResearchGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl ResearchGraph {
    pub fn new(
        nodes: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node `{n}`")));
            }
        }
        let mut list = Vec::new();
        for (a, b, w) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on `{}`", nodes[a])));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge `{}`-`{}` has non-positive weight {w}",
                    nodes[a], nodes[b]
                )));
            }
            list.push(Edge {
                u: a.min(b),
                v: a.max(b),
                weight: w,
            });
        }
        list.sort_by_key(|e| (e.u, e.v));
        if let Some(pair) = list
            .windows(2)
            .find(|p| (p[0].u, p[0].v) == (p[1].u, p[1].v))
        {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge `{}`-`{}`",
                nodes[pair[0].u], nodes[pair[0].v]
            )));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &list {
            adjacency[e.u].push((e.v, e.weight));
            adjacency[e.v].push((e.u, e.weight));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(n, _)| n);
        }
        Ok(ResearchGraph {
            nodes,
            index,
            edges: list,
            adjacency,
        })
    }

    /// Builds from named edges; every endpoint must appear in `nodes`.
    pub fn from_named(nodes: Vec<String>, edges: &[(String, String, f64)]) -> Result<Self> {
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let lookup = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| Error::UnknownNode(n.to_owned()))
        };
        let resolved = edges
            .iter()
            .map(|(a, b, w)| Ok((lookup(a)?, lookup(b)?, *w)))
            .collect::<Result<Vec<_>>>()?;
        ResearchGraph::new(nodes, resolved)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, node: &str) -> Option<usize> {
        self.index.get(node).copied()
    }

    /// Neighbours of node `i` with edge weights, sorted by neighbour index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        let adj = &self.adjacency[a];
        adj.binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|k| adj[k].1)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Subgraph induced by `members` (indices into this graph); node order
    /// follows `members`.
    pub fn induced_subgraph(&self, members: &[usize]) -> ResearchGraph {
        let local: HashMap<usize, usize> =
            members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let nodes = members.iter().map(|&i| self.nodes[i].clone()).collect();
        let mut edges = Vec::new();
        for (k, &i) in members.iter().enumerate() {
            for &(j, w) in &self.adjacency[i] {
                if let Some(&kj) = local.get(&j) {
                    if k < kj {
                        edges.push((k, kj, w));
                    }
                }
            }
        }
        ResearchGraph::new(nodes, edges).expect("induced subgraph of a valid graph")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: GraphFile = crate::io::read_json(path, "graph")?;
        file.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, &GraphFile::from(self))
    }
}

/// Graph export: node manifest plus an edge list keyed by node name.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphFileEdge>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphFileEdge {
    pub u: String,
    pub v: String,
    pub weight: f64,
}

impl From<&ResearchGraph> for GraphFile {
    fn from(g: &ResearchGraph) -> Self {
        GraphFile {
            nodes: g.nodes.clone(),
            edges: g
                .edges
                .iter()
                .map(|e| GraphFileEdge {
                    u: g.nodes[e.u].clone(),
                    v: g.nodes[e.v].clone(),
                    weight: e.weight,
                })
                .collect(),
        }
    }
}

impl TryFrom<GraphFile> for ResearchGraph {
    type Error = Error;
    fn try_from(f: GraphFile) -> Result<Self> {
        let edges: Vec<_> = f.edges.into_iter().map(|e| (e.u, e.v, e.weight)).collect();
        ResearchGraph::from_named(f.nodes, &edges)
    }
}

/// Complete graph weighted by similarity. Pairs with zero similarity carry no
/// edge, since a zero-weight edge contributes nothing to adjacency.
pub fn build_graph(sim: &SimilarityMatrix) -> ResearchGraph {
    let r = sim.len();
    let mut edges = Vec::with_capacity(r * r.saturating_sub(1) / 2);
    for i in 0..r {
        for j in i + 1..r {
            let w = sim.get(i, j);
            if w > 0.0 {
                edges.push((i, j, w));
            }
        }
    }
    ResearchGraph::new(sim.node_ids.clone(), edges).expect("similarity matrix yields a valid graph")
}

/// Removes edges strictly below `threshold`. Nodes are never removed.
pub fn prune_edges(g: &ResearchGraph, threshold: f64) -> ResearchGraph {
    let edges = g
        .edges
        .iter()
        .filter(|e| e.weight >= threshold)
        .map(|e| (e.u, e.v, e.weight));
    ResearchGraph::new(g.nodes.clone(), edges).expect("pruning preserves validity")
}

fn max_edges(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

pub fn density(g: &ResearchGraph) -> f64 {
    if g.node_count() < 2 {
        return 0.0;
    }
    g.edge_count() as f64 / max_edges(g.node_count())
}

/// Smallest threshold among the graph's edge weights whose pruned density
/// does not exceed `target_density`. Returns 0 when no pruning is needed and
/// a value just above the heaviest edge when every edge must go.
pub fn threshold_for_density(g: &ResearchGraph, target_density: f64) -> f64 {
    let allowed = (target_density * max_edges(g.node_count()) + 1e-9).floor();
    if g.edge_count() as f64 <= allowed {
        return 0.0;
    }
    // count of edges with weight >= w, walking distinct weights upwards
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for e in &g.edges {
        *counts.entry(e.weight.to_bits()).or_default() += 1;
    }
    let mut remaining = g.edge_count();
    for (bits, n) in counts {
        if remaining as f64 <= allowed {
            return f64::from_bits(bits);
        }
        remaining -= n;
    }
    let heaviest = g.edges.iter().map(|e| e.weight).fold(0.0, f64::max);
    heaviest.next_up()
}
