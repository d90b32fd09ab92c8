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

//! Modularity, weighted Louvain, and nested hierarchical Louvain.
//!
//! Louvain alternates two phases until nothing changes: local moves, where
//! each node joins the neighbouring community with the largest modularity
//! gain, and aggregation, where each community collapses into one node whose
//! internal weight becomes a self-loop. Resolution is fixed at 1. Several
//! seeded restarts are run and the highest-modularity result kept.
//!
//! The nested variant re-runs Louvain inside every community larger than a
//! minimum size, stopping early on communities Louvain cannot split.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{density, ResearchGraph};
use crate::par::{self, Execution};

/// Minimum gain improvement for a node to leave its current community.
const GAIN_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.values().max().map_or(0, |m| m + 1)
    }
}

/// Weighted Newman modularity of a per-node community labelling.
pub fn modularity_of(g: &ResearchGraph, labels: &[usize]) -> Result<f64> {
    assert_eq!(labels.len(), g.node_count(), "one label per node");
    let m = g.total_weight();
    if g.edge_count() == 0 || m <= 0.0 {
        return Err(Error::EdgelessGraph);
    }
    let two_m = 2.0 * m;
    let k = labels.iter().max().map_or(0, |x| x + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for e in g.edges() {
        if labels[e.u] == labels[e.v] {
            internal[labels[e.u]] += 2.0 * e.weight;
        }
    }
    for (i, &c) in labels.iter().enumerate() {
        total[c] += g.weighted_degree(i);
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(a, t)| a / two_m - (t / two_m).powi(2))
        .sum())
}

pub fn modularity(g: &ResearchGraph, assignment: &BTreeMap<String, usize>) -> Result<f64> {
    let labels = g
        .nodes()
        .iter()
        .map(|n| {
            assignment
                .get(n)
                .copied()
                .ok_or_else(|| Error::UncoveredNode(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    modularity_of(g, &labels)
}

/// Working graph for one Louvain level. `loops[i]` is the sum of `A_ab` over
/// ordered pairs inside super-node `i`.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(g: &ResearchGraph) -> Self {
        let n = g.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n).map(|i| g.neighbors(i).to_vec()).collect();
        let degree = adj
            .iter()
            .map(|a| a.iter().map(|&(_, w)| w).sum())
            .collect();
        Level {
            adj,
            loops: vec![0.0; n],
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// One local-moving phase. Returns the community of each node and whether
    /// any node moved.
    fn local_moves(
        &self,
        two_m: f64,
        randomized: bool,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<usize>, bool) {
        self.local_moves_from((0..self.len()).collect(), two_m, randomized, rng)
    }

    fn local_moves_from(
        &self,
        mut comm: Vec<usize>,
        two_m: f64,
        randomized: bool,
        rng: &mut ChaCha8Rng,
    ) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for (i, &c) in comm.iter().enumerate() {
            tot[c] += self.degree[i];
            size[c] += 1;
        }
        let mut empty: BTreeSet<usize> = (0..n).filter(|&c| size[c] == 0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let ki = self.degree[i];
                let old = comm[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[old] -= ki;
                size[old] -= 1;
                let gain = |c: usize, link: &[f64]| link[c] - tot[c] * ki / two_m;

                let mut best = old;
                let mut best_gain = gain(old, &link);
                touched.sort_unstable();
                let mut candidates = touched.clone();
                // Leaving for an empty community has gain 0.
                if size[old] > 0 {
                    if let Some(&e) = empty.first() {
                        candidates.push(e);
                        candidates.sort_unstable();
                    }
                }
                if randomized {
                    // Pick among improving moves with probability proportional
                    // to the improvement.
                    let stay = best_gain;
                    let improving: Vec<(usize, f64)> = candidates
                        .iter()
                        .filter(|&&c| c != old)
                        .map(|&c| (c, gain(c, &link) - stay))
                        .filter(|&(_, d)| d > GAIN_EPSILON)
                        .collect();
                    let total: f64 = improving.iter().map(|(_, d)| d).sum();
                    if total > 0.0 {
                        let mut u = rng.random::<f64>() * total;
                        best = improving.last().expect("non-empty").0;
                        for &(c, d) in &improving {
                            if u < d {
                                best = c;
                                break;
                            }
                            u -= d;
                        }
                    }
                } else {
                    for &c in &candidates {
                        if c != old {
                            let g = gain(c, &link);
                            if g > best_gain + GAIN_EPSILON {
                                best = c;
                                best_gain = g;
                            }
                        }
                    }
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();

                tot[best] += ki;
                size[best] += 1;
                if size[old] == 0 {
                    empty.insert(old);
                }
                empty.remove(&best);
                if best != old {
                    comm[i] = best;
                    moved = true;
                    any_move = true;
                }
            }
            if !moved {
                break;
            }
        }
        (comm, any_move)
    }

    /// Collapses communities (already numbered contiguously) into super-nodes.
    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut loops = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            let ci = comm[i];
            loops[ci] += self.loops[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    loops[ci] += w;
                } else {
                    *links[ci].entry(cj).or_default() += w;
                }
            }
        }
        Level {
            adj: links.into_iter().map(|m| m.into_iter().collect()).collect(),
            loops,
            degree,
        }
    }
}

/// Renumbers labels contiguously from 0 in order of first appearance.
fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Louvain over node indices; labels are contiguous and numbered by first
/// appearance in node order.
///
/// The result is the best of [`RESTARTS`] independently shuffled runs, each
/// finished with a node-level move pass on the original graph. Restart `r`
/// draws its visit orders from stream `r` of the seeded generator.
pub fn louvain_labels(g: &ResearchGraph, seed: u64) -> Result<Vec<usize>> {
    louvain_labels_with(g, seed, Execution::default())
}

/// As [`louvain_labels`]; restarts are scheduled by `exec`.
pub fn louvain_labels_with(g: &ResearchGraph, seed: u64, exec: Execution) -> Result<Vec<usize>> {
    if g.edge_count() == 0 {
        return Err(Error::EdgelessGraph);
    }
    let base = Level::from_graph(g);
    let restarts: Vec<u64> = (0..RESTARTS).collect();
    let runs = par::try_map(exec, &restarts, |&r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r);
        let labels = louvain_run(g, &base, r > 0, &mut rng);
        modularity_of(g, &labels).map(|q| (q, labels))
    })?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (q, labels) in runs {
        if best.as_ref().is_none_or(|(bq, _)| q > bq + GAIN_EPSILON) {
            best = Some((q, labels));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Independent Louvain runs per call of [`louvain_labels`].
pub const RESTARTS: u64 = 16;

fn louvain_run(
    g: &ResearchGraph,
    base: &Level,
    randomized: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let two_m = 2.0 * g.total_weight();
    let mut level = Level {
        adj: base.adj.clone(),
        loops: base.loops.clone(),
        degree: base.degree.clone(),
    };
    let mut labels: Vec<usize> = (0..g.node_count()).collect();
    loop {
        let (comm, moved) = level.local_moves(two_m, randomized, rng);
        if !moved {
            break;
        }
        let (comm, k) = canonical_labels(&comm);
        for l in labels.iter_mut() {
            *l = comm[*l];
        }
        level = level.aggregate(&comm, k);
    }
    let (polished, _) = base.local_moves_from(labels, two_m, false, rng);
    canonical_labels(&polished).0
}

pub fn louvain(g: &ResearchGraph, seed: u64) -> Result<Partition> {
    let labels = louvain_labels(g, seed)?;
    let modularity = modularity_of(g, &labels)?;
    Ok(Partition {
        assignment: g.nodes().iter().cloned().zip(labels).collect(),
        modularity,
    })
}

/// One community in the hierarchy. Leaves have no children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityNode {
    pub nodes: Vec<String>,
    pub density: f64,
    /// Modularity of the split into `children`, measured on this node's
    /// induced subgraph; `None` for leaves and edgeless splits.
    pub modularity: Option<f64>,
    pub children: Vec<CommunityNode>,
}

impl CommunityNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a CommunityNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| c.depth() + 1)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityTree {
    pub min_size: usize,
    pub seed: u64,
    pub root: CommunityNode,
}

impl CommunityTree {
    /// Leaves left to right.
    pub fn leaves(&self) -> Vec<&CommunityNode> {
        let mut out = Vec::new();
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path, "community tree")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

pub fn nh_louvain(g: &ResearchGraph, min_size: usize, seed: u64) -> CommunityTree {
    nh_louvain_with(g, min_size, seed, Execution::default())
}

/// Sibling communities are split independently; `exec` only changes the
/// schedule, never the result.
pub fn nh_louvain_with(
    g: &ResearchGraph,
    min_size: usize,
    seed: u64,
    exec: Execution,
) -> CommunityTree {
    let min_size = min_size.max(2);
    let all: Vec<usize> = (0..g.node_count()).collect();
    CommunityTree {
        min_size,
        seed,
        root: split(g, all, true, min_size, seed, exec),
    }
}

fn split(
    g: &ResearchGraph,
    members: Vec<usize>,
    is_root: bool,
    min_size: usize,
    seed: u64,
    exec: Execution,
) -> CommunityNode {
    let sub = g.induced_subgraph(&members);
    let mut node = CommunityNode {
        nodes: sub.nodes().to_vec(),
        density: density(&sub),
        modularity: None,
        children: Vec::new(),
    };
    if members.len() <= 1 || (!is_root && members.len() <= min_size) {
        return node;
    }
    let groups: Vec<Vec<usize>> = if sub.edge_count() == 0 {
        // isolated nodes become singleton communities
        members.iter().map(|&m| vec![m]).collect()
    } else {
        let labels = louvain_labels_with(&sub, seed, exec).expect("subgraph has edges");
        let k = labels.iter().max().map_or(0, |x| x + 1);
        if k == 1 {
            return node;
        }
        node.modularity = Some(modularity_of(&sub, &labels).expect("subgraph has edges"));
        let mut groups = vec![Vec::new(); k];
        for (local, &l) in labels.iter().enumerate() {
            groups[l].push(members[local]);
        }
        groups
    };
    node.children = par::map(exec, &groups, |grp| {
        split(g, grp.clone(), false, min_size, seed, exec)
    });
    node
}
