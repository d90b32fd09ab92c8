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

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scholarnet_core::cloning::{clone_node_id, high_impact_threshold, make_clones, CloneOptions};
use scholarnet_core::community::{louvain_labels, modularity_of};
use scholarnet_core::graph::{density, prune_edges, threshold_for_density, ResearchGraph};
use scholarnet_core::ingest::{Corpus, Provenance, Publication, Source};
use scholarnet_core::metrics::adjusted_rand_index;
use scholarnet_core::pipeline::{
    run_pipeline, ConfigLayer, PipelineConfig, PipelineRun, MANIFEST_FILE, STAGES,
};
use scholarnet_core::profiles::{jsd_slices, DocTopicTable};
use scholarnet_core::refine::refine_community;
use scholarnet_core::report::mean_edge_delta;
use scholarnet_core::synth::{generate_synthetic, SyntheticSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// JSD through the entropy identity H(m) - (H(p) + H(q)) / 2.
fn jsd_by_entropy(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    entropy(&m) - 0.5 * (entropy(p) + entropy(q))
}

fn jsd_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let len = rng.random_range(2..=12);
        let p = random_distribution(&mut rng, len);
        let q = random_distribution(&mut rng, len);
        let pq = jsd_slices(&p, &q).map_err(|e| e.to_string())?;
        let qp = jsd_slices(&q, &p).map_err(|e| e.to_string())?;
        let pp = jsd_slices(&p, &p).map_err(|e| e.to_string())?;
        check((pq - qp).abs() <= 1e-12, || {
            format!("pair {i}: asymmetric {pq} vs {qp}")
        })?;
        check((0.0..=1.0).contains(&pq), || {
            format!("pair {i}: {pq} outside [0, 1]")
        })?;
        check(pp.abs() <= 1e-12, || format!("pair {i}: jsd(p, p) = {pp}"))?;
        if p != q {
            check(pq > 0.0, || {
                format!("pair {i}: distinct distributions at distance 0")
            })?;
        }
        let oracle = jsd_by_entropy(&p, &q).clamp(0.0, 1.0);
        check((pq - oracle).abs() <= 1e-12, || {
            format!("pair {i}: {pq} vs entropy route {oracle}")
        })?;
    }
    let v = jsd_slices(&[0.5, 0.5], &[1.0, 0.0]).map_err(|e| e.to_string())?;
    // H(0.75, 0.25) - 1/2
    let expected = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2()) - 0.5;
    check(
        (v - 0.311278).abs() <= 1e-6 && (v - expected).abs() <= 1e-12,
        || format!("jsd([0.5,0.5],[1,0]) = {v}"),
    )?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!(
        "1000 pairs, jsd([0.5,0.5],[1,0]) = {v:.6}, {elapsed:.2?}"
    ))
}

/// Every set partition of `0..n` as restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            go(n, cur, max.max(l), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, &mut vec![0], 0, &mut out);
    out
}

fn brute_force_best(g: &ResearchGraph) -> (f64, Vec<usize>) {
    set_partitions(g.node_count())
        .into_iter()
        .map(|p| (modularity_of(g, &p).unwrap(), p))
        .fold((f64::NEG_INFINITY, Vec::new()), |a, b| {
            if b.0 > a.0 {
                b
            } else {
                a
            }
        })
}

fn named(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

fn louvain_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let graphs = 300;
    let mut worst = f64::INFINITY;
    for gi in 0..graphs {
        let n = rng.random_range(3..=8);
        let p: f64 = rng.random_range(0.2..0.9);
        // A random spanning tree keeps the graph connected.
        let mut edges = BTreeMap::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.insert((u, v), rng.random_range(1..=10) as f64 / 10.0);
        }
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges
                        .entry((u, v))
                        .or_insert(rng.random_range(1..=10) as f64 / 10.0);
                }
            }
        }
        let g =
            ResearchGraph::new(named(n), edges.into_iter().map(|((u, v), w)| (u, v, w))).unwrap();
        let (best, _) = brute_force_best(&g);
        let labels = louvain_labels(&g, gi).map_err(|e| e.to_string())?;
        let q = modularity_of(&g, &labels).unwrap();
        check(q >= 0.95 * best - 1e-12, || {
            format!("graph {gi} (n = {n}): Q = {q}, optimum {best}")
        })?;
        if best > 1e-9 {
            worst = worst.min(q / best);
        }
    }

    let two_edges = ResearchGraph::new(named(4), [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    let labels = louvain_labels(&two_edges, 0).unwrap();
    let q = modularity_of(&two_edges, &labels).unwrap();
    check(labels == [0, 0, 1, 1] && (q - 0.5).abs() < 1e-12, || {
        format!("two disjoint edges: labels {labels:?}, Q = {q}")
    })?;

    let mut e = Vec::new();
    for c in [0, 4] {
        for i in c..c + 4 {
            for j in i + 1..c + 4 {
                e.push((i, j, 1.0));
            }
        }
    }
    e.push((3, 4, 0.1));
    let cliques = ResearchGraph::new(named(8), e).unwrap();
    let (best, _) = brute_force_best(&cliques);
    let labels = louvain_labels(&cliques, 0).unwrap();
    let q = modularity_of(&cliques, &labels).unwrap();
    check(
        labels == [0, 0, 0, 0, 1, 1, 1, 1] && (q - best).abs() < 1e-12,
        || format!("two cliques: labels {labels:?}, Q = {q}, optimum {best}"),
    )?;

    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(120))?;
    Ok(format!(
        "{graphs} graphs, worst Q/Q* = {worst:.4}, {elapsed:.2?}"
    ))
}

/// Max-weight fold by enumerating every ordered pair of clone nodes.
fn brute_fold(g: &ResearchGraph) -> (BTreeSet<String>, BTreeMap<(String, String), f64>) {
    let base = |s: &str| s.split('#').next().unwrap().to_owned();
    let members = g.nodes().iter().map(|n| base(n)).collect();
    let mut edges: BTreeMap<(String, String), f64> = BTreeMap::new();
    for a in 0..g.node_count() {
        for b in 0..g.node_count() {
            let (ba, bb) = (base(&g.nodes()[a]), base(&g.nodes()[b]));
            if ba >= bb {
                continue;
            }
            if let Some(w) = g.edge_weight(a, b) {
                let slot = edges.entry((ba, bb)).or_insert(f64::NEG_INFINITY);
                *slot = slot.max(w);
            }
        }
    }
    (members, edges)
}

fn random_leaf(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<(String, String, f64)>) {
    let n = rng.random_range(1..=20);
    let bases = rng.random_range(1..=n);
    let mut next_clone = vec![0usize; bases];
    let mut nodes = Vec::new();
    for i in 0..n {
        let b = if i < bases {
            i
        } else {
            rng.random_range(0..bases)
        };
        next_clone[b] += 1;
        nodes.push((b, next_clone[b]));
    }
    let names: Vec<String> = nodes
        .iter()
        .map(|&(b, k)| {
            if next_clone[b] == 1 {
                format!("R{b}")
            } else {
                clone_node_id(&format!("R{b}"), k)
            }
        })
        .collect();
    let p: f64 = rng.random();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((
                    names[u].clone(),
                    names[v].clone(),
                    rng.random_range(1..=20) as f64 / 20.0,
                ));
            }
        }
    }
    (names, edges)
}

fn refine_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..500 {
        let (names, edges) = random_leaf(&mut rng);
        let g = ResearchGraph::from_named(names.clone(), &edges).unwrap();
        let folded = refine_community(&g, &names);
        let (members, oracle) = brute_fold(&g);
        let got: BTreeSet<String> = folded.members.iter().cloned().collect();
        check(got == members && got.len() == folded.members.len(), || {
            format!(
                "case {case}: members {:?}, expected {members:?}",
                folded.members
            )
        })?;
        check(folded.edges == oracle, || {
            format!("case {case}: edges differ from brute-force fold")
        })?;

        let mut order = names.clone();
        order.shuffle(&mut rng);
        let mut shuffled_edges = edges.clone();
        shuffled_edges.shuffle(&mut rng);
        let h = ResearchGraph::from_named(order.clone(), &shuffled_edges).unwrap();
        let again = refine_community(&h, &order);
        let again_members: BTreeSet<String> = again.members.iter().cloned().collect();
        check(again.edges == folded.edges && again_members == got, || {
            format!("case {case}: result depends on node order")
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!("500 leaves, {elapsed:.2?}"))
}

fn pipeline_config(data: &Path, out: &Path, extra: &str) -> PipelineConfig {
    let file = ConfigLayer::from_toml_str(&format!(
        "corpus = {:?}\ndoc_topics = {:?}\ntopic_words = {:?}\nout_dir = {:?}\n{extra}",
        data.join("corpus.jsonl"),
        data.join("doc_topics.json"),
        data.join("topic_words.json"),
        out,
    ))
    .unwrap();
    PipelineConfig::from_layers([file]).unwrap()
}

fn synthetic_run(
    spec: &SyntheticSpec,
    extra: &str,
) -> Result<(PipelineRun, tempfile::TempDir), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = generate_synthetic(spec).map_err(|e| e.to_string())?;
    synth.write(dir.path()).map_err(|e| e.to_string())?;
    let config = pipeline_config(dir.path(), &dir.path().join("out"), extra);
    let run = run_pipeline(&config).map_err(|e| e.to_string())?;
    Ok((run, dir))
}

fn pipeline_determinism() -> Outcome {
    let spec = SyntheticSpec {
        bridging: 2,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let (first, a) = synthetic_run(&spec, "seed = 3")?;
    let (second, b) = synthetic_run(&spec, "seed = 3")?;
    let ma = std::fs::read(a.path().join("out").join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mb = std::fs::read(b.path().join("out").join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    check(ma == mb, || "manifests differ between runs".into())?;
    let stages: Vec<&str> = first
        .manifest
        .stages
        .iter()
        .map(|s| s.stage.as_str())
        .collect();
    check(stages == STAGES, || format!("stages {stages:?}"))?;
    check(
        first
            .manifest
            .stages
            .iter()
            .all(|s| !s.artifacts.is_empty()),
        || "a stage recorded no artifacts".into(),
    )?;
    check(first.refined == second.refined, || {
        "refined communities differ".into()
    })?;
    let artifacts: usize = first
        .manifest
        .stages
        .iter()
        .map(|s| s.artifacts.len())
        .sum();
    Ok(format!(
        "{} stages, {artifacts} artifacts, identical manifests",
        stages.len()
    ))
}

fn planted_recovery() -> Outcome {
    let start = Instant::now();
    let mut scores = Vec::new();
    for seed in 0..5 {
        let spec = SyntheticSpec {
            topics: 6,
            researchers: 60,
            communities: 3,
            seed,
            ..SyntheticSpec::default()
        };
        let truth = generate_synthetic(&spec).map_err(|e| e.to_string())?.truth;
        let (run, _dir) = synthetic_run(&spec, &format!("seed = {seed}"))?;
        let mut found: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &run.refined.communities {
            for m in &c.members {
                check(found.insert(m, c.community_id).is_none(), || {
                    format!("seed {seed}: {m} in several communities without clones")
                })?;
            }
        }
        check(found.len() == 60, || {
            format!("seed {seed}: {} researchers placed", found.len())
        })?;
        let (a, b): (Vec<usize>, Vec<usize>) = found
            .iter()
            .map(|(id, &c)| (truth.primary(id).unwrap(), c))
            .unzip();
        let ari = adjusted_rand_index(&a, &b);
        check(ari >= 0.9, || format!("seed {seed}: ARI {ari:.4}"))?;
        scores.push(ari);
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(60))?;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!("min ARI {min:.4} over 5 seeds, {elapsed:.2?}"))
}

fn cloning_benefit() -> Outcome {
    let spec = SyntheticSpec {
        bridging: 5,
        seed: 21,
        ..SyntheticSpec::default()
    };
    let (with, _a) = synthetic_run(&spec, "seed = 1")?;
    let (without, _b) = synthetic_run(&spec, "seed = 1\nclone_threshold_factor = inf")?;
    let bridging: Vec<String> = generate_synthetic(&spec)
        .map_err(|e| e.to_string())?
        .truth
        .bridging;

    let multi = |run: &PipelineRun| {
        bridging
            .iter()
            .filter(|b| run.refined.overlap.multiplicity(b) >= 2)
            .count()
    };
    let (m_with, m_without) = (multi(&with), multi(&without));
    check(m_with >= 4, || {
        format!("only {m_with} of 5 bridging researchers overlap with cloning")
    })?;
    check(m_without == 0, || {
        format!("{m_without} overlap without cloning")
    })?;

    let cloned: Vec<&String> = with
        .nodes
        .report
        .clones_per_researcher
        .iter()
        .filter(|(_, &k)| k >= 2)
        .map(|(id, _)| id)
        .collect();
    check(!cloned.is_empty(), || "nobody was cloned".into())?;
    let merged = scholarnet_core::refine::merge_whole_graph(&with.graph_full);
    let deltas = mean_edge_delta(&with.graph_base, &merged, &cloned).map_err(|e| e.to_string())?;
    let worst = deltas
        .iter()
        .map(|d| d.delta())
        .fold(f64::INFINITY, f64::min);
    check(deltas.iter().all(|d| d.delta() > 0.0), || {
        let bad: Vec<_> = deltas
            .iter()
            .filter(|d| d.delta() <= 0.0)
            .map(|d| &d.base_id)
            .collect();
        format!("mean edge weight did not increase for {bad:?}")
    })?;
    Ok(format!(
        "{m_with}/5 overlap with cloning, {m_without}/5 without; {} cloned, min delta {worst:.4}",
        cloned.len()
    ))
}

fn pruning_density() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for gi in 0..100 {
        let n = rng.random_range(2..=40);
        let p: f64 = rng.random_range(0.1..=1.0);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v, rng.random::<f64>()));
                }
            }
        }
        let g = ResearchGraph::new(named(n), edges).unwrap();
        let max_edges = (n * (n - 1) / 2) as f64;
        let target: f64 = rng.random();
        let t = threshold_for_density(&g, target);
        let d = density(&prune_edges(&g, t));
        let granularity = 1.0 / max_edges;
        check(d <= target + 1e-12, || {
            format!("graph {gi}: density {d} above target {target}")
        })?;
        let reachable = target.min(density(&g));
        check(reachable - d < granularity + 1e-12, || {
            format!("graph {gi}: density {d} more than one edge below {reachable}")
        })?;

        let mut ts: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        ts.sort_by(f64::total_cmp);
        for w in ts.windows(2) {
            let (lo, hi) = (prune_edges(&g, w[0]), prune_edges(&g, w[1]));
            let kept: BTreeSet<(usize, usize)> = lo.edges().iter().map(|e| (e.u, e.v)).collect();
            check(
                hi.edges().iter().all(|e| kept.contains(&(e.u, e.v))),
                || {
                    format!(
                        "graph {gi}: pruning at {} keeps an edge dropped at {}",
                        w[1], w[0]
                    )
                },
            )?;
            check(density(&hi) <= density(&lo), || {
                format!("graph {gi}: density not monotone")
            })?;
        }
    }
    Ok("100 graphs".into())
}

fn clone_bookkeeping() -> Outcome {
    let counts: Vec<usize> = [10, 15, 20, 22, 22, 25, 30, 40, 50].to_vec();
    let t = high_impact_threshold(&counts);
    check(t == 33.0, || format!("median 22 gave threshold {t}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let mut pubs = Vec::new();
    let mut rows = BTreeMap::new();
    for r in 0..200 {
        let n = if r % 10 == 0 {
            rng.random_range(40..=80)
        } else {
            rng.random_range(1..=25)
        };
        let themes = rng.random_range(1..=3);
        for j in 0..n {
            let id = format!("P{r:03}_{j:03}");
            let theme = j % themes;
            let mut row = [0.02; 6];
            row[2 * theme] += rng.random_range(0.5..0.8);
            row[2 * theme + 1] += rng.random_range(0.1..0.3);
            let s: f64 = row.iter().sum();
            rows.insert(id.clone(), row.iter().map(|x| x / s).collect());
            let mut authors = BTreeSet::from([format!("A{r:03}")]);
            if rng.random_bool(0.1) {
                authors.insert(format!("A{:03}", rng.random_range(0..200)));
            }
            pubs.push(Publication {
                pub_id: id,
                title: String::new(),
                abstract_text: String::new(),
                year: 2020,
                author_ids: authors,
            });
        }
    }
    let corpus = Corpus::new(pubs, Provenance::new(Source::Memory)).map_err(|e| e.to_string())?;
    let table = DocTopicTable::new(6, rows).map_err(|e| e.to_string())?;
    let set = make_clones(&corpus, &table, None, None, &CloneOptions::default())
        .map_err(|e| e.to_string())?;

    let counts: Vec<usize> = corpus.researchers().values().map(Vec::len).collect();
    let threshold = high_impact_threshold(&counts);
    check(set.report.threshold_used == Some(threshold), || {
        "threshold not reported".into()
    })?;
    let mut by_base: BTreeMap<&str, Vec<&scholarnet_core::cloning::ResearcherNode>> =
        BTreeMap::new();
    for n in &set.nodes {
        by_base.entry(&n.base_id).or_default().push(n);
    }
    check(by_base.len() == corpus.researchers().len(), || {
        "researchers lost".into()
    })?;
    let ids: BTreeSet<&str> = set.nodes.iter().map(|n| n.node_id.as_str()).collect();
    check(ids.len() == set.nodes.len(), || "duplicate node ids".into())?;
    for (base, pubs) in corpus.researchers() {
        let nodes = &by_base[base.as_str()];
        let mut seen = BTreeSet::new();
        for n in nodes {
            for p in &n.pub_ids {
                check(seen.insert(p.as_str()), || {
                    format!("{base}: {p} in two clones")
                })?;
            }
        }
        let all: BTreeSet<&str> = pubs.iter().map(String::as_str).collect();
        check(seen == all, || {
            format!("{base}: clones do not cover the publications")
        })?;
        if (pubs.len() as f64) <= threshold {
            check(nodes.len() == 1 && nodes[0].node_id == *base, || {
                format!("{base}: split below threshold")
            })?;
        }
        if nodes.len() > 1 {
            for (k, n) in nodes.iter().enumerate() {
                check(n.node_id == clone_node_id(base, k + 1), || {
                    format!("{base}: bad clone name {}", n.node_id)
                })?;
            }
        }
    }
    Ok(format!(
        "{} researchers, {} high-impact, {} cloned, threshold {threshold}",
        set.report.total_researchers, set.report.high_impact_count, set.report.cloned_count
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("jsd suite", jsd_suite),
        ("louvain oracle", louvain_oracle),
        ("refine oracle", refine_oracle),
        ("pipeline determinism", pipeline_determinism),
        ("planted-community recovery", planted_recovery),
        ("cloning benefit", cloning_benefit),
        ("pruning and density", pruning_density),
        ("clone bookkeeping", clone_bookkeeping),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
