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

//! Planted-community synthetic corpora.
//!
//! Each planted community owns a contiguous block of topics. Ordinary
//! researchers write documents concentrated on their community's block;
//! bridging researchers are high-output and split their documents evenly
//! between two blocks, so their ground truth is a dual membership.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Corpus, Provenance, Publication, Source};
use crate::profiles::DocTopicTable;
use crate::report::TopicWords;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Imbalance {
    None,
    /// Publication counts drawn from a Pareto law with this shape and scale
    /// equal to the minimum count.
    Pareto {
        shape: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub researchers: usize,
    pub communities: usize,
    /// How many of `researchers` are dual-topic high-output researchers.
    pub bridging: usize,
    pub imbalance: Imbalance,
    pub pubs_min: usize,
    pub pubs_max: usize,
    pub bridging_pubs: usize,
    /// Probability mass spread uniformly over all topics in every document.
    pub leakage: f64,
    /// Dirichlet concentration within a community's topic block.
    pub concentration: f64,
    pub words_per_topic: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            topics: 6,
            researchers: 60,
            communities: 3,
            bridging: 0,
            imbalance: Imbalance::None,
            pubs_min: 8,
            pubs_max: 20,
            bridging_pubs: 60,
            leakage: 0.05,
            concentration: 4.0,
            words_per_topic: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// base researcher -> planted communities (two for bridging researchers)
    pub communities: BTreeMap<String, Vec<usize>>,
    pub bridging: Vec<String>,
}

impl GroundTruth {
    /// First planted community per researcher, for hard-partition scores.
    pub fn primary(&self, id: &str) -> Option<usize> {
        self.communities.get(id).and_then(|c| c.first().copied())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub doc_topics: DocTopicTable,
    pub topic_words: TopicWords,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub corpus: PathBuf,
    pub doc_topics: PathBuf,
    pub topic_words: PathBuf,
    pub ground_truth: PathBuf,
}

impl SyntheticCorpus {
    pub fn write(&self, dir: &Path) -> Result<SyntheticPaths> {
        let paths = SyntheticPaths {
            corpus: dir.join("corpus.jsonl"),
            doc_topics: dir.join("doc_topics.json"),
            topic_words: dir.join("topic_words.json"),
            ground_truth: dir.join("ground_truth.json"),
        };
        crate::ingest::write_corpus(&self.corpus, &paths.corpus)?;
        self.doc_topics.save(&paths.doc_topics)?;
        crate::io::write_json(&paths.topic_words, &self.topic_words)?;
        crate::io::write_json(&paths.ground_truth, &self.truth)?;
        Ok(paths)
    }
}

fn topic_block(community: usize, communities: usize, topics: usize) -> std::ops::Range<usize> {
    let start = community * topics / communities;
    let end = (community + 1) * topics / communities;
    start..end
}

const SHARED_WORDS: [&str; 3] = ["method", "analysis", "results"];

fn sample_theta(
    rng: &mut ChaCha8Rng,
    block: std::ops::Range<usize>,
    spec: &SyntheticSpec,
) -> Vec<f64> {
    let gamma = Gamma::new(spec.concentration, 1.0).expect("positive concentration");
    let draws: Vec<f64> = block
        .clone()
        .map(|_| gamma.sample(rng).max(1e-12))
        .collect();
    let total: f64 = draws.iter().sum();
    let uniform = spec.leakage / spec.topics as f64;
    let mut theta = vec![uniform; spec.topics];
    for (t, d) in block.zip(&draws) {
        theta[t] += (1.0 - spec.leakage) * d / total;
    }
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|x| *x /= s);
    theta
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn sample_text(rng: &mut ChaCha8Rng, theta: &[f64], words: &TopicWords, len: usize) -> String {
    (0..len)
        .map(|_| {
            let t = pick(rng, theta);
            let vocab = &words[&t];
            let probs: Vec<f64> = vocab.iter().map(|(_, p)| *p).collect();
            vocab[pick(rng, &probs)].0.clone()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    let fail = |m: String| Err(Error::Infeasible(m));
    if spec.topics < 2 {
        return fail(format!("need at least 2 topics, got {}", spec.topics));
    }
    if spec.researchers < 4 {
        return fail(format!(
            "need at least 4 researchers, got {}",
            spec.researchers
        ));
    }
    if spec.communities == 0 || spec.communities > spec.topics {
        return fail(format!(
            "{} communities cannot each own a block of {} topics",
            spec.communities, spec.topics
        ));
    }
    if spec.bridging > spec.researchers {
        return fail("more bridging researchers than researchers".into());
    }
    if spec.bridging > 0 && spec.communities < 2 {
        return fail("bridging researchers need at least 2 communities".into());
    }
    if spec.pubs_min == 0 || spec.pubs_min > spec.pubs_max {
        return fail(format!(
            "bad publication range {}..={}",
            spec.pubs_min, spec.pubs_max
        ));
    }
    if spec.bridging > 0 && spec.bridging_pubs < 2 {
        return fail("bridging researchers need at least 2 publications".into());
    }
    if !(0.0..1.0).contains(&spec.leakage) || spec.concentration <= 0.0 || spec.words_per_topic == 0
    {
        return fail("leakage must be in [0, 1), concentration and vocabulary positive".into());
    }
    if let Imbalance::Pareto { shape } = spec.imbalance {
        if shape <= 0.0 {
            return fail(format!("pareto shape must be positive, got {shape}"));
        }
    }
    Ok(())
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut topic_words: TopicWords = BTreeMap::new();
    for t in 0..spec.topics {
        let mut vocab: Vec<(String, f64)> = (0..spec.words_per_topic)
            .map(|j| (format!("topic{t}term{j}"), 1.0 / (j as f64 + 1.0)))
            .collect();
        vocab.extend(SHARED_WORDS.iter().map(|w| (w.to_string(), 0.05)));
        let total: f64 = vocab.iter().map(|(_, p)| p).sum();
        vocab.iter_mut().for_each(|(_, p)| *p /= total);
        vocab.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        topic_words.insert(t, vocab);
    }

    let k = spec.communities;
    let first_bridging = spec.researchers - spec.bridging;
    let mut publications = Vec::new();
    let mut rows = BTreeMap::new();
    let mut truth = GroundTruth {
        communities: BTreeMap::new(),
        bridging: Vec::new(),
    };
    for r in 0..spec.researchers {
        let id = format!("R{r:03}");
        let (planted, count) = if r >= first_bridging {
            let j = r - first_bridging;
            truth.bridging.push(id.clone());
            (vec![j % k, (j + 1) % k], spec.bridging_pubs)
        } else {
            let count = match spec.imbalance {
                Imbalance::None => rng.random_range(spec.pubs_min..=spec.pubs_max),
                Imbalance::Pareto { shape } => {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    ((spec.pubs_min as f64 * u.powf(-1.0 / shape)).ceil() as usize)
                        .clamp(spec.pubs_min, 400)
                }
            };
            (vec![r % k], count)
        };
        for j in 0..count {
            let block = topic_block(planted[j % planted.len()], k, spec.topics);
            let theta = sample_theta(&mut rng, block, spec);
            let pub_id = format!("W{r:03}{j:03}");
            publications.push(Publication {
                pub_id: pub_id.clone(),
                title: sample_text(&mut rng, &theta, &topic_words, 6),
                abstract_text: sample_text(&mut rng, &theta, &topic_words, 30),
                year: rng.random_range(2004..=2025),
                author_ids: [id.clone()].into_iter().collect(),
            });
            rows.insert(pub_id, theta);
        }
        truth.communities.insert(id, planted);
    }

    Ok(SyntheticCorpus {
        corpus: Corpus::new(
            publications,
            Provenance::new(Source::Synthetic { seed: spec.seed }),
        )?,
        doc_topics: DocTopicTable::new(spec.topics, rows)?,
        topic_words,
        truth,
    })
}
