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

//! Researcher topic profiles and the pairwise topic-similarity matrix.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Sum tolerance for a normalized profile.
pub const PROFILE_TOLERANCE: f64 = 1e-9;
/// Sum tolerance for rows handed over by the topic model.
pub const ROW_TOLERANCE: f64 = 1e-6;

/// A probability vector over topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TopicDistribution(Vec<f64>);

impl TopicDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no topics".into()));
        }
        if let Some(x) = probs.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {x} is not a probability"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROFILE_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(TopicDistribution(probs))
    }

    /// Scales a non-negative, non-zero vector to unit sum.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "cannot normalize sum {sum}"
            )));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        TopicDistribution::new(weights)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for TopicDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TopicDistribution::new(v)
    }
}

impl From<TopicDistribution> for Vec<f64> {
    fn from(d: TopicDistribution) -> Self {
        d.0
    }
}

/// Per-document topic distributions from the topic model. All-zero rows mark
/// documents the model could not assign to any topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DocTopicFile", into = "DocTopicFile")]
pub struct DocTopicTable {
    topic_count: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DocTopicFile {
    topic_count: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl TryFrom<DocTopicFile> for DocTopicTable {
    type Error = Error;
    fn try_from(f: DocTopicFile) -> Result<Self> {
        DocTopicTable::new(f.topic_count, f.rows)
    }
}

impl From<DocTopicTable> for DocTopicFile {
    fn from(t: DocTopicTable) -> Self {
        DocTopicFile {
            topic_count: t.topic_count,
            rows: t.rows,
        }
    }
}

impl DocTopicTable {
    pub fn new(topic_count: usize, rows: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if topic_count == 0 {
            return Err(Error::InvalidInput(
                "doc-topic table has zero topics".into(),
            ));
        }
        for (id, row) in &rows {
            if row.len() != topic_count {
                return Err(Error::Dimension {
                    expected: topic_count,
                    found: row.len(),
                });
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "row `{id}` has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if sum != 0.0 && (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidDistribution(format!(
                    "row `{id}` sums to {sum}"
                )));
            }
        }
        Ok(DocTopicTable { topic_count, rows })
    }

    pub fn topic_count(&self) -> usize {
        self.topic_count
    }

    pub fn row(&self, pub_id: &str) -> Option<&[f64]> {
        self.rows.get(pub_id).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.rows
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::read_json(path, "doc-topic table")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Mean of the member rows, re-normalized to unit sum. All-zero rows are
/// skipped with a warning.
pub fn aggregate_profile<S: AsRef<str>>(
    table: &DocTopicTable,
    pub_ids: &[S],
) -> Result<TopicDistribution> {
    if pub_ids.is_empty() {
        return Err(Error::InvalidInput(
            "cannot aggregate an empty publication set".into(),
        ));
    }
    let mut sum = vec![0.0; table.topic_count];
    let mut used = 0usize;
    for id in pub_ids {
        let id = id.as_ref();
        let row = table
            .row(id)
            .ok_or_else(|| Error::MissingPublication(id.to_owned()))?;
        if row.iter().all(|x| *x == 0.0) {
            warn!("publication `{id}` has no topic assignment; excluded from its profile");
            continue;
        }
        for (acc, x) in sum.iter_mut().zip(row) {
            *acc += x;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateProfile {
            node: None,
            rows: pub_ids.len(),
        });
    }
    let n = used as f64;
    sum.iter_mut().for_each(|x| *x /= n);
    TopicDistribution::normalized(sum)
}

/// Base-2 Jensen-Shannon divergence of two equal-length probability slices.
/// Zero-probability terms contribute nothing. The result lies in [0, 1].
pub fn jsd_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            kl_p += a * (a / m).log2();
        }
        if b > 0.0 {
            kl_q += b * (b / m).log2();
        }
    }
    Ok((0.5 * (kl_p + kl_q)).clamp(0.0, 1.0))
}

pub fn jsd(p: &TopicDistribution, q: &TopicDistribution) -> Result<f64> {
    jsd_slices(p.probs(), q.probs())
}

/// Dense symmetric matrix of `1 - JSD` between node profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub node_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.node_ids.len();
        if self.values.len() != r || self.values.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidInput(
                "similarity matrix is not square".into(),
            ));
        }
        for i in 0..r {
            if self.values[i][i] != 1.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..r {
                let v = self.values[i][j];
                if !(0.0..=1.0).contains(&v) || v != self.values[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: SimilarityMatrix = crate::io::read_json(path, "similarity matrix")?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

pub fn similarity_matrix(
    profiles: &BTreeMap<String, TopicDistribution>,
) -> Result<SimilarityMatrix> {
    similarity_matrix_with(profiles, Execution::default())
}

/// Rows are computed independently, so the parallel schedule produces exactly
/// the same bits as the sequential one.
pub fn similarity_matrix_with(
    profiles: &BTreeMap<String, TopicDistribution>,
    exec: Execution,
) -> Result<SimilarityMatrix> {
    if profiles.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "similarity needs at least 2 profiles, got {}",
            profiles.len()
        )));
    }
    let node_ids: Vec<String> = profiles.keys().cloned().collect();
    let dists: Vec<&[f64]> = profiles.values().map(TopicDistribution::probs).collect();
    let dim = dists[0].len();
    if let Some(d) = dists.iter().find(|d| d.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: d.len(),
        });
    }
    let r = dists.len();
    let indices: Vec<usize> = (0..r).collect();
    let upper: Vec<Vec<f64>> = par::try_map(exec, &indices, |&i| {
        (i + 1..r)
            .map(|j| jsd_slices(dists[i], dists[j]).map(|d| 1.0 - d))
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut values = vec![vec![0.0; r]; r];
    for i in 0..r {
        values[i][i] = 1.0;
        for (off, &s) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix { node_ids, values })
}
