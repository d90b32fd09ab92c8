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

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {source}")]
    Json {
        what: &'static str,
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A record in an interchange file violates its schema.
    #[error("record {record}: field `{field}` {message}")]
    Schema {
        record: usize,
        field: String,
        message: String,
    },

    #[error("duplicate pub_id `{0}`")]
    DuplicatePublication(String),

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("transport error (last HTTP status {}): {message}", status.map(|s| s.to_string()).unwrap_or_else(|| "none".into()))]
    Transport {
        status: Option<u16>,
        message: String,
    },

    #[error("publication `{0}` missing from doc-topic table")]
    MissingPublication(String),

    #[error("degenerate profile{}: all {rows} member rows are zero", node.as_ref().map(|n| format!(" for `{n}`")).unwrap_or_default())]
    DegenerateProfile { node: Option<String>, rows: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("node `{0}` is not covered by the assignment")]
    UncoveredNode(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("modularity is undefined on an edgeless graph")]
    EdgelessGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("topic {0} missing from topic-word table")]
    MissingTopic(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
