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

//! Topic-similarity research networks.
//!
//! The pipeline turns publication metadata plus per-document topic
//! distributions into a weighted researcher graph, splits high-output
//! researchers into clones by clustering their publications, detects
//! hierarchical communities with nested Louvain, and folds clones back into
//! their base researcher inside each community.
//!
//! Stages, in order: [`ingest`], [`cloning`], [`profiles`], [`graph`],
//! [`community`], [`refine`], [`report`]. [`pipeline`] wires them together
//! and [`synth`] produces planted corpora for testing.

pub mod cloning;
pub mod community;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod profiles;
pub mod refine;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use par::Execution;
