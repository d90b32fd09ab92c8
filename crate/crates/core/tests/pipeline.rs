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

//! Whole-pipeline properties.

use scholarnet_core::pipeline::{run_pipeline, run_pipeline_with, ConfigLayer, PipelineConfig};
use scholarnet_core::refine::merge_whole_graph;
use scholarnet_core::report::mean_edge_delta;
use scholarnet_core::synth::{generate_synthetic, Imbalance, SyntheticSpec};
use scholarnet_core::Execution;

#[test]
fn sequential_and_parallel_runs_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticSpec {
        researchers: 80,
        topics: 8,
        communities: 4,
        bridging: 4,
        imbalance: Imbalance::Pareto { shape: 1.5 },
        pubs_min: 5,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let paths = data.write(tmp.path()).unwrap();
    let manifests: Vec<Vec<u8>> = [Execution::Sequential, Execution::Parallel]
        .into_iter()
        .enumerate()
        .map(|(i, exec)| {
            let out = tmp.path().join(format!("out{i}"));
            let layer = ConfigLayer {
                corpus: Some(paths.corpus.clone()),
                doc_topics: Some(paths.doc_topics.clone()),
                topic_words: Some(paths.topic_words.clone()),
                target_density: Some(0.2),
                min_community_size: Some(10),
                seed: Some(4),
                out_dir: Some(out.clone()),
                ..ConfigLayer::default()
            };
            run_pipeline_with(&PipelineConfig::from_layers([layer]).unwrap(), exec).unwrap();
            std::fs::read(out.join("manifest.json")).unwrap()
        })
        .collect();
    assert_eq!(manifests[0], manifests[1]);
}

#[test]
fn clone_free_run_has_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let paths = generate_synthetic(&SyntheticSpec {
        bridging: 3,
        seed: 8,
        ..SyntheticSpec::default()
    })
    .unwrap()
    .write(tmp.path())
    .unwrap();
    let layer = ConfigLayer {
        corpus: Some(paths.corpus),
        doc_topics: Some(paths.doc_topics),
        clone_threshold_factor: Some(f64::INFINITY),
        out_dir: Some(tmp.path().join("out")),
        ..ConfigLayer::default()
    };
    let run = run_pipeline(&PipelineConfig::from_layers([layer]).unwrap()).unwrap();
    assert_eq!(run.nodes, run.base_nodes);
    assert_eq!(merge_whole_graph(&run.graph_full), run.graph_full);
    let ids: Vec<&str> = run.graph_base.nodes().iter().map(String::as_str).collect();
    let deltas =
        mean_edge_delta(&run.graph_base, &merge_whole_graph(&run.graph_full), &ids).unwrap();
    assert!(deltas.iter().all(|d| d.delta() == 0.0));
    let csv = std::fs::read_to_string(tmp.path().join("out/report/mean_edge_delta.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "no cloned researchers to list");
}
