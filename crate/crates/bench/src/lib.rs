//! Shared fixtures for the benchmarks.

use glam_core::featurize::FeatureSchema;
use glam_core::model::{Glam, GraphInputs, ModelConfig};
use glam_core::pipeline::label_pages;
use glam_core::synth::{generate_corpus, Corpus};
use glam_core::{ClassSchema, DocumentGraph};

pub const FIXTURE_SEED: u64 = 7;

pub fn corpus(pages: usize) -> Corpus {
    generate_corpus(pages, FIXTURE_SEED, &ClassSchema::doclaynet()).expect("synthetic corpus")
}

pub fn labeled_graphs(corpus: &Corpus) -> Vec<DocumentGraph> {
    label_pages(&corpus.pages, &corpus.coco, &ClassSchema::doclaynet(), &FeatureSchema::v1(), 0.95)
        .expect("labeling")
        .into_iter()
        .map(|(g, _)| g)
        .collect()
}

pub fn inputs(graphs: &[DocumentGraph]) -> Vec<GraphInputs<f32>> {
    graphs.iter().map(|g| GraphInputs::from_graph(g).expect("graph inputs")).collect()
}

/// Untrained model with the default architecture; timing does not depend on
/// the weights.
pub fn default_model() -> Glam<f32> {
    Glam::new(ModelConfig::default()).expect("default config")
}
