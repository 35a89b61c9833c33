//! Model outputs to layout segments: drop negative edges, take connected
//! components, vote a class per component and box it.

use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::doc_model::{spanning_rect, ClassSchema, DocumentGraph, Page, SegmentAnnotation};
use crate::ingest::{CocoImage, CocoResult};
use crate::tensor::Tensor;

/// How the two directions of a node pair combine when pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairRule {
    /// Keep a pair only if every directed edge between the nodes is positive.
    #[default]
    And,
    /// Keep a pair if any directed edge between the nodes is positive.
    Or,
}

/// Per-edge keep mask. An edge votes positive when `P(positive) > threshold`;
/// the vote is then combined over all directed edges joining the same
/// unordered node pair, so both directions of a pair share one outcome.
///
/// `edge_probs` is `[E x 2]` with column 1 = positive.
pub fn prune_edges(graph: &DocumentGraph, edge_probs: &Tensor<f32>, threshold: f32, rule: PairRule) -> Vec<bool> {
    assert_eq!(edge_probs.rows(), graph.edges.len(), "one probability row per edge");
    let votes: Vec<bool> = (0..graph.edges.len()).map(|i| edge_probs.get(i, 1) > threshold).collect();
    combine_pair_votes(graph, &votes, rule)
}

/// Applies the pair rule to per-edge votes.
pub fn combine_pair_votes(graph: &DocumentGraph, votes: &[bool], rule: PairRule) -> Vec<bool> {
    let mut pair: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for (e, &v) in graph.edges.iter().zip(votes) {
        let key = (e.src.min(e.dst), e.src.max(e.dst));
        pair.entry(key)
            .and_modify(|acc| {
                *acc = match rule {
                    PairRule::And => *acc && v,
                    PairRule::Or => *acc || v,
                }
            })
            .or_insert(v);
    }
    graph
        .edges
        .iter()
        .map(|e| pair[&(e.src.min(e.dst), e.src.max(e.dst))])
        .collect()
}

/// Partition of `0..n` induced by `pairs`. Components are sorted internally
/// and ordered by smallest member.
pub fn connected_components(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::<usize>::new(n);
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let mut slot_of_root: Vec<Option<usize>> = vec![None; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = uf.find_mut(i);
        let slot = *slot_of_root[root].get_or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comps[slot].push(i);
    }
    comps
}

/// Components of the graph restricted to kept edges.
pub fn segment_components(graph: &DocumentGraph, keep: &[bool]) -> Vec<Vec<usize>> {
    let pairs = graph.edges.iter().zip(keep).filter(|(_, &k)| k).map(|(e, _)| (e.src, e.dst));
    connected_components(graph.num_nodes(), pairs)
}

/// Emitted segments plus the number of background components dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<SegmentAnnotation>,
    pub dropped_background: usize,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Votes each component's class from its nodes' argmax classes (ties: higher
/// mean probability, then lower id), boxes it with the members' spanning
/// rect and scores it with the mean probability of the chosen class.
/// Components voted `background` are dropped.
pub fn emit_segments(components: &[Vec<usize>], node_probs: &Tensor<f32>, page: &Page, schema: &ClassSchema) -> Segmentation {
    let background = schema.background_id();
    let mut segments = Vec::new();
    let mut dropped_background = 0;
    for comp in components.iter().filter(|c| !c.is_empty()) {
        let classes = node_probs.cols();
        let mut votes = vec![0usize; classes];
        let mut prob_sum = vec![0.0f64; classes];
        for &i in comp {
            let row = node_probs.row(i);
            votes[argmax(row)] += 1;
            for (s, &p) in prob_sum.iter_mut().zip(row) {
                *s += p as f64;
            }
        }
        let mut label = 0;
        for c in 1..classes {
            let better = votes[c] > votes[label] || (votes[c] == votes[label] && prob_sum[c] > prob_sum[label]);
            if better {
                label = c;
            }
        }
        if label == background {
            dropped_background += 1;
            continue;
        }
        let bbox = spanning_rect(comp.iter().map(|&i| &page.cells[i].bbox)).expect("non-empty component");
        let score = (prob_sum[label] / comp.len() as f64).clamp(0.0, 1.0);
        segments.push(SegmentAnnotation { bbox, class_id: label, score, node_ids: comp.clone() });
    }
    Segmentation { segments, dropped_background }
}

/// COCO image entry and detection records for one page.
pub fn to_coco(segments: &[SegmentAnnotation], page: &Page, image_id: u64) -> (CocoImage, Vec<CocoResult>) {
    let image = CocoImage { id: image_id, file_name: format!("{}.png", page.page_id), width: page.width, height: page.height };
    let results = segments
        .iter()
        .map(|s| CocoResult { image_id, category_id: s.class_id as u64 + 1, bbox: s.bbox.to_xywh(), score: s.score })
        .collect();
    (image, results)
}

/// One-hot probabilities from gold node labels.
pub fn gold_node_probs(labels: &[usize], classes: usize) -> Tensor<f32> {
    let mut t = Tensor::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        t.set(i, l, 1.0);
    }
    t
}

/// Segments implied by a labeled graph's gold labels.
pub fn segment_gold(graph: &DocumentGraph, schema: &ClassSchema) -> Segmentation {
    let labels = graph.node_labels.as_ref().expect("labeled graph");
    let edge_labels = graph.edge_labels.as_ref().expect("labeled graph");
    let keep = combine_pair_votes(graph, edge_labels, PairRule::And);
    let comps = segment_components(graph, &keep);
    emit_segments(&comps, &gold_node_probs(labels, schema.num_node_classes()), &graph.page, schema)
}
