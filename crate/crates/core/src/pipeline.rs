//! End-to-end glue: labeled graphs for training, and page inference from
//! raw cells to COCO results.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::doc_model::{ClassSchema, DocumentGraph, Page};
use crate::error::{GlamError, Result};
use crate::featurize::FeatureSchema;
use crate::graph_build::build_graph_with;
use crate::ingest::{clean_cells, merge_adjacent, page_id_of, CocoFile, CocoResult, MergeParams};
use crate::labeler::{label_graph, LabelReport};
use crate::model::{Glam, GraphInputs};
use crate::segmenter::{emit_segments, prune_edges, segment_components, segment_gold, to_coco, PairRule, Segmentation};

/// Preprocessing and segmentation knobs for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct InferOptions {
    pub min_px: f64,
    pub merge: Option<MergeParams>,
    /// An edge votes positive when its probability exceeds this.
    pub edge_threshold: f32,
    pub pair_rule: PairRule,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { min_px: 10.0, merge: None, edge_threshold: 0.5, pair_rule: PairRule::And }
    }
}

pub fn preprocess(page: &Page, min_px: f64, merge: Option<&MergeParams>) -> Page {
    let cleaned = clean_cells(page, min_px);
    match merge {
        Some(m) => merge_adjacent(&cleaned, m),
        None => cleaned,
    }
}

/// Segments of one page and the graph they were read from.
#[derive(Debug, Clone)]
pub struct PagePrediction {
    pub graph: DocumentGraph,
    pub segmentation: Segmentation,
}

pub fn infer_page(model: &Glam<f32>, features: &FeatureSchema, classes: &ClassSchema, page: &Page, opts: &InferOptions) -> Result<PagePrediction> {
    let page = preprocess(page, opts.min_px, opts.merge.as_ref());
    let graph = build_graph_with(&page, features)?;
    let inputs = GraphInputs::from_graph(&graph)?;
    let out = model.predict(&inputs)?;
    let keep = prune_edges(&graph, &out.edge_probs, opts.edge_threshold, opts.pair_rule);
    let comps = segment_components(&graph, &keep);
    let segmentation = emit_segments(&comps, &out.node_probs, &graph.page, classes);
    Ok(PagePrediction { graph, segmentation })
}

/// Infers every page on the current rayon pool; output keeps input order.
pub fn infer_pages(model: &Glam<f32>, features: &FeatureSchema, classes: &ClassSchema, pages: &[Page], opts: &InferOptions) -> Result<Vec<PagePrediction>> {
    pages.par_iter().map(|p| infer_page(model, features, classes, p, opts)).collect()
}

/// COCO image id of each page: taken from `gt` by page id when given,
/// otherwise the 1-based page position.
pub fn image_ids(pages: &[Page], gt: Option<&CocoFile>) -> Result<Vec<u64>> {
    match gt {
        None => Ok((1..=pages.len() as u64).collect()),
        Some(gt) => {
            let by_name: BTreeMap<String, u64> = gt.images.iter().map(|i| (page_id_of(&i.file_name), i.id)).collect();
            pages
                .iter()
                .map(|p| {
                    by_name
                        .get(&p.page_id)
                        .copied()
                        .ok_or_else(|| GlamError::Invalid(format!("page {} has no image in the ground truth", p.page_id)))
                })
                .collect()
        }
    }
}

pub fn coco_results(predictions: &[PagePrediction], ids: &[u64]) -> Vec<CocoResult> {
    predictions
        .iter()
        .zip(ids)
        .flat_map(|(p, &id)| to_coco(&p.segmentation.segments, &p.graph.page, id).1)
        .collect()
}

/// Builds and labels the graph of every page from COCO ground truth.
pub fn label_pages(
    pages: &[Page],
    gt: &CocoFile,
    classes: &ClassSchema,
    features: &FeatureSchema,
    iou_floor: f64,
) -> Result<Vec<(DocumentGraph, LabelReport)>> {
    let boxes = gt.boxes_by_page(classes)?;
    pages
        .par_iter()
        .map(|page| {
            let anns = boxes
                .get(&page.page_id)
                .ok_or_else(|| GlamError::Invalid(format!("page {} has no image in the ground truth", page.page_id)))?;
            let graph = build_graph_with(page, features)?;
            Ok(label_graph(&graph, anns, classes.background_id(), iou_floor))
        })
        .collect()
}

/// COCO results reconstructed from gold labels alone: every page is labeled
/// from `gt`, segmented along its positive edges and boxed, with no model.
pub fn gold_results(pages: &[Page], gt: &CocoFile, classes: &ClassSchema, features: &FeatureSchema, iou_floor: f64) -> Result<Vec<CocoResult>> {
    let labeled = label_pages(pages, gt, classes, features, iou_floor)?;
    let ids = image_ids(pages, Some(gt))?;
    Ok(labeled
        .iter()
        .zip(ids)
        .flat_map(|((graph, _), id)| to_coco(&segment_gold(graph, classes).segments, &graph.page, id).1)
        .collect())
}
