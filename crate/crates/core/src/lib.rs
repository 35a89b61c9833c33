//! Graph-based document layout analysis.
//!
//! A page's text cells become nodes of a graph whose edges link each cell to
//! its nearest neighbour in four directions and to its reading-order
//! successor. A small topology-adaptive graph network classifies nodes into
//! layout classes and edges into same-segment / different-segment links;
//! pruning the negative edges and taking connected components yields the
//! layout segments, which are written out as COCO annotations.

pub mod doc_model;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod graph_build;
pub mod ingest;
pub mod labeler;
pub mod model;
pub mod pipeline;
pub mod segmenter;
pub mod synth;
pub mod tensor;

pub use doc_model::{
    rect_iou, spanning_rect, Cell, ClassSchema, DocumentGraph, Edge, EdgeKind, Page, Rect, SegmentAnnotation,
};
pub use error::{GlamError, Result};
pub use tensor::Tensor;
