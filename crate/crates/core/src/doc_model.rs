//! Core domain types: rectangles, text cells, pages, page graphs and
//! emitted segments.
//!
//! Coordinates are rendered-page pixels with the origin at the top-left
//! corner and y growing downward.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GlamError, Result};
use crate::tensor::Tensor;

/// Axis-aligned box in page pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    /// Builds a rect from a COCO `[x, y, w, h]` box.
    pub fn from_xywh(b: [f64; 4]) -> Self {
        Rect::new(b[0], b[1], b[0] + b[2], b[1] + b[3])
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1 - self.x0, self.y1 - self.y0]
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    pub fn is_valid(&self) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Smallest rect containing both.
    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    /// Length of the overlap of the two y-extents (0 when disjoint).
    pub fn vertical_overlap(&self, other: &Rect) -> f64 {
        (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0)
    }

    /// Length of the overlap of the two x-extents (0 when disjoint).
    pub fn horizontal_overlap(&self, other: &Rect) -> f64 {
        (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0)
    }

    pub fn clamp_to(&self, width: f64, height: f64) -> Rect {
        Rect::new(
            self.x0.clamp(0.0, width),
            self.y0.clamp(0.0, height),
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
        )
    }
}

/// Intersection over union. Two zero-area rects have IoU 0.
pub fn rect_iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Minimum rect spanning every input rect.
pub fn spanning_rect<'a, I>(rects: I) -> Result<Rect>
where
    I: IntoIterator<Item = &'a Rect>,
{
    rects
        .into_iter()
        .copied()
        .reduce(|acc, r| acc.union(&r))
        .ok_or(GlamError::EmptySegment)
}

/// One parsed text box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub bbox: Rect,
    pub text: String,
    pub font_name: String,
    pub font_size: f64,
    pub reading_index: usize,
}

impl Cell {
    pub fn validate(&self) -> Result<()> {
        if !(self.bbox.x0 < self.bbox.x1 && self.bbox.y0 < self.bbox.y1) {
            return Err(GlamError::Invalid(format!("cell {} has an empty bbox {:?}", self.id, self.bbox)));
        }
        if !(self.font_size > 0.0) {
            return Err(GlamError::Invalid(format!("cell {} has font size {}", self.id, self.font_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub cells: Vec<Cell>,
}

impl Page {
    pub fn new(page_id: impl Into<String>, width: f64, height: f64) -> Self {
        Page {
            page_id: page_id.into(),
            width,
            height,
            cells: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Checks page dimensions, every cell, and reading-index uniqueness.
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(GlamError::Invalid(format!(
                "page {} has non-positive size {}x{}",
                self.page_id, self.width, self.height
            )));
        }
        let mut seen = vec![false; self.cells.len()];
        for cell in &self.cells {
            cell.validate()?;
            match seen.get_mut(cell.reading_index) {
                Some(slot) if !*slot => *slot = true,
                _ => {
                    return Err(GlamError::Invalid(format!(
                        "page {}: reading index {} is duplicated or out of range",
                        self.page_id, cell.reading_index
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Edge direction kinds; reading-order links carry their own kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Left,
    Right,
    Up,
    Down,
    ReadingNext,
    ReadingPrev,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 6] = [
        EdgeKind::Left,
        EdgeKind::Right,
        EdgeKind::Up,
        EdgeKind::Down,
        EdgeKind::ReadingNext,
        EdgeKind::ReadingPrev,
    ];

    pub const SPATIAL: [EdgeKind; 4] = [EdgeKind::Left, EdgeKind::Right, EdgeKind::Up, EdgeKind::Down];

    pub fn opposite(self) -> EdgeKind {
        match self {
            EdgeKind::Left => EdgeKind::Right,
            EdgeKind::Right => EdgeKind::Left,
            EdgeKind::Up => EdgeKind::Down,
            EdgeKind::Down => EdgeKind::Up,
            EdgeKind::ReadingNext => EdgeKind::ReadingPrev,
            EdgeKind::ReadingPrev => EdgeKind::ReadingNext,
        }
    }

    /// Slot of this kind in the edge-feature one-hot block.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EdgeKind::Left => "left",
            EdgeKind::Right => "right",
            EdgeKind::Up => "up",
            EdgeKind::Down => "down",
            EdgeKind::ReadingNext => "reading_next",
            EdgeKind::ReadingPrev => "reading_prev",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(src: usize, dst: usize, kind: EdgeKind) -> Self {
        debug_assert_ne!(src, dst, "self-loop edge");
        Edge { src, dst, kind }
    }

    pub fn reversed(&self) -> Edge {
        Edge::new(self.dst, self.src, self.kind.opposite())
    }

    /// Canonical ordering key: (src, kind, dst).
    pub fn sort_key(&self) -> (usize, EdgeKind, usize) {
        (self.src, self.kind, self.dst)
    }
}

/// A page with its node/edge features and optional training labels.
#[derive(Debug, Clone)]
pub struct DocumentGraph {
    pub page: Page,
    pub node_features: Tensor<f32>,
    pub edges: Vec<Edge>,
    pub edge_features: Tensor<f32>,
    pub node_labels: Option<Vec<usize>>,
    /// `true` = positive (same segment).
    pub edge_labels: Option<Vec<bool>>,
}

impl DocumentGraph {
    pub fn num_nodes(&self) -> usize {
        self.page.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_labeled(&self) -> bool {
        self.node_labels.is_some() && self.edge_labels.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.node_features.rows() != n {
            return Err(GlamError::Invalid(format!(
                "{} feature rows for {} nodes",
                self.node_features.rows(),
                n
            )));
        }
        if self.edge_features.rows() != self.edges.len() {
            return Err(GlamError::Invalid(format!(
                "{} edge feature rows for {} edges",
                self.edge_features.rows(),
                self.edges.len()
            )));
        }
        let mut keys = std::collections::HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.src >= n || e.dst >= n || e.src == e.dst {
                return Err(GlamError::Invalid(format!("bad edge {e:?} for {n} nodes")));
            }
            if !keys.insert(e.sort_key()) {
                return Err(GlamError::Invalid(format!("duplicate edge {e:?}")));
            }
        }
        for e in &self.edges {
            let r = e.reversed();
            if !keys.contains(&r.sort_key()) {
                return Err(GlamError::Invalid(format!("edge {e:?} has no reverse")));
            }
        }
        if let Some(labels) = &self.node_labels {
            if labels.len() != n {
                return Err(GlamError::Invalid("node label count mismatch".into()));
            }
        }
        if let Some(labels) = &self.edge_labels {
            if labels.len() != self.edges.len() {
                return Err(GlamError::Invalid("edge label count mismatch".into()));
            }
        }
        Ok(())
    }
}

/// One emitted layout segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub bbox: Rect,
    pub class_id: usize,
    pub score: f64,
    /// Sorted member node indices.
    pub node_ids: Vec<usize>,
}

/// Ordered class names; a class id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSchema {
    names: Vec<String>,
}

pub const DOCLAYNET_CLASSES: [&str; 11] = [
    "Caption",
    "Footnote",
    "Formula",
    "List-item",
    "Page-footer",
    "Page-header",
    "Picture",
    "Section-header",
    "Table",
    "Text",
    "Title",
];

impl ClassSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(GlamError::Invalid("class schema is empty".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(GlamError::Invalid("empty class name".into()));
            }
            if names[..i].contains(name) {
                return Err(GlamError::Invalid(format!("duplicate class name {name:?}")));
            }
        }
        Ok(ClassSchema { names })
    }

    pub fn doclaynet() -> Self {
        ClassSchema {
            names: DOCLAYNET_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    /// Id reserved for cells no annotation claims.
    pub fn background_id(&self) -> usize {
        self.names.len()
    }

    /// Number of node classes the network predicts (schema + background).
    pub fn num_node_classes(&self) -> usize {
        self.names.len() + 1
    }
}

impl Default for ClassSchema {
    fn default() -> Self {
        ClassSchema::doclaynet()
    }
}
