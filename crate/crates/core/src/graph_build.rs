//! Page graph construction: nearest-neighbour edges in the four spatial
//! directions, reading-order links, and per-edge feature vectors.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::{Cell, ClassSchema, DocumentGraph, Edge, EdgeKind, Page, Rect};
use crate::error::{GlamError, Result};
use crate::featurize::{node_features, FeatureSchema};
use crate::tensor::Tensor;

/// Edge feature width: 6 kind one-hot, 3 distances, 2 font flags.
pub const EDGE_FEATURE_DIM: usize = 11;

pub const EDGE_FEATURE_NAMES: [&str; EDGE_FEATURE_DIM] = [
    "kind_left",
    "kind_right",
    "kind_up",
    "kind_down",
    "kind_reading_next",
    "kind_reading_prev",
    "abs_dx_over_width",
    "abs_dy_over_height",
    "center_dist_over_diagonal",
    "same_font",
    "same_size",
];

/// Font sizes within this many pixels count as the same size.
pub const SAME_SIZE_TOL: f64 = 0.5;

/// Gap from `c` to a candidate lying in direction `dir`, or `None` when the
/// candidate is not strictly on that side or shares no perpendicular extent.
fn directional_gap(c: &Rect, other: &Rect, dir: EdgeKind) -> Option<f64> {
    let (gap, overlap) = match dir {
        EdgeKind::Right => (other.x0 - c.x1, c.vertical_overlap(other)),
        EdgeKind::Left => (c.x0 - other.x1, c.vertical_overlap(other)),
        EdgeKind::Down => (other.y0 - c.y1, c.horizontal_overlap(other)),
        EdgeKind::Up => (c.y0 - other.y1, c.horizontal_overlap(other)),
        EdgeKind::ReadingNext | EdgeKind::ReadingPrev => return None,
    };
    (gap >= 0.0 && overlap > 0.0).then_some(gap)
}

/// Position of a rect along the sweep axis of `dir`, and the sweep start
/// for a query rect; gaps are `key(other) - start(c)`.
fn sweep_key(r: &Rect, dir: EdgeKind) -> f64 {
    match dir {
        EdgeKind::Right => r.x0,
        EdgeKind::Left => -r.x1,
        EdgeKind::Down => r.y0,
        EdgeKind::Up => -r.y1,
        _ => unreachable!("spatial directions only"),
    }
}

fn sweep_start(r: &Rect, dir: EdgeKind) -> f64 {
    match dir {
        EdgeKind::Right => r.x1,
        EdgeKind::Left => -r.x0,
        EdgeKind::Down => r.y1,
        EdgeKind::Up => -r.y0,
        _ => unreachable!("spatial directions only"),
    }
}

/// For every cell and spatial direction, the index of its nearest neighbour:
/// minimal edge-to-edge gap among cells with positive perpendicular overlap,
/// ties to the smaller reading index.
pub fn nearest_neighbors(page: &Page) -> Vec<[Option<usize>; 4]> {
    let cells = &page.cells;
    let mut out = vec![[None; 4]; cells.len()];
    for (slot, dir) in EdgeKind::SPATIAL.into_iter().enumerate() {
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| {
            sweep_key(&cells[a].bbox, dir)
                .total_cmp(&sweep_key(&cells[b].bbox, dir))
                .then(a.cmp(&b))
        });
        let keys: Vec<f64> = order.iter().map(|&i| sweep_key(&cells[i].bbox, dir)).collect();
        for (ci, c) in cells.iter().enumerate() {
            let start = sweep_start(&c.bbox, dir);
            let first = keys.partition_point(|&k| k < start);
            let mut best: Option<(f64, usize)> = None;
            for (&k, &j) in keys[first..].iter().zip(&order[first..]) {
                if let Some((bg, _)) = best {
                    if k - start > bg {
                        break;
                    }
                }
                if j == ci {
                    continue;
                }
                let Some(gap) = directional_gap(&c.bbox, &cells[j].bbox, dir) else {
                    continue;
                };
                best = match best {
                    Some((bg, bj)) if bg < gap || (bg == gap && cells[bj].reading_index < cells[j].reading_index) => {
                        Some((bg, bj))
                    }
                    _ => Some((gap, j)),
                };
            }
            out[ci][slot] = best.map(|(_, j)| j);
        }
    }
    out
}

/// Nearest-neighbour edges plus their reverses, sorted by (src, kind, dst).
pub fn nearest_neighbor_edges(page: &Page) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (ci, slots) in nearest_neighbors(page).into_iter().enumerate() {
        for (dir, nb) in EdgeKind::SPATIAL.into_iter().zip(slots) {
            if let Some(nj) = nb {
                let e = Edge::new(ci, nj, dir);
                edges.push(e);
                edges.push(e.reversed());
            }
        }
    }
    sort_dedup(&mut edges);
    edges
}

fn sort_dedup(edges: &mut Vec<Edge>) {
    edges.sort_by_key(Edge::sort_key);
    edges.dedup();
}

/// Overlap threshold for joining a row band, as a fraction of the shorter height.
const BAND_OVERLAP_FRAC: f64 = 0.5;

/// Cell indices in approximate reading order: rows ("bands") top to bottom,
/// cells left to right within a band.
pub fn reading_order(page: &Page) -> Vec<usize> {
    let cells = &page.cells;
    let mut by_top: Vec<usize> = (0..cells.len()).collect();
    by_top.sort_by(|&a, &b| cmp_cells(&cells[a], &cells[b], |r| (r.y0, r.x0)));

    let mut order = Vec::with_capacity(cells.len());
    let mut band: Vec<usize> = Vec::new();
    let (mut by0, mut by1) = (0.0f64, 0.0f64);
    for i in by_top {
        let r = &cells[i].bbox;
        let joins = !band.is_empty() && {
            let overlap = r.y1.min(by1) - r.y0.max(by0);
            let shorter = r.height().min(by1 - by0);
            overlap > BAND_OVERLAP_FRAC * shorter
        };
        if joins {
            by0 = by0.min(r.y0);
            by1 = by1.max(r.y1);
            band.push(i);
        } else {
            flush_band(&mut band, cells, &mut order);
            band.push(i);
            by0 = r.y0;
            by1 = r.y1;
        }
    }
    flush_band(&mut band, cells, &mut order);
    order
}

fn flush_band(band: &mut Vec<usize>, cells: &[Cell], order: &mut Vec<usize>) {
    band.sort_by(|&a, &b| cmp_cells(&cells[a], &cells[b], |r| (r.x0, r.y0)));
    order.append(band);
}

fn cmp_cells(a: &Cell, b: &Cell, key: impl Fn(&Rect) -> (f64, f64)) -> Ordering {
    let (a0, a1) = key(&a.bbox);
    let (b0, b1) = key(&b.bbox);
    a0.total_cmp(&b0)
        .then(a1.total_cmp(&b1))
        .then(a.reading_index.cmp(&b.reading_index))
}

/// `reading_next` links between consecutive cells in [`reading_order`], with
/// matching `reading_prev` reverses.
pub fn reading_order_edges(page: &Page) -> Vec<Edge> {
    let order = reading_order(page);
    let mut edges = Vec::with_capacity(2 * order.len());
    for w in order.windows(2) {
        let e = Edge::new(w[0], w[1], EdgeKind::ReadingNext);
        edges.push(e);
        edges.push(e.reversed());
    }
    sort_dedup(&mut edges);
    edges
}

/// Feature vector of one edge.
pub fn edge_feature(page: &Page, edge: &Edge) -> [f32; EDGE_FEATURE_DIM] {
    let a = &page.cells[edge.src];
    let b = &page.cells[edge.dst];
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    let mut f = [0.0f32; EDGE_FEATURE_DIM];
    f[edge.kind.index()] = 1.0;
    f[6] = ((bx - ax).abs() / page.width) as f32;
    f[7] = ((by - ay).abs() / page.height) as f32;
    f[8] = ((bx - ax).hypot(by - ay) / page.diagonal()) as f32;
    f[9] = (a.font_name == b.font_name) as u8 as f32;
    f[10] = ((a.font_size - b.font_size).abs() <= SAME_SIZE_TOL) as u8 as f32;
    f
}

pub fn edge_features(page: &Page, edges: &[Edge]) -> Tensor<f32> {
    let mut data = Vec::with_capacity(edges.len() * EDGE_FEATURE_DIM);
    for e in edges {
        data.extend_from_slice(&edge_feature(page, e));
    }
    Tensor::new(edges.len(), EDGE_FEATURE_DIM, data).expect("edge feature shape")
}

/// Union of spatial and reading-order edges.
pub fn graph_edges(page: &Page) -> Vec<Edge> {
    let mut edges = nearest_neighbor_edges(page);
    edges.extend(reading_order_edges(page));
    sort_dedup(&mut edges);
    edges
}

/// Builds the unlabeled graph of a (cleaned) page under feature schema v1.
pub fn build_graph(page: &Page) -> DocumentGraph {
    build_graph_with(page, &FeatureSchema::v1()).expect("schema v1 is always supported")
}

pub fn build_graph_with(page: &Page, schema: &FeatureSchema) -> Result<DocumentGraph> {
    let edges = graph_edges(page);
    let node_features = node_features(page, schema)?;
    let edge_features = edge_features(page, &edges);
    Ok(DocumentGraph {
        page: page.clone(),
        node_features,
        edges,
        edge_features,
        node_labels: None,
        edge_labels: None,
    })
}

/// JSON form of one (optionally labeled) graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub nodes: Vec<Cell>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_labels: Option<Vec<bool>>,
}

impl GraphDump {
    pub fn from_graph(g: &DocumentGraph) -> Self {
        GraphDump {
            page_id: g.page.page_id.clone(),
            width: g.page.width,
            height: g.page.height,
            nodes: g.page.cells.clone(),
            edges: g.edges.clone(),
            node_labels: g.node_labels.clone(),
            edge_labels: g.edge_labels.clone(),
        }
    }

    /// Rebuilds the graph, recomputing features. The stored edge list must
    /// match the one the page produces.
    pub fn into_graph(self, schema: &FeatureSchema) -> Result<DocumentGraph> {
        let page = Page { page_id: self.page_id, width: self.width, height: self.height, cells: self.nodes };
        let mut g = build_graph_with(&page, schema)?;
        if g.edges != self.edges {
            return Err(GlamError::Invalid(format!(
                "page {}: stored edges differ from the rebuilt graph",
                page.page_id
            )));
        }
        g.node_labels = self.node_labels;
        g.edge_labels = self.edge_labels;
        g.validate()?;
        Ok(g)
    }
}

/// File holding many graph dumps (the `label` subcommand output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub format_version: u32,
    pub feature_schema_version: u32,
    pub class_names: Vec<String>,
    pub graphs: Vec<GraphDump>,
}

impl GraphFile {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(schema: &ClassSchema, graphs: &[DocumentGraph]) -> Self {
        GraphFile {
            format_version: Self::FORMAT_VERSION,
            feature_schema_version: FeatureSchema::v1().version,
            class_names: schema.names().to_vec(),
            graphs: graphs.iter().map(GraphDump::from_graph).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).map_err(|e| GlamError::Invalid(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let file: GraphFile = serde_json::from_slice(&bytes).map_err(|e| GlamError::from_json(&e, &bytes))?;
        if file.format_version != Self::FORMAT_VERSION {
            return Err(GlamError::Version(format!("graph file format {}", file.format_version)));
        }
        Ok(file)
    }

    /// Class schema and rebuilt graphs.
    pub fn into_graphs(self) -> Result<(ClassSchema, Vec<DocumentGraph>)> {
        let schema = FeatureSchema::by_version(self.feature_schema_version)?;
        let classes = ClassSchema::new(self.class_names)?;
        let graphs = self
            .graphs
            .into_iter()
            .map(|d| d.into_graph(&schema))
            .collect::<Result<Vec<_>>>()?;
        Ok((classes, graphs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn page_of(rects: &[(f64, f64, f64, f64)]) -> Page {
        let mut page = Page::new("p", 1000.0, 1000.0);
        for (i, &(x0, y0, x1, y1)) in rects.iter().enumerate() {
            page.cells.push(Cell {
                id: i,
                bbox: Rect::new(x0, y0, x1, y1),
                text: format!("w{i}"),
                font_name: "Times".into(),
                font_size: 10.0,
                reading_index: i,
            });
        }
        page
    }

    fn has(edges: &[Edge], s: usize, d: usize, k: EdgeKind) -> bool {
        edges.contains(&Edge::new(s, d, k))
    }

    #[test]
    fn single_cell_has_no_edges() {
        let page = page_of(&[(0.0, 0.0, 10.0, 10.0)]);
        assert!(nearest_neighbor_edges(&page).is_empty());
        assert!(reading_order_edges(&page).is_empty());
    }

    #[test]
    fn stacked_cells_link_only_adjacent_pairs() {
        let page = page_of(&[(0.0, 0.0, 50.0, 10.0), (0.0, 20.0, 50.0, 30.0), (0.0, 40.0, 50.0, 50.0)]);
        let edges = nearest_neighbor_edges(&page);
        assert_eq!(edges.len(), 4);
        assert!(has(&edges, 0, 1, EdgeKind::Down) && has(&edges, 1, 0, EdgeKind::Up));
        assert!(has(&edges, 1, 2, EdgeKind::Down) && has(&edges, 2, 1, EdgeKind::Up));
    }

    #[test]
    fn side_by_side_cells_link_horizontally_only() {
        let page = page_of(&[(0.0, 0.0, 40.0, 10.0), (50.0, 0.0, 90.0, 10.0)]);
        let edges = nearest_neighbor_edges(&page);
        assert_eq!(edges, vec![Edge::new(0, 1, EdgeKind::Right), Edge::new(1, 0, EdgeKind::Left)]);
    }

    #[test]
    fn reading_order_two_by_two_grid() {
        // inserted as BR, TL, BL, TR
        let page = page_of(&[
            (500.0, 100.0, 600.0, 112.0),
            (100.0, 10.0, 200.0, 22.0),
            (100.0, 101.0, 200.0, 113.0),
            (500.0, 12.0, 600.0, 24.0),
        ]);
        assert_eq!(reading_order(&page), vec![1, 3, 2, 0]);
        let edges = reading_order_edges(&page);
        assert!(has(&edges, 1, 3, EdgeKind::ReadingNext));
        assert!(has(&edges, 3, 1, EdgeKind::ReadingPrev));
    }

    #[test]
    fn same_row_reads_left_to_right() {
        let page = page_of(&[(60.0, 0.0, 90.0, 10.0), (0.0, 0.0, 40.0, 10.0)]);
        let edges = reading_order_edges(&page);
        assert!(has(&edges, 1, 0, EdgeKind::ReadingNext));
    }

    #[test]
    fn edge_features_layout() {
        let mut page = page_of(&[(0.0, 0.0, 40.0, 10.0), (50.0, 0.0, 90.0, 10.0)]);
        page.cells[1].font_size = 12.0;
        let f = edge_feature(&page, &Edge::new(0, 1, EdgeKind::Right));
        assert_eq!(&f[..6], &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((f[6] - 0.05).abs() < 1e-7);
        assert_eq!(f[7], 0.0);
        assert_eq!(f[9], 1.0);
        assert_eq!(f[10], 0.0);
    }

    #[test]
    fn empty_page_builds_empty_graph() {
        let g = build_graph(&Page::new("e", 100.0, 100.0));
        assert_eq!((g.num_nodes(), g.num_edges()), (0, 0));
        g.validate().unwrap();
    }
}
