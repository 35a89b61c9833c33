//! Ground-truth boxes to node and edge labels.
//!
//! Each annotation box is snapped onto the set of cells it overlaps. When
//! the spanning box of that set matches the annotation poorly, cells are
//! dropped greedily (most area outside the annotation first) and the best
//! prefix is kept.

use crate::doc_model::{rect_iou, spanning_rect, DocumentGraph, Page, Rect};

pub const DEFAULT_IOU_FLOOR: f64 = 0.95;

fn spanning_iou(page: &Page, members: &[usize], target: &Rect) -> f64 {
    match spanning_rect(members.iter().map(|&i| &page.cells[i].bbox)) {
        Ok(span) => rect_iou(&span, target),
        Err(_) => 0.0,
    }
}

/// Result of snapping one annotation onto cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Sorted node indices.
    pub cells: Vec<usize>,
    /// IoU of the chosen cells' spanning rect with the annotation.
    pub iou: f64,
    /// IoU before any removal.
    pub initial_iou: f64,
    pub removed: usize,
}

/// Cells of `page` that represent `annotation`.
pub fn assign_cells(annotation: &Rect, page: &Page, iou_floor: f64) -> Vec<usize> {
    snap(annotation, page, iou_floor).cells
}

pub fn snap(annotation: &Rect, page: &Page, iou_floor: f64) -> Assignment {
    let overlapping: Vec<usize> = (0..page.cells.len())
        .filter(|&i| page.cells[i].bbox.intersection_area(annotation) > 0.0)
        .collect();
    let initial_iou = spanning_iou(page, &overlapping, annotation);
    if overlapping.is_empty() || initial_iou >= iou_floor {
        return Assignment { cells: overlapping, iou: initial_iou, initial_iou, removed: 0 };
    }

    let outside = |i: usize| {
        let b = &page.cells[i].bbox;
        b.area() - b.intersection_area(annotation)
    };
    let mut removal = overlapping.clone();
    removal.sort_by(|&a, &b| outside(b).total_cmp(&outside(a)).then(a.cmp(&b)));

    let mut kept = overlapping.clone();
    let (mut best_iou, mut best_removed) = (initial_iou, 0);
    for (k, &victim) in removal.iter().enumerate() {
        kept.retain(|&i| i != victim);
        let iou = spanning_iou(page, &kept, annotation);
        if iou > best_iou {
            best_iou = iou;
            best_removed = k + 1;
        }
    }
    let dropped = &removal[..best_removed];
    let cells: Vec<usize> = overlapping.into_iter().filter(|i| !dropped.contains(i)).collect();
    Assignment { cells, iou: best_iou, initial_iou, removed: best_removed }
}

/// Outcome of [`label_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelReport {
    /// Owning annotation index per node (`None` = background).
    pub owner: Vec<Option<usize>>,
    /// Cells claimed by more than one annotation.
    pub conflicts: usize,
    pub assignments: Vec<Assignment>,
}

/// Labels nodes with their owning annotation's class (or `background`) and
/// edges as positive iff both ends share an owner.
///
/// A cell claimed by several annotations goes to the one overlapping it
/// most; ties go to the earlier annotation.
pub fn label_graph(
    graph: &DocumentGraph,
    annotations: &[(usize, Rect)],
    background: usize,
    iou_floor: f64,
) -> (DocumentGraph, LabelReport) {
    let page = &graph.page;
    let n = page.cells.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut owner_overlap = vec![0.0f64; n];
    let mut conflicts = 0;
    let mut assignments = Vec::with_capacity(annotations.len());
    for (ai, (_, rect)) in annotations.iter().enumerate() {
        let a = snap(rect, page, iou_floor);
        for &c in &a.cells {
            let ov = page.cells[c].bbox.intersection_area(rect);
            match owner[c] {
                None => {
                    owner[c] = Some(ai);
                    owner_overlap[c] = ov;
                }
                Some(_) => {
                    conflicts += 1;
                    if ov > owner_overlap[c] {
                        owner[c] = Some(ai);
                        owner_overlap[c] = ov;
                    }
                }
            }
        }
        assignments.push(a);
    }
    if conflicts > 0 {
        log::warn!("page {}: {conflicts} cells claimed by several annotations", page.page_id);
    }

    let node_labels = owner.iter().map(|o| o.map_or(background, |a| annotations[a].0)).collect();
    let edge_labels = graph
        .edges
        .iter()
        .map(|e| matches!((owner[e.src], owner[e.dst]), (Some(a), Some(b)) if a == b))
        .collect();
    let mut labeled = graph.clone();
    labeled.node_labels = Some(node_labels);
    labeled.edge_labels = Some(edge_labels);
    (labeled, LabelReport { owner, conflicts, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::{Cell, Page};
    use crate::graph_build::build_graph;

    fn page(rects: &[(f64, f64, f64, f64)]) -> Page {
        let mut p = Page::new("p", 1000.0, 1000.0);
        for (i, &(x0, y0, x1, y1)) in rects.iter().enumerate() {
            p.cells.push(Cell {
                id: i,
                bbox: Rect::new(x0, y0, x1, y1),
                text: "w".into(),
                font_name: "F".into(),
                font_size: 10.0,
                reading_index: i,
            });
        }
        p
    }

    #[test]
    fn exact_annotation_keeps_all_cells() {
        let p = page(&[(0.0, 0.0, 40.0, 10.0), (50.0, 0.0, 90.0, 10.0), (0.0, 20.0, 90.0, 30.0)]);
        assert_eq!(assign_cells(&Rect::new(0.0, 0.0, 90.0, 30.0), &p, 0.95), vec![0, 1, 2]);
    }

    #[test]
    fn untouched_cells_never_join() {
        let p = page(&[(0.0, 0.0, 40.0, 10.0), (500.0, 500.0, 540.0, 510.0)]);
        assert_eq!(assign_cells(&Rect::new(0.0, 0.0, 40.0, 10.0), &p, 0.95), vec![0]);
    }

    #[test]
    fn mostly_outside_cell_is_removed() {
        // annotation 100x30 covering three lines; a fourth cell pokes in by 10%
        let p = page(&[
            (0.0, 0.0, 100.0, 10.0),
            (0.0, 10.0, 100.0, 20.0),
            (0.0, 20.0, 100.0, 30.0),
            (90.0, 25.0, 190.0, 75.0),
        ]);
        let ann = Rect::new(0.0, 0.0, 100.0, 30.0);
        let a = snap(&ann, &p, 0.95);
        assert!(a.initial_iou < 0.6);
        assert_eq!(a.cells, vec![0, 1, 2]);
        assert_eq!(a.iou, 1.0);
    }

    #[test]
    fn edge_labels_follow_owners() {
        let p = page(&[(0.0, 0.0, 40.0, 10.0), (50.0, 0.0, 90.0, 10.0), (0.0, 40.0, 40.0, 50.0)]);
        let g = build_graph(&p);
        let anns = [(9usize, Rect::new(0.0, 0.0, 90.0, 10.0))];
        let (lg, report) = label_graph(&g, &anns, 11, 0.95);
        assert_eq!(lg.node_labels.as_ref().unwrap(), &vec![9, 9, 11]);
        for (e, &pos) in lg.edges.iter().zip(lg.edge_labels.as_ref().unwrap()) {
            assert_eq!(pos, e.src != 2 && e.dst != 2, "{e:?}");
        }
        assert_eq!(report.conflicts, 0);
    }

    #[test]
    fn conflicting_claims_go_to_larger_overlap() {
        let p = page(&[(0.0, 0.0, 40.0, 10.0), (50.0, 0.0, 90.0, 10.0)]);
        let g = build_graph(&p);
        let anns = [(1usize, Rect::new(0.0, 0.0, 55.0, 10.0)), (2usize, Rect::new(35.0, 0.0, 90.0, 10.0))];
        let (lg, report) = label_graph(&g, &anns, 11, 0.0);
        assert_eq!(lg.node_labels.unwrap(), vec![1, 2]);
        assert_eq!(report.conflicts, 2);
        assert!(lg.edge_labels.unwrap().iter().all(|&p| !p));
    }
}
