//! Greedy snapping against exhaustive best-subset search.

use glam_core::doc_model::{rect_iou, spanning_rect, Page, Rect};
use glam_core::labeler::{snap, DEFAULT_IOU_FLOOR};
use glam_core::synth::{generate_corpus, perturb, Corpus};
use glam_core::ClassSchema;

const MAX_CELLS: usize = 10;

/// Best IoU over all non-empty subsets of the overlapping cells.
fn best_subset_iou(page: &Page, overlapping: &[usize], target: &Rect) -> f64 {
    let mut best: f64 = 0.0;
    for mask in 1u32..(1 << overlapping.len()) {
        let members = overlapping.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| &page.cells[i].bbox);
        best = best.max(rect_iou(&spanning_rect(members).unwrap(), target));
    }
    best
}

/// (annotations checked, failures)
fn audit(corpus: &Corpus) -> (usize, Vec<String>) {
    let boxes = corpus.coco.boxes_by_page(&ClassSchema::doclaynet()).unwrap();
    let mut checked = 0;
    let mut failures = Vec::new();
    for page in &corpus.pages {
        for (ai, (_, rect)) in boxes[&page.page_id].iter().enumerate() {
            let overlapping: Vec<usize> =
                (0..page.cells.len()).filter(|&i| page.cells[i].bbox.intersection_area(rect) > 0.0).collect();
            if overlapping.is_empty() || overlapping.len() > MAX_CELLS {
                continue;
            }
            checked += 1;
            let best = best_subset_iou(page, &overlapping, rect);
            let greedy = snap(rect, page, DEFAULT_IOU_FLOOR).iou;
            assert!(greedy <= best + 1e-12);
            if best >= DEFAULT_IOU_FLOOR && greedy < DEFAULT_IOU_FLOOR {
                failures.push(format!("{} annotation {ai}: greedy {greedy:.4}, best {best:.4}", page.page_id));
            }
        }
    }
    (checked, failures)
}

pub fn greedy_reaches_floor_whenever_some_subset_does() {
    let clean = generate_corpus(100, 21, &ClassSchema::doclaynet()).unwrap();
    let mut total = 0;
    for (jitter, dropout) in [(0.0, 0.0), (2.0, 0.0), (5.0, 0.0), (10.0, 0.0), (5.0, 0.1)] {
        let corpus = perturb(&clean, jitter, dropout, 77);
        let (checked, failures) = audit(&corpus);
        assert!(failures.is_empty(), "jitter {jitter}: {failures:#?}");
        total += checked;
    }
    assert!(total > 1000, "{total}");
}

#[cfg(test)]
mod tests {
    #[test]
    fn greedy_reaches_floor_whenever_some_subset_does() {
        super::greedy_reaches_floor_whenever_some_subset_does();
    }
}
