//! COCO-style box mAP over IoU thresholds 0.50:0.05:0.95.
//!
//! Matching follows the COCO reference evaluator: per image and class,
//! detections are visited in descending score order (at most
//! [`MAX_DETS`] of them) and each takes the unmatched ground truth with the
//! highest IoU at or above the threshold. Precision is made monotone and
//! sampled at 101 recall points. Classes without ground truth are left out
//! of every mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doc_model::{rect_iou, ClassSchema, Rect};
use crate::error::{GlamError, Result};
use crate::ingest::{CocoFile, CocoResult};

pub const MAX_DETS: usize = 500;
pub const RECALL_POINTS: usize = 101;

/// `0.50, 0.55, ..., 0.95`, generated the way the COCO reference does.
pub fn coco_thresholds() -> Vec<f64> {
    let (start, stop, n) = (0.5f64, 0.95f64, 10usize);
    let step = (stop - start) / (n - 1) as f64;
    let mut t: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
    t[n - 1] = stop;
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image: u64,
    pub class_id: usize,
    pub bbox: Rect,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image: u64,
    pub class_id: usize,
    pub bbox: Rect,
}

/// AP of one class at one IoU threshold. `None` when the class has no
/// ground truth. Inputs may contain other classes; they are ignored.
pub fn average_precision(preds: &[Detection], gts: &[GroundTruth], class_id: usize, iou_thresh: f64) -> Option<f64> {
    let preds: Vec<&Detection> = preds.iter().filter(|d| d.class_id == class_id).collect();
    let gts: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    class_ap(&preds, &gts, &[iou_thresh]).map(|v| v[0])
}

/// Per-image score-sorted detections, truncated to [`MAX_DETS`].
fn group<'a>(preds: &[&'a Detection], gts: &[&'a GroundTruth]) -> BTreeMap<u64, (Vec<&'a Detection>, Vec<&'a GroundTruth>)> {
    let mut by_image: BTreeMap<u64, (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for &d in preds {
        by_image.entry(d.image).or_default().0.push(d);
    }
    for &g in gts {
        by_image.entry(g.image).or_default().1.push(g);
    }
    for (dets, _) in by_image.values_mut() {
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));
        dets.truncate(MAX_DETS);
    }
    by_image
}

fn class_ap(preds: &[&Detection], gts: &[&GroundTruth], thresholds: &[f64]) -> Option<Vec<f64>> {
    if gts.is_empty() {
        return None;
    }
    let by_image = group(preds, gts);
    let n_gt = gts.len();
    let out = thresholds
        .iter()
        .map(|&t| {
            let t = t.min(1.0 - 1e-10);
            // (score, is_true_positive) over all images
            let mut scored: Vec<(f64, bool)> = Vec::new();
            for (dets, img_gts) in by_image.values() {
                let mut taken = vec![false; img_gts.len()];
                for d in dets {
                    let mut best = t;
                    let mut hit = None;
                    for (gi, g) in img_gts.iter().enumerate() {
                        if taken[gi] {
                            continue;
                        }
                        let iou = rect_iou(&d.bbox, &g.bbox);
                        if iou < best {
                            continue;
                        }
                        best = iou;
                        hit = Some(gi);
                    }
                    if let Some(gi) = hit {
                        taken[gi] = true;
                    }
                    scored.push((d.score, hit.is_some()));
                }
            }
            // stable: equal scores keep image order, then in-image order
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            interpolated_ap(&scored, n_gt)
        })
        .collect();
    Some(out)
}

/// 101-point interpolated AP of a ranked list of hits.
fn interpolated_ap(ranked: &[(f64, bool)], n_gt: usize) -> f64 {
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for &(_, hit) in ranked {
        if hit {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        recall.push(tp / n_gt as f64);
        precision.push(tp / (tp + fp));
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut total = 0.0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < level);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    total / RECALL_POINTS as f64
}

/// Per-class APs at each threshold, `None` for classes without ground truth.
pub fn evaluate(preds: &[Detection], gts: &[GroundTruth], num_classes: usize, thresholds: &[f64]) -> Vec<Option<Vec<f64>>> {
    let mut p: Vec<Vec<&Detection>> = vec![Vec::new(); num_classes];
    let mut g: Vec<Vec<&GroundTruth>> = vec![Vec::new(); num_classes];
    for d in preds.iter().filter(|d| d.class_id < num_classes) {
        p[d.class_id].push(d);
    }
    for x in gts.iter().filter(|x| x.class_id < num_classes) {
        g[x.class_id].push(x);
    }
    (0..num_classes).into_par_iter().map(|c| class_ap(&p[c], &g[c], thresholds)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub name: String,
    pub num_gt: usize,
    pub num_pred: usize,
    /// AP at each threshold; `null` for classes without ground truth.
    pub ap: Option<Vec<f64>>,
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ClassReport>,
    /// Mean over evaluated classes of AP at each threshold.
    pub overall_ap: Vec<f64>,
    pub overall_map: f64,
}

impl EvalReport {
    pub fn build(preds: &[Detection], gts: &[GroundTruth], schema: &ClassSchema, thresholds: &[f64]) -> Self {
        let per_class = evaluate(preds, gts, schema.len(), thresholds);
        let classes: Vec<ClassReport> = per_class
            .into_iter()
            .enumerate()
            .map(|(c, ap)| ClassReport {
                class_id: c,
                name: schema.names()[c].clone(),
                num_gt: gts.iter().filter(|g| g.class_id == c).count(),
                num_pred: preds.iter().filter(|d| d.class_id == c).count(),
                map: ap.as_ref().map(|v| mean(v)),
                ap,
            })
            .collect();
        let evaluated: Vec<&Vec<f64>> = classes.iter().filter_map(|c| c.ap.as_ref()).collect();
        let overall_ap: Vec<f64> = (0..thresholds.len())
            .map(|t| if evaluated.is_empty() { 0.0 } else { evaluated.iter().map(|v| v[t]).sum::<f64>() / evaluated.len() as f64 })
            .collect();
        let overall_map = if evaluated.is_empty() { 0.0 } else { mean(&overall_ap) };
        EvalReport { thresholds: thresholds.to_vec(), classes, overall_ap, overall_map }
    }

    /// AP averaged over classes at the threshold closest to `t`.
    pub fn overall_at(&self, t: f64) -> Option<f64> {
        let i = self
            .thresholds
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.overall_ap[i])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table in percent: one row per class, then `overall`.
    pub fn to_table(&self) -> String {
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max("overall".len());
        let at = |v: &[f64], t: f64| {
            self.thresholds.iter().position(|&x| (x - t).abs() < 1e-9).map(|i| v[i])
        };
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x));
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}", "class", "count", "mAP", "AP50", "AP75");
        for c in &self.classes {
            let (m, a50, a75) = match &c.ap {
                Some(v) => (c.map, at(v, 0.5), at(v, 0.75)),
                None => (None, None, None),
            };
            let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}", c.name, c.num_gt, cell(m), cell(a50), cell(a75));
        }
        let total: usize = self.classes.iter().map(|c| c.num_gt).sum();
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}",
            "overall",
            total,
            cell(Some(self.overall_map)),
            cell(at(&self.overall_ap, 0.5)),
            cell(at(&self.overall_ap, 0.75))
        );
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Converts COCO ground truth and results into evaluator inputs.
///
/// Every result must name an image and a category present in `gt`;
/// anything else is a schema mismatch.
pub fn coco_inputs(gt: &CocoFile, results: &[CocoResult], schema: &ClassSchema) -> Result<(Vec<Detection>, Vec<GroundTruth>)> {
    let cats = gt.category_map(schema)?;
    let images: std::collections::BTreeSet<u64> = gt.images.iter().map(|i| i.id).collect();
    let mut gts = Vec::with_capacity(gt.annotations.len());
    for a in &gt.annotations {
        let class_id = *cats.get(&a.category_id).ok_or_else(|| GlamError::Schema(format!("category id {}", a.category_id)))?;
        if a.iscrowd != 0 {
            continue;
        }
        gts.push(GroundTruth { image: a.image_id, class_id, bbox: Rect::from_xywh(a.bbox) });
    }
    let mut preds = Vec::with_capacity(results.len());
    for r in results {
        let class_id = *cats.get(&r.category_id).ok_or_else(|| GlamError::Schema(format!("category id {}", r.category_id)))?;
        if !images.contains(&r.image_id) {
            return Err(GlamError::Invalid(format!("result for unknown image id {}", r.image_id)));
        }
        preds.push(Detection { image: r.image_id, class_id, bbox: Rect::from_xywh(r.bbox), score: r.score });
    }
    Ok((preds, gts))
}

/// Full report for COCO ground truth against COCO results.
pub fn mean_ap(results: &[CocoResult], gt: &CocoFile, schema: &ClassSchema) -> Result<EvalReport> {
    mean_ap_with(results, gt, schema, &coco_thresholds())
}

pub fn mean_ap_with(results: &[CocoResult], gt: &CocoFile, schema: &ClassSchema, thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(GlamError::Invalid("IoU thresholds must be non-empty and within [0, 1]".into()));
    }
    let (preds, gts) = coco_inputs(gt, results, schema)?;
    Ok(EvalReport::build(&preds, &gts, schema, thresholds))
}
