use std::collections::BTreeMap;
use std::fmt::Write;

use glam_core::ingest::{CocoFile, CocoResult};
use glam_core::{ClassSchema, Page, Rect};

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939",
];

#[derive(Debug, Clone)]
pub struct Drawn {
    pub class_id: usize,
    pub bbox: Rect,
    pub score: Option<f64>,
}

fn slot(image_id: u64, ids: &[u64]) -> Option<usize> {
    ids.iter().position(|&i| i == image_id)
}

/// Results grouped by page position. Records for unknown images or
/// categories are skipped.
pub fn from_results(results: &[CocoResult], ids: &[u64], cats: &BTreeMap<u64, usize>, min_score: f64) -> Vec<Vec<Drawn>> {
    let mut out = vec![Vec::new(); ids.len()];
    for r in results.iter().filter(|r| r.score >= min_score) {
        if let (Some(i), Some(&class_id)) = (slot(r.image_id, ids), cats.get(&r.category_id)) {
            out[i].push(Drawn { class_id, bbox: Rect::from_xywh(r.bbox), score: Some(r.score) });
        }
    }
    out
}

pub fn from_coco(gt: &CocoFile, ids: &[u64], cats: &BTreeMap<u64, usize>) -> Vec<Vec<Drawn>> {
    let mut out = vec![Vec::new(); ids.len()];
    for a in &gt.annotations {
        if let (Some(i), Some(&class_id)) = (slot(a.image_id, ids), cats.get(&a.category_id)) {
            out[i].push(Drawn { class_id, bbox: Rect::from_xywh(a.bbox), score: a.score });
        }
    }
    out
}

pub fn file_name(page_id: &str) -> String {
    let safe: String = page_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.svg")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Cell outlines in grey, then one coloured box per segment with its class
/// name and score.
pub fn svg(page: &Page, boxes: &[Drawn], classes: &ClassSchema) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = page.width,
        h = page.height
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(&page.page_id));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, page.width, page.height);
    let _ = writeln!(s, r##"<g fill="none" stroke="#b0b0b0" stroke-width="0.5">"##);
    for c in &page.cells {
        let b = &c.bbox;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#, b.x0, b.y0, b.width(), b.height());
    }
    s.push_str("</g>\n");
    for d in boxes {
        let color = PALETTE[d.class_id % PALETTE.len()];
        let b = &d.bbox;
        let name = classes.name(d.class_id).unwrap_or("?");
        let label = match d.score {
            Some(p) => format!("{name} {p:.2}"),
            None => name.to_string(),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.12" stroke="{color}" stroke-width="1.5"/>"#,
            b.x0,
            b.y0,
            b.width(),
            b.height()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="9" fill="{color}">{}</text>"#,
            b.x0,
            (b.y0 - 2.0).max(9.0),
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use glam_core::Cell;

    #[test]
    fn empty_page_has_only_outlines() {
        let mut p = Page::new("a/b <c>", 100.0, 50.0);
        p.cells.push(Cell {
            id: 0,
            bbox: Rect::new(10.0, 10.0, 40.0, 20.0),
            text: "x".into(),
            font_name: "F".into(),
            font_size: 9.0,
            reading_index: 0,
        });
        let out = svg(&p, &[], &ClassSchema::doclaynet());
        assert!(out.starts_with("<svg"));
        assert!(out.trim_end().ends_with("</svg>"));
        assert_eq!(out.matches("<rect").count(), 2);
        assert!(!out.contains("<text"));
        assert!(out.contains("a/b &lt;c&gt;"));
        assert_eq!(file_name(&p.page_id), "a_b__c_.svg");
    }
}
