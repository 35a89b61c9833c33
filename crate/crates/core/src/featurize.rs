//! Raw per-node feature vectors.
//!
//! Schema v1 has 33 features in three blocks:
//!
//! | block    | features |
//! |----------|----------|
//! | geometry | `x0/W y0/H x1/W y1/H w/W h/H area/(W*H) aspect cx/W cy/H` |
//! | text     | `ln(1+chars) ln(1+words)`, digit/upper/punct/space fractions, `ends_period starts_bullet all_caps title_case` |
//! | font     | `size/H`, in-page size z-score, bold/italic/monospace flags, 8-way name hash one-hot |
//!
//! Features are left unnormalized; the network's input batch norm owns
//! scaling.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::doc_model::{Cell, Page};
use crate::error::{GlamError, Result};
use crate::tensor::Tensor;

pub const FONT_HASH_BUCKETS: usize = 8;
pub const MAX_ASPECT: f64 = 20.0;

const V1_NAMES: [&str; 33] = [
    "x0",
    "y0",
    "x1",
    "y1",
    "width",
    "height",
    "area",
    "aspect",
    "center_x",
    "center_y",
    "log_chars",
    "log_words",
    "frac_digits",
    "frac_upper",
    "frac_punct",
    "frac_space",
    "ends_period",
    "starts_bullet",
    "all_caps",
    "title_case",
    "font_size_rel",
    "font_size_z",
    "bold",
    "italic",
    "monospace",
    "font_hash_0",
    "font_hash_1",
    "font_hash_2",
    "font_hash_3",
    "font_hash_4",
    "font_hash_5",
    "font_hash_6",
    "font_hash_7",
];

/// Versioned, named list of node features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub version: u32,
    names: Vec<&'static str>,
}

impl FeatureSchema {
    pub fn v1() -> Self {
        FeatureSchema { version: 1, names: V1_NAMES.to_vec() }
    }

    pub fn by_version(version: u32) -> Result<Self> {
        match version {
            1 => Ok(Self::v1()),
            v => Err(GlamError::Version(format!("feature schema {v}"))),
        }
    }

    pub fn names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::v1()
    }
}

/// FNV-1a 64 of the lowercase font name, reduced mod 8.
pub fn font_bucket(font_name: &str) -> usize {
    let mut h = FnvHasher::default();
    h.write(font_name.to_lowercase().as_bytes());
    (h.finish() % FONT_HASH_BUCKETS as u64) as usize
}

const BULLETS: [char; 9] = ['•', '·', '‣', '◦', '▪', '–', '-', '*', '∙'];

/// `•`, `-`, ... or an enumerator such as `1.`, `(2)`, `a)`.
pub fn starts_with_bullet(text: &str) -> bool {
    let t = text.trim_start();
    let Some(first) = t.chars().next() else {
        return false;
    };
    if BULLETS.contains(&first) {
        return true;
    }
    let body = t.strip_prefix('(').unwrap_or(t);
    let digits = body.chars().take_while(char::is_ascii_digit).count();
    let rest = &body[digits..];
    if digits > 0 && digits <= 3 {
        return rest.starts_with('.') || rest.starts_with(')');
    }
    let mut chars = body.chars();
    matches!(
        (chars.next(), chars.next(), chars.next()),
        (Some(c), Some(')'), _) | (Some(c), Some('.'), None) if c.is_ascii_lowercase()
    )
}

fn text_block(text: &str, out: &mut Vec<f32>) {
    let chars = text.chars().count();
    let words = text.split_whitespace().count();
    let (mut digits, mut upper, mut punct, mut space, mut letters, mut upper_letters) = (0, 0, 0, 0, 0, 0);
    for c in text.chars() {
        if c.is_numeric() {
            digits += 1;
        }
        if c.is_uppercase() {
            upper += 1;
        }
        if c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace()) {
            punct += 1;
        }
        if c.is_whitespace() {
            space += 1;
        }
        if c.is_alphabetic() {
            letters += 1;
            if c.is_uppercase() {
                upper_letters += 1;
            }
        }
    }
    let frac = |k: usize| if chars == 0 { 0.0 } else { k as f64 / chars as f64 };
    let title_case = words > 0
        && text.split_whitespace().all(|w| match w.chars().find(|c| c.is_alphabetic()) {
            Some(c) => c.is_uppercase(),
            None => true,
        })
        && letters > 0;
    let vals = [
        (1.0 + chars as f64).ln(),
        (1.0 + words as f64).ln(),
        frac(digits),
        frac(upper),
        frac(punct),
        frac(space),
        text.trim_end().ends_with('.') as u8 as f64,
        starts_with_bullet(text) as u8 as f64,
        (letters > 0 && upper_letters == letters) as u8 as f64,
        title_case as u8 as f64,
    ];
    out.extend(vals.iter().map(|&v| v as f32));
}

fn geometry_block(cell: &Cell, w: f64, h: f64, out: &mut Vec<f32>) {
    let b = &cell.bbox;
    let (cx, cy) = b.center();
    let aspect = if b.height() > 0.0 { (b.width() / b.height()).clamp(0.0, MAX_ASPECT) } else { MAX_ASPECT };
    let vals = [
        b.x0 / w,
        b.y0 / h,
        b.x1 / w,
        b.y1 / h,
        b.width() / w,
        b.height() / h,
        b.area() / (w * h),
        aspect,
        cx / w,
        cy / h,
    ];
    out.extend(vals.iter().map(|&v| v as f32));
}

fn font_block(cell: &Cell, page_h: f64, mean: f64, std: f64, out: &mut Vec<f32>) {
    let name = cell.font_name.to_lowercase();
    let z = if std > 0.0 { (cell.font_size - mean) / std } else { 0.0 };
    out.push((cell.font_size / page_h) as f32);
    out.push(z as f32);
    out.push(name.contains("bold") as u8 as f32);
    out.push((name.contains("italic") || name.contains("oblique")) as u8 as f32);
    out.push((name.contains("mono") || name.contains("courier")) as u8 as f32);
    let bucket = font_bucket(&cell.font_name);
    for k in 0..FONT_HASH_BUCKETS {
        out.push((k == bucket) as u8 as f32);
    }
}

/// Population mean and standard deviation of the page's font sizes.
fn font_stats(page: &Page) -> (f64, f64) {
    let n = page.cells.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = page.cells.iter().map(|c| c.font_size).sum::<f64>() / n as f64;
    let var = page.cells.iter().map(|c| (c.font_size - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// `[N x F]` raw feature matrix; row `i` describes cell `i`.
pub fn node_features(page: &Page, schema: &FeatureSchema) -> Result<Tensor<f32>> {
    if schema.version != 1 {
        return Err(GlamError::Version(format!("feature schema {}", schema.version)));
    }
    let (mean, std) = font_stats(page);
    let f = schema.dim();
    let mut data = Vec::with_capacity(page.cells.len() * f);
    for cell in &page.cells {
        geometry_block(cell, page.width, page.height, &mut data);
        text_block(&cell.text, &mut data);
        font_block(cell, page.height, mean, std, &mut data);
    }
    Tensor::new(page.cells.len(), f, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc_model::Rect;

    fn cell(bbox: Rect, text: &str, font: &str, size: f64) -> Cell {
        Cell { id: 0, bbox, text: text.into(), font_name: font.into(), font_size: size, reading_index: 0 }
    }

    fn page(cells: Vec<Cell>) -> Page {
        let mut p = Page::new("t", 200.0, 100.0);
        p.cells = cells;
        for (i, c) in p.cells.iter_mut().enumerate() {
            c.id = i;
            c.reading_index = i;
        }
        p
    }

    #[test]
    fn schema_v1_has_33_unique_names() {
        let s = FeatureSchema::v1();
        assert_eq!(s.dim(), 33);
        let mut names = s.names().to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 33);
        assert!(FeatureSchema::by_version(2).is_err());
    }

    #[test]
    fn full_page_cell_geometry() {
        let p = page(vec![cell(Rect::new(0.0, 0.0, 200.0, 100.0), "x", "Times", 10.0)]);
        let f = node_features(&p, &FeatureSchema::v1()).unwrap();
        assert_eq!(&f.row(0)[..10], &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.5, 0.5]);
    }

    #[test]
    fn digit_text_fractions() {
        let p = page(vec![cell(Rect::new(0.0, 0.0, 20.0, 10.0), "2023", "Times", 10.0)]);
        let f = node_features(&p, &FeatureSchema::v1()).unwrap();
        assert_eq!(f.get(0, 12), 1.0);
        assert_eq!(f.get(0, 13), 0.0);
    }

    #[test]
    fn single_cell_font_z_is_zero() {
        let p = page(vec![cell(Rect::new(0.0, 0.0, 20.0, 10.0), "a", "Times", 10.0)]);
        let f = node_features(&p, &FeatureSchema::v1()).unwrap();
        assert_eq!(f.get(0, 21), 0.0);
    }

    #[test]
    fn font_flags_and_hash() {
        let p = page(vec![cell(Rect::new(0.0, 0.0, 20.0, 10.0), "a", "Courier-BoldOblique", 10.0)]);
        let f = node_features(&p, &FeatureSchema::v1()).unwrap();
        assert_eq!(&f.row(0)[22..25], &[1.0, 1.0, 1.0]);
        let hash: f32 = f.row(0)[25..].iter().sum();
        assert_eq!(hash, 1.0);
        assert_eq!(font_bucket("COURIER"), font_bucket("courier"));
    }

    #[test]
    fn identical_cells_identical_rows_and_permutation() {
        let a = cell(Rect::new(0.0, 0.0, 20.0, 10.0), "Hello World.", "Times", 10.0);
        let b = cell(Rect::new(30.0, 50.0, 90.0, 62.0), "• item 12", "Arial-Bold", 12.0);
        let p = page(vec![a.clone(), a.clone(), b.clone()]);
        let f = node_features(&p, &FeatureSchema::v1()).unwrap();
        assert_eq!(f.row(0), f.row(1));
        let q = page(vec![b, a.clone(), a]);
        let g = node_features(&q, &FeatureSchema::v1()).unwrap();
        assert_eq!(f.row(2), g.row(0));
        assert_eq!(f.row(0), g.row(1));
    }

    #[test]
    fn bullets_and_enumerators() {
        for t in ["• x", "- x", "1. Intro", "(2) b", "a) c", "12)"] {
            assert!(starts_with_bullet(t), "{t}");
        }
        for t in ["Hello", "2023", "", "x.y"] {
            assert!(!starts_with_bullet(t), "{t}");
        }
    }

    #[test]
    fn text_flags() {
        let mut out = Vec::new();
        text_block("NASA REPORT", &mut out);
        assert_eq!(out[8], 1.0); // all caps
        assert_eq!(out[9], 1.0); // title case
        out.clear();
        text_block("the end.", &mut out);
        assert_eq!(&out[6..10], &[1.0, 0.0, 0.0, 0.0]);
    }
}
