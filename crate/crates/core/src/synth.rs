//! Deterministic synthetic pages with ground truth aligned to their cells.
//!
//! Each page is an 850 x 1100 px sheet laid out from blocks (title, section
//! headers, paragraphs, lists, tables, captions, formulas, footnotes and
//! page header/footer bands). Every block expands into word-level cells and
//! its ground-truth box is the spanning rect of those cells. Coordinates sit
//! on a quarter-pixel grid so all box arithmetic is exact.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::doc_model::{spanning_rect, Cell, ClassSchema, Page, Rect};
use crate::error::{GlamError, Result};
use crate::ingest::{categories_for, CocoAnnotation, CocoFile, CocoImage};

pub const PAGE_WIDTH: f64 = 850.0;
pub const PAGE_HEIGHT: f64 = 1100.0;
/// Hard cap on cells per page.
pub const MAX_CELLS: usize = 450;

const MARGIN_X: f64 = 70.0;
const BODY_TOP: f64 = 80.0;
const BODY_BOTTOM: f64 = 1020.0;
const COLUMN_GAP: f64 = 30.0;

const WORDS: &[&str] = &[
    "the", "of", "and", "a", "to", "in", "is", "we", "that", "for", "this", "with", "as", "on", "are", "by", "be",
    "model", "data", "layout", "document", "page", "graph", "node", "edge", "text", "table", "figure", "results",
    "method", "approach", "training", "network", "features", "analysis", "section", "which", "from", "our", "can",
    "each", "segment", "class", "value", "set", "using", "based", "shown", "large", "small", "first", "second",
    "between", "over", "under", "both", "while", "where", "these", "those", "also", "more", "most", "than", "into",
    "performance", "evaluation", "dataset", "accuracy", "baseline", "proposed", "structure", "information",
    "extraction", "parsing", "boxes", "regions", "parameters", "efficient", "simple", "robust", "experiments",
    "report", "system", "process", "output", "input", "function", "estimate", "sample", "average", "memory",
    "time", "speed", "cost", "quality", "error", "rate", "level", "order", "position", "distance", "direction",
    "neighbor", "component", "connected", "label", "prediction", "score", "threshold", "metric", "precision",
    "recall", "annual", "financial", "statement", "revenue", "market", "company", "growth", "policy", "patent",
    "claim", "invention", "manual", "device", "system", "operation", "procedure", "law", "article", "regulation",
];

const FORMULA_TOKENS: &[&str] = &["x", "y", "=", "+", "∑", "α", "β", "(", ")", "f(x)", "2", "dx", "∫", "λ", "−", "·", "n", "i", "k", "≤"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Caption,
    Footnote,
    Formula,
    ListItem,
    PageFooter,
    PageHeader,
    SectionHeader,
    Table,
    Text,
    Title,
}

impl Kind {
    fn class_name(self) -> &'static str {
        match self {
            Kind::Caption => "Caption",
            Kind::Footnote => "Footnote",
            Kind::Formula => "Formula",
            Kind::ListItem => "List-item",
            Kind::PageFooter => "Page-footer",
            Kind::PageHeader => "Page-header",
            Kind::SectionHeader => "Section-header",
            Kind::Table => "Table",
            Kind::Text => "Text",
            Kind::Title => "Title",
        }
    }

    const ALL: [Kind; 10] = [
        Kind::Caption,
        Kind::Footnote,
        Kind::Formula,
        Kind::ListItem,
        Kind::PageFooter,
        Kind::PageHeader,
        Kind::SectionHeader,
        Kind::Table,
        Kind::Text,
        Kind::Title,
    ];
}

fn q(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn word_width(word: &str, size: f64) -> f64 {
    let units: f64 = word
        .chars()
        .map(|c| match c {
            c if c.is_uppercase() => 0.68,
            c if c.is_ascii_digit() => 0.55,
            c if c.is_alphabetic() => 0.5,
            _ => 0.35,
        })
        .sum();
    q((units * size).max(0.5 * size))
}

fn line_height(size: f64) -> f64 {
    q(size * 1.25)
}

#[derive(Debug, Clone)]
struct Font {
    name: String,
    size: f64,
}

/// Per-page typography.
struct Fonts {
    body: String,
    sans: String,
    body_size: f64,
}

impl Fonts {
    fn regular(&self, size: f64) -> Font {
        Font { name: self.body.clone(), size }
    }
    fn bold(&self, size: f64) -> Font {
        Font { name: format!("{}-Bold", self.body), size }
    }
    fn italic(&self, size: f64) -> Font {
        Font { name: format!("{}-Italic", self.body), size }
    }
    fn sans(&self, size: f64) -> Font {
        Font { name: self.sans.clone(), size }
    }
    fn sans_bold(&self, size: f64) -> Font {
        Font { name: format!("{}-Bold", self.sans), size }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Align {
    Left,
    Center,
}

/// Cells of one block, in reading order.
#[derive(Default)]
struct Block {
    cells: Vec<(Rect, String, Font)>,
}

impl Block {
    fn push(&mut self, rect: Rect, text: String, font: &Font) {
        self.cells.push((rect, text, font.clone()));
    }

    fn bottom(&self) -> f64 {
        self.cells.iter().map(|c| c.0.y1).fold(f64::MIN, f64::max)
    }

    fn len(&self) -> usize {
        self.cells.len()
    }
}

/// Lays out words into lines within `[x0, x0 + width]` starting at `y`;
/// continuation lines start at `x0 + indent`. Returns the y just below
/// the last line.
fn flow(block: &mut Block, words: &[String], font: &Font, x0: f64, width: f64, y: f64, align: Align, indent: f64) -> f64 {
    let h = line_height(font.size);
    let pitch = h + q(font.size * 0.3);
    let gap = q(font.size * 0.35);
    let mut lines: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    let mut used = 0.0;
    for w in words {
        let ww = word_width(w, font.size);
        let start = if lines.len() == 1 { 0.0 } else { indent };
        let line = lines.last_mut().expect("non-empty");
        let need = if line.is_empty() { ww } else { used + gap + ww };
        if !line.is_empty() && start + need > width {
            lines.push(vec![(w.clone(), ww)]);
            used = ww;
        } else {
            line.push((w.clone(), ww));
            used = need;
        }
    }
    let mut yy = y;
    for (li, line) in lines.iter().enumerate() {
        let span: f64 = line.iter().map(|(_, w)| w).sum::<f64>() + gap * (line.len().saturating_sub(1)) as f64;
        let mut x = match align {
            Align::Left => x0 + if li == 0 { 0.0 } else { indent },
            Align::Center => q(x0 + (width - span) / 2.0),
        };
        for (text, w) in line {
            block.push(Rect::new(x, yy, x + w, yy + h), text.clone(), font);
            x += w + gap;
        }
        yy += pitch;
    }
    yy - pitch + h
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    fonts: Fonts,
    figure_no: usize,
    table_no: usize,
    section_no: usize,
    footnote_no: usize,
}

impl Gen<'_> {
    fn words(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let n = self.rng.gen_range(lo..=hi);
        (0..n).map(|_| WORDS.choose(self.rng).expect("vocabulary").to_string()).collect()
    }

    fn sentence(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let mut w = self.words(lo, hi);
        capitalize(&mut w[0]);
        let last = w.last_mut().expect("non-empty");
        last.push(if self.rng.gen_bool(0.8) { '.' } else { ',' });
        w
    }

    fn title_words(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let mut w = self.words(lo, hi);
        w.iter_mut().for_each(capitalize);
        w
    }

    fn paragraph(&mut self, x0: f64, width: f64, y: f64) -> Block {
        let mut words = Vec::new();
        for _ in 0..self.rng.gen_range(1..=3) {
            words.extend(self.sentence(6, 16));
        }
        let mut b = Block::default();
        let font = self.fonts.regular(self.fonts.body_size);
        flow(&mut b, &words, &font, x0, width, y, Align::Left, 0.0);
        b
    }

    fn section_header(&mut self, x0: f64, width: f64, y: f64) -> Block {
        self.section_no += 1;
        let mut words = vec![format!("{}.", self.section_no)];
        if self.rng.gen_bool(0.4) {
            words[0] = format!("{}.{}", self.section_no, self.rng.gen_range(1..=5));
        }
        words.extend(self.title_words(1, 4));
        let mut b = Block::default();
        let font = self.fonts.bold(self.fonts.body_size + 2.0);
        flow(&mut b, &words, &font, x0, width, y, Align::Left, 0.0);
        b
    }

    fn title(&mut self, x0: f64, width: f64, y: f64) -> Block {
        let words = self.title_words(3, 10);
        let size = self.rng.gen_range(16..=20) as f64;
        let mut b = Block::default();
        flow(&mut b, &words, &self.fonts.bold(size), x0, width, y, Align::Center, 0.0);
        b
    }

    /// One block per item.
    fn list(&mut self, x0: f64, width: f64, y: f64) -> Vec<Block> {
        let font = self.fonts.regular(self.fonts.body_size);
        let numbered = self.rng.gen_bool(0.3);
        let n = self.rng.gen_range(2..=5);
        let item_gap = q(font.size * 0.9);
        let mut out = Vec::new();
        let mut yy = y;
        for i in 0..n {
            let marker = if numbered { format!("{}.", i + 1) } else { "•".to_string() };
            let mw = word_width(&marker, font.size);
            let indent = q(mw + font.size * 0.6);
            let mut b = Block::default();
            b.push(Rect::new(x0, yy, x0 + mw, yy + line_height(font.size)), marker, &font);
            let words = self.sentence(3, 18);
            let bottom = flow(&mut b, &words, &font, x0 + indent, width - indent, yy, Align::Left, 0.0);
            yy = bottom + item_gap;
            out.push(b);
        }
        out
    }

    fn caption(&mut self, x0: f64, width: f64, y: f64, table: bool) -> Block {
        let mut words = if table {
            self.table_no += 1;
            vec!["Table".to_string(), format!("{}:", self.table_no)]
        } else {
            self.figure_no += 1;
            vec!["Figure".to_string(), format!("{}.", self.figure_no)]
        };
        words.extend(self.sentence(3, 14));
        let mut b = Block::default();
        flow(&mut b, &words, &self.fonts.italic(self.fonts.body_size - 1.0), x0, width, y, Align::Left, 0.0);
        b
    }

    fn table(&mut self, x0: f64, width: f64, y: f64) -> Block {
        let cols = self.rng.gen_range(2..=5);
        let rows = self.rng.gen_range(3..=7);
        let size = 9.0;
        let col_w = q(width / cols as f64);
        let h = line_height(size);
        let pitch = h + q(size * 0.6);
        let mut b = Block::default();
        for r in 0..rows {
            let font = if r == 0 { self.fonts.sans_bold(size) } else { self.fonts.sans(size) };
            for c in 0..cols {
                let text = if r == 0 || c == 0 {
                    let mut w = WORDS.choose(self.rng).expect("vocabulary").to_string();
                    capitalize(&mut w);
                    w
                } else if self.rng.gen_bool(0.5) {
                    format!("{:.1}", self.rng.gen_range(0.0..100.0))
                } else {
                    self.rng.gen_range(1..5000).to_string()
                };
                let w = word_width(&text, size).min(col_w - 12.0);
                let x = x0 + c as f64 * col_w;
                let yy = y + r as f64 * pitch;
                b.push(Rect::new(x, yy, x + w, yy + h), text, &font);
            }
        }
        b
    }

    fn formula(&mut self, x0: f64, width: f64, y: f64) -> Block {
        let n = self.rng.gen_range(3..=9);
        let words: Vec<String> = (0..n).map(|_| FORMULA_TOKENS.choose(self.rng).expect("tokens").to_string()).collect();
        let mut b = Block::default();
        let font = Font { name: "Courier".into(), size: self.fonts.body_size };
        flow(&mut b, &words, &font, x0, width, y, Align::Center, 0.0);
        b
    }

    fn footnote(&mut self, x0: f64, width: f64, y: f64) -> Block {
        self.footnote_no += 1;
        let mut words = vec![self.footnote_no.to_string()];
        words.extend(self.sentence(4, 20));
        let mut b = Block::default();
        flow(&mut b, &words, &self.fonts.regular(8.0), x0, width, y, Align::Left, 0.0);
        b
    }

    fn header(&mut self) -> Block {
        let words = self.title_words(2, 6);
        let align = if self.rng.gen_bool(0.5) { Align::Left } else { Align::Center };
        let mut b = Block::default();
        flow(&mut b, &words, &self.fonts.sans(8.0), MARGIN_X, PAGE_WIDTH - 2.0 * MARGIN_X, 40.0, align, 0.0);
        b
    }

    fn footer(&mut self, page_no: usize) -> Block {
        let mut words = Vec::new();
        if self.rng.gen_bool(0.4) {
            words.extend(self.title_words(1, 3));
        }
        words.push(page_no.to_string());
        let mut b = Block::default();
        flow(&mut b, &words, &self.fonts.sans(8.0), MARGIN_X, PAGE_WIDTH - 2.0 * MARGIN_X, 1050.0, Align::Center, 0.0);
        b
    }

    /// Body blocks of one column, stacked from `top` until `bottom` or the
    /// cell budget is reached.
    fn column(&mut self, x0: f64, width: f64, top: f64, bottom: f64, budget: &mut usize) -> Vec<(Kind, Block)> {
        let mut out: Vec<(Kind, Block)> = Vec::new();
        let mut y = top;
        let mut misses = 0;
        while misses < 3 {
            let pick: f64 = self.rng.gen();
            let candidate: Vec<(Kind, Block)> = if pick < 0.38 {
                vec![(Kind::Text, self.paragraph(x0, width, y))]
            } else if pick < 0.52 {
                vec![(Kind::SectionHeader, self.section_header(x0, width, y))]
            } else if pick < 0.65 {
                self.list(x0, width, y).into_iter().map(|b| (Kind::ListItem, b)).collect()
            } else if pick < 0.77 {
                let mut v = Vec::new();
                let mut yy = y;
                if self.rng.gen_bool(0.6) {
                    let cap = self.caption(x0, width, yy, true);
                    yy = cap.bottom() + block_gap(self.rng, self.fonts.body_size);
                    v.push((Kind::Caption, cap));
                }
                v.push((Kind::Table, self.table(x0, width, yy)));
                v
            } else if pick < 0.87 {
                let space = q(self.rng.gen_range(60.0..180.0));
                vec![(Kind::Caption, self.caption(x0, width, y + space, false))]
            } else {
                vec![(Kind::Formula, self.formula(x0, width, y))]
            };
            let cells: usize = candidate.iter().map(|(_, b)| b.len()).sum();
            let end = candidate.iter().map(|(_, b)| b.bottom()).fold(f64::MIN, f64::max);
            if end > bottom || cells > *budget {
                misses += 1;
                continue;
            }
            *budget -= cells;
            y = end + block_gap(self.rng, self.fonts.body_size);
            out.extend(candidate);
        }
        out
    }
}

fn block_gap(rng: &mut ChaCha8Rng, size: f64) -> f64 {
    q(size * 1.2 + rng.gen_range(4.0..14.0))
}

fn capitalize(w: &mut String) {
    let mut c = w.chars();
    if let Some(f) = c.next() {
        *w = f.to_uppercase().chain(c).collect();
    }
}

/// One page and its ground-truth blocks, in reading order.
fn generate_page(page_id: String, page_no: usize, rng: &mut ChaCha8Rng) -> (Page, Vec<(Kind, Rect)>) {
    let body = ["Times", "Palatino", "CMR10", "Georgia", "Garamond"].choose(rng).expect("fonts").to_string();
    let sans = ["Helvetica", "Arial", "Calibri"].choose(rng).expect("fonts").to_string();
    let body_size = [9.0, 10.0, 10.0, 11.0].choose(rng).copied().expect("sizes");
    let mut g = Gen {
        rng,
        fonts: Fonts { body, sans, body_size },
        figure_no: 0,
        table_no: 0,
        section_no: 0,
        footnote_no: 0,
    };
    let mut budget = g.rng.gen_range(140..=320usize);
    let mut blocks: Vec<(Kind, Block)> = Vec::new();

    if g.rng.gen_bool(0.7) {
        let b = g.header();
        budget = budget.saturating_sub(b.len());
        blocks.push((Kind::PageHeader, b));
    }
    let footer = g.rng.gen_bool(0.7).then(|| g.footer(page_no));
    if let Some(f) = &footer {
        budget = budget.saturating_sub(f.len());
    }

    let mut top = BODY_TOP;
    if g.rng.gen_bool(0.5) {
        let t = g.title(MARGIN_X, PAGE_WIDTH - 2.0 * MARGIN_X, top);
        top = t.bottom() + q(24.0 + g.rng.gen_range(0.0..16.0));
        budget = budget.saturating_sub(t.len());
        blocks.push((Kind::Title, t));
    }

    let two_columns = g.rng.gen_bool(0.5);
    let full = PAGE_WIDTH - 2.0 * MARGIN_X;
    let columns: Vec<(f64, f64)> = if two_columns {
        let w = (full - COLUMN_GAP) / 2.0;
        vec![(MARGIN_X, w), (MARGIN_X + w + COLUMN_GAP, w)]
    } else {
        vec![(MARGIN_X, full)]
    };
    let per_column = budget / columns.len();
    for (x0, width) in columns {
        let mut col_budget = per_column;
        let mut bottom = BODY_BOTTOM;
        let note = if g.rng.gen_bool(0.3) {
            let probe = g.footnote(x0, width, 0.0);
            let h = probe.bottom();
            bottom = BODY_BOTTOM - h - 16.0;
            col_budget = col_budget.saturating_sub(probe.len());
            let mut placed = Block::default();
            for (r, t, f) in probe.cells {
                let shift = BODY_BOTTOM - h;
                placed.push(Rect::new(r.x0, r.y0 + shift, r.x1, r.y1 + shift), t, &f);
            }
            Some(placed)
        } else {
            None
        };
        blocks.extend(g.column(x0, width, top, bottom, &mut col_budget));
        if let Some(n) = note {
            blocks.push((Kind::Footnote, n));
        }
    }
    if let Some(f) = footer {
        blocks.push((Kind::PageFooter, f));
    }

    let mut page = Page::new(page_id, PAGE_WIDTH, PAGE_HEIGHT);
    let mut truth = Vec::new();
    for (kind, block) in blocks {
        if page.cells.len() + block.len() > MAX_CELLS {
            break;
        }
        let span = spanning_rect(block.cells.iter().map(|c| &c.0)).expect("blocks are non-empty");
        truth.push((kind, span));
        for (rect, text, font) in block.cells {
            let id = page.cells.len();
            page.cells.push(Cell { id, bbox: rect, text, font_name: font.name, font_size: font.size, reading_index: id });
        }
    }
    (page, truth)
}

/// Pages plus COCO ground truth. Image ids are page positions plus one.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub pages: Vec<Page>,
    pub coco: CocoFile,
}

/// `n_pages` synthetic pages. Page `i` is drawn from its own generator
/// seeded with `seed ^ i`, so output does not depend on thread count.
pub fn generate_corpus(n_pages: usize, seed: u64, schema: &ClassSchema) -> Result<Corpus> {
    if n_pages == 0 {
        return Err(GlamError::Invalid("n_pages must be at least 1".into()));
    }
    let mut class_of = [0usize; 10];
    for (slot, kind) in class_of.iter_mut().zip(Kind::ALL) {
        *slot = schema.id_of(kind.class_name()).ok_or_else(|| GlamError::Schema(kind.class_name().into()))?;
    }
    let class = |k: Kind| class_of[Kind::ALL.iter().position(|&x| x == k).expect("listed")];

    let generated: Vec<(Page, Vec<(Kind, Rect)>)> = (0..n_pages)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
            generate_page(format!("synth-{seed}-{i:05}"), i + 1, &mut rng)
        })
        .collect();

    let mut coco = CocoFile { images: Vec::new(), annotations: Vec::new(), categories: categories_for(schema) };
    let mut pages = Vec::with_capacity(n_pages);
    for (i, (page, truth)) in generated.into_iter().enumerate() {
        let image_id = i as u64 + 1;
        coco.images.push(CocoImage {
            id: image_id,
            file_name: format!("{}.png", page.page_id),
            width: page.width,
            height: page.height,
        });
        for (kind, rect) in truth {
            coco.annotations.push(CocoAnnotation {
                id: coco.annotations.len() as u64 + 1,
                image_id,
                category_id: class(kind) as u64 + 1,
                bbox: rect.to_xywh(),
                area: rect.area(),
                iscrowd: 0,
                score: None,
            });
        }
        pages.push(page);
    }
    Ok(Corpus { pages, coco })
}

/// Jitters every ground-truth coordinate by uniform `±jitter_px` and drops
/// `round(dropout_frac * n)` cells from each page.
pub fn perturb(corpus: &Corpus, jitter_px: f64, dropout_frac: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    let sizes: std::collections::BTreeMap<u64, (f64, f64)> =
        corpus.coco.images.iter().map(|i| (i.id, (i.width, i.height))).collect();
    if jitter_px > 0.0 {
        for ann in &mut out.coco.annotations {
            let r = Rect::from_xywh(ann.bbox);
            let (w, h) = sizes.get(&ann.image_id).copied().unwrap_or((f64::MAX, f64::MAX));
            let mut j = || rng.gen_range(-jitter_px..=jitter_px);
            let x0 = (r.x0 + j()).clamp(0.0, w);
            let y0 = (r.y0 + j()).clamp(0.0, h);
            let x1 = (r.x1 + j()).clamp(0.0, w).max(x0);
            let y1 = (r.y1 + j()).clamp(0.0, h).max(y0);
            let jittered = Rect::new(x0, y0, x1, y1);
            ann.bbox = jittered.to_xywh();
            ann.area = jittered.area();
        }
    }
    let dropout = dropout_frac.clamp(0.0, 1.0);
    if dropout > 0.0 {
        for page in &mut out.pages {
            let n = page.cells.len();
            let drop = ((n as f64) * dropout).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut gone = vec![false; n];
            order[..drop].iter().for_each(|&i| gone[i] = true);
            let kept: Vec<Cell> = page.cells.iter().zip(&gone).filter(|(_, &g)| !g).map(|(c, _)| c.clone()).collect();
            page.cells = kept
                .into_iter()
                .enumerate()
                .map(|(i, mut c)| {
                    c.id = i;
                    c.reading_index = i;
                    c
                })
                .collect();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean_cells, CellFile};

    #[test]
    fn same_seed_same_bytes() {
        let s = ClassSchema::doclaynet();
        let a = generate_corpus(3, 7, &s).unwrap();
        let b = generate_corpus(3, 7, &s).unwrap();
        assert_eq!(CellFile::from_pages(&a.pages).to_json(), CellFile::from_pages(&b.pages).to_json());
        assert_eq!(serde_json::to_vec(&a.coco).unwrap(), serde_json::to_vec(&b.coco).unwrap());
        let c = generate_corpus(3, 8, &s).unwrap();
        assert_ne!(a.pages, c.pages);
    }

    #[test]
    fn pages_are_valid_and_survive_cleaning() {
        let corpus = generate_corpus(20, 3, &ClassSchema::doclaynet()).unwrap();
        for p in &corpus.pages {
            p.validate().unwrap();
            assert!(p.len() <= MAX_CELLS);
            assert_eq!(clean_cells(p, 10.0).cells, p.cells);
        }
    }

    #[test]
    fn truth_boxes_do_not_overlap() {
        let corpus = generate_corpus(20, 5, &ClassSchema::doclaynet()).unwrap();
        for img in &corpus.coco.images {
            let boxes: Vec<Rect> = corpus
                .coco
                .annotations
                .iter()
                .filter(|a| a.image_id == img.id)
                .map(|a| Rect::from_xywh(a.bbox))
                .collect();
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert_eq!(boxes[i].intersection_area(&boxes[j]), 0.0, "{} {i} {j}", img.file_name);
                }
            }
        }
    }

    #[test]
    fn identity_perturbation() {
        let corpus = generate_corpus(2, 1, &ClassSchema::doclaynet()).unwrap();
        assert_eq!(perturb(&corpus, 0.0, 0.0, 9), corpus);
        let empty = perturb(&corpus, 0.0, 1.0, 9);
        assert!(empty.pages.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn zero_pages_rejected() {
        assert!(generate_corpus(0, 1, &ClassSchema::doclaynet()).is_err());
    }
}
