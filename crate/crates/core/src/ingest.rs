//! Loading text cells and COCO annotations, plus the cell cleaning and
//! word-merging passes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::{Cell, ClassSchema, Page, Rect};
use crate::error::{GlamError, Result};

pub const CELL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub bbox: [f64; 4],
    pub text: String,
    pub font_name: String,
    pub font_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRecord {
    pub page_id: String,
    pub width: f64,
    pub height: f64,
    pub cells: Vec<CellRecord>,
}

/// On-disk cell file (`format_version` 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFile {
    pub format_version: u32,
    pub pages: Vec<PageRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

impl CellFile {
    pub fn from_pages(pages: &[Page]) -> Self {
        let pages = pages
            .iter()
            .map(|p| {
                let mut cells: Vec<&Cell> = p.cells.iter().collect();
                cells.sort_by_key(|c| c.reading_index);
                PageRecord {
                    page_id: p.page_id.clone(),
                    width: p.width,
                    height: p.height,
                    cells: cells
                        .into_iter()
                        .map(|c| CellRecord {
                            bbox: [c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1],
                            text: c.text.clone(),
                            font_name: c.font_name.clone(),
                            font_size: c.font_size,
                        })
                        .collect(),
                }
            })
            .collect();
        CellFile { format_version: CELL_FORMAT_VERSION, pages }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| GlamError::from_json(&e, bytes))?;
        match probe.format_version {
            Some(CELL_FORMAT_VERSION) => {}
            Some(v) => return Err(GlamError::Version(format!("cell file format_version {v}"))),
            None => return Err(GlamError::Version("cell file declares no format_version".into())),
        }
        serde_json::from_slice(bytes).map_err(|e| GlamError::from_json(&e, bytes))
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("cell file serializes")
    }

    /// Converts records into pages: cells in file order, `reading_index`
    /// from that order, boxes clamped into the page. Cells left with zero
    /// area after clamping are dropped.
    pub fn into_pages(self) -> Result<Vec<Page>> {
        self.pages.into_iter().map(page_from_record).collect()
    }
}

fn page_from_record(rec: PageRecord) -> Result<Page> {
    if !(rec.width > 0.0 && rec.height > 0.0) {
        return Err(GlamError::Invalid(format!(
            "page {} has non-positive size {}x{}",
            rec.page_id, rec.width, rec.height
        )));
    }
    let mut page = Page::new(rec.page_id, rec.width, rec.height);
    for (i, c) in rec.cells.into_iter().enumerate() {
        let [x0, y0, x1, y1] = c.bbox;
        let raw = Rect::new(x0, y0, x1, y1);
        if !raw.is_valid() {
            return Err(GlamError::Invalid(format!("page {} cell {i}: malformed bbox {:?}", page.page_id, c.bbox)));
        }
        if !(c.font_size > 0.0) {
            return Err(GlamError::Invalid(format!("page {} cell {i}: font size {}", page.page_id, c.font_size)));
        }
        let bbox = raw.clamp_to(page.width, page.height);
        if !(bbox.x0 < bbox.x1 && bbox.y0 < bbox.y1) {
            log::debug!("page {}: dropping cell {i} outside the page", page.page_id);
            continue;
        }
        let reading_index = page.cells.len();
        page.cells.push(Cell { id: i, bbox, text: c.text, font_name: c.font_name, font_size: c.font_size, reading_index });
    }
    Ok(page)
}

pub fn parse_cells(bytes: &[u8]) -> Result<Vec<Page>> {
    CellFile::parse(bytes)?.into_pages()
}

pub fn load_cells(path: &Path) -> Result<Vec<Page>> {
    parse_cells(&std::fs::read(path)?)
}

pub fn save_cells(pages: &[Page], path: &Path) -> Result<()> {
    std::fs::write(path, CellFile::from_pages(pages).to_json())?;
    Ok(())
}

/// Drops cells smaller than `min_px` in both width and height and cells with
/// blank text; trims surviving text and re-densifies `reading_index`.
pub fn clean_cells(page: &Page, min_px: f64) -> Page {
    let mut cells: Vec<Cell> = page
        .cells
        .iter()
        .filter(|c| !(c.bbox.width() < min_px && c.bbox.height() < min_px))
        .filter(|c| !c.text.trim().is_empty())
        .cloned()
        .map(|mut c| {
            c.text = c.text.trim().to_string();
            c
        })
        .collect();
    densify(&mut cells);
    Page { cells, ..page.clone() }
}

/// Sorts by reading index and renumbers it 0..n.
fn densify(cells: &mut [Cell]) {
    cells.sort_by_key(|c| c.reading_index);
    for (i, c) in cells.iter_mut().enumerate() {
        c.reading_index = i;
    }
}

/// Thresholds for [`merge_adjacent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    /// Maximum horizontal gap, as a fraction of the page's median font size.
    pub h_gap_frac: f64,
    /// Maximum baseline offset (centre-y difference), same units.
    pub v_gap_frac: f64,
    /// Minimum vertical overlap as a fraction of the shorter cell height.
    pub min_v_overlap: f64,
    pub max_size_delta: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        MergeParams { h_gap_frac: 0.5, v_gap_frac: 0.2, min_v_overlap: 0.5, max_size_delta: 0.5 }
    }
}

fn median_font_size(cells: &[Cell]) -> f64 {
    let mut sizes: Vec<f64> = cells.iter().map(|c| c.font_size).collect();
    if sizes.is_empty() {
        return 0.0;
    }
    sizes.sort_by(f64::total_cmp);
    let mid = sizes.len() / 2;
    if sizes.len() % 2 == 1 {
        sizes[mid]
    } else {
        0.5 * (sizes[mid - 1] + sizes[mid])
    }
}

/// Horizontal gap from `left` to `right` if the pair may merge.
fn merge_gap(left: &Cell, right: &Cell, params: &MergeParams, median: f64) -> Option<f64> {
    if left.font_name != right.font_name || (left.font_size - right.font_size).abs() > params.max_size_delta {
        return None;
    }
    if right.bbox.x0 < left.bbox.x0 {
        return None;
    }
    let shorter = left.bbox.height().min(right.bbox.height());
    if left.bbox.vertical_overlap(&right.bbox) < params.min_v_overlap * shorter {
        return None;
    }
    if (left.bbox.center().1 - right.bbox.center().1).abs() > params.v_gap_frac * median {
        return None;
    }
    let gap = right.bbox.x0 - left.bbox.x1;
    (gap <= params.h_gap_frac * median).then_some(gap)
}

/// Joins horizontally adjacent runs of same-font cells until no pair is
/// mergeable. The merged cell spans both boxes, joins the texts with a
/// space, keeps the left cell's font and id and the smaller reading index.
pub fn merge_adjacent(page: &Page, params: &MergeParams) -> Page {
    let mut cells = page.cells.clone();
    cells.sort_by_key(|c| c.reading_index);
    loop {
        let median = median_font_size(&cells);
        let mut merged_any = false;
        let mut i = 0;
        while i < cells.len() {
            // Extend cell i rightwards while a partner exists.
            loop {
                let best = (0..cells.len())
                    .filter(|&j| j != i)
                    .filter_map(|j| merge_gap(&cells[i], &cells[j], params, median).map(|g| (g, j)))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(cells[a.1].reading_index.cmp(&cells[b.1].reading_index)));
                let Some((_, j)) = best else { break };
                let right = cells.remove(j);
                if j < i {
                    i -= 1;
                }
                let left = &mut cells[i];
                left.bbox = left.bbox.union(&right.bbox);
                left.text = format!("{} {}", left.text, right.text);
                left.reading_index = left.reading_index.min(right.reading_index);
                merged_any = true;
            }
            i += 1;
        }
        if !merged_any {
            break;
        }
        cells.sort_by_key(|c| c.reading_index);
    }
    densify(&mut cells);
    Page { cells, ..page.clone() }
}

/// One COCO image entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

/// COCO detection file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

/// Detection-results record (`[{image_id, category_id, bbox, score}]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoResult {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// Ground-truth boxes of one page: `(class_id, rect)`.
pub type PageBoxes = Vec<(usize, Rect)>;

/// Page id of an image: its file name without directory and extension.
pub fn page_id_of(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string())
}

/// COCO category ids are schema positions plus one.
pub fn categories_for(schema: &ClassSchema) -> Vec<CocoCategory> {
    schema
        .names()
        .iter()
        .enumerate()
        .map(|(i, n)| CocoCategory { id: i as u64 + 1, name: n.clone() })
        .collect()
}

impl CocoFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| GlamError::from_json(&e, bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self).expect("coco serializes"))?;
        Ok(())
    }

    /// Maps each COCO category id onto a schema class id by name.
    pub fn category_map(&self, schema: &ClassSchema) -> Result<BTreeMap<u64, usize>> {
        let mut map = BTreeMap::new();
        for cat in &self.categories {
            let id = schema.id_of(&cat.name).ok_or_else(|| GlamError::Schema(cat.name.clone()))?;
            if map.insert(cat.id, id).is_some() {
                return Err(GlamError::Invalid(format!("duplicate category id {}", cat.id)));
            }
        }
        Ok(map)
    }

    /// Boxes grouped by page id; every image gets an entry.
    pub fn boxes_by_page(&self, schema: &ClassSchema) -> Result<BTreeMap<String, PageBoxes>> {
        let cats = self.category_map(schema)?;
        let mut names = BTreeMap::new();
        let mut out: BTreeMap<String, PageBoxes> = BTreeMap::new();
        for img in &self.images {
            let pid = page_id_of(&img.file_name);
            names.insert(img.id, pid.clone());
            out.entry(pid).or_default();
        }
        for ann in &self.annotations {
            let class = *cats
                .get(&ann.category_id)
                .ok_or_else(|| GlamError::Schema(format!("category id {}", ann.category_id)))?;
            let pid = names
                .get(&ann.image_id)
                .ok_or_else(|| GlamError::Invalid(format!("annotation {} refers to unknown image {}", ann.id, ann.image_id)))?;
            let [_, _, w, h] = ann.bbox;
            if w < 0.0 || h < 0.0 {
                return Err(GlamError::Invalid(format!("annotation {} has negative size", ann.id)));
            }
            out.get_mut(pid).expect("image registered").push((class, Rect::from_xywh(ann.bbox)));
        }
        Ok(out)
    }
}

pub fn load_coco(path: &Path, schema: &ClassSchema) -> Result<BTreeMap<String, PageBoxes>> {
    CocoFile::load(path)?.boxes_by_page(schema)
}

pub fn parse_results(bytes: &[u8]) -> Result<Vec<CocoResult>> {
    serde_json::from_slice(bytes).map_err(|e| GlamError::from_json(&e, bytes))
}

#[derive(Deserialize)]
struct DlnFont {
    name: Option<String>,
    size: Option<f64>,
}

#[derive(Deserialize)]
struct DlnCell {
    bbox: [f64; 4],
    text: String,
    #[serde(default)]
    font: Option<DlnFont>,
}

#[derive(Deserialize, Default)]
struct DlnMetadata {
    page_hash: Option<String>,
    coco_width: Option<f64>,
    coco_height: Option<f64>,
    original_width: Option<f64>,
    original_height: Option<f64>,
}

#[derive(Deserialize)]
struct DlnPage {
    #[serde(default)]
    metadata: DlnMetadata,
    cells: Vec<DlnCell>,
}

/// Reads one DocLayNet per-page cell record (`{"metadata": {...}, "cells":
/// [{"bbox": [x, y, w, h], "text", "font": {"name", "size"}}]}`). Missing
/// font fields default to `"unknown"` / 10.
pub fn adapt_doclaynet(raw: &[u8]) -> Result<Page> {
    let rec: DlnPage = serde_json::from_slice(raw).map_err(|e| GlamError::Adapter(e.to_string()))?;
    let md = rec.metadata;
    let width = md.coco_width.or(md.original_width).unwrap_or(1025.0);
    let height = md.coco_height.or(md.original_height).unwrap_or(1025.0);
    let record = PageRecord {
        page_id: md.page_hash.unwrap_or_else(|| "page".into()),
        width,
        height,
        cells: rec
            .cells
            .into_iter()
            .map(|c| {
                let r = Rect::from_xywh(c.bbox);
                let font = c.font.unwrap_or(DlnFont { name: None, size: None });
                CellRecord {
                    bbox: [r.x0, r.y0, r.x1, r.y1],
                    text: c.text,
                    font_name: font.name.unwrap_or_else(|| "unknown".into()),
                    font_size: font.size.filter(|s| *s > 0.0).unwrap_or(10.0),
                }
            })
            .collect(),
    };
    page_from_record(record).map_err(|e| GlamError::Adapter(e.to_string()))
}
