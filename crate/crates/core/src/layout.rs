//! Layout-informed page splitting.
//!
//! Turns raw layout-detector output for a page into a small, reading-order
//! sorted list of crop regions:
//!
//! 1. map detector category ids onto [`ContentType`] labels,
//! 2. clamp boxes into the page and sort them by vertical bands, then by x,
//! 3. keep regions whose area ratio reaches `tau`, stopping at `n_max`.
//!
//! A page with no detections is tiled by a uniform grid instead. A page whose
//! detections are all filtered out becomes a single whole-page region, so every
//! page yields at least one region.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Page dimensions in pixels. Pixel data itself never enters the core.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageGeometry {
    pub page_id: String,
    pub width: u32,
    pub height: u32,
}

impl PageGeometry {
    pub fn new(page_id: impl Into<String>, width: u32, height: u32) -> Result<Self> {
        let page = Self {
            page_id: page_id.into(),
            width,
            height,
        };
        page.validate()?;
        Ok(page)
    }

    pub fn validate(&self) -> Result<()> {
        if self.page_id.is_empty() {
            return Err(Error::InvalidGeometry("empty page_id".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGeometry(format!(
                "page {} has zero extent ({}x{})",
                self.page_id, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox::new(0.0, 0.0, f64::from(self.width), f64::from(self.height))
    }
}

/// Axis-aligned box in pixel coordinates, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center_x(&self) -> f64 {
        0.5 * (self.x1 + self.x2)
    }

    pub fn center_y(&self) -> f64 {
        0.5 * (self.y1 + self.y2)
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    /// Clamps the box into `page`. Fails if the clamped box has no area.
    pub fn clamp_to(&self, page: &PageGeometry) -> Result<Self> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite bbox {coords:?} on page {}",
                page.page_id
            )));
        }
        let w = f64::from(page.width);
        let h = f64::from(page.height);
        let clamped = Self {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        };
        if clamped.x1 >= clamped.x2 || clamped.y1 >= clamped.y2 {
            return Err(Error::InvalidGeometry(format!(
                "bbox {coords:?} is empty after clamping to {}x{} page {}",
                page.width, page.height, page.page_id
            )));
        }
        Ok(clamped)
    }
}

/// Semantic category of a layout region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentType {
    Title,
    Text,
    Figure,
    FigureCaption,
    Table,
    TableCaption,
    TableFootnote,
    Formula,
    FormulaCaption,
    List,
    Header,
    Footer,
    PageNumber,
    Other,
}

impl ContentType {
    pub const ALL: [ContentType; 14] = [
        ContentType::Title,
        ContentType::Text,
        ContentType::Figure,
        ContentType::FigureCaption,
        ContentType::Table,
        ContentType::TableCaption,
        ContentType::TableFootnote,
        ContentType::Formula,
        ContentType::FormulaCaption,
        ContentType::List,
        ContentType::Header,
        ContentType::Footer,
        ContentType::PageNumber,
        ContentType::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContentType::Title => "title",
            ContentType::Text => "text",
            ContentType::Figure => "figure",
            ContentType::FigureCaption => "figure_caption",
            ContentType::Table => "table",
            ContentType::TableCaption => "table_caption",
            ContentType::TableFootnote => "table_footnote",
            ContentType::Formula => "formula",
            ContentType::FormulaCaption => "formula_caption",
            ContentType::List => "list",
            ContentType::Header => "header",
            ContentType::Footer => "footer",
            ContentType::PageNumber => "page_number",
            ContentType::Other => "other",
        }
    }
}

impl fmt::Display for ContentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContentType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContentType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown content type {s:?}")))
    }
}

/// Detector category id to label mapping. Ids not present map to `other`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryMap(BTreeMap<i64, ContentType>);

impl CategoryMap {
    pub fn new(entries: impl IntoIterator<Item = (i64, ContentType)>) -> Self {
        Self(entries.into_iter().collect())
    }

    /// DocLayout-YOLO / MinerU class ids. Id 2 ("abandon") is left unmapped.
    pub fn doclayout_default() -> Self {
        Self::new([
            (0, ContentType::Title),
            (1, ContentType::Text),
            (3, ContentType::Figure),
            (4, ContentType::FigureCaption),
            (5, ContentType::Table),
            (6, ContentType::TableCaption),
            (7, ContentType::TableFootnote),
            (8, ContentType::Formula),
            (9, ContentType::FormulaCaption),
        ])
    }

    pub fn get(&self, category_id: i64) -> ContentType {
        map_category_id(category_id, self)
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, ContentType)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

pub fn map_category_id(category_id: i64, mapping: &CategoryMap) -> ContentType {
    mapping
        .0
        .get(&category_id)
        .copied()
        .unwrap_or(ContentType::Other)
}

/// One raw detector output box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub bbox: BoundingBox,
    pub category_id: i64,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

/// A region that survived splitting, in reading order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRegion {
    pub index: usize,
    pub bbox: BoundingBox,
    pub content_type: ContentType,
    pub area_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutParseConfig {
    /// Minimum area ratio a region must reach to be kept.
    pub tau: f64,
    /// Maximum number of regions per page.
    pub n_max: usize,
    pub grid_rows: u32,
    pub grid_cols: u32,
    /// Band width for reading-order grouping, as a fraction of page height.
    pub band_epsilon: f64,
}

impl Default for LayoutParseConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            n_max: 20,
            grid_rows: 3,
            grid_cols: 3,
            band_epsilon: 0.02,
        }
    }
}

impl LayoutParseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be in (0, 1), got {}",
                self.tau
            )));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidConfig("n_max must be at least 1".into()));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "grid must be at least 1x1, got {}x{}",
                self.grid_rows, self.grid_cols
            )));
        }
        if !(self.band_epsilon > 0.0 && self.band_epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "band_epsilon must be in (0, 0.5), got {}",
                self.band_epsilon
            )));
        }
        Ok(())
    }
}

/// Groups boxes into vertical bands and returns the bands top-to-bottom, each
/// listing input indices left-to-right.
///
/// Boxes are visited by ascending center-y (stable on input order). A box joins
/// the current band when its center-y lies within `band_epsilon * page_height`
/// of the band's running mean center-y, otherwise it opens a new band.
pub fn reading_bands(
    boxes: &[BoundingBox],
    page_height: f64,
    band_epsilon: f64,
) -> Vec<Vec<usize>> {
    let tolerance = band_epsilon * page_height;
    let mut by_y: Vec<usize> = (0..boxes.len()).collect();
    by_y.sort_by(|&a, &b| boxes[a].center_y().total_cmp(&boxes[b].center_y()));

    let mut bands: Vec<Vec<usize>> = Vec::new();
    let mut band_sum = 0.0;
    for idx in by_y {
        let cy = boxes[idx].center_y();
        match bands.last_mut() {
            Some(band) if (cy - band_sum / band.len() as f64).abs() <= tolerance => {
                band.push(idx);
                band_sum += cy;
            }
            _ => {
                bands.push(vec![idx]);
                band_sum = cy;
            }
        }
    }
    for band in &mut bands {
        // stable: equal center-x keeps input order
        band.sort_by(|&a, &b| {
            boxes[a]
                .center_x()
                .total_cmp(&boxes[b].center_x())
                .then(a.cmp(&b))
        });
    }
    bands
}

/// Reading-order permutation of `boxes` (indices into the input).
pub fn reading_order(boxes: &[BoundingBox], page_height: f64, band_epsilon: f64) -> Vec<usize> {
    reading_bands(boxes, page_height, band_epsilon)
        .into_iter()
        .flatten()
        .collect()
}

/// Sorts `(bbox, payload)` pairs into reading order.
pub fn sort_reading_order<T: Clone>(
    regions: &[(BoundingBox, T)],
    page_height: f64,
    band_epsilon: f64,
) -> Vec<(BoundingBox, T)> {
    let boxes: Vec<BoundingBox> = regions.iter().map(|(b, _)| *b).collect();
    reading_order(&boxes, page_height, band_epsilon)
        .into_iter()
        .map(|i| regions[i].clone())
        .collect()
}

/// Uniform `rows x cols` tiling of the page in row-major order.
///
/// Cell boundaries sit at `floor(i * extent / n)`, so the last row and column
/// absorb any remainder and the cells tile the page exactly.
pub fn grid_fallback(page: &PageGeometry, rows: u32, cols: u32) -> Vec<LayoutRegion> {
    let rows = rows.max(1);
    let cols = cols.max(1);
    let edge = |i: u32, n: u32, extent: u32| -> f64 {
        (u64::from(i) * u64::from(extent) / u64::from(n)) as f64
    };
    let total = page.area();
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let bbox = BoundingBox::new(
                edge(c, cols, page.width),
                edge(r, rows, page.height),
                edge(c + 1, cols, page.width),
                edge(r + 1, rows, page.height),
            );
            out.push(LayoutRegion {
                index: out.len(),
                bbox,
                content_type: ContentType::Other,
                area_ratio: bbox.area() / total,
            });
        }
    }
    out
}

/// Splits a page using the default detector category map.
pub fn split_page(
    page: &PageGeometry,
    detections: &[DetectionRecord],
    cfg: &LayoutParseConfig,
) -> Result<Vec<LayoutRegion>> {
    LayoutParser::new(cfg.clone(), CategoryMap::doclayout_default()).split_page(page, detections)
}

/// Page splitter bound to a configuration and a category map.
#[derive(Debug, Clone)]
pub struct LayoutParser {
    config: LayoutParseConfig,
    categories: CategoryMap,
}

impl LayoutParser {
    pub fn new(config: LayoutParseConfig, categories: CategoryMap) -> Self {
        Self { config, categories }
    }

    pub fn config(&self) -> &LayoutParseConfig {
        &self.config
    }

    pub fn split_page(
        &self,
        page: &PageGeometry,
        detections: &[DetectionRecord],
    ) -> Result<Vec<LayoutRegion>> {
        let cfg = &self.config;
        cfg.validate()?;
        page.validate()?;

        if detections.is_empty() {
            return Ok(grid_fallback(page, cfg.grid_rows, cfg.grid_cols));
        }

        let mut candidates = Vec::with_capacity(detections.len());
        for det in detections {
            let bbox = det.bbox.clamp_to(page)?;
            candidates.push((bbox, self.categories.get(det.category_id)));
        }
        let sorted = sort_reading_order(&candidates, f64::from(page.height), cfg.band_epsilon);

        let total = page.area();
        let mut regions = Vec::new();
        for (bbox, content_type) in sorted {
            if regions.len() >= cfg.n_max {
                break;
            }
            let area_ratio = bbox.area() / total;
            if area_ratio >= cfg.tau {
                regions.push(LayoutRegion {
                    index: regions.len(),
                    bbox,
                    content_type,
                    area_ratio,
                });
            }
        }

        if regions.is_empty() {
            log::debug!(
                "page {}: every detection fell below tau={}, using whole page",
                page.page_id,
                cfg.tau
            );
            regions.push(LayoutRegion {
                index: 0,
                bbox: page.full_box(),
                content_type: ContentType::Other,
                area_ratio: 1.0,
            });
        }
        Ok(regions)
    }
}

/// One line of detector output: a page and its raw detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorPage {
    pub page_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub regions: Vec<DetectionRecord>,
}

impl DetectorPage {
    pub fn geometry(&self) -> PageGeometry {
        PageGeometry {
            page_id: self.page_id.clone(),
            width: self.width,
            height: self.height,
        }
    }
}

/// One line of split output: a crop rectangle to hand to an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropSpec {
    pub page_id: String,
    pub region_index: usize,
    pub bbox: BoundingBox,
    pub content_type: ContentType,
}

impl CropSpec {
    pub fn from_region(page_id: &str, region: &LayoutRegion) -> Self {
        Self {
            page_id: page_id.to_string(),
            region_index: region.index,
            bbox: region.bbox,
            content_type: region.content_type,
        }
    }
}

/// Splits every page, validating page ids are unique and scores lie in `[0, 1]`.
pub fn split_pages(parser: &LayoutParser, pages: &[DetectorPage]) -> Result<Vec<CropSpec>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for page in pages {
        if !seen.insert(page.page_id.as_str()) {
            return Err(Error::InvalidGeometry(format!(
                "duplicate page_id {}",
                page.page_id
            )));
        }
        if let Some(det) = page
            .regions
            .iter()
            .find(|d| !(0.0..=1.0).contains(&d.score))
        {
            return Err(Error::InvalidGeometry(format!(
                "detection score {} outside [0, 1] on page {}",
                det.score, page.page_id
            )));
        }
        let regions = parser.split_page(&page.geometry(), &page.regions)?;
        out.extend(
            regions
                .iter()
                .map(|r| CropSpec::from_region(&page.page_id, r)),
        );
    }
    Ok(out)
}
