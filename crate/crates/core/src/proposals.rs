//! Candidate regions per image: CSV ingestion of external proposals and a
//! deterministic multi-scale grid generator.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::{extract_patch_descriptor, DescriptorParams, PatchDescriptor};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Location};
use crate::raster::GrayImage;

/// A region proposal: bounding box, derived location, optional descriptor.
#[derive(Debug, Clone)]
pub struct Region {
    pub id: u32,
    pub bbox: BoundingBox,
    pub location: Location,
    pub descriptor: Option<PatchDescriptor>,
}

impl Region {
    pub fn new(id: u32, bbox: BoundingBox) -> Self {
        Region {
            id,
            bbox,
            location: bbox.location(),
            descriptor: None,
        }
    }
}

/// Ordered regions of one image; ids are dense 0..n-1.
#[derive(Debug, Clone)]
pub struct RegionSet {
    pub image_id: usize,
    pub width: u32,
    pub height: u32,
    pub regions: Vec<Region>,
}

impl RegionSet {
    pub fn from_boxes(image_id: usize, width: u32, height: u32, boxes: Vec<BoundingBox>) -> Self {
        let regions = boxes
            .into_iter()
            .enumerate()
            .map(|(i, b)| Region::new(i as u32, b))
            .collect();
        RegionSet {
            image_id,
            width,
            height,
            regions,
        }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Append the full-frame box unless an (almost) identical box exists.
    /// Returns the id of the full-frame region.
    pub fn ensure_full_frame(&mut self) -> u32 {
        let frame = BoundingBox::full_frame(self.width, self.height)
            .expect("image dimensions are positive");
        for r in &self.regions {
            if r.bbox.iou(&frame) > 0.999 {
                return r.id;
            }
        }
        let id = self.regions.len() as u32;
        self.regions.push(Region::new(id, frame));
        id
    }

    /// Compute descriptors for all regions that do not have one yet.
    pub fn fill_descriptors(&mut self, image: &GrayImage, params: &DescriptorParams) -> Result<()> {
        for r in &mut self.regions {
            if r.descriptor.is_none() {
                r.descriptor = Some(extract_patch_descriptor(image, &r.bbox, params)?);
            }
        }
        Ok(())
    }

    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.regions.iter().map(|r| r.bbox).collect()
    }
}

/// Counters reported by proposal ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub loaded: usize,
    /// Rows whose box was degenerate after clamping to image bounds.
    pub dropped: usize,
    /// Rows beyond the proposal cap.
    pub truncated: usize,
}

/// Load proposals from a CSV file of "x_min,y_min,x_max,y_max" rows.
/// Lines starting with '#' are skipped. Boxes are clamped to image bounds;
/// rows that degenerate under clamping are dropped and counted.
pub fn load_proposals(
    path: &Path,
    image_id: usize,
    width: u32,
    height: u32,
    cap: usize,
) -> Result<(RegionSet, LoadStats)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut boxes = Vec::new();
    let mut stats = LoadStats::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 comma-separated values, got {}", fields.len()),
            ));
        }
        let mut coords = [0f64; 4];
        for (slot, field) in coords.iter_mut().zip(&fields) {
            *slot = field.parse::<f64>().map_err(|_| {
                Error::parse(path, line_no, format!("invalid number {field:?}"))
            })?;
        }
        if boxes.len() >= cap {
            stats.truncated += 1;
            continue;
        }
        let clamped = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
            .ok()
            .and_then(|b| b.clamp_to(width, height));
        match clamped {
            Some(b) => boxes.push(b),
            None => stats.dropped += 1,
        }
    }
    stats.loaded = boxes.len();
    Ok((RegionSet::from_boxes(image_id, width, height, boxes), stats))
}

/// Write proposals in the same CSV format `load_proposals` reads.
pub fn save_proposals(path: &Path, set: &RegionSet) -> Result<()> {
    let mut out = String::from("# x_min,y_min,x_max,y_max\n");
    for r in &set.regions {
        let [x0, y0, x1, y1] = r.bbox.corners();
        out.push_str(&format!("{x0},{y0},{x1},{y1}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parameters of the built-in multi-scale grid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Smallest box width as a fraction of min(W, H).
    pub min_scale: f64,
    /// Largest box width as a fraction of min(W, H).
    pub max_scale: f64,
    /// Ratio between consecutive widths in the geometric series.
    pub scale_ratio: f64,
    /// Grid stride as a fraction of the box side.
    pub stride: f64,
    /// Width:height aspect ratios.
    pub aspects: Vec<(f64, f64)>,
    /// Hard cap on emitted proposals.
    pub cap: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_scale: 0.1,
            max_scale: 1.0,
            scale_ratio: std::f64::consts::SQRT_2,
            stride: 0.5,
            aspects: vec![(1.0, 2.0), (1.0, 1.0), (2.0, 1.0)],
            cap: 4000,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_scale > 0.0 && self.min_scale <= self.max_scale && self.max_scale <= 1.0) {
            return Err(Error::Config(
                "generator scales must satisfy 0 < min <= max <= 1".into(),
            ));
        }
        if self.scale_ratio <= 1.0 {
            return Err(Error::Config("scale_ratio must exceed 1".into()));
        }
        if !(self.stride > 0.0 && self.stride <= 1.0) {
            return Err(Error::Config("stride must be in (0, 1]".into()));
        }
        if self.aspects.is_empty() {
            return Err(Error::Config("at least one aspect ratio required".into()));
        }
        Ok(())
    }
}

/// Deterministic multi-scale sliding grid. Box widths follow a geometric
/// series over min(W, H); each width is paired with every aspect ratio and
/// slid with a stride proportional to the box side, including positions
/// flush with the right and bottom edges. Duplicates are removed.
pub fn generate_proposals(
    image_id: usize,
    width: u32,
    height: u32,
    config: &GeneratorConfig,
) -> RegionSet {
    let (w_img, h_img) = (width as f64, height as f64);
    let min_side = w_img.min(h_img);
    let mut widths = Vec::new();
    let mut s = config.min_scale * min_side;
    let max_w = config.max_scale * min_side;
    while s <= max_w * (1.0 + 1e-9) {
        widths.push(s.min(max_w));
        s *= config.scale_ratio;
    }

    let mut boxes = Vec::new();
    let mut seen = BTreeSet::new();
    let quantize = |v: f64| (v * 1024.0).round() as i64;
    'outer: for &bw in &widths {
        for &(aw, ah) in &config.aspects {
            let h = bw * ah / aw;
            if bw > w_img || h > h_img {
                continue;
            }
            let xs = grid_positions(w_img, bw, config.stride * bw);
            let ys = grid_positions(h_img, h, config.stride * h);
            for &y in &ys {
                for &x in &xs {
                    let key = (quantize(x), quantize(y), quantize(bw), quantize(h));
                    if !seen.insert(key) {
                        continue;
                    }
                    if boxes.len() >= config.cap {
                        break 'outer;
                    }
                    if let Ok(b) = BoundingBox::new(x, y, x + bw, y + h) {
                        boxes.push(b);
                    }
                }
            }
        }
    }
    RegionSet::from_boxes(image_id, width, height, boxes)
}

fn grid_positions(extent: f64, side: f64, stride: f64) -> Vec<f64> {
    let last = extent - side;
    let mut xs = Vec::new();
    let mut x = 0.0;
    while x < last - 1e-9 {
        xs.push(x);
        x += stride;
    }
    xs.push(last.max(0.0));
    xs
}
