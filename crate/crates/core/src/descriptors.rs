//! HOG patch descriptors.
//!
//! Region patches are resampled to a fixed raster, per-pixel centered
//! gradients are binned into 9 unsigned orientation bins over an 8x8 cell
//! grid, cells are L2-normalized and the concatenated vector is
//! L2-normalized again. The same pipeline applied to the full image frame
//! serves as the global descriptor used for first-iteration retrieval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::raster::GrayImage;

/// Cells per side of the descriptor grid.
pub const GRID: usize = 8;
/// Unsigned orientation bins per cell.
pub const ORIENTATION_BINS: usize = 9;
/// Total descriptor length.
pub const DESCRIPTOR_DIM: usize = GRID * GRID * ORIENTATION_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorParams {
    /// Side of the square raster a patch is resampled to; must be a
    /// multiple of the cell grid.
    pub patch_size: u32,
    /// Cell normalization epsilon.
    pub cell_epsilon: f32,
    /// Whole vectors with L2 norm below this stay zero.
    pub zero_norm_epsilon: f32,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            patch_size: 64,
            cell_epsilon: 1e-6,
            zero_norm_epsilon: 1e-9,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size as usize % GRID != 0 {
            return Err(Error::Config(format!(
                "patch_size must be a positive multiple of {GRID}, got {}",
                self.patch_size
            )));
        }
        Ok(())
    }
}

/// Unit-norm (or all-zero) non-negative HOG vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDescriptor {
    values: Vec<f32>,
}

/// Whole-image descriptor; same layout as a patch descriptor.
pub type GlobalDescriptor = PatchDescriptor;

impl PatchDescriptor {
    pub fn from_values(values: Vec<f32>) -> Self {
        PatchDescriptor { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Inner product of two descriptors; in [0, 1] for unit-norm non-negative
/// vectors, 0 if either is the zero vector.
pub fn appearance_similarity(f: &PatchDescriptor, f_prime: &PatchDescriptor) -> Result<f32> {
    if f.len() != f_prime.len() {
        return Err(Error::DimensionMismatch(f.len(), f_prime.len()));
    }
    Ok(dot(&f.values, &f_prime.values))
}

/// Dense dot product, written for vectorization.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [0f32; LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let off = i * LANES;
        for k in 0..LANES {
            acc[k] += a[off + k] * b[off + k];
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for i in chunks * LANES..a.len() {
        sum += a[i] * b[i];
    }
    sum
}

/// Extract the HOG descriptor of an image region.
pub fn extract_patch_descriptor(
    image: &GrayImage,
    bbox: &BoundingBox,
    params: &DescriptorParams,
) -> Result<PatchDescriptor> {
    if !bbox.within_image(image.width(), image.height()) {
        return Err(Error::BoxOutOfBounds(
            bbox.x_min(),
            bbox.y_min(),
            bbox.x_max(),
            bbox.y_max(),
            image.width(),
            image.height(),
        ));
    }
    let patch = resample_patch(image, bbox, params.patch_size);
    Ok(hog_from_patch(&patch, params))
}

/// Extract the global descriptor: the full image frame through the same
/// pipeline. Stands in for GIST in first-iteration retrieval.
pub fn extract_global_descriptor(image: &GrayImage, params: &DescriptorParams) -> PatchDescriptor {
    let frame = BoundingBox::full_frame(image.width(), image.height())
        .expect("image dimensions are positive");
    extract_patch_descriptor(image, &frame, params).expect("full frame is always in bounds")
}

/// Crop `bbox` and bilinearly resample it to a `size` x `size` raster.
fn resample_patch(image: &GrayImage, bbox: &BoundingBox, size: u32) -> GrayImage {
    let sx = bbox.width() / size as f64;
    let sy = bbox.height() / size as f64;
    GrayImage::from_fn(size, size, |x, y| {
        // Map output pixel centers into the source box, in pixel-center coords.
        let u = bbox.x_min() + (x as f64 + 0.5) * sx - 0.5;
        let v = bbox.y_min() + (y as f64 + 0.5) * sy - 0.5;
        image.sample_bilinear(u, v)
    })
}

/// HOG over an already-resampled square patch.
fn hog_from_patch(patch: &GrayImage, params: &DescriptorParams) -> PatchDescriptor {
    let size = patch.width() as usize;
    let cell = size / GRID;
    let mut hist = vec![0f32; DESCRIPTOR_DIM];
    let bin_width = std::f32::consts::PI / ORIENTATION_BINS as f32;

    for y in 0..size {
        for x in 0..size {
            let gx = patch.get_clamped(x as i64 + 1, y as i64)
                - patch.get_clamped(x as i64 - 1, y as i64);
            let gy = patch.get_clamped(x as i64, y as i64 + 1)
                - patch.get_clamped(x as i64, y as i64 - 1);
            let magnitude = (gx * gx + gy * gy).sqrt();
            if magnitude == 0.0 {
                continue;
            }
            // Unsigned orientation in [0, pi); bin centers at k * bin_width.
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f32::consts::PI;
            }
            if theta >= std::f32::consts::PI {
                theta -= std::f32::consts::PI;
            }
            let coord = theta / bin_width;
            let lo = coord.floor();
            let frac = coord - lo;
            let b0 = (lo as usize) % ORIENTATION_BINS;
            let b1 = (b0 + 1) % ORIENTATION_BINS;
            let c = (y / cell) * GRID + (x / cell);
            hist[c * ORIENTATION_BINS + b0] += magnitude * (1.0 - frac);
            hist[c * ORIENTATION_BINS + b1] += magnitude * frac;
        }
    }

    // Per-cell L2 normalization.
    for c in 0..GRID * GRID {
        let slot = &mut hist[c * ORIENTATION_BINS..(c + 1) * ORIENTATION_BINS];
        let norm = slot.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            let inv = 1.0 / (norm + params.cell_epsilon);
            slot.iter_mut().for_each(|v| *v *= inv);
        }
    }

    // Whole-vector L2 normalization; gradient-free patches stay zero.
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm >= params.zero_norm_epsilon {
        let inv = 1.0 / norm;
        hist.iter_mut().for_each(|v| *v *= inv);
    }
    PatchDescriptor { values: hist }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DescriptorParams {
        DescriptorParams::default()
    }

    #[test]
    fn uniform_patch_gives_zero_descriptor() {
        let img = GrayImage::filled(80, 80, 0.5);
        let b = BoundingBox::new(10.0, 10.0, 70.0, 70.0).unwrap();
        let d = extract_patch_descriptor(&img, &b, &params()).unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn out_of_bounds_box_is_rejected() {
        let img = GrayImage::filled(32, 32, 0.5);
        let b = BoundingBox::new(10.0, 10.0, 40.0, 20.0).unwrap();
        assert!(matches!(
            extract_patch_descriptor(&img, &b, &params()),
            Err(Error::BoxOutOfBounds(..))
        ));
    }

    #[test]
    fn descriptor_is_unit_norm_and_non_negative() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * 7 + y * 13) % 29) as f32 / 29.0);
        let d = extract_global_descriptor(&img, &params());
        assert!(d.values().iter().all(|&v| v >= 0.0));
        let norm = d.values().iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn vertical_step_edge_votes_horizontal_gradient_bin() {
        // Left half dark, right half bright: gradients point along +x,
        // so all energy lands in orientation bin 0 of the boundary cells.
        let img = GrayImage::from_fn(64, 64, |x, _| if x < 32 { 0.0 } else { 1.0 });
        let d = extract_global_descriptor(&img, &params());
        let mut touched_cells = 0;
        for c in 0..GRID * GRID {
            let cell = &d.values()[c * ORIENTATION_BINS..(c + 1) * ORIENTATION_BINS];
            let total: f32 = cell.iter().sum();
            if total == 0.0 {
                continue;
            }
            touched_cells += 1;
            // Boundary column cells only (columns 3 and 4 of the grid).
            assert!(c % GRID == 3 || c % GRID == 4, "unexpected cell {c}");
            assert_eq!(cell[0], cell.iter().cloned().fold(0.0, f32::max));
            assert!(cell[0] / total > 0.999);
        }
        assert_eq!(touched_cells, 2 * GRID);
    }

    #[test]
    fn mirror_flip_swaps_columns_and_reflects_orientations() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            ((x as f32 * 0.3).sin() * (y as f32 * 0.17).cos() * 0.5 + 0.5) * 0.9
        });
        let flipped = GrayImage::from_fn(64, 64, |x, y| img.get(63 - x, y));
        let d = extract_global_descriptor(&img, &params());
        let df = extract_global_descriptor(&flipped, &params());
        for row in 0..GRID {
            for col in 0..GRID {
                let c = row * GRID + col;
                let cm = row * GRID + (GRID - 1 - col);
                for b in 0..ORIENTATION_BINS {
                    let bm = (ORIENTATION_BINS - b) % ORIENTATION_BINS;
                    let v = d.values()[c * ORIENTATION_BINS + b];
                    let vm = df.values()[cm * ORIENTATION_BINS + bm];
                    // Resampling of the flipped raster is not bit-identical,
                    // so compare with a small tolerance.
                    assert!(
                        (v - vm).abs() < 1e-3,
                        "cell {c} bin {b}: {v} vs {vm}"
                    );
                }
            }
        }
    }

    #[test]
    fn similarity_identity_disjoint_and_zero() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x + y) % 16) as f32 / 16.0);
        let d = extract_global_descriptor(&img, &params());
        assert!((appearance_similarity(&d, &d).unwrap() - 1.0).abs() < 1e-5);

        let mut a = vec![0f32; DESCRIPTOR_DIM];
        let mut b = vec![0f32; DESCRIPTOR_DIM];
        a[0] = 1.0;
        b[1] = 1.0;
        let da = PatchDescriptor::from_values(a);
        let db = PatchDescriptor::from_values(b);
        assert_eq!(appearance_similarity(&da, &db).unwrap(), 0.0);

        let zero = PatchDescriptor::from_values(vec![0f32; DESCRIPTOR_DIM]);
        assert_eq!(appearance_similarity(&da, &zero).unwrap(), 0.0);
    }

    #[test]
    fn similarity_rejects_dimension_mismatch() {
        let a = PatchDescriptor::from_values(vec![1.0; 4]);
        let b = PatchDescriptor::from_values(vec![1.0; 5]);
        assert!(matches!(
            appearance_similarity(&a, &b),
            Err(Error::DimensionMismatch(4, 5))
        ));
    }

    #[test]
    fn full_frame_patch_equals_global_descriptor() {
        let img = GrayImage::from_fn(48, 40, |x, y| ((x * 3 + y * 5) % 11) as f32 / 11.0);
        let frame = BoundingBox::full_frame(48, 40).unwrap();
        let d = extract_patch_descriptor(&img, &frame, &params()).unwrap();
        let g = extract_global_descriptor(&img, &params());
        assert_eq!(d, g);
    }

    #[test]
    fn extraction_is_deterministic() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x ^ y) % 17) as f32 / 17.0);
        let b = BoundingBox::new(5.0, 7.0, 50.0, 60.0).unwrap();
        let d1 = extract_patch_descriptor(&img, &b, &params()).unwrap();
        let d2 = extract_patch_descriptor(&img, &b, &params()).unwrap();
        assert_eq!(d1, d2);
    }
}
