//! Histogram-of-oriented-gradients descriptors for image patches.
//!
//! Every patch is resampled to a fixed square size before description, so all
//! descriptors produced by one [`HogConfig`] share a length and can be compared
//! with [`appearance_similarity`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Row-major raster with intensities in `[0, 1]`; 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Invalid(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Invalid(format!(
                "raster data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Single-channel luma (0.299, 0.587, 0.114).
    pub fn to_gray(&self) -> ImageRaster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        ImageRaster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Copy rotated by 180 degrees.
    pub fn rotated_180(&self) -> ImageRaster {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(self.channels).rev() {
            data.extend_from_slice(px);
        }
        ImageRaster { data, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HogConfig {
    /// Side of the square patch every box is resampled to.
    pub patch_size: usize,
    /// Side of a cell in pixels.
    pub cell_size: usize,
    /// Side of a block in cells.
    pub block_size: usize,
    /// Block stride in cells.
    pub block_stride: usize,
    /// Unsigned orientation bins over [0°, 180°).
    pub bins: usize,
    pub epsilon: f64,
    /// L2-Hys clipping value.
    pub clip: f64,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            cell_size: 8,
            block_size: 2,
            block_stride: 1,
            bins: 9,
            epsilon: 1e-5,
            clip: 0.2,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0
            || self.patch_size == 0
            || !self.patch_size.is_multiple_of(self.cell_size)
        {
            return Err(Error::Config(format!(
                "patch size {} must be a positive multiple of cell size {}",
                self.patch_size, self.cell_size
            )));
        }
        let cells = self.cells_per_side();
        if self.block_size == 0 || self.block_size > cells || self.block_stride == 0 {
            return Err(Error::Config(
                "block geometry does not fit the cell grid".into(),
            ));
        }
        if !(cells - self.block_size).is_multiple_of(self.block_stride) {
            return Err(Error::Config(
                "block stride does not tile the cell grid".into(),
            ));
        }
        if self.bins == 0 {
            return Err(Error::Config(
                "at least one orientation bin is required".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.clip > 0.0) {
            return Err(Error::Config("epsilon and clip must be positive".into()));
        }
        Ok(())
    }

    pub fn cells_per_side(&self) -> usize {
        self.patch_size / self.cell_size
    }

    pub fn blocks_per_side(&self) -> usize {
        (self.cells_per_side() - self.block_size) / self.block_stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size * self.bins
    }

    pub fn descriptor_len(&self) -> usize {
        self.blocks_per_side() * self.blocks_per_side() * self.block_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
}

impl HogDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Crops `bbox` (clipped to the image), resamples it bilinearly to a
/// `patch_size` square and converts it to grayscale.
pub fn extract_patch(img: &ImageRaster, bbox: &BBox, patch_size: usize) -> Result<ImageRaster> {
    let (w, h) = (img.width as f64, img.height as f64);
    let c = bbox.to_corners();
    let x0 = (c.xmin * w).clamp(0.0, w);
    let x1 = (c.xmax * w).clamp(0.0, w);
    let y0 = (c.ymin * h).clamp(0.0, h);
    let y1 = (c.ymax * h).clamp(0.0, h);
    if !(x1 > x0 && y1 > y0) || img.width == 0 || img.height == 0 {
        return Err(Error::EmptyPatch(bbox.to_array()));
    }
    let gray = img.to_gray();
    let sx = (x1 - x0) / patch_size as f64;
    let sy = (y1 - y0) / patch_size as f64;
    let mut data = Vec::with_capacity(patch_size * patch_size);
    for v in 0..patch_size {
        let y = y0 + (v as f64 + 0.5) * sy - 0.5;
        for u in 0..patch_size {
            let x = x0 + (u as f64 + 0.5) * sx - 0.5;
            data.push(bilinear(&gray, x, y));
        }
    }
    Ok(ImageRaster {
        width: patch_size,
        height: patch_size,
        channels: 1,
        data,
    })
}

/// Bilinear sample of a single-channel raster at pixel-centre coordinates.
fn bilinear(img: &ImageRaster, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let (xf, yf) = (x.floor(), y.floor());
    let (ix, iy) = (xf as usize, yf as usize);
    let (tx, ty) = (x - xf, y - yf);
    let ix1 = (ix + 1).min(img.width - 1);
    let iy1 = (iy + 1).min(img.height - 1);
    let at = |xx: usize, yy: usize| img.data[yy * img.width + xx];
    let top = at(ix, iy) * (1.0 - tx) + at(ix1, iy) * tx;
    let bottom = at(ix, iy1) * (1.0 - tx) + at(ix1, iy1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Unnormalized orientation histograms per cell, `cells × cells × bins`,
/// row-major over cells.
pub fn cell_histograms(patch: &ImageRaster, config: &HogConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if patch.channels != 1 || patch.width != config.patch_size || patch.height != config.patch_size
    {
        return Err(Error::Invalid(format!(
            "hog expects a single-channel {0}x{0} patch, got {1}x{2}x{3}",
            config.patch_size, patch.width, patch.height, patch.channels
        )));
    }
    let n = config.patch_size;
    let cells = config.cells_per_side();
    let bins = config.bins;
    let bin_width = 180.0 / bins as f64;
    let px = |x: usize, y: usize| patch.data[y * n + x];
    let mut hist = vec![0.0; cells * cells * bins];

    for y in 0..n {
        for x in 0..n {
            let gx = px((x + 1).min(n - 1), y) - px(x.saturating_sub(1), y);
            let gy = px(x, (y + 1).min(n - 1)) - px(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            // Bin b is centred on b·bin_width; votes split linearly between neighbours.
            let pos = angle / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as usize) % bins;
            let hi = (lo + 1) % bins;
            let cell = (y / config.cell_size) * cells + x / config.cell_size;
            hist[cell * bins + lo] += mag * (1.0 - frac);
            hist[cell * bins + hi] += mag * frac;
        }
    }
    Ok(hist)
}

pub fn hog(patch: &ImageRaster, config: &HogConfig) -> Result<HogDescriptor> {
    let hist = cell_histograms(patch, config)?;
    let cells = config.cells_per_side();
    let bins = config.bins;
    let blocks = config.blocks_per_side();
    let eps2 = config.epsilon * config.epsilon;
    let mut values = Vec::with_capacity(config.descriptor_len());
    let mut block = Vec::with_capacity(config.block_len());

    for by in 0..blocks {
        for bx in 0..blocks {
            block.clear();
            for cy in 0..config.block_size {
                for cx in 0..config.block_size {
                    let cell =
                        (by * config.block_stride + cy) * cells + bx * config.block_stride + cx;
                    block.extend_from_slice(&hist[cell * bins..(cell + 1) * bins]);
                }
            }
            l2_hys(&mut block, eps2, config.clip);
            values.extend_from_slice(&block);
        }
    }
    Ok(HogDescriptor { values })
}

fn l2_hys(block: &mut [f64], eps2: f64, clip: f64) {
    let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
    for v in block.iter_mut() {
        *v = (*v / norm).min(clip);
    }
    let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps2).sqrt();
    for v in block.iter_mut() {
        *v /= norm;
    }
}

/// Negative squared Euclidean distance between two descriptors.
pub fn appearance_similarity(a: &HogDescriptor, b: &HogDescriptor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(-a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>())
}

/// Descriptor of the patch under `bbox`.
pub fn describe_box(img: &ImageRaster, bbox: &BBox, config: &HogConfig) -> Result<HogDescriptor> {
    hog(&extract_patch(img, bbox, config.patch_size)?, config)
}
