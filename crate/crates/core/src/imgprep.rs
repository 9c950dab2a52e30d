//! Score image preprocessing: tall-page segmentation into patch tensors and
//! image-space augmentation.
//!
//! A page of width `W` and height `H` is cut into horizontal bands of height
//! `h = min(H, 4W)` whose starts are `floor(k * h * (1 - overlap))`; the last
//! band is clipped at the bottom edge. Each band is scaled to fit an 896x896
//! white canvas (top-left aligned, aspect preserved) and split into four
//! 448x448 patches in row-major order.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use ndarray::{s, Array3, Array5, ArrayView4};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PATCH_SIZE: usize = 448;
pub const CANVAS_SIZE: usize = 2 * PATCH_SIZE;
pub const CHANNELS: usize = 3;
pub const PATCHES_PER_SEGMENT: usize = 4;
/// Largest height:width ratio of a segment.
pub const MAX_ASPECT: u32 = 4;
pub const DEFAULT_OVERLAP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImgprepError {
    #[error("image has a zero dimension ({width}x{height})")]
    DegenerateImage { width: u32, height: u32 },
    #[error("overlap fraction must be in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

/// Vertical placement of one segment in the source image, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentGeometry {
    pub y_offset: u32,
    pub height: u32,
    /// Rows shared with the previous segment (0 for the first).
    pub overlap: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBatch<F> {
    /// `[S, 4, 3, 448, 448]`, values in `[0, 1]`.
    pub data: Array5<F>,
    pub geometry: Vec<SegmentGeometry>,
    pub width: u32,
    pub height: u32,
}

/// Number of segments for a `width` x `height` page.
pub fn segment_count(width: u32, height: u32, overlap: f64) -> usize {
    let h = height.min(MAX_ASPECT.saturating_mul(width));
    let stride = f64::from(h) * (1.0 - overlap);
    let rest = f64::from(height - h);
    1.max((rest / stride).ceil() as usize + 1)
}

/// Segment bands covering `[0, height)`.
pub fn segment_plan(width: u32, height: u32, overlap: f64) -> Result<Vec<SegmentGeometry>, ImgprepError> {
    if width == 0 || height == 0 {
        return Err(ImgprepError::DegenerateImage { width, height });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(ImgprepError::InvalidOverlap(overlap));
    }
    let h = height.min(MAX_ASPECT.saturating_mul(width));
    let stride = f64::from(h) * (1.0 - overlap);
    let count = segment_count(width, height, overlap);
    let mut out: Vec<SegmentGeometry> = Vec::with_capacity(count);
    for k in 0..count {
        let y = ((k as f64 * stride).floor() as u32).min(height - 1);
        let seg_h = h.min(height - y);
        let overlap = out.last().map_or(0, |p| (p.y_offset + p.height).saturating_sub(y));
        out.push(SegmentGeometry { y_offset: y, height: seg_h, overlap });
    }
    Ok(out)
}

/// The band scaled onto a white 896x896 canvas.
pub fn segment_canvas(image: &RgbImage, geometry: &SegmentGeometry) -> RgbImage {
    let band = imageops::crop_imm(image, 0, geometry.y_offset, image.width(), geometry.height).to_image();
    let canvas_side = CANVAS_SIZE as f64;
    let scale = (canvas_side / f64::from(band.width())).min(canvas_side / f64::from(band.height()));
    let fit = |v: u32| ((f64::from(v) * scale).round() as u32).clamp(1, CANVAS_SIZE as u32);
    let (w, h) = (fit(band.width()), fit(band.height()));
    let resized = if (w, h) == band.dimensions() { band } else { imageops::resize(&band, w, h, FilterType::Triangle) };
    let mut canvas = RgbImage::from_pixel(CANVAS_SIZE as u32, CANVAS_SIZE as u32, Rgb([255, 255, 255]));
    imageops::replace(&mut canvas, &resized, 0, 0);
    canvas
}

/// Splits `image` into overlapping segments and patch tensors.
pub fn segment_image<F: Float>(image: &RgbImage, overlap: f64) -> Result<SegmentBatch<F>, ImgprepError> {
    let geometry = segment_plan(image.width(), image.height(), overlap)?;
    let mut data = Array5::<F>::zeros((geometry.len(), PATCHES_PER_SEGMENT, CHANNELS, PATCH_SIZE, PATCH_SIZE));
    let scale = F::from(255.0).expect("255 is representable");
    for (k, g) in geometry.iter().enumerate() {
        let canvas = segment_canvas(image, g);
        for (x, y, px) in canvas.enumerate_pixels() {
            let (x, y) = (x as usize, y as usize);
            let patch = (y / PATCH_SIZE) * 2 + x / PATCH_SIZE;
            for c in 0..CHANNELS {
                let v = F::from(px.0[c]).expect("byte is representable") / scale;
                data[[k, patch, c, y % PATCH_SIZE, x % PATCH_SIZE]] = v;
            }
        }
    }
    Ok(SegmentBatch { data, geometry, width: image.width(), height: image.height() })
}

/// Puts the four patches of one segment (`[4, 3, 448, 448]`) back together
/// as a `[3, 896, 896]` canvas.
pub fn reassemble<F: Float>(patches: ArrayView4<'_, F>) -> Array3<F> {
    let mut out = Array3::<F>::zeros((CHANNELS, CANVAS_SIZE, CANVAS_SIZE));
    for p in 0..PATCHES_PER_SEGMENT {
        let (row, col) = (p / 2 * PATCH_SIZE, p % 2 * PATCH_SIZE);
        out.slice_mut(s![.., row..row + PATCH_SIZE, col..col + PATCH_SIZE]).assign(&patches.slice(s![p, .., .., ..]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Inclusive range for the sampled background gray level.
    pub background_gray: (u8, u8),
    /// Inclusive range for the uniform scale factor.
    pub scale: (f64, f64),
    /// Inclusive range of pixels cropped from each side.
    pub margin_crop: (u32, u32),
    /// Pixels with every channel at or above this value count as background.
    pub background_threshold: u8,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { background_gray: (192, 255), scale: (0.9, 1.0), margin_crop: (0, 64), background_threshold: 230, seed: 0 }
    }
}

impl AugmentConfig {
    /// A config that leaves every image unchanged.
    pub fn identity() -> Self {
        AugmentConfig { background_gray: (255, 255), scale: (1.0, 1.0), margin_crop: (0, 0), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ImgprepError> {
        let bad = |m: &str| Err(ImgprepError::InvalidConfig(m.to_string()));
        if self.background_gray.0 > self.background_gray.1 {
            return bad("background_gray range is empty");
        }
        let (lo, hi) = self.scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("scale range must be positive and ordered");
        }
        if self.margin_crop.0 > self.margin_crop.1 {
            return bad("margin_crop range is empty");
        }
        Ok(())
    }
}

/// What an augmentation run sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSample {
    pub gray: u8,
    pub scale: f64,
    /// Pixels actually removed from (left, top, right, bottom).
    pub crop: (u32, u32, u32, u32),
}

/// Inclusive pixel box `(x0, y0, x1, y1)`.
pub type PixelBox = (u32, u32, u32, u32);

fn is_background(px: &Rgb<u8>, threshold: u8) -> bool {
    px.0.iter().all(|&c| c >= threshold)
}

/// Bounding box of the non-background pixels, if any.
pub fn content_bbox(image: &RgbImage, threshold: u8) -> Option<PixelBox> {
    let mut bbox: Option<PixelBox> = None;
    for (x, y, px) in image.enumerate_pixels() {
        if is_background(px, threshold) {
            continue;
        }
        bbox = Some(match bbox {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    bbox
}

/// Crops random margins without entering the content box, darkens the
/// background to a sampled gray and rescales. Ink pixels keep their values
/// until the final rescale.
pub fn augment(image: &RgbImage, cfg: &AugmentConfig) -> Result<(RgbImage, AugmentSample), ImgprepError> {
    cfg.validate()?;
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return Err(ImgprepError::DegenerateImage { width: w, height: h });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gray = rng.random_range(cfg.background_gray.0..=cfg.background_gray.1);
    let scale = if cfg.scale.0 == cfg.scale.1 { cfg.scale.0 } else { rng.random_range(cfg.scale.0..=cfg.scale.1) };
    let mut draw = || rng.random_range(cfg.margin_crop.0..=cfg.margin_crop.1);
    let wanted = (draw(), draw(), draw(), draw());

    // Room on each side outside the content box.
    let (x0, y0, x1, y1) = content_bbox(image, cfg.background_threshold).unwrap_or((0, 0, w - 1, h - 1));
    let left = wanted.0.min(x0);
    let top = wanted.1.min(y0);
    let right = wanted.2.min(w - 1 - x1);
    let bottom = wanted.3.min(h - 1 - y1);
    let mut out = imageops::crop_imm(image, left, top, w - left - right, h - top - bottom).to_image();

    let shift = 255 - gray;
    if shift > 0 {
        for px in out.pixels_mut() {
            if is_background(px, cfg.background_threshold) {
                for c in px.0.iter_mut() {
                    *c = c.saturating_sub(shift);
                }
            }
        }
    }

    if scale != 1.0 {
        let nw = ((f64::from(out.width()) * scale).round() as u32).max(1);
        let nh = ((f64::from(out.height()) * scale).round() as u32).max(1);
        out = imageops::resize(&out, nw, nh, FilterType::Triangle);
    }
    Ok((out, AugmentSample { gray, scale, crop: (left, top, right, bottom) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_page_is_one_segment() {
        let img = RgbImage::from_pixel(448, 448, Rgb([0, 0, 0]));
        let b = segment_image::<f32>(&img, 0.25).unwrap();
        assert_eq!(b.data.shape(), &[1, 4, 3, 448, 448]);
        assert_eq!(b.geometry, vec![SegmentGeometry { y_offset: 0, height: 448, overlap: 0 }]);
        // A square band fills the canvas, so every patch is black.
        assert!(b.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tall_page_plan() {
        let plan = segment_plan(1000, 8000, 0.25).unwrap();
        assert_eq!(segment_count(1000, 8000, 0.25), 3);
        assert_eq!(
            plan,
            vec![
                SegmentGeometry { y_offset: 0, height: 4000, overlap: 0 },
                SegmentGeometry { y_offset: 3000, height: 4000, overlap: 1000 },
                SegmentGeometry { y_offset: 6000, height: 2000, overlap: 1000 },
            ]
        );
    }

    #[test]
    fn short_pages_need_one_segment() {
        for (w, h) in [(100, 400), (100, 1), (3000, 200)] {
            let plan = segment_plan(w, h, 0.5).unwrap();
            assert_eq!(plan, vec![SegmentGeometry { y_offset: 0, height: h, overlap: 0 }]);
        }
    }

    #[test]
    fn errors() {
        assert_eq!(segment_plan(0, 5, 0.2), Err(ImgprepError::DegenerateImage { width: 0, height: 5 }));
        assert_eq!(segment_plan(5, 5, 1.0), Err(ImgprepError::InvalidOverlap(1.0)));
        let bad = AugmentConfig { scale: (1.0, 0.5), ..Default::default() };
        assert!(augment(&RgbImage::new(2, 2), &bad).is_err());
    }

    #[test]
    fn wide_page_is_padded_below() {
        let img = RgbImage::from_pixel(200, 100, Rgb([0, 0, 0]));
        let b = segment_image::<f64>(&img, 0.25).unwrap();
        let canvas = reassemble(b.data.slice(s![0, .., .., .., ..]));
        assert_eq!(canvas[[0, 447, 10]], 0.0);
        assert_eq!(canvas[[0, 448, 10]], 1.0);
        assert_eq!(canvas[[2, 895, 895]], 1.0);
    }

    #[test]
    fn reassembly_matches_canvas() {
        let img = RgbImage::from_fn(120, 300, |x, y| Rgb([(x * 2) as u8, (y % 256) as u8, ((x + y) % 7 * 30) as u8]));
        let b = segment_image::<f32>(&img, 0.25).unwrap();
        let canvas = segment_canvas(&img, &b.geometry[0]);
        let back = reassemble(b.data.slice(s![0, .., .., .., ..]));
        for (x, y, px) in canvas.enumerate_pixels() {
            for c in 0..3 {
                assert_eq!(back[[c, y as usize, x as usize]], f32::from(px.0[c]) / 255.0);
            }
        }
    }

    fn page() -> RgbImage {
        let mut img = RgbImage::from_pixel(80, 60, Rgb([250, 250, 250]));
        for x in 20..50 {
            for y in 15..40 {
                if (x + y) % 3 == 0 {
                    img.put_pixel(x, y, Rgb([10, 20, 30]));
                }
            }
        }
        img
    }

    #[test]
    fn identity_config() {
        let img = page();
        let (out, _) = augment(&img, &AugmentConfig::identity()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn crop_keeps_content() {
        let img = page();
        let cfg = AugmentConfig { background_gray: (255, 255), scale: (1.0, 1.0), margin_crop: (0, 100), seed: 7, ..Default::default() };
        let (out, sample) = augment(&img, &cfg).unwrap();
        let (x0, y0, x1, y1) = content_bbox(&img, 230).unwrap();
        let (l, t, _, _) = sample.crop;
        assert_eq!(content_bbox(&out, 230), Some((x0 - l, y0 - t, x1 - l, y1 - t)));
        for y in y0..=y1 {
            for x in x0..=x1 {
                assert_eq!(img.get_pixel(x, y), out.get_pixel(x - l, y - t));
            }
        }
    }

    #[test]
    fn recolor_touches_background_only() {
        let img = page();
        let cfg = AugmentConfig { background_gray: (200, 200), scale: (1.0, 1.0), margin_crop: (0, 0), ..Default::default() };
        let (out, _) = augment(&img, &cfg).unwrap();
        assert_eq!(out.get_pixel(0, 0), &Rgb([195, 195, 195]));
        assert_eq!(out.get_pixel(21, 15), &Rgb([10, 20, 30]));
    }

    #[test]
    fn seeded_runs_repeat() {
        let img = page();
        let cfg = AugmentConfig { seed: 42, ..Default::default() };
        let a = augment(&img, &cfg).unwrap();
        let b = augment(&img, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((0.9..=1.0).contains(&a.1.scale));
        assert!((192..=255).contains(&a.1.gray));
    }
}
