//! Pixel-level primitives: channel statistics, bilinear resizing, seeded
//! cropping, and dark-edge vignette synthesis.
//!
//! All statistics are computed on channels normalized to [0,1] so that
//! downstream weighting behaves the same regardless of source bit depth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Owned 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} bytes, {width}x{height} rgb needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image of a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 3
    }

    /// Decode a PNG or JPEG file. Other formats are rejected.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::ImageCodec {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        Self::new(rgb.width(), rgb.height(), rgb.into_raw())
    }

    /// Encode as 8-bit RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::ImageCodec {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction")
    }

    pub fn from_rgb_image(buf: image::RgbImage) -> Result<Self> {
        Self::new(buf.width(), buf.height(), buf.into_raw())
    }
}

/// Rectangular window into an image, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Region {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Window covering the whole image.
    pub fn full(img: &ImageRgb) -> Self {
        Self::new(0, 0, img.width(), img.height())
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn check_bounds(&self, img: &ImageRgb) -> Result<()> {
        let ok = self.w >= 1
            && self.h >= 1
            && self.x as u64 + self.w as u64 <= img.width() as u64
            && self.y as u64 + self.h as u64 <= img.height() as u64;
        if ok {
            Ok(())
        } else {
            Err(Error::RegionOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width: img.width(),
                height: img.height(),
            })
        }
    }
}

/// Knobs for the dark-edge generator.
///
/// `radius_fraction` is the radius of the untouched central disc, relative to
/// half the shorter image side. The feather band `[radius, radius+feather]`
/// fades linearly from full brightness down to `floor_level`, which scales
/// the channels of everything beyond it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VignetteParams {
    pub radius_fraction: f64,
    pub feather_fraction: f64,
    pub floor_level: f64,
    pub seed: u64,
}

impl VignetteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_fraction > 0.0 && self.radius_fraction <= 1.0) {
            return Err(Error::InvalidVignette(format!(
                "radius_fraction must lie in (0,1], got {}",
                self.radius_fraction
            )));
        }
        if !(self.feather_fraction >= 0.0 && self.feather_fraction < 0.5) {
            return Err(Error::InvalidVignette(format!(
                "feather_fraction must lie in [0,0.5), got {}",
                self.feather_fraction
            )));
        }
        if self.radius_fraction + self.feather_fraction > 1.0 {
            return Err(Error::InvalidVignette(format!(
                "radius_fraction + feather_fraction must not exceed 1, got {}",
                self.radius_fraction + self.feather_fraction
            )));
        }
        if !(self.floor_level >= 0.0 && self.floor_level <= 1.0) {
            return Err(Error::InvalidVignette(format!(
                "floor_level must lie in [0,1], got {}",
                self.floor_level
            )));
        }
        Ok(())
    }
}

/// Mean over the three channels of the per-channel population variance of
/// the region's pixels, channels normalized to [0,1]. Bounded by 0.25.
pub fn rgb_channel_variance(img: &ImageRgb, region: Region) -> Result<f64> {
    region.check_bounds(img)?;
    // channel values are integers, so the sums are exact and the variance
    // n*sum(x^2) - sum(x)^2 over n^2 never cancels wrong: uniform regions
    // give exactly zero and pixel order cannot change the result
    let mut sum = [0u64; 3];
    let mut sum_sq = [0u64; 3];
    for_each_region_pixel(img, region, |rgb| {
        for c in 0..3 {
            let v = rgb[c] as u64;
            sum[c] += v;
            sum_sq[c] += v * v;
        }
    });
    let n = region.area() as u128;
    let mut numerator = 0u128;
    for c in 0..3 {
        numerator += n * sum_sq[c] as u128 - (sum[c] as u128).pow(2);
    }
    let scale = 3.0 * (n * n) as f64 * (255.0 * 255.0);
    Ok(numerator as f64 / scale)
}

/// Population variance of per-pixel HSV saturation over the region.
/// Saturation is (max-min)/max on normalized channels, zero for black pixels.
pub fn saturation_variance(img: &ImageRgb, region: Region) -> Result<f64> {
    region.check_bounds(img)?;
    // saturation depends only on (max, min), so a histogram over those
    // pairs makes the result independent of pixel order and lets a region
    // with a single distinct saturation report exactly zero
    let mut counts = vec![0u64; 1 << 16];
    for_each_region_pixel(img, region, |rgb| {
        let max = *rgb.iter().max().unwrap() as usize;
        let min = *rgb.iter().min().unwrap() as usize;
        counts[max << 8 | min] += 1;
    });
    let saturation_of = |key: usize| {
        let (max, min) = ((key >> 8) as f64, (key & 0xff) as f64);
        if max == 0.0 {
            0.0
        } else {
            (max - min) / max
        }
    };
    let n = region.area() as f64;
    let mut sum = 0.0f64;
    let mut distinct = std::collections::BTreeSet::new();
    for (key, &count) in counts.iter().enumerate() {
        if count > 0 {
            let s = saturation_of(key);
            sum += count as f64 * s;
            distinct.insert(s.to_bits());
        }
    }
    if distinct.len() < 2 {
        return Ok(0.0);
    }
    let mean = sum / n;
    let mut dev_sq = 0.0f64;
    for (key, &count) in counts.iter().enumerate() {
        if count > 0 {
            let d = saturation_of(key) - mean;
            dev_sq += count as f64 * d * d;
        }
    }
    Ok(dev_sq / n)
}

fn for_each_region_pixel(img: &ImageRgb, region: Region, mut f: impl FnMut(&[u8; 3])) {
    let stride = img.width() as usize * 3;
    let data = img.pixels();
    for row in region.y..region.y + region.h {
        let start = row as usize * stride + region.x as usize * 3;
        let end = start + region.w as usize * 3;
        for px in data[start..end].chunks_exact(3) {
            f(px.try_into().unwrap());
        }
    }
}

/// Bilinear resampling with half-pixel-center alignment. Identity dimensions
/// return a pixel-identical copy.
pub fn resize_bilinear(img: &ImageRgb, target_w: u32, target_h: u32) -> Result<ImageRgb> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidImage(format!(
            "resize target must be positive, got {target_w}x{target_h}"
        )));
    }
    if target_w == img.width() && target_h == img.height() {
        return Ok(img.clone());
    }
    let (sw, sh) = (img.width() as f64, img.height() as f64);
    let scale_x = sw / target_w as f64;
    let scale_y = sh / target_h as f64;
    let mut out = Vec::with_capacity(target_w as usize * target_h as usize * 3);
    for y in 0..target_h {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, sh - 1.0);
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(img.height() - 1);
        let fy = sy - y0 as f64;
        for x in 0..target_w {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, sw - 1.0);
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(img.width() - 1);
            let fx = sx - x0 as f64;
            let p00 = img.pixel(x0, y0);
            let p10 = img.pixel(x1, y0);
            let p01 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round() as u8);
            }
        }
    }
    ImageRgb::new(target_w, target_h, out)
}

/// Copy a sub-rectangle out of the image.
pub(crate) fn crop_region(img: &ImageRgb, region: Region) -> Result<ImageRgb> {
    region.check_bounds(img)?;
    let stride = img.width() as usize * 3;
    let row_bytes = region.w as usize * 3;
    let mut out = Vec::with_capacity(region.h as usize * row_bytes);
    for row in region.y..region.y + region.h {
        let start = row as usize * stride + region.x as usize * 3;
        out.extend_from_slice(&img.pixels()[start..start + row_bytes]);
    }
    ImageRgb::new(region.w, region.h, out)
}

/// Square crop at a uniformly drawn offset. The x offset is drawn first,
/// then y, from a ChaCha stream seeded with `rng_seed`, so the same seed
/// always yields the same crop.
pub fn random_crop(img: &ImageRgb, size: u32, rng_seed: u64) -> Result<ImageRgb> {
    if size == 0 || size > img.width() || size > img.height() {
        return Err(Error::InvalidCropSize {
            size,
            width: img.width(),
            height: img.height(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let x = rng.random_range(0..=img.width() - size);
    let y = rng.random_range(0..=img.height() - size);
    crop_region(img, Region::new(x, y, size, size))
}

/// Darken everything outside a centered disc. Radial distance is measured
/// from the image center in pixel-center coordinates and normalized by half
/// the shorter side. Inside `radius_fraction` pixels are untouched; beyond
/// `radius_fraction + feather_fraction` channels are scaled by `floor_level`;
/// the feather band interpolates linearly between the two.
pub fn synthesize_dark_edges(img: &ImageRgb, params: &VignetteParams) -> Result<ImageRgb> {
    params.validate()?;
    let cx = img.width() as f64 / 2.0;
    let cy = img.height() as f64 / 2.0;
    let half_min = img.width().min(img.height()) as f64 / 2.0;
    let inner = params.radius_fraction;
    let outer = params.radius_fraction + params.feather_fraction;
    let mut out = img.clone();
    for y in 0..img.height() {
        let dy = (y as f64 + 0.5) - cy;
        for x in 0..img.width() {
            let dx = (x as f64 + 0.5) - cx;
            let r = (dx * dx + dy * dy).sqrt() / half_min;
            let factor = if r <= inner {
                continue;
            } else if r > outer {
                params.floor_level
            } else {
                // feather band; empty when feather_fraction is 0
                let t = (r - inner) / (outer - inner);
                1.0 + (params.floor_level - 1.0) * t
            };
            let px = img.pixel(x, y);
            out.set_pixel(
                x,
                y,
                [
                    (px[0] as f64 * factor).round() as u8,
                    (px[1] as f64 * factor).round() as u8,
                    (px[2] as f64 * factor).round() as u8,
                ],
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(w: u32, h: u32, a: [u8; 3], b: [u8; 3]) -> ImageRgb {
        let mut img = ImageRgb::filled(w, h, a).unwrap();
        for y in 0..h {
            for x in 0..w {
                if (x + y) % 2 == 1 {
                    img.set_pixel(x, y, b);
                }
            }
        }
        img
    }

    #[test]
    fn rgb_variance_of_uniform_region_is_zero() {
        let img = ImageRgb::filled(8, 8, [128, 128, 128]).unwrap();
        let v = rgb_channel_variance(&img, Region::full(&img)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn rgb_variance_of_half_black_half_white_is_quarter() {
        let img = checkerboard(8, 8, [0, 0, 0], [255, 255, 255]);
        let v = rgb_channel_variance(&img, Region::full(&img)).unwrap();
        assert!((v - 0.25).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rgb_variance_two_pixel_example() {
        // (1,0,0) and (0,0,0): channel variances {0.25, 0, 0}, mean 1/12
        let img = ImageRgb::new(2, 1, vec![255, 0, 0, 0, 0, 0]).unwrap();
        let v = rgb_channel_variance(&img, Region::full(&img)).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn rgb_variance_rejects_out_of_bounds_region() {
        let img = ImageRgb::filled(4, 4, [1, 2, 3]).unwrap();
        let err = rgb_channel_variance(&img, Region::new(2, 2, 4, 4)).unwrap_err();
        assert!(matches!(err, Error::RegionOutOfBounds { .. }));
    }

    #[test]
    fn saturation_variance_uniform_and_black() {
        let img = ImageRgb::filled(4, 4, [200, 40, 90]).unwrap();
        assert_eq!(saturation_variance(&img, Region::full(&img)).unwrap(), 0.0);
        let black = ImageRgb::filled(4, 4, [0, 0, 0]).unwrap();
        assert_eq!(
            saturation_variance(&black, Region::full(&black)).unwrap(),
            0.0
        );
    }

    #[test]
    fn saturation_variance_red_gray_split() {
        // pure red has saturation 1, gray 0; half/half variance is 0.25
        let img = checkerboard(8, 8, [255, 0, 0], [77, 77, 77]);
        let v = saturation_variance(&img, Region::full(&img)).unwrap();
        assert!((v - 0.25).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn resize_identity_is_pixel_identical() {
        let img = checkerboard(9, 7, [3, 200, 41], [90, 14, 255]);
        let out = resize_bilinear(&img, 9, 7).unwrap();
        assert_eq!(img, out);
    }

    #[test]
    fn resize_uniform_stays_uniform() {
        let img = ImageRgb::filled(5, 5, [42, 130, 7]).unwrap();
        let out = resize_bilinear(&img, 13, 3).unwrap();
        for y in 0..out.height() {
            for x in 0..out.width() {
                assert_eq!(out.pixel(x, y), [42, 130, 7]);
            }
        }
    }

    #[test]
    fn resize_two_pixel_row_upsamples_monotonically() {
        let img = ImageRgb::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let out = resize_bilinear(&img, 4, 1).unwrap();
        // half-pixel centers sample at -0.25, 0.25, 0.75, 1.25 (clamped)
        let values: Vec<u8> = (0..4).map(|x| out.pixel(x, 0)[0]).collect();
        assert_eq!(values, vec![0, 64, 191, 255]);
        for pair in values.windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn resize_preserves_channel_range() {
        let img = checkerboard(7, 5, [10, 60, 200], [240, 80, 30]);
        let out = resize_bilinear(&img, 23, 11).unwrap();
        for px in out.pixels().chunks_exact(3) {
            assert!(px[0] >= 10 && px[0] <= 240);
            assert!(px[1] >= 60 && px[1] <= 80);
            assert!(px[2] >= 30 && px[2] <= 200);
        }
    }

    #[test]
    fn random_crop_full_size_returns_whole_image() {
        let img = checkerboard(6, 6, [0, 0, 0], [255, 255, 255]);
        for seed in [0u64, 1, 99] {
            assert_eq!(random_crop(&img, 6, seed).unwrap(), img);
        }
    }

    #[test]
    fn random_crop_is_deterministic_per_seed() {
        let img = checkerboard(32, 24, [10, 20, 30], [200, 100, 50]);
        let a = random_crop(&img, 8, 7).unwrap();
        let b = random_crop(&img, 8, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_crop_rejects_oversized_patch() {
        let img = ImageRgb::filled(10, 5, [0, 0, 0]).unwrap();
        let err = random_crop(&img, 6, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidCropSize { .. }));
    }

    #[test]
    fn random_crop_is_contiguous_subrectangle() {
        let img = checkerboard(20, 20, [1, 2, 3], [200, 201, 202]);
        let crop = random_crop(&img, 5, 3).unwrap();
        // recover the offset by matching the first pixel row-by-row
        let mut found = false;
        for oy in 0..=15u32 {
            for ox in 0..=15u32 {
                let matches = (0..5).all(|y| {
                    (0..5).all(|x| crop.pixel(x, y) == img.pixel(ox + x, oy + y))
                });
                if matches {
                    found = true;
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn dark_edges_full_radius_darkens_corners_only() {
        let img = ImageRgb::filled(21, 21, [255, 255, 255]).unwrap();
        let params = VignetteParams {
            radius_fraction: 1.0,
            feather_fraction: 0.0,
            floor_level: 0.0,
            seed: 0,
        };
        let out = synthesize_dark_edges(&img, &params).unwrap();
        assert_eq!(out.pixel(10, 10), [255, 255, 255]);
        assert_eq!(out.pixel(0, 0), [0, 0, 0]);
        assert_eq!(out.pixel(20, 20), [0, 0, 0]);
    }

    #[test]
    fn dark_edges_half_radius_masks_expected_radii() {
        let img = ImageRgb::filled(101, 101, [255, 255, 255]).unwrap();
        let params = VignetteParams {
            radius_fraction: 0.5,
            feather_fraction: 0.0,
            floor_level: 0.0,
            seed: 0,
        };
        let out = synthesize_dark_edges(&img, &params).unwrap();
        // center pixel of an odd-sized image sits exactly at distance 0
        assert_eq!(out.pixel(50, 50), [255, 255, 255]);
        // pixel at normalized distance ~0.75 along the x axis
        let x = 50 + (0.75f64 * 50.5 - 0.5).round() as u32;
        assert_eq!(out.pixel(x, 50), [0, 0, 0]);
    }

    #[test]
    fn dark_edges_idempotent_with_hard_floor() {
        let img = checkerboard(40, 30, [255, 255, 255], [40, 90, 200]);
        let params = VignetteParams {
            radius_fraction: 0.6,
            feather_fraction: 0.0,
            floor_level: 0.0,
            seed: 0,
        };
        let once = synthesize_dark_edges(&img, &params).unwrap();
        let twice = synthesize_dark_edges(&once, &params).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn dark_edges_feather_interpolates_between_full_and_floor() {
        let img = ImageRgb::filled(201, 201, [200, 200, 200]).unwrap();
        let params = VignetteParams {
            radius_fraction: 0.4,
            feather_fraction: 0.4,
            floor_level: 0.0,
            seed: 0,
        };
        let out = synthesize_dark_edges(&img, &params).unwrap();
        // walk outward along a row: values must be non-increasing
        let mut prev = 255u8;
        for x in 100..201 {
            let v = out.pixel(x, 100)[0];
            assert!(v <= prev, "brightness increased at x={x}");
            prev = v;
        }
        // inside the disc untouched, beyond the band fully floored
        assert_eq!(out.pixel(100, 100), [200, 200, 200]);
        assert_eq!(out.pixel(200, 100), [0, 0, 0]);
    }

    #[test]
    fn vignette_params_validation() {
        let bad = VignetteParams {
            radius_fraction: 0.8,
            feather_fraction: 0.3,
            floor_level: 0.0,
            seed: 0,
        };
        assert!(bad.validate().is_err());
        let good = VignetteParams {
            radius_fraction: 0.7,
            feather_fraction: 0.3,
            floor_level: 0.2,
            seed: 0,
        };
        assert!(good.validate().is_ok());
    }

    #[test]
    fn variance_invariant_under_pixel_permutation() {
        let img = checkerboard(6, 4, [12, 200, 99], [230, 5, 60]);
        // mirror the image horizontally: same multiset of pixels
        let mut mirrored = img.clone();
        for y in 0..4 {
            for x in 0..6 {
                mirrored.set_pixel(5 - x, y, img.pixel(x, y));
            }
        }
        let full = Region::full(&img);
        assert_eq!(
            rgb_channel_variance(&img, full).unwrap(),
            rgb_channel_variance(&mirrored, full).unwrap()
        );
        assert_eq!(
            saturation_variance(&img, full).unwrap(),
            saturation_variance(&mirrored, full).unwrap()
        );
    }
}
