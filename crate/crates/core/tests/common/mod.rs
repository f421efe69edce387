//! Shared helpers for the integration tests: a synthetic textured corpus
//! whose sharp and blurred versions form labeled pairs, and the separable
//! Gaussian blur used to degrade the negative class.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cytogate::datasets::{Origin, SampleRecord};
use cytogate::imaging::ImageRgb;
use cytogate::Label;

pub const CORPUS_WIDTH: u32 = 250;
pub const CORPUS_HEIGHT: u32 = 200;
pub const TEXTURE_SIDE: u32 = 100;

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(img: &ImageRgb, sigma: f64) -> ImageRgb {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for offset in -radius..=radius {
        kernel.push((-(offset as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let sample = |src: &ImageRgb, x: i64, y: i64| {
        src.pixel(
            x.clamp(0, w - 1) as u32,
            y.clamp(0, h - 1) as u32,
        )
    };
    let pass = |src: &ImageRgb, horizontal: bool| {
        let mut out = ImageRgb::filled(img.width(), img.height(), [0, 0, 0]).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f64; 3];
                for (i, k) in kernel.iter().enumerate() {
                    let offset = i as i64 - radius;
                    let px = if horizontal {
                        sample(src, x + offset, y)
                    } else {
                        sample(src, x, y + offset)
                    };
                    for c in 0..3 {
                        acc[c] += k * px[c] as f64;
                    }
                }
                out.set_pixel(
                    x as u32,
                    y as u32,
                    [
                        (acc[0] / norm).round() as u8,
                        (acc[1] / norm).round() as u8,
                        (acc[2] / norm).round() as u8,
                    ],
                );
            }
        }
        out
    };
    let horizontal = pass(img, true);
    pass(&horizontal, false)
}

/// A mostly uniform image with one square of per-pixel RGB noise covering
/// 20% of the area, placed at a seeded position.
pub fn textured_image(rng: &mut ChaCha8Rng) -> ImageRgb {
    let base = 110 + rng.random_range(0..30) as u8;
    let mut img = ImageRgb::filled(CORPUS_WIDTH, CORPUS_HEIGHT, [base, base, base]).unwrap();
    let bx = rng.random_range(0..=CORPUS_WIDTH - TEXTURE_SIDE);
    let by = rng.random_range(0..=CORPUS_HEIGHT - TEXTURE_SIDE);
    for y in by..by + TEXTURE_SIDE {
        for x in bx..bx + TEXTURE_SIDE {
            img.set_pixel(x, y, [rng.random(), rng.random(), rng.random()]);
        }
    }
    img
}

/// Write `pairs` specimens as sharp (positive) and blurred (negative)
/// PNGs under `dir` and return the paired manifest records.
pub fn build_quality_corpus(dir: &Path, pairs: usize, seed: u64) -> Vec<SampleRecord> {
    let mut records = Vec::with_capacity(pairs * 2);
    for i in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let sharp = textured_image(&mut rng);
        let blurred = gaussian_blur(&sharp, 2.5);
        let sharp_path = dir.join(format!("sharp_{i:04}.png"));
        let blur_path = dir.join(format!("blur_{i:04}.png"));
        sharp.save_png(&sharp_path).unwrap();
        blurred.save_png(&blur_path).unwrap();
        let pair = format!("spec{i:04}");
        records.push(SampleRecord {
            sample_id: format!("sharp__{i:04}"),
            pair_id: Some(pair.clone()),
            label: Label::Positive,
            origin: Origin::Original,
            path: sharp_path,
        });
        records.push(SampleRecord {
            sample_id: format!("blur__{i:04}"),
            pair_id: Some(pair),
            label: Label::Negative,
            origin: Origin::Original,
            path: blur_path,
        });
    }
    records
}
