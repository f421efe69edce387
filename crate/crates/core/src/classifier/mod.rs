//! Scorer backends behind one interface: a classical sharpness baseline
//! that needs no trained weights, and an adapter for externally trained
//! serialized models.

mod onnx;

pub use onnx::OnnxScorer;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::imaging::ImageRgb;

/// A deterministic image-to-probability scorer. Higher output means the
/// image is more likely high-quality (quality gate) or more likely a valid
/// cell image (validity gate).
///
/// Implementations must be safe for concurrent `score` calls; anything
/// single-threaded has to be wrapped in its own lock before it reaches the
/// evaluation driver.
pub trait QualityScorer: Send + Sync {
    fn score(&self, img: &ImageRgb) -> Result<f64>;
}

/// Maps a raw scorer statistic onto a probability via a logistic curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticCalibration {
    pub midpoint: f64,
    pub scale: f64,
}

impl LogisticCalibration {
    pub fn new(midpoint: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && midpoint.is_finite()) {
            return Err(Error::InvalidCalibration(scale));
        }
        Ok(Self { midpoint, scale })
    }

    /// Fit from labeled raw scores: the midpoint is the mean of the two
    /// class medians, the scale a quarter of the median gap (floored so a
    /// degenerate corpus still yields a valid curve).
    pub fn fit(positive_raws: &[f64], negative_raws: &[f64]) -> Result<Self> {
        if positive_raws.is_empty() || negative_raws.is_empty() {
            return Err(Error::InvalidConfig(
                "calibration needs raw scores from both classes".to_string(),
            ));
        }
        let pos = median(positive_raws);
        let neg = median(negative_raws);
        let midpoint = (pos + neg) / 2.0;
        let scale = ((pos - neg).abs() / 4.0).max(1e-9);
        Self::new(midpoint, scale)
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Logistic squash of a raw score around the calibration midpoint.
pub fn logistic_map(raw: f64, cal: &LogisticCalibration) -> f64 {
    1.0 / (1.0 + (-(raw - cal.midpoint) / cal.scale).exp())
}

/// Variance of the 3x3 Laplacian response over the grayscale image, the
/// classical focus measure. Blurry images score lower because blurring
/// flattens local second derivatives.
pub fn laplacian_sharpness(img: &ImageRgb) -> Result<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
        });
    }
    let mut gray = Vec::with_capacity(w * h);
    for px in img.pixels().chunks_exact(3) {
        gray.push((px[0] as f64 + px[1] as f64 + px[2] as f64) / (3.0 * 255.0));
    }
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for y in 1..h - 1 {
        let row = y * w;
        for x in 1..w - 1 {
            let i = row + x;
            let response = gray[i - 1] + gray[i + 1] + gray[i - w] + gray[i + w] - 4.0 * gray[i];
            sum += response;
            sum_sq += response * response;
        }
    }
    let n = ((w - 2) * (h - 2)) as f64;
    let mean = sum / n;
    Ok((sum_sq / n - mean * mean).max(0.0))
}

/// The zero-dependency baseline: calibrated variance-of-Laplacian focus
/// measure.
#[derive(Debug, Clone, Copy)]
pub struct SharpnessScorer {
    calibration: LogisticCalibration,
}

impl SharpnessScorer {
    pub fn new(calibration: LogisticCalibration) -> Self {
        Self { calibration }
    }

    pub fn calibration(&self) -> LogisticCalibration {
        self.calibration
    }
}

impl QualityScorer for SharpnessScorer {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        Ok(logistic_map(laplacian_sharpness(img)?, &self.calibration))
    }
}

/// Wrapper that counts how many times the inner scorer is invoked, for
/// auditing that drivers make exactly the expected number of calls.
pub struct CountingScorer<S> {
    inner: S,
    calls: AtomicU64,
}

impl<S> CountingScorer<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<S: QualityScorer> QualityScorer for CountingScorer<S> {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(img)
    }
}

impl<S: QualityScorer + ?Sized> QualityScorer for &S {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        (**self).score(img)
    }
}

impl<S: QualityScorer + ?Sized> QualityScorer for std::sync::Arc<S> {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        (**self).score(img)
    }
}

impl QualityScorer for Box<dyn QualityScorer> {
    fn score(&self, img: &ImageRgb) -> Result<f64> {
        (**self).score(img)
    }
}
