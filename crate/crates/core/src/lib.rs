//! Image-quality and input-validity gating for microscopy imaging
//! pipelines.
//!
//! The crate slices an image into a grid of fragments, scores every
//! fragment with a pluggable scorer, and combines the fragment
//! probabilities into one image-level decision under seven weighting
//! strategies. Around that core sit dataset utilities (pair-aware manifest
//! construction, k-fold split planning, batch ordering, class weighting),
//! a dark-edge artifact generator, binary-classification metrics, and the
//! evaluation drivers wired into the `cytogate` CLI.

pub mod aggregation;
pub mod classifier;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod metrics;
pub mod parallel;
pub mod selection;
pub mod slicing;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Binary class label shared by manifests, decisions, and metrics. For the
/// quality gate positive means high quality; for the validity gate it means
/// a valid cell image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(Error::InvalidConfig(format!(
                "unknown label {other:?}, expected positive or negative"
            ))),
        }
    }

    pub fn opposite(&self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
