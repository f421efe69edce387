//! Combining per-fragment probabilities into one image-level probability.
//!
//! Each strategy maps a fragment's statistics to a non-negative weight; the
//! image probability is the weighted mean of fragment probabilities,
//! accumulated in list order so results are reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Label;

/// The seven weighting strategies. String forms are the contract for CLI
/// arguments and report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    /// Score a single random crop instead of an ensemble.
    Control,
    /// Unweighted mean over fragments.
    Sum,
    /// Weight by the fragment's valid-area fraction.
    SumSize,
    /// Weight by the fragment's RGB channel variance.
    RgbVar,
    /// RGB variance times valid-area fraction.
    RgbVarSize,
    /// Weight by the fragment's saturation variance.
    SatVar,
    /// Saturation variance times valid-area fraction.
    SatVarSize,
}

pub const ALL_STRATEGIES: [StrategyId; 7] = [
    StrategyId::Control,
    StrategyId::Sum,
    StrategyId::SumSize,
    StrategyId::RgbVar,
    StrategyId::RgbVarSize,
    StrategyId::SatVar,
    StrategyId::SatVarSize,
];

impl StrategyId {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyId::Control => "control",
            StrategyId::Sum => "sum",
            StrategyId::SumSize => "sum_size",
            StrategyId::RgbVar => "rgb_var",
            StrategyId::RgbVarSize => "rgb_var_size",
            StrategyId::SatVar => "sat_var",
            StrategyId::SatVarSize => "sat_var_size",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_STRATEGIES
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown strategy {s:?}, expected one of control, sum, sum_size, rgb_var, rgb_var_size, sat_var, sat_var_size"
                ))
            })
    }
}

impl std::fmt::Display for StrategyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fragment's probability together with the statistics that strategies
/// turn into weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchScore {
    pub probability: f64,
    pub rgb_variance: f64,
    pub saturation_variance: f64,
    pub valid_fraction: f64,
}

impl PatchScore {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("probability", self.probability),
            ("rgb_variance", self.rgb_variance),
            ("saturation_variance", self.saturation_variance),
            ("valid_fraction", self.valid_fraction),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidScore(format!("{name} is not finite: {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidScore(format!(
                "probability {} outside [0,1]",
                self.probability
            )));
        }
        if self.rgb_variance < 0.0 || self.saturation_variance < 0.0 {
            return Err(Error::InvalidScore("negative variance".to_string()));
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction <= 1.0) {
            return Err(Error::InvalidScore(format!(
                "valid_fraction {} outside (0,1]",
                self.valid_fraction
            )));
        }
        Ok(())
    }
}

/// The weight one fragment contributes under a strategy.
pub fn fragment_weight(strategy: StrategyId, score: &PatchScore) -> f64 {
    match strategy {
        StrategyId::Control | StrategyId::Sum => 1.0,
        StrategyId::SumSize => score.valid_fraction,
        StrategyId::RgbVar => score.rgb_variance,
        StrategyId::RgbVarSize => score.rgb_variance * score.valid_fraction,
        StrategyId::SatVar => score.saturation_variance,
        StrategyId::SatVarSize => score.saturation_variance * score.valid_fraction,
    }
}

/// Weighted mean of fragment probabilities under the strategy's weights.
///
/// Accumulates in list order. A zero total weight (every fragment uniform,
/// say) falls back to the unweighted mean rather than failing. The result is
/// clamped to the span of the input probabilities, which also makes the
/// all-equal case return the shared value exactly.
pub fn aggregate(strategy: StrategyId, scores: &[PatchScore]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if strategy == StrategyId::Control && scores.len() != 1 {
        return Err(Error::ControlArity { got: scores.len() });
    }
    let mut min_p = f64::INFINITY;
    let mut max_p = f64::NEG_INFINITY;
    let mut weighted = 0.0f64;
    let mut total_weight = 0.0f64;
    let mut plain = 0.0f64;
    for score in scores {
        score.validate()?;
        let w = fragment_weight(strategy, score);
        weighted += w * score.probability;
        total_weight += w;
        plain += score.probability;
        min_p = min_p.min(score.probability);
        max_p = max_p.max(score.probability);
    }
    let combined = if total_weight == 0.0 {
        plain / scores.len() as f64
    } else {
        weighted / total_weight
    };
    Ok(combined.clamp(min_p, max_p))
}

/// Threshold a probability into a binary decision, positive on ties.
pub fn decide(probability: f64, threshold: f64) -> Label {
    debug_assert!((0.0..=1.0).contains(&probability));
    debug_assert!((0.0..=1.0).contains(&threshold));
    if probability >= threshold {
        Label::Positive
    } else {
        Label::Negative
    }
}
