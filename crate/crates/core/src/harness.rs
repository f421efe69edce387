//! Evaluation drivers: the gate runner, the strategy comparison, the
//! crop-size sweep, and the cross-validation loop.
//!
//! Every driver is a deterministic function of (manifest, scorer, config,
//! seed). Per-image randomness is derived by hashing the run seed with the
//! sample id, so skipping an unreadable image never shifts another image's
//! crops, and worker count affects wall clock only.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, decide, PatchScore, StrategyId, ALL_STRATEGIES};
use crate::classifier::{
    laplacian_sharpness, LogisticCalibration, OnnxScorer, QualityScorer, SharpnessScorer,
};
use crate::datasets::{plan_kfold, order_batches, SampleRecord, ShuffleMode, SplitPlan, SplitStrategy};
use crate::error::{Error, Result};
use crate::imaging::{random_crop, rgb_channel_variance, saturation_variance, ImageRgb};
use crate::metrics::{accumulate, compute_metrics, fold_summary, MetricSet, MetricsSummary};
use crate::parallel::Executor;
use crate::slicing::{extract_fragment, slice_grid, EdgeMode};
use crate::Label;

/// Which scorer backend a run uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScorerSpec {
    /// Calibrated variance-of-Laplacian sharpness; needs no model file.
    Baseline,
    /// Externally trained model loaded from this file.
    Model(PathBuf),
}

/// Everything a gate run needs besides the scorer itself.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest_path: PathBuf,
    pub scorer: ScorerSpec,
    pub strategy: StrategyId,
    pub patch_size: u32,
    pub edge_mode: EdgeMode,
    pub crop_size: Option<u32>,
    pub seed: u64,
    pub threshold: f64,
    pub workers: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidPatchSize);
        }
        if self.crop_size == Some(0) {
            return Err(Error::InvalidConfig("crop size must be at least 1".to_string()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in [0,1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One line of the per-image decision log. Deliberately carries no timing,
/// so logs are byte-identical across worker counts and machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub sample_id: String,
    pub label: Label,
    pub probability: f64,
    pub decision: Label,
    pub fragments: usize,
}

/// Everything one gate run produces.
#[derive(Debug, Clone)]
pub struct GateReport {
    pub summary: MetricsSummary,
    pub decisions: Vec<DecisionRecord>,
    pub skipped: Vec<PathBuf>,
    pub total_seconds: f64,
    pub image_seconds_mean: f64,
    pub image_seconds_std: f64,
}

impl GateReport {
    pub fn metrics(&self) -> MetricSet {
        self.summary.folds[0]
    }
}

/// Serialize decision records as line-delimited JSON.
pub fn decision_log_string(decisions: &[DecisionRecord]) -> String {
    let mut out = String::new();
    for d in decisions {
        out.push_str(&serde_json::to_string(d).expect("plain struct"));
        out.push('\n');
    }
    out
}

pub fn write_decision_log(decisions: &[DecisionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, decision_log_string(decisions)).map_err(|e| Error::io(path, e))
}

/// 64-bit FNV-1a over the base seed and the sample id, used to derive
/// per-image crop seeds that do not depend on evaluation order.
fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in base.to_le_bytes().into_iter().chain(tag.bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Build the scorer a config asks for. The baseline calibrates itself on
/// the manifest: raw sharpness per readable image, midpoint and scale from
/// the two class medians.
pub fn resolve_scorer(config: &RunConfig, records: &[SampleRecord]) -> Result<Box<dyn QualityScorer>> {
    match &config.scorer {
        ScorerSpec::Model(path) => Ok(Box::new(OnnxScorer::load(path)?)),
        ScorerSpec::Baseline => {
            let mut positive = Vec::new();
            let mut negative = Vec::new();
            for record in records {
                let img = match ImageRgb::from_path(&record.path) {
                    Ok(img) => img,
                    Err(e) => {
                        log::warn!("calibration skips {}: {e}", record.path.display());
                        continue;
                    }
                };
                let raw = laplacian_sharpness(&img)?;
                match record.label {
                    Label::Positive => positive.push(raw),
                    Label::Negative => negative.push(raw),
                }
            }
            let calibration = LogisticCalibration::fit(&positive, &negative)?;
            Ok(Box::new(SharpnessScorer::new(calibration)))
        }
    }
}

struct ScoredImage {
    scores: Vec<PatchScore>,
    seconds: f64,
}

fn score_image(
    img: &ImageRgb,
    record: &SampleRecord,
    config: &RunConfig,
    scorer: &dyn QualityScorer,
    executor: &Executor,
) -> Result<ScoredImage> {
    let started = Instant::now();
    let image_seed = derive_seed(config.seed, &record.sample_id);
    let source;
    let img = if let Some(crop_size) = config.crop_size {
        source = random_crop(img, crop_size, image_seed)?;
        &source
    } else {
        img
    };
    let scores = if config.strategy == StrategyId::Control {
        let crop_seed = derive_seed(image_seed, "control");
        let crop = random_crop(img, config.patch_size.min(img.width()).min(img.height()), crop_seed)?;
        let region = crate::imaging::Region::full(&crop);
        let score = PatchScore {
            probability: scorer.score(&crop)?,
            rgb_variance: rgb_channel_variance(&crop, region)?,
            saturation_variance: saturation_variance(&crop, region)?,
            valid_fraction: 1.0,
        };
        vec![score]
    } else {
        let specs = slice_grid(img.width(), img.height(), config.patch_size, config.edge_mode)?;
        let results: Vec<Result<PatchScore>> = executor.map(&specs, |spec| {
            let fragment = extract_fragment(img, spec, config.edge_mode)?;
            // weights reflect real pixels only, so statistics come from the
            // source region rather than the padded patch
            Ok(PatchScore {
                probability: scorer.score(&fragment)?,
                rgb_variance: rgb_channel_variance(img, spec.source)?,
                saturation_variance: saturation_variance(img, spec.source)?,
                valid_fraction: spec.valid_fraction,
            })
        });
        results.into_iter().collect::<Result<Vec<PatchScore>>>()?
    };
    Ok(ScoredImage {
        scores,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Evaluate one gate over a manifest with an already resolved scorer.
///
/// Unreadable images are logged, excluded from metrics, and reported in
/// `skipped`; any scorer failure aborts the run.
pub fn run_gate_with(
    config: &RunConfig,
    records: &[SampleRecord],
    scorer: &dyn QualityScorer,
) -> Result<GateReport> {
    config.validate()?;
    let executor = Executor::new(config.workers)?;
    let run_started = Instant::now();
    let mut decisions = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut predictions = Vec::with_capacity(records.len());
    let mut skipped = Vec::new();
    let mut image_seconds = Vec::with_capacity(records.len());
    for record in records {
        let img = match ImageRgb::from_path(&record.path) {
            Ok(img) => img,
            Err(e @ (Error::ImageCodec { .. } | Error::Io { .. })) => {
                log::warn!("excluding unreadable image: {e}");
                skipped.push(record.path.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let scored = score_image(&img, record, config, scorer, &executor)?;
        let probability = aggregate(config.strategy, &scored.scores)?;
        let decision = decide(probability, config.threshold);
        decisions.push(DecisionRecord {
            sample_id: record.sample_id.clone(),
            label: record.label,
            probability,
            decision,
            fragments: scored.scores.len(),
        });
        labels.push(record.label);
        predictions.push(decision);
        image_seconds.push(scored.seconds);
    }
    let counts = accumulate(&labels, &predictions)?;
    let metrics = compute_metrics(&counts)?;
    let total_seconds = run_started.elapsed().as_secs_f64();
    let mut summary = fold_summary(&[metrics])?;
    summary.fold_seconds = vec![total_seconds];
    let n = image_seconds.len() as f64;
    let mean = image_seconds.iter().sum::<f64>() / n;
    let std = if image_seconds.len() < 2 {
        0.0
    } else {
        (image_seconds.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(GateReport {
        summary,
        decisions,
        skipped,
        total_seconds,
        image_seconds_mean: mean,
        image_seconds_std: std,
    })
}

/// Load the manifest, resolve the scorer, and evaluate the gate.
pub fn run_gate(config: &RunConfig) -> Result<GateReport> {
    let records = crate::datasets::read_manifest(&config.manifest_path)?;
    let scorer = resolve_scorer(config, &records)?;
    run_gate_with(config, &records, scorer.as_ref())
}

/// One strategy's row in the comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: StrategyId,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub total_seconds: f64,
    pub avg_seconds_per_image: f64,
}

/// Run every strategy on identical inputs and seed.
pub fn compare_strategies(
    config: &RunConfig,
    records: &[SampleRecord],
    scorer: &dyn QualityScorer,
) -> Result<Vec<(StrategyRow, GateReport)>> {
    let mut rows = Vec::with_capacity(ALL_STRATEGIES.len());
    for strategy in ALL_STRATEGIES {
        let run_config = RunConfig {
            strategy,
            ..config.clone()
        };
        let report = run_gate_with(&run_config, records, scorer)?;
        let m = report.metrics();
        rows.push((
            StrategyRow {
                strategy,
                accuracy: m.accuracy,
                f1: m.f1,
                precision: m.precision,
                recall: m.recall,
                total_seconds: report.total_seconds,
                avg_seconds_per_image: report.image_seconds_mean,
            },
            report,
        ));
    }
    Ok(rows)
}

/// One crop size's row in the sweep report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CropSweepRow {
    pub crop_size: u32,
    pub accuracy: f64,
    pub f1: f64,
}

/// Evaluate a fixed scorer at each crop size with seeded crops.
pub fn sweep_crop_sizes(
    config: &RunConfig,
    records: &[SampleRecord],
    scorer: &dyn QualityScorer,
    sizes: &[u32],
) -> Result<Vec<CropSweepRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let run_config = RunConfig {
            crop_size: Some(size),
            ..config.clone()
        };
        let report = run_gate_with(&run_config, records, scorer)?;
        let m = report.metrics();
        rows.push(CropSweepRow {
            crop_size: size,
            accuracy: m.accuracy,
            f1: m.f1,
        });
    }
    Ok(rows)
}

/// Cross-validation output: the fold plan (for an external trainer), the
/// per-fold gate reports, and the cross-fold summary.
#[derive(Debug)]
pub struct CvReport {
    pub plan: SplitPlan,
    pub fold_reports: Vec<GateReport>,
    pub summary: MetricsSummary,
}

/// Plan k folds and evaluate the scorer on each held-out fold.
///
/// Scoring only: training happens outside, against the emitted plan. The
/// shuffle mode fixes the evaluation order of each fold's records, which
/// shapes the decision log but never the metrics.
pub fn run_cv(
    config: &RunConfig,
    records: &[SampleRecord],
    scorer: &dyn QualityScorer,
    k: usize,
    split: SplitStrategy,
    shuffle: ShuffleMode,
) -> Result<CvReport> {
    config.validate()?;
    let plan = plan_kfold(records, k, split, config.seed)?;
    let mut fold_reports = Vec::with_capacity(k);
    let mut fold_metrics = Vec::with_capacity(k);
    let mut fold_seconds = Vec::with_capacity(k);
    for fold in 0..k {
        let members: Vec<SampleRecord> = records
            .iter()
            .filter(|r| plan.fold_of(&r.sample_id) == Some(fold))
            .cloned()
            .collect();
        if members.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "fold {fold} received no records; use fewer folds for this manifest"
            )));
        }
        let batch = members.len().next_multiple_of(2).max(2);
        let ordered: Vec<SampleRecord> = order_batches(&members, batch, shuffle, config.seed)?
            .into_iter()
            .flatten()
            .collect();
        let report = run_gate_with(config, &ordered, scorer)?;
        fold_metrics.push(report.metrics());
        fold_seconds.push(report.total_seconds);
        fold_reports.push(report);
    }
    let mut summary = fold_summary(&fold_metrics)?;
    summary.fold_seconds = fold_seconds;
    Ok(CvReport {
        plan,
        fold_reports,
        summary,
    })
}

fn format_cell(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(std) => format!("{mean:.4} ± {std:.4}"),
        None => format!("{mean:.4}"),
    }
}

/// Render labeled metric summaries as a fixed-width table with the columns
/// Accuracy, F1 Score, Precision, Recall, Total Time, Avg. Time.
pub fn render_metrics_table(rows: &[(String, &MetricsSummary, f64, f64)]) -> String {
    let headers = ["", "Accuracy", "F1 Score", "Precision", "Recall", "Total Time", "Avg. Time"];
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|h| h.to_string()).collect()];
    for (name, summary, total_seconds, avg_seconds) in rows {
        let multi = summary.folds.len() > 1;
        let std = |v: f64| if multi { Some(v) } else { None };
        table.push(vec![
            name.clone(),
            format_cell(summary.mean.accuracy, std(summary.std.accuracy)),
            format_cell(summary.mean.f1, std(summary.std.f1)),
            format_cell(summary.mean.precision, std(summary.std.precision)),
            format_cell(summary.mean.recall, std(summary.std.recall)),
            format!("{total_seconds:.3}s"),
            format!("{:.6}s", avg_seconds),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Table over strategy-comparison rows.
pub fn render_comparison_table(rows: &[(StrategyRow, GateReport)]) -> String {
    let table_rows: Vec<(String, &MetricsSummary, f64, f64)> = rows
        .iter()
        .map(|(row, report)| {
            (
                row.strategy.to_string(),
                &report.summary,
                row.total_seconds,
                row.avg_seconds_per_image,
            )
        })
        .collect();
    render_metrics_table(&table_rows)
}
