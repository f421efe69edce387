//! Manifest construction, pair-aware split planning, batch ordering, class
//! weighting, and experiment-plan emission.
//!
//! A manifest is a list of [`SampleRecord`]s; on disk it is line-delimited
//! JSON, one record per line. Pairing is explicit: the two versions of one
//! specimen share a `pair_id`, and every planning operation treats a pair
//! as an indivisible unit unless the strategy says otherwise.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{synthesize_dark_edges, ImageRgb, VignetteParams};
use crate::Label;

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    DarkEdge,
    Distractor,
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub pair_id: Option<String>,
    pub label: Label,
    pub origin: Origin,
    pub path: PathBuf,
}

/// How pairs are distributed across folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Both members of a pair land in the same fold.
    Sameidx,
    /// The members of a pair are forced into different folds.
    Diffidx,
}

impl SplitStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitStrategy::Sameidx => "sameidx",
            SplitStrategy::Diffidx => "diffidx",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sameidx" => Ok(SplitStrategy::Sameidx),
            "diffidx" => Ok(SplitStrategy::Diffidx),
            other => Err(Error::InvalidConfig(format!(
                "unknown split strategy {other:?}, expected sameidx or diffidx"
            ))),
        }
    }
}

/// How records are ordered before batching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleMode {
    /// Keep manifest order.
    None,
    /// Permute individual records.
    Normal,
    /// Permute pairs, keeping both members adjacent.
    Pair,
}

impl ShuffleMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ShuffleMode::None => "none",
            ShuffleMode::Normal => "normal",
            ShuffleMode::Pair => "pair",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ShuffleMode::None),
            "normal" => Ok(ShuffleMode::Normal),
            "pair" => Ok(ShuffleMode::Pair),
            other => Err(Error::InvalidConfig(format!(
                "unknown shuffle mode {other:?}, expected none, normal, or pair"
            ))),
        }
    }
}

/// Fold assignment for every sample of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    fold: usize,
    sample_id: String,
}

impl SplitPlan {
    pub fn fold_of(&self, sample_id: &str) -> Option<usize> {
        self.assignment.get(sample_id).copied()
    }

    /// Sample ids of one fold, in assignment-map order.
    pub fn fold_members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// One `{fold, sample_id}` object per line, ordered by sample id.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for (sample_id, fold) in &self.assignment {
            let row = SplitRow {
                fold: *fold,
                sample_id: sample_id.clone(),
            };
            out.extend_from_slice(serde_json::to_string(&row).expect("plain struct").as_bytes());
            out.push(b'\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Hyperparameter plan consumed by an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub patience_epochs: usize,
    pub k_folds: usize,
    pub validation_fraction: f64,
    pub class_weights: BTreeMap<Label, f64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let mut class_weights = BTreeMap::new();
        class_weights.insert(Label::Positive, 0.5);
        class_weights.insert(Label::Negative, 0.5);
        Self {
            learning_rate: 1e-4,
            momentum: 0.9,
            batch_size: 16,
            patience_epochs: 10,
            k_folds: 5,
            validation_fraction: 0.15,
            class_weights,
        }
    }
}

impl ExperimentPlan {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, format!("{}\n", self.to_json_line())).map_err(|e| Error::io(path, e))
    }
}

/// Optional overrides applied on top of the plan defaults.
#[derive(Debug, Clone, Default)]
pub struct PlanOverrides {
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience_epochs: Option<usize>,
    pub k_folds: Option<usize>,
    pub validation_fraction: Option<f64>,
    pub class_weights: Option<BTreeMap<Label, f64>>,
}

/// Fill an [`ExperimentPlan`] from defaults plus overrides.
pub fn emit_experiment_plan(overrides: &PlanOverrides) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::default();
    if let Some(v) = overrides.learning_rate {
        plan.learning_rate = v;
    }
    if let Some(v) = overrides.momentum {
        plan.momentum = v;
    }
    if let Some(v) = overrides.batch_size {
        plan.batch_size = v;
    }
    if let Some(v) = overrides.patience_epochs {
        plan.patience_epochs = v;
    }
    if let Some(v) = overrides.k_folds {
        plan.k_folds = v;
    }
    if let Some(v) = overrides.validation_fraction {
        plan.validation_fraction = v;
    }
    if let Some(v) = &overrides.class_weights {
        plan.class_weights = v.clone();
    }
    if !(plan.learning_rate > 0.0 && plan.learning_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning_rate must be positive, got {}",
            plan.learning_rate
        )));
    }
    if !(0.0..1.0).contains(&plan.momentum) {
        return Err(Error::InvalidConfig(format!(
            "momentum must lie in [0,1), got {}",
            plan.momentum
        )));
    }
    if plan.batch_size == 0 || plan.patience_epochs == 0 {
        return Err(Error::InvalidConfig(
            "batch_size and patience_epochs must be positive".to_string(),
        ));
    }
    if plan.k_folds < 2 {
        return Err(Error::InvalidFoldCount(plan.k_folds));
    }
    if !(plan.validation_fraction > 0.0 && plan.validation_fraction < 1.0) {
        return Err(Error::InvalidFraction(plan.validation_fraction));
    }
    let total: f64 = plan.class_weights.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "class weights must sum to 1, got {total}"
        )));
    }
    Ok(plan)
}

/// Write a manifest as line-delimited JSON.
pub fn write_manifest(records: &[SampleRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        writer.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Read a line-delimited manifest, reporting the offending line on parse
/// errors. Blank lines are ignored.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::ManifestParse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Build a quality-gate manifest from two directories whose files match by
/// file name: one high-quality and one low-quality version per specimen.
/// Matched names share a pair_id; high-directory files are labeled
/// positive, low-directory files negative.
pub fn build_paired_manifest(high_dir: impl AsRef<Path>, low_dir: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let high_dir = high_dir.as_ref();
    let low_dir = low_dir.as_ref();
    let high: BTreeMap<String, PathBuf> = list_files(high_dir)?
        .into_iter()
        .map(|p| (file_name(&p), p))
        .collect();
    let low: BTreeMap<String, PathBuf> = list_files(low_dir)?
        .into_iter()
        .map(|p| (file_name(&p), p))
        .collect();
    let orphans: Vec<String> = high
        .keys()
        .filter(|n| !low.contains_key(*n))
        .chain(low.keys().filter(|n| !high.contains_key(*n)))
        .cloned()
        .collect();
    if !orphans.is_empty() {
        return Err(Error::UnmatchedBasenames { orphans });
    }
    let mut records = Vec::with_capacity(high.len() * 2);
    for (name, high_path) in &high {
        records.push(SampleRecord {
            sample_id: format!("high__{name}"),
            pair_id: Some(name.clone()),
            label: Label::Positive,
            origin: Origin::Original,
            path: high_path.clone(),
        });
        records.push(SampleRecord {
            sample_id: format!("low__{name}"),
            pair_id: Some(name.clone()),
            label: Label::Negative,
            origin: Origin::Original,
            path: low[name].clone(),
        });
    }
    Ok(records)
}

/// Result of building a validity-gate manifest: the records plus any
/// distractor files that had to be skipped.
#[derive(Debug, Clone)]
pub struct ValidityManifest {
    pub records: Vec<SampleRecord>,
    pub skipped_distractors: Vec<PathBuf>,
}

/// Build the validity-gate manifest: every cell record (re-labeled
/// positive), a dark-edge variant synthesized for each of them (written as
/// PNGs under `output_dir`), and one negative record per readable file in
/// `distractor_dir`. Unreadable distractor files are skipped with a
/// warning and reported.
pub fn build_validity_manifest(
    cell_records: &[SampleRecord],
    distractor_dir: impl AsRef<Path>,
    dark_edge_params: &VignetteParams,
    output_dir: impl AsRef<Path>,
) -> Result<ValidityManifest> {
    let output_dir = output_dir.as_ref();
    dark_edge_params.validate()?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut records = Vec::with_capacity(cell_records.len() * 2);
    for record in cell_records {
        records.push(SampleRecord {
            label: Label::Positive,
            ..record.clone()
        });
    }
    for (i, record) in cell_records.iter().enumerate() {
        let img = ImageRgb::from_path(&record.path)?;
        let dark = synthesize_dark_edges(&img, dark_edge_params)?;
        let out_path = output_dir.join(format!("dark__{i:05}.png"));
        dark.save_png(&out_path)?;
        records.push(SampleRecord {
            sample_id: format!("dark__{}", record.sample_id),
            pair_id: record.pair_id.as_ref().map(|p| format!("dark__{p}")),
            label: Label::Positive,
            origin: Origin::DarkEdge,
            path: out_path,
        });
    }
    let mut skipped = Vec::new();
    for path in list_files(distractor_dir.as_ref())? {
        if let Err(e) = image::image_dimensions(&path) {
            log::warn!("skipping unreadable distractor {}: {e}", path.display());
            skipped.push(path);
            continue;
        }
        records.push(SampleRecord {
            sample_id: format!("distractor__{}", file_name(&path)),
            pair_id: None,
            label: Label::Negative,
            origin: Origin::Distractor,
            path,
        });
    }
    Ok(ValidityManifest {
        records,
        skipped_distractors: skipped,
    })
}

/// A dealing unit: one pair (two record indices) or one singleton.
struct Unit {
    members: Vec<usize>,
}

/// Group records into pairs and singletons in first-appearance order,
/// enforcing unique sample ids and exactly-two-member pairs.
fn group_units(records: &[SampleRecord]) -> Result<Vec<Unit>> {
    let mut seen: HashSet<&str> = HashSet::new();
    for record in records {
        if !seen.insert(&record.sample_id) {
            return Err(Error::DuplicateSampleId(record.sample_id.clone()));
        }
    }
    let mut units: Vec<Unit> = Vec::new();
    let mut pair_slot: HashMap<&str, usize> = HashMap::new();
    for (i, record) in records.iter().enumerate() {
        match &record.pair_id {
            None => units.push(Unit { members: vec![i] }),
            Some(pair_id) => {
                if let Some(&slot) = pair_slot.get(pair_id.as_str()) {
                    units[slot].members.push(i);
                } else {
                    pair_slot.insert(pair_id, units.len());
                    units.push(Unit { members: vec![i] });
                }
            }
        }
    }
    for (pair_id, &slot) in &pair_slot {
        let count = units[slot].members.len();
        if count != 2 {
            return Err(Error::MalformedPair {
                pair_id: (*pair_id).to_string(),
                count,
            });
        }
    }
    Ok(units)
}

/// Plan a k-fold split honoring the pair constraint of the strategy.
///
/// Sameidx shuffles dealing units (pairs and singletons) and deals them
/// round-robin, so fold sizes differ by at most one unit. Diffidx deals the
/// first member of every shuffled pair round-robin and sends the partner to
/// a seeded uniform choice among the other k-1 folds.
pub fn plan_kfold(
    records: &[SampleRecord],
    k: usize,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::InvalidFoldCount(k));
    }
    let mut units = group_units(records)?;
    if strategy == SplitStrategy::Diffidx {
        if let Some(unpaired) = units.iter().flat_map(|u| &u.members).find(|&&i| records[i].pair_id.is_none()) {
            return Err(Error::StrategyInapplicable(format!(
                "diffidx requires every record paired, but {} has no pair_id",
                records[*unpaired].sample_id
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let mut assignment = BTreeMap::new();
    match strategy {
        SplitStrategy::Sameidx => {
            for (i, unit) in units.iter().enumerate() {
                for &m in &unit.members {
                    assignment.insert(records[m].sample_id.clone(), i % k);
                }
            }
        }
        SplitStrategy::Diffidx => {
            for (i, unit) in units.iter().enumerate() {
                let mut members = unit.members.clone();
                if rng.random_range(0..2) == 1 {
                    members.swap(0, 1);
                }
                let first = i % k;
                let partner = (first + rng.random_range(1..k)) % k;
                assignment.insert(records[members[0]].sample_id.clone(), first);
                assignment.insert(records[members[1]].sample_id.clone(), partner);
            }
        }
    }
    Ok(SplitPlan {
        k,
        assignment,
        strategy,
        seed,
    })
}

/// Split off a pair-respecting validation set: the held-out share of
/// dealing units is `fraction`, rounded half-up. Both returned lists keep
/// the manifest's relative order.
pub fn holdout_validation(
    train_records: &[SampleRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let mut units = group_units(train_records)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    let held = (fraction * units.len() as f64 + 0.5).floor() as usize;
    let mut in_validation = vec![false; train_records.len()];
    for unit in &units[..held] {
        for &m in &unit.members {
            in_validation[m] = true;
        }
    }
    let mut train = Vec::with_capacity(train_records.len());
    let mut validation = Vec::new();
    for (i, record) in train_records.iter().enumerate() {
        if in_validation[i] {
            validation.push(record.clone());
        } else {
            train.push(record.clone());
        }
    }
    Ok((train, validation))
}

/// Order records into batches under the shuffle mode. Pair mode lays out
/// shuffled pairs first (members adjacent, so an even batch size keeps
/// every pair inside one batch) and appends shuffled singletons at the end.
/// The final batch may be short.
pub fn order_batches(
    records: &[SampleRecord],
    batch_size: usize,
    mode: ShuffleMode,
    seed: u64,
) -> Result<Vec<Vec<SampleRecord>>> {
    if batch_size == 0 {
        return Err(Error::InvalidBatchConfig(
            "batch size must be at least 1".to_string(),
        ));
    }
    let order: Vec<usize> = match mode {
        ShuffleMode::None => (0..records.len()).collect(),
        ShuffleMode::Normal => {
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
        ShuffleMode::Pair => {
            if !batch_size.is_multiple_of(2) {
                return Err(Error::InvalidBatchConfig(format!(
                    "pair mode needs an even batch size, got {batch_size}"
                )));
            }
            let units = group_units(records)?;
            let (mut pairs, mut singletons): (Vec<Unit>, Vec<Unit>) =
                units.into_iter().partition(|u| u.members.len() == 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            pairs.shuffle(&mut rng);
            singletons.shuffle(&mut rng);
            pairs
                .iter()
                .chain(&singletons)
                .flat_map(|u| u.members.iter().copied())
                .collect()
        }
    };
    Ok(order
        .chunks(batch_size)
        .map(|chunk| chunk.iter().map(|&i| records[i].clone()).collect())
        .collect())
}

/// Inverse-frequency class weights normalized to sum 1.
pub fn class_weights(records: &[SampleRecord]) -> Result<BTreeMap<Label, f64>> {
    let mut counts: BTreeMap<Label, u64> = BTreeMap::new();
    for record in records {
        *counts.entry(record.label).or_insert(0) += 1;
    }
    for label in [Label::Positive, Label::Negative] {
        if counts.get(&label).copied().unwrap_or(0) == 0 {
            return Err(Error::DegenerateManifest(format!(
                "no {label} records, class weighting needs both classes"
            )));
        }
    }
    let inverse_total: f64 = counts.values().map(|&c| 1.0 / c as f64).sum();
    Ok(counts
        .into_iter()
        .map(|(label, c)| (label, (1.0 / c as f64) / inverse_total))
        .collect())
}
