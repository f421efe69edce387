use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cytogate::aggregation::StrategyId;
use cytogate::datasets::{self, PlanOverrides, SplitStrategy};
use cytogate::harness::{
    self, compare_strategies, render_comparison_table, render_metrics_table, resolve_scorer,
    run_gate_with, sweep_crop_sizes, RunConfig, ScorerSpec,
};
use cytogate::imaging::{synthesize_dark_edges, ImageRgb, VignetteParams};
use cytogate::selection::{rank_classes, LogitMatrix};
use cytogate::slicing::EdgeMode;

#[derive(Parser)]
#[command(name = "cytogate")]
#[command(about = "Quality and validity gates for microscopy image pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Apply a dark-edge vignette to an image
    SynthDarkEdges(SynthDarkEdgesArgs),
    /// Build a manifest from image directories
    BuildManifest(BuildManifestArgs),
    /// Plan a pair-aware k-fold split for a manifest
    PlanSplit(PlanSplitArgs),
    /// Evaluate one gate over a manifest
    RunGate(RunGateArgs),
    /// Evaluate every weighting strategy on identical inputs
    CompareStrategies(CompareStrategiesArgs),
    /// Evaluate a scorer across crop sizes
    SweepCrops(SweepCropsArgs),
    /// Rank classes by mean logit over a probe matrix
    RankClasses(RankClassesArgs),
    /// Emit a training plan for an external trainer
    EmitPlan(EmitPlanArgs),
}

#[derive(Args)]
struct VignetteArgs {
    /// Fraction of the half-minimum dimension kept fully lit
    #[arg(long, default_value_t = 0.85)]
    radius_fraction: f64,

    /// Width of the linear falloff band, as a fraction of that radius unit
    #[arg(long, default_value_t = 0.05)]
    feather_fraction: f64,

    /// Brightness multiplier far outside the lit circle, 0 is pure black
    #[arg(long, default_value_t = 0.0)]
    floor_level: f64,
}

impl VignetteArgs {
    fn params(&self, seed: u64) -> VignetteParams {
        VignetteParams {
            radius_fraction: self.radius_fraction,
            feather_fraction: self.feather_fraction,
            floor_level: self.floor_level,
            seed,
        }
    }
}

#[derive(Args)]
struct SynthDarkEdgesArgs {
    /// Input image
    input: PathBuf,

    #[command(flatten)]
    vignette: VignetteArgs,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output PNG path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildManifestArgs {
    /// Directory of high-quality (positive) images
    #[arg(long)]
    high_dir: PathBuf,

    /// Directory of low-quality (negative) images, matched by basename
    #[arg(long)]
    low_dir: PathBuf,

    /// Directory of non-cell distractor images; switches to a validity
    /// manifest with generated dark-edge variants
    #[arg(long)]
    distractor_dir: Option<PathBuf>,

    /// Where generated dark-edge images are written (validity manifests)
    #[arg(long)]
    dark_edge_dir: Option<PathBuf>,

    #[command(flatten)]
    vignette: VignetteArgs,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Manifest output path (line-delimited records)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanSplitArgs {
    /// Manifest to split
    #[arg(long)]
    manifest: PathBuf,

    /// Fold count
    #[arg(long, default_value_t = 5)]
    k: usize,

    /// Split strategy: sameidx or diffidx
    #[arg(long, default_value = "sameidx")]
    split: String,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Split plan output path (line-delimited fold assignments)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GateArgs {
    /// Manifest of labeled images
    #[arg(long)]
    manifest: PathBuf,

    /// Scorer backend: baseline or model
    #[arg(long, default_value = "baseline")]
    scorer: String,

    /// Model file, required when --scorer model
    #[arg(long)]
    model: Option<PathBuf>,

    /// Fragment grid patch size in pixels
    #[arg(long, default_value_t = 500)]
    patch_size: u32,

    /// Edge handling: drop_partial or pad_partial
    #[arg(long, default_value = "pad_partial")]
    edge_mode: String,

    /// Optional seeded square crop applied before slicing
    #[arg(long)]
    crop_size: Option<u32>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Probability threshold for a positive decision
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,

    /// Worker threads for fragment scoring, 0 picks automatically
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl GateArgs {
    fn config(&self, strategy: StrategyId) -> Result<RunConfig> {
        let scorer = match self.scorer.as_str() {
            "baseline" => {
                if self.model.is_some() {
                    bail!("--model is only valid with --scorer model");
                }
                ScorerSpec::Baseline
            }
            "model" => match &self.model {
                Some(path) => ScorerSpec::Model(path.clone()),
                None => bail!("--scorer model requires --model"),
            },
            other => bail!("unknown scorer {other:?}, expected baseline or model"),
        };
        Ok(RunConfig {
            manifest_path: self.manifest.clone(),
            scorer,
            strategy,
            patch_size: self.patch_size,
            edge_mode: EdgeMode::parse(&self.edge_mode)?,
            crop_size: self.crop_size,
            seed: self.seed,
            threshold: self.threshold,
            workers: self.workers,
        })
    }
}

#[derive(Args)]
struct RunGateArgs {
    #[command(flatten)]
    gate: GateArgs,

    /// Weighting strategy
    #[arg(long, default_value = "rgb_var")]
    strategy: String,

    /// Decision log output path (line-delimited records)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareStrategiesArgs {
    #[command(flatten)]
    gate: GateArgs,

    /// Report output path (one line-delimited row per strategy)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCropsArgs {
    #[command(flatten)]
    gate: GateArgs,

    /// Weighting strategy
    #[arg(long, default_value = "rgb_var")]
    strategy: String,

    /// Crop sizes to evaluate, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<u32>,

    /// Report output path (one line-delimited row per size)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankClassesArgs {
    /// CSV of logits: header row of class names, one row per probe image
    #[arg(long)]
    logits: PathBuf,

    /// How many classes to keep
    #[arg(long, default_value_t = 3)]
    top_k: usize,

    /// Ranking output path (line-delimited rows)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmitPlanArgs {
    /// Manifest whose class counts fill the plan's class weights
    #[arg(long)]
    manifest: Option<PathBuf>,

    #[arg(long)]
    learning_rate: Option<f64>,

    #[arg(long)]
    momentum: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    patience_epochs: Option<usize>,

    #[arg(long)]
    k_folds: Option<usize>,

    #[arg(long)]
    validation_fraction: Option<f64>,

    /// Plan output path
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_lines(path: &Option<PathBuf>, lines: &str) -> Result<()> {
    match path {
        Some(path) => std::fs::write(path, lines)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(lines.as_bytes())?,
    }
    Ok(())
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

fn cmd_synth_dark_edges(args: SynthDarkEdgesArgs) -> Result<()> {
    let img = ImageRgb::from_path(&args.input)?;
    let out = synthesize_dark_edges(&img, &args.vignette.params(args.seed))?;
    out.save_png(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_build_manifest(args: BuildManifestArgs) -> Result<()> {
    let cells = datasets::build_paired_manifest(&args.high_dir, &args.low_dir)?;
    let records = match &args.distractor_dir {
        None => {
            if args.dark_edge_dir.is_some() {
                bail!("--dark-edge-dir is only valid with --distractor-dir");
            }
            cells
        }
        Some(distractor_dir) => {
            let dark_edge_dir = args
                .dark_edge_dir
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("--distractor-dir requires --dark-edge-dir"))?;
            let manifest = datasets::build_validity_manifest(
                &cells,
                distractor_dir,
                &args.vignette.params(args.seed),
                dark_edge_dir,
            )?;
            if !manifest.skipped_distractors.is_empty() {
                log::warn!(
                    "skipped {} unreadable distractor files",
                    manifest.skipped_distractors.len()
                );
            }
            manifest.records
        }
    };
    datasets::write_manifest(&records, &args.out)?;
    println!("wrote {} records to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_plan_split(args: PlanSplitArgs) -> Result<()> {
    let records = datasets::read_manifest(&args.manifest)?;
    let strategy = SplitStrategy::parse(&args.split)?;
    let plan = datasets::plan_kfold(&records, args.k, strategy, args.seed)?;
    plan.write_jsonl(&args.out)?;
    println!(
        "assigned {} records to {} folds at {}",
        records.len(),
        args.k,
        args.out.display()
    );
    Ok(())
}

fn cmd_run_gate(args: RunGateArgs) -> Result<()> {
    let strategy = StrategyId::parse(&args.strategy)?;
    let config = args.gate.config(strategy)?;
    let records = datasets::read_manifest(&config.manifest_path)?;
    let scorer = resolve_scorer(&config, &records)?;
    let report = run_gate_with(&config, &records, scorer.as_ref())?;
    if let Some(out) = &args.out {
        harness::write_decision_log(&report.decisions, out)?;
    }
    if !report.skipped.is_empty() {
        log::warn!("excluded {} unreadable images", report.skipped.len());
    }
    print!(
        "{}",
        render_metrics_table(&[(
            strategy.to_string(),
            &report.summary,
            report.total_seconds,
            report.image_seconds_mean,
        )])
    );
    Ok(())
}

fn cmd_compare_strategies(args: CompareStrategiesArgs) -> Result<()> {
    let config = args.gate.config(StrategyId::Sum)?;
    let records = datasets::read_manifest(&config.manifest_path)?;
    let scorer = resolve_scorer(&config, &records)?;
    let rows = compare_strategies(&config, &records, scorer.as_ref())?;
    let report_rows: Vec<_> = rows.iter().map(|(row, _)| row.clone()).collect();
    if let Some(out) = &args.out {
        std::fs::write(out, jsonl(&report_rows)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{}", render_comparison_table(&rows));
    Ok(())
}

fn cmd_sweep_crops(args: SweepCropsArgs) -> Result<()> {
    let strategy = StrategyId::parse(&args.strategy)?;
    let config = args.gate.config(strategy)?;
    let records = datasets::read_manifest(&config.manifest_path)?;
    let scorer = resolve_scorer(&config, &records)?;
    let rows = sweep_crop_sizes(&config, &records, scorer.as_ref(), &args.sizes)?;
    let mut table = String::from("Crop Size  Accuracy  F1 Score\n");
    for row in &rows {
        table.push_str(&format!(
            "{:<9}  {:<8.4}  {:<8.4}\n",
            row.crop_size, row.accuracy, row.f1
        ));
    }
    write_lines(&args.out, &jsonl(&rows)?)?;
    if args.out.is_some() {
        print!("{table}");
    }
    Ok(())
}

fn cmd_rank_classes(args: RankClassesArgs) -> Result<()> {
    let matrix = LogitMatrix::from_csv_path(&args.logits)?;
    let ranked = rank_classes(&matrix, args.top_k)?;
    #[derive(serde::Serialize)]
    struct Row<'a> {
        rank: usize,
        class: &'a str,
        mean_logit: f64,
    }
    let rows: Vec<Row> = ranked
        .iter()
        .enumerate()
        .map(|(i, (class, mean))| Row {
            rank: i + 1,
            class,
            mean_logit: *mean,
        })
        .collect();
    write_lines(&args.out, &jsonl(&rows)?)?;
    if args.out.is_some() {
        for row in &rows {
            println!("{:>4}  {:<24}  {:.6}", row.rank, row.class, row.mean_logit);
        }
    }
    Ok(())
}

fn cmd_emit_plan(args: EmitPlanArgs) -> Result<()> {
    let class_weights = match &args.manifest {
        Some(path) => Some(datasets::class_weights(&datasets::read_manifest(path)?)?),
        None => None,
    };
    let overrides = PlanOverrides {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        batch_size: args.batch_size,
        patience_epochs: args.patience_epochs,
        k_folds: args.k_folds,
        validation_fraction: args.validation_fraction,
        class_weights,
    };
    let plan = datasets::emit_experiment_plan(&overrides)?;
    write_lines(&args.out, &format!("{}\n", plan.to_json_line()))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Commands::SynthDarkEdges(args) => cmd_synth_dark_edges(args),
        Commands::BuildManifest(args) => cmd_build_manifest(args),
        Commands::PlanSplit(args) => cmd_plan_split(args),
        Commands::RunGate(args) => cmd_run_gate(args),
        Commands::CompareStrategies(args) => cmd_compare_strategies(args),
        Commands::SweepCrops(args) => cmd_sweep_crops(args),
        Commands::RankClasses(args) => cmd_rank_classes(args),
        Commands::EmitPlan(args) => cmd_emit_plan(args),
    }
}
