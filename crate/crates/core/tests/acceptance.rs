//! End-to-end acceptance checks. Each test prints one PASS or FAIL line
//! with its elapsed time and enforces its own runtime budget.

mod common;

use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cytogate::aggregation::{aggregate, PatchScore, StrategyId, ALL_STRATEGIES};
use cytogate::datasets::{class_weights, order_batches, plan_kfold, Origin, SampleRecord, ShuffleMode, SplitStrategy};
use cytogate::harness::{resolve_scorer, run_gate_with, RunConfig, ScorerSpec};
use cytogate::imaging::{synthesize_dark_edges, ImageRgb, VignetteParams};
use cytogate::metrics::{compute_metrics, ConfusionCounts};
use cytogate::selection::{rank_classes, LogitMatrix};
use cytogate::slicing::{slice_grid, EdgeMode};
use cytogate::Label;

/// Run one criterion, print its pass/fail line, and enforce its budget.
fn check(name: &str, budget_seconds: f64, body: impl FnOnce()) {
    let started = Instant::now();
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed().as_secs_f64();
    match outcome {
        Ok(()) if elapsed <= budget_seconds => {
            println!("PASS  {name}  ({elapsed:.2}s)");
        }
        Ok(()) => {
            println!("FAIL  {name}  ({elapsed:.2}s, budget {budget_seconds:.0}s)");
            panic!("{name}: exceeded runtime budget");
        }
        Err(cause) => {
            println!("FAIL  {name}  ({elapsed:.2}s)");
            std::panic::resume_unwind(cause);
        }
    }
}

#[test]
fn criterion_slicing_arithmetic() {
    check("slicing arithmetic", 1.0, || {
        let dropped = slice_grid(2592, 1944, 500, EdgeMode::DropPartial).unwrap();
        assert_eq!(dropped.len(), 15);
        assert!(dropped.iter().all(|s| s.valid_fraction == 1.0));

        let padded = slice_grid(2592, 1944, 500, EdgeMode::PadPartial).unwrap();
        assert_eq!(padded.len(), 24);
        let frac = |row: u32, col: u32| {
            padded
                .iter()
                .find(|s| s.grid_row == row && s.grid_col == col)
                .unwrap()
                .valid_fraction
        };
        assert!((frac(0, 5) - 0.184).abs() < 1e-12);
        assert!((frac(3, 0) - 0.888).abs() < 1e-12);
        assert!((frac(3, 5) - 0.163392).abs() < 1e-12);
        assert!(frac(0, 0) == 1.0 && frac(2, 4) == 1.0);
    });
}

/// Neumaier-compensated sum, the extended-precision reference.
fn precise_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        compensation += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + compensation
}

/// Independent restatement of each strategy's weight rule.
fn oracle_weight(strategy: StrategyId, s: &PatchScore) -> f64 {
    match strategy {
        StrategyId::Control | StrategyId::Sum => 1.0,
        StrategyId::SumSize => s.valid_fraction,
        StrategyId::RgbVar => s.rgb_variance,
        StrategyId::RgbVarSize => s.rgb_variance * s.valid_fraction,
        StrategyId::SatVar => s.saturation_variance,
        StrategyId::SatVarSize => s.saturation_variance * s.valid_fraction,
    }
}

fn oracle_aggregate(strategy: StrategyId, scores: &[PatchScore]) -> f64 {
    let total = precise_sum(scores.iter().map(|s| oracle_weight(strategy, s)));
    if total == 0.0 {
        precise_sum(scores.iter().map(|s| s.probability)) / scores.len() as f64
    } else {
        precise_sum(scores.iter().map(|s| oracle_weight(strategy, s) * s.probability)) / total
    }
}

fn random_scores(rng: &mut ChaCha8Rng, len: usize, equal_p: bool, zero_var: bool) -> Vec<PatchScore> {
    let shared = rng.random::<f64>();
    (0..len)
        .map(|_| PatchScore {
            probability: if equal_p { shared } else { rng.random() },
            rgb_variance: if zero_var { 0.0 } else { rng.random::<f64>() * 0.25 },
            saturation_variance: if zero_var { 0.0 } else { rng.random::<f64>() * 0.25 },
            valid_fraction: rng.random_range(0.01..=1.0),
        })
        .collect()
}

#[test]
fn criterion_aggregation_oracle() {
    check("aggregation oracle", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..10_000 {
            let len = rng.random_range(1..=100);
            let equal_p = case % 10 == 0;
            let zero_var = case % 17 == 0;
            let scores = random_scores(&mut rng, len, equal_p, zero_var);
            for strategy in ALL_STRATEGIES {
                if strategy == StrategyId::Control && len != 1 {
                    continue;
                }
                let got = aggregate(strategy, &scores).unwrap();
                let expected = oracle_aggregate(strategy, &scores);
                assert!(
                    (got - expected).abs() <= 1e-9,
                    "case {case} strategy {strategy}: got {got}, oracle {expected}"
                );
                if equal_p {
                    assert_eq!(got, scores[0].probability, "case {case} strategy {strategy}");
                }
            }
        }
    });
}

#[test]
fn criterion_weight_scale_invariance() {
    check("weight scale invariance", 10.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1_000 {
            let len = rng.random_range(1..=100);
            let scores = random_scores(&mut rng, len, false, false);
            for strategy in ALL_STRATEGIES {
                if strategy == StrategyId::Control && len != 1 {
                    continue;
                }
                let base = aggregate(strategy, &scores).unwrap();
                for c in [1e-3, 1.0, 1e3] {
                    let scaled: Vec<PatchScore> = scores
                        .iter()
                        .map(|s| PatchScore {
                            rgb_variance: s.rgb_variance * c,
                            saturation_variance: s.saturation_variance * c,
                            ..*s
                        })
                        .collect();
                    let got = aggregate(strategy, &scaled).unwrap();
                    assert!(
                        (got - base).abs() < 1e-9,
                        "strategy {strategy} c={c}: {got} vs {base}"
                    );
                }
            }
        }
    });
}

fn synthetic_pairs(rng: &mut ChaCha8Rng, pairs: usize, singletons: usize) -> Vec<SampleRecord> {
    let mut records = Vec::with_capacity(pairs * 2 + singletons);
    for i in 0..pairs {
        for (tag, label) in [("high", Label::Positive), ("low", Label::Negative)] {
            records.push(SampleRecord {
                sample_id: format!("{tag}__{i:05}"),
                pair_id: Some(format!("p{i:05}")),
                label,
                origin: Origin::Original,
                path: PathBuf::from("unused.png"),
            });
        }
    }
    for i in 0..singletons {
        records.push(SampleRecord {
            sample_id: format!("solo__{i:05}"),
            pair_id: None,
            label: if rng.random() { Label::Positive } else { Label::Negative },
            origin: Origin::Distractor,
            path: PathBuf::from("unused.png"),
        });
    }
    records
}

#[test]
fn criterion_split_invariants() {
    check("split invariants", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for case in 0..1_000u64 {
            let pairs = rng.random_range(2..=2_000);
            let singletons = if case % 3 == 0 { rng.random_range(0..20) } else { 0 };
            let records = synthetic_pairs(&mut rng, pairs, singletons);
            let k = rng.random_range(2..=7);

            let plan = plan_kfold(&records, k, SplitStrategy::Sameidx, case).unwrap();
            for i in 0..pairs {
                let high = plan.fold_of(&format!("high__{i:05}")).unwrap();
                let low = plan.fold_of(&format!("low__{i:05}")).unwrap();
                assert_eq!(high, low, "sameidx straddle at pair {i}, case {case}");
            }

            let paired = synthetic_pairs(&mut rng, pairs.min(500), 0);
            let plan = plan_kfold(&paired, k, SplitStrategy::Diffidx, case).unwrap();
            for i in 0..pairs.min(500) {
                let high = plan.fold_of(&format!("high__{i:05}")).unwrap();
                let low = plan.fold_of(&format!("low__{i:05}")).unwrap();
                assert_ne!(high, low, "diffidx co-location at pair {i}, case {case}");
            }

            let batch_size = 2 * rng.random_range(1..=8);
            let batches = order_batches(&paired, batch_size, ShuffleMode::Pair, case).unwrap();
            let mut seen = std::collections::HashMap::new();
            for (b, batch) in batches.iter().enumerate() {
                for (pos, record) in batch.iter().enumerate() {
                    seen.insert(record.sample_id.clone(), (b, pos));
                }
            }
            for i in 0..pairs.min(500) {
                let (bh, ph) = seen[&format!("high__{i:05}")];
                let (bl, pl) = seen[&format!("low__{i:05}")];
                assert_eq!(bh, bl, "pair {i} split across batches, case {case}");
                assert_eq!(
                    ph.abs_diff(pl),
                    1,
                    "pair {i} members not adjacent, case {case}"
                );
            }
        }
    });
}

#[test]
fn criterion_class_weights_match_reported_values() {
    check("class weights", 10.0, || {
        let mut records = Vec::new();
        for i in 0..10_400 {
            records.push(SampleRecord {
                sample_id: format!("cell{i}"),
                pair_id: None,
                label: Label::Positive,
                origin: Origin::Original,
                path: PathBuf::from("unused.png"),
            });
        }
        for i in 0..21_234 {
            records.push(SampleRecord {
                sample_id: format!("junk{i}"),
                pair_id: None,
                label: Label::Negative,
                origin: Origin::Distractor,
                path: PathBuf::from("unused.png"),
            });
        }
        let weights = class_weights(&records).unwrap();
        let positive = weights[&Label::Positive];
        let negative = weights[&Label::Negative];
        assert!((positive - 21_234.0 / 31_634.0).abs() < 1e-9);
        assert!((negative - 10_400.0 / 31_634.0).abs() < 1e-9);
        assert_eq!((positive * 100.0).round() / 100.0, 0.67);
        assert_eq!((negative * 100.0).round() / 100.0, 0.33);
        assert!((positive + negative - 1.0).abs() < 1e-9);
    });
}

#[test]
fn criterion_metrics_worked_example_and_oracle() {
    check("metrics", 10.0, || {
        let m = compute_metrics(&ConfusionCounts::new(8, 2, 7, 3)).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.precision, 0.8);
        assert_eq!(m.recall, 8.0 / 11.0);
        assert!((m.f1 - 16.0 / 21.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..1_000 {
            let (tp, fp, tn, false_neg) = (
                rng.random_range(0..1000),
                rng.random_range(0..1000),
                rng.random_range(0..1000),
                rng.random_range(0..1000),
            );
            if tp + fp + tn + false_neg == 0 {
                continue;
            }
            let m = compute_metrics(&ConfusionCounts::new(tp, fp, tn, false_neg)).unwrap();
            let (tp, fp, tn, false_neg) = (tp as f64, fp as f64, tn as f64, false_neg as f64);
            let accuracy = (tp + tn) / (tp + fp + tn + false_neg);
            let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let recall = if tp + false_neg == 0.0 { 0.0 } else { tp / (tp + false_neg) };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert_eq!(m.accuracy, accuracy);
            assert_eq!(m.precision, precision);
            assert_eq!(m.recall, recall);
            assert_eq!(m.f1, f1);
        }
    });
}

#[test]
fn criterion_probe_class_ranking() {
    check("probe class ranking", 10.0, || {
        let labels = vec![
            "jellyfish", "cauliflower", "bubble", "Petri dish", "nematode",
            "velvet", "jigsaw puzzle", "ant", "handkerchief", "poncho",
        ];
        let means = [0.090, 0.048, 0.040, 0.038, 0.034, 0.033, 0.033, 0.027, 0.022, 0.020];
        // three probe rows per class arranged so each column's mean equals
        // the published average logit
        let rows: Vec<Vec<f64>> = [-0.01, 0.0, 0.01]
            .iter()
            .map(|d| means.iter().map(|m| m + d).collect())
            .collect();
        let matrix = LogitMatrix::new(labels.iter().map(|s| s.to_string()).collect(), rows.clone()).unwrap();
        let top3: Vec<String> = rank_classes(&matrix, 3)
            .unwrap()
            .into_iter()
            .map(|(name, _)| name)
            .collect();
        assert_eq!(top3, ["jellyfish", "cauliflower", "bubble"]);

        let shifted: Vec<Vec<f64>> = rows
            .iter()
            .map(|row| row.iter().map(|v| v + 5.0).collect())
            .collect();
        let matrix_shifted =
            LogitMatrix::new(labels.iter().map(|s| s.to_string()).collect(), shifted).unwrap();
        let order: Vec<String> = rank_classes(&matrix, 10).unwrap().into_iter().map(|(n, _)| n).collect();
        let order_shifted: Vec<String> =
            rank_classes(&matrix_shifted, 10).unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(order, order_shifted);
    });
}

fn gate_config(dir: &std::path::Path, strategy: StrategyId, seed: u64, workers: usize) -> RunConfig {
    RunConfig {
        manifest_path: dir.join("manifest.jsonl"),
        scorer: ScorerSpec::Baseline,
        strategy,
        patch_size: 50,
        edge_mode: EdgeMode::PadPartial,
        crop_size: None,
        seed,
        threshold: 0.5,
        workers,
    }
}

#[test]
fn criterion_gate_analogue() {
    check("scaled-down gate analogue", 120.0, || {
        let mut favorable = 0;
        for seed in 0..20u64 {
            let dir = tempfile::tempdir().unwrap();
            let records = common::build_quality_corpus(dir.path(), 100, seed);
            let config = gate_config(dir.path(), StrategyId::RgbVar, seed, 0);
            let scorer = resolve_scorer(&config, &records).unwrap();
            let accuracy = |strategy: StrategyId| {
                let config = RunConfig { strategy, ..config.clone() };
                run_gate_with(&config, &records, scorer.as_ref())
                    .unwrap()
                    .metrics()
                    .accuracy
            };
            let control = accuracy(StrategyId::Control);
            let rgb_var = accuracy(StrategyId::RgbVar);
            let sum = accuracy(StrategyId::Sum);
            if control < rgb_var && rgb_var >= sum {
                favorable += 1;
            }
        }
        assert!(favorable >= 19, "favorable on {favorable}/20 seeds");
    });
}

#[test]
fn criterion_dark_edge_synthesis_exact() {
    check("dark-edge synthesis", 10.0, || {
        for (w, h) in [(101u32, 101u32), (64, 48)] {
            let img = ImageRgb::filled(w, h, [255, 255, 255]).unwrap();
            let params = VignetteParams {
                radius_fraction: 0.5,
                feather_fraction: 0.0,
                floor_level: 0.0,
                seed: 0,
            };
            let out = synthesize_dark_edges(&img, &params).unwrap();
            let radius = 0.5 * f64::from(w.min(h)) / 2.0;
            let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 + 0.5) - cx;
                    let dy = (y as f64 + 0.5) - cy;
                    let r = (dx * dx + dy * dy).sqrt();
                    let expected = if r <= radius { [255, 255, 255] } else { [0, 0, 0] };
                    assert_eq!(out.pixel(x, y), expected, "pixel ({x},{y}) of {w}x{h}");
                }
            }
        }
    });
}

#[test]
fn criterion_parallel_determinism() {
    check("parallel determinism", 60.0, || {
        let dir = tempfile::tempdir().unwrap();
        let records = common::build_quality_corpus(dir.path(), 10, 7);
        let config = gate_config(dir.path(), StrategyId::RgbVarSize, 7, 1);
        let scorer = resolve_scorer(&config, &records).unwrap();
        let solo = run_gate_with(&config, &records, scorer.as_ref()).unwrap();
        let config = RunConfig { workers: 8, ..config };
        let octo = run_gate_with(&config, &records, scorer.as_ref()).unwrap();
        let log_solo = cytogate::harness::decision_log_string(&solo.decisions);
        let log_octo = cytogate::harness::decision_log_string(&octo.decisions);
        assert_eq!(log_solo.as_bytes(), log_octo.as_bytes());
        assert_eq!(solo.metrics(), octo.metrics());
    });
}
