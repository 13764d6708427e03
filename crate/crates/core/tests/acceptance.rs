//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Numeric arguments select criteria:
//! `cargo test -p pdl1-core --test acceptance -- 5 7`.

mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::sharma::SHARMA_PAIRS;
use pdl1_core::aggregate::{cluster_distribution, kmeans_fit, kmeans_init, nearest, ClusterModel, KMeansConfig};
use pdl1_core::cae::{cae_train, encode_all, gradient_check, Cae, CaeConfig, TrainConfig};
use pdl1_core::classifiers::{
    evaluate, grid_search_cv, kkt_residual, rf_train, stratified_folds, svm_train, Classifier, ClassifierParams,
    LabeledSet, RfParams, SvmParams,
};
use pdl1_core::experiment::{
    render_report, run_experiment, test_slide_ids, ExperimentConfig, ExperimentReport, EXTERNAL_SECTION,
    INTERNAL_SECTION,
};
use pdl1_core::hist::{baseline_predict, baseline_ratio, baseline_train};
use pdl1_core::pipeline::{process_raster, ProcessedSlide};
use pdl1_core::roi::{identify_roi, RoiConfig};
use pdl1_core::slide_io::{DownTile, ManifestEntry};
use pdl1_core::synth::{generate_preset, generate_slide, CorpusConfig, Preset, SynthConfig};
use pdl1_core::{ciede2000, DatasetId, Label, LabColor, TileIndex};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    check!(t <= limit, "took {t:.1?}, limit {limit:?}");
    Ok(())
}

fn c1_colorspace() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, (a, b, expected)) in SHARMA_PAIRS.iter().enumerate() {
        let got = ciede2000(LabColor::new(a[0], a[1], a[2]), LabColor::new(b[0], b[1], b[2]));
        worst = worst.max((got - expected).abs());
        check!((got - expected).abs() <= 1e-4, "pair {}: {got} vs {expected}", i + 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut lab = || LabColor::new(rng.gen_range(0.0..100.0), rng.gen_range(-128.0..127.0), rng.gen_range(-128.0..127.0));
    for _ in 0..10_000 {
        let (x, y) = (lab(), lab());
        let (d, back) = (ciede2000(x, y), ciede2000(y, x));
        check!(d >= 0.0 && (d - back).abs() <= 1e-12, "asymmetric at {x:?} {y:?}: {d} vs {back}");
        check!(ciede2000(x, x) == 0.0, "nonzero self distance at {x:?}");
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("34 pairs, max error {worst:.2e}; 10000 random pairs symmetric"))
}

fn c2_roi() -> Outcome {
    let start = Instant::now();
    let results: Vec<Result<(f64, usize), String>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = SynthConfig {
                seed,
                dark_artifacts: 2,
                stain_fraction: if seed % 2 == 0 { 0.05 } else { 0.0 },
                ..SynthConfig::default()
            };
            let (raster, truth) = ok(generate_slide(&format!("roi-{seed}"), &cfg))?;
            let roi = ok(identify_roi(&raster, &RoiConfig::default(), None))?;
            let iou = roi.mask.iou(&truth.roi);
            check!(iou >= 0.90, "seed {seed}: IoU {iou:.3}");
            for &t in &truth.dark_tiles {
                let TileIndex { row, col } = t;
                check!(!roi.mask.get(row, col), "seed {seed}: dark tile {t:?} inside the region");
                check!(roi.float_mask.score(t).is_artifact, "seed {seed}: dark tile {t:?} not flagged");
            }
            Ok((iou, truth.dark_tiles.len()))
        })
        .collect();
    let mut min_iou = 1.0f64;
    let mut dark = 0;
    for r in results {
        let (iou, d) = r?;
        min_iou = min_iou.min(iou);
        dark += d;
    }
    check!(dark > 0, "no dark tiles planted");
    within(Duration::from_secs(60), start)?;
    Ok(format!("20 slides, min IoU {min_iou:.3}, {dark} dark tiles excluded"))
}

/// Generates a corpus in memory and processes every slide.
fn processed_corpus(cfg: &CorpusConfig, with_masks: bool) -> Result<Vec<(ProcessedSlide, Label)>, String> {
    cfg.plan()
        .into_par_iter()
        .map(|(id, label, sc)| {
            let (raster, truth) = ok(generate_slide(&id, &sc))?;
            check!(truth.label == label, "{id}: planned {label}, generated {}", truth.label);
            let entry = ManifestEntry {
                slide_id: id.clone(),
                path: format!("{id}.png").into(),
                label,
                dataset: cfg.dataset,
                artifact_mask: None,
            };
            let mask = if with_masks { truth.artifact_mask.as_ref() } else { None };
            let p = ok(process_raster(entry, &raster, &RoiConfig::default(), mask, false))?;
            Ok((p, label))
        })
        .collect()
}

fn clean_corpus(n_pos: usize, n_neg: usize, seed: u64) -> CorpusConfig {
    CorpusConfig {
        positive_stain: (0.05, 0.05),
        negative_stain: (0.0, 0.0),
        ..CorpusConfig::new(n_pos, n_neg, DatasetId::Internal, seed)
    }
}

fn baseline_accuracy(
    train: &[(ProcessedSlide, Label)],
    test: &[(ProcessedSlide, Label)],
) -> Result<(f64, f64), String> {
    let h: Vec<Vec<u64>> = train.iter().map(|(p, _)| p.counts.clone()).collect();
    let y: Vec<Label> = train.iter().map(|(_, l)| *l).collect();
    let fit = ok(baseline_train(&h, &y))?;
    let mut correct = 0;
    for (p, l) in test {
        correct += usize::from(ok(baseline_predict(&p.counts, &fit.thresholds))? == *l);
    }
    Ok((fit.train_accuracy, correct as f64 / test.len() as f64))
}

fn c3_baseline() -> Outcome {
    let train = processed_corpus(&clean_corpus(10, 10, 101), false)?;
    let fresh = processed_corpus(&clean_corpus(4, 4, 202), false)?;
    let (train_acc, fresh_acc) = baseline_accuracy(&train, &fresh)?;
    check!(train_acc == 1.0, "training accuracy {train_acc}");
    check!(fresh_acc == 1.0, "fresh accuracy {fresh_acc}");
    for (p, _) in train.iter().chain(&fresh) {
        let mut prev = 0.0;
        for t in 0..p.counts.len() {
            let r = ok(baseline_ratio(&p.counts, t))?;
            check!(r >= prev, "{}: ratio drops at t_bin {t}", p.entry.slide_id);
            prev = r;
        }
    }
    Ok("training 1.000, 8 fresh slides 1.000, ratio monotone on 28 histograms".into())
}

fn c4_artifact_masks() -> Outcome {
    let corpus = |n_pos, n_neg, seed| CorpusConfig {
        brown_artifact_rate: 0.5,
        ..clean_corpus(n_pos, n_neg, seed)
    };
    let (train_cfg, test_cfg) = (corpus(10, 10, 303), corpus(6, 6, 404));
    let mut acc = [0.0; 2];
    for (i, masks) in [false, true].into_iter().enumerate() {
        let train = processed_corpus(&train_cfg, masks)?;
        let test = processed_corpus(&test_cfg, masks)?;
        acc[i] = baseline_accuracy(&train, &test)?.1;
    }
    let drop = acc[1] - acc[0];
    check!(acc[1] == 1.0, "accuracy with masks {:.3}", acc[1]);
    check!(drop >= 0.20, "masks off {:.3}, on {:.3}: drop {:.1} pp", acc[0], acc[1], drop * 100.0);
    Ok(format!("test accuracy masks off {:.3}, on {:.3} ({:.1} pp)", acc[0], acc[1], drop * 100.0))
}

fn c5_cae() -> Outcome {
    let tiny = CaeConfig::tiny();
    let cae64 = ok(Cae::<f64>::init(tiny, 5))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch: Vec<f64> = (0..3 * tiny.input_len()).map(|_| rng.gen()).collect();
    let gc = ok(gradient_check(&cae64, &batch, 3, 1e-4))?;
    check!(gc.max_rel_error < 1e-3, "gradient check {gc:?}");

    let slides: Vec<Result<Vec<DownTile>, String>> = (0..40u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = SynthConfig {
                seed: 500 + seed,
                tissue_tiles: (6, 6),
                dark_artifacts: 0,
                stain_fraction: if seed % 2 == 0 { 0.05 } else { 0.0 },
                ..SynthConfig::default()
            };
            let (raster, _) = ok(generate_slide(&format!("cae-{seed}"), &cfg))?;
            let entry = ManifestEntry {
                slide_id: format!("cae-{seed}"),
                path: "x.png".into(),
                label: Label::from_bool(seed % 2 == 0),
                dataset: DatasetId::Internal,
                artifact_mask: None,
            };
            Ok(ok(process_raster(entry, &raster, &RoiConfig::default(), None, true))?.roi_tiles)
        })
        .collect();
    let mut tiles = Vec::new();
    for s in slides {
        tiles.extend(s?);
    }
    check!(tiles.len() >= 1000, "only {} region tiles", tiles.len());
    tiles.truncate(1000);
    let inputs: Vec<Vec<f32>> = tiles.iter().map(|t| t.to_planar::<f32>()).collect();
    let mut cae = ok(Cae::<f32>::init(CaeConfig::default(), 7))?;
    let tc = TrainConfig {
        epochs: 20,
        lr: 0.001,
        ..TrainConfig::default()
    };
    let report = ok(cae_train(&mut cae, &inputs, &tc, |_, _| {}))?;
    let (first, last) = (report.epoch_losses[0], *report.epoch_losses.last().expect("20 epochs"));
    check!(last <= 0.5 * first, "loss {first:.5} -> {last:.5}");

    let all = ok(encode_all(&cae, &tiles))?;
    check!(all.iter().all(|e| e.len() == 32), "embedding width {}", all[0].len());
    let mut order: Vec<usize> = (0..tiles.len()).step_by(7).collect();
    order.reverse();
    let subset: Vec<DownTile> = order.iter().map(|&i| tiles[i].clone()).collect();
    let serial = ok(rayon::ThreadPoolBuilder::new().num_threads(1).build())?;
    let again = ok(serial.install(|| encode_all(&cae, &subset)))?;
    for (k, &i) in order.iter().enumerate() {
        check!(again[k] == all[i], "tile {i} embeds differently in another batch");
        check!(ok(cae.embed(&tiles[i].to_planar::<f32>()))? == all[i], "tile {i} embeds differently alone");
    }
    Ok(format!(
        "gradcheck max rel {:.2e}; loss {first:.4} -> {last:.4} over 1000 tiles; 32-d embeddings stable",
        gc.max_rel_error
    ))
}

fn lloyd_oracle(points: &[Vec<f64>], mut c: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Vec<usize> {
    let assign = |c: &[Vec<f64>]| -> Vec<(usize, f64)> {
        points
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (j, q) in c.iter().enumerate() {
                    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
            .collect()
    };
    for _ in 0..cfg.max_iter {
        let a = assign(&c);
        let mut dist: Vec<f64> = a.iter().map(|x| x.1).collect();
        let mut moved = 0.0f64;
        for j in 0..c.len() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&a).filter(|(_, x)| x.0 == j).map(|(p, _)| p).collect();
            let new: Vec<f64> = if members.is_empty() {
                let mut far = 0;
                for i in 0..points.len() {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                dist[far] = 0.0;
                points[far].clone()
            } else {
                (0..points[0].len())
                    .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                    .collect()
            };
            let shift: f64 = new.iter().zip(&c[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            moved = moved.max(shift);
            c[j] = new;
        }
        if moved < cfg.tol {
            break;
        }
    }
    assign(&c).into_iter().map(|x| x.0).collect()
}

fn c6_aggregate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let slides: Vec<Vec<Vec<f64>>> = (0..100)
        .map(|s| {
            let n = rng.gen_range(10..60);
            let centre = (s % 5) as f64;
            (0..n).map(|_| (0..4).map(|_| centre + rng.gen_range(-1.0..1.0)).collect()).collect()
        })
        .collect();
    let cfg = KMeansConfig {
        k: 8,
        ..KMeansConfig::default()
    };
    let (train, rest) = slides.split_at(60);
    let model = ok(ClusterModel::fit(train, &cfg, 90.0, 9))?;
    for (i, s) in slides.iter().enumerate() {
        let d = ok(cluster_distribution(s, &model))?;
        check!(d.len() == cfg.k + 1, "distribution length {}", d.len());
        check!(d.iter().all(|&v| v >= 0.0), "slide {i}: negative entry");
        let sum: f64 = d.iter().sum();
        check!((sum - 1.0).abs() <= 1e-12, "slide {i}: sum {sum}");
    }
    check!(!rest.is_empty(), "no held-out slides");

    let full = ok(ClusterModel::fit(train, &cfg, 100.0, 9))?;
    for (i, s) in train.iter().enumerate() {
        let d = ok(cluster_distribution(s, &full))?;
        check!(d[cfg.k] == 0.0, "training slide {i}: outlier share {} at t_op 100", d[cfg.k]);
    }
    let radii: Vec<Vec<f64>> = [50.0, 70.0, 90.0, 100.0]
        .iter()
        .map(|&t| ok(ClusterModel::fit(train, &cfg, t, 9)).map(|m| m.radii))
        .collect::<Result<_, _>>()?;
    for w in radii.windows(2) {
        for (c, (a, b)) in w[0].iter().zip(&w[1]).enumerate() {
            check!(a <= b, "cluster {c}: radius {a} then {b}");
        }
    }

    let points: Vec<Vec<f64>> = train.iter().flatten().cloned().collect();
    let fit = ok(kmeans_fit(&points, &cfg, 9))?;
    let init = ok(kmeans_init(&points, cfg.k, 9))?;
    let oracle = lloyd_oracle(&points, init, &cfg);
    check!(fit.assignments == oracle, "assignments differ from the reference Lloyd iteration");
    for (p, &a) in points.iter().zip(&fit.assignments) {
        check!(nearest(p, &fit.centroids).0 == a, "assignment is not the nearest centroid");
    }
    Ok(format!("simplex on 100 slides; t_op 100 outliers 0; radii monotone; {} points match", points.len()))
}

fn separable(n: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    while x.len() < n {
        let p: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let s = p[0] + 0.5 * p[1] - 0.1;
        if s.abs() < 0.1 {
            continue;
        }
        x.push(p.to_vec());
        y.push(Label::from_bool(s > 0.0));
    }
    LabeledSet::unnamed(x, y).expect("rows")
}

fn c7_classifiers() -> Outcome {
    let (train, test) = (separable(200, 10), separable(200, 11));
    let rf = ok(rf_train(&train, &RfParams::default(), 12))?;
    let rf_acc = ok(evaluate(&Classifier::Rf(rf), &test))?.accuracy();
    let svm_params = SvmParams {
        c: 10.0,
        ..SvmParams::default()
    };
    let svm = ok(svm_train(&train, &svm_params))?;
    let kkt = kkt_residual(&svm, &train);
    let svm_acc = ok(evaluate(&Classifier::Svm(svm), &test))?.accuracy();
    check!(rf_acc >= 0.95, "random forest accuracy {rf_acc}");
    check!(svm_acc >= 0.95, "SVM accuracy {svm_acc}");
    check!(kkt <= 1e-3, "KKT residual {kkt:.2e}");

    let fixture = separable(12, 13);
    let cells: Vec<ClassifierParams> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&c| ClassifierParams::Svm(SvmParams { c, ..SvmParams::default() }))
        .chain([1, 2].iter().map(|&d| {
            ClassifierParams::Rf(RfParams {
                trees: 15,
                max_depth: Some(d),
                ..RfParams::default()
            })
        }))
        .collect();
    let (folds, seed) = (6, 14);
    let (report, chosen) = ok(grid_search_cv(&fixture, &cells, folds, seed))?;
    let fold_of = ok(stratified_folds(&fixture.y, folds, seed))?;
    let mut best = (0, f64::NEG_INFINITY);
    for (c, params) in cells.iter().enumerate() {
        let mut scores = Vec::new();
        for f in 0..folds {
            let tr: Vec<usize> = (0..fixture.len()).filter(|&i| fold_of[i] != f).collect();
            let te: Vec<usize> = (0..fixture.len()).filter(|&i| fold_of[i] == f).collect();
            let part = fixture.subset(&tr);
            let pos = part.n_positive();
            let predictions: Vec<Label> = if pos == 0 || pos == part.len() {
                vec![part.y[0]; te.len()]
            } else {
                let m = ok(Classifier::train(&part, params, seed))?;
                te.iter().map(|&i| m.predict(&fixture.x[i])).collect()
            };
            let correct = te.iter().zip(&predictions).filter(|(&i, &p)| fixture.y[i] == p).count();
            scores.push(correct as f64 / te.len() as f64);
        }
        check!(scores == report.cells[c].fold_accuracy, "cell {c}: folds {scores:?} vs {:?}", report.cells[c].fold_accuracy);
        let mean = scores.iter().sum::<f64>() / folds as f64;
        if mean > best.1 {
            best = (c, mean);
        }
    }
    check!(report.chosen == best.0, "chose cell {}, exhaustive search {}", report.chosen, best.0);
    let refit = ok(Classifier::train(&fixture, &cells[best.0], seed))?;
    check!(
        test.x.iter().all(|x| refit.predict(x) == chosen.predict(x)),
        "chosen model is not the full-data refit"
    );
    Ok(format!(
        "RF {rf_acc:.3}, SVM {svm_acc:.3}, KKT {kkt:.1e}; grid of {} cells x {folds} folds matches",
        cells.len()
    ))
}

fn check_rows(text: &str) -> Result<(), String> {
    let mut in_block = false;
    for line in text.lines() {
        if line.is_empty() {
            in_block = false;
            continue;
        }
        if line.starts_with("Separated test sets - ") || line.starts_with("Combined test set") {
            in_block = true;
            continue;
        }
        if line == "Chosen hyperparameters" {
            break;
        }
        if in_block {
            let (model, rest) = line.split_once(" & ").ok_or(format!("bad row `{line}`"))?;
            check!(!model.is_empty(), "empty model name in `{line}`");
            let (acc, counts) = rest.split_once("% (").ok_or(format!("bad row `{line}`"))?;
            check!(acc.parse::<f64>().is_ok(), "bad accuracy in `{line}`");
            let counts = counts.strip_suffix(')').ok_or(format!("bad row `{line}`"))?;
            let keys: Vec<&str> = counts.split(' ').map(|kv| kv.split(':').next().unwrap_or("")).collect();
            check!(keys == ["tp", "fn", "tn", "fp"], "bad counts in `{line}`");
            check!(
                counts.split(' ').all(|kv| kv.split(':').nth(1).is_some_and(|v| v.parse::<usize>().is_ok())),
                "bad counts in `{line}`"
            );
        }
    }
    Ok(())
}

fn experiment_config(dir: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        internal_manifest: dir.join("internal/manifest.tsv"),
        external_manifest: dir.join("external/manifest.tsv"),
        seed,
        ..ExperimentConfig::default()
    };
    cfg.kmeans.k = 8;
    cfg
}

fn c8_experiment() -> Outcome {
    let start = Instant::now();
    let dir = ok(tempfile::tempdir())?;
    ok(generate_preset(Preset::Paperlike, 0, dir.path()))?;
    let cfg = experiment_config(dir.path(), 0);
    let report = ok(run_experiment(&cfg, dir.path().join("run")))?;
    let text = ok(std::fs::read_to_string(dir.path().join("run/report.txt")))?;
    check!(text == render_report(&report), "report.txt differs from the returned report");
    let titles: Vec<&str> = report.sections.iter().map(|s| s.title.as_str()).collect();
    check!(titles == [INTERNAL_SECTION, EXTERNAL_SECTION], "sections {titles:?}");
    check!(
        report.sections[0].slides.len() == 12 && report.sections[1].slides.len() == 25,
        "section sizes {} / {}",
        report.sections[0].slides.len(),
        report.sections[1].slides.len()
    );
    check_rows(&text)?;
    let test_ids = test_slide_ids(&report);
    for (stage, ids) in &report.provenance.training {
        check!(ids.is_disjoint(&test_ids), "stage {stage} trained on a test slide");
    }
    let train: BTreeSet<String> = report.train_slides.iter().cloned().collect();
    check!(train.is_disjoint(&test_ids), "training and test slides overlap");
    let external = report.section(EXTERNAL_SECTION).expect("checked");
    check!(external.results.len() == 7, "{} models reported", external.results.len());
    let mut worst = (external.results[0].model.clone(), external.results[0].metrics.accuracy());
    for r in &external.results {
        let acc = r.metrics.accuracy();
        if acc < worst.1 {
            worst = (r.model.clone(), acc);
        }
    }
    check!(worst.1 >= 0.90, "{} external accuracy {:.3}", worst.0, worst.1);
    within(Duration::from_secs(20 * 60), start)?;
    Ok(format!("7 models, lowest external accuracy {:.3} ({})", worst.1, worst.0))
}

fn c9_determinism() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    ok(generate_preset(Preset::Small, 3, dir.path()))?;
    let cfg = experiment_config(dir.path(), 3);
    let pool = ok(rayon::ThreadPoolBuilder::new().num_threads(1).build())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let run_dir = dir.path().join(run);
        let report: ExperimentReport = ok(pool.install(|| run_experiment(&cfg, &run_dir)))?;
        check!(report.sections.len() == 2, "{} sections", report.sections.len());
        let txt = ok(std::fs::read(run_dir.join("report.txt")))?;
        let json = ok(std::fs::read(run_dir.join("report.json")))?;
        outputs.push((txt, json));
    }
    check!(outputs[0].0 == outputs[1].0, "report.txt differs between runs");
    check!(outputs[0].1 == outputs[1].1, "report.json differs between runs");
    Ok(format!("report.txt ({} bytes) and report.json ({} bytes) identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("CIEDE2000 reference pairs and symmetry", c1_colorspace),
        ("region detection on planted slides", c2_roi),
        ("two-threshold baseline", c3_baseline),
        ("artifact masks", c4_artifact_masks),
        ("autoencoder gradients, training and inference", c5_cae),
        ("cluster aggregation", c6_aggregate),
        ("random forest, SVM and grid search", c7_classifiers),
        ("separated experiment end to end", c8_experiment),
        ("single-thread determinism", c9_determinism),
    ];
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n} {name} ({t:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n} {name} ({t:.1}s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
