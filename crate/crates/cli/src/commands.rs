use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;

use pdl1_core::aggregate::{average_aggregate, cluster_distribution, ClusterModel, KMeansConfig};
use pdl1_core::cae::{cae_train, encode_all, read_embeddings, write_embeddings, Cae, SlideEmbeddings, TrainConfig};
use pdl1_core::classifiers::{evaluate, grid_search_cv, Classifier, GridConfig, LabeledSet, Metrics};
use pdl1_core::experiment::{render_report, run_experiment, ExperimentConfig, ExperimentReport};
use pdl1_core::hist::{
    baseline_predict, baseline_train, brown_histogram, counts_from_table, counts_table, log_normalize,
    BaselineThresholds,
};
use pdl1_core::pipeline::{process_entry, roi_tiles};
use pdl1_core::roi::{identify_roi, identify_roi_tiles, RoiBinaryMask, RoiConfig};
use pdl1_core::seeds::stage_seed;
use pdl1_core::slide_io::{
    downsample_slide, load_slide, make_grid, read_manifest_resolved, save_slide, tile, ArtifactMask, DownTile,
    ManifestEntry, DOWN_SIZE,
};
use pdl1_core::synth::{generate_corpus, generate_preset, CorpusConfig, Preset};
use pdl1_core::{FeatureTable, Label, SlideRaster};

use crate::{AggregateMode, Command, Family, PresetArg};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            preset,
            config,
            out,
            seed,
        } => synth(preset, config.as_deref(), &out, seed),
        Command::Tile { slide, tile_size, out } => tile_slide(&slide, tile_size, &out),
        Command::Roi {
            slide,
            f_roi,
            out,
            artifact_mask,
        } => roi(&slide, f_roi, &out, artifact_mask.as_deref()),
        Command::FeaturizeHist {
            manifest,
            roi_dir,
            f_roi,
            no_artifact_masks,
            out,
            ml_out,
        } => featurize_hist(&manifest, roi_dir.as_deref(), f_roi, !no_artifact_masks, &out, ml_out.as_deref()),
        Command::TrainBaseline {
            manifest,
            features,
            model,
        } => train_baseline(&manifest, &features, &model),
        Command::PredictBaseline {
            manifest,
            features,
            model,
            report,
        } => predict_baseline(&manifest, &features, &model, report.as_deref()),
        Command::TrainCae {
            manifest,
            roi_dir,
            f_roi,
            epochs,
            lr,
            batch_size,
            seed,
            out,
        } => {
            let tc = TrainConfig {
                epochs,
                lr,
                batch_size,
                seed: stage_seed(seed, "cae_shuffle"),
                ..TrainConfig::default()
            };
            train_cae(&manifest, roi_dir.as_deref(), f_roi, &tc, seed, &out)
        }
        Command::Embed {
            cae,
            slide,
            roi,
            f_roi,
            slide_id,
            out,
        } => embed(&cae, &slide, roi.as_deref(), f_roi, slide_id, &out),
        Command::Aggregate {
            mode,
            embeddings,
            cluster_model,
            fit,
            train_manifest,
            k,
            t_op,
            seed,
            out,
        } => {
            let kmeans = KMeansConfig {
                k,
                ..KMeansConfig::default()
            };
            aggregate(
                mode,
                &embeddings,
                cluster_model.as_deref(),
                fit.then_some((train_manifest.as_deref(), kmeans, t_op, seed)),
                &out,
            )
        }
        Command::TrainClf {
            features,
            manifest,
            family,
            grid,
            folds,
            seed,
            out,
        } => train_clf(&features, &manifest, family, grid.as_deref(), folds, seed, &out),
        Command::Classify {
            model,
            features,
            manifest,
            name,
            report,
        } => classify(&model, &features, &manifest, &name, report.as_deref()),
        Command::Experiment { config, run_dir } => experiment(&config, &run_dir),
        Command::Report { run_dir } => {
            let path = run_dir.join("report.json");
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            print!("{}", render_report(&ExperimentReport::from_json(&text)?));
            Ok(())
        }
    }
}

fn roi_config(f_roi: f64) -> RoiConfig {
    RoiConfig {
        f_roi,
        ..RoiConfig::default()
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn mask_path(roi_dir: &Path, slide_id: &str) -> PathBuf {
    roi_dir.join(format!("{slide_id}.roi.png"))
}

fn load_region_mask(path: &Path, rows: usize, cols: usize) -> Result<RoiBinaryMask> {
    let mask = RoiBinaryMask::load(path)?;
    if (mask.rows, mask.cols) != (rows, cols) {
        bail!(
            "{}: mask is {}x{} tiles, slide grid is {rows}x{cols}",
            path.display(),
            mask.rows,
            mask.cols
        );
    }
    Ok(mask)
}

/// Histogram and region tiles of one manifest slide, from a stored mask
/// when `roi_dir` is given.
fn region(entry: &ManifestEntry, roi_dir: Option<&Path>, cfg: &RoiConfig, use_mask: bool) -> Result<(Vec<u64>, Vec<DownTile>)> {
    match roi_dir {
        Some(dir) => {
            let slide = load_slide(&entry.path)?;
            let grid = make_grid(&slide, cfg.tile_size)?;
            let tiles = downsample_slide(&slide, &grid)?;
            let mask = load_region_mask(&mask_path(dir, &entry.slide_id), grid.rows, grid.cols)?;
            let counts = brown_histogram(&entry.slide_id, &tiles, &mask)?;
            let inside = tiles.into_iter().zip(&mask.inside).filter_map(|(t, &i)| i.then_some(t)).collect();
            Ok((counts, inside))
        }
        None => {
            let p = process_entry(entry, cfg, use_mask, true)?;
            Ok((p.counts, p.roi_tiles))
        }
    }
}

fn labels(manifest: &Path) -> Result<(Vec<ManifestEntry>, BTreeMap<String, Label>)> {
    let m = read_manifest_resolved(manifest)?;
    let labels = m.entries.iter().map(|e| (e.slide_id.clone(), e.label)).collect();
    Ok((m.entries, labels))
}

/// Rows of `features` for the manifest's slides, labelled from it.
fn labeled(features: &Path, manifest: &Path) -> Result<LabeledSet> {
    let table = FeatureTable::read(features)?;
    let (entries, labels) = labels(manifest)?;
    let selected = table.select(entries.iter().map(|e| e.slide_id.as_str()))?;
    Ok(LabeledSet::from_table(&selected, |id| labels.get(id).copied())?)
}

fn prediction_report(name: &str, ids: &[String], truth: &[Label], predicted: &[Label]) -> Result<String> {
    let metrics = Metrics::from_predictions(truth, predicted)?;
    let mut out = format!("{name} & {metrics}\n\nslide_id\tlabel\tpredicted\n");
    for ((id, t), p) in ids.iter().zip(truth).zip(predicted) {
        let _ = writeln!(out, "{id}\t{t}\t{p}");
    }
    Ok(out)
}

fn emit_report(text: &str, path: Option<&Path>) -> Result<()> {
    print!("{}", text.lines().next().map(|l| format!("{l}\n")).unwrap_or_default());
    if let Some(p) = path {
        write_file(p, text)?;
    }
    Ok(())
}

fn synth(preset: PresetArg, config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let manifests = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: CorpusConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            cfg.seed = seed;
            let dir = out.join(cfg.dataset.to_string());
            generate_corpus(&cfg, &dir)?;
            vec![dir.join("manifest.tsv")]
        }
        None => {
            let preset = match preset {
                PresetArg::Paperlike => Preset::Paperlike,
                PresetArg::Small => Preset::Small,
            };
            generate_preset(preset, seed, out)?
        }
    };
    for m in manifests {
        println!("{}", m.display());
    }
    Ok(())
}

fn tile_slide(slide: &Path, tile_size: u32, out: &Path) -> Result<()> {
    let raster = load_slide(slide)?;
    let grid = make_grid(&raster, tile_size)?;
    std::fs::create_dir_all(out)?;
    grid.indices().collect::<Vec<_>>().par_iter().try_for_each(|&idx| -> Result<()> {
        let t = tile(&raster, &grid, idx)?;
        let stem = format!("r{}_c{}", idx.row, idx.col);
        let native = SlideRaster::new(stem.clone(), tile_size, tile_size, t.native)?;
        save_slide(&native, out.join(format!("{stem}.png")))?;
        let size = DOWN_SIZE as u32;
        let down = SlideRaster::new(stem.clone(), size, size, t.down.bytes().to_vec())?;
        save_slide(&down, out.join(format!("{stem}.down.png")))?;
        Ok(())
    })?;
    write_file(&out.join("grid.json"), &serde_json::to_string_pretty(&grid)?)?;
    println!("{} tiles ({} x {})", grid.len(), grid.rows, grid.cols);
    Ok(())
}

fn roi(slide: &Path, f_roi: f64, out: &Path, artifact_mask: Option<&Path>) -> Result<()> {
    let raster = load_slide(slide)?;
    let mask = artifact_mask.map(ArtifactMask::load).transpose()?;
    let r = identify_roi(&raster, &roi_config(f_roi), mask.as_ref())?;
    r.mask.save(out)?;
    write_file(&out.with_extension("float.txt"), &r.float_mask.to_text())?;
    println!(
        "{} of {} tiles in region, {} artifact tiles, {} masked",
        r.mask.count(),
        r.grid.len(),
        r.float_mask.artifact_tiles().len(),
        r.excluded.len()
    );
    Ok(())
}

fn featurize_hist(
    manifest: &Path,
    roi_dir: Option<&Path>,
    f_roi: f64,
    use_masks: bool,
    out: &Path,
    ml_out: Option<&Path>,
) -> Result<()> {
    let (entries, _) = labels(manifest)?;
    let cfg = roi_config(f_roi);
    let rows: Vec<(String, Vec<u64>)> = entries
        .par_iter()
        .map(|e| {
            let (counts, _) = region(e, roi_dir, &cfg, use_masks).with_context(|| format!("slide {}", e.slide_id))?;
            Ok((e.slide_id.clone(), counts))
        })
        .collect::<Result<_>>()?;
    counts_table(&rows)?.write(out)?;
    if let Some(path) = ml_out {
        let ml = rows
            .iter()
            .map(|(id, c)| Ok((id.clone(), log_normalize(c)?)))
            .collect::<Result<Vec<_>>>()?;
        FeatureTable::new(ml)?.write(path)?;
    }
    info!("{} histograms", rows.len());
    Ok(())
}

fn baseline_rows(manifest: &Path, features: &Path) -> Result<(Vec<String>, Vec<Vec<u64>>, Vec<Label>)> {
    let (entries, labels) = labels(manifest)?;
    let table = FeatureTable::read(features)?.select(entries.iter().map(|e| e.slide_id.as_str()))?;
    let rows = counts_from_table(&table)?;
    let y = rows.iter().map(|(id, _)| labels[id]).collect();
    let (ids, counts) = rows.into_iter().unzip();
    Ok((ids, counts, y))
}

fn train_baseline(manifest: &Path, features: &Path, model: &Path) -> Result<()> {
    let (_, counts, y) = baseline_rows(manifest, features)?;
    let fit = baseline_train(&counts, &y)?;
    fit.thresholds.save(model)?;
    println!(
        "t_bin={} t_cls={} (train accuracy {:.4})",
        fit.thresholds.t_bin, fit.thresholds.t_cls, fit.train_accuracy
    );
    Ok(())
}

fn predict_baseline(manifest: &Path, features: &Path, model: &Path, report: Option<&Path>) -> Result<()> {
    let th = BaselineThresholds::load(model)?;
    let (ids, counts, y) = baseline_rows(manifest, features)?;
    let predicted = counts.iter().map(|c| baseline_predict(c, &th)).collect::<pdl1_core::Result<Vec<_>>>()?;
    emit_report(&prediction_report("Baseline Histogram", &ids, &y, &predicted)?, report)
}

fn train_cae(manifest: &Path, roi_dir: Option<&Path>, f_roi: f64, tc: &TrainConfig, seed: u64, out: &Path) -> Result<()> {
    let (entries, _) = labels(manifest)?;
    let cfg = roi_config(f_roi);
    let per_slide: Vec<Vec<DownTile>> = entries
        .par_iter()
        .map(|e| Ok(region(e, roi_dir, &cfg, true).with_context(|| format!("slide {}", e.slide_id))?.1))
        .collect::<Result<_>>()?;
    let tiles: Vec<Vec<f32>> = per_slide.iter().flatten().map(|t| t.to_planar::<f32>()).collect();
    info!("training on {} tiles from {} slides", tiles.len(), entries.len());
    let mut cae = Cae::<f32>::init(Default::default(), stage_seed(seed, "cae_init"))?;
    let report = cae_train(&mut cae, &tiles, tc, |epoch, loss| info!("epoch {epoch}/{}: loss {loss:.6}", tc.epochs))?;
    cae.save(out)?;
    if let (Some(first), Some(last)) = (report.epoch_losses.first(), report.epoch_losses.last()) {
        println!("loss {first:.6} -> {last:.6}");
    }
    Ok(())
}

fn embed(cae: &Path, slide: &Path, roi: Option<&Path>, f_roi: f64, slide_id: Option<String>, out: &Path) -> Result<()> {
    let model = Cae::<f32>::load(cae)?;
    let raster = load_slide(slide)?;
    let cfg = roi_config(f_roi);
    let grid = make_grid(&raster, cfg.tile_size)?;
    let tiles = downsample_slide(&raster, &grid)?;
    let inside = match roi {
        Some(p) => {
            let mask = load_region_mask(p, grid.rows, grid.cols)?;
            tiles.into_iter().zip(&mask.inside).filter_map(|(t, &i)| i.then_some(t)).collect()
        }
        None => {
            let r = identify_roi_tiles(&tiles, &grid, &cfg, Default::default())?;
            roi_tiles(tiles, &r)
        }
    };
    let id = match slide_id {
        Some(id) => id,
        None => slide
            .file_stem()
            .and_then(|s| s.to_str())
            .context("slide path has no file stem")?
            .to_string(),
    };
    let e = SlideEmbeddings::new(id, encode_all(&model, &inside)?)?;
    write_embeddings(&e, out)?;
    println!("{} tiles x {}", e.tiles.len(), e.dim);
    Ok(())
}

fn read_embedding_dir(dir: &Path) -> Result<Vec<(String, Vec<Vec<f64>>)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "emb"));
    paths.sort();
    if paths.is_empty() {
        bail!("no .emb files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let e = read_embeddings(p)?;
            Ok((e.slide_id.clone(), e.as_f64()))
        })
        .collect()
}

type ClusterFit<'a> = (Option<&'a Path>, KMeansConfig, f64, u64);

fn aggregate(
    mode: AggregateMode,
    dir: &Path,
    cluster_model: Option<&Path>,
    fit: Option<ClusterFit>,
    out: &Path,
) -> Result<()> {
    let slides = read_embedding_dir(dir)?;
    let rows = match mode {
        AggregateMode::Mean => slides
            .iter()
            .map(|(id, e)| Ok((id.clone(), average_aggregate(e)?)))
            .collect::<Result<Vec<_>>>()?,
        AggregateMode::Cluster => {
            let path = cluster_model.context("--cluster-model is required in cluster mode")?;
            let model = match fit {
                Some((train_manifest, kmeans, t_op, seed)) => {
                    let keep: Option<Vec<String>> = match train_manifest {
                        Some(m) => Some(labels(m)?.0.into_iter().map(|e| e.slide_id).collect()),
                        None => None,
                    };
                    let train: Vec<Vec<Vec<f64>>> = slides
                        .iter()
                        .filter(|(id, _)| keep.as_ref().is_none_or(|k| k.contains(id)))
                        .map(|(_, e)| e.clone())
                        .collect();
                    let model = ClusterModel::fit(&train, &kmeans, t_op, stage_seed(seed, "kmeans"))?;
                    model.save(path)?;
                    info!("fitted {} clusters on {} slides", model.k(), train.len());
                    model
                }
                None => ClusterModel::load(path)?,
            };
            slides
                .iter()
                .map(|(id, e)| Ok((id.clone(), cluster_distribution(e, &model)?)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    FeatureTable::new(rows)?.write(out)?;
    Ok(())
}

fn train_clf(
    features: &Path,
    manifest: &Path,
    family: Family,
    grid: Option<&Path>,
    folds: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let data = labeled(features, manifest)?;
    let grid = match grid {
        Some(p) => GridConfig::load(p)?,
        None => GridConfig::default(),
    };
    let key = match family {
        Family::Rf => "rf",
        Family::Svm => "svm",
    };
    let (report, model) = grid_search_cv(&data, &grid.cells(key)?, folds, seed)?;
    model.save(out)?;
    write_file(&out.with_extension("grid.json"), &serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} (cv accuracy {:.4})",
        serde_json::to_string(report.chosen_params())?,
        report.cells[report.chosen].mean_accuracy
    );
    Ok(())
}

fn classify(model: &Path, features: &Path, manifest: &Path, name: &str, report: Option<&Path>) -> Result<()> {
    let model = Classifier::load(model)?;
    let data = labeled(features, manifest)?;
    let metrics = evaluate(&model, &data)?;
    let predicted: Vec<Label> = data.x.iter().map(|x| model.predict(x)).collect();
    let text = prediction_report(name, &data.ids, &data.y, &predicted)?;
    debug_assert!(text.starts_with(&format!("{name} & {metrics}")));
    emit_report(&text, report)
}

fn experiment(config: &Path, run_dir: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let report = run_experiment(&cfg, run_dir)?;
    print!("{}", render_report(&report));
    Ok(())
}
