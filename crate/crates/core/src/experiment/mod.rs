//! End-to-end experiments.
//!
//! A run directory holds every intermediate artifact:
//!
//! ```text
//! config.toml          resolved configuration
//! splits.tsv           slide_id, dataset, label, train/test
//! masks/<id>.roi.png   final region of every slide
//! features/            hist_counts.txt, ml_hist.txt, avg_embed.txt, clustered_embed.txt
//! embeddings/<id>.emb  per-tile embeddings
//! models/              cae.bin, cluster.bin, <representation>-<classifier>.{txt,bin}
//! provenance.json      slide ids consumed by every stage
//! report.txt           human-readable results
//! report.json          the same, machine-readable
//! timing.json          wall-clock seconds per stage
//! ```
//!
//! `report.txt` and `report.json` depend only on the configuration and the
//! data; timings live in their own file.

mod config;
mod report;
mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub use config::{ClassifierKind, Configuration, ExperimentConfig, ModelSpec, Representation, SvmStandardize};
pub use report::{
    render_report, ChosenModel, ExperimentReport, ModelResult, ModelSummary, Provenance, TestSection,
    COMBINED_SECTION, EXTERNAL_SECTION, INTERNAL_SECTION,
};
pub use split::{stratified_split, Split};

use crate::aggregate::{average_aggregate, cluster_distribution, ClusterModel};
use crate::cae::{cae_train, encode_all, write_embeddings, Cae, SlideEmbeddings, TrainConfig};
use crate::classifiers::{evaluate, grid_search_cv, Classifier, LabeledSet, Metrics};
use crate::error::{Error, Result};
use crate::features::{write_text, FeatureTable};
use crate::hist::{baseline_predict, baseline_train, counts_table, log_normalize};
use crate::pipeline::{process_entry, ProcessedSlide};
use crate::seeds::stage_seed;
use crate::slide_io::{read_manifest_resolved, Label, ManifestEntry};

struct Stages {
    seeds: BTreeMap<String, u64>,
    global: u64,
}

impl Stages {
    fn seed(&mut self, stage: &str) -> u64 {
        let s = stage_seed(self.global, stage);
        self.seeds.insert(stage.to_string(), s);
        s
    }
}

fn ids(entries: &[ManifestEntry]) -> impl Iterator<Item = &str> {
    entries.iter().map(|e| e.slide_id.as_str())
}

fn json(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))
}

/// Runs every requested model and writes the run directory.
pub fn run_experiment(cfg: &ExperimentConfig, run_dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let run_dir = run_dir.as_ref();
    cfg.validate()?;
    let mut timing: BTreeMap<String, f64> = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut BTreeMap<String, f64>| {
        timing.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    let mut stages = Stages {
        seeds: BTreeMap::new(),
        global: cfg.seed,
    };
    let mut prov = Provenance::default();

    let internal = read_manifest_resolved(&cfg.internal_manifest).map_err(|e| e.in_stage("manifest"))?;
    let external = read_manifest_resolved(&cfg.external_manifest).map_err(|e| e.in_stage("manifest"))?;
    internal.concat(&external).map_err(|e| e.in_stage("manifest"))?;
    let split_seed = stages.seed("split");
    let (split, test_sets) = match cfg.configuration {
        Configuration::Separated => {
            let s = stratified_split(&internal.entries, cfg.split_ratio, split_seed).map_err(|e| e.in_stage("split"))?;
            let sets = vec![
                (INTERNAL_SECTION, s.test.clone()),
                (EXTERNAL_SECTION, external.entries.clone()),
            ];
            let mut test = s.test;
            test.extend(external.entries.iter().cloned());
            (Split { train: s.train, test }, sets)
        }
        Configuration::Combined => {
            let mut all = internal.entries.clone();
            all.extend(external.entries.iter().cloned());
            let s = stratified_split(&all, cfg.split_ratio, split_seed).map_err(|e| e.in_stage("split"))?;
            let sets = vec![(COMBINED_SECTION, s.test.clone())];
            (s, sets)
        }
    };
    if test_sets.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::EmptyInput("empty test set").in_stage("split"));
    }
    std::fs::create_dir_all(run_dir)?;
    write_text(&run_dir.join("config.toml"), &cfg.to_toml()?)?;
    write_text(&run_dir.join("splits.tsv"), &split.to_tsv())?;
    let train_ids = split.train_ids();
    let test_ids = split.test_ids();
    let label_of: BTreeMap<String, Label> = split
        .train
        .iter()
        .chain(&split.test)
        .map(|e| (e.slide_id.clone(), e.label))
        .collect();
    lap("split", &mut timing);

    // Region detection and histograms use no training statistics.
    let keep_tiles = cfg.needs_embeddings();
    let slides: Vec<ProcessedSlide> = split
        .train
        .par_iter()
        .chain(split.test.par_iter())
        .map(|e| {
            let p = process_entry(e, &cfg.roi, cfg.use_artifact_masks, keep_tiles)?;
            p.roi.mask.save(run_dir.join("masks").join(format!("{}.roi.png", e.slide_id)))?;
            Ok(p)
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.in_stage("roi"))?;
    let by_id: BTreeMap<&str, &ProcessedSlide> = slides.iter().map(|s| (s.entry.slide_id.as_str(), s)).collect();
    let counts: Vec<(String, Vec<u64>)> = slides.iter().map(|s| (s.entry.slide_id.clone(), s.counts.clone())).collect();
    let features_dir = run_dir.join("features");
    counts_table(&counts)?.write(features_dir.join("hist_counts.txt"))?;
    let ml_hist = FeatureTable::new(
        counts
            .iter()
            .map(|(id, c)| Ok((id.clone(), log_normalize(c)?)))
            .collect::<Result<_>>()?,
    )?;
    ml_hist.write(features_dir.join("ml_hist.txt"))?;
    lap("roi", &mut timing);

    let mut tables: BTreeMap<Representation, FeatureTable> = BTreeMap::new();
    tables.insert(Representation::MlHist, ml_hist);
    let mut cae_epoch_losses = Vec::new();
    if cfg.needs_embeddings() {
        let train_tiles: Vec<Vec<f32>> = split
            .train
            .iter()
            .flat_map(|e| by_id[e.slide_id.as_str()].roi_tiles.iter().map(|t| t.to_planar::<f32>()))
            .collect();
        prov.record_training("cae", ids(&split.train));
        let mut cae = Cae::<f32>::init(cfg.cae, stages.seed("cae_init")).map_err(|e| e.in_stage("cae"))?;
        let tc = TrainConfig {
            seed: stages.seed("cae_shuffle"),
            ..cfg.cae_train
        };
        let rep = cae_train(&mut cae, &train_tiles, &tc, |epoch, loss| {
            log::info!("cae epoch {epoch}/{}: loss {loss:.6}", tc.epochs);
        })
        .map_err(|e| e.in_stage("cae"))?;
        cae_epoch_losses = rep.epoch_losses;
        cae.save(run_dir.join("models").join("cae.bin"))?;
        lap("cae_train", &mut timing);

        let embedded: Vec<(String, Vec<Vec<f64>>)> = slides
            .iter()
            .map(|s| {
                let tiles = encode_all(&cae, &s.roi_tiles)?;
                let e = SlideEmbeddings::new(s.entry.slide_id.clone(), tiles)?;
                write_embeddings(&e, run_dir.join("embeddings").join(format!("{}.emb", e.slide_id)))?;
                Ok((e.slide_id.clone(), e.as_f64()))
            })
            .collect::<Result<_>>()
            .map_err(|e: Error| e.in_stage("embed"))?;
        let avg = FeatureTable::new(
            embedded
                .iter()
                .map(|(id, e)| Ok((id.clone(), average_aggregate(e)?)))
                .collect::<Result<_>>()?,
        )?;
        avg.write(features_dir.join("avg_embed.txt"))?;
        tables.insert(Representation::AvgEmbed, avg);
        lap("embed", &mut timing);

        if cfg.models.iter().any(|m| m.representation == Representation::ClusteredEmbed) {
            let train_embeddings: Vec<Vec<Vec<f64>>> = embedded
                .iter()
                .filter(|(id, _)| train_ids.contains(id))
                .map(|(_, e)| e.clone())
                .collect();
            prov.record_training("kmeans", ids(&split.train));
            let model = ClusterModel::fit(&train_embeddings, &cfg.kmeans, cfg.t_op, stages.seed("kmeans"))
                .map_err(|e| e.in_stage("kmeans"))?;
            model.save(run_dir.join("models").join("cluster.bin"))?;
            let clustered = FeatureTable::new(
                embedded
                    .iter()
                    .map(|(id, e)| Ok((id.clone(), cluster_distribution(e, &model)?)))
                    .collect::<Result<_>>()?,
            )?;
            clustered.write(features_dir.join("clustered_embed.txt"))?;
            tables.insert(Representation::ClusteredEmbed, clustered);
            lap("kmeans", &mut timing);
        }
    }

    let mut sections: Vec<TestSection> = test_sets
        .iter()
        .map(|(title, entries)| TestSection {
            title: title.to_string(),
            slides: ids(entries).map(str::to_string).collect(),
            results: Vec::new(),
        })
        .collect();
    let mut summaries = Vec::new();
    for spec in &cfg.models {
        let slug = spec.slug();
        prov.record_training(&slug, ids(&split.train));
        let (chosen, metrics) = if spec.classifier == ClassifierKind::Baseline {
            let hist: Vec<Vec<u64>> = split.train.iter().map(|e| by_id[e.slide_id.as_str()].counts.clone()).collect();
            let labels: Vec<Label> = split.train.iter().map(|e| e.label).collect();
            let fit = baseline_train(&hist, &labels).map_err(|e| e.in_stage("baseline"))?;
            fit.thresholds.save(run_dir.join("models").join(format!("{slug}.txt")))?;
            let metrics = test_sets
                .iter()
                .map(|(_, entries)| {
                    let predicted = entries
                        .iter()
                        .map(|e| baseline_predict(&by_id[e.slide_id.as_str()].counts, &fit.thresholds))
                        .collect::<Result<Vec<_>>>()?;
                    let truth: Vec<Label> = entries.iter().map(|e| e.label).collect();
                    Metrics::from_predictions(&truth, &predicted)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("evaluate"))?;
            let chosen = ChosenModel::Baseline {
                t_bin: fit.thresholds.t_bin,
                t_cls: fit.thresholds.t_cls,
                train_accuracy: fit.train_accuracy,
            };
            (chosen, metrics)
        } else {
            let table = &tables[&spec.representation];
            let lookup = |id: &str| label_of.get(id).copied();
            let train = LabeledSet::from_table(&table.select(ids(&split.train))?, lookup)?;
            let mut grid_cfg = cfg.grid.clone();
            grid_cfg.svm.standardize = cfg.svm_standardize.for_representation(spec.representation);
            let cells = grid_cfg.cells(spec.classifier.key())?;
            let seed = stages.seed(&format!("grid/{slug}"));
            let (grid, model) = grid_search_cv(&train, &cells, cfg.folds, seed).map_err(|e| e.in_stage("grid_search"))?;
            model.save(run_dir.join("models").join(format!("{slug}.bin")))?;
            let metrics = test_sets
                .iter()
                .map(|(_, entries)| {
                    let test = LabeledSet::from_table(&table.select(ids(entries))?, lookup)?;
                    evaluate(&model, &test)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_stage("evaluate"))?;
            let chosen = ChosenModel::Grid {
                params: *grid.chosen_params(),
                cv_accuracy: grid.cells[grid.chosen].mean_accuracy,
                single_class_folds: grid.single_class_folds.clone(),
            };
            debug_assert!(matches!(
                (&model, spec.classifier),
                (Classifier::Rf(_), ClassifierKind::Rf) | (Classifier::Svm(_), ClassifierKind::Svm)
            ));
            (chosen, metrics)
        };
        prov.record_evaluation(&slug, ids(&split.test));
        for (section, m) in sections.iter_mut().zip(metrics) {
            section.results.push(ModelResult {
                model: spec.name(),
                metrics: m,
            });
        }
        summaries.push(ModelSummary {
            model: spec.name(),
            chosen,
        });
        lap(&slug, &mut timing);
    }

    prov.check_no_leakage(&test_ids)?;
    let report = ExperimentReport {
        config_hash: cfg.hash()?,
        configuration: cfg.configuration,
        use_artifact_masks: cfg.use_artifact_masks,
        seed: cfg.seed,
        stage_seeds: stages.seeds,
        train_slides: train_ids.iter().cloned().collect(),
        sections,
        models: summaries,
        cae_epoch_losses,
        provenance: prov,
    };
    write_text(&run_dir.join("provenance.json"), &json(&report.provenance)?)?;
    write_text(&run_dir.join("report.json"), &report.to_json()?)?;
    write_text(&run_dir.join("report.txt"), &render_report(&report))?;
    write_text(&run_dir.join("timing.json"), &json(&timing)?)?;
    Ok(report)
}

/// Test slide ids of every section.
pub fn test_slide_ids(report: &ExperimentReport) -> BTreeSet<String> {
    report.sections.iter().flat_map(|s| s.slides.iter().cloned()).collect()
}
