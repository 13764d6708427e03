use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::Configuration;
use crate::classifiers::{ClassifierParams, Metrics};
use crate::error::{Error, Result};

/// Slide ids consumed by every stage. Training stages must never see a
/// test slide.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub training: BTreeMap<String, BTreeSet<String>>,
    pub evaluation: BTreeMap<String, BTreeSet<String>>,
}

impl Provenance {
    pub fn record_training<'a>(&mut self, stage: &str, ids: impl IntoIterator<Item = &'a str>) {
        self.training
            .entry(stage.to_string())
            .or_default()
            .extend(ids.into_iter().map(str::to_string));
    }

    pub fn record_evaluation<'a>(&mut self, stage: &str, ids: impl IntoIterator<Item = &'a str>) {
        self.evaluation
            .entry(stage.to_string())
            .or_default()
            .extend(ids.into_iter().map(str::to_string));
    }

    /// First training stage (in name order) that consumed a test slide.
    pub fn check_no_leakage(&self, test_ids: &BTreeSet<String>) -> Result<()> {
        for (stage, ids) in &self.training {
            if let Some(slide) = ids.intersection(test_ids).next() {
                return Err(Error::Leakage {
                    stage: stage.clone(),
                    slide: slide.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSection {
    pub title: String,
    pub slides: Vec<String>,
    pub results: Vec<ModelResult>,
}

/// What was selected for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChosenModel {
    Baseline {
        t_bin: usize,
        t_cls: f64,
        train_accuracy: f64,
    },
    Grid {
        params: ClassifierParams,
        cv_accuracy: f64,
        single_class_folds: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub chosen: ChosenModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub configuration: Configuration,
    pub use_artifact_masks: bool,
    pub seed: u64,
    pub stage_seeds: BTreeMap<String, u64>,
    pub train_slides: Vec<String>,
    pub sections: Vec<TestSection>,
    pub models: Vec<ModelSummary>,
    pub cae_epoch_losses: Vec<f64>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("report", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("report", e.to_string()))
    }

    pub fn section(&self, title: &str) -> Option<&TestSection> {
        self.sections.iter().find(|s| s.title == title)
    }
}

pub const INTERNAL_SECTION: &str = "Separated test sets - Internal";
pub const EXTERNAL_SECTION: &str = "Separated test sets - External";
pub const COMBINED_SECTION: &str = "Combined test set";

fn describe(params: &ClassifierParams) -> String {
    match params {
        ClassifierParams::Rf(p) => format!(
            "rf trees={} max_depth={} min_leaf={}",
            p.trees,
            p.max_depth.map_or("none".to_string(), |d| d.to_string()),
            p.min_leaf
        ),
        ClassifierParams::Svm(p) => {
            let kernel = match p.gamma {
                None => "linear".to_string(),
                Some(g) => format!("rbf gamma={}", serde_json::to_string(&g).unwrap_or_default().trim_matches('"')),
            };
            format!("svm C={} kernel={kernel} standardize={}", p.c, p.standardize)
        }
    }
}

/// Text report: a short header, one block per test set with
/// `<model> & ACC% (tp:.. fn:.. tn:.. fp:..)` rows, then the chosen
/// hyperparameters.
pub fn render_report(r: &ExperimentReport) -> String {
    let mut out = String::new();
    let mode = match r.configuration {
        Configuration::Separated => "separated",
        Configuration::Combined => "combined",
    };
    let _ = writeln!(out, "config {}", r.config_hash);
    let _ = writeln!(out, "configuration {mode}");
    let _ = writeln!(out, "seed {}", r.seed);
    let _ = writeln!(out, "artifact masks {}", if r.use_artifact_masks { "on" } else { "off" });
    let _ = writeln!(out, "training slides {}", r.train_slides.len());
    for s in &r.sections {
        let _ = writeln!(out, "\n{} ({} slides)", s.title, s.slides.len());
        for m in &s.results {
            let _ = writeln!(out, "{} & {}", m.model, m.metrics);
        }
    }
    let _ = writeln!(out, "\nChosen hyperparameters");
    for m in &r.models {
        let line = match &m.chosen {
            ChosenModel::Baseline {
                t_bin,
                t_cls,
                train_accuracy,
            } => format!("t_bin={t_bin} t_cls={t_cls} (train accuracy {train_accuracy:.4})"),
            ChosenModel::Grid {
                params,
                cv_accuracy,
                single_class_folds,
            } => {
                let mut s = format!("{} (cv accuracy {cv_accuracy:.4})", describe(params));
                if !single_class_folds.is_empty() {
                    let _ = write!(s, " single-class folds {single_class_folds:?}");
                }
                s
            }
        };
        let _ = writeln!(out, "{}: {line}", m.model);
    }
    out
}
