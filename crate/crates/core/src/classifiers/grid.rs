use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, GammaSpec, LabeledSet, RfParams, SvmParams};
use crate::error::{Error, Result};
use crate::slide_io::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ClassifierParams {
    Rf(RfParams),
    Svm(SvmParams),
}

/// Random-forest axes; a `max_depth` of 0 means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfGrid {
    pub trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_leaf: Vec<usize>,
}

impl Default for RfGrid {
    fn default() -> Self {
        Self {
            trees: vec![100, 300],
            max_depth: vec![0, 8, 16],
            min_leaf: vec![1, 3],
        }
    }
}

/// SVM axes. Kernels are `"linear"` or `"rbf"`; gammas `"inv_dim"`,
/// `"inv_dim_var"` or a number. The linear kernel ignores the gamma axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmGrid {
    pub c: Vec<f64>,
    pub kernel: Vec<String>,
    pub gamma: Vec<toml::Value>,
    pub standardize: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmGrid {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            kernel: vec!["linear".into(), "rbf".into()],
            gamma: vec!["inv_dim".into(), "inv_dim_var".into()],
            standardize: true,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Grid file, e.g.
///
/// ```toml
/// [rf]
/// trees = [100, 300]
/// max_depth = [0, 8, 16]
/// min_leaf = [1, 3]
///
/// [svm]
/// c = [0.1, 1, 10, 100]
/// kernel = ["linear", "rbf"]
/// gamma = ["inv_dim", "inv_dim_var"]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rf: RfGrid,
    pub svm: SvmGrid,
}

impl GridConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("grid", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn rf_cells(&self) -> Result<Vec<ClassifierParams>> {
        let g = &self.rf;
        let mut out = Vec::new();
        for &trees in &g.trees {
            for &depth in &g.max_depth {
                for &min_leaf in &g.min_leaf {
                    out.push(ClassifierParams::Rf(RfParams {
                        trees,
                        max_depth: (depth > 0).then_some(depth),
                        min_leaf,
                        max_features: None,
                    }));
                }
            }
        }
        non_empty(out)
    }

    pub fn svm_cells(&self) -> Result<Vec<ClassifierParams>> {
        let g = &self.svm;
        let gammas = g
            .gamma
            .iter()
            .map(|v| match v {
                toml::Value::String(s) if s == "inv_dim" => Ok(GammaSpec::InvDim),
                toml::Value::String(s) if s == "inv_dim_var" => Ok(GammaSpec::InvDimVar),
                toml::Value::Float(f) => Ok(GammaSpec::Value(*f)),
                toml::Value::Integer(i) => Ok(GammaSpec::Value(*i as f64)),
                other => Err(Error::format("grid", format!("bad gamma {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for &c in &g.c {
            for kernel in &g.kernel {
                let base = SvmParams {
                    c,
                    gamma: None,
                    standardize: g.standardize,
                    tol: g.tol,
                    max_iter: g.max_iter,
                };
                match kernel.as_str() {
                    "linear" => out.push(ClassifierParams::Svm(base)),
                    "rbf" => out.extend(gammas.iter().map(|&gm| {
                        ClassifierParams::Svm(SvmParams {
                            gamma: Some(gm),
                            ..base
                        })
                    })),
                    other => return Err(Error::format("grid", format!("unknown kernel `{other}`"))),
                }
            }
        }
        non_empty(out)
    }

    pub fn cells(&self, family: &str) -> Result<Vec<ClassifierParams>> {
        match family {
            "rf" => self.rf_cells(),
            "svm" => self.svm_cells(),
            other => Err(Error::invalid(format!("unknown classifier family `{other}`"))),
        }
    }
}

fn non_empty(cells: Vec<ClassifierParams>) -> Result<Vec<ClassifierParams>> {
    if cells.is_empty() {
        Err(Error::format("grid", "empty grid"))
    } else {
        Ok(cells)
    }
}

/// Fold of every row: each class is shuffled with `seed`, positives then
/// negatives are dealt round-robin, so fold sizes differ by at most one and
/// each class is spread evenly.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if labels.len() < folds {
        return Err(Error::TooFewPoints {
            needed: folds,
            got: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [Label::Positive, Label::Negative] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        order.extend(rows);
    }
    let mut fold = vec![0; labels.len()];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % folds;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub params: ClassifierParams,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub cells: Vec<CellScore>,
    pub chosen: usize,
    pub seed: u64,
    pub folds: usize,
    /// Folds whose held-out or training part holds a single class.
    pub single_class_folds: Vec<usize>,
}

impl GridSearchReport {
    pub fn chosen_params(&self) -> &ClassifierParams {
        &self.cells[self.chosen].params
    }
}

fn fold_accuracy(data: &LabeledSet, fold_of: &[usize], f: usize, params: &ClassifierParams, seed: u64) -> Result<f64> {
    let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
    let test: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
    let tr = data.subset(&train);
    let pos = tr.n_positive();
    let predict: Box<dyn Fn(&[f64]) -> Label> = if pos == 0 || pos == tr.len() {
        // A one-class training part predicts its class.
        let only = tr.y[0];
        Box::new(move |_| only)
    } else {
        let model = Classifier::train(&tr, params, seed)?;
        Box::new(move |x| model.predict(x))
    };
    let correct = test.iter().filter(|&&i| predict(&data.x[i]) == data.y[i]).count();
    Ok(correct as f64 / test.len() as f64)
}

/// Scores every cell by mean held-out accuracy over stratified folds,
/// picks the first maximiser in grid order and retrains it on all rows.
pub fn grid_search_cv(
    data: &LabeledSet,
    cells: &[ClassifierParams],
    folds: usize,
    seed: u64,
) -> Result<(GridSearchReport, Classifier)> {
    data.check_trainable()?;
    if cells.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let fold_of = stratified_folds(&data.y, folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..folds).map(move |f| (c, f))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(c, f)| fold_accuracy(data, &fold_of, f, &cells[c], seed))
        .collect::<Result<Vec<f64>>>()?;
    let mut report_cells = Vec::with_capacity(cells.len());
    let mut chosen = 0;
    for (c, params) in cells.iter().enumerate() {
        let fold_accuracy = scores[c * folds..(c + 1) * folds].to_vec();
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / folds as f64;
        if mean_accuracy > report_cells.get(chosen).map_or(f64::NEG_INFINITY, |s: &CellScore| s.mean_accuracy) {
            chosen = c;
        }
        report_cells.push(CellScore {
            params: *params,
            fold_accuracy,
            mean_accuracy,
        });
    }
    let single_class_folds = (0..folds)
        .filter(|&f| {
            let held: Vec<Label> = (0..data.len()).filter(|&i| fold_of[i] == f).map(|i| data.y[i]).collect();
            let kept: Vec<Label> = (0..data.len()).filter(|&i| fold_of[i] != f).map(|i| data.y[i]).collect();
            [held, kept].iter().any(|ls| ls.iter().all(|&l| l == ls[0]))
        })
        .collect();
    let model = Classifier::train(data, &cells[chosen], seed)?;
    Ok((
        GridSearchReport {
            cells: report_cells,
            chosen,
            seed,
            folds,
            single_class_folds,
        },
        model,
    ))
}
