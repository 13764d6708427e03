//! Slide-level classifiers trained from weak labels: a random forest and a
//! soft-margin SVM, both selected by stratified cross-validated grid search.

mod forest;
mod grid;
mod svm;

use std::fmt;
use std::io::{BufRead, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{bootstrap_sample, oob_predictions, rf_train, Node, RandomForest, RfParams, Tree};
pub use grid::{
    grid_search_cv, stratified_folds, CellScore, ClassifierParams, GridConfig, GridSearchReport, RfGrid, SvmGrid,
};
pub use svm::{kkt_residual, svm_train, GammaSpec, Kernel, Scaler, SvmModel, SvmParams};

use crate::binio::{create_writer, open_reader};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::slide_io::Label;

/// Feature rows with their slide labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Label>,
}

impl LabeledSet {
    pub fn new(ids: Vec<String>, x: Vec<Vec<f64>>, y: Vec<Label>) -> Result<Self> {
        if ids.len() != x.len() || x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows throughout", ids.len()),
                actual: format!("{} feature rows and {} labels", x.len(), y.len()),
            });
        }
        let table = FeatureTable::new(ids.iter().cloned().zip(x.iter().cloned()).collect())?;
        if table.rows.iter().flat_map(|r| &r.1).any(|v| !v.is_finite()) {
            return Err(Error::InputDomain("non-finite feature value".into()));
        }
        Ok(Self { ids, x, y })
    }

    /// Joins a feature table with labels looked up by slide id.
    pub fn from_table(table: &FeatureTable, label_of: impl Fn(&str) -> Option<Label>) -> Result<Self> {
        let mut y = Vec::with_capacity(table.len());
        for id in table.ids() {
            y.push(label_of(id).ok_or_else(|| Error::invalid(format!("no label for slide `{id}`")))?);
        }
        Self::new(
            table.ids().map(str::to_string).collect(),
            table.rows.iter().map(|r| r.1.clone()).collect(),
            y,
        )
    }

    /// Synthetic ids `row0, row1, ...`.
    pub fn unnamed(x: Vec<Vec<f64>>, y: Vec<Label>) -> Result<Self> {
        Self::new((0..x.len()).map(|i| format!("row{i}")).collect(), x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|l| l.is_positive()).count()
    }

    fn check_trainable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("no training rows"));
        }
        let pos = self.n_positive();
        if pos == 0 || pos == self.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }
}

/// Confusion counts with positive as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Metrics {
    pub fn new(tp: usize, fn_: usize, tn: usize, fp: usize) -> Self {
        Self { tp, fn_, tn, fp }
    }

    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyInput("empty test set"));
        }
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} predictions", truth.len()),
                actual: predicted.len().to_string(),
            });
        }
        let mut m = Metrics::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t.is_positive(), p.is_positive()) {
                (true, true) => m.tp += 1,
                (true, false) => m.fn_ += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fp += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }
}

/// `91.67% (tp:4 fn:1 tn:7 fp:0)`.
impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.2}% (tp:{} fn:{} tn:{} fp:{})",
            100.0 * self.accuracy(),
            self.tp,
            self.fn_,
            self.tn,
            self.fp
        )
    }
}

/// A trained random forest or SVM.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Rf(RandomForest),
    Svm(SvmModel),
}

impl Classifier {
    pub fn train(data: &LabeledSet, params: &ClassifierParams, seed: u64) -> Result<Self> {
        Ok(match params {
            ClassifierParams::Rf(p) => Classifier::Rf(rf_train(data, p, seed)?),
            ClassifierParams::Svm(p) => Classifier::Svm(svm_train(data, p)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Classifier::Rf(m) => m.dim,
            Classifier::Svm(m) => m.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        match self {
            Classifier::Rf(m) => m.predict(x),
            Classifier::Svm(m) => m.predict(x),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Classifier::Rf(_) => "rf",
            Classifier::Svm(_) => "svm",
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        use std::io::Write;
        let mut w = create_writer(path.as_ref())?;
        match self {
            Classifier::Rf(m) => m.write_to(&mut w)?,
            Classifier::Svm(m) => m.write_to(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Loads either family, dispatching on the file magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = open_reader(path.as_ref())?;
        let head = r.fill_buf()?;
        if head.starts_with(forest::RF_MAGIC) {
            Ok(Classifier::Rf(RandomForest::read_from(&mut r)?))
        } else if head.starts_with(svm::SVM_MAGIC) {
            Ok(Classifier::Svm(SvmModel::read_from(&mut r)?))
        } else {
            let mut probe = [0u8; 8];
            let n = r.read(&mut probe)?;
            Err(Error::format(
                "classifier",
                format!("unknown magic {:?}", String::from_utf8_lossy(&probe[..n])),
            ))
        }
    }
}

pub fn evaluate(model: &Classifier, test: &LabeledSet) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test set"));
    }
    if test.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} features", model.dim()),
            actual: test.dim().to_string(),
        });
    }
    let predicted: Vec<Label> = test.x.iter().map(|x| model.predict(x)).collect();
    Metrics::from_predictions(&test.y, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_format() {
        assert_eq!(Metrics::new(4, 1, 7, 0).to_string(), "91.67% (tp:4 fn:1 tn:7 fp:0)");
        assert_eq!(Metrics::new(3, 0, 3, 0).to_string(), "100.00% (tp:3 fn:0 tn:3 fp:0)");
        assert_eq!(Metrics::new(0, 0, 1, 0).to_string(), "100.00% (tp:0 fn:0 tn:1 fp:0)");
        assert_eq!(Metrics::new(0, 2, 0, 3).to_string(), "0.00% (tp:0 fn:2 tn:0 fp:3)");
    }

    #[test]
    fn confusion_counts() {
        use Label::*;
        let truth = [Positive, Positive, Negative, Negative];
        let m = Metrics::from_predictions(&truth, &truth).unwrap();
        assert_eq!(m, Metrics::new(2, 0, 2, 0));
        let flipped = [Negative, Negative, Positive, Positive];
        let m = Metrics::from_predictions(&truth, &flipped).unwrap();
        assert_eq!(m.accuracy(), 0.0);
        assert_eq!(m.total(), 4);
        assert!(Metrics::from_predictions(&[], &[]).is_err());
    }

    #[test]
    fn labeled_set_validation() {
        use Label::*;
        assert!(LabeledSet::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]], vec![Positive, Negative]).is_err());
        assert!(LabeledSet::unnamed(vec![vec![1.0], vec![2.0, 3.0]], vec![Positive, Negative]).is_err());
        assert!(LabeledSet::unnamed(vec![vec![f64::NAN]], vec![Positive]).is_err());
        let s = LabeledSet::unnamed(vec![vec![1.0], vec![2.0]], vec![Positive, Positive]).unwrap();
        assert!(matches!(s.check_trainable(), Err(Error::SingleClass)));
    }
}
