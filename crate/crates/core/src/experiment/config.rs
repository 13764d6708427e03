use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::KMeansConfig;
use crate::cae::{CaeConfig, TrainConfig};
use crate::classifiers::GridConfig;
use crate::error::{Error, Result};
use crate::roi::RoiConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Configuration {
    /// Train on part of the internal set; test on the rest of it and on
    /// the whole external set.
    Separated,
    /// Pool both sets and split once.
    Combined,
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separated" => Ok(Configuration::Separated),
            "combined" => Ok(Configuration::Combined),
            other => Err(Error::invalid(format!("unknown configuration `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Representation {
    BaselineHist,
    MlHist,
    AvgEmbed,
    ClusteredEmbed,
}

impl Representation {
    pub fn key(self) -> &'static str {
        match self {
            Representation::BaselineHist => "baseline_hist",
            Representation::MlHist => "ml_hist",
            Representation::AvgEmbed => "avg_embed",
            Representation::ClusteredEmbed => "clustered_embed",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Representation::AvgEmbed | Representation::ClusteredEmbed)
    }

    fn title(self) -> &'static str {
        match self {
            Representation::BaselineHist => "Baseline Histogram",
            Representation::MlHist => "ML Histogram",
            Representation::AvgEmbed => "Average Tile Embeddings",
            Representation::ClusteredEmbed => "Clustered Tile Embeddings",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassifierKind {
    Baseline,
    Rf,
    Svm,
}

impl ClassifierKind {
    pub fn key(self) -> &'static str {
        match self {
            ClassifierKind::Baseline => "baseline",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Svm => "svm",
        }
    }
}

/// A representation paired with a classifier, written `ml_hist:rf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModelSpec {
    pub representation: Representation,
    pub classifier: ClassifierKind,
}

impl ModelSpec {
    pub fn new(representation: Representation, classifier: ClassifierKind) -> Result<Self> {
        let baseline_pair = representation == Representation::BaselineHist;
        if baseline_pair != (classifier == ClassifierKind::Baseline) {
            return Err(Error::invalid(format!(
                "the baseline classifier pairs only with baseline_hist, got {}:{}",
                representation.key(),
                classifier.key()
            )));
        }
        Ok(Self {
            representation,
            classifier,
        })
    }

    /// The seven models, in report order.
    pub fn all() -> Vec<ModelSpec> {
        use ClassifierKind::*;
        use Representation::*;
        let mut out = vec![ModelSpec::new(BaselineHist, Baseline).expect("valid pair")];
        for r in [MlHist, AvgEmbed, ClusteredEmbed] {
            for c in [Rf, Svm] {
                out.push(ModelSpec::new(r, c).expect("valid pair"));
            }
        }
        out
    }

    /// Report name, e.g. `ML Histogram RF`.
    pub fn name(&self) -> String {
        match self.classifier {
            ClassifierKind::Baseline => self.representation.title().to_string(),
            ClassifierKind::Rf => format!("{} RF", self.representation.title()),
            ClassifierKind::Svm => format!("{} SVM", self.representation.title()),
        }
    }

    /// File-name form, e.g. `ml_hist-rf`.
    pub fn slug(&self) -> String {
        format!("{}-{}", self.representation.key(), self.classifier.key())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.representation.key(), self.classifier.key())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("model `{s}` is not `representation:classifier`")))?;
        let representation = match r {
            "baseline_hist" => Representation::BaselineHist,
            "ml_hist" => Representation::MlHist,
            "avg_embed" => Representation::AvgEmbed,
            "clustered_embed" => Representation::ClusteredEmbed,
            other => return Err(Error::invalid(format!("unknown representation `{other}`"))),
        };
        let classifier = match c {
            "baseline" => ClassifierKind::Baseline,
            "rf" => ClassifierKind::Rf,
            "svm" => ClassifierKind::Svm,
            other => return Err(Error::invalid(format!("unknown classifier `{other}`"))),
        };
        ModelSpec::new(representation, classifier)
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// Whether SVM inputs are standardized, per representation. The baseline
/// never uses an SVM and RF inputs are never standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmStandardize {
    pub ml_hist: bool,
    pub avg_embed: bool,
    pub clustered_embed: bool,
}

impl Default for SvmStandardize {
    /// Log-normalized histograms are already on a per-slide `[0, 1]` scale
    /// and are left as they are.
    fn default() -> Self {
        Self {
            ml_hist: false,
            avg_embed: true,
            clustered_embed: true,
        }
    }
}

impl SvmStandardize {
    pub fn for_representation(&self, r: Representation) -> bool {
        match r {
            Representation::BaselineHist => false,
            Representation::MlHist => self.ml_hist,
            Representation::AvgEmbed => self.avg_embed,
            Representation::ClusteredEmbed => self.clustered_embed,
        }
    }
}

/// One experiment, read from a TOML file. Relative manifest paths are
/// resolved against the file's directory.
///
/// ```toml
/// internal_manifest = "data/internal/manifest.tsv"
/// external_manifest = "data/external/manifest.tsv"
/// configuration = "separated"
/// models = ["baseline_hist:baseline", "ml_hist:rf", "clustered_embed:svm"]
/// use_artifact_masks = true
/// seed = 7
///
/// [kmeans]
/// k = 256
/// ```
///
/// The CAE shuffle seed in `[cae_train]` is ignored; it is derived from
/// `seed` like every other stage seed. Likewise `grid.svm.standardize` is
/// replaced by the per-representation `[svm_standardize]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub internal_manifest: PathBuf,
    pub external_manifest: PathBuf,
    pub configuration: Configuration,
    pub models: Vec<ModelSpec>,
    pub use_artifact_masks: bool,
    pub seed: u64,
    /// Training share of each (label, dataset) stratum.
    pub split_ratio: f64,
    pub folds: usize,
    /// Percent of each training slide's tiles kept when sizing clusters.
    pub t_op: f64,
    pub roi: RoiConfig,
    pub cae: CaeConfig,
    pub cae_train: TrainConfig,
    pub kmeans: KMeansConfig,
    pub grid: GridConfig,
    pub svm_standardize: SvmStandardize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            internal_manifest: PathBuf::from("internal/manifest.tsv"),
            external_manifest: PathBuf::from("external/manifest.tsv"),
            configuration: Configuration::Separated,
            models: ModelSpec::all(),
            use_artifact_masks: true,
            seed: 0,
            split_ratio: 0.7,
            folds: 6,
            t_op: 90.0,
            roi: RoiConfig::default(),
            cae: CaeConfig::default(),
            cae_train: TrainConfig::default(),
            kmeans: KMeansConfig::default(),
            grid: GridConfig::default(),
            svm_standardize: SvmStandardize::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("experiment config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.internal_manifest, &mut cfg.external_manifest] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::invalid("no models requested"));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::invalid("duplicate model"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if !(self.t_op > 0.0 && self.t_op <= 100.0) {
            return Err(Error::invalid(format!("t_op {} outside (0, 100]", self.t_op)));
        }
        if self.folds < 2 {
            return Err(Error::invalid("need at least 2 folds"));
        }
        if self.models.iter().any(|m| m.classifier == ClassifierKind::Rf) {
            self.grid.rf_cells()?;
        }
        if self.models.iter().any(|m| m.classifier == ClassifierKind::Svm) {
            self.grid.svm_cells()?;
        }
        Ok(())
    }

    pub fn needs_embeddings(&self) -> bool {
        self.models.iter().any(|m| m.representation.needs_embeddings())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("experiment config", e.to_string()))
    }

    /// SHA-256 of the serialized configuration, hex-encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
