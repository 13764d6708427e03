//! Brown-distance histograms and the two-threshold baseline model.
//!
//! Every pixel of every region tile is binned by its CIEDE2000 distance to
//! the stain color into 100 unit-width bins over `[0, 100)`; larger
//! distances land in the last bin. The baseline calls a slide positive when
//! the share of pixels in bins `0..=t_bin` exceeds `t_cls`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::ColorReference;
use crate::error::{Error, Result};
use crate::features::{write_text, FeatureTable};
use crate::roi::RoiBinaryMask;
use crate::slide_io::{DownTile, Label};

pub const NUM_BINS: usize = 100;

/// Steps of the `t_cls` grid: `k / T_CLS_STEPS` for `k = 0..=T_CLS_STEPS`.
pub const T_CLS_STEPS: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramFeature {
    pub counts: Vec<u64>,
    pub features: Vec<f64>,
    pub total_pixels: u64,
}

impl HistogramFeature {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        let features = log_normalize(&counts)?;
        let total_pixels = counts.iter().sum();
        Ok(Self {
            counts,
            features,
            total_pixels,
        })
    }
}

pub fn bin_of(distance: f64) -> usize {
    if distance.is_nan() || distance < 0.0 {
        return 0;
    }
    (distance.floor() as usize).min(NUM_BINS - 1)
}

fn tile_counts(tile: &DownTile, brown: &ColorReference) -> Vec<u64> {
    let mut counts = vec![0u64; NUM_BINS];
    for px in tile.pixels() {
        counts[bin_of(brown.distance_rgb8(px))] += 1;
    }
    counts
}

/// Raw counts over the region tiles of one slide (`tiles` row-major, same
/// grid as `roi`).
pub fn brown_histogram(slide_id: &str, tiles: &[DownTile], roi: &RoiBinaryMask) -> Result<Vec<u64>> {
    if tiles.len() != roi.inside.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} tiles", roi.inside.len()),
            actual: tiles.len().to_string(),
        });
    }
    let inside = roi.inside_indices();
    if inside.is_empty() {
        return Err(Error::EmptyRoi(slide_id.to_string()));
    }
    let brown = ColorReference::brown();
    let per_tile: Vec<Vec<u64>> = inside.par_iter().map(|&i| tile_counts(&tiles[i], &brown)).collect();
    let mut counts = vec![0u64; NUM_BINS];
    for c in per_tile {
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
    }
    Ok(counts)
}

fn total(counts: &[u64]) -> Result<u64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::EmptyInput("histogram has zero total mass"));
    }
    Ok(n)
}

/// `ln(1 + c_i) / ln(1 + N)`.
pub fn log_normalize(counts: &[u64]) -> Result<Vec<f64>> {
    let n = total(counts)?;
    let denom = (n as f64).ln_1p();
    Ok(counts.iter().map(|&c| (c as f64).ln_1p() / denom).collect())
}

/// Share of the mass in bins `0..=t_bin`.
pub fn baseline_ratio(counts: &[u64], t_bin: usize) -> Result<f64> {
    if t_bin >= counts.len() {
        return Err(Error::invalid(format!(
            "t_bin {t_bin} outside 0..{}",
            counts.len()
        )));
    }
    let n = total(counts)?;
    let head: u64 = counts[..=t_bin].iter().sum();
    Ok(head as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineThresholds {
    pub t_bin: usize,
    pub t_cls: f64,
}

impl BaselineThresholds {
    pub fn new(t_bin: usize, t_cls: f64) -> Result<Self> {
        if t_bin >= NUM_BINS || !(0.0..=1.0).contains(&t_cls) {
            return Err(Error::invalid(format!(
                "thresholds out of range: t_bin {t_bin}, t_cls {t_cls}"
            )));
        }
        Ok(Self { t_bin, t_cls })
    }

    pub fn to_text(&self) -> String {
        format!("pdl1-baseline 1\nt_bin {}\nt_cls {}\n", self.t_bin, self.t_cls)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("pdl1-baseline 1") {
            return Err(Error::format("baseline model", "missing `pdl1-baseline 1` header"));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format("baseline model", format!("missing {name}")))?;
            line.strip_prefix(name)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::format("baseline model", format!("expected {name}, got `{line}`")))
        };
        let t_bin = field("t_bin")?
            .parse()
            .map_err(|e| Error::format("baseline model", format!("t_bin: {e}")))?;
        let t_cls = field("t_cls")?
            .parse()
            .map_err(|e| Error::format("baseline model", format!("t_cls: {e}")))?;
        Self::new(t_bin, t_cls)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Positive iff the ratio strictly exceeds `t_cls`.
pub fn baseline_predict(counts: &[u64], th: &BaselineThresholds) -> Result<Label> {
    Ok(Label::from_bool(baseline_ratio(counts, th.t_bin)? > th.t_cls))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub thresholds: BaselineThresholds,
    pub train_accuracy: f64,
}

fn t_cls_of(k: u32) -> f64 {
    k as f64 / T_CLS_STEPS as f64
}

/// Correct predictions of every `(t_bin, k)` cell, indexed `[t_bin][k]`.
pub fn baseline_grid_scores(histograms: &[Vec<u64>], labels: &[Label]) -> Result<Vec<Vec<usize>>> {
    if histograms.is_empty() {
        return Err(Error::EmptyInput("baseline training set"));
    }
    if histograms.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} labels", histograms.len()),
            actual: labels.len().to_string(),
        });
    }
    for h in histograms {
        if h.len() != NUM_BINS {
            return Err(Error::DimensionMismatch {
                expected: format!("{NUM_BINS} bins"),
                actual: h.len().to_string(),
            });
        }
        total(h)?;
    }
    Ok((0..NUM_BINS)
        .into_par_iter()
        .map(|t_bin| {
            let ratios: Vec<f64> = histograms
                .iter()
                .map(|h| baseline_ratio(h, t_bin).expect("validated"))
                .collect();
            (0..=T_CLS_STEPS)
                .map(|k| {
                    let t = t_cls_of(k);
                    ratios
                        .iter()
                        .zip(labels)
                        .filter(|(&r, &l)| (r > t) == l.is_positive())
                        .count()
                })
                .collect()
        })
        .collect())
}

/// Exhaustive search for the most accurate thresholds on the training set;
/// ties go to the smallest `t_bin`, then the smallest `t_cls`.
pub fn baseline_train(histograms: &[Vec<u64>], labels: &[Label]) -> Result<BaselineFit> {
    let scores = baseline_grid_scores(histograms, labels)?;
    let mut best = (0usize, 0u32, usize::MAX);
    for (t_bin, row) in scores.iter().enumerate() {
        for (k, &s) in row.iter().enumerate() {
            if best.2 == usize::MAX || s > best.2 {
                best = (t_bin, k as u32, s);
            }
        }
    }
    Ok(BaselineFit {
        thresholds: BaselineThresholds::new(best.0, t_cls_of(best.1))?,
        train_accuracy: best.2 as f64 / histograms.len() as f64,
    })
}

/// Raw-count table (one row of 100 integers per slide).
pub fn counts_table(rows: &[(String, Vec<u64>)]) -> Result<FeatureTable> {
    FeatureTable::new(
        rows.iter()
            .map(|(id, c)| (id.clone(), c.iter().map(|&v| v as f64).collect()))
            .collect(),
    )
}

pub fn counts_from_table(table: &FeatureTable) -> Result<Vec<(String, Vec<u64>)>> {
    table
        .rows
        .iter()
        .map(|(id, v)| {
            let counts = v
                .iter()
                .map(|&x| {
                    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
                        Ok(x as u64)
                    } else {
                        Err(Error::format("histogram counts", format!("`{id}` has non-count value {x}")))
                    }
                })
                .collect::<Result<Vec<u64>>>()?;
            Ok((id.clone(), counts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::distance_to_brown;
    use crate::REFERENCE_WHITE;

    fn one_hot(k: usize, n: u64) -> Vec<u64> {
        let mut c = vec![0; NUM_BINS];
        c[k] = n;
        c
    }

    #[test]
    fn brown_tiles_fill_bin_zero() {
        let tiles = vec![DownTile::uniform([117, 89, 67]), DownTile::uniform([238, 238, 238])];
        let roi = RoiBinaryMask::new(1, 2, vec![true, false]).unwrap();
        let c = brown_histogram("s", &tiles, &roi).unwrap();
        assert_eq!(c, one_hot(0, 4096));

        let roi = RoiBinaryMask::new(1, 2, vec![false, true]).unwrap();
        let c = brown_histogram("s", &tiles, &roi).unwrap();
        let k = bin_of(distance_to_brown(REFERENCE_WHITE));
        assert_eq!(k, 45);
        assert_eq!(c, one_hot(k, 4096));

        let roi = RoiBinaryMask::new(1, 2, vec![true, true]).unwrap();
        let c = brown_histogram("s", &tiles, &roi).unwrap();
        assert_eq!(c.iter().filter(|&&v| v > 0).count(), 2);
        assert_eq!(c.iter().sum::<u64>(), 8192);
    }

    #[test]
    fn empty_roi_is_an_error() {
        let tiles = vec![DownTile::uniform([117, 89, 67])];
        let roi = RoiBinaryMask::new(1, 1, vec![false]).unwrap();
        assert!(matches!(brown_histogram("s", &tiles, &roi), Err(Error::EmptyRoi(_))));
    }

    #[test]
    fn binning_edges() {
        assert_eq!(bin_of(0.0), 0);
        assert_eq!(bin_of(0.999), 0);
        assert_eq!(bin_of(1.0), 1);
        assert_eq!(bin_of(99.5), 99);
        assert_eq!(bin_of(250.0), 99);
    }

    #[test]
    fn log_normalize_one_hot() {
        let f = log_normalize(&one_hot(7, 4096)).unwrap();
        assert_eq!(f[7], 1.0);
        assert!(f.iter().enumerate().all(|(i, &v)| i == 7 || v == 0.0));
        assert!(log_normalize(&[0; NUM_BINS]).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(baseline_ratio(&one_hot(0, 10), 0).unwrap(), 1.0);
        assert_eq!(baseline_ratio(&[3; NUM_BINS], 49).unwrap(), 0.5);
        assert!(baseline_ratio(&[3; NUM_BINS], 100).is_err());
    }

    #[test]
    fn predict_is_strict() {
        let th = BaselineThresholds::new(0, 0.01).unwrap();
        assert_eq!(baseline_predict(&one_hot(0, 5), &th).unwrap(), Label::Positive);
        let th = BaselineThresholds::new(10, 0.0).unwrap();
        assert_eq!(baseline_predict(&one_hot(50, 5), &th).unwrap(), Label::Negative);
        let mut c = vec![0; NUM_BINS];
        c[0] = 1;
        c[60] = 3;
        let th = BaselineThresholds::new(0, 0.25).unwrap();
        assert_eq!(baseline_predict(&c, &th).unwrap(), Label::Negative);
    }

    #[test]
    fn single_class_tie_break() {
        let hs = vec![one_hot(40, 100), one_hot(45, 100)];
        let fit = baseline_train(&hs, &[Label::Negative, Label::Negative]).unwrap();
        assert_eq!(fit.train_accuracy, 1.0);
        assert_eq!(fit.thresholds, BaselineThresholds { t_bin: 0, t_cls: 0.0 });

        let hs = vec![one_hot(0, 100), one_hot(1, 100)];
        let fit = baseline_train(&hs, &[Label::Positive, Label::Positive]).unwrap();
        assert_eq!(fit.thresholds, BaselineThresholds { t_bin: 1, t_cls: 0.0 });
    }

    #[test]
    fn model_text_round_trip() {
        let th = BaselineThresholds::new(12, 0.034).unwrap();
        assert_eq!(BaselineThresholds::parse(&th.to_text()).unwrap(), th);
        assert!(BaselineThresholds::parse("t_bin 3\n").is_err());
    }

    #[test]
    fn counts_table_round_trip() {
        let rows = vec![("a".to_string(), one_hot(3, 4096))];
        let t = counts_table(&rows).unwrap();
        assert_eq!(counts_from_table(&t).unwrap(), rows);
    }
}
