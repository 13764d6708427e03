//! Tumor region detection from per-pixel distances to background white.
//!
//! Two passes over the 64×64 downsampled tiles of one slide: the first
//! gathers the slide-wide mean and standard deviation of the distance to
//! white, the second scores every tile. A tile whose pixels are mostly
//! outliers (beyond `outlier_sigmas` standard deviations) is a dark
//! artifact; otherwise its score is the fraction of near-white pixels.
//! Tiles scoring below `f_roi` form the region, which is then smoothed by a
//! closing followed by an opening.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorspace::ColorReference;
use crate::error::{Error, Result};
use crate::slide_io::{
    apply_artifact_mask, downsample_slide, load_gray, make_grid, save_gray, ArtifactMask,
    DownTile, SlideRaster, TileGrid, TileIndex, DEFAULT_TILE_SIZE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiConfig {
    pub f_roi: f64,
    pub near_white_cutoff: f64,
    pub outlier_sigmas: f64,
    pub artifact_fraction: f64,
    /// Half-width of the square structuring element (1 → 3×3).
    pub morph_radius: usize,
    pub tile_size: u32,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            f_roi: 0.85,
            near_white_cutoff: 5.0,
            outlier_sigmas: 3.0,
            artifact_fraction: 0.80,
            morph_radius: 1,
            tile_size: DEFAULT_TILE_SIZE,
        }
    }
}

/// Running mean/variance over distances; merges associatively.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WhiteStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl WhiteStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = WhiteStats::default();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn merge(self, other: WhiteStats) -> WhiteStats {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / n as f64;
        WhiteStats { count: n, mean, m2 }
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

/// Distance to white of every pixel of a tile.
pub fn tile_white_distances(tile: &DownTile) -> Vec<f64> {
    let white = ColorReference::white();
    tile.pixels().map(|px| white.distance_rgb8(px)).collect()
}

fn stats_of(distances: &[Vec<f64>]) -> Result<WhiteStats> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("slide has no tiles"));
    }
    let per_tile: Vec<WhiteStats> = distances.par_iter().map(|d| WhiteStats::from_values(d)).collect();
    // Sequential merge keeps the result independent of thread count.
    Ok(per_tile.into_iter().fold(WhiteStats::default(), WhiteStats::merge))
}

/// Slide-wide mean and standard deviation of the distance to white.
pub fn compute_white_stats(tiles: &[DownTile]) -> Result<WhiteStats> {
    let distances: Vec<Vec<f64>> = tiles.par_iter().map(tile_white_distances).collect();
    stats_of(&distances)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileScore {
    pub is_artifact: bool,
    /// Fraction of near-white pixels; `None` for artifact tiles.
    pub fraction: Option<f64>,
}

fn score_distances(d: &[f64], stats: &WhiteStats, cfg: &RoiConfig) -> TileScore {
    let std = stats.std();
    let n = d.len() as f64;
    if std > 0.0 {
        let band = cfg.outlier_sigmas * std;
        let outliers = d.iter().filter(|&&v| (v - stats.mean).abs() > band).count();
        if outliers as f64 / n > cfg.artifact_fraction {
            return TileScore {
                is_artifact: true,
                fraction: None,
            };
        }
    }
    let near = d.iter().filter(|&&v| v < cfg.near_white_cutoff).count();
    TileScore {
        is_artifact: false,
        fraction: Some(near as f64 / n),
    }
}

pub fn score_tile(tile: &DownTile, stats: &WhiteStats, cfg: &RoiConfig) -> TileScore {
    score_distances(&tile_white_distances(tile), stats, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiFloatMask {
    pub rows: usize,
    pub cols: usize,
    pub scores: Vec<TileScore>,
}

impl RoiFloatMask {
    pub fn score(&self, idx: TileIndex) -> TileScore {
        self.scores[idx.row * self.cols + idx.col]
    }

    pub fn artifact_tiles(&self) -> BTreeSet<TileIndex> {
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_artifact)
            .map(|(i, _)| TileIndex::new(i / self.cols, i % self.cols))
            .collect()
    }

    /// Text grid, one row of tiles per line; artifact tiles print as `nan`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols)
                .map(|c| match self.scores[r * self.cols + c].fraction {
                    Some(f) => format!("{f:.6}"),
                    None => "nan".to_string(),
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("\t"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBinaryMask {
    pub rows: usize,
    pub cols: usize,
    pub inside: Vec<bool>,
}

impl RoiBinaryMask {
    pub fn new(rows: usize, cols: usize, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} tiles", rows * cols),
                actual: inside.len().to_string(),
            });
        }
        Ok(Self { rows, cols, inside })
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            inside: vec![value; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.inside[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.inside[row * self.cols + col] = v;
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&v| v).count()
    }

    /// Linear indices of tiles inside the region, row-major.
    pub fn inside_indices(&self) -> Vec<usize> {
        self.inside
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }

    pub fn iou(&self, other: &RoiBinaryMask) -> f64 {
        let inter = self.inside.iter().zip(&other.inside).filter(|(a, b)| **a && **b).count();
        let union = self.inside.iter().zip(&other.inside).filter(|(a, b)| **a || **b).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Single-channel raster at tile resolution, 255 = inside.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let data: Vec<u8> = self.inside.iter().map(|&v| if v { 255 } else { 0 }).collect();
        save_gray(path, self.cols as u32, self.rows as u32, &data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (w, h, data) = load_gray(path)?;
        Self::new(h as usize, w as usize, data.into_iter().map(|v| v != 0).collect())
    }
}

/// Inside ⇔ not an artifact, not externally excluded, and fraction < `f_roi`.
pub fn binarize(
    float_mask: &RoiFloatMask,
    excluded: &BTreeSet<TileIndex>,
    f_roi: f64,
) -> Result<RoiBinaryMask> {
    if !(0.0..=1.0).contains(&f_roi) {
        return Err(Error::invalid(format!("F_ROI {f_roi} outside [0, 1]")));
    }
    let cols = float_mask.cols;
    let inside = float_mask
        .scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let idx = TileIndex::new(i / cols, i % cols);
            !s.is_artifact && !excluded.contains(&idx) && s.fraction.is_some_and(|f| f < f_roi)
        })
        .collect();
    RoiBinaryMask::new(float_mask.rows, cols, inside)
}

fn morph(mask: &RoiBinaryMask, radius: usize, dilate: bool) -> RoiBinaryMask {
    let (rows, cols) = (mask.rows as isize, mask.cols as isize);
    let r = radius as isize;
    let at = |rr: isize, cc: isize| {
        rr >= 0 && cc >= 0 && rr < rows && cc < cols && mask.get(rr as usize, cc as usize)
    };
    let mut out = RoiBinaryMask::filled(mask.rows, mask.cols, false);
    for row in 0..rows {
        for col in 0..cols {
            let mut neigh = (row - r..=row + r).flat_map(|rr| (col - r..=col + r).map(move |cc| (rr, cc)));
            let v = if dilate {
                neigh.any(|(rr, cc)| at(rr, cc))
            } else {
                neigh.all(|(rr, cc)| at(rr, cc))
            };
            out.set(row as usize, col as usize, v);
        }
    }
    out
}

/// Binary dilation with a `(2r+1)²` square; off-grid cells count as outside.
pub fn dilate(mask: &RoiBinaryMask, radius: usize) -> RoiBinaryMask {
    morph(mask, radius, true)
}

/// Binary erosion with a `(2r+1)²` square; off-grid cells count as outside.
pub fn erode(mask: &RoiBinaryMask, radius: usize) -> RoiBinaryMask {
    morph(mask, radius, false)
}

fn pad(mask: &RoiBinaryMask, margin: usize) -> RoiBinaryMask {
    let mut out = RoiBinaryMask::filled(mask.rows + 2 * margin, mask.cols + 2 * margin, false);
    for r in 0..mask.rows {
        for c in 0..mask.cols {
            out.set(r + margin, c + margin, mask.get(r, c));
        }
    }
    out
}

fn crop(mask: &RoiBinaryMask, margin: usize, rows: usize, cols: usize) -> RoiBinaryMask {
    let mut out = RoiBinaryMask::filled(rows, cols, false);
    for r in 0..rows {
        for c in 0..cols {
            out.set(r, c, mask.get(r + margin, c + margin));
        }
    }
    out
}

// The compound operators run on the grid embedded in an unbounded outside
// region, so a dilation may spill past the border and be eroded back.
fn on_plane(
    mask: &RoiBinaryMask,
    radius: usize,
    f: impl Fn(&RoiBinaryMask) -> RoiBinaryMask,
) -> RoiBinaryMask {
    let margin = 2 * radius;
    crop(&f(&pad(mask, margin)), margin, mask.rows, mask.cols)
}

pub fn closing(mask: &RoiBinaryMask, radius: usize) -> RoiBinaryMask {
    on_plane(mask, radius, |m| erode(&dilate(m, radius), radius))
}

pub fn opening(mask: &RoiBinaryMask, radius: usize) -> RoiBinaryMask {
    on_plane(mask, radius, |m| dilate(&erode(m, radius), radius))
}

/// Closing followed by opening with a 3×3 square.
pub fn morph_close_open(mask: &RoiBinaryMask) -> RoiBinaryMask {
    morph_close_open_with(mask, 1)
}

pub fn morph_close_open_with(mask: &RoiBinaryMask, radius: usize) -> RoiBinaryMask {
    opening(&closing(mask, radius), radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiResult {
    pub grid: TileGrid,
    pub stats: WhiteStats,
    pub float_mask: RoiFloatMask,
    /// Externally masked tiles.
    pub excluded: BTreeSet<TileIndex>,
    /// Thresholded mask before smoothing.
    pub binary: RoiBinaryMask,
    /// Final region.
    pub mask: RoiBinaryMask,
}

/// Region detection on already-downsampled tiles (row-major over `grid`).
pub fn identify_roi_tiles(
    tiles: &[DownTile],
    grid: &TileGrid,
    cfg: &RoiConfig,
    excluded: BTreeSet<TileIndex>,
) -> Result<RoiResult> {
    if tiles.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} tiles", grid.len()),
            actual: tiles.len().to_string(),
        });
    }
    let distances: Vec<Vec<f64>> = tiles.par_iter().map(tile_white_distances).collect();
    let stats = stats_of(&distances)?;
    let scores: Vec<TileScore> = distances
        .par_iter()
        .map(|d| score_distances(d, &stats, cfg))
        .collect();
    let float_mask = RoiFloatMask {
        rows: grid.rows,
        cols: grid.cols,
        scores,
    };
    let binary = binarize(&float_mask, &excluded, cfg.f_roi)?;
    let mut mask = morph_close_open_with(&binary, cfg.morph_radius);
    // Closing can refill holes left by excluded tiles; exclusions win.
    for (i, s) in float_mask.scores.iter().enumerate() {
        if s.is_artifact || excluded.contains(&grid.index(i)) {
            mask.inside[i] = false;
        }
    }
    Ok(RoiResult {
        grid: *grid,
        stats,
        float_mask,
        excluded,
        binary,
        mask,
    })
}

pub fn identify_roi(
    slide: &SlideRaster,
    cfg: &RoiConfig,
    artifact_mask: Option<&ArtifactMask>,
) -> Result<RoiResult> {
    let grid = make_grid(slide, cfg.tile_size)?;
    let tiles = downsample_slide(slide, &grid)?;
    let excluded = match artifact_mask {
        Some(m) => apply_artifact_mask(&grid, m)?,
        None => BTreeSet::new(),
    };
    identify_roi_tiles(&tiles, &grid, cfg, excluded)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> RoiBinaryMask {
        let r = rows.len();
        let c = rows[0].len();
        let inside = rows.iter().flat_map(|s| s.chars().map(|ch| ch == '#')).collect();
        RoiBinaryMask::new(r, c, inside).unwrap()
    }

    #[test]
    fn stats_merge_matches_single_pass() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let whole = WhiteStats::from_values(&a);
        let merged = WhiteStats::from_values(&a[..33]).merge(WhiteStats::from_values(&a[33..]));
        assert_eq!(whole.count, merged.count);
        assert!((whole.mean - merged.mean).abs() < 1e-12);
        assert!((whole.std() - merged.std()).abs() < 1e-12);
    }

    #[test]
    fn uniform_slide_has_zero_std() {
        let tiles = vec![DownTile::uniform([200, 150, 180]); 4];
        let s = compute_white_stats(&tiles).unwrap();
        assert_eq!(s.std(), 0.0);
        assert!(compute_white_stats(&[]).is_err());
    }

    #[test]
    fn two_level_mean() {
        // Half the tiles are reference white (d = 0), half are base-brown-ish.
        let brown = DownTile::uniform([117, 89, 67]);
        let white = DownTile::uniform([238, 238, 238]);
        let d1 = tile_white_distances(&brown)[0];
        let s = compute_white_stats(&[brown, white]).unwrap();
        assert!((s.mean - d1 / 2.0).abs() < 1e-9);
        assert!((s.std() - d1 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn binarize_is_strict_and_validates() {
        let fm = RoiFloatMask {
            rows: 1,
            cols: 4,
            scores: vec![
                TileScore { is_artifact: false, fraction: Some(1.0) },
                TileScore { is_artifact: false, fraction: Some(0.0) },
                TileScore { is_artifact: false, fraction: Some(0.85) },
                TileScore { is_artifact: true, fraction: None },
            ],
        };
        let b = binarize(&fm, &BTreeSet::new(), 0.85).unwrap();
        assert_eq!(b.inside, vec![false, true, false, false]);
        let ex: BTreeSet<_> = [TileIndex::new(0, 1)].into();
        assert_eq!(binarize(&fm, &ex, 0.85).unwrap().count(), 0);
        assert!(binarize(&fm, &BTreeSet::new(), 1.5).is_err());
    }

    #[test]
    fn morphology_fixed_points() {
        let all = RoiBinaryMask::filled(5, 5, true);
        assert_eq!(morph_close_open(&all), all);
        let none = RoiBinaryMask::filled(5, 5, false);
        assert_eq!(morph_close_open(&none), none);
    }

    #[test]
    fn closing_fills_single_hole() {
        let m = mask_from(&["#####", "#####", "##.##", "#####", "#####"]);
        assert_eq!(closing(&m, 1), RoiBinaryMask::filled(5, 5, true));
    }

    #[test]
    fn opening_removes_isolated_tile() {
        let m = mask_from(&[".....", ".....", "..#..", ".....", "....."]);
        assert_eq!(morph_close_open(&m).count(), 0);
    }

    #[test]
    fn one_tile_strip_along_block_survives() {
        let m = mask_from(&["......", ".###..", ".###..", ".###..", ".###..", "......"]);
        let with_strip = mask_from(&[".###..", ".###..", ".###..", ".###..", ".###..", "......"]);
        assert_eq!(morph_close_open(&m), m);
        assert_eq!(morph_close_open(&with_strip), with_strip);
    }

    #[test]
    fn all_white_slide_has_empty_roi() {
        let s = SlideRaster::filled("w", 512, 512, [238, 238, 238]).unwrap();
        let r = identify_roi(&s, &RoiConfig::default(), None).unwrap();
        assert_eq!(r.mask.count(), 0);
        assert!(r.float_mask.scores.iter().all(|s| s.fraction == Some(1.0)));
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = mask_from(&["#..", ".##"]);
        let p = dir.path().join("mask.png");
        m.save(&p).unwrap();
        assert_eq!(RoiBinaryMask::load(&p).unwrap(), m);
    }
}
