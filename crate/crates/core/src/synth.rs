//! Synthetic stained slides with pixel-exact ground truth.
//!
//! A slide is reference-white background with a tile-aligned rectangle of
//! pink/violet tissue. A chosen fraction of the tissue pixels is painted in
//! brown hotspots; the slide is positive when that fraction reaches 1%.
//! Optional artifacts: near-black tiles on the background, and brown strips
//! one tile thick running along a whole side of the tissue, each strip
//! recorded in a per-pixel artifact mask.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::write_text;
use crate::roi::RoiBinaryMask;
use crate::seeds::{fnv1a64, indexed_seed};
use crate::slide_io::{
    save_gray, save_slide, write_manifest, ArtifactMask, DatasetId, DatasetManifest, Label, ManifestEntry,
    SlideRaster, TileIndex,
};

/// Stained fraction of tissue at and above which a slide is positive.
pub const POSITIVE_STAIN_FRACTION: f64 = 0.01;

/// Tile-aligned rectangle in tile units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TileRect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Internal,
    /// Slight hue shift of the tissue and stain tones.
    External,
}

impl Palette {
    fn tones(self) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
        // (pink, violet, nucleus, stain)
        match self {
            Palette::Internal => ([222.0, 172.0, 200.0], [196.0, 156.0, 206.0], [150.0, 100.0, 170.0], [117.3, 88.9, 67.3]),
            Palette::External => ([226.0, 168.0, 196.0], [200.0, 150.0, 208.0], [156.0, 98.0, 166.0], [119.0, 88.0, 65.0]),
        }
    }
}

impl From<DatasetId> for Palette {
    fn from(d: DatasetId) -> Self {
        match d {
            DatasetId::Internal => Palette::Internal,
            DatasetId::External => Palette::External,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub tile_size: u32,
    /// Random placement when `None`.
    pub tissue: Option<TileRect>,
    /// Side range, in tiles, of randomly placed tissue.
    pub tissue_tiles: (usize, usize),
    /// Fraction of tissue pixels painted as stain.
    pub stain_fraction: f64,
    pub hotspots: usize,
    pub dark_artifacts: usize,
    pub brown_artifacts: usize,
    /// Per-channel uniform noise amplitude of the background.
    pub background_jitter: u8,
    /// Per-channel uniform noise amplitude of tissue and stain.
    pub jitter: u8,
    pub palette: Palette,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 2048,
            height: 2048,
            tile_size: 256,
            tissue: None,
            tissue_tiles: (3, 5),
            stain_fraction: 0.0,
            hotspots: 4,
            dark_artifacts: 1,
            brown_artifacts: 0,
            background_jitter: 2,
            jitter: 4,
            palette: Palette::Internal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthGroundTruth {
    pub tissue: Vec<bool>,
    pub stain: Vec<bool>,
    pub tissue_pixels: usize,
    pub stain_pixels: usize,
    /// Tile inside ⇔ more than half of its pixels are tissue.
    pub roi: RoiBinaryMask,
    pub label: Label,
    pub dark_tiles: BTreeSet<TileIndex>,
    pub brown_tiles: BTreeSet<TileIndex>,
    /// Per-pixel brown-artifact mask, when any strip was planted.
    pub artifact_mask: Option<ArtifactMask>,
}

impl SynthGroundTruth {
    pub fn stain_fraction(&self) -> f64 {
        self.stain_pixels as f64 / self.tissue_pixels.max(1) as f64
    }
}

/// Summary written next to each generated slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideTruthRecord {
    pub slide_id: String,
    pub label: Label,
    pub stain_fraction: f64,
    pub tissue_pixels: usize,
    pub stain_pixels: usize,
    pub dark_tiles: Vec<TileIndex>,
    pub brown_tiles: Vec<TileIndex>,
    pub config: SynthConfig,
}

fn jittered(rng: &mut ChaCha8Rng, base: [f64; 3], amp: u8) -> [u8; 3] {
    let a = amp as i32;
    base.map(|v| (v.round() as i32 + if a > 0 { rng.gen_range(-a..=a) } else { 0 }).clamp(0, 255) as u8)
}

struct Canvas {
    w: usize,
    h: usize,
    ts: usize,
    rows: usize,
    cols: usize,
}

impl Canvas {
    fn tile_pixels(&self, r: usize, c: usize) -> impl Iterator<Item = usize> + '_ {
        let (x0, y0) = (c * self.ts, r * self.ts);
        let (x1, y1) = ((x0 + self.ts).min(self.w), (y0 + self.ts).min(self.h));
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| y * self.w + x))
    }

    fn full_tile(&self, r: usize, c: usize) -> bool {
        (r + 1) * self.ts <= self.h && (c + 1) * self.ts <= self.w
    }
}

fn validate(cfg: &SynthConfig, canvas: &Canvas) -> Result<()> {
    if cfg.width == 0 || cfg.height == 0 || cfg.tile_size == 0 {
        return Err(Error::invalid("canvas and tile size must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.stain_fraction) {
        return Err(Error::invalid(format!("stain fraction {} outside [0, 1]", cfg.stain_fraction)));
    }
    if cfg.stain_fraction > 0.0 && cfg.hotspots == 0 {
        return Err(Error::invalid("stain needs at least one hotspot"));
    }
    let (lo, hi) = cfg.tissue_tiles;
    if let Some(t) = cfg.tissue {
        if t.rows == 0 || t.cols == 0 || t.row + t.rows > canvas.rows || t.col + t.cols > canvas.cols {
            return Err(Error::invalid("tissue rectangle does not fit the canvas"));
        }
        if !(0..t.rows).all(|r| (0..t.cols).all(|c| canvas.full_tile(t.row + r, t.col + c))) {
            return Err(Error::invalid("tissue rectangle must cover whole tiles"));
        }
    } else if lo == 0 || lo > hi || hi + 2 > canvas.rows.min(canvas.cols) {
        return Err(Error::invalid(format!(
            "tissue side range {lo}..={hi} does not fit a {}x{} tile grid with a one-tile margin",
            canvas.rows, canvas.cols
        )));
    }
    Ok(())
}

/// Renders one slide and its ground truth; identical configs give
/// bit-identical output.
pub fn generate_slide(slide_id: &str, cfg: &SynthConfig) -> Result<(SlideRaster, SynthGroundTruth)> {
    let ts = cfg.tile_size as usize;
    let canvas = Canvas {
        w: cfg.width as usize,
        h: cfg.height as usize,
        ts,
        rows: (cfg.height as usize).div_ceil(ts.max(1)),
        cols: (cfg.width as usize).div_ceil(ts.max(1)),
    };
    validate(cfg, &canvas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (canvas.w, canvas.h);
    let n_px = w * h;

    let tissue_rect = match cfg.tissue {
        Some(t) => t,
        None => {
            let full_rows = h / ts;
            let full_cols = w / ts;
            let (lo, hi) = cfg.tissue_tiles;
            let rows = rng.gen_range(lo..=hi.min(full_rows - 2));
            let cols = rng.gen_range(lo..=hi.min(full_cols - 2));
            TileRect {
                row: rng.gen_range(1..=full_rows - 1 - rows),
                col: rng.gen_range(1..=full_cols - 1 - cols),
                rows,
                cols,
            }
        }
    };

    // Brown strips along whole sides of the tissue, one tile thick.
    let t = tissue_rect;
    let mut sides: Vec<TileRect> = Vec::new();
    if t.row > 0 {
        sides.push(TileRect { row: t.row - 1, col: t.col, rows: 1, cols: t.cols });
    }
    if t.row + t.rows < canvas.rows {
        sides.push(TileRect { row: t.row + t.rows, col: t.col, rows: 1, cols: t.cols });
    }
    if t.col > 0 {
        sides.push(TileRect { row: t.row, col: t.col - 1, rows: t.rows, cols: 1 });
    }
    if t.col + t.cols < canvas.cols {
        sides.push(TileRect { row: t.row, col: t.col + t.cols, rows: t.rows, cols: 1 });
    }
    sides.retain(|s| (0..s.rows).all(|r| (0..s.cols).all(|c| canvas.full_tile(s.row + r, s.col + c))));
    sides.shuffle(&mut rng);
    if cfg.brown_artifacts > sides.len() {
        return Err(Error::invalid(format!(
            "{} brown strips requested but only {} tissue sides are free",
            cfg.brown_artifacts,
            sides.len()
        )));
    }
    let strips = &sides[..cfg.brown_artifacts];
    let mut brown_tiles = BTreeSet::new();
    for s in strips {
        for r in 0..s.rows {
            for c in 0..s.cols {
                brown_tiles.insert(TileIndex::new(s.row + r, s.col + c));
            }
        }
    }

    // Dark tiles on background, not touching tissue or strips.
    let mut candidates: Vec<TileIndex> = Vec::new();
    for r in 0..canvas.rows {
        for c in 0..canvas.cols {
            let near = |rect: &TileRect| {
                r + 1 >= rect.row && r <= rect.row + rect.rows && c + 1 >= rect.col && c <= rect.col + rect.cols
            };
            if canvas.full_tile(r, c) && !near(&t) && !strips.iter().any(near) {
                candidates.push(TileIndex::new(r, c));
            }
        }
    }
    candidates.shuffle(&mut rng);
    if cfg.dark_artifacts > candidates.len() {
        return Err(Error::invalid(format!(
            "{} dark tiles requested but only {} background tiles are free",
            cfg.dark_artifacts,
            candidates.len()
        )));
    }
    let dark_tiles: BTreeSet<TileIndex> = candidates[..cfg.dark_artifacts].iter().copied().collect();

    let mut tissue = vec![false; n_px];
    for r in t.row..t.row + t.rows {
        for c in t.col..t.col + t.cols {
            canvas.tile_pixels(r, c).for_each(|i| tissue[i] = true);
        }
    }
    let tissue_pixels = tissue.iter().filter(|&&b| b).count();

    // Nuclei: small disks inside tissue.
    let (x0, y0) = (t.col * ts, t.row * ts);
    let (tw, th) = (t.cols * ts, t.rows * ts);
    let mut nucleus = vec![false; n_px];
    for _ in 0..tissue_pixels / 1200 {
        let (cx, cy) = (x0 + rng.gen_range(0..tw), y0 + rng.gen_range(0..th));
        let rad: usize = rng.gen_range(3..=6);
        for y in cy.saturating_sub(rad)..(cy + rad + 1).min(y0 + th) {
            for x in cx.saturating_sub(rad)..(cx + rad + 1).min(x0 + tw) {
                let (dx, dy) = (x as f64 - cx as f64, y as f64 - cy as f64);
                if dx * dx + dy * dy <= (rad * rad) as f64 {
                    nucleus[y * w + x] = true;
                }
            }
        }
    }

    // Stain: the `n` tissue pixels nearest to the hotspot centres, with a
    // ragged boundary from hashed noise.
    let n_stain = (cfg.stain_fraction * tissue_pixels as f64).round() as usize;
    let mut stain = vec![false; n_px];
    if n_stain > 0 {
        let centres: Vec<(f64, f64, f64)> = (0..cfg.hotspots)
            .map(|_| {
                (
                    (x0 + rng.gen_range(0..tw)) as f64,
                    (y0 + rng.gen_range(0..th)) as f64,
                    rng.gen_range(0.6..1.4),
                )
            })
            .collect();
        let noise_key = rng.gen::<u64>();
        let mut scored: Vec<(f32, u32)> = (0..n_px)
            .into_par_iter()
            .filter(|&i| tissue[i])
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let d = centres
                    .iter()
                    .map(|&(cx, cy, s)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() * s)
                    .fold(f64::INFINITY, f64::min);
                let noise = (crate::seeds::splitmix64(noise_key ^ i as u64) >> 40) as f64 / (1u64 << 24) as f64;
                ((d + 12.0 * noise) as f32, i as u32)
            })
            .collect();
        if n_stain < scored.len() {
            scored.select_nth_unstable_by(n_stain, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(_, i) in &scored[..n_stain] {
            stain[i as usize] = true;
        }
    }

    let (pink, violet, nuc, brown) = cfg.palette.tones();
    #[allow(clippy::approx_constant)]
    let (p1, p2) = (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28));
    let mut brown_px = vec![false; n_px];
    for ti in &brown_tiles {
        canvas.tile_pixels(ti.row, ti.col).for_each(|i| brown_px[i] = true);
    }
    let mut dark_px = vec![false; n_px];
    for ti in &dark_tiles {
        canvas.tile_pixels(ti.row, ti.col).for_each(|i| dark_px[i] = true);
    }
    let mut pixels = Vec::with_capacity(n_px * 3);
    for i in 0..n_px {
        let px = if stain[i] {
            jittered(&mut rng, brown, cfg.jitter.min(2))
        } else if tissue[i] {
            if nucleus[i] {
                jittered(&mut rng, nuc, cfg.jitter)
            } else {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let m = 0.5 + 0.25 * (x / 41.0 + p1).sin() + 0.25 * (y / 57.0 + p2).sin();
                let base = [0, 1, 2].map(|k| pink[k] * (1.0 - m) + violet[k] * m);
                jittered(&mut rng, base, cfg.jitter)
            }
        } else if brown_px[i] {
            jittered(&mut rng, [117.0, 89.0, 67.0], 3)
        } else if dark_px[i] {
            [rng.gen_range(0..=16u8); 3]
        } else {
            jittered(&mut rng, [238.0; 3], cfg.background_jitter)
        };
        pixels.extend_from_slice(&px);
    }

    let mut roi = RoiBinaryMask::filled(canvas.rows, canvas.cols, false);
    for r in 0..canvas.rows {
        for c in 0..canvas.cols {
            let (mut n, mut inside) = (0usize, 0usize);
            for i in canvas.tile_pixels(r, c) {
                n += 1;
                inside += tissue[i] as usize;
            }
            roi.set(r, c, 2 * inside > n);
        }
    }
    let stain_pixels = n_stain;
    let label = Label::from_bool(stain_pixels as f64 >= POSITIVE_STAIN_FRACTION * tissue_pixels as f64);
    let artifact_mask = (!brown_tiles.is_empty())
        .then(|| ArtifactMask::new(cfg.width, cfg.height, brown_px))
        .transpose()?;
    let raster = SlideRaster::new(slide_id, cfg.width, cfg.height, pixels)?;
    Ok((
        raster,
        SynthGroundTruth {
            tissue,
            stain,
            tissue_pixels,
            stain_pixels,
            roi,
            label,
            dark_tiles,
            brown_tiles,
            artifact_mask,
        },
    ))
}

/// Ranges from which per-slide generator settings are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub dataset: DatasetId,
    pub seed: u64,
    pub positive_stain: (f64, f64),
    pub negative_stain: (f64, f64),
    pub dark_artifacts: (usize, usize),
    /// Fraction of slides, per class, carrying brown strips.
    pub brown_artifact_rate: f64,
    /// Strip count on slides that carry them.
    pub brown_artifacts: (usize, usize),
    /// Write per-pixel artifact masks for slides with strips.
    pub write_artifact_masks: bool,
    pub base: SynthConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_pos: 0,
            n_neg: 0,
            dataset: DatasetId::Internal,
            seed: 0,
            positive_stain: (0.03, 0.08),
            negative_stain: (0.0, 0.003),
            dark_artifacts: (0, 2),
            brown_artifact_rate: 0.0,
            brown_artifacts: (1, 2),
            write_artifact_masks: true,
            base: SynthConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn new(n_pos: usize, n_neg: usize, dataset: DatasetId, seed: u64) -> Self {
        Self {
            n_pos,
            n_neg,
            dataset,
            seed,
            ..Self::default()
        }
    }

    /// Slide id, label and generator config of every slide, in id order.
    pub fn plan(&self) -> Vec<(String, Label, SynthConfig)> {
        let root = self.seed ^ fnv1a64(self.dataset.to_string().as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        let mut labels: Vec<Label> = std::iter::repeat_n(Label::Positive, self.n_pos)
            .chain(std::iter::repeat_n(Label::Negative, self.n_neg))
            .collect();
        labels.shuffle(&mut rng);
        // Strips go to an exact share of each class.
        let mut strips = vec![false; labels.len()];
        for class in [Label::Positive, Label::Negative] {
            let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            rows.shuffle(&mut rng);
            let k = (self.brown_artifact_rate * rows.len() as f64).round() as usize;
            rows[..k].iter().for_each(|&i| strips[i] = true);
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| {
                let seed = indexed_seed(root, i as u64);
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = if label.is_positive() { self.positive_stain } else { self.negative_stain };
                let stain_fraction = if hi > lo { r.gen_range(lo..hi) } else { lo };
                let cfg = SynthConfig {
                    seed,
                    stain_fraction,
                    dark_artifacts: r.gen_range(self.dark_artifacts.0..=self.dark_artifacts.1),
                    brown_artifacts: if strips[i] {
                        r.gen_range(self.brown_artifacts.0..=self.brown_artifacts.1)
                    } else {
                        0
                    },
                    palette: self.dataset.into(),
                    ..self.base.clone()
                };
                (format!("{}-{:03}", self.dataset, i), label, cfg)
            })
            .collect()
    }
}

/// Paths of one generated slide's files.
pub fn slide_files(dir: &Path, slide_id: &str) -> (PathBuf, PathBuf, PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{slide_id}.png")),
        dir.join(format!("{slide_id}.tissue.png")),
        dir.join(format!("{slide_id}.roi.png")),
        dir.join(format!("{slide_id}.artifacts.png")),
        dir.join(format!("{slide_id}.truth.json")),
    )
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Writes every slide with its ground truth and a manifest (paths relative
/// to `dir`) to `dir/manifest.tsv`.
pub fn generate_corpus(cfg: &CorpusConfig, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let plan = cfg.plan();
    let entries = plan
        .par_iter()
        .map(|(id, label, scfg)| -> Result<ManifestEntry> {
            let (raster, truth) = generate_slide(id, scfg)?;
            if truth.label != *label {
                return Err(Error::invalid(format!(
                    "slide `{id}`: stain fraction {} gives label {}, planned {label}",
                    truth.stain_fraction(),
                    truth.label
                )));
            }
            let (png, tissue_png, roi_png, mask_png, json) = slide_files(dir, id);
            save_slide(&raster, &png)?;
            let tissue: Vec<u8> = truth.tissue.iter().map(|&b| if b { 255 } else { 0 }).collect();
            save_gray(&tissue_png, scfg.width, scfg.height, &tissue)?;
            truth.roi.save(&roi_png)?;
            let mut artifact_mask = None;
            if let (true, Some(m)) = (cfg.write_artifact_masks, &truth.artifact_mask) {
                m.save(&mask_png)?;
                artifact_mask = Some(PathBuf::from(mask_png.file_name().expect("file name")));
            }
            let record = SlideTruthRecord {
                slide_id: id.clone(),
                label: truth.label,
                stain_fraction: truth.stain_fraction(),
                tissue_pixels: truth.tissue_pixels,
                stain_pixels: truth.stain_pixels,
                dark_tiles: truth.dark_tiles.iter().copied().collect(),
                brown_tiles: truth.brown_tiles.iter().copied().collect(),
                config: scfg.clone(),
            };
            let text = serde_json::to_string_pretty(&record).map_err(|e| Error::format("truth", e.to_string()))?;
            write_text(&json, &text)?;
            Ok(ManifestEntry {
                slide_id: id.clone(),
                path: PathBuf::from(png.file_name().expect("file name")),
                label: *label,
                dataset: cfg.dataset,
                artifact_mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(entries)?;
    write_manifest(&manifest, dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<SlideTruthRecord> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::format("truth", e.to_string()))
}

/// Named corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Internal 20 positive / 19 negative, external 4 positive / 21 negative.
    Paperlike,
    /// Internal 6/6 and external 3/3 at 1280×1280.
    Small,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paperlike" => Ok(Preset::Paperlike),
            "small" => Ok(Preset::Small),
            other => Err(Error::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

impl Preset {
    pub fn corpora(self, seed: u64) -> Vec<CorpusConfig> {
        match self {
            Preset::Paperlike => vec![
                CorpusConfig::new(20, 19, DatasetId::Internal, seed),
                CorpusConfig::new(4, 21, DatasetId::External, seed),
            ],
            Preset::Small => {
                let base = SynthConfig {
                    width: 1280,
                    height: 1280,
                    tissue_tiles: (3, 3),
                    ..SynthConfig::default()
                };
                [(6, 6, DatasetId::Internal), (3, 3, DatasetId::External)]
                    .into_iter()
                    .map(|(p, n, d)| CorpusConfig {
                        dark_artifacts: (0, 0),
                        base: base.clone(),
                        ..CorpusConfig::new(p, n, d, seed)
                    })
                    .collect()
            }
        }
    }
}

/// Generates every corpus of a preset under `out/<dataset>/`.
pub fn generate_preset(preset: Preset, seed: u64, out: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out = out.as_ref();
    preset
        .corpora(seed)
        .iter()
        .map(|c| {
            let dir = out.join(c.dataset.to_string());
            generate_corpus(c, &dir)?;
            Ok(dir.join(MANIFEST_NAME))
        })
        .collect()
}
