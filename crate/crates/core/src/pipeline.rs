//! Per-slide processing shared by the experiment runner and the CLI.

use crate::error::Result;
use crate::hist::brown_histogram;
use crate::roi::{identify_roi_tiles, RoiConfig, RoiResult};
use crate::slide_io::{
    apply_artifact_mask, downsample_slide, load_slide, make_grid, ArtifactMask, DownTile, ManifestEntry,
    SlideRaster,
};

/// One slide reduced to what the representations need.
#[derive(Debug, Clone)]
pub struct ProcessedSlide {
    pub entry: ManifestEntry,
    pub roi: RoiResult,
    /// Brown-distance histogram over the region.
    pub counts: Vec<u64>,
    /// Downsampled region tiles in row-major order.
    pub roi_tiles: Vec<DownTile>,
}

/// Region detection and histogram for an in-memory slide.
pub fn process_raster(
    entry: ManifestEntry,
    slide: &SlideRaster,
    cfg: &RoiConfig,
    mask: Option<&ArtifactMask>,
    keep_tiles: bool,
) -> Result<ProcessedSlide> {
    let grid = make_grid(slide, cfg.tile_size)?;
    let tiles = downsample_slide(slide, &grid)?;
    let excluded = match mask {
        Some(m) => apply_artifact_mask(&grid, m)?,
        None => Default::default(),
    };
    let roi = identify_roi_tiles(&tiles, &grid, cfg, excluded)?;
    let counts = brown_histogram(&entry.slide_id, &tiles, &roi.mask)?;
    let roi_tiles = if keep_tiles {
        roi_tiles(tiles, &roi)
    } else {
        Vec::new()
    };
    Ok(ProcessedSlide {
        entry,
        roi,
        counts,
        roi_tiles,
    })
}

/// Loads the slide (and its artifact mask when `use_mask` and the entry
/// names one) and processes it.
pub fn process_entry(entry: &ManifestEntry, cfg: &RoiConfig, use_mask: bool, keep_tiles: bool) -> Result<ProcessedSlide> {
    let slide = load_slide(&entry.path)?.with_slide_id(entry.slide_id.clone());
    let mask = match (&entry.artifact_mask, use_mask) {
        (Some(p), true) => Some(ArtifactMask::load(p)?),
        _ => None,
    };
    process_raster(entry.clone(), &slide, cfg, mask.as_ref(), keep_tiles)
}

/// The tiles inside the final region, in row-major order.
pub fn roi_tiles(tiles: Vec<DownTile>, roi: &RoiResult) -> Vec<DownTile> {
    tiles
        .into_iter()
        .zip(&roi.mask.inside)
        .filter_map(|(t, &inside)| inside.then_some(t))
        .collect()
}
