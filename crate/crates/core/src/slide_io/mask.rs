use std::collections::BTreeSet;
use std::path::Path;

use super::grid::{TileGrid, TileIndex};
use super::raster::{load_gray, save_gray};
use crate::error::{Error, Result};

/// Externally supplied exclusion mask (nonzero = masked).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactMask {
    pub width: u32,
    pub height: u32,
    pub masked: Vec<bool>,
}

impl ArtifactMask {
    pub fn new(width: u32, height: u32, masked: Vec<bool>) -> Result<Self> {
        if masked.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                expected: format!("{} mask values", width as usize * height as usize),
                actual: masked.len().to_string(),
            });
        }
        Ok(Self {
            width,
            height,
            masked,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            masked: vec![false; width as usize * height as usize],
        }
    }

    pub fn is_masked(&self, x: u32, y: u32) -> bool {
        self.masked[y as usize * self.width as usize + x as usize]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (w, h, data) = load_gray(path)?;
        Self::new(w, h, data.into_iter().map(|v| v != 0).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let data: Vec<u8> = self.masked.iter().map(|&m| if m { 255 } else { 0 }).collect();
        save_gray(path, self.width, self.height, &data)
    }
}

/// Tiles excluded by an artifact mask.
///
/// A mask with one value per tile excludes the marked tiles directly. A
/// per-pixel mask excludes a tile when more than half of its in-raster
/// pixels are masked.
pub fn apply_artifact_mask(grid: &TileGrid, mask: &ArtifactMask) -> Result<BTreeSet<TileIndex>> {
    let per_tile = mask.width as usize == grid.cols && mask.height as usize == grid.rows;
    let per_pixel = mask.width == grid.width && mask.height == grid.height;
    if per_tile && !per_pixel {
        return Ok(grid
            .indices()
            .filter(|idx| mask.is_masked(idx.col as u32, idx.row as u32))
            .collect());
    }
    if !per_pixel {
        return Err(Error::DimensionMismatch {
            expected: format!(
                "{}x{} (tiles) or {}x{} (pixels)",
                grid.cols, grid.rows, grid.width, grid.height
            ),
            actual: format!("{}x{}", mask.width, mask.height),
        });
    }
    let mut out = BTreeSet::new();
    for idx in grid.indices() {
        let (x0, y0, w, h) = grid.clipped_rect(idx);
        let mut count = 0u64;
        for y in y0..y0 + h {
            let row = &mask.masked[y as usize * mask.width as usize..][..mask.width as usize];
            count += row[x0 as usize..(x0 + w) as usize].iter().filter(|&&m| m).count() as u64;
        }
        if 2 * count > w as u64 * h as u64 {
            out.insert(idx);
        }
    }
    Ok(out)
}
