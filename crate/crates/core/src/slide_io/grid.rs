use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::SlideRaster;
use crate::error::{Error, Result};

/// Side of a downsampled tile in pixels.
pub const DOWN_SIZE: usize = 64;
/// Bytes in one downsampled RGB tile.
pub const DOWN_LEN: usize = DOWN_SIZE * DOWN_SIZE * 3;
pub const DEFAULT_TILE_SIZE: u32 = 256;

/// Padding color for partial edge tiles (the reference background white).
pub const PAD_PIXEL: [u8; 3] = [238, 238, 238];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileIndex {
    pub row: usize,
    pub col: usize,
}

impl TileIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Partition of a slide into `tile_size` squares, row-major. Edge tiles may
/// extend past the raster and are padded on extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: u32,
    pub rows: usize,
    pub cols: usize,
    pub width: u32,
    pub height: u32,
}

impl TileGrid {
    pub fn new(width: u32, height: u32, tile_size: u32) -> Result<Self> {
        if tile_size == 0 {
            return Err(Error::invalid("tile size must be at least 1"));
        }
        Ok(Self {
            tile_size,
            rows: height.div_ceil(tile_size) as usize,
            cols: width.div_ceil(tile_size) as usize,
            width,
            height,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, linear: usize) -> TileIndex {
        TileIndex::new(linear / self.cols, linear % self.cols)
    }

    pub fn linear(&self, idx: TileIndex) -> usize {
        idx.row * self.cols + idx.col
    }

    pub fn indices(&self) -> impl Iterator<Item = TileIndex> + '_ {
        (0..self.len()).map(|i| self.index(i))
    }

    /// Origin of the tile in slide pixels.
    pub fn origin(&self, idx: TileIndex) -> (u32, u32) {
        (idx.col as u32 * self.tile_size, idx.row as u32 * self.tile_size)
    }

    /// Part of the tile that lies inside the raster: `(x0, y0, w, h)`.
    pub fn clipped_rect(&self, idx: TileIndex) -> (u32, u32, u32, u32) {
        let (x0, y0) = self.origin(idx);
        let w = self.tile_size.min(self.width - x0);
        let h = self.tile_size.min(self.height - y0);
        (x0, y0, w, h)
    }
}

pub fn make_grid(slide: &SlideRaster, tile_size: u32) -> Result<TileGrid> {
    TileGrid::new(slide.width(), slide.height(), tile_size)
}

/// A 64×64 RGB tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownTile {
    data: Vec<u8>,
}

impl DownTile {
    pub fn new(data: Vec<u8>) -> Result<Self> {
        if data.len() != DOWN_LEN {
            return Err(Error::DimensionMismatch {
                expected: format!("{DOWN_LEN} bytes (64x64x3)"),
                actual: format!("{} bytes", data.len()),
            });
        }
        Ok(Self { data })
    }

    pub fn uniform(px: [u8; 3]) -> Self {
        Self {
            data: px.iter().copied().cycle().take(DOWN_LEN).collect(),
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * DOWN_SIZE + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Channel-planar `[0,1]` floats (3×64×64), the CAE input layout.
    pub fn to_planar<T: From<f32>>(&self) -> Vec<T> {
        let plane = DOWN_SIZE * DOWN_SIZE;
        let mut out = Vec::with_capacity(3 * plane);
        for c in 0..3 {
            out.extend(
                (0..plane).map(|p| T::from(self.data[p * 3 + c] as f32 / 255.0)),
            );
        }
        out
    }
}

/// A native-resolution tile with its downsampled form.
#[derive(Debug, Clone)]
pub struct Tile {
    pub index: TileIndex,
    pub tile_size: u32,
    /// `tile_size × tile_size × 3`, padded with [`PAD_PIXEL`] past the raster edge.
    pub native: Vec<u8>,
    pub down: DownTile,
}

/// Copies one tile out of the slide, padding partial edge tiles.
pub fn extract_tile(slide: &SlideRaster, grid: &TileGrid, idx: TileIndex) -> Vec<u8> {
    let ts = grid.tile_size as usize;
    let mut out: Vec<u8> = PAD_PIXEL.iter().copied().cycle().take(ts * ts * 3).collect();
    let (x0, y0, w, h) = grid.clipped_rect(idx);
    for dy in 0..h {
        let row = slide.row(y0 + dy);
        let src = &row[x0 as usize * 3..(x0 + w) as usize * 3];
        let dst_start = dy as usize * ts * 3;
        out[dst_start..dst_start + src.len()].copy_from_slice(src);
    }
    out
}

fn check_downsample_size(tile_size: u32) -> Result<usize> {
    if tile_size == 0 || !(tile_size as usize).is_multiple_of(DOWN_SIZE) {
        return Err(Error::invalid(format!(
            "tile size {tile_size} is not a positive multiple of {DOWN_SIZE}"
        )));
    }
    Ok(tile_size as usize / DOWN_SIZE)
}

/// Box-average downsampling to 64×64, rounding half up per channel.
pub fn downsample_tile(native: &[u8], tile_size: u32) -> Result<DownTile> {
    let block = check_downsample_size(tile_size)?;
    let ts = tile_size as usize;
    if native.len() != ts * ts * 3 {
        return Err(Error::DimensionMismatch {
            expected: format!("{} bytes", ts * ts * 3),
            actual: format!("{} bytes", native.len()),
        });
    }
    let n = (block * block) as u32;
    let mut out = vec![0u8; DOWN_LEN];
    for oy in 0..DOWN_SIZE {
        for ox in 0..DOWN_SIZE {
            let mut sum = [0u32; 3];
            for by in 0..block {
                let row = (oy * block + by) * ts;
                for bx in 0..block {
                    let i = (row + ox * block + bx) * 3;
                    sum[0] += native[i] as u32;
                    sum[1] += native[i + 1] as u32;
                    sum[2] += native[i + 2] as u32;
                }
            }
            let o = (oy * DOWN_SIZE + ox) * 3;
            for c in 0..3 {
                out[o + c] = ((sum[c] + n / 2) / n) as u8;
            }
        }
    }
    DownTile::new(out)
}

pub fn tile(slide: &SlideRaster, grid: &TileGrid, idx: TileIndex) -> Result<Tile> {
    let native = extract_tile(slide, grid, idx);
    let down = downsample_tile(&native, grid.tile_size)?;
    Ok(Tile {
        index: idx,
        tile_size: grid.tile_size,
        native,
        down,
    })
}

/// Downsampled form of every tile in row-major order.
pub fn downsample_slide(slide: &SlideRaster, grid: &TileGrid) -> Result<Vec<DownTile>> {
    check_downsample_size(grid.tile_size)?;
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let native = extract_tile(slide, grid, grid.index(i));
            downsample_tile(&native, grid.tile_size)
        })
        .collect()
}
