//! Slide rasters, tiling, downsampling, dataset manifests and artifact masks.

mod grid;
mod manifest;
mod mask;
mod raster;

pub use grid::{
    downsample_slide, downsample_tile, extract_tile, make_grid, tile, DownTile, Tile, TileGrid,
    TileIndex, DEFAULT_TILE_SIZE, DOWN_LEN, DOWN_SIZE, PAD_PIXEL,
};
pub use manifest::{
    read_manifest, read_manifest_resolved, write_manifest, DatasetId, DatasetManifest, Label,
    ManifestEntry,
};
pub use mask::{apply_artifact_mask, ArtifactMask};
pub use raster::{load_gray, load_slide, save_gray, save_slide, SlideRaster};
