//! Weakly-supervised PD-L1 classification of whole-slide images.
//!
//! A slide is tiled, its tumor region is located from color distances to
//! the background white, and the region is summarised either as a histogram
//! of distances to the stain color or as convolutional-autoencoder tile
//! embeddings aggregated per slide. Slide-level classifiers (two-threshold
//! baseline, random forest, SVM) are trained from slide labels alone.

pub mod aggregate;
mod binio;
pub mod cae;
pub mod classifiers;
pub mod colorspace;
pub mod error;
pub mod experiment;
pub mod features;
pub mod hist;
pub mod pipeline;
pub mod roi;
pub mod seeds;
pub mod slide_io;
pub mod synth;

pub use colorspace::{ciede2000, srgb_to_lab, LabColor, RgbColor, BASE_BROWN, REFERENCE_WHITE};
pub use error::{Error, Result};
pub use features::FeatureTable;
pub use slide_io::{DatasetId, DatasetManifest, Label, SlideRaster, TileGrid, TileIndex};
