//! Convolutional autoencoder over 64×64 RGB tiles.
//!
//! Encoder: three convolution stages (convolution, batch norm, ReLU, 2×2
//! max-pool) followed by two fully connected layers; the output of the
//! second is the 32-wide tile embedding. The decoder mirrors it with two
//! fully connected layers and three upsample-and-convolve stages, ending in
//! a logistic squashing to `[0, 1]`.
//!
//! Convolutions lower to GEMM through im2col. Batch statistics and weight
//! gradients are reduced in a fixed order, so training is bit-reproducible
//! for a given seed whatever the worker count.

mod gradcheck;
mod io;
mod net;
mod ops;
mod real;
mod train;

use rayon::prelude::*;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use io::{read_embeddings, write_embeddings, SlideEmbeddings, EMBEDDING_MAGIC, WEIGHTS_MAGIC};
pub use net::{Activation, CaeConfig, ParamKind, ParamSegment};
pub use real::Real;
pub use train::{cae_train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::slide_io::DownTile;
use net::{Mode, Network};

pub type TileEmbedding = Vec<f32>;

#[derive(Debug, Clone, PartialEq)]
pub struct Cae<T: Real = f32> {
    config: CaeConfig,
    seed: u64,
    net: Network,
    params: Vec<T>,
    running: Vec<T>,
}

impl<T: Real> Cae<T> {
    /// Seeded fan-in-scaled initialization.
    pub fn init(config: CaeConfig, seed: u64) -> Result<Self> {
        let net = Network::build(&config)?;
        let (params, running) = net.init(seed);
        Ok(Self {
            config,
            seed,
            net,
            params,
            running,
        })
    }

    pub fn from_parts(config: CaeConfig, seed: u64, params: Vec<T>, running: Vec<T>) -> Result<Self> {
        let net = Network::build(&config)?;
        if params.len() != net.n_params || running.len() != net.n_stats {
            return Err(Error::DimensionMismatch {
                expected: format!("{} parameters and {} statistics", net.n_params, net.n_stats),
                actual: format!("{} and {}", params.len(), running.len()),
            });
        }
        Ok(Self {
            config,
            seed,
            net,
            params,
            running,
        })
    }

    pub fn config(&self) -> &CaeConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Batch-norm running means and variances.
    pub fn running_stats(&self) -> &[T] {
        &self.running
    }

    pub fn segments(&self) -> &[ParamSegment] {
        &self.net.segments
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let seg = self.net.segments.iter().find(|s| s.name == name)?;
        Some(&mut self.params[seg.offset..seg.offset + seg.len])
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        let n = self.config.input_len();
        if batch == 0 || x.len() != n * batch {
            return Err(Error::DimensionMismatch {
                expected: format!("{batch} × {n} inputs"),
                actual: x.len().to_string(),
            });
        }
        Ok(())
    }

    /// Inference pass on one planar tile: `(reconstruction, embedding)`.
    pub fn forward(&self, tile: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        self.check_input(tile, 1)?;
        let mut stats = self.running.clone();
        let (recon, trace) = self.net.forward(
            &self.params,
            &mut stats,
            tile,
            1,
            Mode::Eval,
            0..self.net.layers.len(),
            true,
        );
        Ok((recon, trace.expect("kept").embedding))
    }

    /// Encoder-only inference on one planar tile.
    pub fn embed(&self, tile: &[T]) -> Result<Vec<T>> {
        self.check_input(tile, 1)?;
        let mut stats = self.running.clone();
        let (emb, _) = self.net.forward(
            &self.params,
            &mut stats,
            tile,
            1,
            Mode::Eval,
            0..self.net.embed_layer + 1,
            false,
        );
        Ok(emb)
    }

    /// Mean squared reconstruction error of a batch with batch statistics.
    pub fn batch_loss(&self, batch: &[T], n: usize) -> Result<f64> {
        self.check_input(batch, n)?;
        Ok(self.loss_with(&self.params, batch, n))
    }

    fn loss_with(&self, params: &[T], batch: &[T], n: usize) -> f64 {
        let mut stats = self.running.clone();
        let (y, _) = self.net.forward(
            params,
            &mut stats,
            batch,
            n,
            Mode::Train { update_stats: false },
            0..self.net.layers.len(),
            false,
        );
        mse(&y, batch)
    }

    /// Loss and its gradient for one training batch; updates the running
    /// statistics when `update_stats` is set.
    pub fn loss_and_grad(&mut self, batch: &[T], n: usize, update_stats: bool) -> Result<(f64, Vec<T>)> {
        self.check_input(batch, n)?;
        let (y, trace) = self.net.forward(
            &self.params,
            &mut self.running,
            batch,
            n,
            Mode::Train { update_stats },
            0..self.net.layers.len(),
            true,
        );
        let loss = mse(&y, batch);
        let scale = T::from_f64(2.0 / y.len() as f64);
        let dy: Vec<T> = y.iter().zip(batch).map(|(&a, &b)| (a - b) * scale).collect();
        let mut grad = vec![T::zero(); self.params.len()];
        self.net
            .backward(&self.params, trace.expect("kept"), dy, n, &mut grad);
        Ok((loss, grad))
    }
}

fn mse<T: Real>(y: &[T], x: &[T]) -> f64 {
    let s: f64 = y.iter().zip(x).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    s / y.len() as f64
}

/// Embeds every tile in order, in parallel.
pub fn encode_all(cae: &Cae<f32>, tiles: &[DownTile]) -> Result<Vec<TileEmbedding>> {
    if tiles.is_empty() {
        return Err(Error::EmptyInput("no region tiles to encode"));
    }
    if cae.config.input_size != crate::slide_io::DOWN_SIZE {
        return Err(Error::invalid(format!(
            "model expects {}px tiles",
            cae.config.input_size
        )));
    }
    tiles.par_iter().map(|t| cae.embed(&t.to_planar::<f32>())).collect()
}
