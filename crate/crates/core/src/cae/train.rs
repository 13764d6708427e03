use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::Cae;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.001,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sample-weighted mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
        let step = cfg.lr * (1.0 - cfg.beta2.powi(self.t)).sqrt() / (1.0 - cfg.beta1.powi(self.t));
        let (step, eps) = (T::from_f64(step), T::from_f64(cfg.adam_eps));
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}

/// Mini-batch Adam on the mean squared reconstruction error. `on_epoch` is
/// called with each finished epoch's index and mean loss.
pub fn cae_train<T: Real>(
    cae: &mut Cae<T>,
    tiles: &[Vec<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if tiles.is_empty() {
        return Err(Error::EmptyInput("no tiles to train on"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::invalid("epochs, batch size and learning rate must be positive"));
    }
    let n_in = cae.config().input_len();
    if let Some(bad) = tiles.iter().find(|t| t.len() != n_in) {
        return Err(Error::DimensionMismatch {
            expected: format!("{n_in} values per tile"),
            actual: bad.len().to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cae.params().len());
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size * n_in);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            for &i in idx {
                batch.extend_from_slice(&tiles[i]);
            }
            let (loss, grad) = cae.loss_and_grad(&batch, idx.len(), true)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: bi,
                    loss,
                });
            }
            adam.step(cae.params_mut(), &grad, cfg);
            total += loss * idx.len() as f64;
        }
        let mean = total / tiles.len() as f64;
        log::debug!("cae epoch {}: loss {mean:.6}", epoch + 1);
        on_epoch(epoch + 1, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainReport { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::super::CaeConfig;
    use super::*;

    #[test]
    fn constant_tiles_are_learned() {
        let cfg = CaeConfig {
            input_size: 16,
            channels: [4, 4, 4],
            hidden: 16,
            embed_dim: 4,
            ..CaeConfig::default()
        };
        let mut cae = Cae::<f32>::init(cfg, 1).unwrap();
        let tile = vec![0.7f32; cfg.input_len()];
        let tiles = vec![tile; 8];
        let tc = TrainConfig {
            epochs: 200,
            lr: 0.01,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let report = cae_train(&mut cae, &tiles, &tc, |_, _| {}).unwrap();
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        assert!(last < 5e-4 && last < first * 1e-2, "{first} -> {last}");
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = CaeConfig::tiny();
        let tiles: Vec<Vec<f32>> = (0..10)
            .map(|i| (0..cfg.input_len()).map(|j| ((i * 31 + j * 7) % 17) as f32 / 17.0).collect())
            .collect();
        let tc = TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let run = || {
            let mut cae = Cae::<f32>::init(cfg, 9).unwrap();
            let r = cae_train(&mut cae, &tiles, &tc, |_, _| {}).unwrap();
            (cae, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(cae_train(&mut Cae::<f32>::init(cfg, 9).unwrap(), &[], &tc, |_, _| {}).is_err());
    }
}
