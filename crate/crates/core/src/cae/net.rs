use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ops::{self, ConvShape};
use super::real::{matmul, matmul_at, matmul_bt, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Network shape. The defaults give the full-size 64×64 model with a
/// 32-wide embedding; smaller instances exist for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeConfig {
    pub input_size: usize,
    pub channels: [usize; 3],
    pub kernels: [usize; 3],
    pub hidden: usize,
    pub embed_dim: usize,
    pub batch_norm: bool,
    pub activation: Activation,
    /// Logistic squashing of the reconstruction.
    pub squash_output: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            channels: [16, 32, 64],
            kernels: [5, 3, 3],
            hidden: 256,
            embed_dim: 32,
            batch_norm: true,
            activation: Activation::Relu,
            squash_output: true,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

impl CaeConfig {
    /// 8×8 input with a handful of channels.
    pub fn tiny() -> Self {
        Self {
            input_size: 8,
            channels: [2, 3, 4],
            kernels: [5, 3, 3],
            hidden: 6,
            embed_dim: 4,
            ..Self::default()
        }
    }

    pub fn input_len(&self) -> usize {
        3 * self.input_size * self.input_size
    }

    fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(8) {
            return Err(Error::invalid(format!(
                "input size {} is not a positive multiple of 8",
                self.input_size
            )));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid("kernel sizes must be odd"));
        }
        if self.channels.contains(&0) || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Layer {
    Conv {
        s: ConvShape,
        weight: usize,
        bias: Option<usize>,
    },
    BatchNorm {
        c: usize,
        hw: usize,
        gamma: usize,
        beta: usize,
        stats: usize,
    },
    Act(Activation),
    MaxPool {
        c: usize,
        h: usize,
        w: usize,
    },
    Upsample {
        c: usize,
        h: usize,
        w: usize,
    },
    Fc {
        nin: usize,
        nout: usize,
        weight: usize,
        bias: usize,
    },
    Sigmoid,
}

impl Layer {
    fn out_len(&self, in_len: usize) -> usize {
        match *self {
            Layer::Conv { s, .. } => s.cout * s.hw(),
            Layer::MaxPool { c, h, w } => c * (h / 2) * (w / 2),
            Layer::Upsample { c, h, w } => c * 4 * h * w,
            Layer::Fc { nout, .. } => nout,
            _ => in_len,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub kind: ParamKind,
    pub offset: usize,
    pub len: usize,
    pub fan_in: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Network {
    pub layers: Vec<Layer>,
    /// Index of the layer whose output is the embedding.
    pub embed_layer: usize,
    pub segments: Vec<ParamSegment>,
    pub n_params: usize,
    /// Running mean and variance of every batch-norm layer.
    pub n_stats: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

struct Builder {
    layers: Vec<Layer>,
    segments: Vec<ParamSegment>,
    n_params: usize,
    n_stats: usize,
}

impl Builder {
    fn alloc(&mut self, name: String, kind: ParamKind, len: usize, fan_in: usize) -> usize {
        let offset = self.n_params;
        self.segments.push(ParamSegment {
            name,
            kind,
            offset,
            len,
            fan_in,
        });
        self.n_params += len;
        offset
    }

    fn conv(&mut self, name: &str, s: ConvShape, with_bias: bool) {
        let fan_in = s.col_rows();
        let weight = self.alloc(format!("{name}.weight"), ParamKind::Weight, s.cout * fan_in, fan_in);
        let bias = with_bias.then(|| self.alloc(format!("{name}.bias"), ParamKind::Bias, s.cout, fan_in));
        self.layers.push(Layer::Conv { s, weight, bias });
    }

    fn bn(&mut self, name: &str, c: usize, hw: usize) {
        let gamma = self.alloc(format!("{name}.gamma"), ParamKind::Gamma, c, 0);
        let beta = self.alloc(format!("{name}.beta"), ParamKind::Beta, c, 0);
        let stats = self.n_stats;
        self.n_stats += 2 * c;
        self.layers.push(Layer::BatchNorm {
            c,
            hw,
            gamma,
            beta,
            stats,
        });
    }

    fn fc(&mut self, name: &str, nin: usize, nout: usize) {
        let weight = self.alloc(format!("{name}.weight"), ParamKind::Weight, nout * nin, nin);
        let bias = self.alloc(format!("{name}.bias"), ParamKind::Bias, nout, nin);
        self.layers.push(Layer::Fc {
            nin,
            nout,
            weight,
            bias,
        });
    }
}

impl Network {
    pub fn build(cfg: &CaeConfig) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder {
            layers: Vec::new(),
            segments: Vec::new(),
            n_params: 0,
            n_stats: 0,
        };
        let act = cfg.activation;
        let mut side = cfg.input_size;
        let mut c = 3;
        for i in 0..3 {
            let s = ConvShape {
                cin: c,
                cout: cfg.channels[i],
                k: cfg.kernels[i],
                h: side,
                w: side,
            };
            b.conv(&format!("enc.conv{}", i + 1), s, !cfg.batch_norm);
            if cfg.batch_norm {
                b.bn(&format!("enc.bn{}", i + 1), s.cout, s.hw());
            }
            b.layers.push(Layer::Act(act));
            b.layers.push(Layer::MaxPool {
                c: s.cout,
                h: side,
                w: side,
            });
            side /= 2;
            c = s.cout;
        }
        let flat = c * side * side;
        b.fc("enc.fc1", flat, cfg.hidden);
        b.layers.push(Layer::Act(act));
        b.fc("enc.fc2", cfg.hidden, cfg.embed_dim);
        let embed_layer = b.layers.len() - 1;

        b.fc("dec.fc1", cfg.embed_dim, cfg.hidden);
        b.layers.push(Layer::Act(act));
        b.fc("dec.fc2", cfg.hidden, flat);
        b.layers.push(Layer::Act(act));
        for j in 0..3 {
            b.layers.push(Layer::Upsample { c, h: side, w: side });
            side *= 2;
            let last = j == 2;
            let s = ConvShape {
                cin: c,
                cout: if last { 3 } else { cfg.channels[1 - j] },
                k: cfg.kernels[2 - j],
                h: side,
                w: side,
            };
            b.conv(&format!("dec.conv{}", j + 1), s, last || !cfg.batch_norm);
            if last {
                if cfg.squash_output {
                    b.layers.push(Layer::Sigmoid);
                }
            } else {
                if cfg.batch_norm {
                    b.bn(&format!("dec.bn{}", j + 1), s.cout, s.hw());
                }
                b.layers.push(Layer::Act(act));
            }
            c = s.cout;
        }
        Ok(Self {
            layers: b.layers,
            embed_layer,
            segments: b.segments,
            n_params: b.n_params,
            n_stats: b.n_stats,
            bn_momentum: cfg.bn_momentum,
            bn_eps: cfg.bn_eps,
        })
    }

    /// Fan-in-scaled uniform weights; zero biases and shifts, unit scales.
    pub fn init<T: Real>(&self, seed: u64) -> (Vec<T>, Vec<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); self.n_params];
        for seg in &self.segments {
            let dst = &mut params[seg.offset..seg.offset + seg.len];
            match seg.kind {
                ParamKind::Weight => {
                    let bound = (6.0 / seg.fan_in as f64).sqrt();
                    for v in dst {
                        *v = T::from_f64(rng.gen_range(-bound..bound));
                    }
                }
                ParamKind::Gamma => dst.fill(T::one()),
                ParamKind::Bias | ParamKind::Beta => {}
            }
        }
        (params, self.initial_stats())
    }

    pub fn initial_stats<T: Real>(&self) -> Vec<T> {
        let mut stats = vec![T::zero(); self.n_stats];
        for l in &self.layers {
            if let Layer::BatchNorm { c, stats: off, .. } = *l {
                stats[off + c..off + 2 * c].fill(T::one());
            }
        }
        stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// Batch-norm uses running statistics.
    Eval,
    /// Batch-norm uses batch statistics, optionally updating the running ones.
    Train { update_stats: bool },
}

pub(crate) enum Cache<T> {
    Input(Vec<T>),
    Bn { xhat: Vec<T>, inv_std: Vec<T> },
    Output(Vec<T>),
    Pool(Vec<u32>),
    Nothing,
}

/// Activations kept for the backward pass.
pub(crate) struct Trace<T> {
    pub caches: Vec<Cache<T>>,
    pub embedding: Vec<T>,
}

fn bn_forward<T: Real>(
    x: &mut [T],
    batch: usize,
    layer: (usize, usize, &[T], &[T]),
    stats: &mut [T],
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> Option<(Vec<T>, Vec<T>)> {
    let (c, hw, gamma, beta) = layer;
    let per = c * hw;
    match mode {
        Mode::Eval => {
            let (mean, var) = stats.split_at(c);
            for ch in 0..c {
                let inv = T::from_f64(1.0 / (var[ch].as_f64() + eps).sqrt());
                let (m, g, bt) = (mean[ch], gamma[ch], beta[ch]);
                for b in 0..batch {
                    for v in &mut x[b * per + ch * hw..][..hw] {
                        *v = g * (*v - m) * inv + bt;
                    }
                }
            }
            None
        }
        Mode::Train { update_stats } => {
            let n = (batch * hw) as f64;
            let mut inv_std = vec![T::zero(); c];
            for ch in 0..c {
                let mut sum = 0.0;
                for b in 0..batch {
                    sum += ops::lane_sum(&x[b * per + ch * hw..][..hw], |v| v.as_f64());
                }
                let mean = sum / n;
                let mut sq = 0.0;
                for b in 0..batch {
                    sq += ops::lane_sum(&x[b * per + ch * hw..][..hw], |v| (v.as_f64() - mean).powi(2));
                }
                let var = sq / n;
                let inv = 1.0 / (var + eps).sqrt();
                inv_std[ch] = T::from_f64(inv);
                let (mt, it) = (T::from_f64(mean), T::from_f64(inv));
                for b in 0..batch {
                    for v in &mut x[b * per + ch * hw..][..hw] {
                        *v = (*v - mt) * it;
                    }
                }
                if update_stats {
                    let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
                    let rm = stats[ch].as_f64();
                    let rv = stats[c + ch].as_f64();
                    stats[ch] = T::from_f64((1.0 - momentum) * rm + momentum * mean);
                    stats[c + ch] = T::from_f64((1.0 - momentum) * rv + momentum * unbiased);
                }
            }
            let xhat = x.to_vec();
            for b in 0..batch {
                for ch in 0..c {
                    let (g, bt) = (gamma[ch], beta[ch]);
                    for v in &mut x[b * per + ch * hw..][..hw] {
                        *v = g * *v + bt;
                    }
                }
            }
            Some((xhat, inv_std))
        }
    }
}

impl Network {
    /// Runs layers `range` on a batch laid out sample-major.
    pub fn forward<T: Real>(
        &self,
        params: &[T],
        stats: &mut [T],
        input: &[T],
        batch: usize,
        mode: Mode,
        range: std::ops::Range<usize>,
        keep: bool,
    ) -> (Vec<T>, Option<Trace<T>>) {
        let mut x = input.to_vec();
        let mut caches = Vec::new();
        let mut embedding = Vec::new();
        for li in range {
            let layer = self.layers[li];
            let in_len = x.len() / batch;
            let out_len = layer.out_len(in_len);
            let mut cache = Cache::Nothing;
            match layer {
                Layer::Conv { s, weight, bias } => {
                    let w = &params[weight..weight + s.cout * s.col_rows()];
                    let b = bias.map(|o| &params[o..o + s.cout]);
                    let mut y = vec![T::zero(); batch * out_len];
                    y.par_chunks_mut(out_len)
                        .zip(x.par_chunks(in_len))
                        .for_each(|(ys, xs)| ops::conv_forward(s, xs, w, b, ys));
                    if keep {
                        cache = Cache::Input(std::mem::take(&mut x));
                    }
                    x = y;
                }
                Layer::BatchNorm {
                    c,
                    hw,
                    gamma,
                    beta,
                    stats: so,
                } => {
                    let res = bn_forward(
                        &mut x,
                        batch,
                        (c, hw, &params[gamma..gamma + c], &params[beta..beta + c]),
                        &mut stats[so..so + 2 * c],
                        mode,
                        self.bn_momentum,
                        self.bn_eps,
                    );
                    if let (true, Some((xhat, inv_std))) = (keep, res) {
                        cache = Cache::Bn { xhat, inv_std };
                    }
                }
                Layer::Act(Activation::Relu) => {
                    x.iter_mut().for_each(|v| *v = v.max(T::zero()));
                    if keep {
                        cache = Cache::Output(x.clone());
                    }
                }
                Layer::Act(Activation::Identity) => {}
                Layer::MaxPool { c, h, w } => {
                    let mut y = vec![T::zero(); batch * out_len];
                    let mut arg = vec![0u32; batch * out_len];
                    y.par_chunks_mut(out_len)
                        .zip(arg.par_chunks_mut(out_len))
                        .zip(x.par_chunks(in_len))
                        .for_each(|((ys, a), xs)| ops::maxpool_forward(xs, c, h, w, ys, a));
                    if keep {
                        cache = Cache::Pool(arg);
                    }
                    x = y;
                }
                Layer::Upsample { c, h, w } => {
                    let mut y = vec![T::zero(); batch * out_len];
                    y.par_chunks_mut(out_len)
                        .zip(x.par_chunks(in_len))
                        .for_each(|(ys, xs)| ops::upsample_forward(xs, c, h, w, ys));
                    x = y;
                }
                Layer::Fc {
                    nin,
                    nout,
                    weight,
                    bias,
                } => {
                    let mut y = vec![T::zero(); batch * nout];
                    matmul_bt(batch, nin, nout, &x, &params[weight..weight + nin * nout], &mut y, false);
                    let b = &params[bias..bias + nout];
                    for row in y.chunks_exact_mut(nout) {
                        row.iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
                    }
                    if keep {
                        cache = Cache::Input(std::mem::take(&mut x));
                    }
                    x = y;
                }
                Layer::Sigmoid => {
                    x.iter_mut().for_each(|v| *v = ops::sigmoid(*v));
                    if keep {
                        cache = Cache::Output(x.clone());
                    }
                }
            }
            if li == self.embed_layer {
                embedding = x.clone();
            }
            caches.push(cache);
        }
        let trace = keep.then_some(Trace { caches, embedding });
        (x, trace)
    }

    /// Backpropagates `dy` through every layer, accumulating into `grad`.
    pub fn backward<T: Real>(&self, params: &[T], trace: Trace<T>, dy: Vec<T>, batch: usize, grad: &mut [T]) {
        let mut dy = dy;
        let mut caches = trace.caches;
        for li in (0..self.layers.len()).rev() {
            let cache = caches.pop().expect("one cache per layer");
            let layer = self.layers[li];
            match (layer, cache) {
                (Layer::Conv { s, weight, bias }, Cache::Input(x)) => {
                    let (in_len, out_len) = (s.cin * s.hw(), s.cout * s.hw());
                    let wlen = s.cout * s.col_rows();
                    let w = &params[weight..weight + wlen];
                    let need_dx = li > 0;
                    let mut dx = vec![T::zero(); batch * in_len];
                    let mut dws = vec![T::zero(); batch * wlen];
                    let mut dbs = vec![T::zero(); batch * s.cout];
                    dws.par_chunks_mut(wlen)
                        .zip(dbs.par_chunks_mut(s.cout))
                        .zip(dx.par_chunks_mut(in_len))
                        .zip(x.par_chunks(in_len).zip(dy.par_chunks(out_len)))
                        .for_each(|(((dw, db), dxs), (xs, dys))| {
                            let dxs = need_dx.then_some(dxs);
                            ops::conv_backward(s, xs, w, dys, dw, bias.map(|_| db), dxs);
                        });
                    // Fixed-order reduction keeps gradients independent of
                    // the worker count.
                    let gw = &mut grad[weight..weight + wlen];
                    for dw in dws.chunks_exact(wlen) {
                        gw.iter_mut().zip(dw).for_each(|(g, &d)| *g += d);
                    }
                    if let Some(bo) = bias {
                        let gb = &mut grad[bo..bo + s.cout];
                        for db in dbs.chunks_exact(s.cout) {
                            gb.iter_mut().zip(db).for_each(|(g, &d)| *g += d);
                        }
                    }
                    dy = dx;
                }
                (
                    Layer::BatchNorm {
                        c, hw, gamma, beta, ..
                    },
                    Cache::Bn { xhat, inv_std },
                ) => {
                    let per = c * hw;
                    let n = T::from_f64((batch * hw) as f64);
                    for ch in 0..c {
                        let (mut sum_dy, mut sum_dy_xhat) = (T::zero(), T::zero());
                        for b in 0..batch {
                            let o = b * per + ch * hw;
                            sum_dy += T::from_f64(ops::lane_sum(&dy[o..o + hw], |d| d.as_f64()));
                            sum_dy_xhat += ops::dot(&dy[o..o + hw], &xhat[o..o + hw]);
                        }
                        grad[gamma + ch] += sum_dy_xhat;
                        grad[beta + ch] += sum_dy;
                        let g = params[gamma + ch];
                        let k = g * inv_std[ch] / n;
                        for b in 0..batch {
                            let o = b * per + ch * hw;
                            for (d, xh) in dy[o..o + hw].iter_mut().zip(&xhat[o..o + hw]) {
                                *d = k * (n * *d - sum_dy - *xh * sum_dy_xhat);
                            }
                        }
                    }
                }
                (Layer::Act(Activation::Relu), Cache::Output(y)) => {
                    for (d, v) in dy.iter_mut().zip(&y) {
                        if *v <= T::zero() {
                            *d = T::zero();
                        }
                    }
                }
                (Layer::Act(Activation::Identity), _) => {}
                (Layer::MaxPool { c, h, w }, Cache::Pool(arg)) => {
                    let (in_len, out_len) = (c * h * w, c * (h / 2) * (w / 2));
                    let mut dx = vec![T::zero(); batch * in_len];
                    dx.par_chunks_mut(in_len)
                        .zip(dy.par_chunks(out_len).zip(arg.par_chunks(out_len)))
                        .for_each(|(dxs, (dys, a))| ops::maxpool_backward(dys, a, dxs));
                    dy = dx;
                }
                (Layer::Upsample { c, h, w }, _) => {
                    let (in_len, out_len) = (c * h * w, 4 * c * h * w);
                    let mut dx = vec![T::zero(); batch * in_len];
                    dx.par_chunks_mut(in_len)
                        .zip(dy.par_chunks(out_len))
                        .for_each(|(dxs, dys)| ops::upsample_backward(dys, c, h, w, dxs));
                    dy = dx;
                }
                (
                    Layer::Fc {
                        nin,
                        nout,
                        weight,
                        bias,
                    },
                    Cache::Input(x),
                ) => {
                    matmul_at(nout, batch, nin, &dy, &x, &mut grad[weight..weight + nin * nout], true);
                    let gb = &mut grad[bias..bias + nout];
                    for row in dy.chunks_exact(nout) {
                        gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
                    }
                    if li > 0 {
                        let mut dx = vec![T::zero(); batch * nin];
                        matmul(batch, nout, nin, &dy, &params[weight..weight + nin * nout], &mut dx, false);
                        dy = dx;
                    }
                }
                (Layer::Sigmoid, Cache::Output(y)) => {
                    for (d, v) in dy.iter_mut().zip(&y) {
                        *d *= *v * (T::one() - *v);
                    }
                }
                (l, _) => unreachable!("missing cache for layer {l:?}"),
            }
        }
    }
}
