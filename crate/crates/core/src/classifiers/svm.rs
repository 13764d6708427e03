use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::binio::{check_header, eof_as_format, read_f64s, write_f64s, VERSION};
use crate::error::{Error, Result};
use crate::slide_io::Label;

pub(crate) const SVM_MAGIC: &[u8; 8] = b"PDL1SVM\0";

/// RBF width, possibly relative to the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    /// `1 / d`.
    InvDim,
    /// `1 / (d · var)`, `var` pooled over all training feature values.
    InvDimVar,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// `None` is the linear kernel.
    pub gamma: Option<GammaSpec>,
    pub standardize: bool,
    /// Stopping gap of the maximal violating pair.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            standardize: true,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

/// Per-feature standardization fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Zero-variance features keep scale 1.
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
        }
        let mut std = vec![0.0; d];
        for r in x {
            std.iter_mut()
                .zip(r)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
        }
        std.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub bias: f64,
    pub scaler: Option<Scaler>,
    /// Support vectors in the (standardized) training space.
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub labels: Vec<Label>,
    /// Training-row index of each support vector.
    pub rows: Vec<usize>,
    pub dim: usize,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn prepare(&self, x: &[f64]) -> Vec<f64> {
        self.scaler.as_ref().map_or_else(|| x.to_vec(), |s| s.apply(x))
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.prepare(x);
        self.bias
            + self
                .support
                .iter()
                .zip(&self.alpha)
                .zip(&self.labels)
                .map(|((s, a), l)| a * l.sign() * self.kernel.eval(s, &z))
                .sum::<f64>()
    }

    /// Positive iff the decision value is strictly positive.
    pub fn predict(&self, x: &[f64]) -> Label {
        Label::from_bool(self.decision(x) > 0.0)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(SVM_MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.dim as u32)?;
        match self.kernel {
            Kernel::Linear => {
                w.write_u8(0)?;
                w.write_f64::<LE>(0.0)?;
            }
            Kernel::Rbf { gamma } => {
                w.write_u8(1)?;
                w.write_f64::<LE>(gamma)?;
            }
        }
        w.write_f64::<LE>(self.c)?;
        w.write_f64::<LE>(self.bias)?;
        match &self.scaler {
            None => w.write_u8(0)?,
            Some(s) => {
                w.write_u8(1)?;
                write_f64s(w, &s.mean)?;
                write_f64s(w, &s.std)?;
            }
        }
        w.write_u32::<LE>(self.support.len() as u32)?;
        for i in 0..self.support.len() {
            w.write_u32::<LE>(self.rows[i] as u32)?;
            w.write_f64::<LE>(self.alpha[i])?;
            w.write_u8(self.labels[i].is_positive() as u8)?;
            write_f64s(w, &self.support[i])?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "SVM";
        check_header(r, SVM_MAGIC, KIND)?;
        let eof = eof_as_format(KIND);
        let dim = r.read_u32::<LE>().map_err(&eof)? as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(Error::format(KIND, format!("implausible width {dim}")));
        }
        let tag = r.read_u8().map_err(&eof)?;
        let gamma = r.read_f64::<LE>().map_err(&eof)?;
        let kernel = match tag {
            0 => Kernel::Linear,
            1 if gamma > 0.0 && gamma.is_finite() => Kernel::Rbf { gamma },
            _ => return Err(Error::format(KIND, "bad kernel")),
        };
        let c = r.read_f64::<LE>().map_err(&eof)?;
        let bias = r.read_f64::<LE>().map_err(&eof)?;
        if !(c > 0.0 && c.is_finite() && bias.is_finite()) {
            return Err(Error::format(KIND, "bad penalty or bias"));
        }
        let scaler = match r.read_u8().map_err(&eof)? {
            0 => None,
            1 => {
                let mean = read_f64s(r, KIND, dim)?;
                let std = read_f64s(r, KIND, dim)?;
                if mean.len() != dim || std.len() != dim || std.iter().any(|&s| s <= 0.0) {
                    return Err(Error::format(KIND, "bad scaler"));
                }
                Some(Scaler { mean, std })
            }
            _ => return Err(Error::format(KIND, "bad scaler flag")),
        };
        let n = r.read_u32::<LE>().map_err(&eof)? as usize;
        let mut m = SvmModel {
            kernel,
            c,
            bias,
            scaler,
            support: Vec::new(),
            alpha: Vec::new(),
            labels: Vec::new(),
            rows: Vec::new(),
            dim,
        };
        for _ in 0..n.min(1 << 24) {
            m.rows.push(r.read_u32::<LE>().map_err(&eof)? as usize);
            let a = r.read_f64::<LE>().map_err(&eof)?;
            if !(a > 0.0 && a <= c) {
                return Err(Error::format(KIND, "dual coefficient outside (0, C]"));
            }
            m.alpha.push(a);
            m.labels.push(Label::from_bool(r.read_u8().map_err(&eof)? != 0));
            let v = read_f64s(r, KIND, dim)?;
            if v.len() != dim {
                return Err(Error::format(KIND, "support vector width mismatch"));
            }
            m.support.push(v);
        }
        Ok(m)
    }
}

fn resolve_kernel(params: &SvmParams, x: &[Vec<f64>]) -> Result<Kernel> {
    let d = x[0].len() as f64;
    let gamma = match params.gamma {
        None => return Ok(Kernel::Linear),
        Some(GammaSpec::InvDim) => 1.0 / d,
        Some(GammaSpec::InvDimVar) => {
            let n = (x.len() * x[0].len()) as f64;
            let mean = x.iter().flatten().sum::<f64>() / n;
            let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / (d * var)
            } else {
                1.0 / d
            }
        }
        Some(GammaSpec::Value(g)) => g,
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("RBF gamma {gamma} must be positive")));
    }
    Ok(Kernel::Rbf { gamma })
}

/// Soft-margin dual solved by sequential two-variable updates on the
/// maximal violating pair (second-order working-set choice) until the
/// pair's KKT gap drops below `tol`.
pub fn svm_train(data: &LabeledSet, params: &SvmParams) -> Result<SvmModel> {
    data.check_trainable()?;
    if !(params.c > 0.0 && params.c.is_finite()) || !(params.tol > 0.0) {
        return Err(Error::invalid("C and tol must be positive"));
    }
    let scaler = params.standardize.then(|| Scaler::fit(&data.x));
    let x: Vec<Vec<f64>> = match &scaler {
        Some(s) => data.x.iter().map(|r| s.apply(r)).collect(),
        None => data.x.clone(),
    };
    let kernel = resolve_kernel(params, &x)?;
    let n = x.len();
    let y: Vec<f64> = data.y.iter().map(|l| l.sign()).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);
    let mut iter = 0;
    let (m_up, m_low) = loop {
        let mut i = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], y[t]) && -y[t] * grad[t] > m_up {
                m_up = -y[t] * grad[t];
                i = t;
            }
        }
        let mut j = usize::MAX;
        let mut m_low = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            m_low = m_low.min(v);
            if i != usize::MAX && v < m_up {
                let b = m_up - v;
                let a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                let obj = -(b * b) / if a > 0.0 { a } else { 1e-12 };
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if m_up - m_low < params.tol || j == usize::MAX {
            break (m_up, m_low);
        }
        if iter == params.max_iter {
            return Err(Error::Convergence {
                iterations: iter,
                gap: m_up - m_low,
            });
        }
        iter += 1;
        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[i * n + j];
        let quad = {
            let q = k[i * n + i] + k[j * n + j] - 2.0 * y[i] * y[j] * qij;
            if q > 0.0 {
                q
            } else {
                1e-12
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
        }
    };
    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -y[t] * grad[t])
        .collect();
    let bias = if free.is_empty() {
        (m_up + m_low) / 2.0
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    log::debug!("svm: {iter} updates, gap {:.2e}", m_up - m_low);
    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel {
        kernel,
        c,
        bias,
        scaler,
        support: sv.iter().map(|&t| x[t].clone()).collect(),
        alpha: sv.iter().map(|&t| alpha[t]).collect(),
        labels: sv.iter().map(|&t| data.y[t]).collect(),
        rows: sv,
        dim: data.dim(),
    })
}

/// Largest violation of the soft-margin KKT conditions over the training
/// rows, recomputed from scratch: `y·f ≥ 1` at `α = 0`, `y·f = 1` for
/// `0 < α < C`, `y·f ≤ 1` at `α = C`.
pub fn kkt_residual(model: &SvmModel, data: &LabeledSet) -> f64 {
    let mut alpha = vec![0.0; data.len()];
    for (&r, &a) in model.rows.iter().zip(&model.alpha) {
        alpha[r] = a;
    }
    data.x
        .iter()
        .zip(&data.y)
        .zip(alpha)
        .map(|((x, l), a)| {
            let margin = l.sign() * model.decision(x) - 1.0;
            if a <= 0.0 {
                (-margin).max(0.0)
            } else if a >= model.c {
                margin.max(0.0)
            } else {
                margin.abs()
            }
        })
        .fold(0.0, f64::max)
}
