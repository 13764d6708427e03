//! Slide-level aggregation of tile embeddings.
//!
//! The average model takes the component-wise mean. The clustered model
//! fits K-Means on all training tiles, prunes each training slide to the
//! closest `t_op` percent of its tiles and records per-cluster radii; a slide
//! is then described by the fraction of its tiles falling inside each
//! cluster, with a final outlier bin for tiles beyond every radius.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{check_header, create_writer, eof_as_format, open_reader, read_f64s, write_f64s, VERSION};
use crate::error::{Error, Result};

pub const CLUSTER_MAGIC: &[u8; 8] = b"PDL1CLU\0";

/// Per-slide representation handed to the classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WsiEmbedding {
    Mean(Vec<f64>),
    /// `K + 1` tile fractions; the last entry is the outlier bin.
    Distribution(Vec<f64>),
}

impl WsiEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            WsiEmbedding::Mean(v) | WsiEmbedding::Distribution(v) => v,
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        match self {
            WsiEmbedding::Mean(v) | WsiEmbedding::Distribution(v) => v,
        }
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().ok_or(Error::EmptyInput("no embeddings"))?.len();
    if dim == 0 {
        return Err(Error::invalid("zero-width embeddings"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: format!("width {dim}"),
            actual: p.len().to_string(),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("non-finite embedding value".into()));
    }
    Ok(dim)
}

pub fn average_aggregate(embeddings: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dim = check_points(embeddings)?;
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        mean.iter_mut().zip(e).for_each(|(m, v)| *m += v);
    }
    let n = embeddings.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of and Euclidean distance to the nearest centroid; ties go to the
/// lower index.
pub fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    (best.0, best.1.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 256,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub inertia: f64,
}

/// Seeded k-means++ seeding.
pub fn kmeans_init(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_points(points)?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("positive total");
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // All points coincide with chosen centroids.
            rng.gen_range(0..points.len())
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    Ok(centroids)
}

/// Lloyd iterations from the given centroids. Empty clusters are re-seeded
/// with the point farthest from its current centroid.
pub fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let dim = check_points(points)?;
    check_points(&centroids)?;
    if centroids[0].len() != dim {
        return Err(Error::DimensionMismatch {
            expected: format!("centroids of width {dim}"),
            actual: centroids[0].len().to_string(),
        });
    }
    let k = centroids.len();
    let mut iterations = 0;
    loop {
        let assigned: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        if iterations == cfg.max_iter {
            return Ok(finish(centroids, assigned, iterations));
        }
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(c, _)) in points.iter().zip(&assigned) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut dist: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        let mut moved = 0.0f64;
        for c in 0..k {
            let new = if counts[c] > 0 {
                let n = counts[c] as f64;
                sums[c].iter().map(|s| s / n).collect()
            } else {
                let far = (0..points.len())
                    .fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                dist[far] = 0.0;
                points[far].clone()
            };
            moved = moved.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if moved < cfg.tol {
            let assigned = points.par_iter().map(|p| nearest(p, &centroids)).collect();
            return Ok(finish(centroids, assigned, iterations));
        }
    }
}

fn finish(centroids: Vec<Vec<f64>>, assigned: Vec<(usize, f64)>, iterations: usize) -> KMeansFit {
    KMeansFit {
        inertia: assigned.iter().map(|a| a.1 * a.1).sum(),
        assignments: assigned.into_iter().map(|a| a.0).collect(),
        centroids,
        iterations,
    }
}

pub fn kmeans_fit(points: &[Vec<f64>], cfg: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    let init = kmeans_init(points, cfg.k, seed)?;
    lloyd(points, init, cfg)
}

/// Number of a slide's `n` tiles kept at percentile `t_op`.
pub fn retained_count(n: usize, t_op: f64) -> usize {
    // Integer-valued products must not round up through float noise.
    ((t_op * n as f64 / 100.0) - 1e-9).ceil().max(0.0) as usize
}

fn check_t_op(t_op: f64) -> Result<()> {
    if !(t_op > 0.0 && t_op <= 100.0) {
        return Err(Error::invalid(format!("t_op {t_op} outside (0, 100]")));
    }
    Ok(())
}

/// Per-cluster radii after keeping, for every slide independently, the
/// closest `t_op` percent of its tiles to their nearest centroid.
pub fn prune_and_radii(slides: &[Vec<Vec<f64>>], centroids: &[Vec<f64>], t_op: f64) -> Result<Vec<f64>> {
    check_t_op(t_op)?;
    check_points(centroids)?;
    let per_slide: Vec<Vec<(usize, f64)>> = slides
        .par_iter()
        .map(|tiles| {
            let mut a: Vec<(usize, f64)> = tiles.iter().map(|t| nearest(t, centroids)).collect();
            a.sort_by(|x, y| x.1.total_cmp(&y.1));
            a.truncate(retained_count(tiles.len(), t_op));
            a
        })
        .collect();
    let mut radii = vec![0.0f64; centroids.len()];
    for (c, d) in per_slide.into_iter().flatten() {
        radii[c] = radii[c].max(d);
    }
    Ok(radii)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub t_op: f64,
    pub seed: u64,
}

impl ClusterModel {
    /// Fits centroids on every training tile, then radii from the pruned
    /// per-slide assignments.
    pub fn fit(slides: &[Vec<Vec<f64>>], cfg: &KMeansConfig, t_op: f64, seed: u64) -> Result<Self> {
        check_t_op(t_op)?;
        let points: Vec<Vec<f64>> = slides.iter().flatten().cloned().collect();
        let fit = kmeans_fit(&points, cfg, seed)?;
        let radii = prune_and_radii(slides, &fit.centroids, t_op)?;
        Ok(Self {
            centroids: fit.centroids,
            radii,
            t_op,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CLUSTER_MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.k() as u32)?;
        w.write_u32::<LE>(self.dim() as u32)?;
        w.write_f64::<LE>(self.t_op)?;
        w.write_u64::<LE>(self.seed)?;
        for c in &self.centroids {
            write_f64s(w, c)?;
        }
        write_f64s(w, &self.radii)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "cluster model";
        check_header(r, CLUSTER_MAGIC, KIND)?;
        let eof = eof_as_format(KIND);
        let k = r.read_u32::<LE>().map_err(&eof)? as usize;
        let dim = r.read_u32::<LE>().map_err(&eof)? as usize;
        let t_op = r.read_f64::<LE>().map_err(&eof)?;
        let seed = r.read_u64::<LE>().map_err(&eof)?;
        if k == 0 || k > 1 << 20 || dim == 0 || dim > 1 << 16 {
            return Err(Error::format(KIND, format!("implausible shape {k} × {dim}")));
        }
        check_t_op(t_op).map_err(|e| Error::format(KIND, e.to_string()))?;
        let mut centroids = Vec::with_capacity(k);
        for _ in 0..k {
            let c = read_f64s(r, KIND, dim)?;
            if c.len() != dim {
                return Err(Error::format(KIND, "centroid width mismatch"));
            }
            centroids.push(c);
        }
        let radii = read_f64s(r, KIND, k)?;
        if radii.len() != k || radii.iter().any(|&v| v < 0.0) {
            return Err(Error::format(KIND, "bad radii"));
        }
        Ok(Self {
            centroids,
            radii,
            t_op,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = create_writer(path.as_ref())?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut open_reader(path.as_ref())?)
    }
}

/// Fraction of the slide's tiles in each cluster (`K` entries) followed by
/// the fraction beyond every radius.
pub fn cluster_distribution(embeddings: &[Vec<f64>], model: &ClusterModel) -> Result<Vec<f64>> {
    let dim = check_points(embeddings)?;
    if dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("width {}", model.dim()),
            actual: dim.to_string(),
        });
    }
    let k = model.k();
    let mut counts = vec![0usize; k + 1];
    for e in embeddings {
        let (c, d) = nearest(e, &model.centroids);
        counts[if d <= model.radii[c] { c } else { k }] += 1;
    }
    let n = embeddings.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
