use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSet;
use crate::binio::{check_header, eof_as_format, VERSION};
use crate::error::{Error, Result};
use crate::seeds::indexed_seed;
use crate::slide_io::Label;

pub(crate) const RF_MAGIC: &[u8; 8] = b"PDL1RF\0\0";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfParams {
    pub trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { positive: u32, negative: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { positive, negative } => return Label::from_bool(positive > negative),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub dim: usize,
    pub max_features: usize,
    pub seed: u64,
}

impl RandomForest {
    /// Majority vote; a tie is negative.
    pub fn predict(&self, x: &[f64]) -> Label {
        let pos = self.trees.iter().filter(|t| t.predict(x).is_positive()).count();
        Label::from_bool(2 * pos > self.trees.len())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(RF_MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.dim as u32)?;
        w.write_u32::<LE>(self.max_features as u32)?;
        w.write_u64::<LE>(self.seed)?;
        w.write_u32::<LE>(self.trees.len() as u32)?;
        for t in &self.trees {
            w.write_u32::<LE>(t.nodes.len() as u32)?;
            for n in &t.nodes {
                match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.write_u8(0)?;
                        w.write_u32::<LE>(feature as u32)?;
                        w.write_f64::<LE>(threshold)?;
                        w.write_u32::<LE>(left as u32)?;
                        w.write_u32::<LE>(right as u32)?;
                    }
                    Node::Leaf { positive, negative } => {
                        w.write_u8(1)?;
                        w.write_u32::<LE>(positive)?;
                        w.write_u32::<LE>(negative)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "random forest";
        check_header(r, RF_MAGIC, KIND)?;
        let eof = eof_as_format(KIND);
        let u = |r: &mut dyn Read| r.read_u32::<LE>().map(|v| v as usize).map_err(&eof);
        let dim = u(r)?;
        let max_features = u(r)?;
        let seed = r.read_u64::<LE>().map_err(eof_as_format(KIND))?;
        let n_trees = u(r)?;
        if dim == 0 || n_trees == 0 || n_trees > 1 << 20 {
            return Err(Error::format(KIND, "implausible header"));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n = u(r)?;
            if n == 0 || n > 1 << 26 {
                return Err(Error::format(KIND, "implausible node count"));
            }
            let mut nodes = Vec::with_capacity(n);
            for i in 0..n {
                let tag = r.read_u8().map_err(eof_as_format(KIND))?;
                nodes.push(match tag {
                    0 => {
                        let feature = u(r)?;
                        let threshold = r.read_f64::<LE>().map_err(eof_as_format(KIND))?;
                        let (left, right) = (u(r)?, u(r)?);
                        if feature >= dim || !threshold.is_finite() || left <= i || right <= i || left >= n || right >= n {
                            return Err(Error::format(KIND, format!("bad split node {i}")));
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        }
                    }
                    1 => Node::Leaf {
                        positive: u(r)? as u32,
                        negative: u(r)? as u32,
                    },
                    t => return Err(Error::format(KIND, format!("bad node tag {t}"))),
                });
            }
            trees.push(Tree { nodes });
        }
        Ok(Self {
            trees,
            dim,
            max_features,
            seed,
        })
    }
}

/// Bootstrap rows of tree `t`; the same draws open that tree's generator
/// during training.
pub fn bootstrap_sample(n: usize, seed: u64, t: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(indexed_seed(seed, t as u64));
    draw_bootstrap(n, &mut rng)
}

fn draw_bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

struct Builder<'a> {
    data: &'a LabeledSet,
    params: &'a RfParams,
    mtry: usize,
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> Node {
        let positive = rows.iter().filter(|&&i| self.data.y[i].is_positive()).count() as u32;
        Node::Leaf {
            positive,
            negative: rows.len() as u32 - positive,
        }
    }

    /// Best `(weighted child impurity, feature, threshold)` over a random
    /// feature subset.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(f64, usize, f64)> {
        let d = self.data.dim();
        let n = rows.len();
        let total_pos = rows.iter().filter(|&&i| self.data.y[i].is_positive()).count();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);
        for f in sample(rng, d, self.mtry).into_iter() {
            pairs.clear();
            pairs.extend(rows.iter().map(|&i| (self.data.x[i][f], self.data.y[i].is_positive())));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for k in 1..n {
                left_pos += pairs[k - 1].1 as usize;
                let (a, b) = (pairs[k - 1].0, pairs[k].0);
                if a == b || k < self.params.min_leaf || n - k < self.params.min_leaf {
                    continue;
                }
                let score = (k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(total_pos - left_pos, n - k)) / n as f64;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let leaf = self.leaf(&rows);
        self.nodes.push(leaf);
        let Node::Leaf { positive, negative } = leaf else { unreachable!() };
        let pure = positive == 0 || negative == 0;
        if pure || self.params.max_depth.is_some_and(|m| depth >= m) || rows.len() < 2 * self.params.min_leaf {
            return id;
        }
        let parent = gini(positive as usize, rows.len());
        let Some((score, feature, threshold)) = self.best_split(&rows, rng) else {
            return id;
        };
        if score >= parent - 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.data.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Bagged CART trees with Gini splits; tree `t` draws from its own
/// generator seeded by `(seed, t)`.
pub fn rf_train(data: &LabeledSet, params: &RfParams, seed: u64) -> Result<RandomForest> {
    data.check_trainable()?;
    if params.trees == 0 || params.min_leaf == 0 {
        return Err(Error::invalid("trees and min_leaf must be positive"));
    }
    let d = data.dim();
    let mtry = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d);
    let trees = (0..params.trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(indexed_seed(seed, t as u64));
            let rows = draw_bootstrap(data.len(), &mut rng);
            let mut b = Builder {
                data,
                params,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(RandomForest {
        trees,
        dim: d,
        max_features: mtry,
        seed,
    })
}

/// Out-of-bag majority vote per training row; `None` for rows that every
/// tree saw.
pub fn oob_predictions(model: &RandomForest, data: &LabeledSet) -> Vec<Option<Label>> {
    let n = data.len();
    let mut votes = vec![(0usize, 0usize); n];
    for (t, tree) in model.trees.iter().enumerate() {
        let mut in_bag = vec![false; n];
        for i in bootstrap_sample(n, model.seed, t) {
            in_bag[i] = true;
        }
        for i in (0..n).filter(|&i| !in_bag[i]) {
            let v = &mut votes[i];
            v.1 += 1;
            v.0 += tree.predict(&data.x[i]).is_positive() as usize;
        }
    }
    votes
        .into_iter()
        .map(|(pos, total)| (total > 0).then(|| Label::from_bool(2 * pos > total)))
        .collect()
}
