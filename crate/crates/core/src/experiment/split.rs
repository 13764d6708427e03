use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::indexed_seed;
use crate::slide_io::{DatasetId, Label, ManifestEntry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Split {
    pub fn train_ids(&self) -> BTreeSet<String> {
        self.train.iter().map(|e| e.slide_id.clone()).collect()
    }

    pub fn test_ids(&self) -> BTreeSet<String> {
        self.test.iter().map(|e| e.slide_id.clone()).collect()
    }

    /// `slide_id <TAB> dataset <TAB> label <TAB> role`, training rows first.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("slide_id\tdataset\tlabel\trole\n");
        for (role, rows) in [("train", &self.train), ("test", &self.test)] {
            for e in rows {
                out.push_str(&format!("{}\t{}\t{}\t{role}\n", e.slide_id, e.dataset, e.label));
            }
        }
        out
    }
}

const STRATA: [(DatasetId, Label); 4] = [
    (DatasetId::Internal, Label::Positive),
    (DatasetId::Internal, Label::Negative),
    (DatasetId::External, Label::Positive),
    (DatasetId::External, Label::Negative),
];

/// Stratified by (dataset, label). The training total is
/// `floor(ratio · n)`; each stratum first gets `floor(ratio · n_s)` and the
/// remaining slots go to the largest fractional parts, earlier strata first
/// on ties. Within a stratum the order is a seeded shuffle of the manifest
/// order. Both parts keep manifest order.
pub fn stratified_split(entries: &[ManifestEntry], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput("no slides to split"));
    }
    let groups: Vec<Vec<usize>> = STRATA
        .iter()
        .map(|&(d, l)| (0..entries.len()).filter(|&i| entries[i].dataset == d && entries[i].label == l).collect())
        .collect();
    let target = (ratio * entries.len() as f64 + 1e-9).floor() as usize;
    let exact: Vec<f64> = groups.iter().map(|g| ratio * g.len() as f64).collect();
    let mut take: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..STRATA.len()).collect();
    // Stable sort keeps stratum order on equal remainders.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - take[a] as f64;
        let rb = exact[b] - take[b] as f64;
        rb.partial_cmp(&ra).expect("finite")
    });
    let mut missing = target.saturating_sub(take.iter().sum());
    for &s in order.iter().cycle().take(4 * STRATA.len()) {
        if missing == 0 {
            break;
        }
        if take[s] < groups[s].len() {
            take[s] += 1;
            missing -= 1;
        }
    }
    let mut is_train = vec![false; entries.len()];
    for (s, group) in groups.iter().enumerate() {
        let mut rows = group.clone();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(indexed_seed(seed, s as u64)));
        rows[..take[s]].iter().for_each(|&i| is_train[i] = true);
    }
    let (train, test): (Vec<_>, Vec<_>) = entries.iter().cloned().zip(is_train).partition(|(_, t)| *t);
    Ok(Split {
        train: train.into_iter().map(|(e, _)| e).collect(),
        test: test.into_iter().map(|(e, _)| e).collect(),
    })
}
