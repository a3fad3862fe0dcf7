//! Labeled datasets and SMOTE oversampling.
//!
//! Each synthetic sample is `x + (n - x) * u` where `x` is a uniformly chosen
//! minority sample, `n` one of its `k` nearest neighbors (Euclidean), and
//! `u ~ U[0, 1)`. Neighbors are drawn from the minority class by default;
//! [`NeighborPool::Majority`] interpolates toward the majority class instead.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::f64_17;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("minority sample set is empty")]
    EmptyMinority,
    #[error("neighbor pool has {available} candidates; at least one is required")]
    PoolTooSmall { available: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("dataset needs samples of both classes")]
    SingleClass,
    #[error("feature rows have inconsistent dimension")]
    DimensionMismatch,
}

pub type Result<T, E = SamplingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn from_sign(v: f64) -> Label {
        if v >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub provenance: Vec<Provenance>,
}

impl LabeledDataset {
    /// All-real dataset.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        assert_eq!(features.len(), labels.len(), "labels must align with rows");
        if let Some(first) = features.first() {
            if features.iter().any(|r| r.len() != first.len()) {
                return Err(SamplingError::DimensionMismatch);
            }
        }
        let provenance = vec![Provenance::Real; features.len()];
        Ok(LabeledDataset {
            features,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Positive) > 0 && self.count(Label::Negative) > 0
    }

    pub fn rows_of(&self, label: Label) -> Vec<Vec<f64>> {
        self.features
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(x, _)| x.clone())
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborPool {
    /// Neighbors among the other minority samples (standard SMOTE).
    #[default]
    Minority,
    /// Neighbors among the majority samples.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    #[serde(default = "SmoteConfig::default_k")]
    pub k: usize,
    /// Number of samples to synthesize; `None` balances the classes.
    #[serde(default)]
    pub n_synthetic: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub neighbor_pool: NeighborPool,
}

impl SmoteConfig {
    fn default_k() -> usize {
        5
    }
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k: Self::default_k(),
            n_synthetic: None,
            seed: 0,
            neighbor_pool: NeighborPool::Minority,
        }
    }
}

/// One generation step: `minority[base] + (pool[neighbor] - minority[base]) * u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoteStep {
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub samples: Vec<Vec<f64>>,
    pub trace: Vec<SmoteStep>,
    /// Neighbor count actually used after clamping to the pool size.
    pub k_used: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest pool members of `x`, ties broken by index.
fn nearest(x: &[f64], pool: &[Vec<f64>], exclude: Option<usize>, k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != exclude)
        .map(|(j, p)| (sq_dist(x, p), j))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Synthesizes `n_synthetic` samples (or `minority.len()` when unset).
///
/// In [`NeighborPool::Minority`] mode the pool is `minority` itself and a
/// sample is never its own neighbor; in majority mode the pool is `majority`.
/// `k` is clamped to the number of available neighbors. The returned trace
/// indexes `base` into `minority` and `neighbor` into the selected pool.
pub fn smote(
    minority: &[Vec<f64>],
    majority: &[Vec<f64>],
    config: &SmoteConfig,
) -> Result<SmoteOutput> {
    if minority.is_empty() {
        return Err(SamplingError::EmptyMinority);
    }
    if config.k == 0 {
        return Err(SamplingError::ZeroK);
    }
    let (pool, self_pool) = match config.neighbor_pool {
        NeighborPool::Minority => (minority, true),
        NeighborPool::Majority => (majority, false),
    };
    let available = if self_pool { pool.len() - 1 } else { pool.len() };
    if available == 0 {
        return Err(SamplingError::PoolTooSmall { available });
    }
    let d = minority[0].len();
    if minority.iter().chain(pool).any(|r| r.len() != d) {
        return Err(SamplingError::DimensionMismatch);
    }
    let k = config.k.min(available);

    let neighborhoods: Vec<Vec<usize>> = minority
        .par_iter()
        .enumerate()
        .map(|(i, x)| nearest(x, pool, self_pool.then_some(i), k))
        .collect();

    let n = config.n_synthetic.unwrap_or(minority.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    for _ in 0..n {
        let base = rng.random_range(0..minority.len());
        let hood = &neighborhoods[base];
        let neighbor = hood[rng.random_range(0..hood.len())];
        let u: f64 = rng.random();
        let x = &minority[base];
        let nb = &pool[neighbor];
        samples.push(x.iter().zip(nb).map(|(a, b)| a + (b - a) * u).collect());
        trace.push(SmoteStep { base, neighbor, u });
    }
    Ok(SmoteOutput {
        samples,
        trace,
        k_used: k,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    pub dataset: LabeledDataset,
    /// Empty when the input was already balanced.
    pub trace: Vec<SmoteStep>,
    pub minority: Option<Label>,
}

/// Appends synthetic minority rows. Without `n_synthetic` the classes end up
/// equal in size; an already balanced dataset is returned unchanged.
pub fn balance(dataset: &LabeledDataset, config: &SmoteConfig) -> Result<Balanced> {
    if !dataset.has_both_classes() {
        return Err(SamplingError::SingleClass);
    }
    let pos = dataset.count(Label::Positive);
    let neg = dataset.count(Label::Negative);
    let minority = match pos.cmp(&neg) {
        std::cmp::Ordering::Less => Label::Positive,
        std::cmp::Ordering::Greater => Label::Negative,
        std::cmp::Ordering::Equal if config.n_synthetic.unwrap_or(0) == 0 => {
            return Ok(Balanced {
                dataset: dataset.clone(),
                trace: Vec::new(),
                minority: None,
            })
        }
        // Explicit count on an already balanced set: oversample negatives.
        std::cmp::Ordering::Equal => Label::Negative,
    };
    let gap = pos.abs_diff(neg);
    let cfg = SmoteConfig {
        n_synthetic: Some(config.n_synthetic.unwrap_or(gap)),
        ..config.clone()
    };
    let minority_rows = dataset.rows_of(minority);
    let majority_rows = dataset.rows_of(minority.flipped());
    let out = smote(&minority_rows, &majority_rows, &cfg)?;

    let mut balanced = dataset.clone();
    for s in out.samples {
        balanced.features.push(s);
        balanced.labels.push(minority);
        balanced.provenance.push(Provenance::Synthetic);
    }
    Ok(Balanced {
        dataset: balanced,
        trace: out.trace,
        minority: Some(minority),
    })
}

/// Writes the generation trace as CSV: `base,neighbor,u`.
pub fn write_trace_csv<W: Write>(out: W, trace: &[SmoteStep]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["base", "neighbor", "u"])?;
    for s in trace {
        w.write_record([s.base.to_string(), s.neighbor.to_string(), f64_17(s.u)])?;
    }
    w.flush()?;
    Ok(())
}
