//! Hybrid TOPSIS-ORM / AHP weighting and landmark scoring.
//!
//! Objective weights come from how strongly each indicator interacts with
//! the others: the reciprocal Hamming interaction `D_ij` is ranked TOPSIS
//! style into an importance `S_j`, and the order relation method turns the
//! descending importances into weights. Subjective weights come from the
//! principal eigenvector of an AHP comparison matrix. The two are blended
//! linearly and each entity is scored by a weighted sum of its normalized
//! indicators.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::NormalizedPanel;
use crate::fmt::f64_17;

#[derive(Debug, Error, PartialEq)]
pub enum McdmError {
    #[error("at least two indicators are required, got {0}")]
    TooFewIndicators(usize),
    #[error("expected dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("comparison matrix must be square and non-empty")]
    NotSquare,
    #[error("comparison matrix entry ({0}, {1}) is not positive")]
    NotPositive(usize, usize),
    #[error("comparison matrix is not reciprocal at ({0}, {1})")]
    NotReciprocal(usize, usize),
    #[error("no random consistency index for a {0}x{0} matrix")]
    NoRI(usize),
    #[error("sigma must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("cannot parse matrix entry `{value}` at row {row}, column {col}")]
    BadEntry {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("matrix input: {0}")]
    Input(String),
}

pub type Result<T, E = McdmError> = std::result::Result<T, E>;

/// Added to every interaction denominator.
pub const INTERACTION_EPS: f64 = 1e-9;
/// Importances are floored here before taking ratios.
pub const IMPORTANCE_FLOOR: f64 = 1e-6;
pub const CONSISTENCY_LIMIT: f64 = 0.1;
pub const PROTECT_THRESHOLD: f64 = 0.5;
pub const FIRST_GRADIENT_ABOVE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionMatrix {
    pub d: Vec<Vec<f64>>,
    pub best: Vec<f64>,
    pub worst: Vec<f64>,
    /// Euclidean distance of each column to its best value.
    pub ideal: Vec<f64>,
    /// Euclidean distance of each column to its worst value.
    pub poor: Vec<f64>,
}

/// `D_ij = m / (sum_{k != j} |x_ik - x_ij| + eps)` for every row of `rows`.
pub fn interaction_matrix(rows: &[Vec<f64>]) -> Result<InteractionMatrix> {
    let m = rows.first().map_or(0, Vec::len);
    if m < 2 {
        return Err(McdmError::TooFewIndicators(m));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(McdmError::DimensionMismatch {
            expected: m,
            found: r.len(),
        });
    }
    let d: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            (0..m)
                .map(|j| {
                    let spread: f64 = (0..m)
                        .filter(|&k| k != j)
                        .map(|k| (row[k] - row[j]).abs())
                        .sum();
                    m as f64 / (spread + INTERACTION_EPS)
                })
                .collect()
        })
        .collect();
    let mut best = vec![f64::NEG_INFINITY; m];
    let mut worst = vec![f64::INFINITY; m];
    for row in &d {
        for j in 0..m {
            best[j] = best[j].max(row[j]);
            worst[j] = worst[j].min(row[j]);
        }
    }
    let dist = |target: &[f64], j: usize| {
        d.iter()
            .map(|r| (r[j] - target[j]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let ideal = (0..m).map(|j| dist(&best, j)).collect();
    let poor = (0..m).map(|j| dist(&worst, j)).collect();
    Ok(InteractionMatrix {
        d,
        best,
        worst,
        ideal,
        poor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceVector {
    pub s: Vec<f64>,
    /// Indicator indices by descending importance (ties by index).
    pub order: Vec<usize>,
    /// `ratios[p] = S[order[p - 1]] / S[order[p]]` on floored importances;
    /// `ratios[0]` is 1 by convention.
    pub ratios: Vec<f64>,
}

impl ImportanceVector {
    pub fn new(s: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let floored: Vec<f64> = order.iter().map(|&j| s[j].max(IMPORTANCE_FLOOR)).collect();
        let ratios = (0..floored.len())
            .map(|p| if p == 0 { 1.0 } else { floored[p - 1] / floored[p] })
            .collect();
        ImportanceVector { s, order, ratios }
    }
}

/// `S_j = poor_j / (ideal_j + poor_j)`, or 0.5 for a column without spread.
pub fn indicator_importance(d: &InteractionMatrix) -> ImportanceVector {
    let s = d
        .ideal
        .iter()
        .zip(&d.poor)
        .map(|(&ideal, &poor)| {
            let total = ideal + poor;
            if total > 0.0 {
                poor / total
            } else {
                0.5
            }
        })
        .collect();
    ImportanceVector::new(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum WeightKind {
    Orm,
    Ahp,
    Combined { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub kind: WeightKind,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>, kind: WeightKind) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(McdmError::InvalidWeights);
        }
        Ok(WeightVector { weights, kind })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Order relation weights: with importances sorted descending and
/// `r_p = S_(p-1) / S_(p)`, the least important weight is
/// `(1 + sum_{p>=2} prod_{i=p..m} r_i)^-1` and `w_(p-1) = r_p w_(p)`.
pub fn orm_weights(importance: &ImportanceVector) -> WeightVector {
    let m = importance.order.len();
    let r = &importance.ratios;
    // prod_{i=p..m} r_i accumulated from the tail.
    let mut tail = 1.0;
    let mut denom = 1.0;
    for p in (1..m).rev() {
        tail *= r[p];
        denom += tail;
    }
    let mut sorted = vec![0.0; m];
    if m > 0 {
        sorted[m - 1] = 1.0 / denom;
        for p in (1..m).rev() {
            sorted[p - 1] = r[p] * sorted[p];
        }
    }
    let mut weights = vec![0.0; m];
    for (p, &j) in importance.order.iter().enumerate() {
        weights[j] = sorted[p];
    }
    WeightVector {
        weights,
        kind: WeightKind::Orm,
    }
}

/// Objective weights straight from a normalized table.
pub fn topsis_orm_weights(rows: &[Vec<f64>]) -> Result<(ImportanceVector, WeightVector)> {
    let d = interaction_matrix(rows)?;
    let s = indicator_importance(&d);
    let w = orm_weights(&s);
    Ok((s, w))
}

/// Random consistency index for an `m x m` matrix; `Some(0.0)` for `m <= 2`.
pub fn random_index(m: usize) -> Option<f64> {
    match m {
        1 | 2 => Some(0.0),
        3 => Some(0.58),
        4 => Some(0.90),
        5 => Some(1.12),
        6 => Some(1.24),
        7 => Some(1.32),
        8 => Some(1.41),
        9 => Some(1.45),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AhpResult {
    pub matrix: Vec<Vec<f64>>,
    pub lambda_max: f64,
    pub weights: WeightVector,
    pub ci: f64,
    pub cr: f64,
    pub ri: f64,
    pub iterations: usize,
}

impl AhpResult {
    pub fn is_consistent(&self) -> bool {
        self.cr <= CONSISTENCY_LIMIT
    }
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;

/// AHP weights from the principal eigenvector of a positive reciprocal
/// matrix, found by power iteration, with the consistency ratio.
pub fn ahp_weights(matrix: &[Vec<f64>]) -> Result<AhpResult> {
    let m = matrix.len();
    if m == 0 || matrix.iter().any(|r| r.len() != m) {
        return Err(McdmError::NotSquare);
    }
    for i in 0..m {
        for j in 0..m {
            if !(matrix[i][j] > 0.0) || !matrix[i][j].is_finite() {
                return Err(McdmError::NotPositive(i, j));
            }
            if (matrix[i][j] * matrix[j][i] - 1.0).abs() > 1e-6 {
                return Err(McdmError::NotReciprocal(i, j));
            }
        }
    }
    let ri = random_index(m).ok_or(McdmError::NoRI(m))?;

    let mul = |v: &[f64]| -> Vec<f64> {
        matrix
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut v = vec![1.0 / m as f64; m];
    let mut iterations = 0;
    while iterations < POWER_MAX_ITER {
        iterations += 1;
        let next = mul(&v);
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.into_iter().map(|x| x / total).collect();
        let change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        if change < POWER_TOL {
            break;
        }
    }
    let av = mul(&v);
    let lambda_max = av.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        / v.iter().map(|x| x * x).sum::<f64>();
    let ci = if m > 1 {
        (lambda_max - m as f64) / (m as f64 - 1.0)
    } else {
        0.0
    };
    let cr = if ri > 0.0 { ci / ri } else { 0.0 };
    Ok(AhpResult {
        matrix: matrix.to_vec(),
        lambda_max,
        weights: WeightVector {
            weights: v,
            kind: WeightKind::Ahp,
        },
        ci,
        cr,
        ri,
        iterations,
    })
}

fn parse_entry(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((num, den)) => {
            let (num, den): (f64, f64) = (num.trim().parse().ok()?, den.trim().parse().ok()?);
            (den != 0.0).then(|| num / den)
        }
        None => s.trim().parse().ok(),
    }
}

/// Reads an `m x m` comparison matrix from header-less CSV. Entries may be
/// decimals or fractions such as `1/3`; `#` lines are comments.
pub fn read_comparison_matrix<R: Read>(source: R) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| McdmError::Input(e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                parse_entry(f).ok_or_else(|| McdmError::BadEntry {
                    row: i + 1,
                    col: j + 1,
                    value: f.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
        return Err(McdmError::NotSquare);
    }
    Ok(rows)
}

/// `z = alpha * w + (1 - alpha) * a`.
pub fn combine_weights(w: &WeightVector, a: &WeightVector, alpha: f64) -> Result<WeightVector> {
    if w.len() != a.len() {
        return Err(McdmError::DimensionMismatch {
            expected: w.len(),
            found: a.len(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(McdmError::AlphaOutOfRange(alpha));
    }
    Ok(WeightVector {
        weights: w
            .weights
            .iter()
            .zip(&a.weights)
            .map(|(wj, aj)| alpha * wj + (1.0 - alpha) * aj)
            .collect(),
        kind: WeightKind::Combined { alpha },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gradient {
    First,
    Second,
    Third,
}

impl Gradient {
    /// Above 0.7 is first, [0.5, 0.7] second, below 0.5 third.
    pub fn of(score: f64) -> Gradient {
        if score > FIRST_GRADIENT_ABOVE {
            Gradient::First
        } else if score >= PROTECT_THRESHOLD {
            Gradient::Second
        } else {
            Gradient::Third
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gradient::First => "first",
            Gradient::Second => "second",
            Gradient::Third => "third",
        }
    }
}

pub fn should_protect(score: f64) -> bool {
    score >= PROTECT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub gradient: Gradient,
    pub protect: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub entries: Vec<ScoreEntry>,
    pub threshold: f64,
}

/// Weighted sums `x_i . z` of each row.
pub fn score_rows(rows: &[Vec<f64>], z: &[f64]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| {
            if r.len() != z.len() {
                Err(McdmError::DimensionMismatch {
                    expected: z.len(),
                    found: r.len(),
                })
            } else {
                Ok(r.iter().zip(z).map(|(x, w)| x * w).sum())
            }
        })
        .collect()
}

pub fn score(panel: &NormalizedPanel, z: &WeightVector) -> Result<ScoreReport> {
    let scores = score_rows(&panel.values, &z.weights)?;
    Ok(ScoreReport {
        entries: panel
            .row_ids
            .iter()
            .zip(scores)
            .map(|(id, s)| ScoreEntry {
                id: id.clone(),
                score: s,
                gradient: Gradient::of(s),
                protect: should_protect(s),
            })
            .collect(),
        threshold: PROTECT_THRESHOLD,
    })
}

/// Average ranks (1-based), ties share the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if ra == rb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessParams {
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Recompute the TOPSIS-ORM weights from each perturbed table.
    #[serde(default = "yes")]
    pub recompute_weights: bool,
    /// Clamp perturbed values into [0, 1].
    #[serde(default)]
    pub clamp: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityStability {
    pub id: String,
    pub baseline: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub decision_flips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub sigma: f64,
    pub trials: usize,
    pub entities: Vec<EntityStability>,
    pub spearman_mean: f64,
    pub spearman_min: f64,
    pub decision_flips: usize,
}

/// Full TOA scores for a table: TOPSIS-ORM weights from `rows`, blended
/// with fixed AHP weights.
pub fn toa_scores(rows: &[Vec<f64>], ahp: &WeightVector, alpha: f64) -> Result<Vec<f64>> {
    let (_, w) = topsis_orm_weights(rows)?;
    let z = combine_weights(&w, ahp, alpha)?;
    score_rows(rows, &z.weights)
}

/// Gaussian perturbation study. Trial `t` draws its noise from a generator
/// seeded with `seed + t`, so the report is independent of scheduling.
///
/// `baseline_weights` scores perturbed tables when weights are not
/// recomputed; otherwise `ahp` and `alpha` rebuild them per trial.
pub fn robustness(
    panel: &NormalizedPanel,
    baseline_weights: &WeightVector,
    ahp: &WeightVector,
    alpha: f64,
    params: &RobustnessParams,
) -> Result<RobustnessReport> {
    if !(params.sigma >= 0.0) {
        return Err(McdmError::NegativeSigma(params.sigma));
    }
    if params.trials == 0 {
        return Err(McdmError::NoTrials);
    }
    let rows = &panel.values;
    let baseline = score_rows(rows, &baseline_weights.weights)?;
    let normal = Normal::new(0.0, params.sigma).map_err(|_| McdmError::NegativeSigma(params.sigma))?;

    let trials = (0..params.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let noisy: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|&x| {
                            let v = x + normal.sample(&mut rng);
                            if params.clamp {
                                v.clamp(0.0, 1.0)
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect();
            if params.recompute_weights {
                toa_scores(&noisy, ahp, alpha)
            } else {
                score_rows(&noisy, &baseline_weights.weights)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let n = params.trials as f64;
    let entities: Vec<EntityStability> = panel
        .row_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let vals: Vec<f64> = trials.iter().map(|t| t[i]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let flips = vals
                .iter()
                .filter(|&&v| should_protect(v) != should_protect(baseline[i]))
                .count();
            EntityStability {
                id: id.clone(),
                baseline: baseline[i],
                mean,
                std_dev: var.sqrt(),
                decision_flips: flips,
            }
        })
        .collect();
    let rhos: Vec<f64> = trials.iter().map(|t| spearman(&baseline, t)).collect();
    Ok(RobustnessReport {
        sigma: params.sigma,
        trials: params.trials,
        decision_flips: entities.iter().map(|e| e.decision_flips).sum(),
        entities,
        spearman_mean: rhos.iter().sum::<f64>() / n,
        spearman_min: rhos.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// `indicator,orm,ahp,combined` rows.
pub fn write_weights_csv<W: Write>(
    out: W,
    names: &[String],
    orm: &WeightVector,
    ahp: &WeightVector,
    combined: &WeightVector,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["indicator", "orm", "ahp", "combined"])?;
    for (j, name) in names.iter().enumerate() {
        w.write_record([
            name.clone(),
            f64_17(orm.weights[j]),
            f64_17(ahp.weights[j]),
            f64_17(combined.weights[j]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `id,score,gradient,protect` rows.
pub fn write_scores_csv<W: Write>(out: W, report: &ScoreReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "score", "gradient", "protect"])?;
    for e in &report.entries {
        w.write_record([
            e.id.clone(),
            f64_17(e.score),
            e.gradient.as_str().to_string(),
            e.protect.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
