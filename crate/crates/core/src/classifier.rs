//! Linear soft-margin SVM.
//!
//! The dual
//!
//! ```text
//! max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j <x_i, x_j>
//! s.t. 0 <= a_i <= C,  sum_i a_i y_i = 0
//! ```
//!
//! is solved by SMO with second-order working-set selection. The primal
//! solution is recovered as `w = sum_i a_i y_i x_i` and `b` as the mean of
//! `y_j - sum_i a_i y_i <x_i, x_j>` over free support vectors.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Extremes, Indicator};
use crate::fmt::f64_17;
use crate::sampling::{Label, LabeledDataset};
use crate::warning::Warning;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("penalty C must be positive and finite, got {0}")]
    InvalidPenalty(f64),
    #[error("non-finite feature value at row {0}")]
    NonFinite(usize),
    #[error("solver did not converge within {max_iter} iterations (KKT residual {residual})")]
    DidNotConverge { max_iter: usize, residual: f64 },
    #[error("{k} folds requested but only {n} samples")]
    FoldTooSmall { k: usize, n: usize },
    #[error("training split of fold {0} has a single class")]
    SingleClassFold(usize),
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("model document: {0}")]
    Json(String),
}

pub type Result<T, E = SvmError> = std::result::Result<T, E>;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    #[serde(default = "SvmParams::default_c")]
    pub c: f64,
    #[serde(default = "SvmParams::default_tol")]
    pub tol: f64,
    /// Cap on pair updates; defaults to `10 * N` sweeps of `N` updates.
    #[serde(default)]
    pub max_iter: Option<usize>,
    /// Record the dual objective after every update.
    #[serde(skip)]
    pub record_objective: bool,
}

impl SvmParams {
    fn default_c() -> f64 {
        1.0
    }
    fn default_tol() -> f64 {
        1e-6
    }
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-6,
            max_iter: None,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub alphas: Vec<f64>,
    pub c: f64,
    pub support_indices: Vec<usize>,
    pub iterations: usize,
    /// Largest KKT complementarity residual over the training samples.
    pub kkt_residual: f64,
    pub converged: bool,
    /// Dual objective after each update, when requested.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(SvmError::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.w, x) + self.b)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.decision_value(x).map(Label::from_sign)
    }

    /// `Err(DidNotConverge)` when the solver stopped at its iteration cap.
    pub fn check_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(SvmError::DidNotConverge {
                max_iter: self.iterations,
                residual: self.kkt_residual,
            })
        }
    }

    pub fn warning(&self) -> Option<Warning> {
        (!self.converged).then(|| Warning::NotConverged {
            iterations: self.iterations,
            residual: self.kkt_residual,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate(data: &LabeledDataset) -> Result<usize> {
    if !data.has_both_classes() {
        return Err(SvmError::SingleClass);
    }
    let d = data.dim();
    for (i, row) in data.features.iter().enumerate() {
        if row.len() != d {
            return Err(SvmError::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite(i));
        }
    }
    Ok(d)
}

/// Dual objective `sum(a) - 1/2 a'Qa`, computed from the gradient `G = Qa - 1`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Trains a linear soft-margin SVM by SMO.
///
/// A model is returned even when the iteration cap is hit; check
/// [`SvmModel::converged`] or call [`SvmModel::check_converged`].
pub fn train_svm(data: &LabeledDataset, params: &SvmParams) -> Result<SvmModel> {
    let d = validate(data)?;
    let c = params.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::InvalidPenalty(c));
    }
    let n = data.len();
    let x = &data.features;
    let y: Vec<f64> = data.labels.iter().map(|l| l.sign()).collect();
    let kernel: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&x[i], &x[j])).collect())
        .collect();
    let max_iter = params.max_iter.unwrap_or(10 * n * n).max(1);

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    loop {
        // Maximal violating index i over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        // Second-order choice of j over I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !in_low(alpha[t], y[t]) {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = kernel[i][i] + kernel[t][t] - 2.0 * kernel[i][t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj < obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        if gmax + gmax2 < params.tol || i_sel.is_none() || j_sel.is_none() {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        let (i, j) = (i_sel.unwrap(), j_sel.unwrap());
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = y[i] * y[j] * kernel[i][j];
        if y[i] != y[j] {
            let quad = kernel[i][i] + kernel[j][j] + 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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
            let quad = kernel[i][i] + kernel[j][j] - 2.0 * q_ij;
            let quad = if quad > 0.0 { quad } else { TAU };
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
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel[t][i] * di + y[j] * kernel[t][j] * dj);
        }
        iterations += 1;
        if params.record_objective {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    let b = offset(&alpha, &grad, &y, c);
    let mut w = vec![0.0; d];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for (wk, xk) in w.iter_mut().zip(&x[t]) {
                *wk += alpha[t] * y[t] * xk;
            }
        }
    }
    let support_indices = (0..n).filter(|&t| alpha[t] > TAU).collect();
    let kkt_residual = (0..n)
        .map(|t| kkt_violation(alpha[t], y[t] * (dot(&w, &x[t]) + b), c))
        .fold(0.0, f64::max);

    Ok(SvmModel {
        w,
        b,
        alphas: alpha,
        c,
        support_indices,
        iterations,
        kkt_residual,
        converged,
        objective_trace: trace,
    })
}

/// Mean of `y_j - sum_i a_i y_i K_ij` over free vectors; midpoint of the
/// feasible interval when every multiplier sits at a bound.
fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        // y_t * G_t = sum_i a_i y_i K_it - y_t = -(y_t - sum_i a_i y_i K_it)
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    -rho
}

/// Complementarity residual of one sample given its margin `y f(x)`.
pub fn kkt_violation(alpha: f64, margin: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        (1.0 - margin).max(0.0)
    } else if alpha >= c {
        (margin - 1.0).max(0.0)
    } else {
        (margin - 1.0).abs()
    }
}

/// Free function form of [`SvmModel::decision_value`].
pub fn decision_value(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

/// Sigmoid map `p(f) = 1 / (1 + exp(A f + B))` from decision values to probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
}

impl Calibration {
    pub fn probability(&self, decision: f64) -> f64 {
        let z = self.a * decision + self.b;
        let p = if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        };
        p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }
}

/// Fits a Platt sigmoid to decision values by damped Newton with
/// backtracking, using the smoothed targets `(N+ + 1)/(N+ + 2)` and
/// `1/(N- + 2)`.
pub fn fit_calibration(model: &SvmModel, data: &LabeledDataset) -> Result<Calibration> {
    if !data.has_both_classes() {
        return Err(SvmError::SingleClass);
    }
    let decisions = data
        .features
        .iter()
        .map(|x| model.decision_value(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_sigmoid(&decisions, &data.labels))
}

pub fn fit_sigmoid(decisions: &[f64], labels: &[Label]) -> Calibration {
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let prior1 = labels.iter().filter(|&&l| l == Label::Positive).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l == Label::Positive { hi } else { lo })
        .collect();

    let nll = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = f * a + b;
                if z >= 0.0 {
                    t * z + (-z).exp().ln_1p()
                } else {
                    (t - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = nll(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &t) in decisions.iter().zip(&targets) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Calibration { a, b }
}

pub fn predict_probability(model: &SvmModel, calib: &Calibration, x: &[f64]) -> Result<f64> {
    Ok(calib.probability(model.decision_value(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC points over every distinct score threshold (descending) and the
/// trapezoidal AUC. Tied scores form a single diagonal step.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Roc> {
    assert_eq!(scores.len(), labels.len(), "scores must align with labels");
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(SvmError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    // Twice the area in units of one (positive, negative) pair.
    let mut area2: u64 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && scores[order[k]] == s {
            match labels[order[k]] {
                Label::Positive => tp += 1,
                Label::Negative => fp += 1,
            }
            k += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(Roc {
        points,
        auc: area2 as f64 / (2 * pos * neg) as f64,
    })
}

pub fn write_roc_csv<W: Write>(out: W, roc: &Roc) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fpr", "tpr", "threshold"])?;
    for p in &roc.points {
        w.write_record([f64_17(p.fpr), f64_17(p.tpr), f64_17(p.threshold)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub test_size: usize,
    pub accuracy: f64,
    /// `None` when the test split holds a single class.
    pub roc: Option<Roc>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
}

impl CvReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }
}

/// Stratified fold index for every sample.
///
/// Each class is shuffled with the seeded RNG, the shuffled classes are
/// concatenated (positives first) and position `p` goes to fold `p % k`.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut position = 0;
    for class in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = position % k;
            position += 1;
        }
    }
    assignment
}

/// k-fold stratified cross-validation. Folds train in parallel; the report
/// does not depend on the thread count.
pub fn cross_validate(
    data: &LabeledDataset,
    k: usize,
    params: &SvmParams,
    seed: u64,
) -> Result<CvReport> {
    if k < 2 || data.len() < k {
        return Err(SvmError::FoldTooSmall { k, n: data.len() });
    }
    validate(data)?;
    let assignment = stratified_folds(&data.labels, k, seed);
    let folds = (0..k)
        .into_par_iter()
        .map(|fold| {
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
            let test_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
            let train = data.subset(&train_idx);
            if !train.has_both_classes() {
                return Err(SvmError::SingleClassFold(fold));
            }
            let model = train_svm(&train, params)?;
            let test = data.subset(&test_idx);
            let scores = test
                .features
                .iter()
                .map(|x| model.decision_value(x))
                .collect::<Result<Vec<_>>>()?;
            let correct = scores
                .iter()
                .zip(&test.labels)
                .filter(|(s, l)| Label::from_sign(**s) == **l)
                .count();
            Ok(FoldResult {
                test_size: test_idx.len(),
                accuracy: correct as f64 / test_idx.len() as f64,
                roc: roc_curve(&scores, &test.labels).ok(),
                converged: model.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / k as f64;
    Ok(CvReport {
        k,
        folds,
        mean_accuracy,
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned JSON form of a trained, calibrated model together with the
/// normalization it expects its inputs in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub features: Vec<Indicator>,
    pub extremes: Vec<Extremes>,
    pub w: Vec<f64>,
    pub b: f64,
    pub alphas: Vec<f64>,
    pub c: f64,
    pub calibration: Calibration,
}

impl ModelDocument {
    pub fn new(
        model: &SvmModel,
        calibration: Calibration,
        features: Vec<Indicator>,
        extremes: Vec<Extremes>,
    ) -> Self {
        ModelDocument {
            version: MODEL_FORMAT_VERSION,
            features,
            extremes,
            w: model.w.clone(),
            b: model.b,
            alphas: model.alphas.clone(),
            c: model.c,
            calibration,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SvmError::Json(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| SvmError::Json(e.to_string()))?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(SvmError::UnsupportedVersion(doc.version));
        }
        Ok(doc)
    }

    /// Decision value of a raw (unnormalized) feature row.
    pub fn decision_raw(&self, raw: &[f64]) -> Result<f64> {
        if raw.len() != self.w.len() || self.extremes.len() != self.w.len() {
            return Err(SvmError::DimensionMismatch {
                expected: self.w.len(),
                found: raw.len(),
            });
        }
        let x: Vec<f64> = raw
            .iter()
            .zip(self.extremes.iter().zip(&self.features))
            .map(|(&v, (e, ind))| e.scale(v, ind.direction))
            .collect();
        Ok(dot(&self.w, &x) + self.b)
    }

    pub fn probability_raw(&self, raw: &[f64]) -> Result<f64> {
        Ok(self.calibration.probability(self.decision_raw(raw)?))
    }
}
