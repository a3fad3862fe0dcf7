//! Log-linear (Cobb-Douglas style) elasticity fits and extreme-weather
//! scenario sweeps.
//!
//! `ln Y = ln a + sum_j b_j ln(K_j + offset)` is fit by ordinary least
//! squares, which is the maximum-likelihood estimate under i.i.d. Gaussian
//! log residuals. A scenario in which the weather index grows by the
//! fraction `lambda` moves each indicator to `x * (1 + lambda * beta)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{ModelDocument, SvmError};
use crate::warning::Warning;

#[derive(Debug, Error, PartialEq)]
pub enum ElasticityError {
    #[error("non-positive value {value} at row {row}, column `{column}` (after offset)")]
    NonPositiveValue {
        row: usize,
        column: String,
        value: f64,
    },
    #[error("regressors are collinear")]
    RankDeficient,
    #[error("{observations} observations cannot identify {parameters} parameters")]
    TooFewObservations {
        observations: usize,
        parameters: usize,
    },
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lambda must exceed -1, got {0}")]
    InvalidLambda(f64),
    #[error("lambda grid is empty")]
    GridEmpty,
    #[error("lambda grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("scenario pipeline has no trained model")]
    NoModel,
    #[error(transparent)]
    Model(#[from] SvmError),
}

pub type Result<T, E = ElasticityError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticityModel {
    /// `ln a`.
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub regressors: Vec<String>,
    /// Additive offset applied to every regressor before the log.
    pub offset: f64,
    pub r_squared: f64,
    pub residual_variance: f64,
    pub observations: usize,
}

impl ElasticityModel {
    pub fn predict_log(&self, regressors: &[f64]) -> f64 {
        self.intercept
            + self
                .betas
                .iter()
                .zip(regressors)
                .map(|(b, k)| b * (k + self.offset).ln())
                .sum::<f64>()
    }
}

/// Fits `ln Y` on `ln(K + offset)`. `regressors` is row-major, one row per
/// observation aligned with `target`.
pub fn fit_cdc(
    target: &[f64],
    regressors: &[Vec<f64>],
    names: &[String],
    offset: f64,
) -> Result<ElasticityModel> {
    let n = target.len();
    if regressors.len() != n {
        return Err(ElasticityError::DimensionMismatch {
            expected: n,
            found: regressors.len(),
        });
    }
    let p = names.len();
    if n < p + 1 {
        return Err(ElasticityError::TooFewObservations {
            observations: n,
            parameters: p + 1,
        });
    }
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        if regressors[i].len() != p {
            return Err(ElasticityError::DimensionMismatch {
                expected: p,
                found: regressors[i].len(),
            });
        }
        if !(target[i] > 0.0) {
            return Err(ElasticityError::NonPositiveValue {
                row: i + 1,
                column: "target".into(),
                value: target[i],
            });
        }
        y[i] = target[i].ln();
        x[(i, 0)] = 1.0;
        for j in 0..p {
            let v = regressors[i][j] + offset;
            if !(v > 0.0) {
                return Err(ElasticityError::NonPositiveValue {
                    row: i + 1,
                    column: names[j].clone(),
                    value: v,
                });
            }
            x[(i, j + 1)] = v.ln();
        }
    }

    // Column-pivoted Householder QR. Pivoting makes |R_kk| non-increasing,
    // so a tiny trailing diagonal entry flags a rank-deficient design.
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let rmax = r[(0, 0)].abs();
    let cutoff = rmax * 1e-10 * n.max(p + 1) as f64;
    if (0..=p).any(|k| r[(k, k)].abs() <= cutoff) {
        return Err(ElasticityError::RankDeficient);
    }
    let mut coef = r
        .solve_upper_triangular(&(qr.q().transpose() * &y))
        .ok_or(ElasticityError::RankDeficient)?;
    qr.p().inv_permute_rows(&mut coef);

    let residuals = &y - &x * &coef;
    let ssr = residuals.norm_squared();
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    let dof = n - (p + 1);
    let residual_variance = if dof > 0 { ssr / dof as f64 } else { 0.0 };

    Ok(ElasticityModel {
        intercept: coef[0],
        betas: coef.iter().skip(1).copied().collect(),
        regressors: names.to_vec(),
        offset,
        r_squared,
        residual_variance,
        observations: n,
    })
}

/// Single-regressor fit on the row totals of `regressors` (total extreme
/// weather days across categories).
pub fn fit_cdc_collapsed(
    target: &[f64],
    regressors: &[Vec<f64>],
    offset: f64,
) -> Result<ElasticityModel> {
    let totals: Vec<Vec<f64>> = regressors.iter().map(|r| vec![r.iter().sum()]).collect();
    fit_cdc(target, &totals, &["total".to_string()], offset)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub lambda: f64,
    pub baseline: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Indices whose linearized prediction went negative and was set to 0.
    pub clamped: Vec<usize>,
}

/// `x_j * (1 + lambda * beta_j)` without clamping.
pub fn linear_response(baseline: &[f64], betas: &[f64], lambda: f64) -> Vec<f64> {
    baseline
        .iter()
        .zip(betas)
        .map(|(x, b)| x * (1.0 + lambda * b))
        .collect()
}

pub fn predict_scenario(baseline: &[f64], betas: &[f64], lambda: f64) -> Result<Scenario> {
    if baseline.len() != betas.len() {
        return Err(ElasticityError::DimensionMismatch {
            expected: baseline.len(),
            found: betas.len(),
        });
    }
    if !(lambda > -1.0) {
        return Err(ElasticityError::InvalidLambda(lambda));
    }
    let mut predicted = linear_response(baseline, betas, lambda);
    let mut clamped = Vec::new();
    for (j, v) in predicted.iter_mut().enumerate() {
        if *v < 0.0 {
            *v = 0.0;
            clamped.push(j);
        }
    }
    Ok(Scenario {
        lambda,
        baseline: baseline.to_vec(),
        predicted,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPoint {
    pub probability: f64,
    pub warnings: Vec<Warning>,
}

/// Anything that maps a weather growth fraction to an underwriting probability.
pub trait ScenarioScorer: Sync {
    fn evaluate(&self, lambda: f64) -> Result<ScenarioPoint>;
}

/// The full underwriting pipeline: scenario prediction, re-normalization
/// with the training extremes, SVM decision value and Platt sigmoid.
#[derive(Debug, Clone)]
pub struct SvmScenario<'a> {
    pub model: &'a ModelDocument,
    /// Last observed raw indicator row.
    pub baseline: Vec<f64>,
    /// Per-feature response to the weather index; 0 for non-responding features.
    pub betas: Vec<f64>,
}

impl ScenarioScorer for SvmScenario<'_> {
    fn evaluate(&self, lambda: f64) -> Result<ScenarioPoint> {
        let m = self.model;
        if m.w.is_empty() {
            return Err(ElasticityError::NoModel);
        }
        if self.baseline.len() != m.w.len() || m.extremes.len() != m.w.len() {
            return Err(ElasticityError::DimensionMismatch {
                expected: m.w.len(),
                found: self.baseline.len(),
            });
        }
        let scenario = predict_scenario(&self.baseline, &self.betas, lambda)?;
        let mut warnings: Vec<Warning> = scenario
            .clamped
            .iter()
            .map(|&j| Warning::NegativePrediction {
                indicator: m.features[j].name.clone(),
                lambda,
            })
            .collect();
        let mut x = Vec::with_capacity(m.w.len());
        for (j, &v) in scenario.predicted.iter().enumerate() {
            let scaled = m.extremes[j].scale(v, m.features[j].direction);
            if !(0.0..=1.0).contains(&scaled) {
                warnings.push(Warning::OutOfRange {
                    indicator: m.features[j].name.clone(),
                    lambda,
                    value: scaled,
                });
            }
            x.push(scaled.clamp(0.0, 1.0));
        }
        let f: f64 = m.w.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + m.b;
        Ok(ScenarioPoint {
            probability: m.calibration.probability(f),
            warnings,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityCurve {
    pub points: Vec<CurvePoint>,
    /// Where the curve crosses 0.5, if it does.
    pub lambda_star: Option<f64>,
    #[serde(skip)]
    pub warnings: Vec<Warning>,
}

const BISECTION_WIDTH: f64 = 1e-10;

/// Evaluates `scorer` on every grid point and locates the first 0.5
/// crossing by bisection between its bracketing grid points.
pub fn sweep<S: ScenarioScorer + ?Sized>(scorer: &S, grid: &[f64]) -> Result<ProbabilityCurve> {
    if grid.is_empty() {
        return Err(ElasticityError::GridEmpty);
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ElasticityError::GridNotIncreasing);
    }
    if let Some(&bad) = grid.iter().find(|&&l| !(l > -1.0)) {
        return Err(ElasticityError::InvalidLambda(bad));
    }
    let evals = grid
        .par_iter()
        .map(|&l| scorer.evaluate(l))
        .collect::<Result<Vec<_>>>()?;

    let points: Vec<CurvePoint> = grid
        .iter()
        .zip(&evals)
        .map(|(&lambda, e)| CurvePoint {
            lambda,
            probability: e.probability,
        })
        .collect();
    let warnings = evals.into_iter().flat_map(|e| e.warnings).collect();

    let mut lambda_star = None;
    for (k, pt) in points.iter().enumerate() {
        if pt.probability == 0.5 {
            lambda_star = Some(pt.lambda);
            break;
        }
        if let Some(next) = points.get(k + 1) {
            if (pt.probability - 0.5) * (next.probability - 0.5) < 0.0 {
                lambda_star = Some(bisect(scorer, pt.lambda, next.lambda, pt.probability > 0.5)?);
                break;
            }
        }
    }
    Ok(ProbabilityCurve {
        points,
        lambda_star,
        warnings,
    })
}

fn bisect<S: ScenarioScorer + ?Sized>(
    scorer: &S,
    mut lo: f64,
    mut hi: f64,
    above_at_lo: bool,
) -> Result<f64> {
    for _ in 0..200 {
        if hi - lo <= BISECTION_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = scorer.evaluate(mid)?.probability;
        if p == 0.5 {
            return Ok(mid);
        }
        if (p > 0.5) == above_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Evenly spaced grid `start, start + step, ...` up to and including `stop`.
pub fn lambda_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

pub fn write_curve_csv<W: std::io::Write>(out: W, curve: &ProbabilityCurve) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "probability"])?;
    for p in &curve.points {
        w.write_record([
            crate::fmt::f64_17(p.lambda),
            crate::fmt::f64_17(p.probability),
        ])?;
    }
    w.flush()?;
    Ok(())
}
