use std::fmt;

use serde::Serialize;

/// Non-fatal conditions raised while computing a result.
///
/// Operations that can degrade gracefully attach these to their output
/// instead of failing; the CLI copies them into the run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Column was constant; every normalized entry was set to 0.5.
    DegenerateColumn { column: String },
    /// A scenario prediction went negative and was clamped to 0.
    NegativePrediction { indicator: String, lambda: f64 },
    /// A re-normalized prediction fell outside the training range and was clamped into [0, 1].
    OutOfRange { indicator: String, lambda: f64, value: f64 },
    /// The SVM solver hit its iteration cap before meeting the KKT tolerance.
    NotConverged { iterations: usize, residual: f64 },
    /// Both clusters had the same mean benchmark score; the lower index was labeled positive.
    ClusterLabelTie { mean: f64 },
    /// The AHP comparison matrix failed the CR <= 0.1 consistency test.
    InconsistentMatrix { cr: f64 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::DegenerateColumn { column } => {
                write!(f, "column `{column}` is constant; normalized to 0.5")
            }
            Warning::NegativePrediction { indicator, lambda } => write!(
                f,
                "prediction for `{indicator}` went negative at lambda={lambda}; clamped to 0"
            ),
            Warning::OutOfRange {
                indicator,
                lambda,
                value,
            } => write!(
                f,
                "normalized prediction for `{indicator}` at lambda={lambda} was {value}; clamped into [0, 1]"
            ),
            Warning::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "SVM solver stopped after {iterations} iterations with KKT residual {residual}"
            ),
            Warning::ClusterLabelTie { mean } => write!(
                f,
                "both clusters have mean benchmark {mean}; lower-index cluster labeled positive"
            ),
            Warning::InconsistentMatrix { cr } => {
                write!(f, "comparison matrix has CR={cr} > 0.1")
            }
        }
    }
}
