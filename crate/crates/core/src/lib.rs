//! Climate-risk decision algorithms.
//!
//! The crate covers two decision models that share a small amount of data
//! plumbing:
//!
//! * **Underwriting** ([`dataset`], [`sampling`], [`classifier`],
//!   [`elasticity`]): indicator panels are min-max normalized, the minority
//!   class is oversampled with SMOTE, a linear soft-margin SVM is trained by
//!   SMO and calibrated with a Platt sigmoid, and a log-linear elasticity fit
//!   drives a sweep over extreme-weather growth that yields an underwriting
//!   probability curve and its 50% crossing.
//! * **Siting and preservation** ([`clustering`], [`mcdm`]): k-means over city
//!   indicators with population amplification, and a hybrid TOPSIS-ORM / AHP
//!   weighting that scores landmarks for protection.
//!
//! Every operation is a pure function of its inputs (plus an explicit seed
//! where randomness is involved), so results are reproducible regardless of
//! the rayon thread count.

pub mod classifier;
pub mod clustering;
pub mod dataset;
pub mod elasticity;
pub mod fmt;
pub mod mcdm;
pub mod sampling;
pub mod warning;

pub use classifier::{Calibration, CvReport, ModelDocument, Roc, RocPoint, SvmModel, SvmParams};
pub use clustering::{Clustering, KMeansParams};
pub use dataset::{
    DeviationTable, Direction, Indicator, IndicatorPanel, NormalizedPanel, Schema,
};
pub use elasticity::{ElasticityModel, ProbabilityCurve, ScenarioScorer};
pub use mcdm::{
    AhpResult, Gradient, ImportanceVector, InteractionMatrix, RobustnessReport, ScoreReport,
    WeightKind, WeightVector,
};
pub use sampling::{Label, LabeledDataset, NeighborPool, Provenance, SmoteConfig};
pub use warning::Warning;
