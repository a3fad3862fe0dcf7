//! JSON run configuration.
//!
//! One file describes one pipeline run. The `pipeline` key selects the
//! variant and every other key is checked against it, so a misspelled
//! hyperparameter is an error rather than a silently ignored default.
//! Relative input paths resolve against the directory holding the config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use climarisk_core::{Direction, KMeansParams, NeighborPool, SvmParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("`{field}` {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("input file `{0}` does not exist")]
    MissingFile(PathBuf),
    #[error("config describes the `{found}` pipeline, not `{expected}`")]
    WrongPipeline {
        expected: &'static str,
        found: &'static str,
    },
    #[error("no output directory: set `output_dir` or pass --out")]
    NoOutputDir,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "lowercase")]
pub enum PipelineConfig {
    Insure(InsureConfig),
    Develop(DevelopConfig),
    Preserve(PreserveConfig),
}

impl PipelineConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineConfig::Insure(_) => "insure",
            PipelineConfig::Develop(_) => "develop",
            PipelineConfig::Preserve(_) => "preserve",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            PipelineConfig::Insure(c) => c.seed,
            PipelineConfig::Develop(c) => c.seed,
            PipelineConfig::Preserve(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            PipelineConfig::Insure(c) => c.seed = seed,
            PipelineConfig::Develop(c) => c.seed = seed,
            PipelineConfig::Preserve(c) => c.seed = seed,
        }
    }

    pub fn output_dir(&self) -> Option<&Path> {
        match self {
            PipelineConfig::Insure(c) => c.output_dir.as_deref(),
            PipelineConfig::Develop(c) => c.output_dir.as_deref(),
            PipelineConfig::Preserve(c) => c.output_dir.as_deref(),
        }
    }

    /// Every input file the run will read, as written in the config.
    pub fn inputs(&self) -> Vec<&Path> {
        match self {
            PipelineConfig::Insure(c) => vec![c.panel.as_path()],
            PipelineConfig::Develop(c) => {
                let mut v = vec![c.panel.as_path()];
                if let Benchmark::Model(p) = &c.benchmark {
                    v.push(p.as_path());
                }
                v
            }
            PipelineConfig::Preserve(c) => vec![c.panel.as_path(), c.ahp_matrix.as_path()],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            PipelineConfig::Insure(c) => c.validate(),
            PipelineConfig::Develop(c) => c.validate(),
            PipelineConfig::Preserve(c) => c.validate(),
        }
    }
}

/// How the negative (loss) rows of an insurance panel are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelPolicy {
    /// The `n` rows with the lowest net premium margin are negative.
    LowestNpm(usize),
    /// Rows whose margin is at or below this quantile are negative.
    Quantile(f64),
    /// Labels read from a column; non-negative values are positive.
    Column(String),
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy::LowestNpm(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteSettings {
    #[serde(default = "default_smote_k")]
    pub k: usize,
    #[serde(default)]
    pub n_synthetic: Option<usize>,
    #[serde(default)]
    pub neighbor_pool: NeighborPool,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        SmoteSettings {
            k: default_smote_k(),
            n_synthetic: None,
            neighbor_pool: NeighborPool::Minority,
        }
    }
}

fn default_smote_k() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            start: 0.0,
            stop: 1.0,
            step: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticitySettings {
    /// Extreme-weather day counts, one column per category.
    pub weather_columns: Vec<String>,
    /// Features that respond to the weather index; defaults to all features.
    #[serde(default)]
    pub responding: Option<Vec<String>>,
    /// Added to every weather count before taking logs.
    #[serde(default = "default_offset")]
    pub offset: f64,
    /// Also fit one elasticity per weather category for the report.
    #[serde(default = "default_true")]
    pub multivariate: bool,
    #[serde(default)]
    pub grid: GridSettings,
}

fn default_offset() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsureConfig {
    pub panel: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directions: BTreeMap<String, Direction>,
    /// SVM feature columns; defaults to every column not used for labels or weather.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_premium")]
    pub premium_column: String,
    #[serde(default = "default_payout")]
    pub payout_column: String,
    /// Append the net premium margin to the feature vector.
    #[serde(default)]
    pub npm_feature: bool,
    #[serde(default)]
    pub labels: LabelPolicy,
    #[serde(default)]
    pub smote: SmoteSettings,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    pub elasticity: ElasticitySettings,
    #[serde(default = "default_true")]
    pub svg: bool,
}

fn default_premium() -> String {
    "premium".into()
}

fn default_payout() -> String {
    "payout".into()
}

fn check_svm(svm: &SvmParams) -> Result<(), ConfigError> {
    if !(svm.c > 0.0 && svm.c.is_finite()) {
        return Err(invalid("svm.c", "must be positive"));
    }
    if !(svm.tol > 0.0) {
        return Err(invalid("svm.tol", "must be positive"));
    }
    if svm.max_iter == Some(0) {
        return Err(invalid("svm.max_iter", "must be at least 1"));
    }
    Ok(())
}

impl InsureConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        check_svm(&self.svm)?;
        if self.smote.k == 0 {
            return Err(invalid("smote.k", "must be at least 1"));
        }
        if self.cv_folds < 2 {
            return Err(invalid("cv_folds", "must be at least 2"));
        }
        match &self.labels {
            LabelPolicy::LowestNpm(0) => {
                return Err(invalid("labels.lowest_npm", "must be at least 1"))
            }
            LabelPolicy::Quantile(q) if !(*q > 0.0 && *q < 1.0) => {
                return Err(invalid("labels.quantile", "must lie in (0, 1)"))
            }
            _ => {}
        }
        let e = &self.elasticity;
        if e.weather_columns.is_empty() {
            return Err(invalid("elasticity.weather_columns", "must not be empty"));
        }
        if !(e.offset >= 0.0 && e.offset.is_finite()) {
            return Err(invalid("elasticity.offset", "must be non-negative"));
        }
        let g = e.grid;
        if !(g.step > 0.0 && g.step.is_finite()) {
            return Err(invalid("elasticity.grid.step", "must be positive"));
        }
        if !(g.start > -1.0) {
            return Err(invalid("elasticity.grid.start", "must exceed -1"));
        }
        if !(g.stop >= g.start && g.stop.is_finite()) {
            return Err(invalid("elasticity.grid.stop", "must not be below start"));
        }
        if (g.stop - g.start) / g.step > 1e6 {
            return Err(invalid("elasticity.grid", "holds more than a million points"));
        }
        Ok(())
    }
}

/// Source of the per-city benchmark scores that decide which cluster is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Benchmark {
    /// A raw score column in the city panel (excluded from clustering).
    Column(String),
    /// A model document written by the insure pipeline; its features must be panel columns.
    Model(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightStage {
    #[default]
    AfterNormalization,
    BeforeNormalization,
}

fn default_population() -> String {
    "population".into()
}

fn default_k_percent() -> f64 {
    15.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansSettings {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_kmeans_tol")]
    pub tol: f64,
}

fn default_restarts() -> usize {
    KMeansParams::default().restarts
}

fn default_max_iter() -> usize {
    KMeansParams::default().max_iter
}

fn default_kmeans_tol() -> f64 {
    KMeansParams::default().tol
}

impl Default for KMeansSettings {
    fn default() -> Self {
        KMeansSettings {
            restarts: default_restarts(),
            max_iter: default_max_iter(),
            tol: default_kmeans_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevelopConfig {
    pub panel: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directions: BTreeMap<String, Direction>,
    /// Clustering columns; defaults to every column except the benchmark column.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    #[serde(default = "default_population")]
    pub population_column: String,
    /// Population amplification in percent.
    #[serde(default = "default_k_percent")]
    pub k_percent: f64,
    #[serde(default)]
    pub reweight: ReweightStage,
    pub benchmark: Benchmark,
    #[serde(default)]
    pub kmeans: KMeansSettings,
}

impl DevelopConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(self.k_percent > -100.0 && self.k_percent.is_finite()) {
            return Err(invalid("k_percent", "must exceed -100"));
        }
        if self.kmeans.restarts == 0 {
            return Err(invalid("kmeans.restarts", "must be at least 1"));
        }
        if self.kmeans.max_iter == 0 {
            return Err(invalid("kmeans.max_iter", "must be at least 1"));
        }
        if !(self.kmeans.tol >= 0.0) {
            return Err(invalid("kmeans.tol", "must be non-negative"));
        }
        if let Some(f) = &self.features {
            if !f.contains(&self.population_column) {
                return Err(invalid(
                    "features",
                    format!("must include the population column `{}`", self.population_column),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessSettings {
    pub sigma: f64,
    pub trials: usize,
    #[serde(default = "default_true")]
    pub recompute_weights: bool,
    #[serde(default)]
    pub clamp: bool,
}

fn default_alpha() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreserveConfig {
    pub panel: PathBuf,
    /// Pairwise comparison matrix, rows in panel column order.
    pub ahp_matrix: PathBuf,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directions: BTreeMap<String, Direction>,
    /// Share of the TOPSIS-ORM weights in the combined weights.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub robustness: Option<RobustnessSettings>,
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl PreserveConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid("alpha", "must lie in [0, 1]"));
        }
        if let Some(r) = &self.robustness {
            if !(r.sigma >= 0.0 && r.sigma.is_finite()) {
                return Err(invalid("robustness.sigma", "must be non-negative"));
            }
            if r.trials == 0 {
                return Err(invalid("robustness.trials", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// A parsed config plus the directory its relative paths are resolved against.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let pipeline: PipelineConfig = serde_json::from_str(text)?;
        Ok(RunConfig {
            pipeline,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Range checks plus existence of every input file.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline.validate()?;
        for p in self.pipeline.inputs() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(ConfigError::MissingFile(full));
            }
        }
        Ok(())
    }

    /// `--out` wins over `output_dir`.
    pub fn output_dir(&self, cli_out: Option<&Path>) -> Result<PathBuf, ConfigError> {
        match (cli_out, self.pipeline.output_dir()) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => Err(ConfigError::NoOutputDir),
        }
    }

    pub fn expect(&self, pipeline: &'static str) -> Result<(), ConfigError> {
        let found = self.pipeline.name();
        if found == pipeline {
            Ok(())
        } else {
            Err(ConfigError::WrongPipeline {
                expected: pipeline,
                found,
            })
        }
    }
}
