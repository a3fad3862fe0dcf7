//! Run summary and the stage bookkeeping behind it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use climarisk_core::Warning;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` failed: {message}")]
    Stage {
        stage: &'static str,
        message: String,
    },
    #[error("comparison matrix is inconsistent (CR = {cr:.4} > 0.1); rerun with --allow-inconsistent to proceed")]
    Inconsistent { cr: f64 },
    #[error("cannot write `{path}`: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// 0 success, 1 stage failure, 2 invalid config, 3 consistency gate.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } | RunError::Output { .. } => 1,
            RunError::Inconsistent { .. } => 3,
        }
    }
}

/// Raised inside a stage to trip the AHP consistency gate.
#[derive(Debug, Error)]
#[error("comparison matrix is inconsistent (CR = {0})")]
pub struct InconsistentMatrix(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub name: &'static str,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub pipeline: &'static str,
    pub seed: u64,
    pub status: StageStatus,
    pub stages: Vec<StageRecord>,
    pub headline: BTreeMap<String, Value>,
    pub warnings: Vec<Warning>,
    pub outputs: Vec<String>,
    pub config: PipelineConfig,
}

impl RunSummary {
    pub fn new(config: &PipelineConfig, stages: &[&'static str]) -> Self {
        RunSummary {
            tool: "climarisk",
            version: env!("CARGO_PKG_VERSION"),
            pipeline: config.name(),
            seed: config.seed(),
            status: StageStatus::Ok,
            stages: stages
                .iter()
                .map(|&name| StageRecord {
                    name,
                    status: StageStatus::Skipped,
                    error: None,
                })
                .collect(),
            headline: BTreeMap::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
            config: config.clone(),
        }
    }

    /// Runs one named stage and records its outcome. A failure marks the
    /// run failed; stages never reached stay `skipped`.
    pub fn stage<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce(&mut Self) -> anyhow::Result<T>,
    ) -> Result<T, RunError> {
        log::info!("stage {name}");
        let result = f(self);
        let status = if result.is_ok() {
            StageStatus::Ok
        } else {
            StageStatus::Failed
        };
        let error = result.as_ref().err().map(|e| format!("{e:#}"));
        match self.stages.iter_mut().find(|s| s.name == name) {
            Some(rec) => {
                rec.status = status;
                rec.error = error;
            }
            None => self.stages.push(StageRecord {
                name,
                status,
                error,
            }),
        }
        result.map_err(|e| {
            self.status = StageStatus::Failed;
            match e.downcast_ref::<InconsistentMatrix>() {
                Some(InconsistentMatrix(cr)) => RunError::Inconsistent { cr: *cr },
                None => RunError::Stage {
                    stage: name,
                    message: format!("{e:#}"),
                },
            }
        })
    }

    pub fn headline(&mut self, key: &str, value: impl Serialize) -> anyhow::Result<()> {
        self.headline
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn warn(&mut self, w: Warning) {
        log::warn!("{w}");
        self.warnings.push(w);
    }

    /// Writes `bytes` to `dir/name` and lists the file in the summary.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| anyhow::anyhow!("cannot write `{}`: {e}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let path = dir.join(SUMMARY_FILE);
        let text = crate::json::to_string(self).map_err(|e| RunError::Output {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
        fs::write(&path, text).map_err(|source| RunError::Output { path, source })
    }
}
