//! Batch front end for the climarisk pipelines.
//!
//! A run reads one JSON config, executes the pipeline's stages in order and
//! writes CSV, SVG and a `summary.json` into the output directory. Given the
//! same config and seed the outputs are byte-identical, whatever the thread
//! count.

pub mod config;
mod develop;
mod insure;
pub mod json;
mod preserve;
pub mod report;
pub mod svg;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use climarisk_core::dataset::{load_panel, Schema};
use climarisk_core::{Direction, IndicatorPanel};

pub use config::{ConfigError, PipelineConfig, RunConfig};
pub use insure::negative_rows;
pub use report::{RunError, RunSummary, StageStatus, SUMMARY_FILE};

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub allow_inconsistent: bool,
}

pub(crate) struct Context<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    seed: u64,
    allow_inconsistent: bool,
}

impl Context<'_> {
    fn resolve(&self, p: &Path) -> PathBuf {
        self.config.resolve(p)
    }
}

pub(crate) fn load_panel_file(
    path: &Path,
    directions: &BTreeMap<String, Direction>,
) -> anyhow::Result<IndicatorPanel> {
    let file = File::open(path).with_context(|| format!("cannot open `{}`", path.display()))?;
    let schema = Schema {
        directions: directions.clone(),
        ..Schema::default()
    };
    load_panel(file, &schema).with_context(|| format!("reading `{}`", path.display()))
}

/// Validates `config`, runs its pipeline and writes the summary.
///
/// An invalid config fails before anything is written. Once the output
/// directory exists a summary is always written, with failed stages marked,
/// and the stage error is returned afterwards.
pub fn run(mut config: RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    if let Some(seed) = opts.seed {
        config.pipeline.set_seed(seed);
    }
    config.validate()?;
    let out = config.output_dir(opts.out.as_deref())?;
    fs::create_dir_all(&out).map_err(|source| RunError::Output {
        path: out.clone(),
        source,
    })?;

    let ctx = Context {
        config: &config,
        out: out.clone(),
        seed: config.pipeline.seed(),
        allow_inconsistent: opts.allow_inconsistent,
    };
    let run_stages = || {
        let (stages, result) = match &config.pipeline {
            PipelineConfig::Insure(c) => {
                let mut s = RunSummary::new(&config.pipeline, insure::STAGES);
                let r = insure::run(c, &ctx, &mut s);
                (s, r)
            }
            PipelineConfig::Develop(c) => {
                let mut s = RunSummary::new(&config.pipeline, develop::STAGES);
                let r = develop::run(c, &ctx, &mut s);
                (s, r)
            }
            PipelineConfig::Preserve(c) => {
                let mut s = RunSummary::new(&config.pipeline, preserve::STAGES);
                let r = preserve::run(c, &ctx, &mut s);
                (s, r)
            }
        };
        (stages, result)
    };

    let (mut summary, result) = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Stage {
                    stage: "setup",
                    message: e.to_string(),
                })?;
            pool.install(run_stages)
        }
        None => run_stages(),
    };
    summary.outputs.push(SUMMARY_FILE.to_string());
    summary.outputs.sort();
    summary.write(&out)?;
    result.map(|()| summary)
}
