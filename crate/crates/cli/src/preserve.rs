//! Landmark preservation pipeline: TOPSIS-ORM weights from the panel,
//! AHP weights from expert comparisons, a blended score per landmark and
//! an optional perturbation study.

use std::fs::File;

use anyhow::{ensure, Context as _};
use climarisk_core::dataset::{normalize, write_normalized_csv};
use climarisk_core::mcdm::{
    ahp_weights, combine_weights, read_comparison_matrix, robustness, score, topsis_orm_weights,
    write_scores_csv, write_weights_csv, Gradient, RobustnessParams,
};
use climarisk_core::Warning;
use serde_json::json;

use crate::config::PreserveConfig;
use crate::report::{InconsistentMatrix, RunError, RunSummary};
use crate::{load_panel_file, svg, Context};

pub const STAGES: &[&str] = &[
    "load",
    "normalize",
    "topsis_orm",
    "ahp",
    "combine",
    "score",
    "robustness",
];

pub(crate) fn run(cfg: &PreserveConfig, ctx: &Context, s: &mut RunSummary) -> Result<(), RunError> {
    let raw = s.stage("load", |_| {
        load_panel_file(&ctx.resolve(&cfg.panel), &cfg.directions)
    })?;
    let names: Vec<String> = raw.indicators.iter().map(|i| i.name.clone()).collect();

    let normalized = s.stage("normalize", |s| {
        let n = normalize(&raw);
        for w in &n.warnings {
            s.warn(w.clone());
        }
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &n)?;
        s.emit(&ctx.out, "normalized.csv", &buf)?;
        Ok(n)
    })?;

    let orm = s.stage("topsis_orm", |s| {
        let (importance, orm) = topsis_orm_weights(&normalized.values)?;
        let order: Vec<&str> = importance.order.iter().map(|&j| names[j].as_str()).collect();
        s.headline(
            "importance",
            json!({"s": importance.s, "order": order, "ratios": importance.ratios}),
        )?;
        Ok(orm)
    })?;

    let ahp = s.stage("ahp", |s| {
        let path = ctx.resolve(&cfg.ahp_matrix);
        let file = File::open(&path)
            .with_context(|| format!("cannot open `{}`", path.display()))?;
        let matrix = read_comparison_matrix(file)?;
        ensure!(
            matrix.len() == names.len(),
            "comparison matrix is {0}x{0} but the panel has {1} indicators",
            matrix.len(),
            names.len()
        );
        let result = ahp_weights(&matrix)?;
        s.headline(
            "ahp",
            json!({
                "lambda_max": result.lambda_max,
                "ci": result.ci,
                "cr": result.cr,
                "ri": result.ri,
                "iterations": result.iterations,
            }),
        )?;
        if !result.is_consistent() {
            if !ctx.allow_inconsistent {
                return Err(InconsistentMatrix(result.cr).into());
            }
            s.warn(Warning::InconsistentMatrix { cr: result.cr });
        }
        Ok(result.weights)
    })?;

    let combined = s.stage("combine", |s| {
        let z = combine_weights(&orm, &ahp, cfg.alpha)?;
        let mut buf = Vec::new();
        write_weights_csv(&mut buf, &names, &orm, &ahp, &z)?;
        s.emit(&ctx.out, "weights.csv", &buf)?;
        s.headline(
            "weights",
            json!({
                "indicators": names,
                "orm": orm.weights,
                "ahp": ahp.weights,
                "combined": z.weights,
                "alpha": cfg.alpha,
            }),
        )?;
        Ok(z)
    })?;

    s.stage("score", |s| {
        let report = score(&normalized, &combined)?;
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &report)?;
        s.emit(&ctx.out, "scores.csv", &buf)?;
        if cfg.svg {
            let bars: Vec<(String, f64)> =
                report.entries.iter().map(|e| (e.id.clone(), e.score)).collect();
            let svg = svg::bar_chart("Landmark scores", &bars, Some(report.threshold));
            s.emit(&ctx.out, "scores.svg", svg.as_bytes())?;
        }
        let count = |g: Gradient| report.entries.iter().filter(|e| e.gradient == g).count();
        let protect: Vec<&str> = report
            .entries
            .iter()
            .filter(|e| e.protect)
            .map(|e| e.id.as_str())
            .collect();
        s.headline(
            "gradients",
            json!({
                "first": count(Gradient::First),
                "second": count(Gradient::Second),
                "third": count(Gradient::Third),
            }),
        )?;
        s.headline("protect", protect)?;
        s.headline("scores", &report.entries)
    })?;

    if let Some(r) = &cfg.robustness {
        s.stage("robustness", |s| {
            let params = RobustnessParams {
                sigma: r.sigma,
                trials: r.trials,
                seed: ctx.seed,
                recompute_weights: r.recompute_weights,
                clamp: r.clamp,
            };
            let report = robustness(&normalized, &combined, &ahp, cfg.alpha, &params)?;
            s.emit(&ctx.out, "robustness.json", crate::json::to_string(&report)?.as_bytes())?;
            s.headline("robustness", &report)
        })?;
    }
    Ok(())
}
