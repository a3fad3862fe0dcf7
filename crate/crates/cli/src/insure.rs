//! Insurance pipeline: normalize, label loss rows, SMOTE-balance, cross
//! validate, train and calibrate the SVM, fit elasticities and sweep the
//! weather growth fraction.

use std::collections::BTreeSet;

use anyhow::{bail, ensure, Context as _};
use climarisk_core::classifier::{cross_validate, fit_calibration, train_svm, write_roc_csv};
use climarisk_core::dataset::{net_premium_margin, normalize, write_normalized_csv};
use climarisk_core::elasticity::{
    fit_cdc, fit_cdc_collapsed, lambda_grid, sweep, write_curve_csv, SvmScenario,
};
use climarisk_core::sampling::{balance, write_trace_csv, SamplingError};
use climarisk_core::{
    Direction, ElasticityModel, Indicator, IndicatorPanel, Label, LabeledDataset, ModelDocument,
    SmoteConfig, Warning,
};
use serde::Serialize;
use serde_json::json;

use crate::config::{InsureConfig, LabelPolicy};
use crate::report::{RunError, RunSummary};
use crate::{load_panel_file, svg, Context};

pub const STAGES: &[&str] = &[
    "load",
    "normalize",
    "label",
    "balance",
    "cross_validate",
    "train",
    "elasticity",
    "sweep",
];

pub const NPM_COLUMN: &str = "npm";

#[derive(Serialize)]
struct ElasticityEntry<'a> {
    target: &'a str,
    collapsed: &'a ElasticityModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    multivariate: Option<&'a ElasticityModel>,
}

/// Indices of the rows labeled negative under `policy`.
pub fn negative_rows(npm: &[f64], policy: &LabelPolicy) -> anyhow::Result<Vec<usize>> {
    let n = npm.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| npm[a].total_cmp(&npm[b]).then(a.cmp(&b)));
    let count = match policy {
        LabelPolicy::LowestNpm(k) => *k,
        LabelPolicy::Quantile(q) => {
            // Nearest-rank quantile: every row at or below it is negative.
            let rank = ((q * n as f64).ceil() as usize).clamp(1, n.max(1));
            let cut = npm[order[rank - 1]];
            npm.iter().filter(|&&v| v <= cut).count()
        }
        LabelPolicy::Column(_) => bail!("label column policy has no margin ranking"),
    };
    ensure!(
        count < n,
        "labeling {count} of {n} rows negative leaves no positive rows"
    );
    let mut neg: Vec<usize> = order[..count].to_vec();
    neg.sort_unstable();
    Ok(neg)
}

pub(crate) fn run(cfg: &InsureConfig, ctx: &Context, s: &mut RunSummary) -> Result<(), RunError> {
    let raw = s.stage("load", |_| {
        load_panel_file(&ctx.resolve(&cfg.panel), &cfg.directions)
    })?;

    let (panel, normalized, npm) = s.stage("normalize", |s| {
        let mut excluded: BTreeSet<&str> = cfg
            .elasticity
            .weather_columns
            .iter()
            .map(String::as_str)
            .collect();
        excluded.insert(&cfg.premium_column);
        excluded.insert(&cfg.payout_column);
        if let LabelPolicy::Column(c) = &cfg.labels {
            excluded.insert(c);
        }
        let names: Vec<String> = match &cfg.features {
            Some(f) => {
                if let Some(bad) = f.iter().find(|n| excluded.contains(n.as_str())) {
                    bail!("`{bad}` cannot be both a feature and a label or weather column");
                }
                f.clone()
            }
            None => raw
                .indicators
                .iter()
                .map(|i| i.name.clone())
                .filter(|n| !excluded.contains(n.as_str()))
                .collect(),
        };
        let needs_npm = cfg.npm_feature || !matches!(cfg.labels, LabelPolicy::Column(_));
        let npm = if needs_npm {
            let premium = raw.column_by_name(&cfg.premium_column)?;
            let payout = raw.column_by_name(&cfg.payout_column)?;
            let v = premium
                .iter()
                .zip(&payout)
                .enumerate()
                .map(|(i, (&p, &c))| {
                    net_premium_margin(p, c).with_context(|| format!("row {}", i + 1))
                })
                .collect::<anyhow::Result<Vec<f64>>>()?;
            Some(v)
        } else {
            None
        };
        let mut panel = raw.select(&names)?;
        if cfg.npm_feature {
            let indicator = Indicator {
                name: NPM_COLUMN.into(),
                direction: Direction::Positive,
            };
            panel = panel.with_column(indicator, npm.as_deref().unwrap_or_default())?;
        }
        ensure!(panel.n_indicators() > 0, "no feature columns selected");
        let normalized = normalize(&panel);
        for w in &normalized.warnings {
            s.warn(w.clone());
        }
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &normalized)?;
        s.emit(&ctx.out, "normalized.csv", &buf)?;
        s.headline("features", &panel.indicators)?;
        Ok((panel, normalized, npm))
    })?;

    let labels = s.stage("label", |s| {
        let labels: Vec<Label> = match &cfg.labels {
            LabelPolicy::Column(c) => raw
                .column_by_name(c)?
                .into_iter()
                .map(Label::from_sign)
                .collect(),
            policy => {
                let npm = npm.as_deref().unwrap_or_default();
                let neg = negative_rows(npm, policy)?;
                let mut labels = vec![Label::Positive; npm.len()];
                for i in neg {
                    labels[i] = Label::Negative;
                }
                labels
            }
        };
        let negatives: Vec<&str> = labels
            .iter()
            .zip(&panel.row_ids)
            .filter(|(l, _)| **l == Label::Negative)
            .map(|(_, id)| id.as_str())
            .collect();
        s.headline("negative_rows", &negatives)?;
        Ok(labels)
    })?;

    let balanced = s.stage("balance", |s| {
        let data = LabeledDataset::new(normalized.values.clone(), labels)?;
        let smote = SmoteConfig {
            k: cfg.smote.k,
            n_synthetic: cfg.smote.n_synthetic,
            seed: ctx.seed,
            neighbor_pool: cfg.smote.neighbor_pool,
        };
        let out = match balance(&data, &smote) {
            Err(e @ SamplingError::PoolTooSmall { .. }) => {
                return Err(anyhow::Error::new(e).context(
                    "minority-pool SMOTE needs at least two minority rows; \
                     label more rows negative or set smote.neighbor_pool to `majority`",
                ))
            }
            r => r?,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace)?;
        s.emit(&ctx.out, "smote_trace.csv", &buf)?;
        s.headline(
            "balance",
            json!({
                "real": data.len(),
                "synthetic": out.trace.len(),
                "positive": out.dataset.count(Label::Positive),
                "negative": out.dataset.count(Label::Negative),
            }),
        )?;
        Ok(out.dataset)
    })?;

    s.stage("cross_validate", |s| {
        let report = cross_validate(
            &balanced,
            cfg.cv_folds,
            &cfg.svm,
            ctx.seed.wrapping_add(1),
        )?;
        let mut folds = Vec::new();
        for (i, f) in report.folds.iter().enumerate() {
            if let Some(roc) = &f.roc {
                let mut buf = Vec::new();
                write_roc_csv(&mut buf, roc)?;
                s.emit(&ctx.out, &format!("roc_fold{}.csv", i + 1), &buf)?;
            }
            folds.push(json!({
                "fold": i + 1,
                "test_size": f.test_size,
                "accuracy": f.accuracy,
                "auc": f.roc.as_ref().map(|r| r.auc),
                "converged": f.converged,
            }));
        }
        s.headline(
            "cross_validation",
            json!({"k": report.k, "mean_accuracy": report.mean_accuracy, "folds": folds}),
        )
    })?;

    let doc = s.stage("train", |s| {
        let model = train_svm(&balanced, &cfg.svm)?;
        if let Some(w) = model.warning() {
            s.warn(w);
        }
        let calibration = fit_calibration(&model, &balanced)?;
        let doc = ModelDocument::new(
            &model,
            calibration,
            normalized.indicators.clone(),
            normalized.extremes.clone(),
        );
        s.emit(&ctx.out, "model.json", crate::json::to_string(&doc)?.as_bytes())?;
        s.headline(
            "model",
            json!({
                "w": model.w,
                "b": model.b,
                "support_vectors": model.support_indices.len(),
                "iterations": model.iterations,
                "kkt_residual": model.kkt_residual,
                "converged": model.converged,
                "calibration": calibration,
            }),
        )?;
        Ok(doc)
    })?;

    let betas = s.stage("elasticity", |s| {
        fit_elasticities(cfg, &raw, &panel, s)
    })?;

    s.stage("sweep", |s| {
        let baseline = panel
            .values
            .last()
            .cloned()
            .context("panel has no rows")?;
        let scorer = SvmScenario {
            model: &doc,
            baseline,
            betas,
        };
        let g = cfg.elasticity.grid;
        let curve = sweep(&scorer, &lambda_grid(g.start, g.stop, g.step))?;
        for w in first_per_indicator(&curve.warnings) {
            s.warn(w);
        }
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &curve)?;
        s.emit(&ctx.out, "curve.csv", &buf)?;
        if cfg.svg {
            let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.lambda, p.probability)).collect();
            let svg = svg::line_chart("Underwriting probability vs weather growth", &pts, Some(0.5));
            s.emit(&ctx.out, "curve.svg", svg.as_bytes())?;
        }
        s.headline("lambda_star", curve.lambda_star)?;
        s.headline("probability_at_grid_start", curve.points[0].probability)
    })?;
    Ok(())
}

fn fit_elasticities(
    cfg: &InsureConfig,
    raw: &IndicatorPanel,
    panel: &IndicatorPanel,
    s: &mut RunSummary,
) -> anyhow::Result<Vec<f64>> {
    let e = &cfg.elasticity;
    let weather = raw.select(&e.weather_columns)?;
    let names: Vec<String> = panel.indicators.iter().map(|i| i.name.clone()).collect();
    let responding = e.responding.clone().unwrap_or_else(|| names.clone());
    let mut betas = vec![0.0; names.len()];
    let mut fits = Vec::new();
    for target in &responding {
        let j = panel
            .column_index(target)
            .with_context(|| format!("responding column `{target}` is not a feature"))?;
        let y = panel.column(j);
        let collapsed = fit_cdc_collapsed(&y, &weather.values, e.offset)
            .with_context(|| format!("collapsed fit for `{target}`"))?;
        let multivariate = if e.multivariate {
            Some(
                fit_cdc(&y, &weather.values, &e.weather_columns, e.offset)
                    .with_context(|| format!("per-category fit for `{target}`"))?,
            )
        } else {
            None
        };
        betas[j] = collapsed.betas[0];
        fits.push((target.as_str(), collapsed, multivariate));
    }
    let entries: Vec<ElasticityEntry> = fits
        .iter()
        .map(|(t, c, m)| ElasticityEntry {
            target: t,
            collapsed: c,
            multivariate: m.as_ref(),
        })
        .collect();
    s.headline("elasticities", &entries)?;
    Ok(betas)
}

/// Sweep warnings repeat at every grid point past the first; keep the
/// first occurrence per kind and indicator.
fn first_per_indicator(warnings: &[Warning]) -> Vec<Warning> {
    let mut seen = BTreeSet::new();
    warnings
        .iter()
        .filter(|w| {
            let key = match w {
                Warning::NegativePrediction { indicator, .. } => ("negative", indicator.clone()),
                Warning::OutOfRange { indicator, .. } => ("range", indicator.clone()),
                other => ("other", other.to_string()),
            };
            seen.insert(key)
        })
        .cloned()
        .collect()
}
