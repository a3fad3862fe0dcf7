//! Real-estate development pipeline: normalize city indicators, amplify
//! population, split the cities into two clusters and call the cluster with
//! the better benchmark score the build side.

use std::fs;

use anyhow::{ensure, Context as _};
use climarisk_core::clustering::{
    kmeans, label_clusters, reweight_population, write_assignments_csv, write_centroids_csv,
};
use climarisk_core::dataset::{indicator_deviation, normalize, write_deviation_csv, write_normalized_csv};
use climarisk_core::{IndicatorPanel, KMeansParams, Label, ModelDocument};
use serde_json::json;

use crate::config::{Benchmark, DevelopConfig, ReweightStage};
use crate::report::{RunError, RunSummary};
use crate::{load_panel_file, Context};

pub const STAGES: &[&str] = &[
    "load",
    "normalize",
    "benchmark",
    "cluster",
    "label",
    "deviation",
];

fn scale_column(panel: &IndicatorPanel, name: &str, factor: f64) -> anyhow::Result<IndicatorPanel> {
    let j = panel
        .column_index(name)
        .with_context(|| format!("no population column `{name}`"))?;
    let mut out = panel.clone();
    for row in &mut out.values {
        row[j] *= factor;
    }
    Ok(out)
}

pub(crate) fn run(cfg: &DevelopConfig, ctx: &Context, s: &mut RunSummary) -> Result<(), RunError> {
    let raw = s.stage("load", |_| {
        load_panel_file(&ctx.resolve(&cfg.panel), &cfg.directions)
    })?;

    let normalized = s.stage("normalize", |s| {
        let names: Vec<String> = match &cfg.features {
            Some(f) => f.clone(),
            None => raw
                .indicators
                .iter()
                .map(|i| i.name.clone())
                .filter(|n| !matches!(&cfg.benchmark, Benchmark::Column(c) if c == n))
                .collect(),
        };
        let panel = raw.select(&names)?;
        ensure!(
            panel.column_index(&cfg.population_column).is_some(),
            "no population column `{}` among the clustering features",
            cfg.population_column
        );
        let normalized = match cfg.reweight {
            ReweightStage::AfterNormalization => {
                reweight_population(&normalize(&panel), &cfg.population_column, cfg.k_percent)?
            }
            ReweightStage::BeforeNormalization => normalize(&scale_column(
                &panel,
                &cfg.population_column,
                1.0 + cfg.k_percent / 100.0,
            )?),
        };
        for w in &normalized.warnings {
            s.warn(w.clone());
        }
        let mut buf = Vec::new();
        write_normalized_csv(&mut buf, &normalized)?;
        s.emit(&ctx.out, "normalized.csv", &buf)?;
        Ok(normalized)
    })?;

    let benchmark = s.stage("benchmark", |_| match &cfg.benchmark {
        Benchmark::Column(c) => Ok(raw.column_by_name(c)?),
        Benchmark::Model(path) => {
            let path = ctx.resolve(path);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("cannot read model `{}`", path.display()))?;
            let doc = ModelDocument::from_json(&text)?;
            let names: Vec<String> = doc.features.iter().map(|f| f.name.clone()).collect();
            let cols = raw
                .select(&names)
                .context("model features must be city panel columns")?;
            cols.values
                .iter()
                .map(|r| Ok(doc.probability_raw(r)?))
                .collect::<anyhow::Result<Vec<f64>>>()
        }
    })?;

    let clustering = s.stage("cluster", |s| {
        let params = KMeansParams {
            k: 2,
            seed: ctx.seed,
            tol: cfg.kmeans.tol,
            max_iter: cfg.kmeans.max_iter,
            restarts: cfg.kmeans.restarts,
        };
        let c = kmeans(&normalized.values, &params)?;
        let mut buf = Vec::new();
        write_centroids_csv(&mut buf, &names_of(&normalized.indicators), &c)?;
        s.emit(&ctx.out, "centroids.csv", &buf)?;
        s.headline(
            "clustering",
            json!({"inertia": c.inertia, "iterations": c.iterations, "centroids": c.centroids}),
        )?;
        Ok(c)
    })?;

    s.stage("label", |s| {
        let labels = label_clusters(&clustering, &benchmark)?;
        if let Some(w) = labels.warning.clone() {
            s.warn(w);
        }
        let mut buf = Vec::new();
        write_assignments_csv(&mut buf, &normalized.row_ids, &clustering, &labels.labels)?;
        s.emit(&ctx.out, "assignments.csv", &buf)?;
        let cities: Vec<_> = normalized
            .row_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let build = labels.labels[i] == Label::Positive;
                json!({
                    "id": id,
                    "cluster": clustering.assignment[i],
                    "benchmark": benchmark[i],
                    "decision": if build { "build" } else { "no_build" },
                })
            })
            .collect();
        s.headline("positive_cluster", labels.positive_cluster)?;
        s.headline("cluster_means", &labels.cluster_means)?;
        s.headline("cities", cities)
    })?;

    s.stage("deviation", |s| {
        let table = indicator_deviation(&normalized.to_panel())?;
        let mut buf = Vec::new();
        write_deviation_csv(&mut buf, &table)?;
        s.emit(&ctx.out, "deviation.csv", &buf)?;
        let rows: Vec<_> = table
            .row_ids
            .iter()
            .zip(&table.deviations)
            .map(|(id, d)| json!({"id": id, "deviations": d}))
            .collect();
        s.headline(
            "deviation",
            json!({
                "indicators": names_of(&table.indicators),
                "means": table.means,
                "rows": rows,
            }),
        )
    })?;
    Ok(())
}

fn names_of(indicators: &[climarisk_core::Indicator]) -> Vec<String> {
    indicators.iter().map(|i| i.name.clone()).collect()
}
