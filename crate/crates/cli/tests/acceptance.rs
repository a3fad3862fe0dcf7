//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report always reaches stdout.
//! Exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use climarisk_core::classifier::{kkt_violation, roc_curve, train_svm};
use climarisk_core::clustering::kmeans;
use climarisk_core::dataset::normalize;
use climarisk_core::elasticity::{
    fit_cdc, linear_response, predict_scenario, sweep, ElasticityError, ScenarioPoint,
};
use climarisk_core::mcdm::{
    ahp_weights, combine_weights, orm_weights, robustness, score, topsis_orm_weights,
    RobustnessParams,
};
use climarisk_core::sampling::{balance, smote};
use climarisk_core::{
    Direction, Gradient, ImportanceVector, Indicator, IndicatorPanel, KMeansParams, Label,
    LabeledDataset, ScenarioScorer, SmoteConfig, SvmParams, Warning,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const AHP_MATRIX: [[f64; 5]; 5] = [
    [1.0, 3.0, 2.0, 4.0, 1.0],
    [1.0 / 3.0, 1.0, 0.5, 2.0, 1.0 / 3.0],
    [0.5, 2.0, 1.0, 3.0, 0.25],
    [0.25, 0.5, 1.0 / 3.0, 1.0, 0.5],
    [1.0, 3.0, 4.0, 2.0, 1.0],
];

fn matrix() -> Vec<Vec<f64>> {
    AHP_MATRIX.iter().map(|r| r.to_vec()).collect()
}

fn c1_ahp() -> Outcome {
    let m = matrix();
    let r = ahp_weights(&m).map_err(|e| e.to_string())?;
    let mut slowest = Duration::ZERO;
    for _ in 0..20 {
        let t = Instant::now();
        let _ = ahp_weights(&m);
        slowest = slowest.max(t.elapsed());
    }
    let w = &r.weights.weights;
    ensure((0.04..=0.08).contains(&r.cr), || format!("CR {} outside [0.04, 0.08]", r.cr))?;
    let total: f64 = w.iter().sum();
    ensure((total - 1.0).abs() <= 1e-9, || format!("weights sum to {total}"))?;
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
    let mut top = [order[0], order[1]];
    top.sort();
    ensure(top == [0, 4], || format!("two largest weights at {top:?}, want criteria 1 and 5"))?;
    for j in top {
        ensure((0.30..=0.37).contains(&w[j]), || format!("weight {} = {} outside [0.30, 0.37]", j + 1, w[j]))?;
    }
    ensure(slowest < Duration::from_millis(10), || format!("slowest run {slowest:?}"))?;
    Ok(format!(
        "CR={:.4}, a1={:.4}, a5={:.4}, slowest of 20 runs {:?}",
        r.cr, w[0], w[4], slowest
    ))
}

fn c2_orm() -> Outcome {
    let imp = ImportanceVector::new(vec![0.9, 0.6, 0.3]);
    let w = orm_weights(&imp).weights;
    let expected = [0.5, 1.0 / 3.0, 1.0 / 6.0];
    let err = w.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-12, || format!("weights {w:?}, max error {err:e}"))?;
    let sorted: Vec<f64> = imp.order.iter().map(|&j| w[j]).collect();
    for p in 1..sorted.len() {
        let gap = (sorted[p - 1] - imp.ratios[p] * sorted[p]).abs();
        ensure(gap <= 1e-12, || format!("recurrence off by {gap:e} at position {p}"))?;
    }
    Ok(format!("max error {err:.1e}"))
}

type Points = [([f64; 2], f64)];

fn dataset(points: &Points) -> LabeledDataset {
    LabeledDataset::new(
        points.iter().map(|(x, _)| x.to_vec()).collect(),
        points.iter().map(|&(_, y)| Label::from_sign(y)).collect(),
    )
    .unwrap()
}

fn primal(points: &Points, c: f64, w: [f64; 2], b: f64) -> f64 {
    let hinge: f64 = points
        .iter()
        .map(|(x, y)| (1.0 - y * (w[0] * x[0] + w[1] * x[1] + b)).max(0.0))
        .sum();
    0.5 * (w[0] * w[0] + w[1] * w[1]) + c * hinge
}

/// Convex primal minimized by a zooming 25^3 grid over (w1, w2, b).
fn grid_qp(points: &Points, c: f64) -> f64 {
    let steps = 24;
    let (mut center, mut half, mut best) = ([0.0f64; 3], 8.0, f64::INFINITY);
    for _ in 0..40 {
        let mut arg = center;
        for i in 0..=steps {
            for j in 0..=steps {
                for k in 0..=steps {
                    let at = |t: usize, c0: f64| c0 - half + 2.0 * half * t as f64 / steps as f64;
                    let p = [at(i, center[0]), at(j, center[1]), at(k, center[2])];
                    let v = primal(points, c, [p[0], p[1]], p[2]);
                    if v < best {
                        best = v;
                        arg = p;
                    }
                }
            }
        }
        center = arg;
        half *= 0.5;
    }
    best
}

fn c3_svm() -> Outcome {
    let two = [([-1.0, 0.0], -1.0), ([1.0, 0.0], 1.0)];
    let data = dataset(&two);
    let model = train_svm(&data, &SvmParams { c: 100.0, ..SvmParams::default() }).map_err(|e| e.to_string())?;
    let werr = (model.w[0] - 1.0).abs().max(model.w[1].abs());
    ensure(werr <= 1e-3, || format!("w = {:?}", model.w))?;
    ensure(model.b.abs() <= 1e-3, || format!("b = {}", model.b))?;
    let mut kkt: f64 = 0.0;
    for (i, (x, y)) in two.iter().enumerate() {
        let margin = y * model.decision_value(x).unwrap();
        kkt = kkt.max(kkt_violation(model.alphas[i], margin, 100.0));
    }
    ensure(kkt <= 1e-6, || format!("KKT residual {kkt:e}"))?;

    let instances: [(&Points, f64); 3] = [
        (&[([0.0, 0.0], -1.0), ([1.0, 1.0], -1.0), ([1.0, 0.0], 1.0), ([0.0, 1.0], 1.0)], 0.5),
        (&[([0.0, 0.0], -1.0), ([2.0, 0.5], 1.0), ([0.5, 1.5], 1.0), ([1.2, 0.3], -1.0)], 2.0),
        (&[([-1.0, 0.2], -1.0), ([-0.5, -1.0], -1.0), ([1.0, 0.4], 1.0), ([0.8, -0.6], 1.0)], 10.0),
    ];
    let mut worst: f64 = 0.0;
    for (points, c) in instances {
        let m = train_svm(&dataset(points), &SvmParams { c, ..SvmParams::default() }).map_err(|e| e.to_string())?;
        let mut quad = 0.0;
        for (i, (xi, yi)) in points.iter().enumerate() {
            for (j, (xj, yj)) in points.iter().enumerate() {
                quad += m.alphas[i] * m.alphas[j] * yi * yj * (xi[0] * xj[0] + xi[1] * xj[1]);
            }
        }
        let dual = m.alphas.iter().sum::<f64>() - 0.5 * quad;
        let gap = (dual - grid_qp(points, c)).abs();
        ensure(gap <= 1e-3, || format!("dual/grid gap {gap:e} at C={c}"))?;
        worst = worst.max(gap);
    }
    Ok(format!(
        "w=({:.6}, {:.6}), b={:.1e}, KKT {kkt:.1e}, worst dual/grid gap {worst:.1e}",
        model.w[0], model.w[1], model.b
    ))
}

fn mann_whitney(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, li) in labels.iter().enumerate() {
        if *li == Label::Negative {
            n += 1;
            continue;
        }
        p += 1;
        for (j, lj) in labels.iter().enumerate() {
            if *lj == Label::Negative {
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * p * n) as f64
}

fn c4_auc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..50 {
        let n = rng.random_range(2..=12);
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random::<bool>() { Label::Positive } else { Label::Negative })
            .collect();
        labels[0] = Label::Positive;
        labels[1] = Label::Negative;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.25).collect();
        let auc = roc_curve(&scores, &labels).map_err(|e| e.to_string())?.auc;
        let oracle = mann_whitney(&scores, &labels);
        ensure(auc == oracle, || format!("instance {t}: {auc} vs {oracle}"))?;
    }
    Ok("50/50 exact matches".into())
}

fn c5_cdc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let planted = |rng: &mut ChaCha8Rng, n: usize, p: usize, sigma: f64| {
        let a: f64 = rng.random_range(-2.0..2.0);
        let betas: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(0.5..50.0)).collect())
            .collect();
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let y: Vec<f64> = k
            .iter()
            .map(|row| {
                let e = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                (a + row.iter().zip(&betas).map(|(x, b)| b * x.ln()).sum::<f64>() + e).exp()
            })
            .collect();
        (y, k, betas)
    };
    let names = |p: usize| (0..p).map(|j| format!("k{j}")).collect::<Vec<_>>();
    let mut clean: f64 = 0.0;
    for p in 1..=5 {
        for n in [8, 12, 16, 24, 32] {
            let (y, k, b) = planted(&mut rng, n, p, 0.0);
            let m = fit_cdc(&y, &k, &names(p), 0.0).map_err(|e| e.to_string())?;
            let err = m.betas.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            clean = clean.max(err);
        }
    }
    ensure(clean <= 1e-8, || format!("noiseless error {clean:e}"))?;
    let mut noisy: f64 = 0.0;
    for seed in 0..20 {
        let mut r = ChaCha8Rng::seed_from_u64(500 + seed);
        let (y, k, b) = planted(&mut r, 200, 3, 0.01);
        let m = fit_cdc(&y, &k, &names(3), 0.0).map_err(|e| e.to_string())?;
        let err = m.betas.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        noisy = noisy.max(err);
    }
    ensure(noisy <= 0.02, || format!("noisy error {noisy}"))?;
    Ok(format!("noiseless max error {clean:.1e}, noisy max error {noisy:.4}"))
}

struct Analytic;

impl ScenarioScorer for Analytic {
    fn evaluate(&self, lambda: f64) -> Result<ScenarioPoint, ElasticityError> {
        Ok(ScenarioPoint {
            probability: 0.9 - lambda,
            warnings: Vec::new(),
        })
    }
}

fn c6_scenario() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.random_range(1..8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e4)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = predict_scenario(&x, &b, 0.0).map_err(|e| e.to_string())?;
        let same = s.predicted.iter().zip(&x).all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || format!("lambda=0 changed {x:?}"))?;
    }
    // Dyadic inputs keep every intermediate exact, so equality is bitwise.
    for _ in 0..500 {
        let n = rng.random_range(1..8);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..1000) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-64..64) as f64 / 64.0).collect();
        let l1 = rng.random_range(-32..64) as f64 / 64.0;
        let l2 = rng.random_range(-32..64) as f64 / 64.0;
        let (p1, p2, p12) = (
            linear_response(&x, &b, l1),
            linear_response(&x, &b, l2),
            linear_response(&x, &b, l1 + l2),
        );
        for j in 0..n {
            ensure(p1[j] + p2[j] - x[j] == p12[j], || format!("linearity broke at {l1}, {l2}"))?;
        }
    }
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
    let star = sweep(&Analytic, &grid).map_err(|e| e.to_string())?.lambda_star;
    let star = star.ok_or("no crossing found")?;
    ensure((star - 0.4).abs() <= 1e-6, || format!("lambda* = {star}"))?;
    Ok(format!("lambda* = {star:.9}"))
}

fn brute_force_two(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let sse = |idx: &[usize]| {
        if idx.is_empty() {
            return 0.0;
        }
        let d = points[0].len();
        let mean: Vec<f64> = (0..d)
            .map(|k| idx.iter().map(|&i| points[i][k]).sum::<f64>() / idx.len() as f64)
            .collect();
        idx.iter()
            .map(|&i| points[i].iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
    };
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << (n - 1)) {
        let (a, b): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| i == 0 || (mask >> (i - 1)) & 1 == 0);
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

fn c7_kmeans() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud = |rng: &mut ChaCha8Rng, n: usize, d: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect()
    };
    let mut steps = 0;
    for t in 0..100 {
        let n = rng.random_range(3..80);
        let d = rng.random_range(1..5);
        let k = rng.random_range(1..=n.min(6));
        let pts = cloud(&mut rng, n, d);
        let c = kmeans(&pts, &KMeansParams { k, seed: t, ..KMeansParams::default() }).map_err(|e| e.to_string())?;
        for w in c.inertia_history.windows(2) {
            ensure(w[1] <= w[0] * (1.0 + 1e-12), || format!("instance {t}: inertia rose {} -> {}", w[0], w[1]))?;
        }
        steps += c.inertia_history.len();
    }
    let mut matched = 0;
    for t in 0..100 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..4);
        let pts = cloud(&mut rng, n, d);
        let params = KMeansParams { k: 2, seed: t, restarts: 10, ..KMeansParams::default() };
        let c = kmeans(&pts, &params).map_err(|e| e.to_string())?;
        let opt = brute_force_two(&pts);
        ensure((c.inertia - opt).abs() <= 1e-9 * opt.max(1.0), || {
            format!("instance {t} (N={n}): inertia {} vs optimum {opt}", c.inertia)
        })?;
        matched += 1;
    }
    Ok(format!("{steps} monotone steps; {matched}/100 small instances at the optimum"))
}

fn c8_smote() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cloud = |rng: &mut ChaCha8Rng, n: usize, shift: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0) + shift).collect())
            .collect()
    };
    let minority = cloud(&mut rng, 40, 0.0);
    let config = SmoteConfig { n_synthetic: Some(1000), seed: 8, ..SmoteConfig::default() };
    let out = smote(&minority, &[], &config).map_err(|e| e.to_string())?;
    let mut residual: f64 = 0.0;
    for (s, step) in out.samples.iter().zip(&out.trace) {
        let (x, nb) = (&minority[step.base], &minority[step.neighbor]);
        let dir: Vec<f64> = nb.iter().zip(x).map(|(a, b)| a - b).collect();
        let rel: Vec<f64> = s.iter().zip(x).map(|(a, b)| a - b).collect();
        let len2: f64 = dir.iter().map(|v| v * v).sum();
        let t = rel.iter().zip(&dir).map(|(r, d)| r * d).sum::<f64>() / len2;
        let r = rel.iter().zip(&dir).map(|(r, d)| (r - t * d).powi(2)).sum::<f64>().sqrt();
        residual = residual.max(r);
        for j in 0..s.len() {
            let inside = s[j] >= x[j].min(nb[j]) && s[j] <= x[j].max(nb[j]);
            ensure(inside, || format!("sample outside box on axis {j}"))?;
        }
    }
    ensure(residual < 1e-9, || format!("colinearity residual {residual:e}"))?;

    for (pos, neg) in [(30, 4), (4, 30), (12, 11)] {
        let mut features = cloud(&mut rng, pos, 0.5);
        features.extend(cloud(&mut rng, neg, -0.5));
        let labels = (0..pos + neg)
            .map(|i| if i < pos { Label::Positive } else { Label::Negative })
            .collect();
        let data = LabeledDataset::new(features, labels).unwrap();
        let b = balance(&data, &SmoteConfig::default()).map_err(|e| e.to_string())?.dataset;
        ensure(b.count(Label::Positive) == b.count(Label::Negative), || {
            format!("{pos}/{neg} balanced to {}/{}", b.count(Label::Positive), b.count(Label::Negative))
        })?;
    }

    let ws = tempfile::tempdir().map_err(|e| e.to_string())?;
    copy_samples(ws.path())?;
    let config = ws.path().join("insure.json");
    let mut traces = Vec::new();
    for threads in ["1", "8"] {
        let out = ws.path().join(format!("t{threads}"));
        cli(&["insure", "run", "--config", path(&config), "--out", path(&out), "--threads", threads])?;
        traces.push(read_all(&out)?);
    }
    ensure(traces[0] == traces[1], || "insure outputs differ between --threads 1 and 8".into())?;
    let rows = String::from_utf8_lossy(&traces[0]["smote_trace.csv"]).lines().count() - 1;
    Ok(format!(
        "residual {residual:.1e} over 1000 samples; balance equalized; {rows}-step trace identical at 1 and 8 threads"
    ))
}

fn panel(columns: &[Vec<f64>], direction: Direction) -> IndicatorPanel {
    let n = columns[0].len();
    IndicatorPanel::new(
        "id",
        (0..n).map(|i| i.to_string()).collect(),
        (0..columns.len())
            .map(|j| Indicator { name: format!("c{j}"), direction })
            .collect(),
        (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect(),
    )
    .unwrap()
}

fn c9_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut dual, mut affine): (f64, f64) = (0.0, 0.0);
    for _ in 0..200 {
        let n = rng.random_range(2..15);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
                c[0] = 0.0;
                c[1] = 100.0;
                c
            })
            .collect();
        let pos = normalize(&panel(&cols, Direction::Positive));
        let neg = normalize(&panel(&cols, Direction::Negative));
        for (a, b) in pos.values.iter().flatten().zip(neg.values.iter().flatten()) {
            dual = dual.max((a + b - 1.0).abs());
        }
        let (s, t) = (rng.random_range(0.5..4.0), rng.random_range(-100.0..100.0));
        let moved: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|x| s * x + t).collect()).collect();
        let again = normalize(&panel(&moved, Direction::Positive));
        for (a, b) in pos.values.iter().flatten().zip(again.values.iter().flatten()) {
            affine = affine.max((a - b).abs());
        }
    }
    ensure(dual <= 1e-12, || format!("dual sum off by {dual:e}"))?;
    ensure(affine <= 1e-12, || format!("affine change {affine:e}"))?;
    let flat = normalize(&panel(&[vec![2.0; 4], vec![1.0, 2.0, 3.0, 4.0]], Direction::Positive));
    ensure(flat.values.iter().all(|r| r[0] == 0.5), || "constant column not 0.5".into())?;
    let warned = flat.warnings == vec![Warning::DegenerateColumn { column: "c0".into() }];
    ensure(warned, || format!("warnings {:?}", flat.warnings))?;
    Ok(format!("dual error {dual:.1e}, affine error {affine:.1e}, constant column warned"))
}

const LANDMARKS: [[f64; 5]; 16] = [
    [1.000, 1.000, 0.970, 0.985, 0.955],
    [0.940, 0.910, 1.000, 1.000, 1.000],
    [0.865, 0.880, 0.880, 0.895, 0.880],
    [0.850, 0.820, 0.850, 0.820, 0.835],
    [0.790, 0.805, 0.775, 0.775, 0.805],
    [0.635, 0.665, 0.650, 0.650, 0.650],
    [0.645, 0.630, 0.615, 0.630, 0.630],
    [0.610, 0.610, 0.625, 0.595, 0.610],
    [0.605, 0.605, 0.575, 0.590, 0.575],
    [0.570, 0.555, 0.585, 0.585, 0.555],
    [0.535, 0.550, 0.550, 0.565, 0.550],
    [0.545, 0.515, 0.545, 0.515, 0.530],
    [0.400, 0.415, 0.385, 0.385, 0.415],
    [0.265, 0.295, 0.280, 0.280, 0.280],
    [0.165, 0.135, 0.000, 0.000, 0.150],
    [0.000, 0.030, 0.045, 0.060, 0.000],
];

/// Hand computation of the blended scores: min-max, interactions, TOPSIS
/// closeness, weights proportional to closeness, blend, weighted sum.
fn toa_by_hand(ahp: &[f64]) -> Vec<f64> {
    let m = 5;
    let lo: Vec<f64> = (0..m).map(|j| LANDMARKS.iter().map(|r| r[j]).fold(f64::MAX, f64::min)).collect();
    let hi: Vec<f64> = (0..m).map(|j| LANDMARKS.iter().map(|r| r[j]).fold(f64::MIN, f64::max)).collect();
    let x: Vec<Vec<f64>> = LANDMARKS
        .iter()
        .map(|r| (0..m).map(|j| (r[j] - lo[j]) / (hi[j] - lo[j])).collect())
        .collect();
    let d: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            (0..m)
                .map(|j| m as f64 / ((0..m).map(|k| (r[k] - r[j]).abs()).sum::<f64>() + 1e-9))
                .collect()
        })
        .collect();
    let s: Vec<f64> = (0..m)
        .map(|j| {
            let col: Vec<f64> = d.iter().map(|r| r[j]).collect();
            let best = col.iter().copied().fold(f64::MIN, f64::max);
            let worst = col.iter().copied().fold(f64::MAX, f64::min);
            let ideal = col.iter().map(|v| (v - best).powi(2)).sum::<f64>().sqrt();
            let poor = col.iter().map(|v| (v - worst).powi(2)).sum::<f64>().sqrt();
            poor / (ideal + poor)
        })
        .collect();
    let total: f64 = s.iter().sum();
    x.iter()
        .map(|r| (0..m).map(|j| r[j] * (0.5 * s[j] / total + 0.5 * ahp[j])).sum())
        .collect()
}

fn c10_toa() -> Outcome {
    let ahp = ahp_weights(&matrix()).map_err(|e| e.to_string())?.weights;
    let raw: Vec<Vec<f64>> = LANDMARKS.iter().map(|r| r.to_vec()).collect();
    let cols: Vec<Vec<f64>> = (0..5).map(|j| raw.iter().map(|r| r[j]).collect()).collect();
    let norm = normalize(&panel(&cols, Direction::Positive));
    let (_, orm) = topsis_orm_weights(&norm.values).map_err(|e| e.to_string())?;
    let z = combine_weights(&orm, &ahp, 0.5).map_err(|e| e.to_string())?;
    let report = score(&norm, &z).map_err(|e| e.to_string())?;

    let hand = toa_by_hand(&ahp.weights);
    let planted: Vec<Gradient> = [(Gradient::First, 5), (Gradient::Second, 7), (Gradient::Third, 4)]
        .iter()
        .flat_map(|&(g, n)| std::iter::repeat_n(g, n))
        .collect();
    let mut max_err: f64 = 0.0;
    for (i, e) in report.entries.iter().enumerate() {
        max_err = max_err.max((e.score - hand[i]).abs());
        ensure(Gradient::of(hand[i]) == planted[i], || format!("hand score {} of row {i} off its band", hand[i]))?;
        ensure(e.gradient == planted[i], || format!("row {i} classified {:?}", e.gradient))?;
    }
    ensure(max_err <= 1e-12, || format!("scores differ from hand computation by {max_err:e}"))?;
    let band = |g: Gradient| -> Vec<f64> {
        hand.iter().zip(&planted).filter(|(_, p)| **p == g).map(|(s, _)| *s).collect()
    };
    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let gap1 = min(band(Gradient::First)) - max(band(Gradient::Second));
    let gap2 = min(band(Gradient::Second)) - max(band(Gradient::Third));
    ensure(gap1 >= 0.1 && gap2 >= 0.1, || format!("band gaps {gap1}, {gap2}"))?;

    let params = |sigma| RobustnessParams { sigma, trials: 100, seed: 10, recompute_weights: true, clamp: false };
    let still = robustness(&norm, &z, &ahp, 0.5, &params(0.0)).map_err(|e| e.to_string())?;
    ensure(still.spearman_min == 1.0 && still.spearman_mean == 1.0, || {
        format!("sigma=0 Spearman {}", still.spearman_min)
    })?;
    let noisy = robustness(&norm, &z, &ahp, 0.5, &params(0.05)).map_err(|e| e.to_string())?;
    ensure(noisy.spearman_mean >= 0.9, || format!("sigma=0.05 mean Spearman {}", noisy.spearman_mean))?;
    Ok(format!(
        "band gaps {gap1:.3}/{gap2:.3}, score error {max_err:.1e}, Spearman {:.4} at sigma=0.05, 1 at sigma=0",
        noisy.spearman_mean
    ))
}

fn copy_samples(to: &Path) -> Result<(), String> {
    let from = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples");
    for entry in fs::read_dir(from).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        if p.is_file() {
            fs::copy(&p, to.join(p.file_name().unwrap())).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_climarisk"))
        .args(args)
        .env("CLIMARISK_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr).trim())
    })
}

fn read_all(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, fs::read(&p).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn c11_determinism(started: Instant) -> Outcome {
    let ws = tempfile::tempdir().map_err(|e| e.to_string())?;
    copy_samples(ws.path())?;
    let mut files = 0;
    for pipeline in ["insure", "develop", "preserve"] {
        let config = ws.path().join(format!("{pipeline}.json"));
        let mut runs = Vec::new();
        for round in 0..2 {
            let out = ws.path().join(format!("{pipeline}{round}"));
            cli(&[pipeline, "run", "--config", path(&config), "--out", path(&out)])?;
            runs.push(read_all(&out)?);
        }
        ensure(runs[0] == runs[1], || format!("{pipeline} outputs differ between runs"))?;
        files += runs[0].len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed <= Duration::from_secs(60), || format!("acceptance took {elapsed:?}"))?;
    Ok(format!("{files} files byte-identical across repeat runs; acceptance ran in {:.2?}", elapsed))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("AHP weights and consistency", Box::new(c1_ahp)),
        ("ORM hand case", Box::new(c2_orm)),
        ("SVM solver", Box::new(c3_svm)),
        ("ROC/AUC", Box::new(c4_auc)),
        ("C-D-C recovery", Box::new(c5_cdc)),
        ("scenario identity", Box::new(c6_scenario)),
        ("k-means", Box::new(c7_kmeans)),
        ("SMOTE", Box::new(c8_smote)),
        ("normalization", Box::new(c9_normalization)),
        ("TOA end to end", Box::new(c10_toa)),
        ("pipeline determinism", Box::new(move || c11_determinism(started))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
