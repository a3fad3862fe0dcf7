//! K-means (Lloyd) with seeded k-means++ restarts, population
//! amplification and benchmark-driven cluster labeling.

use std::cmp::Ordering;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::NormalizedPanel;
use crate::fmt::f64_17;
use crate::sampling::Label;
use crate::warning::Warning;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    EmptyInput,
    #[error("K={k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("K must be at least 1")]
    ZeroK,
    #[error("points have inconsistent dimension or non-finite values")]
    InvalidPoints,
    #[error("panel has no population column `{0}`")]
    NoPopulationColumn(String),
    #[error("amplification must exceed -100%, got {0}%")]
    InvalidPercent(f64),
    #[error("cluster labeling needs K = 2, got {0}")]
    KNotTwo(usize),
    #[error("expected {expected} benchmark scores, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansParams {
    #[serde(default = "KMeansParams::default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "KMeansParams::default_tol")]
    pub tol: f64,
    #[serde(default = "KMeansParams::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "KMeansParams::default_restarts")]
    pub restarts: usize,
}

impl KMeansParams {
    fn default_k() -> usize {
        2
    }
    fn default_tol() -> f64 {
        1e-12
    }
    fn default_max_iter() -> usize {
        300
    }
    fn default_restarts() -> usize {
        10
    }
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 2,
            seed: 0,
            tol: Self::default_tol(),
            max_iter: Self::default_max_iter(),
            restarts: Self::default_restarts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index of each input point, in input order.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Nearest centroid, ties to the lower index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, sq_dist(x, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn with probability proportional to squared distance, judged by the
/// resulting potential.
fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = points.len() - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if w > 0.0 && target < w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                while d2[chosen] == 0.0 {
                    chosen -= 1;
                }
                chosen
            } else {
                rng.random_range(0..points.len())
            };
            let next: Vec<f64> = points
                .iter()
                .zip(&d2)
                .map(|(p, &d)| d.min(sq_dist(p, &points[pick])))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(b, _, _)| potential < *b) {
                best = Some((potential, pick, next));
            }
        }
        let (_, pick, next) = best.expect("at least one trial");
        d2 = next;
        centroids.push(points[pick].clone());
    }
    centroids
}

struct Run {
    centroids: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    inertia: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points.iter().map(|p| nearest(p, centroids)).unzip()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, params: &KMeansParams) -> Run {
    let k = centroids.len();
    let d = points[0].len();
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let (assignment, dists) = assign(points, &centroids);
        let inertia: f64 = dists.iter().sum();
        if let Some(&prev) = history.last() {
            debug_assert!(
                inertia <= prev + 1e-12 * prev.max(1.0),
                "inertia increased: {prev} -> {inertia}"
            );
        }
        history.push(inertia);
        if iterations >= params.max_iter {
            return Run {
                centroids,
                assignment,
                inertia,
                iterations,
                history,
            };
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &n)| s.into_iter().map(|v| v / n.max(1) as f64).collect())
            .collect();
        // Re-seed emptied clusters at the points farthest from their centroid.
        let mut used = vec![false; points.len()];
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .filter(|&i| !used[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                used[far] = true;
                next[c] = points[far].clone();
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= params.tol {
            let (assignment, dists) = assign(points, &centroids);
            let inertia: f64 = dists.iter().sum();
            history.push(inertia);
            return Run {
                centroids,
                assignment,
                inertia,
                iterations,
                history,
            };
        }
    }
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n.max(1) as f64).collect())
        .collect();
    (centroids, counts)
}

/// Single-point transfers that lower the inertia (Hartigan's rule): moving
/// `x` from cluster `a` to `b` changes the inertia by
/// `n_b/(n_b+1) |x-c_b|^2 - n_a/(n_a-1) |x-c_a|^2`.
///
/// A partition stable under these moves is also a Lloyd fixed point, but
/// many Lloyd fixed points are not stable, so this escapes poor optima.
fn hartigan(points: &[Vec<f64>], run: &mut Run, params: &KMeansParams) {
    let k = run.centroids.len();
    if k < 2 {
        return;
    }
    for _ in 0..params.max_iter {
        let (mut centroids, mut counts) = means(points, &run.assignment, k);
        let mut moved = false;
        for (i, x) in points.iter().enumerate() {
            let a = run.assignment[i];
            let na = counts[a];
            if na < 2 {
                continue;
            }
            let cost_out = na as f64 / (na - 1) as f64 * sq_dist(x, &centroids[a]);
            let mut best: Option<(usize, f64)> = None;
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b];
                let cost_in = nb as f64 / (nb + 1) as f64 * sq_dist(x, &centroids[b]);
                let gain = cost_out - cost_in;
                if gain > 1e-12 * run.inertia.max(1e-300) && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((b, gain));
                }
            }
            if let Some((b, _)) = best {
                let nb = counts[b];
                for (c, v) in centroids[a].iter_mut().zip(x) {
                    *c = (*c * na as f64 - v) / (na - 1) as f64;
                }
                for (c, v) in centroids[b].iter_mut().zip(x) {
                    *c = (*c * nb as f64 + v) / (nb + 1) as f64;
                }
                counts[a] -= 1;
                counts[b] += 1;
                run.assignment[i] = b;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        // Settle the transferred partition with Lloyd steps from exact means.
        let (fresh, _) = means(points, &run.assignment, k);
        let settled = lloyd(points, fresh, params);
        debug_assert!(settled.inertia <= run.inertia + 1e-12 * run.inertia.max(1.0));
        run.history.extend(settled.history);
        run.centroids = settled.centroids;
        run.assignment = settled.assignment;
        run.inertia = settled.inertia;
        run.iterations += settled.iterations;
    }
}

/// Best-of-`restarts` clustering. Each restart seeds with greedy k-means++,
/// runs Lloyd to convergence and then applies single-point transfer
/// refinement, so every returned partition is transfer-stable.
///
/// Points are processed in lexicographic order so that permuting the input
/// does not change the partition.
pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<Clustering> {
    let n = points.len();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if params.k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if params.k > n {
        return Err(ClusterError::KTooLarge { k: params.k, n });
    }
    let d = points[0].len();
    if points
        .iter()
        .any(|p| p.len() != d || p.iter().any(|v| !v.is_finite()))
    {
        return Err(ClusterError::InvalidPoints);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]).then(a.cmp(&b)));
    let sorted: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<Run> = None;
    for _ in 0..params.restarts.max(1) {
        let init = plus_plus(&sorted, params.k, &mut rng);
        let mut run = lloyd(&sorted, init, params);
        hartigan(&sorted, &mut run, params);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut assignment = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        assignment[orig] = best.assignment[pos];
    }
    Ok(Clustering {
        k: params.k,
        centroids: best.centroids,
        assignment,
        inertia: best.inertia,
        iterations: best.iterations,
        inertia_history: best.history,
    })
}

/// Multiplies the population column by `1 + k_percent / 100`. Values are not
/// re-clamped into [0, 1].
pub fn reweight_population(
    panel: &NormalizedPanel,
    population: &str,
    k_percent: f64,
) -> Result<NormalizedPanel> {
    if !(k_percent > -100.0) {
        return Err(ClusterError::InvalidPercent(k_percent));
    }
    let j = panel
        .column_index(population)
        .ok_or_else(|| ClusterError::NoPopulationColumn(population.to_string()))?;
    let factor = 1.0 + k_percent / 100.0;
    let mut out = panel.clone();
    for row in &mut out.values {
        row[j] *= factor;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterLabels {
    pub labels: Vec<Label>,
    pub positive_cluster: usize,
    pub cluster_means: Vec<f64>,
    pub warning: Option<Warning>,
}

/// The cluster with the higher mean benchmark score is positive.
pub fn label_clusters(clustering: &Clustering, benchmark: &[f64]) -> Result<ClusterLabels> {
    if clustering.k != 2 {
        return Err(ClusterError::KNotTwo(clustering.k));
    }
    if benchmark.len() != clustering.assignment.len() {
        return Err(ClusterError::DimensionMismatch {
            expected: clustering.assignment.len(),
            found: benchmark.len(),
        });
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (&c, &s) in clustering.assignment.iter().zip(benchmark) {
        sums[c] += s;
        counts[c] += 1;
    }
    let means: Vec<f64> = (0..2)
        .map(|c| {
            if counts[c] == 0 {
                f64::NEG_INFINITY
            } else {
                sums[c] / counts[c] as f64
            }
        })
        .collect();
    let (positive_cluster, warning) = if means[0] == means[1] {
        (0, Some(Warning::ClusterLabelTie { mean: means[0] }))
    } else if means[0] > means[1] {
        (0, None)
    } else {
        (1, None)
    };
    let labels = clustering
        .assignment
        .iter()
        .map(|&c| {
            if c == positive_cluster {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    Ok(ClusterLabels {
        labels,
        positive_cluster,
        cluster_means: means,
        warning,
    })
}

/// `id,cluster,label` rows.
pub fn write_assignments_csv<W: Write>(
    out: W,
    ids: &[String],
    clustering: &Clustering,
    labels: &[Label],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "cluster", "label"])?;
    for ((id, c), l) in ids.iter().zip(&clustering.assignment).zip(labels) {
        w.write_record([id.as_str(), &c.to_string(), if *l == Label::Positive { "+1" } else { "-1" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_centroids_csv<W: Write>(
    out: W,
    names: &[String],
    clustering: &Clustering,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("cluster").chain(names.iter().map(String::as_str)))?;
    for (c, centroid) in clustering.centroids.iter().enumerate() {
        let mut rec = vec![c.to_string()];
        rec.extend(centroid.iter().map(|&v| f64_17(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{normalize, Direction, Indicator, IndicatorPanel};

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn two_obvious_groups() {
        let c = kmeans(&pts(&[0.0, 1.0, 10.0, 11.0]), &KMeansParams::default()).unwrap();
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
        let mut cents: Vec<f64> = c.centroids.iter().map(|v| v[0]).collect();
        cents.sort_by(f64::total_cmp);
        assert_eq!(cents, vec![0.5, 10.5]);
        assert_eq!(c.inertia, 1.0);
    }

    #[test]
    fn k_equals_n_and_k_one() {
        let p = pts(&[3.0, -1.0, 7.5, 2.0]);
        let all = kmeans(
            &p,
            &KMeansParams {
                k: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(all.inertia, 0.0);
        let mut seen = all.assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);

        let one = kmeans(
            &p,
            &KMeansParams {
                k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mean = p.iter().map(|v| v[0]).sum::<f64>() / 4.0;
        let var = p.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((one.centroids[0][0] - mean).abs() < 1e-12);
        assert!((one.inertia - var * 4.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            kmeans(&[], &KMeansParams::default()).unwrap_err(),
            ClusterError::EmptyInput
        );
        assert_eq!(
            kmeans(
                &pts(&[1.0]),
                &KMeansParams {
                    k: 2,
                    ..Default::default()
                }
            )
            .unwrap_err(),
            ClusterError::KTooLarge { k: 2, n: 1 }
        );
    }

    #[test]
    fn duplicate_points_repair_empty_clusters() {
        let p = pts(&[1.0, 1.0, 1.0, 5.0]);
        let c = kmeans(
            &p,
            &KMeansParams {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn permutation_gives_same_partition() {
        let p: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i * 7 % 5) as f64, (i * 3 % 4) as f64 * 0.5])
            .collect();
        let params = KMeansParams {
            k: 3,
            seed: 4,
            ..Default::default()
        };
        let a = kmeans(&p, &params).unwrap();
        let perm: Vec<usize> = (0..12).rev().collect();
        let q: Vec<Vec<f64>> = perm.iter().map(|&i| p[i].clone()).collect();
        let b = kmeans(&q, &params).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let same_a = a.assignment[perm[i]] == a.assignment[perm[j]];
                let same_b = b.assignment[i] == b.assignment[j];
                assert_eq!(same_a, same_b);
            }
        }
    }

    fn city_panel() -> NormalizedPanel {
        normalize(
            &IndicatorPanel::new(
                "city",
                vec!["a".into(), "b".into(), "c".into()],
                vec![
                    Indicator {
                        name: "gdp".into(),
                        direction: Direction::Positive,
                    },
                    Indicator {
                        name: "population".into(),
                        direction: Direction::Positive,
                    },
                ],
                vec![vec![1.0, 100.0], vec![2.0, 50.0], vec![3.0, 0.0]],
            )
            .unwrap(),
        )
    }

    #[test]
    fn population_reweighting() {
        let p = city_panel();
        let r = reweight_population(&p, "population", 15.0).unwrap();
        assert!((r.values[0][1] - 1.15).abs() < 1e-15);
        assert_eq!(r.values[1][1], 0.5 * 1.15);
        for (a, b) in p.values.iter().zip(&r.values) {
            assert_eq!(a[0], b[0]);
        }
        assert_eq!(reweight_population(&p, "population", 0.0).unwrap(), p);
        assert_eq!(
            reweight_population(&p, "people", 15.0).unwrap_err(),
            ClusterError::NoPopulationColumn("people".into())
        );
    }

    fn fixed(assignment: Vec<usize>) -> Clustering {
        Clustering {
            k: 2,
            centroids: vec![vec![0.0], vec![1.0]],
            assignment,
            inertia: 0.0,
            iterations: 0,
            inertia_history: vec![],
        }
    }

    #[test]
    fn labeling() {
        let scores = [0.9, 0.7, 0.2, 0.4];
        let l = label_clusters(&fixed(vec![0, 0, 1, 1]), &scores).unwrap();
        assert_eq!(l.positive_cluster, 0);
        assert_eq!(
            l.labels,
            vec![Label::Positive, Label::Positive, Label::Negative, Label::Negative]
        );
        let swapped = label_clusters(&fixed(vec![1, 1, 0, 0]), &scores).unwrap();
        assert_eq!(swapped.labels, l.labels);

        let tie = label_clusters(&fixed(vec![0, 1, 0, 1]), &[0.2, 0.8, 0.8, 0.2]).unwrap();
        assert_eq!(tie.positive_cluster, 0);
        assert!(matches!(tie.warning, Some(Warning::ClusterLabelTie { .. })));

        let mut three = fixed(vec![0, 1, 2]);
        three.k = 3;
        assert_eq!(
            label_clusters(&three, &[0.0; 3]).unwrap_err(),
            ClusterError::KNotTwo(3)
        );
    }
}
