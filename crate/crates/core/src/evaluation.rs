//! Accuracy metrics, the seeded replication harness, and post-hoc community
//! summaries (internal density, pairwise Cohen's κ, row clustering).

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{detect, DetectionReport};
use crate::generator::{build_scenario, derive_seed, ScenarioParams};
use crate::netdata::GraphSequence;
use crate::spectral::SubspaceBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("community {0} has fewer than two members")]
    DegenerateCommunity(usize),
    #[error("labels cover {got} nodes, the graph has {n}")]
    LabelMismatch { got: usize, n: usize },
    #[error("interval [{t0}, {t1}) is not inside layers 1..={t_len}")]
    BadInterval { t0: usize, t1: usize, t_len: usize },
    #[error("invalid cluster count {k} for {n} rows")]
    BadClusterCount { k: usize, n: usize },
    #[error("clustering left a cluster empty after {0} restarts")]
    EmptyCluster(usize),
}

/// Hausdorff distance between two change-point sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hausdorff {
    pub value: f64,
    /// Exactly one set was empty and the conventional penalty was used.
    pub penalized: bool,
}

/// `max(max_a min_b |a−b|, max_b min_a |a−b|)`.
///
/// If both sets are empty the distance is 0; if exactly one is empty the
/// penalty `max(T−1, 1)` is returned and flagged.
pub fn hausdorff(a: &[usize], b: &[usize], t_len: usize) -> Hausdorff {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Hausdorff {
            value: 0.0,
            penalized: false,
        },
        (true, false) | (false, true) => Hausdorff {
            value: t_len.saturating_sub(1).max(1) as f64,
            penalized: true,
        },
        (false, false) => {
            let directed = |xs: &[usize], ys: &[usize]| {
                xs.iter()
                    .map(|&x| ys.iter().map(|&y| x.abs_diff(y)).min().unwrap())
                    .max()
                    .unwrap()
            };
            Hausdorff {
                value: directed(a, b).max(directed(b, a)) as f64,
                penalized: false,
            }
        }
    }
}

/// `|K − K*|`.
pub fn count_error(a: &[usize], truth: &[usize]) -> usize {
    a.len().abs_diff(truth.len())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Coarse,
    Refined,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Coarse => "coarse",
            Method::Refined => "refined",
        }
    }
}

/// Which parameter a scenario sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Sweeps the change location `s`.
    I,
    /// Sweeps the reassignment fraction `q`.
    II,
    /// Sweeps the sparsity `ρ`.
    III,
}

impl ScenarioId {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::I => "I",
            ScenarioId::II => "II",
            ScenarioId::III => "III",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "I" | "1" | "i" => Some(ScenarioId::I),
            "II" | "2" | "ii" => Some(ScenarioId::II),
            "III" | "3" | "iii" => Some(ScenarioId::III),
            _ => None,
        }
    }

    /// The swept values used for the published tables.
    pub fn default_grid(self, n: usize) -> Vec<f64> {
        match self {
            ScenarioId::I => vec![1.0 / 10.0, 1.0 / 15.0, 1.0 / 20.0],
            ScenarioId::II => vec![0.3, 0.2, 0.1],
            ScenarioId::III => [80.0, 50.0, 30.0].iter().map(|c| c / n as f64).collect(),
        }
    }

    /// Full parameters with the swept value set and the others fixed.
    pub fn params(self, n: usize, t_len: usize, value: f64, seed: u64) -> ScenarioParams {
        let (s, q, rho) = match self {
            ScenarioId::I => (value, 0.5, 1.0),
            ScenarioId::II => (0.25, value, 1.0),
            ScenarioId::III => (0.25, 0.5, value),
        };
        ScenarioParams {
            n,
            t_len,
            s,
            q,
            rho,
            seed,
        }
    }
}

/// One cell of a benchmark grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub scenario: ScenarioId,
    pub n: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub param: f64,
}

impl BenchCell {
    pub fn params(&self, seed: u64) -> ScenarioParams {
        self.scenario.params(self.n, self.t_len, self.param, seed)
    }
}

pub fn scenario_grid(scenario: ScenarioId, n: usize, t_len: usize) -> Vec<BenchCell> {
    scenario
        .default_grid(n)
        .into_iter()
        .map(|param| BenchCell {
            scenario,
            n,
            t_len,
            param,
        })
        .collect()
}

/// Metrics of one generate→detect run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub seed: u64,
    pub truth: Vec<usize>,
    pub coarse: Vec<usize>,
    pub refined: Vec<usize>,
    pub coarse_count_error: usize,
    pub refined_count_error: usize,
    pub coarse_hausdorff: f64,
    pub refined_hausdorff: f64,
}

impl ReplicationOutcome {
    pub fn from_report(seed: u64, truth: &[usize], t_len: usize, report: &DetectionReport) -> Self {
        let coarse = report.coarse.points.clone();
        let refined = report.refined.points.clone();
        Self {
            seed,
            truth: truth.to_vec(),
            coarse_count_error: count_error(&coarse, truth),
            refined_count_error: count_error(&refined, truth),
            coarse_hausdorff: hausdorff(&coarse, truth, t_len).value,
            refined_hausdorff: hausdorff(&refined, truth, t_len).value,
            coarse,
            refined,
        }
    }

    pub fn count_error(&self, method: Method) -> usize {
        match method {
            Method::Coarse => self.coarse_count_error,
            Method::Refined => self.refined_count_error,
        }
    }

    pub fn hausdorff(&self, method: Method) -> f64 {
        match method {
            Method::Coarse => self.coarse_hausdorff,
            Method::Refined => self.refined_hausdorff,
        }
    }
}

/// Generates one scenario sequence and runs the auto-tuned detector on it.
pub fn run_replication(params: &ScenarioParams) -> Result<ReplicationOutcome, String> {
    let (truth, graphs) = build_scenario(params).map_err(|e| e.to_string())?;
    let report = detect(&graphs, None).map_err(|e| e.to_string())?;
    Ok(ReplicationOutcome::from_report(
        params.seed,
        truth.change_points(),
        params.t_len,
        &report,
    ))
}

/// Seed of replication `rep` in grid cell `cell`.
pub fn replication_seed(master: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(master, cell as u64), rep as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scenario: ScenarioId,
    pub param: f64,
    pub method: Method,
    pub count_mean: f64,
    pub count_se: f64,
    pub haus_mean: f64,
    pub haus_se: f64,
    /// Successful replications aggregated.
    pub reps: usize,
    pub failures: usize,
}

/// Sample mean and standard error `sd/√R`; the error is 0 for `R = 1`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}

/// Aggregates one cell's outcomes into a row per method.
pub fn aggregate(
    cell: &BenchCell,
    outcomes: &[Result<ReplicationOutcome, String>],
) -> Vec<MetricRow> {
    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures = outcomes.len() - ok.len();
    [Method::Coarse, Method::Refined]
        .into_iter()
        .map(|method| {
            let counts: Vec<f64> = ok.iter().map(|o| o.count_error(method) as f64).collect();
            let haus: Vec<f64> = ok.iter().map(|o| o.hausdorff(method)).collect();
            let (count_mean, count_se) = mean_and_se(&counts);
            let (haus_mean, haus_se) = mean_and_se(&haus);
            MetricRow {
                scenario: cell.scenario,
                param: cell.param,
                method,
                count_mean,
                count_se,
                haus_mean,
                haus_se,
                reps: ok.len(),
                failures,
            }
        })
        .collect()
}

/// Per-cell outcomes of a replication run, in grid and replication order.
pub fn run_outcomes(
    cells: &[BenchCell],
    reps: usize,
    master_seed: u64,
) -> Vec<Vec<Result<ReplicationOutcome, String>>> {
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let run = |&(c, r): &(usize, usize)| {
        let params = cells[c].params(replication_seed(master_seed, c, r));
        run_replication(&params)
    };
    #[cfg(feature = "parallel")]
    let flat: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let flat: Vec<_> = jobs.iter().map(run).collect();

    let mut it = flat.into_iter();
    cells
        .iter()
        .map(|_| it.by_ref().take(reps).collect())
        .collect()
}

/// Runs `reps` seeded replications of every cell and aggregates them.
pub fn run_replications(cells: &[BenchCell], reps: usize, master_seed: u64) -> Vec<MetricRow> {
    assert!(reps >= 1, "at least one replication is required");
    run_outcomes(cells, reps, master_seed)
        .iter()
        .zip(cells)
        .flat_map(|(outcomes, cell)| aggregate(cell, outcomes))
        .collect()
}

pub const METRICS_CSV_HEADER: &str =
    "param,method,count_mean,count_se,haus_mean,haus_se,R,failures";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.param,
            r.method.name(),
            r.count_mean,
            r.count_se,
            r.haus_mean,
            r.haus_se,
            r.reps,
            r.failures
        );
    }
    s
}

/// Community sizes, indexed by label.
fn community_sizes(g: &GraphSequence, labels: &[usize]) -> Result<Vec<usize>, EvalError> {
    if labels.len() != g.n() {
        return Err(EvalError::LabelMismatch {
            got: labels.len(),
            n: g.n(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &c in labels {
        sizes[c] += 1;
    }
    Ok(sizes)
}

fn check_interval(g: &GraphSequence, t0: usize, t1: usize) -> Result<(), EvalError> {
    if t0 == 0 || t0 >= t1 || t1 > g.len() + 1 {
        return Err(EvalError::BadInterval {
            t0,
            t1,
            t_len: g.len(),
        });
    }
    Ok(())
}

/// Average internal density of every community over layers `[t0, t1)`:
/// intra-community edge indicators summed over ordered pairs and layers,
/// divided by the ordered pair count times the interval length.
pub fn internal_density(
    g: &GraphSequence,
    labels: &[usize],
    t0: usize,
    t1: usize,
) -> Result<Vec<f64>, EvalError> {
    let sizes = community_sizes(g, labels)?;
    check_interval(g, t0, t1)?;
    if let Some(c) = sizes.iter().position(|&s| s < 2) {
        return Err(EvalError::DegenerateCommunity(c));
    }
    let k = sizes.len();
    let mut hits = vec![0usize; k];
    for t in t0..t1 {
        for &(i, j) in g.layer(t - 1).edges() {
            let (ci, cj) = (labels[i as usize], labels[j as usize]);
            if ci == cj {
                hits[ci] += 2;
            }
        }
    }
    let span = (t1 - t0) as f64;
    Ok(hits
        .iter()
        .zip(&sizes)
        .map(|(&h, &s)| h as f64 / ((s * (s - 1)) as f64 * span))
        .collect())
}

/// Cohen's κ between two binary ratings; `None` when chance agreement is 1.
pub fn cohen_kappa(x: &[bool], y: &[bool]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let len = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let agree = x.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / len;
    let px = x.iter().filter(|&&v| v).count() as f64 / len;
    let py = y.iter().filter(|&&v| v).count() as f64 / len;
    let chance = px * py + (1.0 - px) * (1.0 - py);
    if (1.0 - chance).abs() < 1e-15 {
        return None;
    }
    Some((agree - chance) / (1.0 - chance))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub community: usize,
    /// κ of every intra-community pair `i < j`, in lexicographic pair order.
    pub values: Vec<f64>,
    /// Pairs with undefined κ.
    pub skipped: usize,
}

/// Pairwise κ between the neighbor indicator vectors of every
/// intra-community node pair over layers `[t0, t1)`. Coordinates involving
/// either node of the pair are excluded.
pub fn cohen_kappa_pairs(
    g: &GraphSequence,
    labels: &[usize],
    t0: usize,
    t1: usize,
) -> Result<Vec<KappaSummary>, EvalError> {
    let k = community_sizes(g, labels)?.len();
    check_interval(g, t0, t1)?;
    let n = g.n();
    let mut out: Vec<KappaSummary> = (0..k)
        .map(|community| KappaSummary {
            community,
            values: Vec::new(),
            skipped: 0,
        })
        .collect();
    let mut x = Vec::with_capacity((t1 - t0) * n);
    let mut y = Vec::with_capacity((t1 - t0) * n);
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] != labels[j] {
                continue;
            }
            x.clear();
            y.clear();
            for t in t0..t1 {
                let layer = g.layer(t - 1);
                for v in (0..n).filter(|&v| v != i && v != j) {
                    x.push(layer.has_edge(i, v));
                    y.push(layer.has_edge(j, v));
                }
            }
            let summary = &mut out[labels[i]];
            match cohen_kappa(&x, &y) {
                Some(kappa) => summary.values.push(kappa),
                None => summary.skipped += 1,
            }
        }
    }
    Ok(out)
}

const KMEANS_MAX_ITER: usize = 100;
const KMEANS_RESTARTS: usize = 10;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let n = rows.len();
    // k-means++ seeding
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let weights: Vec<f64> = rows.iter().map(|r| nearest(r, &centroids).1).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if target < *w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(rows[pick].clone());
    }
    let dim = rows[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let c = nearest(row, &centroids).0;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (row, &c) in rows.iter().zip(&labels) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(row) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for ((centroid, sum), &count) in centroids.iter_mut().zip(&sums).zip(&counts) {
            for (c, s) in centroid.iter_mut().zip(sum) {
                *c = s / count as f64;
            }
        }
        if !changed {
            break;
        }
    }
    Some(labels)
}

/// Partitions the rows of a basis into `k` groups by Lloyd iterations with
/// seeded k-means++ initialization. Distance ties go to the lowest cluster
/// index.
pub fn cluster_memberships(
    basis: &SubspaceBasis,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, EvalError> {
    let n = basis.n();
    if k == 0 || k > n {
        return Err(EvalError::BadClusterCount { k, n });
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let cols = basis.columns();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| cols.row(i).iter().copied().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..=KMEANS_RESTARTS {
        if let Some(labels) = kmeans_once(&rows, k, &mut rng) {
            return Ok(labels);
        }
    }
    Err(EvalError::EmptyCluster(KMEANS_RESTARTS))
}
