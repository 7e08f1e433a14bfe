//! Dynamic stochastic block model sequences with known change points.
//!
//! Every segment `k` has a membership vector and every layer a connectivity
//! matrix `B_t`, so `P_t = ρ Z⁽ᵏ⁾ B_t Z⁽ᵏ⁾ᵀ`. Randomness comes from
//! ChaCha8 substreams: stream 0 drives memberships and connectivity choices,
//! stream `t` samples layer `t`.

use std::borrow::Cow;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netdata::{GraphSequence, NetDataError, SegmentModel};
use crate::spectral::{SubspaceBasis, SymMatrix};
use crate::statistics::{window_sum, LayerSource, StatError};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("probability {value} at layer {t} exceeds 1")]
    InfeasibleProbability { t: usize, value: f64 },
    #[error("segment {segment} has an empty cluster")]
    EmptyCluster { segment: usize },
    #[error(transparent)]
    Data(#[from] NetDataError),
}

/// Mixes a master seed with an index into an independent 64-bit seed
/// (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn w1() -> DMatrix<f64> {
    let r6 = 6f64.sqrt() / 4.0;
    DMatrix::from_row_slice(3, 3, &[0.75, 0.25, r6, 0.5, 0.75, -r6, r6, -r6, -0.5])
}

fn w2() -> DMatrix<f64> {
    let r2 = 2f64.sqrt() / 2.0;
    DMatrix::from_row_slice(3, 3, &[0.5, 0.5, -r2, 0.5, 0.5, r2, r2, -r2, 0.0])
}

/// `B¹ = W₁ diag(1, 0.5, 0.5) W₁ᵀ`.
pub fn connectivity_b1() -> DMatrix<f64> {
    let w = w1();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 0.5, 0.5]));
    let b = &w * d * w.transpose();
    (&b + b.transpose()) * 0.5
}

/// `B² = W₂ diag(1, 0.5, −0.5) W₂ᵀ`.
pub fn connectivity_b2() -> DMatrix<f64> {
    let w = w2();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 0.5, -0.5]));
    let b = &w * d * w.transpose();
    (&b + b.transpose()) * 0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n: usize,
    #[serde(rename = "T")]
    pub t_len: usize,
    /// Location of the first change as a fraction of `T`.
    pub s: f64,
    /// Fraction of nodes reassigned between the first two segments.
    pub q: f64,
    /// Sparsity `ρ`.
    pub rho: f64,
    pub seed: u64,
}

impl ScenarioParams {
    /// `{⌊sT⌋, ⌊T/2⌋, ⌊3T/4⌋}`.
    pub fn change_points(&self) -> Vec<usize> {
        let t = self.t_len as f64;
        let floor = |x: f64| (x + 1e-9).floor() as usize;
        vec![floor(self.s * t), self.t_len / 2, (3 * self.t_len) / 4]
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: String| Err(GeneratorError::InvalidParams(m));
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if !(self.s > 0.0 && self.s <= 0.25) {
            return bad(format!("s must lie in (0, 1/4], got {}", self.s));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad(format!("q must lie in [0, 1], got {}", self.q));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        let cps = self.change_points();
        if cps[0] <= 1 || cps.windows(2).any(|w| w[0] >= w[1]) || cps[2] >= self.t_len {
            return bad(format!(
                "change points {cps:?} are not strictly increasing inside (1, {})",
                self.t_len
            ));
        }
        Ok(())
    }
}

/// Connectivity of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Connectivity {
    /// `B¹` (index 0) or `B²` (index 1), restricted to the leading
    /// `dim × dim` block.
    Table { index: usize, dim: usize },
    /// `B¹[..dim, ..dim] + amplitude·sin(2πt/period)·I`.
    Drift {
        dim: usize,
        amplitude: f64,
        period: f64,
    },
}

/// Ground truth of a generated sequence.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    n: usize,
    rho: f64,
    change_points: Vec<usize>,
    /// Per segment, the 0-based cluster of every node.
    labels: Vec<Vec<usize>>,
    clusters: Vec<usize>,
    connectivity: Vec<Connectivity>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.connectivity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.connectivity.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn segment_of(&self, t: usize) -> usize {
        self.change_points.partition_point(|&c| c <= t)
    }

    pub fn segment_ranks(&self) -> Vec<usize> {
        self.clusters.clone()
    }

    pub fn connectivity_choice(&self, t: usize) -> Connectivity {
        self.connectivity[t - 1]
    }

    /// `B_t` for 1-based `t`.
    pub fn connectivity(&self, t: usize) -> DMatrix<f64> {
        match self.connectivity[t - 1] {
            Connectivity::Table { index, dim } => {
                let b = if index == 0 { &self.b1 } else { &self.b2 };
                b.view((0, 0), (dim, dim)).into_owned()
            }
            Connectivity::Drift {
                dim,
                amplitude,
                period,
            } => {
                let shift = amplitude * (2.0 * PI * t as f64 / period).sin();
                self.b1.view((0, 0), (dim, dim)).into_owned()
                    + DMatrix::<f64>::identity(dim, dim) * shift
            }
        }
    }

    /// One-hot `n × R` membership matrix of segment `k`.
    pub fn membership_matrix(&self, k: usize) -> DMatrix<f64> {
        let r = self.clusters[k];
        let mut z = DMatrix::zeros(self.n, r);
        for (i, &c) in self.labels[k].iter().enumerate() {
            z[(i, c)] = 1.0;
        }
        z
    }

    /// Orthonormal basis of the column space of `Z⁽ᵏ⁾`.
    pub fn segment_basis(&self, k: usize) -> SubspaceBasis {
        SubspaceBasis::orthonormalize(&self.membership_matrix(k))
    }

    /// `P_t* = ρ Z B_t Zᵀ` for 1-based `t`.
    pub fn probability(&self, t: usize) -> SymMatrix {
        let k = self.segment_of(t);
        let b = self.connectivity(t);
        let lab = &self.labels[k];
        SymMatrix::from_upper_fn(self.n, |i, j| self.rho * b[(lab[i], lab[j])])
    }

    /// `(P_t*)²`, via `ρ² Z (B diag(|C|) B) Zᵀ`.
    pub fn probability_squared(&self, t: usize) -> SymMatrix {
        let k = self.segment_of(t);
        let b = self.connectivity(t);
        let r = self.clusters[k];
        let mut sizes = vec![0.0; r];
        for &c in &self.labels[k] {
            sizes[c] += 1.0;
        }
        let inner = &b * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sizes)) * &b;
        let lab = &self.labels[k];
        let rho2 = self.rho * self.rho;
        SymMatrix::from_upper_fn(self.n, |i, j| rho2 * inner[(lab[i], lab[j])])
    }

    /// Exact `Σ_{t=last−len+1}^{last} (P_t*)²`.
    pub fn population_window(&self, last: usize, len: usize) -> Result<SymMatrix, StatError> {
        window_sum(self, last, len)
    }

    /// The same model written as `ρ V⁽ᵏ⁾ M_t V⁽ᵏ⁾ᵀ` with orthonormal `V`.
    pub fn to_segment_model(&self) -> Result<SegmentModel, NetDataError> {
        let bases: Vec<SubspaceBasis> = (0..self.labels.len())
            .map(|k| self.segment_basis(k))
            .collect();
        let cores = (1..=self.len())
            .map(|t| {
                let k = self.segment_of(t);
                let v = bases[k].columns();
                let coeff = v.transpose() * self.membership_matrix(k);
                let m = &coeff * self.connectivity(t) * coeff.transpose();
                (&m + m.transpose()) * 0.5
            })
            .collect();
        SegmentModel::new(self.change_points.clone(), bases, cores, self.rho)
    }

    fn check_feasible(&self) -> Result<(), GeneratorError> {
        for t in 1..=self.len() {
            let max = self.connectivity(t).max() * self.rho;
            if max > 1.0 {
                return Err(GeneratorError::InfeasibleProbability { t, value: max });
            }
        }
        Ok(())
    }

    /// Samples one Bernoulli layer per time from stream `t` of `seed`.
    pub fn sample(&self, seed: u64) -> Result<GraphSequence, GeneratorError> {
        let layers = (1..=self.len())
            .map(|t| {
                let mut rng = substream(seed, t as u64);
                let k = self.segment_of(t);
                let b = self.connectivity(t);
                let lab = &self.labels[k];
                let mut edges = Vec::new();
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        let p = self.rho * b[(lab[i], lab[j])];
                        if rng.random::<f64>() < p {
                            edges.push((i, j));
                        }
                    }
                }
                edges
            })
            .collect();
        Ok(GraphSequence::new(self.n, layers)?)
    }
}

impl LayerSource for GroundTruth {
    fn n(&self) -> usize {
        self.n
    }

    fn num_layers(&self) -> usize {
        self.len()
    }

    fn layer_term(&self, t: usize) -> Cow<'_, SymMatrix> {
        Cow::Owned(self.probability_squared(t))
    }
}

/// Cluster sizes `{round(0.3n), round(0.3n), rest}`.
pub fn initial_cluster_sizes(n: usize) -> [usize; 3] {
    let a = (0.3 * n as f64).round() as usize;
    [a, a, n - 2 * a]
}

fn random_partition(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let sizes = initial_cluster_sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![0; n];
    for (pos, &node) in order.iter().enumerate() {
        labels[node] = if pos < sizes[0] {
            0
        } else if pos < sizes[0] + sizes[1] {
            1
        } else {
            2
        };
    }
    labels
}

/// Moves `round(q·n)` distinct nodes to a uniformly chosen different cluster.
fn reassign(labels: &[usize], clusters: usize, q: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = labels.len();
    let moved = ((q * n as f64).round() as usize).min(n);
    let mut out = labels.to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &node in &order[..moved] {
        let offset = rng.random_range(1..clusters);
        out[node] = (labels[node] + offset) % clusters;
    }
    out
}

/// Drops the smallest cluster (lowest index on ties), spreading its nodes
/// over the others.
fn remove_smallest(labels: &[usize], clusters: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes = vec![0usize; clusters];
    for &c in labels {
        sizes[c] += 1;
    }
    let smallest = (0..clusters).min_by_key(|&c| (sizes[c], c)).unwrap();
    dissolve_cluster(labels, clusters, smallest, rng)
}

/// Moves every node of cluster `drop` to a uniformly chosen remaining
/// cluster, then relabels the survivors `0..clusters−1` in order.
fn dissolve_cluster(
    labels: &[usize],
    clusters: usize,
    drop: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    labels
        .iter()
        .map(|&c| {
            let c = if c == drop {
                let pick = rng.random_range(0..clusters - 1);
                if pick >= drop {
                    pick + 1
                } else {
                    pick
                }
            } else {
                c
            };
            if c > drop {
                c - 1
            } else {
                c
            }
        })
        .collect()
}

fn check_nonempty(labels: &[Vec<usize>], clusters: &[usize]) -> Result<(), GeneratorError> {
    for (k, (lab, &r)) in labels.iter().zip(clusters).enumerate() {
        let mut seen = vec![false; r];
        for &c in lab {
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(GeneratorError::EmptyCluster { segment: k });
        }
    }
    Ok(())
}

/// The three-change dynamic SBM used for the simulation tables.
pub fn build_scenario(
    params: &ScenarioParams,
) -> Result<(GroundTruth, GraphSequence), GeneratorError> {
    params.validate()?;
    let mut rng = substream(params.seed, 0);
    let z1 = random_partition(params.n, &mut rng);
    let z2 = reassign(&z1, 3, params.q, &mut rng);
    let z3 = remove_smallest(&z2, 3, &mut rng);
    let labels = vec![z1, z2.clone(), z3, z2];
    let clusters = vec![3, 3, 2, 3];
    check_nonempty(&labels, &clusters)?;

    let change_points = params.change_points();
    let connectivity = (1..=params.t_len)
        .map(|t| {
            let index = usize::from(rng.random_bool(0.5));
            let dim = if t >= change_points[1] && t < change_points[2] {
                2
            } else {
                3
            };
            Connectivity::Table { index, dim }
        })
        .collect();
    let truth = GroundTruth {
        n: params.n,
        rho: params.rho,
        change_points,
        labels,
        clusters,
        connectivity,
        b1: connectivity_b1(),
        b2: connectivity_b2(),
    };
    truth.check_feasible()?;
    let graphs = truth.sample(params.seed)?;
    Ok((truth, graphs))
}

pub const TOY_N: usize = 100;
pub const TOY_T: usize = 400;
pub const TOY_CHANGE_POINTS: [usize; 3] = [101, 201, 301];

/// Four-segment sequence whose ranks go 3 → 2 → 3 → 3.
///
/// Segment 2 merges the largest cluster of segment 1 into the other two;
/// segment 3 is a fresh partition; segment 4 reassigns 30% of the nodes of
/// segment 3. Connectivity drifts smoothly as
/// `B¹ + 0.15·sin(2πt/50)·I` (leading block), which keeps every `M_t`
/// positive definite.
pub fn build_toy(seed: u64) -> Result<(GroundTruth, GraphSequence), GeneratorError> {
    let n = TOY_N;
    let mut rng = substream(seed, 0);
    let z1 = random_partition(n, &mut rng);
    let z2 = dissolve_cluster(&z1, 3, 2, &mut rng);
    let z3 = random_partition(n, &mut rng);
    let z4 = reassign(&z3, 3, 0.3, &mut rng);
    let labels = vec![z1, z2, z3, z4];
    let clusters = vec![3, 2, 3, 3];
    check_nonempty(&labels, &clusters)?;
    let change_points = TOY_CHANGE_POINTS.to_vec();
    let connectivity = (1..=TOY_T)
        .map(|t| {
            let dim = if (change_points[0]..change_points[1]).contains(&t) {
                2
            } else {
                3
            };
            Connectivity::Drift {
                dim,
                amplitude: 0.15,
                period: 50.0,
            }
        })
        .collect();
    let truth = GroundTruth {
        n,
        rho: 1.0,
        change_points,
        labels,
        clusters,
        connectivity,
        b1: connectivity_b1(),
        b2: connectivity_b2(),
    };
    truth.check_feasible()?;
    let graphs = truth.sample(seed)?;
    Ok((truth, graphs))
}
