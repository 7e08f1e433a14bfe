//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subtrack::generator::GroundTruth;
use subtrack::netdata::SegmentModel;
use subtrack::spectral::SubspaceBasis;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn random_gaussianish(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Classical Gram–Schmidt, twice, over the columns of `a`; columns whose
/// residual falls below `1e-9` are skipped.
pub fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for c in 0..a.ncols() {
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, c)]).collect();
        for _ in 0..2 {
            for q in &kept {
                let dot: f64 = q.iter().zip(&v).map(|(x, y)| x * y).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            kept.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    DMatrix::from_fn(n, kept.len(), |i, j| kept[j][i])
}

pub fn random_orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let q = gram_schmidt(&random_gaussianish(n, r, rng));
        if q.ncols() == r {
            return q;
        }
    }
}

/// Orthonormal basis of the complement of `span(v)`, completing `v` with
/// the standard basis.
pub fn complement(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let mut stacked = DMatrix::zeros(n, v.ncols() + n);
    stacked.columns_mut(0, v.ncols()).copy_from(v);
    stacked
        .columns_mut(v.ncols(), n)
        .copy_from(&DMatrix::identity(n, n));
    let full = gram_schmidt(&stacked);
    assert_eq!(full.ncols(), n);
    full.columns(v.ncols(), n - v.ncols()).into_owned()
}

/// Cyclic Jacobi rotations. Returns eigenvalues in descending order and
/// the matching eigenvectors as columns.
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Largest singular value from the Jacobi spectrum of `mᵀm`.
pub fn top_singular(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    jacobi_eigen(&gram).0[0].max(0.0).sqrt()
}

/// `Σ_ij (UUᵀ − VVᵀ)_ij²`, entry by entry.
pub fn projector_distance_sq(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let n = u.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pu: f64 = (0..u.ncols()).map(|k| u[(i, k)] * u[(j, k)]).sum();
            let pv: f64 = (0..v.ncols()).map(|k| v[(i, k)] * v[(j, k)]).sum();
            total += (pu - pv) * (pu - pv);
        }
    }
    total
}

/// Directed distances by brute force over every pair.
pub fn hausdorff_exhaustive(a: &[usize], b: &[usize], t_len: usize) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return (t_len as f64 - 1.0).max(1.0);
    }
    let mut worst = 0i64;
    for &x in a {
        let mut best = i64::MAX;
        for &y in b {
            best = best.min((x as i64 - y as i64).abs());
        }
        worst = worst.max(best);
    }
    for &y in b {
        let mut best = i64::MAX;
        for &x in a {
            best = best.min((x as i64 - y as i64).abs());
        }
        worst = worst.max(best);
    }
    worst as f64
}

/// Orthonormal basis of the block indicators in `labels`.
pub fn block_basis(labels: &[usize], k: usize) -> SubspaceBasis {
    let n = labels.len();
    let z = DMatrix::from_fn(n, k, |i, c| if labels[i] == c { 1.0 } else { 0.0 });
    SubspaceBasis::orthonormalize(&z)
}

/// Core matrix `D^{1/2} B D^{1/2}` so that `V M Vᵀ = Z B Zᵀ` for the
/// normalized block basis `V`.
pub fn block_core(labels: &[usize], b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = b.nrows();
    let sizes: Vec<f64> = (0..k)
        .map(|c| labels.iter().filter(|&&l| l == c).count() as f64)
        .collect();
    DMatrix::from_fn(k, k, |i, j| b[(i, j)] * (sizes[i] * sizes[j]).sqrt())
}

/// Noiseless four-segment block model on 30 nodes, `T = 120`, changes at
/// 31, 61 and 91 with ranks 3, 3, 2, 3: a relabeling at equal rank, a
/// drop to two blocks, and a return to three.
pub fn four_segment_model() -> SegmentModel {
    let n = 30;
    let seg1: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let seg2: Vec<usize> = (0..n)
        .map(|i| {
            if i < 10 {
                0
            } else if i < 20 {
                1
            } else {
                2
            }
        })
        .collect();
    let seg3: Vec<usize> = (0..n).map(|i| if i < 15 { 0 } else { 1 }).collect();
    let seg4: Vec<usize> = (0..n).map(|i| (i / 2) % 3).collect();
    let b3 = DMatrix::from_row_slice(3, 3, &[0.8, 0.2, 0.1, 0.2, 0.7, 0.15, 0.1, 0.15, 0.6]);
    let b2 = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.55]);
    let segments = [(&seg1, &b3), (&seg2, &b3), (&seg3, &b2), (&seg4, &b3)];
    let bases = segments
        .iter()
        .map(|(l, b)| block_basis(l, b.nrows()))
        .collect();
    let change_points = vec![31, 61, 91];
    let cores = (1..=120)
        .map(|t| {
            let k = change_points.iter().filter(|&&c| c <= t).count();
            let (labels, b) = segments[k];
            // a mild deterministic drift within each segment
            let drift = 1.0 + 0.1 * ((t as f64) * 0.3).sin();
            block_core(labels, &(b * drift))
        })
        .collect();
    SegmentModel::new(change_points, bases, cores, 1.0).unwrap()
}

pub fn toy_truth(seed: u64) -> GroundTruth {
    subtrack::generator::build_toy(seed).unwrap().0
}
