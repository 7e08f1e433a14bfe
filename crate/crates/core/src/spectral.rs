//! Dense symmetric linear algebra: eigendecomposition, norms, eigenvalue
//! thresholding and subspace geometry.
//!
//! Complement quantities such as `‖V⊥ᵀ M‖₂` or `tr(V⊥V⊥ᵀ M)` are always
//! evaluated through `I − VVᵀ`; an explicit complement basis is never built.

use std::ops::{AddAssign, SubAssign};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Maximum entrywise deviation of `VᵀV` from the identity for a basis to be
/// accepted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;
/// Relative Frobenius tolerance for eigendecomposition reconstruction.
pub const RECONSTRUCTION_RTOL: f64 = 1e-6;
/// Relative asymmetry accepted by [`SymMatrix::try_from_matrix`].
pub const SYMMETRY_RTOL: f64 = 1e-9;

const SIGN_EPS: f64 = 1e-12;
const GRAM_SCHMIDT_DROP: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("columns are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("matrix dimension must be at least 1")]
    Empty,
    #[error("threshold must not be NaN")]
    NanThreshold,
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Dense real symmetric matrix. Symmetry holds exactly by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "SymMatrix requires n >= 1");
        Self {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "SymMatrix requires n >= 1");
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "SymMatrix requires n >= 1");
        let n = diag.len();
        Self {
            inner: DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 }),
        }
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)` with `i <= j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n > 0, "SymMatrix requires n >= 1");
        let mut inner = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Self { inner }
    }

    /// Validates squareness, finiteness and symmetry, then averages the two
    /// triangles so the result is exactly symmetric.
    pub fn try_from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(SpectralError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(SpectralError::Empty);
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_RTOL * scale {
            return Err(SpectralError::NotSymmetric(asym));
        }
        Ok(Self::symmetrize(m))
    }

    /// Returns `(m + mᵀ)/2`. Used for products that are symmetric in exact
    /// arithmetic.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        let t = m.transpose();
        Self {
            inner: (m + t) * 0.5,
        }
    }

    /// Wraps a matrix the caller has filled symmetrically.
    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        debug_assert!((&m - m.transpose()).amax() == 0.0);
        Self { inner: m }
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.inner[(i, j)] = value;
        self.inner[(j, i)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.amax()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        (&self.inner - &other.inner).amax()
    }

    pub fn scaled(&self, factor: f64) -> SymMatrix {
        Self {
            inner: &self.inner * factor,
        }
    }

    /// `self · self`, symmetrized.
    pub fn square(&self) -> SymMatrix {
        Self::symmetrize(&self.inner * &self.inner)
    }

    /// `Vᵀ · self · V` for an `n × r` matrix `V`.
    pub fn congruence(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v.transpose() * (&self.inner * v)
    }
}

impl AddAssign<&SymMatrix> for SymMatrix {
    fn add_assign(&mut self, rhs: &SymMatrix) {
        self.inner += &rhs.inner;
    }
}

impl SubAssign<&SymMatrix> for SymMatrix {
    fn sub_assign(&mut self, rhs: &SymMatrix) {
        self.inner -= &rhs.inner;
    }
}

/// Full eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct EigenDecomp {
    pub values: Vec<f64>,
    /// One orthonormal column per eigenvalue, in the same order.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomp {
    pub fn reconstruct(&self) -> SymMatrix {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.values.len(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        SymMatrix::symmetrize(scaled * self.vectors.transpose())
    }
}

/// Orthonormal `n × R` basis of a subspace of `Rⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    columns: DMatrix<f64>,
}

impl SubspaceBasis {
    /// The zero-dimensional subspace of `Rⁿ`.
    pub fn empty(n: usize) -> Self {
        Self {
            columns: DMatrix::zeros(n, 0),
        }
    }

    pub fn from_orthonormal(columns: DMatrix<f64>) -> Result<Self> {
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let dev = orthonormality_deviation(&columns);
        if dev > ORTHONORMAL_TOL {
            return Err(SpectralError::NotOrthonormal(dev));
        }
        Ok(Self { columns })
    }

    /// Orthonormal basis of the column space of `span`, via modified
    /// Gram–Schmidt with one re-orthogonalization pass. Columns that are
    /// numerically dependent on earlier ones are dropped.
    pub fn orthonormalize(span: &DMatrix<f64>) -> Self {
        let n = span.nrows();
        let scale = span.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut kept: Vec<nalgebra::DVector<f64>> = Vec::new();
        for col in span.column_iter() {
            let mut v = col.into_owned();
            for _ in 0..2 {
                for q in &kept {
                    let d = q.dot(&v);
                    v.axpy(-d, q, 1.0);
                }
            }
            let norm = v.norm();
            if norm > GRAM_SCHMIDT_DROP * scale.max(1.0) {
                kept.push(v / norm);
            }
        }
        if kept.is_empty() {
            return Self::empty(n);
        }
        Self {
            columns: DMatrix::from_columns(&kept),
        }
    }

    /// Span of the listed standard basis vectors.
    pub fn standard(n: usize, indices: &[usize]) -> Self {
        let mut columns = DMatrix::zeros(n, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            columns[(i, c)] = 1.0;
        }
        Self { columns }
    }

    pub fn n(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// `VVᵀ` as an `n × n` matrix.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.columns * self.columns.transpose()
    }

    /// Right-multiplies the basis by an `R × R` orthogonal matrix. The
    /// spanned subspace is unchanged.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.rank() || q.ncols() != self.rank() {
            return Err(SpectralError::DimensionMismatch {
                expected: self.rank(),
                got: q.nrows(),
            });
        }
        Self::from_orthonormal(&self.columns * q)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(SpectralError::DimensionMismatch {
                expected: self.n(),
                got: n,
            });
        }
        Ok(())
    }
}

/// `max |VᵀV − I|` entrywise.
pub fn orthonormality_deviation(columns: &DMatrix<f64>) -> f64 {
    let r = columns.ncols();
    if r == 0 {
        return 0.0;
    }
    let gram = columns.transpose() * columns;
    (gram - DMatrix::<f64>::identity(r, r)).amax()
}

fn eig_budget(n: usize) -> usize {
    1_000 + 100 * n
}

fn check_finite(m: &SymMatrix) -> Result<()> {
    if m.inner.iter().any(|v| !v.is_finite()) {
        Err(SpectralError::NonFinite)
    } else {
        Ok(())
    }
}

/// Full symmetric eigendecomposition, eigenvalues descending.
///
/// The first entry of each eigenvector whose magnitude exceeds `1e-12` is
/// made nonnegative, so outputs are deterministic up to eigenvalue ties.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomp> {
    check_finite(m)?;
    let n = m.n();
    let budget = eig_budget(n);
    let eig = SymmetricEigen::try_new(m.inner.clone(), f64::EPSILON, budget)
        .ok_or(SpectralError::NoConvergence(budget))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_EPS) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenDecomp { values, vectors })
}

/// Eigenvalues only, descending.
pub fn eigenvalues_desc(m: &SymMatrix) -> Result<Vec<f64>> {
    check_finite(m)?;
    let mut values: Vec<f64> = m.inner.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Output of the universal eigenvalue threshold operator.
#[derive(Clone, Debug)]
pub struct Uevt {
    /// `Σ_{λᵢ > h} λᵢ uᵢuᵢᵀ`.
    pub approx: SymMatrix,
    pub rank: usize,
    pub basis: SubspaceBasis,
    /// Retained eigenvalues, descending.
    pub values: Vec<f64>,
}

/// Keeps the eigenpairs of `g` whose eigenvalue is strictly greater than `h`.
pub fn uevt(g: &SymMatrix, h: f64) -> Result<Uevt> {
    if h.is_nan() {
        return Err(SpectralError::NanThreshold);
    }
    let eig = sym_eig(g)?;
    let rank = eig.values.iter().take_while(|&&v| v > h).count();
    let columns = eig.vectors.columns(0, rank).into_owned();
    let values = eig.values[..rank].to_vec();
    let approx = if rank == 0 {
        SymMatrix::zeros(g.n())
    } else {
        let scaled = DMatrix::from_fn(g.n(), rank, |i, j| columns[(i, j)] * values[j]);
        SymMatrix::symmetrize(scaled * columns.transpose())
    };
    Ok(Uevt {
        approx,
        rank,
        basis: SubspaceBasis { columns },
        values,
    })
}

/// `‖m‖₂ = max |λᵢ(m)|`.
pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    let values = eigenvalues_desc(m)?;
    Ok(values.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

/// `(I − VVᵀ) M` as a dense, generally non-symmetric matrix.
pub fn proj_residual(basis: &SubspaceBasis, m: &SymMatrix) -> Result<DMatrix<f64>> {
    basis.check_dim(m.n())?;
    let v = &basis.columns;
    if v.ncols() == 0 {
        return Ok(m.inner.clone());
    }
    Ok(&m.inner - v * (v.transpose() * &m.inner))
}

/// `‖V⊥ᵀ M‖₂`, evaluated as `‖(I − VVᵀ)M‖₂`.
///
/// The residual is formed first and its norm taken as `sqrt(λ_max(R Rᵀ))`;
/// squaring after the subtraction keeps exact zeros at rounding level.
pub fn proj_residual_norm(basis: &SubspaceBasis, m: &SymMatrix) -> Result<f64> {
    let r = proj_residual(basis, m)?;
    top_singular_value(&r)
}

pub(crate) fn top_singular_value(r: &DMatrix<f64>) -> Result<f64> {
    let gram = SymMatrix::symmetrize(r * r.transpose());
    let values = eigenvalues_desc(&gram)?;
    Ok(values.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// `tr(V⊥V⊥ᵀ m) = tr(m) − tr(Vᵀ m V)`.
pub fn proj_residual_trace(basis: &SubspaceBasis, m: &SymMatrix) -> Result<f64> {
    basis.check_dim(m.n())?;
    if basis.rank() == 0 {
        return Ok(m.trace());
    }
    Ok(m.trace() - m.congruence(&basis.columns).trace())
}

/// `‖UUᵀ − VVᵀ‖_F² = R_u + R_v − 2‖UᵀV‖_F²`.
pub fn subspace_distance_sq(u: &SubspaceBasis, v: &SubspaceBasis) -> Result<f64> {
    u.check_dim(v.n())?;
    let cross = if u.rank() == 0 || v.rank() == 0 {
        0.0
    } else {
        (u.columns.transpose() * &v.columns).norm_squared()
    };
    Ok((u.rank() + v.rank()) as f64 - 2.0 * cross)
}
