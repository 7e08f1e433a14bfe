//! Detection and refinement statistics over windows of squared layers.
//!
//! Every statistic is computed from a [`LayerSource`], which yields one
//! symmetric term per layer: `A_t² − D_t` for observed graphs, or `P_t²`
//! for a known model (population mode). Times are 1-based throughout.

use std::borrow::Cow;
use std::fmt::Write as _;

use thiserror::Error;

use crate::netdata::{GraphSequence, SegmentModel};
use crate::spectral::{
    self, eigenvalues_desc, proj_residual_norm, proj_residual_trace, SpectralError, SubspaceBasis,
    SymMatrix, Uevt,
};

/// Default number of incremental slides between exact window recomputations.
pub const DEFAULT_RECOMPUTE_INTERVAL: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("window [{first}, {last}] is outside layers 1..={t_len}")]
    OutOfRange {
        first: isize,
        last: isize,
        t_len: usize,
    },
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("eigenvalue index {rank} is invalid for a {n}x{n} window")]
    InvalidRank { rank: usize, n: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, StatError>;

/// A sequence of per-layer symmetric terms whose window sums feed the
/// statistics.
pub trait LayerSource {
    fn n(&self) -> usize;
    /// Number of layers `T`.
    fn num_layers(&self) -> usize;
    /// Term for the 1-based layer `t`.
    fn layer_term(&self, t: usize) -> Cow<'_, SymMatrix>;
}

impl LayerSource for GraphSequence {
    fn n(&self) -> usize {
        GraphSequence::n(self)
    }

    fn num_layers(&self) -> usize {
        self.len()
    }

    fn layer_term(&self, t: usize) -> Cow<'_, SymMatrix> {
        Cow::Owned(self.debiased_square(t - 1))
    }
}

impl LayerSource for SegmentModel {
    fn n(&self) -> usize {
        SegmentModel::n(self)
    }

    fn num_layers(&self) -> usize {
        self.len()
    }

    fn layer_term(&self, t: usize) -> Cow<'_, SymMatrix> {
        Cow::Owned(self.probability(t).square())
    }
}

/// All layer terms of a source, computed once.
#[derive(Clone, Debug)]
pub struct CachedTerms {
    n: usize,
    terms: Vec<SymMatrix>,
}

impl CachedTerms {
    pub fn new<S: LayerSource + ?Sized>(src: &S) -> Self {
        let terms = (1..=src.num_layers())
            .map(|t| src.layer_term(t).into_owned())
            .collect();
        Self { n: src.n(), terms }
    }
}

impl LayerSource for CachedTerms {
    fn n(&self) -> usize {
        self.n
    }

    fn num_layers(&self) -> usize {
        self.terms.len()
    }

    fn layer_term(&self, t: usize) -> Cow<'_, SymMatrix> {
        Cow::Borrowed(&self.terms[t - 1])
    }
}

/// `A² − diag(A·1)` for a dense adjacency matrix.
pub fn debiased_square(a: &SymMatrix) -> SymMatrix {
    let mut sq = a.square();
    for i in 0..a.n() {
        let degree: f64 = a.as_matrix().row(i).sum();
        sq.set(i, i, sq.get(i, i) - degree);
    }
    sq
}

fn check_window<S: LayerSource + ?Sized>(src: &S, last: usize, len: usize) -> Result<()> {
    if len == 0 {
        return Err(StatError::EmptyWindow);
    }
    let first = last as isize - len as isize + 1;
    if first < 1 || last > src.num_layers() {
        return Err(StatError::OutOfRange {
            first,
            last: last as isize,
            t_len: src.num_layers(),
        });
    }
    Ok(())
}

/// `Σ_{t=last−len+1}^{last}` of the layer terms.
pub fn window_sum<S: LayerSource + ?Sized>(src: &S, last: usize, len: usize) -> Result<SymMatrix> {
    check_window(src, last, len)?;
    let mut acc = src.layer_term(last - len + 1).into_owned();
    for t in last - len + 2..=last {
        acc += src.layer_term(t).as_ref();
    }
    Ok(acc)
}

/// Sliding window sum maintained by adding the newest term and subtracting
/// the oldest, with a full recomputation every `recompute_interval` slides.
pub struct WindowAggregator<'a, S: LayerSource + ?Sized> {
    src: &'a S,
    len: usize,
    last: usize,
    sum: SymMatrix,
    slides_since_refresh: usize,
    recompute_interval: usize,
}

impl<'a, S: LayerSource + ?Sized> WindowAggregator<'a, S> {
    pub fn new(src: &'a S, len: usize, last: usize, recompute_interval: usize) -> Result<Self> {
        let sum = window_sum(src, last, len)?;
        Ok(Self {
            src,
            len,
            last,
            sum,
            slides_since_refresh: 0,
            recompute_interval: recompute_interval.max(1),
        })
    }

    pub fn sum(&self) -> &SymMatrix {
        &self.sum
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn first(&self) -> usize {
        self.last + 1 - self.len
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Advances the window by one layer.
    pub fn slide(&mut self) -> Result<()> {
        let next = self.last + 1;
        check_window(self.src, next, self.len)?;
        self.slides_since_refresh += 1;
        if self.slides_since_refresh >= self.recompute_interval {
            self.sum = window_sum(self.src, next, self.len)?;
            self.slides_since_refresh = 0;
        } else {
            self.sum += self.src.layer_term(next).as_ref();
            self.sum -= self.src.layer_term(self.first()).as_ref();
        }
        self.last = next;
        Ok(())
    }

    /// Positions the window to end at `last`, sliding when it is the next
    /// layer and recomputing otherwise.
    pub fn move_to(&mut self, last: usize) -> Result<()> {
        if last == self.last {
            return Ok(());
        }
        if last == self.last + 1 {
            return self.slide();
        }
        self.sum = window_sum(self.src, last, self.len)?;
        self.last = last;
        self.slides_since_refresh = 0;
        Ok(())
    }
}

/// `‖V̂⊥ᵀ W‖₂` for a backward window `W`.
pub fn pi_proj_hat(window: &SymMatrix, basis: &SubspaceBasis) -> Result<f64> {
    Ok(proj_residual_norm(basis, window)?)
}

/// The `rank`-th largest eigenvalue of a forward window.
pub fn pi_eig_hat(window: &SymMatrix, rank: usize) -> Result<f64> {
    if rank == 0 || rank > window.n() {
        return Err(StatError::InvalidRank {
            rank,
            n: window.n(),
        });
    }
    Ok(eigenvalues_desc(window)?[rank - 1])
}

/// Low-rank estimate `P̄` of a window: eigenpairs above `b`.
pub fn pbar(window: &SymMatrix, b: f64) -> Result<Uevt> {
    Ok(spectral::uevt(window, b)?)
}

fn check_refine_range<S: LayerSource + ?Sized>(src: &S, l: usize, len: usize) -> Result<()> {
    if len == 0 {
        return Err(StatError::EmptyWindow);
    }
    if l <= len || l + len - 1 > src.num_layers() {
        return Err(StatError::OutOfRange {
            first: l as isize - len as isize,
            last: (l + len) as isize - 1,
            t_len: src.num_layers(),
        });
    }
    Ok(())
}

/// `tr(Û⊥Û⊥ᵀ P̄)` with `Û` from the window ending at `l−1` and `P̄` from the
/// window ending at `l+L−1`. Large when new directions appear at `l`.
pub fn pi_ref1<S: LayerSource + ?Sized>(src: &S, l: usize, len: usize, b: f64) -> Result<f64> {
    check_refine_range(src, l, len)?;
    let before = pbar(&window_sum(src, l - 1, len)?, b)?;
    let after = pbar(&window_sum(src, l + len - 1, len)?, b)?;
    Ok(proj_residual_trace(&before.basis, &after.approx)?)
}

/// Mirror of [`pi_ref1`]: the forward window's complement applied to the
/// backward window's low-rank estimate. Large when directions vanish at `l`.
pub fn pi_ref2<S: LayerSource + ?Sized>(src: &S, l: usize, len: usize, b: f64) -> Result<f64> {
    check_refine_range(src, l, len)?;
    let before = pbar(&window_sum(src, l - 1, len)?, b)?;
    let after = pbar(&window_sum(src, l + len - 1, len)?, b)?;
    Ok(proj_residual_trace(&after.basis, &before.approx)?)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRecord {
    pub l: usize,
    pub pi_proj: f64,
    pub pi_eig: f64,
    /// 0-based index of the segment whose subspace estimate was active.
    pub segment: usize,
    pub rank: usize,
}

/// Per-time statistic values recorded during a scan.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StatTrace {
    records: Vec<TraceRecord>,
}

impl StatTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; `l` must exceed the previous record's.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(prev) = self.records.last() {
            assert!(record.l > prev.l, "trace times must be strictly increasing");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, l: usize) -> Option<&TraceRecord> {
        self.records
            .binary_search_by_key(&l, |r| r.l)
            .ok()
            .map(|i| &self.records[i])
    }

    pub const CSV_HEADER: &'static str = "l,pi_proj,pi_eig,segment,rank";

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(32 * (self.records.len() + 1));
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.l, r.pi_proj, r.pi_eig, r.segment, r.rank
            );
        }
        s
    }
}
