//! The two-stage detector: a threshold-triggered coarse scan followed by a
//! per-point refinement chosen by comparing the ranks of the subspace
//! estimates on either side.
//!
//! All times are 1-based layer indices. With window length `L`, the scan
//! tests `l = 2L+1, …, T−L`; changes inside `[1, 2L]` cannot be detected.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netdata::{sequence_sparsity_estimate, GraphSequence};
use crate::spectral::{
    proj_residual_norm, proj_residual_trace, SpectralError, SubspaceBasis, Uevt,
};
use crate::statistics::{
    pbar, pi_eig_hat, pi_proj_hat, window_sum, CachedTerms, LayerSource, StatError, StatTrace,
    TraceRecord, WindowAggregator, DEFAULT_RECOMPUTE_INTERVAL,
};

/// `1 + √2`, the ratio between the projection and eigenvalue thresholds.
pub const DEFAULT_PROJ_MULTIPLIER: f64 = 1.0 + SQRT_2;

/// Sequences with at most this many `T·n²` entries get their layer terms
/// precomputed before detection.
pub const TERM_CACHE_LIMIT: usize = 1 << 24;

pub const REPORT_SCHEMA: &str = "subtrack-report-v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence too short: T={t_len}, the scan needs at least {needed} layers")]
    TooShort { t_len: usize, needed: usize },
    #[error(
        "degenerate subspace estimate: no eigenvalue of the window [{first}, {last}] exceeds {threshold}"
    )]
    DegenerateRank {
        first: usize,
        last: usize,
        threshold: f64,
    },
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

pub type Result<T> = std::result::Result<T, DetectError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Window length `L`.
    pub window: usize,
    /// Eigenvalue threshold `b`.
    pub threshold: f64,
    /// Derive `window` and `threshold` from the data before detecting.
    pub auto_tune: bool,
    pub proj_multiplier: f64,
    pub recompute_interval: usize,
}

impl DetectorConfig {
    pub fn new(window: usize, threshold: f64) -> Self {
        Self {
            window,
            threshold,
            auto_tune: false,
            proj_multiplier: DEFAULT_PROJ_MULTIPLIER,
            recompute_interval: DEFAULT_RECOMPUTE_INTERVAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(DetectError::InvalidConfig(
                "window must be at least 1".into(),
            ));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(DetectError::InvalidConfig(format!(
                "threshold must be positive and finite, got {}",
                self.threshold
            )));
        }
        if !(self.proj_multiplier.is_finite() && self.proj_multiplier >= 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "projection multiplier must be >= 1, got {}",
                self.proj_multiplier
            )));
        }
        if self.recompute_interval == 0 {
            return Err(DetectError::InvalidConfig(
                "recompute interval must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Trigger level for the projection statistic.
    pub fn proj_threshold(&self) -> f64 {
        self.proj_multiplier * self.threshold
    }
}

/// `⌊T/20⌋`, at least 1.
pub fn default_window(t_len: usize) -> usize {
    (t_len / 20).max(1)
}

/// `(L n ρ² + √L n ρ √max(50, nρ)) · ln(n+T) / 30` with the plug-in `ρ`.
pub fn default_threshold(n: usize, t_len: usize, window: usize, rho: f64) -> f64 {
    let n_f = n as f64;
    let l_f = window as f64;
    let dense = l_f * n_f * rho * rho;
    let fluct = l_f.sqrt() * n_f * rho * (50f64).max(n_f * rho).sqrt();
    (dense + fluct) * ((n + t_len) as f64).ln() / 30.0
}

pub fn default_config(n: usize, t_len: usize, rho_check: f64) -> DetectorConfig {
    let window = default_window(t_len);
    DetectorConfig {
        auto_tune: true,
        ..DetectorConfig::new(window, default_threshold(n, t_len, window, rho_check))
    }
}

/// Thresholded eigenbasis of one estimation window.
#[derive(Clone, Debug)]
pub struct SubspaceEstimate {
    /// First and last layer of the window.
    pub first: usize,
    pub last: usize,
    pub basis: SubspaceBasis,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

impl SubspaceEstimate {
    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    fn from_uevt(first: usize, last: usize, u: Uevt) -> Self {
        Self {
            first,
            last,
            basis: u.basis,
            eigenvalues: u.values,
        }
    }
}

/// Subspace from the window `[start+L, start+2L−1]`.
pub fn estimate_subspace<S: LayerSource + ?Sized>(
    src: &S,
    start: usize,
    window: usize,
    b: f64,
) -> Result<SubspaceEstimate> {
    let last = start + 2 * window - 1;
    let first = start + window;
    let u = pbar(&window_sum(src, last, window)?, b)?;
    if u.rank == 0 {
        return Err(DetectError::DegenerateRank {
            first,
            last,
            threshold: b,
        });
    }
    Ok(SubspaceEstimate::from_uevt(first, last, u))
}

/// Sorted change points with the estimated rank of each segment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangePointSet {
    pub points: Vec<usize>,
    /// One entry per segment, `points.len() + 1` in total.
    pub ranks: Vec<usize>,
}

impl ChangePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    /// The eigenvalue at the current rank fell below `b`.
    Eig,
    /// The projection residual exceeded `(1+√2)b`.
    Proj,
    Both,
}

/// Trigger decision for one trace record, eigenvalue drop checked first.
pub fn trigger_kind(
    record: &TraceRecord,
    threshold: f64,
    proj_threshold: f64,
) -> Option<TriggerKind> {
    let eig = record.pi_eig < threshold;
    let proj = record.pi_proj > proj_threshold;
    match (eig, proj) {
        (true, true) => Some(TriggerKind::Both),
        (true, false) => Some(TriggerKind::Eig),
        (false, true) => Some(TriggerKind::Proj),
        (false, false) => None,
    }
}

#[derive(Clone, Debug)]
pub struct ScanOutcome {
    pub coarse: ChangePointSet,
    pub triggers: Vec<TriggerKind>,
    pub trace: StatTrace,
    /// Subspace estimate of every segment, `coarse.len() + 1` entries.
    pub estimates: Vec<SubspaceEstimate>,
    pub warnings: Vec<String>,
}

/// Coarse scan over `l = 2L+1, …, T−L`.
pub fn scan<S: LayerSource + ?Sized>(src: &S, config: &DetectorConfig) -> Result<ScanOutcome> {
    config.validate()?;
    let t_len = src.num_layers();
    let len = config.window;
    let b = config.threshold;
    let proj_level = config.proj_threshold();
    if t_len < 3 * len + 1 {
        return Err(DetectError::TooShort {
            t_len,
            needed: 3 * len + 1,
        });
    }
    let mut estimates = vec![estimate_subspace(src, 1, len, b)?];
    let mut back = WindowAggregator::new(src, len, 2 * len + 1, config.recompute_interval)?;
    let mut fwd = WindowAggregator::new(src, len, 3 * len, config.recompute_interval)?;
    let mut trace = StatTrace::new();
    let mut points = Vec::new();
    let mut triggers = Vec::new();
    let mut warnings = Vec::new();

    let mut l = 2 * len + 1;
    while l <= t_len - len {
        back.move_to(l)?;
        fwd.move_to(l + len - 1)?;
        let segment = estimates.len() - 1;
        let est = &estimates[segment];
        let record = TraceRecord {
            l,
            pi_proj: pi_proj_hat(back.sum(), &est.basis)?,
            pi_eig: pi_eig_hat(fwd.sum(), est.rank())?,
            segment,
            rank: est.rank(),
        };
        let fired = trigger_kind(&record, b, proj_level);
        trace.push(record);
        let Some(kind) = fired else {
            l += 1;
            continue;
        };
        points.push(l);
        triggers.push(kind);
        if l + 2 * len - 1 > t_len {
            // No room for a full estimation window after this point: take the
            // last L layers for the final segment and stop scanning.
            let first = t_len - len + 1;
            let u = pbar(&window_sum(src, t_len, len)?, b)?;
            estimates.push(SubspaceEstimate::from_uevt(first, t_len, u));
            warnings.push(format!(
                "change point at {l} leaves fewer than 2L={} layers; scan stopped and the last segment was estimated from [{first}, {t_len}]",
                2 * len
            ));
            break;
        }
        estimates.push(estimate_subspace(src, l, len, b)?);
        l += 2 * len;
    }
    let ranks = estimates.iter().map(SubspaceEstimate::rank).collect();
    Ok(ScanOutcome {
        coarse: ChangePointSet { points, ranks },
        triggers,
        trace,
        estimates,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefinementCase {
    RankUp,
    RankDown,
    RankEqual,
}

/// How one coarse point was refined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedPoint {
    pub coarse: usize,
    pub refined: usize,
    pub case: RefinementCase,
    /// Inclusive argmax interval after clipping to `[L+1, T−L+1]`.
    pub interval: (usize, usize),
    /// Start of the backward-search interval in the rank-equal case.
    pub search_start: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub refined: ChangePointSet,
    pub points: Vec<RefinedPoint>,
    pub warnings: Vec<String>,
}

/// Memoized low-rank window estimates keyed by window end.
struct PbarCache<'a, S: LayerSource + ?Sized> {
    src: &'a S,
    len: usize,
    b: f64,
    cache: HashMap<usize, Uevt>,
}

impl<'a, S: LayerSource + ?Sized> PbarCache<'a, S> {
    fn new(src: &'a S, len: usize, b: f64) -> Self {
        Self {
            src,
            len,
            b,
            cache: HashMap::new(),
        }
    }

    fn get(&mut self, last: usize) -> Result<&Uevt> {
        if !self.cache.contains_key(&last) {
            let u = pbar(&window_sum(self.src, last, self.len)?, self.b)?;
            self.cache.insert(last, u);
        }
        Ok(&self.cache[&last])
    }

    fn ref1(&mut self, l: usize) -> Result<f64> {
        let basis = self.get(l - 1)?.basis.clone();
        let after = self.get(l + self.len - 1)?;
        Ok(proj_residual_trace(&basis, &after.approx)?)
    }

    fn ref2(&mut self, l: usize) -> Result<f64> {
        let approx = self.get(l - 1)?.approx.clone();
        let after = self.get(l + self.len - 1)?;
        Ok(proj_residual_trace(&after.basis, &approx)?)
    }
}

/// Localizes each coarse point by maximizing the refinement statistic
/// matching its rank comparison. Ties go to the smallest time.
pub fn refine<S: LayerSource + ?Sized>(
    src: &S,
    scan: &ScanOutcome,
    config: &DetectorConfig,
) -> Result<Refinement> {
    let t_len = src.num_layers();
    let len = config.window;
    let b = config.threshold;
    let lo_valid = len + 1;
    let hi_valid = t_len + 1 - len;
    let mut cache = PbarCache::new(src, len, b);
    let mut out = Vec::with_capacity(scan.coarse.len());
    let mut warnings = Vec::new();
    let mut prev_refined = 0usize;

    for (m, &tc) in scan.coarse.points.iter().enumerate() {
        let before = scan.coarse.ranks[m];
        let after = scan.coarse.ranks[m + 1];
        let mut search_start = None;
        let (case, lo, hi) = if before < after {
            (RefinementCase::RankUp, (tc + 1).saturating_sub(len), tc)
        } else if before > after {
            (RefinementCase::RankDown, tc, tc + len - 1)
        } else {
            let basis = &scan.estimates[m + 1].basis;
            let mut found = None;
            for l in (prev_refined + 1..tc).rev() {
                let w = window_sum(src, l + len - 1, len)?;
                if proj_residual_norm(basis, &w)? > config.proj_threshold() {
                    found = Some(l);
                    break;
                }
            }
            let start = found.unwrap_or_else(|| {
                let fallback = (prev_refined + 1).max((tc + 1).saturating_sub(2 * len));
                warnings.push(format!(
                    "backward search for the change point near {tc} found no trigger; searching from {fallback}"
                ));
                fallback
            });
            search_start = Some(start);
            (RefinementCase::RankEqual, start, tc)
        };
        let lo = lo.max(lo_valid);
        let hi = hi.min(hi_valid);
        let refined = if lo > hi {
            warnings.push(format!(
                "refinement interval for the change point at {tc} is empty after clipping; kept the coarse estimate"
            ));
            tc
        } else {
            let mut best = lo;
            let mut best_val = f64::NEG_INFINITY;
            for l in lo..=hi {
                let v = match case {
                    RefinementCase::RankDown => cache.ref2(l)?,
                    _ => cache.ref1(l)?,
                };
                if v > best_val {
                    best_val = v;
                    best = l;
                }
            }
            best
        };
        out.push(RefinedPoint {
            coarse: tc,
            refined,
            case,
            interval: (lo, hi),
            search_start,
        });
        prev_refined = refined;
    }
    Ok(Refinement {
        refined: ChangePointSet {
            points: out.iter().map(|p| p.refined).collect(),
            ranks: scan.coarse.ranks.clone(),
        },
        points: out,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct DetectionReport {
    pub config: DetectorConfig,
    pub coarse: ChangePointSet,
    pub refined: ChangePointSet,
    pub triggers: Vec<TriggerKind>,
    pub trace: StatTrace,
    pub refinements: Vec<RefinedPoint>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    schema: &'static str,
    config: &'a DetectorConfig,
    coarse_points: &'a [usize],
    refined_points: &'a [usize],
    segment_ranks: &'a [usize],
    cases: Vec<RefinementCase>,
    triggers: &'a [TriggerKind],
    search_intervals: Vec<(usize, usize)>,
    blind_spot: (usize, usize),
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_csv_path: Option<&'a str>,
}

impl DetectionReport {
    /// Layers `[1, 2L]` where no change can be reported.
    pub fn blind_spot(&self) -> (usize, usize) {
        (1, 2 * self.config.window)
    }

    /// `subtrack-report-v1` JSON document.
    pub fn to_json(&self, trace_csv_path: Option<&str>) -> String {
        let doc = ReportJson {
            schema: REPORT_SCHEMA,
            config: &self.config,
            coarse_points: &self.coarse.points,
            refined_points: &self.refined.points,
            segment_ranks: &self.coarse.ranks,
            cases: self.refinements.iter().map(|r| r.case).collect(),
            triggers: &self.triggers,
            search_intervals: self.refinements.iter().map(|r| r.interval).collect(),
            blind_spot: self.blind_spot(),
            warnings: &self.warnings,
            trace_csv_path,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Scan then refine on an arbitrary layer source with a fixed configuration.
pub fn detect_source<S: LayerSource + ?Sized>(
    src: &S,
    config: &DetectorConfig,
) -> Result<DetectionReport> {
    let scan_out = scan(src, config)?;
    let refinement = refine(src, &scan_out, config)?;
    let mut warnings = scan_out.warnings;
    warnings.extend(refinement.warnings);
    Ok(DetectionReport {
        config: config.clone(),
        coarse: scan_out.coarse,
        refined: refinement.refined,
        triggers: scan_out.triggers,
        trace: scan_out.trace,
        refinements: refinement.points,
        warnings,
    })
}

/// Resolves the configuration actually used for `g`: tuned from the data
/// when `config` is absent or has `auto_tune` set.
pub fn resolve_config(g: &GraphSequence, config: Option<DetectorConfig>) -> Result<DetectorConfig> {
    match config {
        Some(c) if !c.auto_tune => Ok(c),
        other => {
            let rho = sequence_sparsity_estimate(g);
            let mut tuned = default_config(g.n(), g.len(), rho);
            if let Some(c) = other {
                tuned.proj_multiplier = c.proj_multiplier;
                tuned.recompute_interval = c.recompute_interval;
            }
            if rho == 0.0 {
                let len = tuned.window;
                return Err(DetectError::DegenerateRank {
                    first: len + 1,
                    last: 2 * len,
                    threshold: tuned.threshold,
                });
            }
            Ok(tuned)
        }
    }
}

/// Full detection on an observed sequence.
pub fn detect(g: &GraphSequence, config: Option<DetectorConfig>) -> Result<DetectionReport> {
    let config = resolve_config(g, config)?;
    if g.len().saturating_mul(g.n() * g.n()) <= TERM_CACHE_LIMIT {
        detect_source(&CachedTerms::new(g), &config)
    } else {
        detect_source(g, &config)
    }
}
