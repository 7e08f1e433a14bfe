//! Change-point detection for dynamic networks whose expected adjacency
//! matrices live in a piecewise-constant low-rank subspace.
//!
//! The detector scans a sequence of undirected graphs with two spectral
//! statistics, reports coarse change points, then refines each of them with
//! a rank-aware local search.

pub mod detector;
pub mod evaluation;
pub mod generator;
pub mod netdata;
pub mod spectral;
pub mod statistics;

#[cfg(feature = "cli")]
pub mod cli;

pub use detector::{
    detect, detect_source, DetectError, DetectionReport, DetectorConfig, RefinementCase,
};
pub use evaluation::{count_error, hausdorff};
pub use generator::{build_scenario, build_toy, GroundTruth, ScenarioParams};
pub use netdata::{parse_graph_sequence, GraphSequence, SegmentModel};
pub use spectral::{SubspaceBasis, SymMatrix};
pub use statistics::LayerSource;
