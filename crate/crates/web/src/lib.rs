//! Browser bindings for the demo page. Each export returns a JSON string so
//! the page needs no generated type glue beyond `wasm-bindgen`.

use serde::Serialize;
use subtrack::detector::{detect, resolve_config, DetectorConfig};
use subtrack::evaluation::{hausdorff, ScenarioId};
use subtrack::generator::{build_scenario, build_toy};
use subtrack::spectral::eigenvalues_desc;
use subtrack::statistics::{window_sum, CachedTerms};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct TracePoint {
    l: usize,
    pi_proj: f64,
    pi_eig: f64,
}

#[derive(Serialize)]
struct TraceView {
    n: usize,
    #[serde(rename = "T")]
    t_len: usize,
    window: usize,
    threshold: f64,
    proj_threshold: f64,
    truth: Vec<usize>,
    coarse: Vec<usize>,
    refined: Vec<usize>,
    trace: Vec<TracePoint>,
}

#[derive(Serialize)]
struct DetectView {
    scenario: String,
    param: f64,
    truth: Vec<usize>,
    coarse: Vec<usize>,
    refined: Vec<usize>,
    segment_ranks: Vec<usize>,
    coarse_hausdorff: f64,
    refined_hausdorff: f64,
    window: usize,
    threshold: f64,
}

#[derive(Serialize)]
struct SpectrumView {
    first: usize,
    last: usize,
    threshold: f64,
    eigenvalues: Vec<f64>,
    retained: usize,
}

#[derive(Serialize)]
struct ErrorView {
    error: String,
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&ErrorView { error }),
    }
    .expect("view serializes")
}

/// Statistic trace of the four-segment toy sequence for one seed.
pub fn toy_trace_json(seed: u64, window: usize) -> String {
    to_json((|| {
        let (truth, g) = build_toy(seed).map_err(|e| e.to_string())?;
        let mut config = resolve_config(&g, None).map_err(|e| e.to_string())?;
        if window > 0 {
            config = DetectorConfig {
                window,
                auto_tune: false,
                ..config
            };
        }
        let report = detect(&g, Some(config.clone())).map_err(|e| e.to_string())?;
        Ok(TraceView {
            n: g.n(),
            t_len: g.len(),
            window: config.window,
            threshold: config.threshold,
            proj_threshold: config.proj_threshold(),
            truth: truth.change_points().to_vec(),
            coarse: report.coarse.points,
            refined: report.refined.points,
            trace: report
                .trace
                .records()
                .iter()
                .map(|r| TracePoint {
                    l: r.l,
                    pi_proj: r.pi_proj,
                    pi_eig: r.pi_eig,
                })
                .collect(),
        })
    })())
}

/// Generates one scenario sequence and runs the auto-tuned detector.
pub fn detect_scenario_json(
    scenario: &str,
    param: f64,
    n: usize,
    t_len: usize,
    seed: u64,
) -> String {
    to_json((|| {
        let id =
            ScenarioId::parse(scenario).ok_or_else(|| format!("unknown scenario `{scenario}`"))?;
        let params = id.params(n, t_len, param, seed);
        let (truth, g) = build_scenario(&params).map_err(|e| e.to_string())?;
        let report = detect(&g, None).map_err(|e| e.to_string())?;
        let points = truth.change_points();
        Ok(DetectView {
            scenario: id.name().to_string(),
            param,
            truth: points.to_vec(),
            coarse_hausdorff: hausdorff(&report.coarse.points, points, t_len).value,
            refined_hausdorff: hausdorff(&report.refined.points, points, t_len).value,
            coarse: report.coarse.points,
            refined: report.refined.points,
            segment_ranks: report.coarse.ranks,
            window: report.config.window,
            threshold: report.config.threshold,
        })
    })())
}

/// Eigenvalues of the toy window ending at `last` against the threshold.
pub fn window_spectrum_json(seed: u64, last: usize, window: usize) -> String {
    to_json((|| {
        let (_, g) = build_toy(seed).map_err(|e| e.to_string())?;
        let config = resolve_config(&g, None).map_err(|e| e.to_string())?;
        let window = if window == 0 { config.window } else { window };
        let terms = CachedTerms::new(&g);
        let sum = window_sum(&terms, last, window).map_err(|e| e.to_string())?;
        let eigenvalues = eigenvalues_desc(&sum).map_err(|e| e.to_string())?;
        let retained = eigenvalues
            .iter()
            .filter(|&&v| v > config.threshold)
            .count();
        Ok(SpectrumView {
            first: last + 1 - window,
            last,
            threshold: config.threshold,
            eigenvalues: eigenvalues.into_iter().take(8).collect(),
            retained,
        })
    })())
}

#[wasm_bindgen]
pub fn toy_trace(seed: u32, window: u32) -> String {
    toy_trace_json(u64::from(seed), window as usize)
}

#[wasm_bindgen]
pub fn detect_scenario(scenario: &str, param: f64, n: u32, t_len: u32, seed: u32) -> String {
    detect_scenario_json(scenario, param, n as usize, t_len as usize, u64::from(seed))
}

#[wasm_bindgen]
pub fn window_spectrum(seed: u32, last: u32, window: u32) -> String {
    window_spectrum_json(u64::from(seed), last as usize, window as usize)
}
