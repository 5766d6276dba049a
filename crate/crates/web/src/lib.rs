//! Browser bindings. Each export takes plain numbers or strings and returns
//! a JSON string, so the page needs no generated type glue.

use dena::discovery::{DetectionConfig, Detector, MESSAGE};
use dena::measure::PathId;
use dena::netsim::experiments::{experiment_fn, experiment_switch};
use dena::netsim::scenario::path_name;
use dena::netsim::{RunOptions, Scenario};
use dena::signal::{parse_signals, signals_to_string};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct DetectResult {
    pub message: String,
    pub symbols: usize,
    /// Position (0-based) of the symbol at which detection fired.
    pub fired_at: Option<usize>,
    pub distance: Option<usize>,
    pub error: Option<String>,
}

/// Feeds a typed symbol string through a fresh receiver.
pub fn detect(signals: &str, threshold: usize, prefilter: bool) -> DetectResult {
    let message = signals_to_string(&MESSAGE);
    let cfg = DetectionConfig::new(threshold, prefilter);
    let fail = |e: String| DetectResult {
        message: message.clone(),
        symbols: 0,
        fired_at: None,
        distance: None,
        error: Some(e),
    };
    if let Err(e) = cfg.validate() {
        return fail(e.to_string());
    }
    let Some(syms) = parse_signals(signals) else {
        return fail("only A, B and C are allowed".into());
    };
    let mut det = Detector::default();
    let hit = syms
        .iter()
        .enumerate()
        .find_map(|(i, s)| det.push(*s, &cfg).map(|d| (i, d)));
    DetectResult {
        message: message.clone(),
        symbols: syms.len(),
        fired_at: hit.map(|h| h.0),
        distance: hit.map(|h| h.1),
        error: None,
    }
}

#[derive(Debug, Serialize, PartialEq)]
pub struct FnPoint {
    pub loss: f64,
    pub single: f64,
    pub all: f64,
}

/// False-negative rates for loss 0..=10% in 1% steps.
pub fn fn_curve(threshold: usize, prefilter: bool, trials: u64, seed: u64) -> Vec<FnPoint> {
    let losses: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
    let cfg = DetectionConfig::new(threshold, prefilter);
    if cfg.validate().is_err() {
        return Vec::new();
    }
    experiment_fn(&losses, &cfg, trials.max(1), seed)
        .into_iter()
        .map(|r| FnPoint {
            loss: r.loss,
            single: r.fn_single(),
            all: r.fn_all(),
        })
        .collect()
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SwitchResult {
    pub to_fia_ms: Option<u64>,
    pub to_ip_ms: Option<u64>,
    pub switches: usize,
    pub sample_ratio: Option<f64>,
    /// Bytes per second on each path, in path order.
    pub paths: Vec<String>,
    pub throughput: Vec<Vec<u64>>,
    pub error: Option<String>,
}

/// The bundled switching scenario with the injected IP loss replaced.
pub fn switch_run(loss: f64, seed: u64) -> SwitchResult {
    let mut sc = Scenario::loss_switch();
    for m in sc.schedule.iter_mut() {
        if m.loss_prob.is_some_and(|l| l > 0.0) {
            m.loss_prob = Some(loss);
        }
    }
    let opts = RunOptions {
        record_events: false,
        record_channel_log: false,
    };
    let paths = [PathId::Ip, PathId::Fia(0)];
    match sc.validate().and_then(|_| experiment_switch(&sc, seed, opts)) {
        Ok(r) => {
            let rows = r.trace.throughput_rows(&paths);
            let throughput = paths
                .iter()
                .map(|p| rows.iter().filter(|row| row.1 == *p).map(|row| row.2).collect())
                .collect();
            SwitchResult {
                to_fia_ms: r.to_fia_ms,
                to_ip_ms: r.to_ip_ms,
                switches: r.switches,
                sample_ratio: r.sample_ratio,
                paths: paths.iter().map(|p| path_name(*p)).collect(),
                throughput,
                error: None,
            }
        }
        Err(e) => SwitchResult {
            to_fia_ms: None,
            to_ip_ms: None,
            switches: 0,
            sample_ratio: None,
            paths: Vec::new(),
            throughput: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

#[wasm_bindgen(js_name = detect)]
pub fn detect_js(signals: &str, threshold: usize, prefilter: bool) -> String {
    json(&detect(signals, threshold, prefilter))
}

#[wasm_bindgen(js_name = fnCurve)]
pub fn fn_curve_js(threshold: usize, prefilter: bool, trials: u32, seed: u32) -> String {
    json(&fn_curve(threshold, prefilter, trials as u64, seed as u64))
}

#[wasm_bindgen(js_name = switchRun)]
pub fn switch_run_js(loss: f64, seed: u32) -> String {
    json(&switch_run(loss, seed as u64))
}
