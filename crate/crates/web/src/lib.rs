//! Browser bindings. Each export returns a JSON string; the plain functions
//! behind them are usable (and tested) natively.

use decay_ledger::config::presets;
use decay_ledger::dedup::{normalized_levenshtein, DEFAULT_THRESHOLD};
use decay_ledger::ledger::{average_rate, bound_warning, decile_origins};
use decay_ledger::svg::{bar_chart, line_chart, Series};
use decay_ledger::{
    build_prefix, composition_report, exact_forgetting_time, forgetting_curve, forgetting_time_bound, DecayPrefix, Error,
    Result, RunConfig, ScheduleSpec,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Longest constant-rate run simulated for an exact forgetting time.
pub const MAX_EXACT_STEPS: u64 = 20_000_000;

fn run_from_params(schedule: &str, steps: u64, warmup: u64, peak_lr: f64, final_lr: f64, weight_decay: f64) -> Result<RunConfig> {
    let spec = match schedule {
        "constant" => ScheduleSpec::constant(peak_lr, steps),
        "cosine" => ScheduleSpec::cosine(warmup, peak_lr, final_lr, steps),
        "linear" => ScheduleSpec::linear_decay(warmup, peak_lr, final_lr, steps),
        other => return Err(Error::Argument(format!("unknown schedule {other:?}"))),
    };
    let run = RunConfig::new("custom", weight_decay, spec);
    run.validate()?;
    Ok(run)
}

/// Decile forgetting curves (about `points` samples each), the composition
/// of the final weights, and SVG charts of both.
pub fn analyze(run: &RunConfig, points: u64) -> Result<Value> {
    let prefix = build_prefix(run)?;
    let total = prefix.total_steps();
    let stride = (total / points.max(2)).max(1);
    let curves = decile_origins(total)
        .into_iter()
        .map(|o| forgetting_curve(&prefix, o, stride))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|c| (format!("from step {}", c.origin_step), c.samples.iter().map(|&(t, w)| (t as f64, w)).collect()))
        .collect();
    let series: Vec<Series> = pts.iter().map(|(n, p)| Series { name: n, points: p }).collect();
    let mut out = json!({
        "name": run.name,
        "total_steps": total,
        "weight_decay": run.weight_decay,
        "curves": curves.iter().map(|c| json!({"origin": c.origin_step, "final_weight": c.final_weight()})).collect::<Vec<_>>(),
        "curves_svg": line_chart(&format!("{}: surviving weight", run.name), "step", "weight", &series),
    });
    if total >= 10 {
        let r = composition_report(&prefix)?;
        let bars: Vec<(String, f64)> =
            r.decile_fractions.iter().enumerate().map(|(i, f)| (format!("{}-{}%", i * 10, (i + 1) * 10), *f)).collect();
        out["composition"] = json!({"deciles": r.decile_fractions.to_vec(), "init_share": r.init_share});
        out["composition_svg"] = json!(bar_chart("share of the final weights", "share", &bars));
    }
    Ok(out)
}

pub fn analyze_preset_json(name: &str, points: u64) -> Result<String> {
    Ok(analyze(&presets::load(name)?, points)?.to_string())
}

pub fn analyze_custom_json(
    schedule: &str,
    steps: u64,
    warmup: u64,
    peak_lr: f64,
    final_lr: f64,
    weight_decay: f64,
    points: u64,
) -> Result<String> {
    let run = run_from_params(schedule, steps, warmup, peak_lr, final_lr, weight_decay)?;
    Ok(analyze(&run, points)?.to_string())
}

/// Bound and exact forgetting time for a constant learning rate from the
/// initial weights.
pub fn forgetting_times(gamma: f64, lr: f64, epsilon: f64) -> Result<Value> {
    let bound = forgetting_time_bound(gamma, lr, epsilon)?;
    let horizon = bound.saturating_mul(2).max(16);
    let exact = if horizon <= MAX_EXACT_STEPS {
        let prefix = DecayPrefix::from_rates("constant", gamma, vec![lr; horizon as usize])?;
        debug_assert!((average_rate(&prefix, 0, horizon)? - lr).abs() <= 1e-12 * lr);
        exact_forgetting_time(&prefix, 0, epsilon)?
    } else {
        None
    };
    Ok(json!({
        "bound": bound,
        "exact": exact,
        "warning": bound_warning(gamma, lr),
    }))
}

pub fn forgetting_times_json(gamma: f64, lr: f64, epsilon: f64) -> Result<String> {
    Ok(forgetting_times(gamma, lr, epsilon)?.to_string())
}

pub fn question_distance_json(a: &str, b: &str) -> String {
    let d = normalized_levenshtein(a, b);
    json!({"distance": d, "duplicate": d <= DEFAULT_THRESHOLD, "threshold": DEFAULT_THRESHOLD}).to_string()
}

fn js(r: Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = analyzePreset)]
pub fn analyze_preset(name: &str, points: u32) -> Result<String, JsError> {
    js(analyze_preset_json(name, points as u64))
}

#[wasm_bindgen(js_name = analyzeCustom)]
pub fn analyze_custom(
    schedule: &str,
    steps: u32,
    warmup: u32,
    peak_lr: f64,
    final_lr: f64,
    weight_decay: f64,
    points: u32,
) -> Result<String, JsError> {
    js(analyze_custom_json(schedule, steps as u64, warmup as u64, peak_lr, final_lr, weight_decay, points as u64))
}

#[wasm_bindgen(js_name = forgettingTimes)]
pub fn forgetting_times_js(gamma: f64, lr: f64, epsilon: f64) -> Result<String, JsError> {
    js(forgetting_times_json(gamma, lr, epsilon))
}

#[wasm_bindgen(js_name = questionDistance)]
pub fn question_distance(a: &str, b: &str) -> String {
    question_distance_json(a, b)
}

#[wasm_bindgen(js_name = presetNames)]
pub fn preset_names() -> String {
    json!(presets::NAMES).to_string()
}
