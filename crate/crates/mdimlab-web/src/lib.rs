//! Browser bindings for the demo page. Each export takes plain numbers or a
//! JSON system spec and returns a JSON string the page draws from.

use mdimlab::bowen::{box_counts, cantor_samples, mdim_estimate, Counting, EpsilonSchedule};
use mdimlab::catalog::SystemSpec;
use mdimlab::horseshoe::{detect_blocks, horseshoe_mdim_formula};
use mdimlab::interval::make_phi_sr;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub type Result<T> = std::result::Result<T, String>;

fn err(e: mdimlab::Error) -> String {
    e.to_string()
}

/// Graph of an interval system sampled at `samples` points, with its block edges.
pub fn map_graph(spec: &str, samples: usize) -> Result<Value> {
    if !(2..=20_000).contains(&samples) {
        return Err(format!("samples must be in 2..=20000, got {samples}"));
    }
    let sys = SystemSpec::parse(spec).and_then(|s| s.interval()).map_err(err)?;
    let (lo, hi) = sys.ambient();
    let mut points = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
        points.push([x, sys.eval(x).map_err(err)?]);
    }
    let blocks: Vec<[f64; 2]> = sys.blocks().iter().map(|b| [b.spec.lo, b.spec.hi]).collect();
    Ok(json!({ "label": sys.label(), "ambient": [lo, hi], "points": points, "blocks": blocks }))
}

/// Limit-formula terms for φ_{s,r} against `s/(r+s)`, plus the counting
/// estimate when `k` is small enough for it to run quickly.
pub fn mdim_convergence(s: u32, r: f64, k: usize) -> Result<Value> {
    if !(1..=400).contains(&k) {
        return Err(format!("K must be in 1..=400, got {k}"));
    }
    let sys = make_phi_sr(s, r, k).map_err(err)?;
    let formula = horseshoe_mdim_formula(&detect_blocks(&sys).map_err(err)?, 1).map_err(err)?;
    let counting = if (5..=24).contains(&k) {
        let schedule = EpsilonSchedule::block_lengths(&sys).map_err(err)?;
        let est = mdim_estimate(&sys, &schedule, (4, 10), Counting::BranchFormula).map_err(err)?;
        json!({ "lower": est.lower, "upper": est.upper, "per_epsilon": est.per_epsilon })
    } else {
        Value::Null
    };
    Ok(json!({
        "limit": s as f64 / (r + s as f64),
        "terms": formula.sequence,
        "lower": formula.lower,
        "upper": formula.upper,
        "counting": counting,
    }))
}

/// Occupied ternary boxes of the middle-third Cantor set at scales `3^{-1..depth}`.
pub fn cantor_box_count(depth: usize) -> Result<Value> {
    if !(1..=16).contains(&depth) {
        return Err(format!("depth must be in 1..=16, got {depth}"));
    }
    let schedule = EpsilonSchedule::ternary(depth as u32).map_err(err)?;
    let counts = box_counts(&cantor_samples(depth), &schedule).map_err(err)?;
    let rows: Vec<Value> = schedule
        .values()
        .iter()
        .zip(&counts)
        .map(|(&e, &n)| json!({ "eps": e, "count": n, "ratio": (n as f64).ln() / e.ln().abs() }))
        .collect();
    Ok(json!({ "target": 2f64.ln() / 3f64.ln(), "scales": rows }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = mapGraph)]
pub fn map_graph_js(spec: &str, samples: usize) -> std::result::Result<String, JsValue> {
    to_js(map_graph(spec, samples))
}

#[wasm_bindgen(js_name = mdimConvergence)]
pub fn mdim_convergence_js(s: u32, r: f64, k: usize) -> std::result::Result<String, JsValue> {
    to_js(mdim_convergence(s, r, k))
}

#[wasm_bindgen(js_name = cantorBoxCount)]
pub fn cantor_box_count_js(depth: usize) -> std::result::Result<String, JsValue> {
    to_js(cantor_box_count(depth))
}
