//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; the plain functions behind them are
//! public so they can be tested natively.

use amo_core::amo::{butterfly, gap_labels, IdsTable, Rational, ThetaPolicy};
use amo_core::gauge::{borel_cantelli_tail, TailVerdict};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Keeps a page request from freezing the tab.
pub const MAX_Q: u64 = 89;
pub const MAX_POINTS: usize = 4000;

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// `{lambda, rows: [{p, q, bands: [[lo, hi], ...]}]}` for every `p/q` with `q <= q_max`.
pub fn butterfly_json(lambda: f64, q_max: u64) -> Result<String, String> {
    if q_max == 0 || q_max > MAX_Q {
        return Err(format!("q_max must lie in 1..={MAX_Q}"));
    }
    let rows = butterfly(lambda, q_max).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = rows
        .iter()
        .map(|s| {
            json!({
                "p": s.frequency.p,
                "q": s.frequency.q,
                "bands": s.bands.iter().map(|b| [num(b.0), num(b.1)]).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "lambda": lambda, "rows": rows }).to_string())
}

/// `N(E)` on an even energy grid over the spectrum hull, plus the labelled gaps.
pub fn ids_curve_json(lambda: f64, p: u64, q: u64, points: usize) -> Result<String, String> {
    if q > MAX_Q {
        return Err(format!("q must be at most {MAX_Q}"));
    }
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in 2..={MAX_POINTS}"));
    }
    let r = Rational::new(p, q).map_err(|e| e.to_string())?;
    let t = IdsTable::build(lambda, r, ThetaPolicy::TwoPhase).map_err(|e| e.to_string())?;
    let bands = &t.spectrum.bands;
    let (lo, hi) = (bands[0].0 - 0.25, bands[bands.len() - 1].1 + 0.25);
    let energies: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let ids: Vec<Value> = energies.iter().map(|&e| num(t.n(e))).collect();
    let gaps: Vec<Value> = gap_labels(&t)
        .iter()
        .filter(|g| g.open_in_union)
        .map(|g| json!({ "lo": num(g.lo), "hi": num(g.hi), "ids": num(g.ids_value), "k": g.k }))
        .collect();
    Ok(json!({
        "lambda": lambda,
        "pq": r.to_string(),
        "energies": energies.iter().map(|&e| num(e)).collect::<Vec<_>>(),
        "ids": ids,
        "gaps": gaps,
    })
    .to_string())
}

/// Tail sums at `count` log-spaced starts in `[k_min, k_max]`, with the
/// integral comparison.
pub fn gauge_tail_json(s: f64, eta: f64, k_min: u64, k_max: u64, count: usize) -> Result<String, String> {
    if !(2..=64).contains(&count) || k_min < 2 || k_max <= k_min || k_max > 1_000_000 {
        return Err("need 2 <= k_min < k_max <= 1e6 and 2 <= count <= 64".into());
    }
    let mut ks: Vec<u64> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((k_min as f64).ln() * (1.0 - t) + (k_max as f64).ln() * t).exp().round() as u64
        })
        .collect();
    ks.dedup();
    let mut rows = Vec::new();
    let mut convergent = true;
    for k in ks {
        let t = borel_cantelli_tail(eta, s, k).map_err(|e| e.to_string())?;
        convergent &= t.verdict == TailVerdict::Convergent;
        rows.push(json!({ "K": k, "tail": num(t.value), "closed_form": num(t.closed_form) }));
    }
    Ok(json!({ "s": s, "eta": eta, "convergent": convergent, "rows": rows }).to_string())
}

#[wasm_bindgen]
pub fn butterfly_bands(lambda: f64, q_max: u32) -> Result<String, JsError> {
    butterfly_json(lambda, q_max as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ids_curve(lambda: f64, p: u32, q: u32, points: u32) -> Result<String, JsError> {
    ids_curve_json(lambda, p as u64, q as u64, points as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gauge_tail(s: f64, eta: f64, k_min: u32, k_max: u32, count: u32) -> Result<String, JsError> {
    gauge_tail_json(s, eta, k_min as u64, k_max as u64, count as usize).map_err(|e| JsError::new(&e))
}
