//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string so the page needs no bindings beyond
//! `JSON.parse`.

use peelperc::exploration::{exact_theta_site_tri2, run_trial, trace, valid_pairs, Limits};
use peelperc::lattice::{enumerate_cases, peel_weight, threshold};
use peelperc::rng::trial_rng;
use peelperc::stats::binomial_se;
use peelperc::{ExactValue, MapType, PercoError, PercolationModel};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Cap on the work a single call may request from the page.
const MAX_WORK: u64 = 200_000_000;

fn reply(result: Result<Value, PercoError>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn too_much(what: &str) -> PercoError {
    PercoError::InvalidArgument(format!("{what} is too large for the browser demo"))
}

/// Exact peeling probabilities of `map` with jump sizes up to `k_max`,
/// together with its thresholds.
#[wasm_bindgen]
pub fn peel_law(map: &str, k_max: u32) -> String {
    reply((|| {
        let map: MapType = map.parse()?;
        if k_max > 200 {
            return Err(too_much("k_max"));
        }
        let mut cases = Vec::new();
        for case in enumerate_cases(map, k_max as u64) {
            let w = peel_weight(map, &case)?;
            cases.push(json!({
                "case": case.tag(),
                "k": case.size_label(),
                "exact": w.to_string(),
                "value": w.to_f64(),
            }));
        }
        let thresholds: Vec<Value> = PercolationModel::ALL
            .iter()
            .map(|&model| match threshold(map, model) {
                Ok(pc) => json!({ "model": model.name(), "exact": pc.to_string(), "value": pc.to_f64() }),
                Err(_) => json!({ "model": model.name(), "exact": "unknown (open problem)", "value": null }),
            })
            .collect();
        Ok(json!({ "map": map.name(), "cases": cases, "thresholds": thresholds }))
    })())
}

/// One exploration: the boundary count after every step and how it ended.
#[wasm_bindgen]
pub fn exploration_path(
    map: &str,
    model: &str,
    p: f64,
    max_steps: u32,
    escape_height: u32,
    seed: u64,
) -> String {
    reply((|| {
        let map: MapType = map.parse()?;
        let model: PercolationModel = model.parse()?;
        if max_steps == 0 || escape_height == 0 {
            return Err(PercoError::InvalidArgument(
                "limits must be positive".into(),
            ));
        }
        if max_steps > 1_000_000 {
            return Err(too_much("max_steps"));
        }
        let path = trace(
            model,
            map,
            p,
            max_steps as u64,
            escape_height as u64,
            &mut trial_rng(seed, 0),
        )?;
        let last = path.last().expect("path starts with the initial state");
        let s: Vec<u64> = path.iter().map(|st| st.s).collect();
        Ok(json!({
            "s": s,
            "status": last.status,
            "steps": last.steps,
            "p_c": threshold(map, model)?.to_f64(),
        }))
    })())
}

/// Escape frequencies of site percolation on type-2 triangulations at
/// `points` equally spaced values of p in `[lo, hi]`, against the exact
/// survival probability.
#[wasm_bindgen]
pub fn theta_curve(
    lo: f64,
    hi: f64,
    points: u32,
    trials: u32,
    escape_height: u32,
    seed: u64,
) -> String {
    reply((|| {
        if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) || points < 2 || trials == 0 {
            return Err(PercoError::InvalidArgument(
                "need 0 <= lo <= hi <= 1, at least 2 points and 1 trial".into(),
            ));
        }
        let limits = Limits {
            max_steps: 1_000_000,
            escape_height: escape_height.max(1) as u64,
            ..Limits::default()
        };
        if points as u64 * trials as u64 * limits.escape_height > MAX_WORK {
            return Err(too_much("points * trials * escape_height"));
        }
        let mut rows = Vec::new();
        for i in 0..points {
            let p = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            let key = seed ^ ((i as u64) << 40);
            let mut survived = 0u64;
            for t in 0..trials as u64 {
                let rec = run_trial(
                    PercolationModel::Site,
                    MapType::Tri2,
                    p,
                    &limits,
                    &mut trial_rng(key, t),
                )?;
                survived += rec.survived as u64;
            }
            let exact =
                exact_theta_site_tri2(&ExactValue::parse_rational(&p.to_string())?)?.to_f64();
            rows.push(json!({
                "p": p,
                "theta_mc": survived as f64 / trials as f64,
                "stderr": binomial_se(survived, trials as u64),
                "theta_exact": exact,
            }));
        }
        Ok(json!({ "points": rows }))
    })())
}

/// Every supported (map, model) pair, for populating the page's menus.
#[wasm_bindgen]
pub fn models() -> String {
    let pairs: Vec<Value> = valid_pairs()
        .into_iter()
        .map(|(m, d)| json!([m.name(), d.name()]))
        .collect();
    json!(pairs).to_string()
}
