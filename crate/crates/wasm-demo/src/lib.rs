//! Browser bindings: pressure curves, escape densities and dimension roots as JSON strings.

use std::sync::Arc;

use serde_json::json;
use wasm_bindgen::prelude::*;

use opendyn::dimension::{bowen_root, BowenOptions};
use opendyn::maps::IntervalMap;
use opendyn::open_system::Hole;
use opendyn::spectral::{escape_spectral, pressure_curve, EigenOptions, Grid};

/// Largest grid accepted from the page.
pub const MAX_GRID: usize = 1 << 14;

fn setup(map: &str, hole: Option<&str>, grid: usize) -> Result<(IntervalMap, Hole, Arc<Grid>), String> {
    if grid == 0 || grid > MAX_GRID {
        return Err(format!("grid must lie in 1..={MAX_GRID}"));
    }
    let f = IntervalMap::parse_spec(map, None).map_err(|e| e.to_string())?;
    let h = Hole::parse(hole.unwrap_or("none")).map_err(|e| e.to_string())?;
    let g = Grid::for_system(&f, (!h.is_empty()).then_some(&h), grid, &[]).map_err(|e| e.to_string())?;
    Ok((f, h, Arc::new(g)))
}

/// `{"samples": [[t, p_t], ...]}` on `samples` evenly spaced values of `t`.
pub fn pressure_json(map: &str, t_lo: f64, t_hi: f64, samples: usize, grid: usize) -> Result<String, String> {
    if samples < 2 || !(t_lo < t_hi) {
        return Err("need t_lo < t_hi and at least two samples".into());
    }
    let (f, _, g) = setup(map, None, grid)?;
    let ts: Vec<f64> = (0..samples)
        .map(|k| t_lo + (t_hi - t_lo) * k as f64 / (samples - 1) as f64)
        .collect();
    let curve = pressure_curve(&f, &ts, g, &EigenOptions::default()).map_err(|e| e.to_string())?;
    Ok(json!({ "samples": curve.samples, "monotone": curve.monotone }).to_string())
}

/// Escape rate with the conditionally invariant density on the grid cells.
pub fn escape_json(map: &str, hole: &str, t: f64, grid: usize) -> Result<String, String> {
    let (f, h, g) = setup(map, Some(hole), grid)?;
    if h.is_empty() {
        return Err("the hole is empty".into());
    }
    let (closed, p) = escape_spectral(&f, &h, t, Arc::clone(&g), &EigenOptions::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "p_t": closed.pressure(),
        "lambda": p.lambda,
        "escape": if p.escape_rate.is_finite() { json!(p.escape_rate) } else { json!("inf") },
        "breakpoints": g.breakpoints(),
        "density": p.density,
    })
    .to_string())
}

/// Zero of the punctured pressure with the sampled curve.
pub fn bowen_json(map: &str, hole: &str, grid: usize) -> Result<String, String> {
    let (f, h, g) = setup(map, Some(hole), grid)?;
    let opts = BowenOptions {
        tol: 1e-6,
        ..BowenOptions::default()
    };
    let r = bowen_root(&f, &h, g, &opts, &EigenOptions::default()).map_err(|e| e.to_string())?;
    Ok(json!({ "t_star": r.t_star, "bracket": r.bracket, "curve": r.curve }).to_string())
}

#[wasm_bindgen]
pub fn pressure(map: &str, t_lo: f64, t_hi: f64, samples: usize, grid: usize) -> Result<String, JsError> {
    pressure_json(map, t_lo, t_hi, samples, grid).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn escape(map: &str, hole: &str, t: f64, grid: usize) -> Result<String, JsError> {
    escape_json(map, hole, t, grid).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bowen(map: &str, hole: &str, grid: usize) -> Result<String, JsError> {
    bowen_json(map, hole, grid).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn pressure_of_doubling() {
        let v = parse(&pressure_json("doubling", 0.5, 1.5, 3, 256).unwrap());
        let p = v["samples"][0][1].as_f64().unwrap();
        assert!((p - 0.5 * std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn middle_third_escape() {
        let v = parse(&escape_json("tripling", "(1/3,2/3)", 1.0, 243).unwrap());
        assert!((v["escape"].as_f64().unwrap() - 1.5f64.ln()).abs() < 1e-10);
        assert_eq!(v["density"].as_array().unwrap().len() + 1, v["breakpoints"].as_array().unwrap().len());
    }

    #[test]
    fn middle_third_dimension() {
        let v = parse(&bowen_json("tripling", "(1/3,2/3)", 243).unwrap());
        assert!((v["t_star"].as_f64().unwrap() - 2f64.ln() / 3f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(escape_json("tripling", "none", 1.0, 243).is_err());
        assert!(pressure_json("nope", 0.5, 1.5, 3, 256).is_err());
        assert!(bowen_json("doubling", "(0,1/4)", MAX_GRID + 1).is_err());
    }
}
