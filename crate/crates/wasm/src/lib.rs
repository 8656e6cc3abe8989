//! Browser bindings. Every entry point takes plain numbers and returns a JSON document, so
//! the page needs no generated type definitions.
//!
//! The `*_json` functions hold the logic and run natively as well; the exported wrappers only
//! turn their errors into JavaScript exceptions.

use dclab::fields::Grid;
use dclab::geometry::{ap_refinement, DomainSpec, PowerWeight};
use dclab::inequalities::{check, Ensemble, InequalityCase, InequalityName, InequalityParams};
use dclab::solver::{solve, weak_form_check, Forcing, ForcingSpec, ModelParams, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; a solve at this size takes seconds in a browser.
pub const MAX_CELLS: usize = 16;
/// Finest dyadic level for the A_p scan.
pub const MAX_LEVEL: usize = 6;

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ApScan {
    alpha: f64,
    p: f64,
    levels: Vec<usize>,
    constants: Vec<f64>,
}

/// A_p constant of `d^alpha` on the unit cube at levels `0..=max_level`.
pub fn ap_scan_json(alpha: f64, p: f64, max_level: usize) -> Result<String, String> {
    if max_level > MAX_LEVEL {
        return Err(format!("levels above {MAX_LEVEL} are too slow for the page"));
    }
    let levels: Vec<usize> = (0..=max_level).collect();
    let w = PowerWeight::new(alpha, DomainSpec::unit_cube());
    let constants = ap_refinement(&w, p, &levels, 2).map_err(|e| e.to_string())?;
    to_json(&ApScan { alpha, p, levels, constants })
}

fn grid(cells: usize) -> Result<Grid, String> {
    if cells > MAX_CELLS {
        return Err(format!("at most {MAX_CELLS} cells per axis"));
    }
    Grid::unit_cube(cells).map_err(|e| e.to_string())
}

/// Ratios lhs/rhs of one inequality over a random ensemble. `name` is the snake_case
/// inequality name; `alpha` is used by the weighted cases.
pub fn inequality_json(
    name: &str,
    p: f64,
    alpha: f64,
    cells: usize,
    samples: usize,
    seed: u64,
    hypothesis_demo: bool,
) -> Result<String, String> {
    let name: InequalityName =
        serde_json::from_value(serde_json::Value::String(name.into())).map_err(|_| format!("unknown inequality {name}"))?;
    let case = InequalityCase {
        name,
        params: InequalityParams { alpha: Some(alpha), ..InequalityParams::p(p) },
        ensemble: Ensemble { samples, seed },
        hypothesis_demo,
    };
    case.validate().map_err(|e| e.to_string())?;
    let report = check(&case, &grid(cells)?).map_err(|e| e.to_string())?;
    to_json(&report)
}

#[derive(Serialize)]
struct SolveDemo {
    converged: bool,
    iterations: usize,
    residual_history: Vec<f64>,
    regularization_share: f64,
    energy_constant: Option<f64>,
    weak_form_max: f64,
    velocity_max: f64,
}

/// Regularized degenerate solve with a random potential forcing.
pub fn solve_json(cells: usize, p: f64, alpha: f64, eps: f64, scale: f64, seed: u64) -> Result<String, String> {
    let grid = grid(cells)?;
    let params = ModelParams::degenerate(p, alpha, eps);
    params.validate().map_err(|e| e.to_string())?;
    let forcing = Forcing::resolve(&ForcingSpec::Potential { scale, seed }, &grid).map_err(|e| e.to_string())?;
    let rep = solve(&params, &forcing, &grid, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let weak = weak_form_check(&params, &forcing, &grid, &rep.velocity, 5, seed).map_err(|e| e.to_string())?;
    let s = rep.summary;
    to_json(&SolveDemo {
        converged: s.converged,
        iterations: s.iterations,
        residual_history: s.residual_history,
        regularization_share: s.ledger.regularization_share,
        energy_constant: s.ledger.constant,
        weak_form_max: weak.max_relative,
        velocity_max: rep.velocity.max_abs(),
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = apScan)]
pub fn ap_scan(alpha: f64, p: f64, max_level: usize) -> Result<String, JsError> {
    js(ap_scan_json(alpha, p, max_level))
}

#[wasm_bindgen(js_name = inequalityRatios)]
pub fn inequality_ratios(
    name: &str,
    p: f64,
    alpha: f64,
    cells: usize,
    samples: usize,
    seed: u32,
    hypothesis_demo: bool,
) -> Result<String, JsError> {
    js(inequality_json(name, p, alpha, cells, samples, seed as u64, hypothesis_demo))
}

#[wasm_bindgen(js_name = solveDemo)]
pub fn solve_demo(cells: usize, p: f64, alpha: f64, eps: f64, scale: f64, seed: u32) -> Result<String, JsError> {
    js(solve_json(cells, p, alpha, eps, scale, seed as u64))
}
