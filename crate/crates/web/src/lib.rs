//! Browser demo: T-maze policy table, identity check and gridworld episodes.
//!
//! Each export returns a JSON string; the plain functions in [`demo`] do the
//! work so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(r: efe_core::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Policy table for the T-maze with the given reward probability and
/// final-step preference for the rewarding arm.
#[wasm_bindgen]
pub fn tmaze_plan(
    reward_probability: f64,
    final_preference: f64,
    mode: &str,
    variant: &str,
) -> Result<String, JsError> {
    js(demo::tmaze_plan(
        reward_probability,
        final_preference,
        mode,
        variant,
    ))
}

/// Both sides of the free-energy decomposition on a random model.
#[wasm_bindgen]
pub fn theorem_check(seed: u32, corrupt: bool) -> Result<String, JsError> {
    js(demo::theorem_check(seed as u64, corrupt))
}

/// One gridworld episode with the first-step policy table.
#[wasm_bindgen]
pub fn gridworld_episode(
    width: u32,
    height: u32,
    slip_prob: f64,
    goal: u32,
    horizon: u32,
    mode: &str,
    seed: u32,
) -> Result<String, JsError> {
    let spec = efe_core::envs::GridSpec {
        width: width as usize,
        height: height as usize,
        slip_prob,
        start: 0,
        goal: goal as usize,
        horizon: horizon as usize,
    };
    js(demo::gridworld_episode(&spec, mode, seed as u64))
}
