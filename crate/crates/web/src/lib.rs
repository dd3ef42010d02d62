//! WebAssembly bindings for the static demo page in `www/`. Every entry
//! point returns JSON (or raw grey levels) and throws on bad input.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Planted classes and their byte regions.
#[wasm_bindgen]
pub fn classes() -> String {
    demo::classes()
}

/// 28x28 grey levels of session `index` of class `class`.
#[wasm_bindgen(js_name = sessionImage)]
pub fn session_image(class: usize, index: usize, seed: u32) -> Result<Vec<u8>, JsError> {
    demo::session_image(class, index, seed).map_err(js)
}

#[wasm_bindgen(js_name = sessionSummary)]
pub fn session_summary(class: usize, index: usize, seed: u32) -> Result<String, JsError> {
    demo::session_summary(class, index, seed).map_err(js)
}

#[wasm_bindgen(js_name = crossValidate)]
pub fn cross_validate(
    per_class: usize,
    trees: usize,
    folds: usize,
    family_task: bool,
    seed: u32,
) -> Result<String, JsError> {
    demo::cross_validate(per_class, trees, folds, family_task, seed).map_err(js)
}

#[wasm_bindgen(js_name = zeroDay)]
pub fn zero_day(family: &str, per_class: usize, trees: usize, seed: u32) -> Result<String, JsError> {
    demo::zero_day(family, per_class, trees, seed).map_err(js)
}
