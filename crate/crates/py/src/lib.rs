//! Python module `scenegen`. Scenes cross the boundary as scene JSON text.

use std::sync::Arc;

use scenegen_core::analysis::analyze;
use scenegen_core::codegen::{emit_csharp, emit_svg};
use scenegen_core::engine::verify;
use scenegen_core::evolve::{MinHashParams, MinHashSignature};
use scenegen_core::llm::{Gateway, ScriptedBackend};
use scenegen_core::manifest::sub_seed;
use scenegen_core::pipeline::{generate, GenerateOptions};
use scenegen_core::scene::ObjectLibrary;
use scenegen_core::scene_json;

/// Scene JSON for `description`, produced with the scripted backend.
pub fn generate_scene(description: &str, seed: u64, max_iters: u32) -> Result<(String, bool), String> {
    let library = ObjectLibrary::default();
    let backend = ScriptedBackend::new(sub_seed(seed, "scripted"), library.clone());
    let gateway = Gateway::new(Arc::new(backend));
    let opts = GenerateOptions {
        max_iters,
        ..GenerateOptions::default()
    };
    let out = generate(description, &library, &gateway, &opts).map_err(|e| e.to_string())?;
    Ok((scene_json::emit(&out.scene), out.report.ok))
}

/// Verification report JSON for a scene file's text.
pub fn verify_scene(scene_text: &str, description: Option<&str>) -> Result<String, String> {
    let scene = scene_json::parse(scene_text).map_err(|e| e.to_string())?;
    let text = description.unwrap_or(&scene.source_description);
    let analysis = analyze(text, &ObjectLibrary::default());
    Ok(verify(&scene, &analysis.layout_for(&scene.objects)).to_json())
}

pub fn scene_to_csharp(scene_text: &str) -> Result<String, String> {
    let scene = scene_json::parse(scene_text).map_err(|e| e.to_string())?;
    Ok(emit_csharp(&scene, &ObjectLibrary::default()))
}

pub fn scene_to_svg(scene_text: &str, scale: f64) -> Result<String, String> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err("scale must be positive".into());
    }
    let scene = scene_json::parse(scene_text).map_err(|e| e.to_string())?;
    Ok(emit_svg(&scene, scale))
}

pub fn text_similarity(a: &str, b: &str) -> f64 {
    let p = MinHashParams::default();
    MinHashSignature::of_text(a, p).similarity(&MinHashSignature::of_text(b, p))
}

#[pyo3::pymodule]
mod scenegen {
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;

    fn value_error(e: String) -> PyErr {
        PyValueError::new_err(e)
    }

    #[pymodule_init]
    fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add("SCHEMA_VERSION", scenegen_core::scene_json::SCHEMA_VERSION)
    }

    /// generate(description, seed=0, max_iters=3) -> (scene_json, ok)
    #[pyfunction]
    #[pyo3(signature = (description, seed = 0, max_iters = 3))]
    fn generate(description: &str, seed: u64, max_iters: u32) -> PyResult<(String, bool)> {
        super::generate_scene(description, seed, max_iters).map_err(value_error)
    }

    /// verify(scene_json, description=None) -> report JSON
    #[pyfunction]
    #[pyo3(signature = (scene_json, description = None))]
    fn verify(scene_json: &str, description: Option<&str>) -> PyResult<String> {
        super::verify_scene(scene_json, description).map_err(value_error)
    }

    #[pyfunction]
    fn emit_csharp(scene_json: &str) -> PyResult<String> {
        super::scene_to_csharp(scene_json).map_err(value_error)
    }

    #[pyfunction]
    #[pyo3(signature = (scene_json, scale = scenegen_core::codegen::DEFAULT_SCALE))]
    fn emit_svg(scene_json: &str, scale: f64) -> PyResult<String> {
        super::scene_to_svg(scene_json, scale).map_err(value_error)
    }

    /// Unbiased pass@k estimate.
    #[pyfunction]
    fn pass_at_k(n: u64, c: u64, k: u64) -> PyResult<f64> {
        scenegen_core::bench::pass_at_k(n, c, k).map_err(|e| value_error(e.to_string()))
    }

    /// MinHash estimate of the Jaccard similarity of word 3-shingles.
    #[pyfunction]
    fn similarity(a: &str, b: &str) -> f64 {
        super::text_similarity(a, b)
    }
}
