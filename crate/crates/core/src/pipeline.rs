//! Description in, verified scene (and optionally code) out.

use serde::{Deserialize, Serialize};

use crate::codegen::{generate_code, CodeReport, CodegenMode};
use crate::engine::{assign_with_refinement, VerificationReport};
use crate::error::PipelineError;
use crate::facts::LayoutInfo;
use crate::layout::{extract_layout, retrieve_objects, RetrievalResult};
use crate::llm::Gateway;
use crate::scene::{ObjectLibrary, Scene};

pub const DEFAULT_MAX_ITERS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub max_iters: u32,
    pub temperature: f64,
    /// Code is only produced when set.
    pub codegen: Option<CodegenMode>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            temperature: 1.0,
            codegen: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCode {
    pub code: String,
    pub report: CodeReport,
}

/// Every intermediate artifact of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub retrieval: RetrievalResult,
    pub layout: LayoutInfo,
    pub scene: Scene,
    pub report: VerificationReport,
    pub iterations: u32,
    pub code: Option<GeneratedCode>,
}

pub fn generate(
    description: &str,
    library: &ObjectLibrary,
    gateway: &Gateway,
    opts: &GenerateOptions,
) -> Result<GenerationOutput, PipelineError> {
    let t = opts.temperature;
    let retrieval = retrieve_objects(description, library, gateway, t).map_err(PipelineError::Retrieval)?;
    let s = retrieval.rewritten_description.clone();
    let layout = extract_layout(&s, &retrieval.objects, library, gateway, t).map_err(PipelineError::Extraction)?;
    let refined = assign_with_refinement(&s, &retrieval.objects, &layout, gateway, opts.max_iters, t)
        .map_err(PipelineError::Assignment)?;
    let mut scene = refined.scene;
    // the scene records what the user asked for, not the rewrite
    scene.source_description = description.trim().to_string();
    let code = match opts.codegen {
        Some(mode) => {
            let (code, report) = generate_code(&scene, library, mode, Some(gateway), t)?;
            Some(GeneratedCode { code, report })
        }
        None => None,
    };
    Ok(GenerationOutput {
        retrieval,
        layout,
        scene,
        report: refined.report,
        iterations: refined.iterations,
        code,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::examples;
    use crate::llm::ScriptedBackend;
    use crate::scene::Coordinate;

    fn gw(seed: u64) -> Gateway {
        Gateway::new(Arc::new(ScriptedBackend::new(seed, ObjectLibrary::default())))
    }

    #[test]
    fn worked_example_end_to_end() {
        let opts = GenerateOptions {
            codegen: Some(CodegenMode::Llm),
            ..GenerateOptions::default()
        };
        let out = generate(examples::WORKED_DESCRIPTION, &ObjectLibrary::default(), &gw(0), &opts).unwrap();
        assert!(out.report.ok);
        assert_eq!(out.iterations, 1);
        let at = |n: &str| out.scene.by_name(n).unwrap().1.coord;
        assert_eq!(at("Turntable"), Coordinate::new(1500, 2500));
        assert_eq!(at("ABB Robot IRB6600"), Coordinate::new(-1000, -100));
        assert!(out.code.unwrap().report.ok);
    }

    #[test]
    fn same_seed_same_scene() {
        let lib = ObjectLibrary::default();
        let text = "Give me two conveyors, arranged in parallel, and a cabinet.";
        let a = generate(text, &lib, &gw(5), &GenerateOptions::default()).unwrap();
        let b = generate(text, &lib, &gw(5), &GenerateOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_description_is_a_retrieval_error() {
        let e = generate("", &ObjectLibrary::default(), &gw(0), &GenerateOptions::default()).unwrap_err();
        assert!(matches!(e, PipelineError::Retrieval(_)));
    }
}
