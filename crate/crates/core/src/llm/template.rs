use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TemplateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    ObjectRetrieval,
    LayoutExtraction,
    PlacementAssignment,
    PlacementVerification,
    PlacementFeedback,
    CodeGeneration,
    EvolveRewrite,
    DescriptionValidation,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::ObjectRetrieval,
        TemplateId::LayoutExtraction,
        TemplateId::PlacementAssignment,
        TemplateId::PlacementVerification,
        TemplateId::PlacementFeedback,
        TemplateId::CodeGeneration,
        TemplateId::EvolveRewrite,
        TemplateId::DescriptionValidation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::ObjectRetrieval => "object_retrieval",
            TemplateId::LayoutExtraction => "layout_extraction",
            TemplateId::PlacementAssignment => "placement_assignment",
            TemplateId::PlacementVerification => "placement_verification",
            TemplateId::PlacementFeedback => "placement_feedback",
            TemplateId::CodeGeneration => "code_generation",
            TemplateId::EvolveRewrite => "evolve_rewrite",
            TemplateId::DescriptionValidation => "description_validation",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::ObjectRetrieval => include_str!("../../templates/object_retrieval.txt"),
            TemplateId::LayoutExtraction => include_str!("../../templates/layout_extraction.txt"),
            TemplateId::PlacementAssignment => include_str!("../../templates/placement_assignment.txt"),
            TemplateId::PlacementVerification => include_str!("../../templates/placement_verification.txt"),
            TemplateId::PlacementFeedback => include_str!("../../templates/placement_feedback.txt"),
            TemplateId::CodeGeneration => include_str!("../../templates/code_generation.txt"),
            TemplateId::EvolveRewrite => include_str!("../../templates/evolve_rewrite.txt"),
            TemplateId::DescriptionValidation => include_str!("../../templates/description_validation.txt"),
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in placeholder_re().captures_iter(self.text()) {
            let name = c[1].to_string();
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    pub fn checksum(self) -> String {
        hex::encode(Sha256::digest(self.text().as_bytes()))
    }

    /// Which `#Step N: ...#` sections an answer must contain, and the list
    /// label whose payload follows each section's analysis.
    pub fn skeleton(self) -> &'static [(&'static str, &'static str)] {
        match self {
            TemplateId::ObjectRetrieval => &[
                ("Step 1", "Objects"),
                ("Step 2", "Objects"),
                ("Step 3", "New Description"),
            ],
            TemplateId::LayoutExtraction => &[
                ("Step 1", "Objects"),
                ("Step 2", "Positions"),
                ("Step 3", "Relative Positions"),
            ],
            // a feedback turn is answered with a fresh assignment
            TemplateId::PlacementAssignment | TemplateId::PlacementFeedback => &[
                ("Step 1", "New Relative Positions"),
                ("Step 2", "Positions"),
                ("Step 3", "Positions"),
            ],
            TemplateId::EvolveRewrite => &[("Step 1", "New Description")],
            TemplateId::PlacementVerification
            | TemplateId::DescriptionValidation
            | TemplateId::CodeGeneration => &[],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*([^{}]+?)\s*\}\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template_id: TemplateId,
    pub bindings: BTreeMap<String, String>,
    pub temperature: f64,
    pub max_retries: u32,
}

impl PromptRequest {
    pub fn new(template_id: TemplateId) -> Self {
        Self {
            template_id,
            bindings: BTreeMap::new(),
            temperature: 1.0,
            max_retries: 3,
        }
    }

    pub fn bind(mut self, name: &str, value: impl Into<String>) -> Self {
        self.bindings.insert(name.to_string(), value.into());
        self
    }
}

/// Substitute every `{{ name }}` in the request's template. Values are
/// inserted as-is and never re-scanned.
pub fn render_prompt(req: &PromptRequest) -> Result<String, TemplateError> {
    let text = req.template_id.text();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for c in placeholder_re().captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let name = &c[1];
        let value = req.bindings.get(name).ok_or_else(|| TemplateError::MissingBinding {
            template: req.template_id.name(),
            placeholder: name.to_string(),
        })?;
        out.push_str(&text[last..m.start()]);
        out.push_str(value);
        last = m.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Recover the bound values from a prompt rendered from `template`. Each
/// value ends at the first occurrence of the literal text that follows it.
pub fn bindings_of(template: TemplateId, rendered: &str) -> Option<BTreeMap<String, String>> {
    let text = template.text();
    let marks: Vec<_> = placeholder_re().captures_iter(text).collect();
    let first = marks.first()?.get(0)?.start();
    let mut rest = rendered.strip_prefix(&text[..first])?;
    let mut out = BTreeMap::new();
    for (i, c) in marks.iter().enumerate() {
        let m = c.get(0)?;
        let lit_end = marks.get(i + 1).map_or(text.len(), |n| n.get(0).expect("match").start());
        let lit = &text[m.end()..lit_end];
        let at = if lit.is_empty() {
            rest.len()
        } else if i + 1 == marks.len() {
            rest.rfind(lit)?
        } else {
            rest.find(lit)?
        };
        out.entry(c[1].to_string()).or_insert_with(|| rest[..at].to_string());
        rest = &rest[at + lit.len()..];
    }
    Some(out)
}
