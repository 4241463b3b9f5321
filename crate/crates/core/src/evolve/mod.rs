//! Description pool growth: weighted rewrite methods, validation against
//! the deterministic engine, MinHash deduplication and trajectory records.

mod minhash;
mod rewrite;
mod trajectory;

use std::fmt;
use std::io::{BufRead, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::analysis::analyze;
use crate::engine::{solve, verify, SolveOptions, Violation, ViolationKind};
use crate::facts::LayoutInfo;
use crate::error::EvolveError;
use crate::llm::{Gateway, PromptRequest, TemplateId};
use crate::scene::{ObjectLibrary, Scene};

pub use minhash::{
    is_duplicate, jaccard, shingles, MinHashParams, MinHashSignature, DEFAULT_PERMUTATIONS, DEFAULT_SHINGLE,
    DEFAULT_THRESHOLD,
};
pub use rewrite::rule_rewrite;
pub use trajectory::{collect_trajectories, Split, TrajectoryOptions, TrajectoryRecord, TrajectoryTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteMethod {
    ObjectAddition,
    LocationSpecification,
    RelationSpecification,
    QuantityModification,
    FuzzyExpression,
    Rephrasing,
}

/// Sampling weights in units of 1/24, in [`RewriteMethod::ALL`] order.
pub const METHOD_WEIGHTS: [u32; 6] = [5, 6, 6, 1, 5, 1];

impl RewriteMethod {
    pub const ALL: [RewriteMethod; 6] = [
        RewriteMethod::ObjectAddition,
        RewriteMethod::LocationSpecification,
        RewriteMethod::RelationSpecification,
        RewriteMethod::QuantityModification,
        RewriteMethod::FuzzyExpression,
        RewriteMethod::Rephrasing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewriteMethod::ObjectAddition => "object_addition",
            RewriteMethod::LocationSpecification => "location_specification",
            RewriteMethod::RelationSpecification => "relation_specification",
            RewriteMethod::QuantityModification => "quantity_modification",
            RewriteMethod::FuzzyExpression => "fuzzy_expression",
            RewriteMethod::Rephrasing => "rephrasing",
        }
    }

    /// Edit instruction bound into the rewrite prompt.
    pub fn instruction(self) -> &'static str {
        match self {
            RewriteMethod::ObjectAddition => {
                "Add one object from the list, or swap one object for a different object from the list. \
                 Place a new object relative to an existing one, more than 1 meter and less than 5 meters away."
            }
            RewriteMethod::LocationSpecification => {
                "Give one object without coordinates an exact coordinate [x, y, 0] in millimeters, \
                 with x and y greater than -5000 and less than 5000."
            }
            RewriteMethod::RelationSpecification => {
                "State where one object is relative to another object it is not yet related to, \
                 with a direction and a distance of more than 1 meter and less than 5 meters."
            }
            RewriteMethod::QuantityModification => "Change the number of one kind of object to a number from 3 to 10.",
            RewriteMethod::FuzzyExpression => {
                "Make one exact coordinate or distance vague, keeping the rest of the description."
            }
            RewriteMethod::Rephrasing => {
                "Reword the description without changing its objects, counts, positions or relations."
            }
        }
    }
}

impl fmt::Display for RewriteMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RewriteMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        RewriteMethod::ALL
            .into_iter()
            .find(|m| m.name() == t)
            .ok_or_else(|| format!("unknown rewrite method {t:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub id: String,
    pub text: String,
    pub parent_id: Option<String>,
    pub method: Option<RewriteMethod>,
    pub generation: u32,
    pub signature: MinHashSignature,
}

/// Content hash of a description.
pub fn content_id(text: &str) -> String {
    hex::encode(&Sha256::digest(text.trim().as_bytes())[..8])
}

impl DescriptionRecord {
    pub fn seed(text: &str, params: MinHashParams) -> Self {
        Self {
            id: content_id(text),
            text: text.trim().to_string(),
            parent_id: None,
            method: None,
            generation: 0,
            signature: MinHashSignature::of_text(text, params),
        }
    }

    pub fn child(&self, text: &str, method: RewriteMethod, params: MinHashParams) -> Self {
        Self {
            id: content_id(text),
            text: text.trim().to_string(),
            parent_id: Some(self.id.clone()),
            method: Some(method),
            generation: self.generation + 1,
            signature: MinHashSignature::of_text(text, params),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolLine {
    Record(DescriptionRecord),
    Text { text: String },
    Description { description: String },
}

/// Read a JSONL pool. Lines may be full records or `{"text": ...}` /
/// `{"description": ...}` seeds.
pub fn read_pool(reader: impl BufRead, params: MinHashParams) -> Result<Vec<DescriptionRecord>, EvolveError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvolveError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PoolLine = serde_json::from_str(&line).map_err(|e| EvolveError::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(match parsed {
            PoolLine::Record(r) => r,
            PoolLine::Text { text } | PoolLine::Description { description: text } => {
                DescriptionRecord::seed(&text, params)
            }
        });
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Pick a description uniformly and a method by [`METHOD_WEIGHTS`].
pub fn sample_step<'a, R: Rng + ?Sized>(
    pool: &'a [DescriptionRecord],
    rng: &mut R,
) -> Result<(&'a DescriptionRecord, RewriteMethod), EvolveError> {
    if pool.is_empty() {
        return Err(EvolveError::EmptyPool);
    }
    let d = &pool[rng.gen_range(0..pool.len())];
    let dist = WeightedIndex::new(METHOD_WEIGHTS).expect("positive weights");
    Ok((d, RewriteMethod::ALL[dist.sample(rng)]))
}

/// Ask the model for one rewrite.
pub fn rewrite(
    description: &str,
    method: RewriteMethod,
    library: &ObjectLibrary,
    gateway: &Gateway,
    temperature: f64,
) -> Result<String, EvolveError> {
    let req = PromptRequest::new(TemplateId::EvolveRewrite)
        .bind("description", description)
        .bind("permission_list", library.permission_list())
        .bind("method", method.name())
        .bind("instruction", method.instruction());
    let req = PromptRequest { temperature, ..req };
    let (_, out) = gateway.ask(&req)?;
    let text = out
        .payload("Step 1")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .trim()
        .to_string();
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
    /// Every part of the description was understood by the grammar.
    pub fully_checkable: bool,
}

impl ValidationReport {
    /// The validation answer format: `Analysis:` then `Error:`.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self.violations.iter().map(|v| v.detail.clone()).collect();
        if lines.is_empty() && self.ok {
            lines.push("The objects can be placed without collisions or contradictions.".into());
        }
        lines.extend(self.notes.iter().cloned());
        format!(
            "Analysis: {}\nError: {}",
            lines.join(" "),
            if self.ok { "No" } else { "Yes" }
        )
    }
}

/// Check a description with the grammar and the deterministic engine:
/// contradictions, collisions and unsatisfiable relations are errors.
/// Parts the grammar does not cover pass with a note.
pub fn validate_description(text: &str, library: &ObjectLibrary) -> ValidationReport {
    let a = analyze(text, library);
    let mut notes = Vec::new();
    if !a.complete {
        notes.push(format!("not fully checkable: {}", a.notes.join("; ")));
    }
    if a.objects.is_empty() {
        return ValidationReport {
            ok: false,
            violations: Vec::new(),
            notes: vec!["no objects from the library are mentioned".into()],
            fully_checkable: false,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let solution = match solve(text, &a.objects, &a.layout, &SolveOptions::default(), &mut rng) {
        Ok(s) => s,
        Err(e) => {
            notes.push(e.to_string());
            return ValidationReport {
                ok: false,
                violations: Vec::new(),
                notes,
                fully_checkable: a.complete,
            };
        }
    };
    let report = verify(&solution.scene, &a.layout);
    notes.extend(report.notes);
    let mut violations = report.violations;
    violations.extend(coincident_pins(&solution.scene, &a.layout));
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        notes,
        fully_checkable: a.complete,
    }
}

// Scenes let two pinned objects sit closer than the minimum distance, but a
// description that stacks two of them on one point is rejected as data.
fn coincident_pins(scene: &Scene, layout: &LayoutInfo) -> Vec<Violation> {
    let pinned = layout.pinned_objects();
    let pins: Vec<_> = pinned
        .iter()
        .filter_map(|n| scene.by_name(n))
        .filter(|(o, _)| !o.is_guarding())
        .collect();
    let mut out = Vec::new();
    for (i, (a, pa)) in pins.iter().enumerate() {
        for (b, pb) in &pins[i + 1..] {
            if pa.coord == pb.coord {
                out.push(Violation {
                    kind: ViolationKind::Overlap,
                    detail: format!("{} and {} are both pinned at {}", a.display_name, b.display_name, pa.coord),
                    refs: vec![a.display_name.clone(), b.display_name.clone()],
                    measured_mm: Some(0.0),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Rewrite attempts allowed in total; 0 means 20 per missing description.
    pub max_iterations: usize,
    /// Extra attempts on the same (description, method) after a rejection.
    pub retries: u32,
    pub threshold: f64,
    pub params: MinHashParams,
    pub temperature: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 0,
            retries: 2,
            threshold: DEFAULT_THRESHOLD,
            params: MinHashParams::default(),
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOutcome {
    pub pool: Vec<DescriptionRecord>,
    pub attempts: usize,
    pub rejected_invalid: usize,
    pub rejected_duplicate: usize,
    pub failed_rewrites: usize,
    pub budget_exhausted: bool,
}

/// Grow `seeds` to `target` descriptions.
pub fn evolve<R: Rng + ?Sized>(
    seeds: Vec<DescriptionRecord>,
    target: usize,
    library: &ObjectLibrary,
    gateway: &Gateway,
    opts: &EvolveOptions,
    rng: &mut R,
) -> Result<EvolveOutcome, EvolveError> {
    evolve_with(seeds, target, library, gateway, opts, rng, &|t| validate_description(t, library).ok)
}

/// [`evolve`] with a custom acceptance test in place of validation.
pub fn evolve_with<R: Rng + ?Sized>(
    seeds: Vec<DescriptionRecord>,
    target: usize,
    library: &ObjectLibrary,
    gateway: &Gateway,
    opts: &EvolveOptions,
    rng: &mut R,
    accept: &dyn Fn(&str) -> bool,
) -> Result<EvolveOutcome, EvolveError> {
    if seeds.is_empty() {
        return Err(EvolveError::EmptyPool);
    }
    let mut out = EvolveOutcome {
        pool: seeds,
        attempts: 0,
        rejected_invalid: 0,
        rejected_duplicate: 0,
        failed_rewrites: 0,
        budget_exhausted: false,
    };
    let budget = if opts.max_iterations == 0 {
        target.saturating_sub(out.pool.len()).saturating_mul(20)
    } else {
        opts.max_iterations
    };
    'outer: while out.pool.len() < target {
        let (parent, method) = {
            let (p, m) = sample_step(&out.pool, rng)?;
            (p.clone(), m)
        };
        for _ in 0..=opts.retries {
            if out.attempts >= budget {
                out.budget_exhausted = true;
                break 'outer;
            }
            out.attempts += 1;
            let text = match rewrite(&parent.text, method, library, gateway, opts.temperature) {
                Ok(t) if !t.is_empty() && t != parent.text => t,
                Ok(_) => {
                    out.failed_rewrites += 1;
                    continue 'outer;
                }
                Err(e) => {
                    warn!(error = %e, "rewrite failed, skipping");
                    out.failed_rewrites += 1;
                    continue 'outer;
                }
            };
            if !accept(&text) {
                out.rejected_invalid += 1;
                continue;
            }
            let child = parent.child(&text, method, opts.params);
            if out.pool.iter().any(|r| r.id == child.id)
                || is_duplicate(&child.signature, out.pool.iter().map(|r| &r.signature), opts.threshold)
            {
                out.rejected_duplicate += 1;
                continue;
            }
            out.pool.push(child);
            continue 'outer;
        }
    }
    if out.budget_exhausted {
        warn!(
            size = out.pool.len(),
            target, "rewrite budget exhausted before reaching the target"
        );
    } else {
        info!(size = out.pool.len(), attempts = out.attempts, "pool complete");
    }
    Ok(out)
}
