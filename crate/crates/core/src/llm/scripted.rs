//! Offline backend that answers every stage by running the deterministic
//! grammar and engine.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::backend::{Backend, Completion, Message};
use super::format::{objects_json, positions_value, pretty, relations_json, positions_json};
use super::parse::{names_from_json, positions_from_json, relations_from_json};
use super::template::{bindings_of, TemplateId};
use crate::analysis::{analyze, lookup_object};
use crate::codegen::emit_csharp;
use crate::engine::{scene_from_records, solve, verify, SolveOptions};
use crate::error::BackendError;
use crate::evolve::{rule_rewrite, validate_description, RewriteMethod};
use crate::facts::{DeltaRecord, LayoutInfo, Location, NamedAnchor, Orientation, PositionRecord};
use crate::scene::{base_name, Category, Coordinate, ObjectId, ObjectInstance, ObjectLibrary, Scene};

/// Share of weak-mode assignments that get an injected error.
pub const DEFAULT_ERROR_RATE: f64 = 0.35;

const FALLBACK: &str = "Analysis: There is no scripted answer for this request.\n\nError: No";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptedMode {
    Strong,
    /// Assignments are corrupted with probability `error_rate`.
    Weak { error_rate: f64 },
}

pub struct ScriptedBackend {
    seed: u64,
    library: ObjectLibrary,
    mode: ScriptedMode,
    primed: Mutex<VecDeque<String>>,
    seen: Mutex<HashMap<u64, u64>>,
}

fn digest64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Instances for a list of display names, numbered names kept as given.
pub fn instances_from_names<S: AsRef<str>>(names: &[S], library: &ObjectLibrary) -> Vec<ObjectInstance> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let n = n.as_ref();
            let library_name = if library.contains(n) {
                n.to_string()
            } else if library.contains(base_name(n)) {
                base_name(n).to_string()
            } else {
                lookup_object(n, library).unwrap_or_else(|| n.to_string())
            };
            ObjectInstance {
                id: ObjectId(i as u32),
                library_name,
                display_name: n.to_string(),
            }
        })
        .collect()
}

fn records_of(scene: &Scene) -> Vec<PositionRecord> {
    scene
        .placed()
        .map(|(o, p)| PositionRecord {
            name: o.display_name.clone(),
            location: Some(Location::Coordinate(p.coord)),
            direction: Some(Orientation::Angle(p.dir)),
        })
        .collect()
}

/// A three-step assignment answer for `scene`. `derived` names the objects
/// whose coordinates follow from the description.
pub fn assignment_answer(scene: &Scene, deltas: &[DeltaRecord], derived: &[String]) -> String {
    let rel: Vec<Value> = deltas
        .iter()
        .map(|d| json!({"object 1": d.subject, "relation": format!("[{}, {}, 0]", d.dx, d.dy), "object 2": d.object}))
        .collect();
    let all = records_of(scene);
    let step2: Vec<PositionRecord> = all.iter().filter(|r| derived.contains(&r.name)).cloned().collect();
    let step1_note = if deltas.is_empty() {
        "No relative position reduces to a coordinate increment.".to_string()
    } else {
        let parts: Vec<String> = deltas
            .iter()
            .map(|d| format!("{} relative to {} is [{}, {}, 0]", d.subject, d.object, d.dx, d.dy))
            .collect();
        format!("Front is +x and left is +y, so {}.", parts.join("; "))
    };
    let step2_note = if step2.is_empty() {
        "No coordinates are given or implied.".to_string()
    } else {
        let parts: Vec<String> = step2
            .iter()
            .filter_map(|r| r.coordinate().map(|c| format!("{} is at {c}", r.name)))
            .collect();
        format!("From the given coordinates and increments, {}.", parts.join(", "))
    };
    format!(
        "#Step 1: Rewrite Relative Position#\nAnalysis: {step1_note}\nNew Relative Positions:\n{}\n\n\
         #Step 2: Calculate Coordinates#\nAnalysis: {step2_note}\nPositions:\n{}\n\n\
         #Step 3: Assign Positions#\nAnalysis: The remaining objects are placed on free cells at least 1000 mm from every other object.\nPositions:\n{}\n",
        pretty(&Value::Array(rel)),
        positions_json(&step2),
        pretty(&positions_value(&all)),
    )
}

struct AssignInput {
    prompt: String,
    objects: Vec<ObjectInstance>,
    layout: LayoutInfo,
}

fn parse_assign_bindings(b: &BTreeMap<String, String>, library: &ObjectLibrary) -> Option<AssignInput> {
    let names = names_from_json(&serde_json::from_str(b.get("objects")?.trim()).ok()?, "objects").ok()?;
    let positions = positions_from_json(&serde_json::from_str(b.get("positions")?.trim()).ok()?, "positions").ok()?;
    let relations = relations_from_json(&serde_json::from_str(b.get("relations")?.trim()).ok()?, "relations").ok()?;
    let objects = instances_from_names(&names, library);
    let mut layout = LayoutInfo::default();
    for p in positions {
        layout.push_position(p);
    }
    for r in relations {
        layout.push_relation(r);
    }
    let mut anchors: Vec<NamedAnchor> = Vec::new();
    let refs = layout
        .positions
        .iter()
        .map(|p| p.name.clone())
        .chain(layout.relations.iter().flat_map(|r| [r.subject.clone(), r.object.clone()]));
    for n in refs.collect::<Vec<_>>() {
        if !names.contains(&n) && !anchors.iter().any(|a| a.name == n) {
            let coord = layout.positions.iter().find(|p| p.name == n).and_then(PositionRecord::coordinate);
            anchors.push(NamedAnchor { name: n, coord });
        }
    }
    layout.anchors = anchors;
    Some(AssignInput {
        prompt: b.get("prompt").cloned().unwrap_or_default(),
        objects,
        layout,
    })
}

struct Assigned {
    scene: Scene,
    deltas: Vec<DeltaRecord>,
    derived: Vec<String>,
}

fn strong_assignment<R: Rng + ?Sized>(input: &AssignInput, rng: &mut R) -> Assigned {
    match solve(&input.prompt, &input.objects, &input.layout, &SolveOptions::default(), rng) {
        Ok(sol) => Assigned {
            derived: sol.derived.iter().map(|(n, _)| n.clone()).collect(),
            scene: sol.scene,
            deltas: sol.deltas,
        },
        Err(_) => {
            let records: Vec<PositionRecord> = input.layout.positions.clone();
            let (scene, _) = scene_from_records(&input.prompt, &input.objects, &records);
            Assigned {
                derived: input.layout.pinned_objects().into_iter().collect(),
                scene,
                deltas: Vec::new(),
            }
        }
    }
}

/// Move one constrained object off its derived position, or flip a delta.
fn inject_error<R: Rng + ?Sized>(a: &mut Assigned, rng: &mut R) {
    let coord_of = |s: &Scene, n: &str| s.by_name(n).map(|(_, p)| p.coord);
    let flippable: Vec<&DeltaRecord> = a
        .deltas
        .iter()
        .filter(|d| (d.dx, d.dy) != (0, 0) && a.scene.by_name(&d.subject).is_some())
        .collect();
    let mut target: Option<(String, Coordinate)> = None;
    if !flippable.is_empty() && rng.gen_bool(0.5) {
        let d = flippable[rng.gen_range(0..flippable.len())];
        if let Some(o) = coord_of(&a.scene, &d.object) {
            target = Some((d.subject.clone(), o.offset(-d.dx, -d.dy)));
        }
    }
    if target.is_none() {
        let derived: Vec<&String> = a.derived.iter().filter(|n| a.scene.by_name(n).is_some()).collect();
        if let Some(n) = derived.choose(rng) {
            let c = coord_of(&a.scene, n).expect("placed");
            let m = rng.gen_range(1100..=3000) * if rng.gen_bool(0.5) { 1 } else { -1 };
            let moved = if rng.gen_bool(0.5) { c.offset(m, 0) } else { c.offset(0, m) };
            target = Some(((*n).clone(), moved));
        } else {
            let solid: Vec<&ObjectInstance> = a.scene.objects.iter().filter(|o| !o.is_guarding()).collect();
            if solid.len() >= 2 {
                let c = coord_of(&a.scene, &solid[1].display_name).expect("placed");
                target = Some((solid[0].display_name.clone(), c.offset(300, 0)));
            }
        }
    }
    if let Some((name, c)) = target {
        let id = a.scene.by_name(&name).map(|(o, _)| o.id).expect("placed");
        for p in &mut a.scene.placements {
            if p.object == id {
                p.coord = c;
            }
        }
    }
}

impl ScriptedBackend {
    pub fn new(seed: u64, library: ObjectLibrary) -> Self {
        Self {
            seed,
            library,
            mode: ScriptedMode::Strong,
            primed: Mutex::new(VecDeque::new()),
            seen: Mutex::new(HashMap::new()),
        }
    }

    pub fn weak(seed: u64, library: ObjectLibrary, error_rate: f64) -> Self {
        Self {
            mode: ScriptedMode::Weak {
                error_rate: error_rate.clamp(0.0, 1.0),
            },
            ..Self::new(seed, library)
        }
    }

    pub fn mode(&self) -> ScriptedMode {
        self.mode
    }

    /// Queue a literal answer, returned by the next call instead of the
    /// computed one.
    pub fn prime(&self, answer: impl Into<String>) {
        self.primed.lock().expect("primed lock").push_back(answer.into());
    }

    fn rng_for(&self, template: TemplateId, prompt: &str, count_calls: bool) -> ChaCha8Rng {
        let h = digest64(&[template.name(), prompt]);
        let mut s = self.seed ^ h;
        if count_calls {
            let mut seen = self.seen.lock().expect("seen lock");
            let n = seen.entry(h).or_default();
            s = s.wrapping_add(n.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            *n += 1;
        }
        ChaCha8Rng::seed_from_u64(s)
    }

    fn retrieval(&self, prompt: &str) -> String {
        let a = analyze(prompt, &self.library);
        let (raw, names, rewritten) = if a.objects.is_empty() {
            let robot = self.library.of_category(Category::Robot).next().map(|e| e.name.clone());
            let table = self.library.of_category(Category::Table).next().map(|e| e.name.clone());
            let names: Vec<String> = robot.into_iter().chain(table).collect();
            let text = match names.as_slice() {
                [r, t] => format!("A {r} is placed next to a {t}."),
                [one] => format!("A {one} is placed in the workstation."),
                _ => prompt.trim().to_string(),
            };
            (Vec::new(), names, text)
        } else {
            (a.raw_names.clone(), a.library_names.clone(), a.rewritten.clone())
        };
        let rewritten = rewritten.split_whitespace().collect::<Vec<_>>().join(" ");
        format!(
            "#Step 1: Find all objects#\nAnalysis: Each object is listed once per instance.\nObjects: {}\n\n\
             #Step 2: Fix object names#\nAnalysis: Every object is mapped to its entry in the permission list.\nObjects: {}\n\n\
             #Step 3: Rewrite description#\nAnalysis: The description keeps only objects and their layout.\nNew Description: {rewritten}\n",
            objects_json(&raw),
            objects_json(&names),
        )
    }

    fn extraction(&self, b: &BTreeMap<String, String>) -> Option<String> {
        let prompt = b.get("prompt")?;
        let names = names_from_json(&serde_json::from_str(b.get("objects")?.trim()).ok()?, "objects").ok()?;
        let given = instances_from_names(&names, &self.library);
        let a = analyze(prompt, &self.library);
        let layout = a.layout_for(&given);
        let mut listed = names.clone();
        listed.extend(layout.anchors.iter().map(|x| x.name.clone()));
        Some(format!(
            "#Step 1: Identify Objects#\nAnalysis: The objects and reference points in the description.\nObjects: {}\n\n\
             #Step 2: Absolute Positions#\nAnalysis: Only coordinates written in the description are listed.\nPositions:\n{}\n\n\
             #Step 3: Relative Positions#\nAnalysis: Each pair is listed once.\nRelative Positions:\n{}\n",
            objects_json(&listed),
            positions_json(&layout.positions),
            relations_json(&layout.relations),
        ))
    }

    fn assignment(&self, template: TemplateId, first: &str, inject: bool) -> Option<String> {
        let b = bindings_of(TemplateId::PlacementAssignment, first)?;
        let input = parse_assign_bindings(&b, &self.library)?;
        let mut rng = self.rng_for(template, first, false);
        let mut a = strong_assignment(&input, &mut rng);
        if inject {
            if let ScriptedMode::Weak { error_rate } = self.mode {
                if rng.gen_bool(error_rate) {
                    inject_error(&mut a, &mut rng);
                }
            }
        }
        Some(assignment_answer(&a.scene, &a.deltas, &a.derived))
    }

    fn scene_from_bindings(&self, b: &BTreeMap<String, String>) -> Option<Scene> {
        let v: Value = serde_json::from_str(b.get("placements")?.trim()).ok()?;
        let records = positions_from_json(&v, "placements").ok()?;
        let names: Vec<&str> = records.iter().map(|r| r.name.as_str()).collect();
        let objects = instances_from_names(&names, &self.library);
        let (scene, _) = scene_from_records(b.get("prompt").map_or("", String::as_str), &objects, &records);
        Some(scene)
    }

    fn verification(&self, first: &str) -> Option<String> {
        let b = bindings_of(TemplateId::PlacementVerification, first)?;
        let scene = self.scene_from_bindings(&b)?;
        let a = analyze(b.get("prompt")?, &self.library);
        let layout = a.layout_for(&scene.objects);
        Some(verify(&scene, &layout).render(&scene, &layout))
    }

    fn code(&self, first: &str) -> Option<String> {
        let b = bindings_of(TemplateId::CodeGeneration, first)?;
        let scene = self.scene_from_bindings(&b)?;
        Some(format!("```csharp\n{}```\n", emit_csharp(&scene, &self.library)))
    }

    fn evolve(&self, first: &str) -> Option<String> {
        let b = bindings_of(TemplateId::EvolveRewrite, first)?;
        let text = b.get("description")?.trim();
        let method = RewriteMethod::from_str(b.get("method")?.trim()).ok()?;
        let mut rng = self.rng_for(TemplateId::EvolveRewrite, first, true);
        let (note, out) = match rule_rewrite(text, method, &self.library, &mut rng) {
            Some(t) => (format!("Applied {method} to the description."), t),
            None => (format!("{method} does not apply; the description is kept."), text.to_string()),
        };
        let out = out.split_whitespace().collect::<Vec<_>>().join(" ");
        Some(format!("#Step 1: Rewrite description#\nAnalysis: {note}\nNew Description: {out}\n"))
    }

    fn validation(&self, first: &str) -> Option<String> {
        let b = bindings_of(TemplateId::DescriptionValidation, first)?;
        Some(validate_description(b.get("description")?.trim(), &self.library).render())
    }

    fn answer(&self, template: TemplateId, messages: &[Message]) -> Option<String> {
        let first = messages.first()?.content.as_str();
        match template {
            TemplateId::ObjectRetrieval => {
                let b = bindings_of(template, first)?;
                Some(self.retrieval(b.get("prompt")?))
            }
            TemplateId::LayoutExtraction => self.extraction(&bindings_of(template, first)?),
            TemplateId::PlacementAssignment => self.assignment(template, first, true),
            TemplateId::PlacementFeedback => self.assignment(template, first, false),
            TemplateId::PlacementVerification => self.verification(first),
            TemplateId::CodeGeneration => self.code(first),
            TemplateId::EvolveRewrite => self.evolve(first),
            TemplateId::DescriptionValidation => self.validation(first),
        }
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> String {
        match self.mode {
            ScriptedMode::Strong => "scripted".to_string(),
            ScriptedMode::Weak { error_rate } => format!("scripted-weak:{error_rate}"),
        }
    }

    fn complete(&self, req: &Completion<'_>) -> Result<String, BackendError> {
        if let Some(a) = self.primed.lock().expect("primed lock").pop_front() {
            return Ok(a);
        }
        let template = req.template.or_else(|| {
            let first = &req.messages.first()?.content;
            TemplateId::ALL.into_iter().find(|t| bindings_of(*t, first).is_some())
        });
        Ok(template
            .and_then(|t| self.answer(t, req.messages))
            .unwrap_or_else(|| FALLBACK.to_string()))
    }
}
