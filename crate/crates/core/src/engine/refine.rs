use serde::{Deserialize, Serialize};

use super::compute_orientation;
use super::verify::{verify, VerificationReport, Violation, ViolationKind};
use crate::error::{EngineError, StageError};
use crate::facts::{LayoutInfo, Orientation, PositionRecord};
use crate::llm::format::{objects_json, positions_json, relations_json};
use crate::llm::parse::positions_from_json;
use crate::llm::{Gateway, Message, PromptRequest, StructuredOutput, TemplateId};
use crate::scene::{Coordinate, Direction, ObjectInstance, Placement, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub scene: Scene,
    pub report: VerificationReport,
    /// Assignment answers received, the first one included.
    pub iterations: u32,
    pub messages: Vec<Message>,
}

fn facing_target(text: &str, objects: &[ObjectInstance], coords: &[(String, Coordinate)]) -> Option<Coordinate> {
    let lower = text.to_lowercase();
    coords
        .iter()
        .filter(|(n, _)| lower.contains(&n.to_lowercase()))
        .max_by_key(|(n, _)| n.len())
        .map(|(_, c)| *c)
        .or_else(|| {
            // "towards the table" when only one table exists
            let hits: Vec<_> = objects
                .iter()
                .filter(|o| lower.contains(&o.library_name.to_lowercase()))
                .collect();
            match hits.as_slice() {
                [o] => coords.iter().find(|(n, _)| *n == o.display_name).map(|(_, c)| *c),
                _ => None,
            }
        })
}

/// Build a scene from answer records. Objects the records leave without a
/// coordinate go to the origin and are returned as missing.
pub fn scene_from_records(
    description: &str,
    objects: &[ObjectInstance],
    records: &[PositionRecord],
) -> (Scene, Vec<String>) {
    let find = |name: &str| {
        let named = |r: &&PositionRecord| r.name == name || r.name.eq_ignore_ascii_case(name);
        records
            .iter()
            .filter(named)
            .find(|r| r.coordinate().is_some())
            .or_else(|| records.iter().find(named))
    };
    let mut missing = Vec::new();
    let coords: Vec<(String, Coordinate)> = objects
        .iter()
        .map(|o| {
            let c = find(&o.display_name).and_then(PositionRecord::coordinate);
            if c.is_none() {
                missing.push(o.display_name.clone());
            }
            (o.display_name.clone(), c.unwrap_or(Coordinate::ORIGIN))
        })
        .collect();
    let placements = objects
        .iter()
        .zip(&coords)
        .map(|(o, (_, c))| {
            let dir = match find(&o.display_name).and_then(|r| r.direction.clone()) {
                Some(Orientation::Angle(d)) => d,
                Some(Orientation::Text(t)) => facing_target(&t, objects, &coords)
                    .and_then(|to| compute_orientation(*c, to).ok())
                    .unwrap_or(Direction::FRONT),
                None => Direction::FRONT,
            };
            Placement {
                object: o.id,
                coord: *c,
                dir,
            }
        })
        .collect();
    let scene = Scene::new(description, objects.to_vec(), placements).expect("one placement per object");
    (scene, missing)
}

/// Final positions of an assignment answer: Step 3, falling back to Step 2
/// for names Step 3 leaves out.
pub fn answer_positions(out: &StructuredOutput) -> Vec<PositionRecord> {
    let mut records = out
        .payload("Step 3")
        .and_then(|v| positions_from_json(v, "Step 3").ok())
        .unwrap_or_default();
    if let Some(step2) = out.payload("Step 2").and_then(|v| positions_from_json(v, "Step 2").ok()) {
        for r in step2 {
            if !records.iter().any(|e| e.name == r.name && e.coordinate().is_some()) {
                records.push(r);
            }
        }
    }
    records
}

fn judge(
    description: &str,
    objects: &[ObjectInstance],
    layout: &LayoutInfo,
    out: &StructuredOutput,
) -> (Scene, VerificationReport) {
    let (scene, missing) = scene_from_records(description, objects, &answer_positions(out));
    let mut report = verify(&scene, layout);
    for name in missing {
        report.violations.push(Violation {
            kind: ViolationKind::Constraint,
            detail: format!("{name} was not assigned a coordinate"),
            refs: vec![name],
            measured_mm: None,
        });
    }
    report.ok = report.violations.is_empty();
    (scene, report)
}

fn gateway_error(e: crate::error::GatewayError) -> EngineError {
    EngineError::Stage(StageError::Gateway(e))
}

/// The assignment prompt for one description.
pub fn assignment_request(description: &str, objects: &[ObjectInstance], layout: &LayoutInfo) -> PromptRequest {
    let names: Vec<&str> = objects.iter().map(|o| o.display_name.as_str()).collect();
    PromptRequest::new(TemplateId::PlacementAssignment)
        .bind("prompt", description)
        .bind("objects", objects_json(&names))
        .bind("positions", positions_json(&layout.positions))
        .bind("relations", relations_json(&layout.relations))
}

/// Ask for an assignment, verify it, and feed violations back until the
/// scene verifies or `max_iters` feedback rounds are spent.
pub fn assign_with_refinement(
    description: &str,
    objects: &[ObjectInstance],
    layout: &LayoutInfo,
    gateway: &Gateway,
    max_iters: u32,
    temperature: f64,
) -> Result<Refinement, EngineError> {
    let mut req = assignment_request(description, objects, layout);
    req.temperature = temperature;
    let (mut messages, out) = gateway.ask(&req).map_err(gateway_error)?;
    let (mut scene, mut report) = judge(description, objects, layout, &out);
    let mut iterations = 1;
    while !report.ok && iterations <= max_iters {
        let feedback = PromptRequest::new(TemplateId::PlacementFeedback).bind("feedback", report.render(&scene, layout));
        messages.push(Message::user(
            crate::llm::render_prompt(&feedback).map_err(|e| gateway_error(e.into()))?,
        ));
        let out = gateway
            .converse(TemplateId::PlacementFeedback, &mut messages, temperature, req.max_retries)
            .map_err(gateway_error)?;
        (scene, report) = judge(description, objects, layout, &out);
        iterations += 1;
    }
    Ok(Refinement {
        scene,
        report,
        iterations,
        messages,
    })
}
