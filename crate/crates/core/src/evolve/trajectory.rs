use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use super::DescriptionRecord;
use crate::engine::{assign_with_refinement, verify, Refinement, VerificationReport};
use crate::facts::LayoutInfo;
use crate::layout::{extract_layout, retrieve_objects};
use crate::llm::format::placements_json;
use crate::llm::{render_prompt, Gateway, Message, PromptRequest, Role, TemplateId};
use crate::scene::{ObjectLibrary, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryTask {
    Assign,
    VerifyPos,
    VerifyNeg,
    Reassign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub description_id: String,
    pub task: TrajectoryTask,
    pub messages: Vec<Message>,
    pub loss_mask: Vec<bool>,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub temperature: f64,
    pub validation_fraction: f64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            validation_fraction: 0.05,
        }
    }
}

fn mask(messages: &[Message]) -> Vec<bool> {
    let last = messages.iter().rposition(|m| m.role == Role::Assistant);
    (0..messages.len()).map(|i| Some(i) == last).collect()
}

fn record(description_id: &str, task: TrajectoryTask, messages: Vec<Message>) -> TrajectoryRecord {
    let mut h = Sha256::new();
    h.update(description_id.as_bytes());
    h.update(format!("{task:?}").as_bytes());
    for m in &messages {
        h.update(m.content.as_bytes());
        h.update([0u8]);
    }
    TrajectoryRecord {
        id: hex::encode(&h.finalize()[..8]),
        description_id: description_id.to_string(),
        task,
        loss_mask: mask(&messages),
        messages,
        split: Split::Train,
    }
}

/// Verification conversation for `scene`. The answer comes from `gateway`
/// unless its verdict disagrees with the deterministic one.
fn verify_messages(
    s: &str,
    scene: &Scene,
    report: &VerificationReport,
    layout: &LayoutInfo,
    gateway: &Gateway,
    temperature: f64,
) -> Option<Vec<Message>> {
    let mut req = PromptRequest::new(TemplateId::PlacementVerification)
        .bind("prompt", s)
        .bind("placements", placements_json(scene));
    req.temperature = temperature;
    let prompt = render_prompt(&req).ok()?;
    let answer = match gateway.ask(&req) {
        Ok((_, out)) if out.payload("Error").and_then(|v| v.as_bool()) == Some(!report.ok) => {
            gateway_answer(&out)
        }
        _ => report.render(scene, layout),
    };
    Some(vec![Message::user(prompt), Message::assistant(answer)])
}

fn gateway_answer(out: &crate::llm::StructuredOutput) -> String {
    out.sections
        .iter()
        .map(|s| {
            let body = match &s.payload {
                serde_json::Value::Bool(b) => if *b { "Yes".to_string() } else { "No".to_string() },
                serde_json::Value::String(t) => t.clone(),
                v => v.to_string(),
            };
            format!("{}: {body}", s.header)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn one_description(
    d: &DescriptionRecord,
    strong: &Gateway,
    weak: &Gateway,
    library: &ObjectLibrary,
    opts: &TrajectoryOptions,
) -> Result<Vec<TrajectoryRecord>, String> {
    let t = opts.temperature;
    let r = retrieve_objects(&d.text, library, strong, t).map_err(|e| e.to_string())?;
    let s = r.rewritten_description.as_str();
    let layout = extract_layout(s, &r.objects, library, strong, t).map_err(|e| e.to_string())?;
    let mut out = Vec::new();

    let Refinement { scene, report, messages, .. } =
        assign_with_refinement(s, &r.objects, &layout, strong, 0, t).map_err(|e| e.to_string())?;
    let verified = verify_messages(s, &scene, &report, &layout, strong, t).ok_or("verification prompt")?;
    out.push(record(&d.id, TrajectoryTask::Assign, messages));
    let task = if report.ok { TrajectoryTask::VerifyPos } else { TrajectoryTask::VerifyNeg };
    out.push(record(&d.id, task, verified));

    let weak_run = assign_with_refinement(s, &r.objects, &layout, weak, 0, t).map_err(|e| e.to_string())?;
    if !weak_run.report.ok {
        let neg = verify_messages(s, &weak_run.scene, &weak_run.report, &layout, strong, t)
            .ok_or("verification prompt")?;
        // the strong model answers the feedback turn of the weak conversation
        let mut messages = weak_run.messages.clone();
        let feedback = PromptRequest::new(TemplateId::PlacementFeedback)
            .bind("feedback", weak_run.report.render(&weak_run.scene, &layout));
        messages.push(Message::user(render_prompt(&feedback).map_err(|e| e.to_string())?));
        let answer = strong
            .converse(TemplateId::PlacementFeedback, &mut messages, t, 3)
            .map_err(|e| e.to_string())?;
        let (fixed, _) = crate::engine::scene_from_records(s, &r.objects, &crate::engine::answer_positions(&answer));
        if verify(&fixed, &layout).ok && messages.len() >= 4 {
            out.push(record(&d.id, TrajectoryTask::VerifyNeg, neg));
            out.push(record(&d.id, TrajectoryTask::Reassign, messages));
        }
    }
    Ok(out)
}

/// Assign, verify and reassign conversations for every description. The
/// strong gateway produces the reference answers; the weak one supplies the
/// mistakes that verification and reassignment learn from.
pub fn collect_trajectories(
    pool: &[DescriptionRecord],
    strong: &Gateway,
    weak: &Gateway,
    library: &ObjectLibrary,
    opts: &TrajectoryOptions,
) -> Vec<TrajectoryRecord> {
    let mut records: Vec<TrajectoryRecord> = pool
        .par_iter()
        .map(|d| match one_description(d, strong, weak, library, opts) {
            Ok(r) => r,
            Err(e) => {
                warn!(id = %d.id, error = %e, "skipping description");
                Vec::new()
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|a, b| records[*a].id.cmp(&records[*b].id));
    let n_val = (records.len() as f64 * opts.validation_fraction.clamp(0.0, 1.0)).round() as usize;
    for &i in order.iter().take(n_val) {
        records[i].split = Split::Validation;
    }
    records
}
