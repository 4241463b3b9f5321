//! Object retrieval and layout extraction, the two model-mediated analysis
//! stages.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::analysis::lookup_object;
use crate::error::StageError;
use crate::facts::{LayoutInfo, NamedAnchor, PositionRecord, RelationRecord};
use crate::llm::format::objects_json;
use crate::llm::parse::{names_from_json, positions_from_json, relations_from_json};
use crate::llm::{Gateway, PromptRequest, StructuredOutput, TemplateId};
use crate::scene::{number_instances, Coordinate, ObjectInstance, ObjectLibrary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Substitution {
    pub original: String,
    /// `None` when the object was removed.
    pub replacement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub objects: Vec<ObjectInstance>,
    pub rewritten_description: String,
    pub substitutions: Vec<Substitution>,
}

fn place_word_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"(?i)^(?:the\s+|a\s+|an\s+)?(?:[a-z]+\s+)?(?:work\s*station|station|scene)s?$").expect("valid regex"))
}

fn number_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

fn step_payload<'a>(out: &'a StructuredOutput, step: &str) -> Result<&'a serde_json::Value, StageError> {
    out.payload(step)
        .ok_or_else(|| StageError::Invalid(format!("answer has no {step} payload")))
}

fn invalid(e: crate::error::ParseError) -> StageError {
    StageError::Invalid(e.to_string())
}

/// Library name for a model-proposed object, if it can be kept.
fn resolve_kind(name: &str, library: &ObjectLibrary) -> (Option<String>, bool) {
    if library.contains(name) {
        return (Some(name.to_string()), false);
    }
    if let Some(e) = library.entries().iter().find(|e| e.name.eq_ignore_ascii_case(name)) {
        return (Some(e.name.clone()), true);
    }
    (lookup_object(name, library), true)
}

/// Ask for the objects of `description`, repair names outside the library
/// and number repeated kinds.
pub fn retrieve_objects(
    description: &str,
    library: &ObjectLibrary,
    gateway: &Gateway,
    temperature: f64,
) -> Result<RetrievalResult, StageError> {
    if description.trim().is_empty() {
        return Err(StageError::EmptyDescription);
    }
    let mut req = PromptRequest::new(TemplateId::ObjectRetrieval).bind("prompt", description);
    req.temperature = temperature;
    let (_, out) = gateway.ask(&req)?;
    let found = names_from_json(step_payload(&out, "Step 1")?, "Step 1").map_err(invalid)?;
    let fixed = names_from_json(step_payload(&out, "Step 2")?, "Step 2").map_err(invalid)?;

    let mut substitutions = Vec::new();
    if found.len() == fixed.len() {
        for (a, b) in found.iter().zip(&fixed) {
            let same = a.eq_ignore_ascii_case(b) || lookup_object(a, library).as_deref() == Some(b.as_str());
            if !same && !place_word_re().is_match(a) {
                substitutions.push(Substitution {
                    original: a.clone(),
                    replacement: Some(b.clone()),
                });
            }
        }
    }
    let mut kinds = Vec::new();
    for name in fixed.iter().filter(|n| !place_word_re().is_match(n.trim())) {
        match resolve_kind(name.trim(), library) {
            (Some(k), changed) => {
                if changed {
                    substitutions.push(Substitution {
                        original: name.clone(),
                        replacement: Some(k.clone()),
                    });
                }
                kinds.push(k);
            }
            (None, _) => substitutions.push(Substitution {
                original: name.clone(),
                replacement: None,
            }),
        }
    }
    let rewritten = out
        .payload("Step 3")
        .and_then(|v| v.as_str())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .unwrap_or(description.trim())
        .to_string();
    Ok(RetrievalResult {
        objects: number_instances(&kinds),
        rewritten_description: rewritten,
        substitutions,
    })
}

/// Numbers written in `s`, also read as metres.
fn literal_values(s: &str) -> BTreeSet<i64> {
    let mut out = BTreeSet::from([0]);
    for m in number_re().find_iter(s) {
        if let Ok(v) = m.as_str().parse::<f64>() {
            out.insert(v.round() as i64);
            out.insert((v * 1000.0).round() as i64);
        }
    }
    out
}

fn stated_in(c: Coordinate, values: &BTreeSet<i64>) -> bool {
    values.contains(&c.x) && values.contains(&c.y)
}

enum Ref {
    Object(String),
    Anchor(String),
}

fn resolve_ref(name: &str, objects: &[ObjectInstance], library: &ObjectLibrary) -> Result<Ref, StageError> {
    let name = name.trim();
    if let Some(o) = objects.iter().find(|o| o.display_name == name) {
        return Ok(Ref::Object(o.display_name.clone()));
    }
    if let Some(o) = objects.iter().find(|o| o.display_name.eq_ignore_ascii_case(name)) {
        return Ok(Ref::Object(o.display_name.clone()));
    }
    match lookup_object(name, library) {
        Some(k) => {
            let same: Vec<_> = objects.iter().filter(|o| o.library_name == k).collect();
            match same.as_slice() {
                [one] => Ok(Ref::Object(one.display_name.clone())),
                _ => Err(StageError::UnresolvedName(name.to_string())),
            }
        }
        None => Ok(Ref::Anchor(name.to_string())),
    }
}

/// Ask for the stated positions and pairwise relations of `s`.
pub fn extract_layout(
    s: &str,
    objects: &[ObjectInstance],
    library: &ObjectLibrary,
    gateway: &Gateway,
    temperature: f64,
) -> Result<LayoutInfo, StageError> {
    let names: Vec<&str> = objects.iter().map(|o| o.display_name.as_str()).collect();
    let mut req = PromptRequest::new(TemplateId::LayoutExtraction)
        .bind("prompt", s)
        .bind("objects", objects_json(&names));
    req.temperature = temperature;
    let (_, out) = gateway.ask(&req)?;
    let positions = positions_from_json(step_payload(&out, "Step 2")?, "Step 2").map_err(invalid)?;
    let relations = relations_from_json(step_payload(&out, "Step 3")?, "Step 3").map_err(invalid)?;

    let values = literal_values(s);
    let mut layout = LayoutInfo::default();
    let mut anchors: Vec<String> = Vec::new();
    let mut name_of = |n: &str| -> Result<String, StageError> {
        Ok(match resolve_ref(n, objects, library)? {
            Ref::Object(o) => o,
            Ref::Anchor(a) => {
                if !anchors.contains(&a) {
                    anchors.push(a.clone());
                }
                a
            }
        })
    };
    for p in positions {
        let name = name_of(&p.name)?;
        let location = match p.coordinate() {
            Some(c) if !stated_in(c, &values) => None,
            _ => p.location,
        };
        layout.push_position(PositionRecord {
            name,
            location,
            direction: p.direction,
        });
    }
    for r in relations {
        let subject = name_of(&r.subject)?;
        let object = name_of(&r.object)?;
        layout.push_relation(RelationRecord {
            subject,
            object,
            relation_text: r.relation_text,
        });
    }
    layout.anchors = anchors
        .into_iter()
        .map(|a| NamedAnchor {
            coord: layout.positions.iter().find(|p| p.name == a).and_then(PositionRecord::coordinate),
            name: a,
        })
        .collect();
    layout.check_references(names.iter().copied())?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::examples;
    use crate::llm::{Backend, ScriptedBackend};

    fn gw() -> Gateway {
        Gateway::new(Arc::new(ScriptedBackend::new(1, ObjectLibrary::default())))
    }

    fn scripted_answer(answer: &str) -> Gateway {
        let b = ScriptedBackend::new(1, ObjectLibrary::default());
        b.prime(answer);
        Gateway::new(Arc::new(b) as Arc<dyn Backend>)
    }

    #[test]
    fn retrieval_examples() {
        let lib = ObjectLibrary::default();
        let r = retrieve_objects("Position a Kuka robot in front of a table.", &lib, &gw(), 1.0).unwrap();
        let kinds: Vec<&str> = r.objects.iter().map(|o| o.library_name.as_str()).collect();
        assert_eq!(kinds, ["Kuka Robot KR125", "Welding Table"]);
        assert!(r.rewritten_description.contains("Kuka Robot KR125"));
        assert!(r.rewritten_description.contains("Welding Table"));

        let r = retrieve_objects("Give me two conveyors, arranged in parallel.", &lib, &gw(), 1.0).unwrap();
        let names: Vec<&str> = r.objects.iter().map(|o| o.display_name.as_str()).collect();
        assert_eq!(names, ["Conveyor 1", "Conveyor 2"]);

        assert_eq!(retrieve_objects("  ", &lib, &gw(), 1.0), Err(StageError::EmptyDescription));
    }

    #[test]
    fn unknown_objects_are_substituted_or_removed() {
        let answer = "#Step 1: Find all objects#\nAnalysis: a\nObjects: [\"forklift\", \"blue conveyor\", \"workstation\"]\n\n\
                      #Step 2: Fix object names#\nAnalysis: b\nObjects: [\"Forklift\", \"blue conveyor\", \"workstation\"]\n\n\
                      #Step 3: Rewrite description#\nAnalysis: c\nNew Description: A Conveyor.\n";
        let r = retrieve_objects("x", &ObjectLibrary::default(), &scripted_answer(answer), 1.0).unwrap();
        assert_eq!(r.objects.len(), 1);
        assert_eq!(r.objects[0].library_name, "Conveyor");
        assert!(r.substitutions.contains(&Substitution {
            original: "Forklift".into(),
            replacement: None
        }));
        assert!(r.substitutions.contains(&Substitution {
            original: "blue conveyor".into(),
            replacement: Some("Conveyor".into())
        }));
    }

    #[test]
    fn worked_example_extraction() {
        let lib = ObjectLibrary::default();
        let l = extract_layout(examples::WORKED_DESCRIPTION, &examples::worked_objects(), &lib, &gw(), 1.0).unwrap();
        assert_eq!(l, examples::worked_layout());
    }

    #[test]
    fn fuzzy_text_has_no_positions() {
        let lib = ObjectLibrary::default();
        let objects = number_instances(&["Kuka Robot KR125", "Welding Table"]);
        let l = extract_layout("Position a Kuka Robot KR125 in front of a Welding Table.", &objects, &lib, &gw(), 1.0).unwrap();
        assert!(l.positions.is_empty());
        assert_eq!(l.relations.len(), 1);
    }

    #[test]
    fn invented_coordinates_are_dropped_and_strangers_rejected() {
        let lib = ObjectLibrary::default();
        let objects = number_instances(&["Cabinet"]);
        let answer = |name: &str| {
            format!(
                "#Step 1: Identify Objects#\nAnalysis: a\nObjects: [\"Cabinet\"]\n\n\
                 #Step 2: Absolute Positions#\nAnalysis: b\nPositions: [{{\"name\": \"{name}\", \"position\": \"[1234, 0, 0]\", \"orientation\": \"90\"}}]\n\n\
                 #Step 3: Relative Positions#\nAnalysis: c\nRelative Positions: []\n"
            )
        };
        let l = extract_layout("Put a Cabinet facing left.", &objects, &lib, &scripted_answer(&answer("Cabinet")), 1.0).unwrap();
        assert_eq!(l.positions.len(), 1);
        assert!(l.positions[0].coordinate().is_none());
        let e = extract_layout("Put a Cabinet.", &objects, &lib, &scripted_answer(&answer("Turntable")), 1.0).unwrap_err();
        assert_eq!(e, StageError::UnresolvedName("Turntable".into()));
    }
}
