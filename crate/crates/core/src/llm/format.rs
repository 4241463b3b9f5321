//! JSON renderings of layout facts and placements, in the shape the stage
//! prompts show (`"position": "[x, y, 0]"`).

use serde::Serialize;
use serde_json::{json, Value};

use crate::facts::{Location, Orientation, PositionRecord, RelationRecord};
use crate::scene::{format_degrees, Scene};

/// Pretty JSON with four-space indentation.
pub fn pretty(v: &Value) -> String {
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    v.serialize(&mut ser).expect("json value serializes");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn objects_json<S: AsRef<str>>(names: &[S]) -> String {
    let v: Vec<&str> = names.iter().map(AsRef::as_ref).collect();
    serde_json::to_string(&v).expect("names serialize")
}

fn orientation_text(o: &Option<Orientation>) -> Value {
    match o {
        Some(Orientation::Angle(d)) => Value::String(format_degrees(d.degrees())),
        Some(Orientation::Text(t)) => Value::String(t.clone()),
        None => Value::String(String::new()),
    }
}

pub fn positions_value(positions: &[PositionRecord]) -> Value {
    Value::Array(
        positions
            .iter()
            .map(|p| {
                let position = match &p.location {
                    Some(Location::Coordinate(c)) => Value::String(c.to_string()),
                    Some(Location::Text(t)) => Value::String(t.clone()),
                    None => Value::String(String::new()),
                };
                json!({"name": p.name, "position": position, "orientation": orientation_text(&p.direction)})
            })
            .collect(),
    )
}

pub fn positions_json(positions: &[PositionRecord]) -> String {
    pretty(&positions_value(positions))
}

pub fn relations_value(relations: &[RelationRecord]) -> Value {
    Value::Array(
        relations
            .iter()
            .map(|r| json!({"object 1": r.subject, "relation": r.relation_text, "object 2": r.object}))
            .collect(),
    )
}

pub fn relations_json(relations: &[RelationRecord]) -> String {
    pretty(&relations_value(relations))
}

pub fn placements_value(scene: &Scene) -> Value {
    Value::Array(
        scene
            .placed()
            .map(|(o, p)| {
                json!({
                    "name": o.display_name,
                    "position": p.coord.to_string(),
                    "orientation": format_degrees(p.dir.degrees()),
                })
            })
            .collect(),
    )
}

pub fn placements_json(scene: &Scene) -> String {
    pretty(&placements_value(scene))
}
