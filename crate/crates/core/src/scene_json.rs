//! The scene file: one JSON object with `description` and `objects`, each
//! object carrying `name`, `model`, `position` (`[x, y, 0]`, integer mm) and
//! `orientation` (degrees in `[0, 360)`), keys in that order, newline-terminated.

use serde::Deserialize;

use crate::error::SceneError;
use crate::scene::{format_degrees, Coordinate, Direction, ObjectId, ObjectInstance, Placement, Scene};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    description: String,
    objects: Vec<SceneFileObject>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFileObject {
    name: String,
    model: String,
    position: [i64; 3],
    orientation: f64,
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn emit(scene: &Scene) -> String {
    let mut out = String::from("{\n");
    out.push_str(&format!("  \"description\": {},\n", json_str(&scene.source_description)));
    let rows: Vec<String> = scene
        .placed()
        .map(|(o, p)| {
            format!(
                "    {{\"name\": {}, \"model\": {}, \"position\": [{}, {}, 0], \"orientation\": {}}}",
                json_str(&o.display_name),
                json_str(&o.library_name),
                p.coord.x,
                p.coord.y,
                format_degrees(p.dir.degrees()),
            )
        })
        .collect();
    if rows.is_empty() {
        out.push_str("  \"objects\": []\n");
    } else {
        out.push_str("  \"objects\": [\n");
        out.push_str(&rows.join(",\n"));
        out.push_str("\n  ]\n");
    }
    out.push_str("}\n");
    out
}

pub fn parse(text: &str) -> Result<Scene, SceneError> {
    let file: SceneFile =
        serde_json::from_str(text).map_err(|e| SceneError::Format(e.to_string()))?;
    let mut objects = Vec::with_capacity(file.objects.len());
    let mut placements = Vec::with_capacity(file.objects.len());
    for (i, o) in file.objects.into_iter().enumerate() {
        if o.position[2] != 0 {
            return Err(SceneError::Format(format!("{}: z must be 0", o.name)));
        }
        if !(0.0..360.0).contains(&o.orientation) {
            return Err(SceneError::Format(format!(
                "{}: orientation {} outside [0, 360)",
                o.name, o.orientation
            )));
        }
        let id = ObjectId(i as u32);
        placements.push(Placement {
            object: id,
            coord: Coordinate::new(o.position[0], o.position[1]),
            dir: Direction::new(o.orientation)?,
        });
        objects.push(ObjectInstance {
            id,
            library_name: o.model,
            display_name: o.name,
        });
    }
    Scene::new(file.description, objects, placements)
}
