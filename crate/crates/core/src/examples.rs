//! The welding-cell example used throughout the docs and tests.

use crate::facts::{LayoutInfo, Location, Orientation, PositionRecord, RelationRecord};
use crate::scene::{number_instances, Coordinate, Direction, ObjectInstance, Placement, Scene};

pub const WORKED_DESCRIPTION: &str = "One Welding Table for spot welding, with a Turntable at \
[1500, 2500, 0], is equipped with an ABB Robot IRB6600, positioned 2.6 meters to the right and \
2.5 meters back from the Turntable.";

pub const WORKED_OBJECTS: [&str; 3] = ["Welding Table", "Turntable", "ABB Robot IRB6600"];

pub fn worked_objects() -> Vec<ObjectInstance> {
    number_instances(&WORKED_OBJECTS)
}

pub fn worked_layout() -> LayoutInfo {
    let mut l = LayoutInfo::default();
    l.push_position(PositionRecord {
        name: "Turntable".into(),
        location: Some(Location::Coordinate(Coordinate::new(1500, 2500))),
        direction: Some(Orientation::Angle(Direction::FRONT)),
    });
    l.push_relation(RelationRecord {
        subject: "ABB Robot IRB6600".into(),
        object: "Turntable".into(),
        relation_text: "2.6 meters to the right and 2.5 meters back".into(),
    });
    l
}

fn scene_with(coords: [(i64, i64); 3]) -> Scene {
    let objects = worked_objects();
    let placements = objects
        .iter()
        .zip(coords)
        .map(|(o, (x, y))| Placement {
            object: o.id,
            coord: Coordinate::new(x, y),
            dir: Direction::FRONT,
        })
        .collect();
    Scene::new(WORKED_DESCRIPTION, objects, placements).expect("valid example scene")
}

/// Welding Table, Turntable, ABB in the order of [`WORKED_OBJECTS`].
pub fn corrupted_scene() -> Scene {
    scene_with([(-5000, 0), (1500, 2500), (-1900, 0)])
}

/// The first, wrong answer of the two-round reassignment example.
pub fn misplaced_scene() -> Scene {
    scene_with([(0, 3500), (1500, 2500), (-1100, 0)])
}

/// The corrected answer.
pub fn reference_scene() -> Scene {
    scene_with([(0, 4500), (1500, 2500), (-1000, -100)])
}
