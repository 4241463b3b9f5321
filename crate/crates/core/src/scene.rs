//! Scene model: the object library, placed instances and the scene file format.
//!
//! Objects are points on the ground plane. `+x` is the front, `+y` the left,
//! and a direction is measured counter-clockwise from `+x` in degrees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SceneError;

/// Minimum centre-to-centre distance between two objects, in millimetres.
pub const MIN_DISTANCE_MM: f64 = 1000.0;

/// Default allocation range for both axes, in millimetres.
pub const DEFAULT_BOUNDS: Bounds = Bounds {
    min: -5000,
    max: 5000,
};

pub const GUARDING: &str = "Guarding";

/// Coarse object families, used when substituting unknown objects and when
/// naming generated model lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Robot,
    Table,
    Turntable,
    Cabinet,
    ValveStand,
    Conveyor,
    Guarding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    pub model_path: String,
    pub category: Category,
}

/// The set of placeable models. Names are case-sensitive and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectLibrary {
    entries: Vec<LibraryEntry>,
}

const DEFAULT_ENTRIES: [(&str, &str, Category); 10] = [
    ("Kuka Robot KR125", "Welding/kuka_kr125.cojt", Category::Robot),
    ("Kuka Robot KR350", "Welding/kuka_kr350.cojt", Category::Robot),
    ("ABB Robot IRB6600", "Welding/abb_irb6600.cojt", Category::Robot),
    ("YASKAWA Robot ma01800", "Welding/yaskawa_ma01800.cojt", Category::Robot),
    ("Welding Table", "Welding/welding_table.cojt", Category::Table),
    ("Turntable", "Welding/turntable.cojt", Category::Turntable),
    ("Cabinet", "Welding/cabinet.cojt", Category::Cabinet),
    ("ValveStand", "Welding/valvestand.cojt", Category::ValveStand),
    ("Conveyor", "Welding/conveyor.cojt", Category::Conveyor),
    ("Guarding", "Welding/guarding.cojt", Category::Guarding),
];

impl Default for ObjectLibrary {
    fn default() -> Self {
        let entries = DEFAULT_ENTRIES
            .iter()
            .map(|&(name, path, category)| LibraryEntry {
                name: name.to_string(),
                model_path: path.to_string(),
                category,
            })
            .collect();
        Self { entries }
    }
}

impl ObjectLibrary {
    pub fn new(entries: Vec<LibraryEntry>) -> Result<Self, SceneError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.as_str()) {
                return Err(SceneError::DuplicateLibraryEntry(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Library entries of a category, in library order.
    pub fn of_category(&self, category: Category) -> impl Iterator<Item = &LibraryEntry> {
        self.entries.iter().filter(move |e| e.category == category)
    }

    /// The permission list as it appears in prompts: `[A, B, ...]`.
    pub fn permission_list(&self) -> String {
        let names: Vec<&str> = self.names().collect();
        format!("[{}]", names.join(", "))
    }
}

/// Opaque instance token, unique within a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub library_name: String,
    pub display_name: String,
}

impl ObjectInstance {
    pub fn is_guarding(&self) -> bool {
        self.library_name == GUARDING
    }
}

/// Build instances from a list of library names, numbering repeated kinds as
/// `"<name> 1"`, `"<name> 2"`, ... in order of appearance.
pub fn number_instances<S: AsRef<str>>(library_names: &[S]) -> Vec<ObjectInstance> {
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for n in library_names {
        *totals.entry(n.as_ref()).or_default() += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    library_names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let n = n.as_ref();
            let k = seen.entry(n).or_default();
            *k += 1;
            let display_name = if totals[n] > 1 {
                format!("{n} {k}")
            } else {
                n.to_string()
            };
            ObjectInstance {
                id: ObjectId(i as u32),
                library_name: n.to_string(),
                display_name,
            }
        })
        .collect()
}

/// Strip a trailing instance number: `"Conveyor 2"` -> `"Conveyor"`.
pub fn base_name(display_name: &str) -> &str {
    match display_name.rsplit_once(' ') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => display_name,
    }
}

/// A point on the ground plane in integer millimetres. `z` is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Coordinate {
    pub x: i64,
    pub y: i64,
}

impl Coordinate {
    pub const ORIGIN: Coordinate = Coordinate { x: 0, y: 0 };

    pub fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    /// Round real millimetre values half away from zero.
    pub fn from_mm(x: f64, y: f64) -> Result<Self, SceneError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(SceneError::NonFinite("coordinate"));
        }
        Ok(Self {
            x: x.round() as i64,
            y: y.round() as i64,
        })
    }

    pub fn z(&self) -> i64 {
        0
    }

    pub fn offset(self, dx: i64, dy: i64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
        }
    }
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, 0]", self.x, self.y)
    }
}

pub fn euclidean_distance(a: Coordinate, b: Coordinate) -> f64 {
    let dx = (a.x - b.x) as f64;
    let dy = (a.y - b.y) as f64;
    dx.hypot(dy)
}

/// Heading in degrees, counter-clockwise from `+x`, always in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Direction(f64);

impl Direction {
    pub const FRONT: Direction = Direction(0.0);

    pub fn new(degrees: f64) -> Result<Self, SceneError> {
        normalize_direction(degrees)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0 * std::f64::consts::PI / 180.0
    }

    /// Smallest absolute angle between two headings, in `[0, 180]`.
    pub fn angular_distance(self, other: Direction) -> f64 {
        let d = (self.0 - other.0).rem_euclid(360.0);
        d.min(360.0 - d)
    }
}

impl TryFrom<f64> for Direction {
    type Error = SceneError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        normalize_direction(v)
    }
}

impl From<Direction> for f64 {
    fn from(d: Direction) -> f64 {
        d.0
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_degrees(self.0))
    }
}

pub fn normalize_direction(degrees: f64) -> Result<Direction, SceneError> {
    if !degrees.is_finite() {
        return Err(SceneError::NonFinite("direction"));
    }
    let mut r = degrees.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        r = 0.0;
    }
    // fold -0.0
    Ok(Direction(r + 0.0))
}

/// Integral degrees print without a fractional part; everything else uses the
/// shortest round-tripping representation.
pub fn format_degrees(d: f64) -> String {
    if d.fract() == 0.0 && d.abs() < 1e15 {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub object: ObjectId,
    pub coord: Coordinate,
    pub dir: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: i64,
    pub max: i64,
}

impl Bounds {
    pub fn contains(&self, c: Coordinate) -> bool {
        (self.min..=self.max).contains(&c.x) && (self.min..=self.max).contains(&c.y)
    }
}

/// A pair of objects closer than [`MIN_DISTANCE_MM`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapPair {
    pub first: String,
    pub second: String,
    pub distance_mm: f64,
}

/// Placed objects together with the description they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub source_description: String,
    pub objects: Vec<ObjectInstance>,
    pub placements: Vec<Placement>,
}

impl Scene {
    /// Checks the id bijection between objects and placements and the
    /// uniqueness of display names.
    pub fn new(
        source_description: impl Into<String>,
        objects: Vec<ObjectInstance>,
        placements: Vec<Placement>,
    ) -> Result<Self, SceneError> {
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for o in &objects {
            if !ids.insert(o.id) {
                return Err(SceneError::DuplicateId(o.id.0));
            }
            if !names.insert(o.display_name.as_str()) {
                return Err(SceneError::DuplicateName(o.display_name.clone()));
            }
        }
        let mut placed = BTreeSet::new();
        for p in &placements {
            if !ids.contains(&p.object) {
                return Err(SceneError::UnknownObject(p.object.0));
            }
            if !placed.insert(p.object) {
                return Err(SceneError::DuplicatePlacement(p.object.0));
            }
        }
        if let Some(missing) = objects.iter().find(|o| !placed.contains(&o.id)) {
            return Err(SceneError::Unplaced(missing.display_name.clone()));
        }
        Ok(Self {
            source_description: source_description.into(),
            objects,
            placements,
        })
    }

    pub fn empty(source_description: impl Into<String>) -> Self {
        Self {
            source_description: source_description.into(),
            objects: Vec::new(),
            placements: Vec::new(),
        }
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn by_name(&self, display_name: &str) -> Option<(&ObjectInstance, &Placement)> {
        let o = self.objects.iter().find(|o| o.display_name == display_name)?;
        let p = self.placements.iter().find(|p| p.object == o.id)?;
        Some((o, p))
    }

    /// Placed objects in placement order.
    pub fn placed(&self) -> impl Iterator<Item = (&ObjectInstance, &Placement)> {
        self.placements
            .iter()
            .filter_map(move |p| self.object(p.object).map(|o| (o, p)))
    }

    /// All pairs closer than the minimum distance, skipping pairs involving a
    /// Guarding and pairs whose members are both in `pinned`.
    pub fn overlapping_pairs(&self, pinned: &BTreeSet<String>) -> Vec<OverlapPair> {
        let placed: Vec<_> = self.placed().collect();
        let mut out = Vec::new();
        for (i, (a, pa)) in placed.iter().enumerate() {
            for (b, pb) in &placed[i + 1..] {
                if a.is_guarding() || b.is_guarding() {
                    continue;
                }
                if pinned.contains(&a.display_name) && pinned.contains(&b.display_name) {
                    continue;
                }
                let d = euclidean_distance(pa.coord, pb.coord);
                if d < MIN_DISTANCE_MM {
                    out.push(OverlapPair {
                        first: a.display_name.clone(),
                        second: b.display_name.clone(),
                        distance_mm: d,
                    });
                }
            }
        }
        out
    }

    /// Serialize to the scene file format.
    pub fn to_json(&self) -> String {
        crate::scene_json::emit(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        crate::scene_json::parse(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let d = euclidean_distance(Coordinate::new(1500, 2500), Coordinate::new(-1000, -100));
        assert!((d - (2500f64.powi(2) + 2600f64.powi(2)).sqrt()).abs() < 1e-9);
        // hypot(2500, 2600); 3624.9 would need a different pair
        assert!((d - 3606.94).abs() < 0.005);
        assert_eq!(euclidean_distance(Coordinate::ORIGIN, Coordinate::ORIGIN), 0.0);
        assert_eq!(euclidean_distance(Coordinate::ORIGIN, Coordinate::new(600, 800)), 1000.0);
    }

    #[test]
    fn direction_examples() {
        assert_eq!(normalize_direction(450.0).unwrap().degrees(), 90.0);
        assert_eq!(normalize_direction(-90.0).unwrap().degrees(), 270.0);
        assert_eq!(normalize_direction(0.0).unwrap().degrees(), 0.0);
        assert_eq!(normalize_direction(-0.0).unwrap().degrees().to_bits(), 0f64.to_bits());
        assert!(normalize_direction(f64::NAN).is_err());
        assert!(normalize_direction(f64::INFINITY).is_err());
        // rounding edge: tiny negative values must not produce 360
        let tiny = normalize_direction(-1e-14).unwrap().degrees();
        assert!((0.0..360.0).contains(&tiny));
    }

    #[test]
    fn default_library_is_the_permission_list() {
        let lib = ObjectLibrary::default();
        assert_eq!(lib.entries().len(), 10);
        assert_eq!(
            lib.permission_list(),
            "[Kuka Robot KR125, Kuka Robot KR350, ABB Robot IRB6600, YASKAWA Robot ma01800, \
             Welding Table, Turntable, Cabinet, ValveStand, Conveyor, Guarding]"
        );
        assert!(lib.contains("Guarding"));
        assert!(!lib.contains("guarding"));
    }

    #[test]
    fn library_rejects_duplicates() {
        let e = LibraryEntry {
            name: "A".into(),
            model_path: "a".into(),
            category: Category::Cabinet,
        };
        assert!(ObjectLibrary::new(vec![e.clone(), e]).is_err());
    }

    #[test]
    fn numbering_only_applies_to_repeats() {
        let objs = number_instances(&["Conveyor", "Welding Table", "Conveyor"]);
        let names: Vec<_> = objs.iter().map(|o| o.display_name.as_str()).collect();
        assert_eq!(names, ["Conveyor 1", "Welding Table", "Conveyor 2"]);
        assert_eq!(base_name("Conveyor 2"), "Conveyor");
        assert_eq!(base_name("Kuka Robot KR125"), "Kuka Robot KR125");
    }

    #[test]
    fn scene_requires_bijection() {
        let objs = number_instances(&["Cabinet", "Turntable"]);
        let one = vec![Placement {
            object: objs[0].id,
            coord: Coordinate::ORIGIN,
            dir: Direction::FRONT,
        }];
        assert!(matches!(
            Scene::new("", objs.clone(), one),
            Err(SceneError::Unplaced(_))
        ));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(Coordinate::from_mm(2.5, -2.5).unwrap(), Coordinate::new(3, -3));
        assert_eq!(Coordinate::from_mm(1499.4, -0.4).unwrap(), Coordinate::new(1499, 0));
    }

    fn naive_overlaps(scene: &Scene, pinned: &BTreeSet<String>) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for a in &scene.objects {
            for b in &scene.objects {
                if a.id >= b.id {
                    continue;
                }
                let pa = scene.placements.iter().find(|p| p.object == a.id).unwrap();
                let pb = scene.placements.iter().find(|p| p.object == b.id).unwrap();
                let dx = (pa.coord.x - pb.coord.x) as f64;
                let dy = (pa.coord.y - pb.coord.y) as f64;
                let close = dx * dx + dy * dy < 1_000_000.0;
                let exempt = a.library_name == "Guarding"
                    || b.library_name == "Guarding"
                    || (pinned.contains(&a.display_name) && pinned.contains(&b.display_name));
                if close && !exempt {
                    out.insert((a.display_name.clone(), b.display_name.clone()));
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(
            ax in -10_000i64..10_000, ay in -10_000i64..10_000,
            bx in -10_000i64..10_000, by in -10_000i64..10_000,
            cx in -10_000i64..10_000, cy in -10_000i64..10_000,
        ) {
            let (a, b, c) = (Coordinate::new(ax, ay), Coordinate::new(bx, by), Coordinate::new(cx, cy));
            prop_assert!(euclidean_distance(a, b) >= 0.0);
            prop_assert_eq!(euclidean_distance(a, b), euclidean_distance(b, a));
            prop_assert!(euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9);
        }

        #[test]
        fn normalize_is_idempotent_and_periodic(deg in -1e6f64..1e6, k in -20i32..20) {
            let once = normalize_direction(deg).unwrap();
            prop_assert!((0.0..360.0).contains(&once.degrees()));
            prop_assert_eq!(normalize_direction(once.degrees()).unwrap(), once);
            let shifted = normalize_direction(deg + 360.0 * k as f64).unwrap();
            prop_assert!(shifted.angular_distance(once) < 1e-6);
        }

        #[test]
        fn overlap_checker_matches_all_pairs_scan(
            specs in proptest::collection::vec((0usize..10, -3i64..3, -3i64..3, any::<bool>()), 1..8)
        ) {
            let lib = ObjectLibrary::default();
            let names: Vec<&str> = specs.iter().map(|s| lib.entries()[s.0].name.as_str()).collect();
            let objects = number_instances(&names);
            let placements = objects.iter().zip(&specs).map(|(o, s)| Placement {
                object: o.id,
                coord: Coordinate::new(s.1 * 600, s.2 * 600),
                dir: Direction::FRONT,
            }).collect();
            let pinned: BTreeSet<String> = objects.iter().zip(&specs)
                .filter(|(_, s)| s.3).map(|(o, _)| o.display_name.clone()).collect();
            let scene = Scene::new("", objects, placements).unwrap();
            let got: BTreeSet<_> = scene.overlapping_pairs(&pinned).into_iter()
                .map(|p| (p.first, p.second)).collect();
            prop_assert_eq!(got, naive_overlaps(&scene, &pinned));
        }
    }
}
