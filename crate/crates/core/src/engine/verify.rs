use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::compute_orientation;
use super::propagate::Propagator;
use crate::dsl::{parse_relation, AxisSpec, RelationAst};
use crate::facts::{DeltaRecord, DeltaSource, LayoutInfo, RelationRecord};
use crate::scene::{euclidean_distance, Coordinate, Direction, Scene, MIN_DISTANCE_MM};

/// Per-axis tolerance for offsets and distances.
pub const OFFSET_TOLERANCE_MM: i64 = 50;
/// Tolerance for facing and parallel relations.
pub const ANGLE_TOLERANCE_DEG: f64 = 5.0;
/// How far from the midpoint a "between" subject may sit.
pub const BETWEEN_TOLERANCE_MM: f64 = 500.0;
const PINNED_ANGLE_TOLERANCE_DEG: f64 = 1e-6;
const ADJACENT_MAX_MM: f64 = 5000.0 + OFFSET_TOLERANCE_MM as f64;
const ADJACENT_MIN_MM: f64 = MIN_DISTANCE_MM - OFFSET_TOLERANCE_MM as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Constraint,
    Conflict,
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
    pub refs: Vec<String>,
    pub measured_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Things that were not checked and why.
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn from_parts(violations: Vec<Violation>, notes: Vec<String>) -> Self {
        Self {
            ok: violations.is_empty(),
            violations,
            notes,
        }
    }

    pub fn error_label(&self) -> &'static str {
        if self.ok {
            "No"
        } else {
            "Yes"
        }
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The verification answer format: `Relations:`, `Analysis:`, `Error:`.
    pub fn render(&self, scene: &Scene, layout: &LayoutInfo) -> String {
        let mut rel = Vec::new();
        for p in &layout.positions {
            if let Some(c) = p.coordinate() {
                rel.push(format!("The {} is at {c}.", p.name));
            }
        }
        for r in &layout.relations {
            let ast = parse_relation(&r.relation_text);
            let exact = match &ast {
                RelationAst::Offset(o) => o.exact(),
                _ => None,
            };
            let obj = scene.by_name(&r.object).map(|(_, p)| p.coord).or_else(|| {
                layout
                    .anchors
                    .iter()
                    .find(|a| a.name == r.object)
                    .and_then(|a| a.coord)
            });
            match (exact, obj) {
                (Some((dx, dy)), Some(o)) => rel.push(format!(
                    "The {} is {} the {} ([{dx}, {dy}, 0]), so it should be at {}.",
                    r.subject,
                    r.relation_text.trim_end_matches('.'),
                    r.object,
                    o.offset(dx, dy)
                )),
                _ => rel.push(format!(
                    "The {} is {} the {}.",
                    r.subject,
                    r.relation_text.trim_end_matches('.'),
                    r.object
                )),
            }
        }
        if rel.is_empty() {
            rel.push("No positions or relations are given explicitly.".to_string());
        }
        let analysis = if self.ok {
            "The allocated positions satisfy every stated position and relation, and no two objects \
             that must stay apart are closer than 1000 mm."
                .to_string()
        } else {
            let lines: Vec<String> = self.violations.iter().map(|v| format!("- {}", v.detail)).collect();
            format!("The allocated positions contain errors:\n{}", lines.join("\n"))
        };
        format!(
            "Relations: {}\n\nAnalysis: {}\n\nError: {}",
            rel.join(" "),
            analysis,
            self.error_label()
        )
    }
}

/// What a relation check needs to know about one end of a relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub name: String,
    pub coord: Coordinate,
    /// `None` skips orientation checks.
    pub dir: Option<Direction>,
    pub guarding: bool,
    pub pinned: bool,
}

fn dist(a: Coordinate, b: Coordinate) -> f64 {
    euclidean_distance(a, b)
}

/// Check one parsed relation. `resolve` looks up names used inside the
/// relation (the operands of `between`). Returns `Err(note)` when the
/// relation cannot be checked.
pub fn check_relation(
    rel: &RelationRecord,
    ast: &RelationAst,
    subject: &Endpoint,
    object: &Endpoint,
    resolve: &dyn Fn(&str) -> Option<Endpoint>,
) -> Result<Vec<Violation>, String> {
    let mut out = Vec::new();
    let refs = vec![subject.name.clone(), object.name.clone()];
    let dx = subject.coord.x - object.coord.x;
    let dy = subject.coord.y - object.coord.y;
    let tol = OFFSET_TOLERANCE_MM;
    let mk = |kind, detail: String, measured: Option<f64>| Violation {
        kind,
        detail,
        refs: refs.clone(),
        measured_mm: measured,
    };
    for part in ast.parts() {
        match part {
            RelationAst::Offset(o) => {
                if let (AxisSpec::Exact(_), _) | (_, AxisSpec::Exact(_)) = (o.x, o.y) {
                    let ex = o.x_or(dx);
                    let ey = o.y_or(dy);
                    if (dx - ex).abs() > tol || (dy - ey).abs() > tol {
                        let expected = object.coord.offset(ex, ey);
                        out.push(mk(
                            ViolationKind::Conflict,
                            format!(
                                "{} should be {} the {}, i.e. at {expected}, but it is at {}",
                                subject.name,
                                rel.relation_text.trim_end_matches('.'),
                                object.name,
                                subject.coord
                            ),
                            Some(dist(expected, subject.coord)),
                        ));
                    }
                }
                let axes = [("x", o.x, dx, "in front of", "behind"), ("y", o.y, dy, "to the left of", "to the right of")];
                for (axis, spec, d, pos_word, neg_word) in axes {
                    match spec {
                        AxisSpec::Positive if d <= tol => out.push(mk(
                            ViolationKind::Constraint,
                            format!("{} is not {pos_word} the {} ({axis} offset {d} mm)", subject.name, object.name),
                            Some(d as f64),
                        )),
                        AxisSpec::Negative if d >= -tol => out.push(mk(
                            ViolationKind::Constraint,
                            format!("{} is not {neg_word} the {} ({axis} offset {d} mm)", subject.name, object.name),
                            Some(d as f64),
                        )),
                        _ => {}
                    }
                }
                let open = |a: AxisSpec| matches!(a, AxisSpec::Positive | AxisSpec::Negative);
                if open(o.x) && o.y == AxisSpec::Free && dx.abs() <= dy.abs() {
                    out.push(mk(
                        ViolationKind::Constraint,
                        format!(
                            "{} is more to the side of the {} than {} it",
                            subject.name,
                            object.name,
                            if o.x == AxisSpec::Positive { "in front of" } else { "behind" }
                        ),
                        Some(dy.abs() as f64),
                    ));
                }
                if open(o.y) && o.x == AxisSpec::Free && dy.abs() <= dx.abs() {
                    out.push(mk(
                        ViolationKind::Constraint,
                        format!(
                            "{} is more in front or behind the {} than {} of it",
                            subject.name,
                            object.name,
                            if o.y == AxisSpec::Positive { "to the left" } else { "to the right" }
                        ),
                        Some(dx.abs() as f64),
                    ));
                }
            }
            RelationAst::DistanceOnly { mm } => {
                let d = dist(subject.coord, object.coord);
                if (d - *mm as f64).abs() > tol as f64 {
                    out.push(mk(
                        ViolationKind::Constraint,
                        format!("{} should be {mm} mm from the {}, found {d:.0} mm", subject.name, object.name),
                        Some(d),
                    ));
                }
            }
            RelationAst::Adjacency => {
                let d = dist(subject.coord, object.coord);
                let exempt = subject.guarding || object.guarding || (subject.pinned && object.pinned);
                if (!exempt && d < ADJACENT_MIN_MM) || d > ADJACENT_MAX_MM {
                    out.push(mk(
                        ViolationKind::Constraint,
                        format!(
                            "{} should be next to the {} (1 to 5 m), found {d:.0} mm",
                            subject.name, object.name
                        ),
                        Some(d),
                    ));
                }
            }
            RelationAst::Facing => {
                if subject.coord == object.coord {
                    out.push(mk(
                        ViolationKind::Constraint,
                        format!("{} cannot face the {} at the same position", subject.name, object.name),
                        Some(0.0),
                    ));
                } else if let Some(dir) = subject.dir {
                    let want = compute_orientation(subject.coord, object.coord).expect("distinct");
                    let off = dir.angular_distance(want);
                    if off > ANGLE_TOLERANCE_DEG {
                        out.push(mk(
                            ViolationKind::Constraint,
                            format!(
                                "{} should face the {} at {want} degrees, found {dir} degrees",
                                subject.name, object.name
                            ),
                            None,
                        ));
                    }
                }
            }
            RelationAst::Parallel => {
                if let (Some(a), Some(b)) = (subject.dir, object.dir) {
                    let off = a.angular_distance(b);
                    let off = off.min(180.0 - off);
                    if off > ANGLE_TOLERANCE_DEG {
                        out.push(mk(
                            ViolationKind::Constraint,
                            format!(
                                "{} ({a} degrees) is not parallel to the {} ({b} degrees)",
                                subject.name, object.name
                            ),
                            None,
                        ));
                    }
                }
            }
            RelationAst::Between { first, second } => {
                let (a, b) = match (resolve(first), resolve(second)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(format!("cannot resolve the operands of {:?}", rel.relation_text)),
                };
                let mx = (a.coord.x + b.coord.x) as f64 / 2.0;
                let my = (a.coord.y + b.coord.y) as f64 / 2.0;
                let d = ((subject.coord.x as f64 - mx).powi(2) + (subject.coord.y as f64 - my).powi(2)).sqrt();
                if d > BETWEEN_TOLERANCE_MM {
                    out.push(Violation {
                        kind: ViolationKind::Constraint,
                        detail: format!(
                            "{} should be between the {} and the {}, found {d:.0} mm from their midpoint",
                            subject.name, a.name, b.name
                        ),
                        refs: vec![subject.name.clone(), a.name.clone(), b.name.clone()],
                        measured_mm: Some(d),
                    });
                }
            }
            RelationAst::Compound { .. } => unreachable!("parts are flattened"),
            RelationAst::Unrecognized => {
                return Err(format!(
                    "relation {:?} between {} and {} is outside the grammar; not checked",
                    rel.relation_text, rel.subject, rel.object
                ))
            }
        }
    }
    Ok(out)
}

trait AxisOr {
    fn x_or(&self, fallback: i64) -> i64;
    fn y_or(&self, fallback: i64) -> i64;
}

impl AxisOr for crate::dsl::Offset {
    fn x_or(&self, fallback: i64) -> i64 {
        match self.x {
            AxisSpec::Exact(v) => v,
            _ => fallback,
        }
    }
    fn y_or(&self, fallback: i64) -> i64 {
        match self.y {
            AxisSpec::Exact(v) => v,
            _ => fallback,
        }
    }
}

/// Exact deltas stated by the description, for conflict detection.
pub(crate) fn stated_deltas(layout: &LayoutInfo) -> Vec<DeltaRecord> {
    layout
        .relations
        .iter()
        .filter_map(|r| {
            let ast = parse_relation(&r.relation_text);
            ast.parts().into_iter().find_map(|p| match p {
                RelationAst::Offset(o) => o.exact().map(|(dx, dy)| DeltaRecord {
                    subject: r.subject.clone(),
                    object: r.object.clone(),
                    dx,
                    dy,
                    source: DeltaSource::Stated,
                }),
                _ => None,
            })
        })
        .collect()
}

/// Objects whose orientation is governed by a facing relation.
pub(crate) fn facing_subjects(layout: &LayoutInfo) -> BTreeSet<String> {
    layout
        .relations
        .iter()
        .filter(|r| parse_relation(&r.relation_text).has_facing())
        .map(|r| r.subject.clone())
        .collect()
}

/// Check a complete scene against the extracted layout facts.
pub fn verify(scene: &Scene, layout: &LayoutInfo) -> VerificationReport {
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    let pinned = layout.pinned_objects();
    let facing = facing_subjects(layout);

    let resolve = |name: &str| -> Option<Endpoint> {
        if let Some((o, p)) = scene.by_name(name) {
            return Some(Endpoint {
                name: name.to_string(),
                coord: p.coord,
                dir: Some(p.dir),
                guarding: o.is_guarding(),
                pinned: pinned.contains(name),
            });
        }
        let a = layout.anchors.iter().find(|a| a.name == name)?;
        Some(Endpoint {
            name: name.to_string(),
            coord: a.coord?,
            dir: None,
            guarding: false,
            pinned: true,
        })
    };

    // (a) pinned positions and orientations
    let mut seen_pins = BTreeSet::new();
    for p in &layout.positions {
        let Some((_, placed)) = scene.by_name(&p.name) else {
            if !layout.is_anchor(&p.name) {
                notes.push(format!("{} is not in the scene; its position was not checked", p.name));
            }
            continue;
        };
        if let Some(c) = p.coordinate() {
            // a second literal coordinate is handled as a conflict below
            if seen_pins.insert(p.name.clone()) && placed.coord != c {
                violations.push(Violation {
                    kind: ViolationKind::Constraint,
                    detail: format!("{} should be at {c}, found {}", p.name, placed.coord),
                    refs: vec![p.name.clone()],
                    measured_mm: Some(dist(c, placed.coord)),
                });
            }
        }
        if let Some(a) = p.angle() {
            if facing.contains(&p.name) {
                notes.push(format!(
                    "{}: the stated orientation is superseded by a facing relation",
                    p.name
                ));
            } else if placed.dir.angular_distance(a) > PINNED_ANGLE_TOLERANCE_DEG {
                violations.push(Violation {
                    kind: ViolationKind::Constraint,
                    detail: format!("{} should face {a} degrees, found {}", p.name, placed.dir),
                    refs: vec![p.name.clone()],
                    measured_mm: None,
                });
            }
        }
    }

    // (b, c) relations
    for r in &layout.relations {
        let ast = parse_relation(&r.relation_text);
        let (Some(s), Some(o)) = (resolve(&r.subject), resolve(&r.object)) else {
            notes.push(format!(
                "relation between {} and {} refers to an unplaced name; not checked",
                r.subject, r.object
            ));
            continue;
        };
        match check_relation(r, &ast, &s, &o, &resolve) {
            Ok(v) => violations.extend(v),
            Err(note) => notes.push(note),
        }
    }

    // conflicts inside the description itself
    let deltas = stated_deltas(layout);
    let mut prop = Propagator::new(&deltas);
    for p in &layout.positions {
        if let Some(c) = p.coordinate() {
            prop.seed(&p.name, c);
        }
    }
    for a in &layout.anchors {
        if let Some(c) = a.coord {
            prop.seed(&a.name, c);
        }
    }
    prop.run();
    for (o, p) in scene.placed() {
        if prop.known(&o.display_name).is_none() {
            prop.seed(&o.display_name, p.coord);
            prop.run();
        }
    }
    for d in prop.finish().discrepancies {
        violations.push(Violation {
            kind: ViolationKind::Conflict,
            detail: format!("inconsistent description: {}", d.describe()),
            refs: vec![d.object.clone()],
            measured_mm: Some(dist(d.known.coord, d.derived.coord)),
        });
    }

    // (d) overlap
    for pair in scene.overlapping_pairs(&pinned) {
        violations.push(Violation {
            kind: ViolationKind::Overlap,
            detail: format!(
                "{} and {} are {:.1} mm apart, less than {} mm",
                pair.first, pair.second, pair.distance_mm, MIN_DISTANCE_MM
            ),
            refs: vec![pair.first.clone(), pair.second.clone()],
            measured_mm: Some(pair.distance_mm),
        });
    }

    VerificationReport::from_parts(violations, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::facts::{Location, PositionRecord};
    use crate::scene::{number_instances, Placement};

    fn scene_at(names: &[&str], coords: &[(i64, i64)]) -> Scene {
        let objects = number_instances(names);
        let placements = objects
            .iter()
            .zip(coords)
            .map(|(o, &(x, y))| Placement {
                object: o.id,
                coord: Coordinate::new(x, y),
                dir: Direction::FRONT,
            })
            .collect();
        Scene::new("", objects, placements).unwrap()
    }

    #[test]
    fn worked_example_passes() {
        let scene = scene_at(
            &["Welding Table", "Turntable", "ABB Robot IRB6600"],
            &[(0, 1000), (1500, 2500), (-1000, -100)],
        );
        let r = verify(&scene, &examples::worked_layout());
        assert!(r.ok, "{r:?}");
        assert!(r.render(&scene, &examples::worked_layout()).ends_with("Error: No"));
    }

    #[test]
    fn corrupted_variant_is_an_error() {
        let scene = examples::corrupted_scene();
        let r = verify(&scene, &examples::worked_layout());
        assert!(!r.ok);
        assert!(r.has(ViolationKind::Conflict));
        let text = r.render(&scene, &examples::worked_layout());
        assert!(text.starts_with("Relations: The Turntable is at [1500, 2500, 0]."));
        assert!(text.ends_with("Error: Yes"));
    }

    #[test]
    fn misplaced_robot_is_a_conflict_on_the_pair() {
        let scene = scene_at(
            &["Turntable", "ABB Robot IRB6600", "Welding Table"],
            &[(1500, 2500), (-1100, 0), (0, 3500)],
        );
        let r = verify(&scene, &examples::worked_layout());
        let c: Vec<_> = r.violations.iter().filter(|v| v.kind == ViolationKind::Conflict).collect();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].refs, ["ABB Robot IRB6600", "Turntable"]);
    }

    #[test]
    fn overlap_measured() {
        let scene = scene_at(&["Cabinet", "Conveyor"], &[(0, 0), (500, 500)]);
        let r = verify(&scene, &LayoutInfo::default());
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::Overlap);
        assert!((r.violations[0].measured_mm.unwrap() - 707.1).abs() < 0.05);
    }

    #[test]
    fn guarding_and_pinned_pairs_are_exempt() {
        let scene = scene_at(&["Cabinet", "Guarding", "Conveyor"], &[(0, 0), (0, 0), (0, 0)]);
        let mut layout = LayoutInfo::default();
        for n in ["Cabinet", "Conveyor"] {
            layout.push_position(PositionRecord {
                name: n.into(),
                location: Some(Location::Coordinate(Coordinate::ORIGIN)),
                direction: None,
            });
        }
        assert!(verify(&scene, &layout).ok);
    }

    #[test]
    fn facing_and_parallel() {
        let mut scene = scene_at(&["Kuka Robot KR125", "Welding Table"], &[(0, 0), (0, 2000)]);
        let mut layout = LayoutInfo::default();
        layout.push_relation(RelationRecord {
            subject: "Kuka Robot KR125".into(),
            object: "Welding Table".into(),
            relation_text: "facing".into(),
        });
        assert!(!verify(&scene, &layout).ok);
        scene.placements[0].dir = Direction::new(93.0).unwrap();
        assert!(verify(&scene, &layout).ok);
        layout.relations[0].relation_text = "parallel to".into();
        assert!(!verify(&scene, &layout).ok);
        scene.placements[1].dir = Direction::new(273.0).unwrap();
        assert!(verify(&scene, &layout).ok);
    }

    #[test]
    fn unrecognized_relations_are_noted_not_failed() {
        let scene = scene_at(&["Cabinet", "Conveyor"], &[(0, 0), (3000, 0)]);
        let mut layout = LayoutInfo::default();
        layout.push_relation(RelationRecord {
            subject: "Cabinet".into(),
            object: "Conveyor".into(),
            relation_text: "somewhere nice".into(),
        });
        let r = verify(&scene, &layout);
        assert!(r.ok);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn two_pins_for_one_object_conflict() {
        let scene = scene_at(&["Cabinet"], &[(0, 0)]);
        let mut layout = LayoutInfo::default();
        for x in [0, 4000] {
            layout.push_position(PositionRecord {
                name: "Cabinet".into(),
                location: Some(Location::Coordinate(Coordinate::new(x, 0))),
                direction: None,
            });
        }
        let r = verify(&scene, &layout);
        assert!(r.has(ViolationKind::Conflict));
    }
}
