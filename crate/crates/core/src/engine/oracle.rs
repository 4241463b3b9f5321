//! Exhaustive grid search, used to cross-check the solver on small inputs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::verify::{check_relation, stated_deltas, verify, Endpoint};
use crate::dsl::{parse_relation, RelationAst};
use crate::error::EngineError;
use crate::facts::{DeltaRecord, LayoutInfo, RelationRecord};
use crate::scene::{
    euclidean_distance, normalize_direction, Bounds, Coordinate, Direction, ObjectInstance, Placement,
    Scene, MIN_DISTANCE_MM,
};

pub const ORACLE_MAX_FREE: usize = 4;
pub const ORACLE_MAX_CANDIDATES: u128 = 10_000_000;
const TOLERANCE_MM: i64 = 50;

struct Search<'a> {
    objects: &'a [ObjectInstance],
    layout: &'a LayoutInfo,
    rels: Vec<(&'a RelationRecord, RelationAst)>,
    pinned: BTreeSet<String>,
    cells: Vec<Coordinate>,
    free: Vec<Vec<(String, i64, i64)>>,
    known: BTreeMap<String, Coordinate>,
    guarding: BTreeSet<String>,
}

impl<'a> Search<'a> {
    fn endpoint(&self, name: &str) -> Option<Endpoint> {
        let coord = *self.known.get(name)?;
        Some(Endpoint {
            name: name.to_string(),
            coord,
            dir: None,
            guarding: self.guarding.contains(name),
            pinned: self.pinned.contains(name) || self.layout.is_anchor(name),
        })
    }

    /// Relations and overlaps that involve `name` and are fully decided.
    fn consistent(&self, name: &str) -> bool {
        let resolve = |n: &str| self.endpoint(n);
        for (r, ast) in &self.rels {
            let mut involved = vec![r.subject.as_str(), r.object.as_str()];
            for p in ast.parts() {
                if let RelationAst::Between { first, second } = p {
                    involved.push(first);
                    involved.push(second);
                }
            }
            if !involved.contains(&name) || involved.iter().any(|n| !self.known.contains_key(*n)) {
                continue;
            }
            let (Some(s), Some(o)) = (self.endpoint(&r.subject), self.endpoint(&r.object)) else {
                continue;
            };
            if let Ok(v) = check_relation(r, ast, &s, &o, &resolve) {
                if !v.is_empty() {
                    return false;
                }
            }
        }
        let me = self.known[name];
        let my_guard = self.guarding.contains(name);
        for o in self.objects {
            let other = o.display_name.as_str();
            if other == name || my_guard || o.is_guarding() {
                continue;
            }
            if self.pinned.contains(name) && self.pinned.contains(other) {
                continue;
            }
            if let Some(&c) = self.known.get(other) {
                if euclidean_distance(me, c) < MIN_DISTANCE_MM {
                    return false;
                }
            }
        }
        true
    }

    fn directions(&self) -> BTreeMap<String, Direction> {
        let mut dirs = BTreeMap::new();
        let mut facing = BTreeSet::new();
        for (r, ast) in &self.rels {
            if !ast.has_facing() || facing.contains(&r.subject) {
                continue;
            }
            if let (Some(s), Some(o)) = (self.known.get(&r.subject), self.known.get(&r.object)) {
                if s != o {
                    let deg = ((o.y - s.y) as f64).atan2((o.x - s.x) as f64).to_degrees();
                    dirs.insert(r.subject.clone(), normalize_direction(deg).expect("finite"));
                    facing.insert(r.subject.clone());
                }
            }
        }
        for p in &self.layout.positions {
            if let Some(a) = p.angle() {
                let has_facing = self.rels.iter().any(|(r, ast)| r.subject == p.name && ast.has_facing());
                if !has_facing {
                    dirs.entry(p.name.clone()).or_insert(a);
                }
            }
        }
        for _ in 0..=self.rels.len() {
            for (r, ast) in &self.rels {
                if !ast.parts().iter().any(|p| matches!(p, RelationAst::Parallel)) {
                    continue;
                }
                match (dirs.get(&r.subject).copied(), dirs.get(&r.object).copied()) {
                    (Some(d), None) => {
                        dirs.insert(r.object.clone(), d);
                    }
                    (None, Some(d)) => {
                        dirs.insert(r.subject.clone(), d);
                    }
                    _ => {}
                }
            }
        }
        dirs
    }

    fn scene(&self, description: &str) -> Scene {
        let dirs = self.directions();
        let placements = self
            .objects
            .iter()
            .map(|o| Placement {
                object: o.id,
                coord: self.known[&o.display_name],
                dir: dirs.get(&o.display_name).copied().unwrap_or(Direction::FRONT),
            })
            .collect();
        Scene::new(description, self.objects.to_vec(), placements).expect("complete")
    }

    fn search(&mut self, i: usize, description: &str) -> Option<Scene> {
        if i == self.free.len() {
            let scene = self.scene(description);
            return verify(&scene, self.layout).ok.then_some(scene);
        }
        let members = self.free[i].clone();
        for k in 0..self.cells.len() {
            let root = self.cells[k];
            for (name, dx, dy) in &members {
                self.known.insert(name.clone(), root.offset(*dx, *dy));
            }
            if members.iter().all(|(name, _, _)| self.consistent(name)) {
                if let Some(s) = self.search(i + 1, description) {
                    return Some(s);
                }
            }
            for (name, _, _) in &members {
                self.known.remove(name);
            }
        }
        None
    }
}

/// Offsets of every object reachable from `root` through exact deltas.
/// `None` when two paths disagree by more than the relation tolerance.
fn component(root: &str, deltas: &[DeltaRecord]) -> Option<Vec<(String, i64, i64)>> {
    let mut at: BTreeMap<String, (i64, i64)> = BTreeMap::from([(root.to_string(), (0, 0))]);
    let mut order = vec![root.to_string()];
    let mut queue = VecDeque::from([root.to_string()]);
    while let Some(n) = queue.pop_front() {
        let (x, y) = at[&n];
        for d in deltas {
            let (next, c) = if d.object == n {
                (&d.subject, (x + d.dx, y + d.dy))
            } else if d.subject == n {
                (&d.object, (x - d.dx, y - d.dy))
            } else {
                continue;
            };
            match at.get(next) {
                Some(&(px, py)) => {
                    if (px - c.0).abs() > TOLERANCE_MM || (py - c.1).abs() > TOLERANCE_MM {
                        return None;
                    }
                }
                None => {
                    at.insert(next.clone(), c);
                    order.push(next.clone());
                    queue.push_back(next.clone());
                }
            }
        }
    }
    Some(order.into_iter().map(|n| {
        let (x, y) = at[&n];
        (n, x, y)
    }).collect())
}

/// Enumerate grid placements and return the first one that passes
/// [`verify`], or `None` if no grid placement does.
///
/// Objects tied together by exact offsets move as one unit: a unit holding
/// a stated coordinate is fixed, every other unit has its first object
/// enumerated over the grid.
pub fn brute_force_feasible(
    description: &str,
    objects: &[ObjectInstance],
    layout: &LayoutInfo,
    grid_pitch_mm: i64,
    bounds: Bounds,
) -> Result<Option<Scene>, EngineError> {
    if grid_pitch_mm <= 0 || bounds.max < bounds.min {
        return Err(EngineError::OracleCapacity("empty grid".into()));
    }
    let deltas = stated_deltas(layout);
    let mut known: BTreeMap<String, Coordinate> = BTreeMap::new();
    let mut free: Vec<Vec<(String, i64, i64)>> = Vec::new();
    let mut contradictory = false;

    // stated coordinates and everything they reach
    let mut stated: Vec<(String, Coordinate)> = Vec::new();
    for p in &layout.positions {
        if let Some(c) = p.coordinate() {
            stated.push((p.name.clone(), c));
        }
    }
    for (name, c) in &stated {
        let Some(members) = component(name, &deltas) else {
            contradictory = true;
            break;
        };
        for (m, dx, dy) in members {
            let here = c.offset(dx, dy);
            match known.get(&m) {
                Some(prev) if (prev.x - here.x).abs() > TOLERANCE_MM || (prev.y - here.y).abs() > TOLERANCE_MM => {
                    contradictory = true;
                }
                Some(_) => {}
                None => {
                    known.insert(m, here);
                }
            }
        }
    }
    let mut seen: BTreeSet<String> = known.keys().cloned().collect();
    for o in objects {
        if contradictory || seen.contains(&o.display_name) {
            continue;
        }
        match component(&o.display_name, &deltas) {
            Some(members) => {
                seen.extend(members.iter().map(|m| m.0.clone()));
                free.push(members);
            }
            None => contradictory = true,
        }
    }

    if free.len() > ORACLE_MAX_FREE {
        return Err(EngineError::OracleCapacity(format!(
            "{} free units, at most {ORACLE_MAX_FREE} supported",
            free.len()
        )));
    }
    let mut cells = Vec::new();
    let mut y = bounds.min;
    while y <= bounds.max {
        let mut x = bounds.min;
        while x <= bounds.max {
            cells.push(Coordinate::new(x, y));
            x += grid_pitch_mm;
        }
        y += grid_pitch_mm;
    }
    let total = (cells.len() as u128).checked_pow(free.len() as u32).unwrap_or(u128::MAX);
    if total > ORACLE_MAX_CANDIDATES {
        return Err(EngineError::OracleCapacity(format!(
            "{total} candidate placements exceed {ORACLE_MAX_CANDIDATES}"
        )));
    }
    if contradictory {
        return Ok(None);
    }

    let mut s = Search {
        objects,
        layout,
        rels: layout.relations.iter().map(|r| (r, parse_relation(&r.relation_text))).collect(),
        pinned: layout.pinned_objects(),
        cells,
        free,
        known,
        guarding: objects.iter().filter(|o| o.is_guarding()).map(|o| o.display_name.clone()).collect(),
    };
    let fixed: Vec<String> = s.known.keys().cloned().collect();
    for name in &fixed {
        if !s.consistent(name) {
            return Ok(None);
        }
    }
    Ok(s.search(0, description))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::facts::{Location, PositionRecord};
    use crate::scene::number_instances;

    #[test]
    fn worked_example_has_grid_solutions() {
        let objects = examples::worked_objects();
        let layout = examples::worked_layout();
        let bounds = Bounds { min: -6000, max: 6000 };
        let scene = brute_force_feasible("", &objects, &layout, 2000, bounds).unwrap().expect("feasible");
        assert!(verify(&scene, &layout).ok);
        let abb = scene.by_name("ABB Robot IRB6600").unwrap().1;
        assert_eq!(abb.coord, Coordinate::new(-1000, -100));
    }

    #[test]
    fn contradictory_relations_are_infeasible() {
        let objects = number_instances(&["Cabinet", "Conveyor"]);
        let mut layout = LayoutInfo::default();
        layout.push_relation(RelationRecord {
            subject: "Cabinet".into(),
            object: "Conveyor".into(),
            relation_text: "3 meters in front of".into(),
        });
        layout.push_position(PositionRecord {
            name: "Cabinet".into(),
            location: Some(Location::Coordinate(Coordinate::ORIGIN)),
            direction: None,
        });
        layout.push_position(PositionRecord {
            name: "Conveyor".into(),
            location: Some(Location::Coordinate(Coordinate::ORIGIN)),
            direction: None,
        });
        let b = Bounds { min: -3000, max: 3000 };
        assert!(brute_force_feasible("", &objects, &layout, 1000, b).unwrap().is_none());
    }

    #[test]
    fn too_many_free_objects() {
        let objects = number_instances(&["Cabinet"; 6]);
        let b = Bounds { min: -3000, max: 3000 };
        assert!(matches!(
            brute_force_feasible("", &objects, &LayoutInfo::default(), 1000, b),
            Err(EngineError::OracleCapacity(_))
        ));
    }

    #[test]
    fn capacity_counts_candidates() {
        let objects = number_instances(&["Cabinet"; 4]);
        let b = Bounds { min: -5000, max: 5000 };
        // 101^2 cells, 4 objects
        assert!(matches!(
            brute_force_feasible("", &objects, &LayoutInfo::default(), 100, b),
            Err(EngineError::OracleCapacity(_))
        ));
    }
}
