use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::compute_orientation;
use super::propagate::{Propagation, Propagator};
use super::verify::facing_subjects;
use crate::dsl::{parse_relation, relation_to_delta, RelationAst};
use crate::error::EngineError;
use crate::facts::{DeltaRecord, LayoutInfo};
use crate::scene::{
    euclidean_distance, Bounds, Coordinate, Direction, ObjectInstance, Placement, Scene,
    DEFAULT_BOUNDS, MIN_DISTANCE_MM,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub bounds: Bounds,
    pub min_distance_mm: f64,
    pub grid_pitch_mm: i64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            bounds: DEFAULT_BOUNDS,
            min_distance_mm: MIN_DISTANCE_MM,
            grid_pitch_mm: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub scene: Scene,
    /// Step 1: every relation that reduces to a coordinate difference.
    pub deltas: Vec<DeltaRecord>,
    /// Step 2: objects whose coordinates follow from the description alone.
    pub derived: Vec<(String, Coordinate)>,
    /// Step 3: objects placed by free allocation (component roots first).
    pub allocated: Vec<String>,
    pub propagation: Propagation,
}

struct Member {
    name: String,
    off: (i64, i64),
    guarding: bool,
}

fn grid(bounds: Bounds, pitch: i64) -> Vec<Coordinate> {
    let start = bounds.min.div_euclid(pitch) * pitch + if bounds.min.rem_euclid(pitch) == 0 { 0 } else { pitch };
    let mut cells = Vec::new();
    let mut y = start;
    while y <= bounds.max {
        let mut x = start;
        while x <= bounds.max {
            cells.push(Coordinate::new(x, y));
            x += pitch;
        }
        y += pitch;
    }
    cells
}

fn centroid(points: &[Coordinate]) -> (f64, f64) {
    if points.is_empty() {
        return (0.0, 0.0);
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|c| c.x as f64).sum();
    let sy: f64 = points.iter().map(|c| c.y as f64).sum();
    (sx / n, sy / n)
}

/// Grid cells ordered by distance from the centroid of `placed`, ties by
/// row then column.
fn candidates(placed: &[Coordinate], opts: &SolveOptions) -> Vec<Coordinate> {
    let (cx, cy) = centroid(placed);
    let mut cells = grid(opts.bounds, opts.grid_pitch_mm);
    let key = |c: &Coordinate| {
        let dx = c.x as f64 - cx;
        let dy = c.y as f64 - cy;
        dx * dx + dy * dy
    };
    cells.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    cells
}

/// `(name, coord, is_guarding)` of everything placed so far.
type Placed = Vec<(String, Coordinate, bool)>;

fn find_cell(
    placed: &Placed,
    members: &[Member],
    facing_partners: &BTreeMap<String, Vec<Coordinate>>,
    opts: &SolveOptions,
) -> Result<Coordinate, EngineError> {
    let solid: Vec<Coordinate> = placed.iter().filter(|p| !p.2).map(|p| p.1).collect();
    'cell: for cell in candidates(&solid, opts) {
        for m in members {
            let pos = cell.offset(m.off.0, m.off.1);
            if !opts.bounds.contains(pos) {
                continue 'cell;
            }
            if !m.guarding && solid.iter().any(|&s| euclidean_distance(s, pos) < opts.min_distance_mm) {
                continue 'cell;
            }
            if facing_partners.get(&m.name).is_some_and(|ps| ps.contains(&pos)) {
                continue 'cell;
            }
        }
        return Ok(cell);
    }
    let mut blockers: Vec<String> = placed.iter().filter(|p| !p.2).map(|p| p.0.clone()).collect();
    blockers.sort();
    Err(EngineError::AllocationInfeasible {
        object: members[0].name.clone(),
        blockers,
    })
}

/// Place every object not in `partial` on the first free grid cell, one at
/// a time in object order, Guarding last at the centroid.
pub fn allocate_free(
    objects: &[ObjectInstance],
    partial: &BTreeMap<String, Coordinate>,
    opts: &SolveOptions,
) -> Result<BTreeMap<String, Coordinate>, EngineError> {
    let mut out = partial.clone();
    let mut placed: Placed = objects
        .iter()
        .filter_map(|o| partial.get(&o.display_name).map(|c| (o.display_name.clone(), *c, o.is_guarding())))
        .collect();
    let none = BTreeMap::new();
    for o in objects.iter().filter(|o| !o.is_guarding()) {
        if out.contains_key(&o.display_name) {
            continue;
        }
        let m = [Member {
            name: o.display_name.clone(),
            off: (0, 0),
            guarding: false,
        }];
        let c = find_cell(&placed, &m, &none, opts)?;
        out.insert(o.display_name.clone(), c);
        placed.push((o.display_name.clone(), c, false));
    }
    for o in objects.iter().filter(|o| o.is_guarding()) {
        if !out.contains_key(&o.display_name) {
            out.insert(o.display_name.clone(), guarding_spot(&placed, opts));
        }
    }
    Ok(out)
}

fn guarding_spot(placed: &Placed, opts: &SolveOptions) -> Coordinate {
    let solid: Vec<Coordinate> = placed.iter().filter(|p| !p.2).map(|p| p.1).collect();
    let (cx, cy) = centroid(&solid);
    let p = opts.grid_pitch_mm as f64;
    Coordinate::new(((cx / p).round() * p) as i64, ((cy / p).round() * p) as i64)
}

/// Orientation rules: facing relations first (they override a stated
/// angle), then stated angles, then parallel relations copy headings across,
/// everything else faces the front.
pub fn assign_directions(
    objects: &[ObjectInstance],
    coords: &BTreeMap<String, Coordinate>,
    layout: &LayoutInfo,
) -> BTreeMap<String, Direction> {
    let mut dirs: BTreeMap<String, Direction> = BTreeMap::new();
    let names: BTreeSet<&str> = objects.iter().map(|o| o.display_name.as_str()).collect();
    let asts: Vec<_> = layout
        .relations
        .iter()
        .map(|r| (r, parse_relation(&r.relation_text)))
        .collect();
    for (r, ast) in &asts {
        if !ast.has_facing() || !names.contains(r.subject.as_str()) || dirs.contains_key(&r.subject) {
            continue;
        }
        if let (Some(&s), Some(&o)) = (coords.get(&r.subject), coords.get(&r.object)) {
            if let Ok(d) = compute_orientation(s, o) {
                dirs.insert(r.subject.clone(), d);
            }
        }
    }
    let facing = facing_subjects(layout);
    for p in &layout.positions {
        if let Some(a) = p.angle() {
            if names.contains(p.name.as_str()) && !facing.contains(&p.name) {
                dirs.entry(p.name.clone()).or_insert(a);
            }
        }
    }
    let parallel: Vec<_> = asts
        .iter()
        .filter(|(_, a)| a.parts().iter().any(|p| matches!(p, RelationAst::Parallel)))
        .map(|(r, _)| (r.subject.as_str(), r.object.as_str()))
        .collect();
    loop {
        let mut changed = false;
        for &(s, o) in &parallel {
            if !names.contains(s) || !names.contains(o) {
                continue;
            }
            match (dirs.get(s).copied(), dirs.get(o).copied()) {
                (Some(d), None) => {
                    dirs.insert(o.to_string(), d);
                    changed = true;
                }
                (None, Some(d)) => {
                    dirs.insert(s.to_string(), d);
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }
    for o in objects {
        dirs.entry(o.display_name.clone()).or_insert(Direction::FRONT);
    }
    dirs
}

/// Run the four placement steps: relations to deltas, propagation from
/// stated coordinates, free allocation, orientation.
pub fn solve<R: Rng + ?Sized>(
    description: &str,
    objects: &[ObjectInstance],
    layout: &LayoutInfo,
    opts: &SolveOptions,
    rng: &mut R,
) -> Result<Solution, EngineError> {
    let asts: Vec<_> = layout
        .relations
        .iter()
        .map(|r| (r, parse_relation(&r.relation_text)))
        .collect();
    let deltas: Vec<DeltaRecord> = asts
        .iter()
        .filter_map(|(r, a)| relation_to_delta(&r.subject, &r.object, a, rng))
        .collect();
    let betweens: Vec<(&str, String, String)> = asts
        .iter()
        .flat_map(|(r, a)| {
            a.parts().into_iter().filter_map(move |p| match p {
                RelationAst::Between { first, second } => Some((r.subject.as_str(), first.clone(), second.clone())),
                _ => None,
            })
        })
        .collect();
    let mut facing_partners: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (r, a) in &asts {
        if a.has_facing() {
            facing_partners.entry(r.subject.clone()).or_default().push(r.object.clone());
            facing_partners.entry(r.object.clone()).or_default().push(r.subject.clone());
        }
    }

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

    let apply_betweens = |prop: &mut Propagator| loop {
        let mut changed = false;
        for (s, a, b) in &betweens {
            if prop.known(s).is_some() {
                continue;
            }
            if let (Some(ca), Some(cb)) = (prop.known(a), prop.known(b)) {
                let mid = Coordinate::from_mm((ca.x + cb.x) as f64 / 2.0, (ca.y + cb.y) as f64 / 2.0)
                    .expect("finite");
                prop.seed(s, mid);
                prop.run();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    };
    apply_betweens(&mut prop);

    let derived: Vec<(String, Coordinate)> = objects
        .iter()
        .filter_map(|o| prop.known(&o.display_name).map(|c| (o.display_name.clone(), c)))
        .collect();

    let is_guarding: BTreeMap<&str, bool> =
        objects.iter().map(|o| (o.display_name.as_str(), o.is_guarding())).collect();
    let placed_now = |prop: &Propagator| -> Placed {
        objects
            .iter()
            .filter_map(|o| prop.known(&o.display_name).map(|c| (o.display_name.clone(), c, o.is_guarding())))
            .collect()
    };
    let waiting_on_between = |prop: &Propagator, name: &str| {
        betweens
            .iter()
            .any(|(s, a, b)| *s == name && (prop.known(a).is_none() || prop.known(b).is_none()))
    };

    let mut allocated = Vec::new();
    loop {
        let pending: Vec<&ObjectInstance> = objects
            .iter()
            .filter(|o| !o.is_guarding() && prop.known(&o.display_name).is_none())
            .collect();
        let Some(next) = pending
            .iter()
            .find(|o| !waiting_on_between(&prop, &o.display_name))
            .or_else(|| pending.first())
            .copied()
        else {
            break;
        };
        let members: Vec<Member> = prop
            .component_offsets(&next.display_name)
            .into_iter()
            .map(|(name, x, y)| Member {
                guarding: is_guarding.get(name.as_str()).copied().unwrap_or(false),
                name,
                off: (x, y),
            })
            .collect();
        let partners: BTreeMap<String, Vec<Coordinate>> = members
            .iter()
            .map(|m| {
                let ps = facing_partners
                    .get(&m.name)
                    .map(|v| v.iter().filter_map(|n| prop.known(n)).collect())
                    .unwrap_or_default();
                (m.name.clone(), ps)
            })
            .collect();
        let cell = find_cell(&placed_now(&prop), &members, &partners, opts)?;
        prop.seed(&next.display_name, cell);
        prop.run();
        apply_betweens(&mut prop);
        allocated.extend(members.into_iter().map(|m| m.name));
    }
    for o in objects.iter().filter(|o| o.is_guarding()) {
        if prop.known(&o.display_name).is_none() {
            let spot = guarding_spot(&placed_now(&prop), opts);
            prop.seed(&o.display_name, spot);
            prop.run();
            allocated.push(o.display_name.clone());
        }
    }

    let propagation = prop.finish();
    let coords: BTreeMap<String, Coordinate> = objects
        .iter()
        .map(|o| (o.display_name.clone(), propagation.coord(&o.display_name).expect("all placed")))
        .collect();
    let dirs = assign_directions(objects, &coords, layout);
    let placements = objects
        .iter()
        .map(|o| Placement {
            object: o.id,
            coord: coords[&o.display_name],
            dir: dirs[&o.display_name],
        })
        .collect();
    let scene = Scene::new(description, objects.to_vec(), placements)
        .map_err(|e| EngineError::Stage(crate::error::StageError::Invalid(e.to_string())))?;
    Ok(Solution {
        scene,
        deltas,
        derived,
        allocated,
        propagation,
    })
}
