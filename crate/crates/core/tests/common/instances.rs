//! Shared generators for integration tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenegen_core::facts::{LayoutInfo, Location, PositionRecord, RelationRecord};
use scenegen_core::scene::{number_instances, Coordinate, ObjectInstance, Scene};

const KINDS: [&str; 6] = [
    "Kuka Robot KR125",
    "ABB Robot IRB6600",
    "Welding Table",
    "Cabinet",
    "Conveyor",
    "Guarding",
];

pub struct Instance {
    pub objects: Vec<ObjectInstance>,
    pub layout: LayoutInfo,
    pub pinned: BTreeSet<String>,
}

fn axis_phrase(rng: &mut ChaCha8Rng) -> String {
    let d = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0][rng.gen_range(0..6)];
    let dir = ["in front of", "behind", "to the left of", "to the right of"][rng.gen_range(0..4)];
    format!("{d} meters {dir}")
}

fn relation_text(rng: &mut ChaCha8Rng) -> String {
    let mut text = axis_phrase(rng);
    if rng.gen_bool(0.3) {
        let second = axis_phrase(rng);
        // only combine phrases on different axes
        let axis = |s: &str| s.contains("front") || s.contains("behind");
        if axis(&text) != axis(&second) {
            text = format!("{text} and {second}");
        }
    }
    if rng.gen_bool(0.2) {
        text.push_str(", facing");
    }
    text
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let kinds: Vec<&str> = (0..n).map(|_| *KINDS.choose(&mut rng).unwrap()).collect();
    let objects = number_instances(&kinds);
    let names: Vec<String> = objects.iter().map(|o| o.display_name.clone()).collect();
    let mut layout = LayoutInfo::default();
    let mut pinned = BTreeSet::new();
    for name in &names {
        if rng.gen_bool(0.35) {
            let c = Coordinate::new(rng.gen_range(-6..=6) * 500, rng.gen_range(-6..=6) * 500);
            layout.push_position(PositionRecord {
                name: name.clone(),
                location: Some(Location::Coordinate(c)),
                direction: None,
            });
            pinned.insert(name.clone());
        }
    }
    for _ in 0..rng.gen_range(0..=n) {
        let mut pair = names.choose_multiple(&mut rng, 2);
        let (s, o) = (pair.next().unwrap().clone(), pair.next().unwrap().clone());
        layout.push_relation(RelationRecord {
            subject: s,
            object: o,
            relation_text: relation_text(&mut rng),
        });
    }
    Instance { objects, layout, pinned }
}

/// Independent scan: every non-exempt pair at least 1000 mm apart.
pub fn pairs_clear(scene: &Scene, pinned: &BTreeSet<String>) -> bool {
    let placed: Vec<_> = scene.placed().collect();
    for (i, (a, pa)) in placed.iter().enumerate() {
        for (b, pb) in &placed[i + 1..] {
            if a.library_name == "Guarding" || b.library_name == "Guarding" {
                continue;
            }
            if pinned.contains(&a.display_name) && pinned.contains(&b.display_name) {
                continue;
            }
            let dx = (pa.coord.x - pb.coord.x) as f64;
            let dy = (pa.coord.y - pb.coord.y) as f64;
            if dx.hypot(dy) < 1000.0 {
                return false;
            }
        }
    }
    true
}

pub fn free_units(inst: &Instance) -> usize {
    // connected components without a pinned member
    let names: Vec<&str> = inst.objects.iter().map(|o| o.display_name.as_str()).collect();
    let mut parent: Vec<usize> = (0..names.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        if p[i] != i {
            p[i] = find(p, p[i]);
        }
        p[i]
    }
    for r in &inst.layout.relations {
        let a = names.iter().position(|n| *n == r.subject).unwrap();
        let b = names.iter().position(|n| *n == r.object).unwrap();
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut roots = BTreeSet::new();
    let mut anchored = BTreeSet::new();
    for (i, n) in names.iter().enumerate() {
        let r = find(&mut parent, i);
        roots.insert(r);
        if inst.pinned.contains(*n) {
            anchored.insert(r);
        }
    }
    roots.len() - anchored.len()
}

