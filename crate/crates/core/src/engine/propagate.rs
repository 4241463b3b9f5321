use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::facts::DeltaRecord;
use crate::scene::Coordinate;

/// Two derivations of the same coordinate further apart than this on either
/// axis count as a conflict.
pub const DISCREPANCY_MM: i64 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub coord: Coordinate,
    /// Names visited from the seed to this object, seed first.
    pub path: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub object: String,
    pub known: Derivation,
    pub derived: Derivation,
}

impl Discrepancy {
    pub fn describe(&self) -> String {
        format!(
            "{} is at {} via {} but at {} via {}",
            self.object,
            self.known.coord,
            self.known.path.join(" -> "),
            self.derived.coord,
            self.derived.path.join(" -> "),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Propagation {
    pub coords: BTreeMap<String, Derivation>,
    pub discrepancies: Vec<Discrepancy>,
}

impl Propagation {
    pub fn coord(&self, name: &str) -> Option<Coordinate> {
        self.coords.get(name).map(|d| d.coord)
    }
}

/// Incremental breadth-first closure over a delta graph. Seeds may be added
/// between runs; known coordinates are never overwritten.
pub struct Propagator<'a> {
    deltas: &'a [DeltaRecord],
    incident: BTreeMap<&'a str, Vec<usize>>,
    used: Vec<bool>,
    queue: VecDeque<String>,
    out: Propagation,
}

fn differs(a: Coordinate, b: Coordinate) -> bool {
    (a.x - b.x).abs() > DISCREPANCY_MM || (a.y - b.y).abs() > DISCREPANCY_MM
}

impl<'a> Propagator<'a> {
    pub fn new(deltas: &'a [DeltaRecord]) -> Self {
        let mut incident: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, d) in deltas.iter().enumerate() {
            incident.entry(d.subject.as_str()).or_default().push(i);
            incident.entry(d.object.as_str()).or_default().push(i);
        }
        Self {
            deltas,
            incident,
            used: vec![false; deltas.len()],
            queue: VecDeque::new(),
            out: Propagation::default(),
        }
    }

    pub fn known(&self, name: &str) -> Option<Coordinate> {
        self.out.coord(name)
    }

    pub fn seed(&mut self, name: &str, coord: Coordinate) {
        let d = Derivation {
            coord,
            path: vec![name.to_string()],
        };
        self.insert(name, d);
    }

    fn insert(&mut self, name: &str, d: Derivation) {
        match self.out.coords.get(name) {
            Some(existing) => {
                if differs(existing.coord, d.coord) {
                    self.out.discrepancies.push(Discrepancy {
                        object: name.to_string(),
                        known: existing.clone(),
                        derived: d,
                    });
                }
            }
            None => {
                self.out.coords.insert(name.to_string(), d);
                self.queue.push_back(name.to_string());
            }
        }
    }

    pub fn run(&mut self) {
        while let Some(u) = self.queue.pop_front() {
            let from = self.out.coords[&u].clone();
            let edges = self.incident.get(u.as_str()).cloned().unwrap_or_default();
            for e in edges {
                if self.used[e] {
                    continue;
                }
                self.used[e] = true;
                let d = &self.deltas[e];
                let (other, coord) = if d.subject == u {
                    (d.object.as_str(), from.coord.offset(-d.dx, -d.dy))
                } else {
                    (d.subject.as_str(), from.coord.offset(d.dx, d.dy))
                };
                let mut path = from.path.clone();
                path.push(other.to_string());
                self.insert(other, Derivation { coord, path });
            }
        }
    }

    /// Coordinates of every name reachable from `root` through deltas whose
    /// endpoints are both still unknown, relative to `root`.
    pub fn component_offsets(&self, root: &str) -> Vec<(String, i64, i64)> {
        let mut seen: BTreeMap<String, (i64, i64)> = BTreeMap::new();
        let mut order = vec![root.to_string()];
        seen.insert(root.to_string(), (0, 0));
        let mut q = VecDeque::from([root.to_string()]);
        while let Some(u) = q.pop_front() {
            let (ux, uy) = seen[&u];
            for &e in self.incident.get(u.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                let d = &self.deltas[e];
                let (other, off) = if d.subject == u {
                    (d.object.as_str(), (ux - d.dx, uy - d.dy))
                } else {
                    (d.subject.as_str(), (ux + d.dx, uy + d.dy))
                };
                if self.known(other).is_some() || seen.contains_key(other) {
                    continue;
                }
                seen.insert(other.to_string(), off);
                order.push(other.to_string());
                q.push_back(other.to_string());
            }
        }
        order
            .into_iter()
            .map(|n| {
                let (x, y) = seen[&n];
                (n, x, y)
            })
            .collect()
    }

    pub fn finish(self) -> Propagation {
        self.out
    }

    pub fn snapshot(&self) -> &Propagation {
        &self.out
    }
}

/// Closure of `pinned` coordinates (in statement order) over `deltas`.
pub fn propagate_coordinates(pinned: &[(String, Coordinate)], deltas: &[DeltaRecord]) -> Propagation {
    let mut p = Propagator::new(deltas);
    for (n, c) in pinned {
        p.seed(n, *c);
    }
    p.run();
    p.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::DeltaSource;
    use proptest::prelude::*;

    fn delta(s: &str, o: &str, dx: i64, dy: i64) -> DeltaRecord {
        DeltaRecord {
            subject: s.into(),
            object: o.into(),
            dx,
            dy,
            source: DeltaSource::Stated,
        }
    }

    #[test]
    fn worked_example() {
        let p = propagate_coordinates(
            &[("Turntable".into(), Coordinate::new(1500, 2500))],
            &[delta("ABB Robot IRB6600", "Turntable", -2500, -2600)],
        );
        assert_eq!(p.coord("ABB Robot IRB6600"), Some(Coordinate::new(-1000, -100)));
        assert!(p.discrepancies.is_empty());
    }

    #[test]
    fn empty_deltas_keep_positions() {
        let pins = [("A".to_string(), Coordinate::new(3, 4))];
        let p = propagate_coordinates(&pins, &[]);
        assert_eq!(p.coords.len(), 1);
        assert_eq!(p.coord("A"), Some(Coordinate::new(3, 4)));
    }

    #[test]
    fn two_hop_chain_and_reverse_edges() {
        let pins = [("A".to_string(), Coordinate::ORIGIN)];
        let p = propagate_coordinates(&pins, &[delta("B", "A", 1000, 0), delta("C", "B", 0, 2000)]);
        assert_eq!(p.coord("C"), Some(Coordinate::new(1000, 2000)));
        // pinned at the subject end: object = subject - delta
        let pins = [("C".to_string(), Coordinate::new(1000, 2000))];
        let p = propagate_coordinates(&pins, &[delta("B", "A", 1000, 0), delta("C", "B", 0, 2000)]);
        assert_eq!(p.coord("A"), Some(Coordinate::ORIGIN));
    }

    #[test]
    fn inconsistent_cycle_is_reported_once() {
        let pins = [("A".to_string(), Coordinate::ORIGIN)];
        let p = propagate_coordinates(
            &pins,
            &[delta("B", "A", 1000, 0), delta("C", "B", 1000, 0), delta("C", "A", 3000, 0)],
        );
        assert_eq!(p.discrepancies.len(), 1);
        let d = &p.discrepancies[0];
        assert_eq!(d.object, "C");
        assert!(d.describe().contains("A -> B -> C") || d.describe().contains("A -> C"));
        // never overwritten
        assert_eq!(p.coords.len(), 3);
    }

    #[test]
    fn small_mismatch_is_tolerated() {
        let pins = [("A".to_string(), Coordinate::ORIGIN), ("B".to_string(), Coordinate::new(1030, 0))];
        let p = propagate_coordinates(&pins, &[delta("B", "A", 1000, 0)]);
        assert!(p.discrepancies.is_empty());
    }

    fn path_sum(root: usize, target: usize, parent: &[usize], offs: &[(i64, i64)]) -> (i64, i64) {
        // walk target up to the root through the parent array
        let mut sum = (0, 0);
        let mut cur = target;
        while cur != root {
            sum.0 += offs[cur].0;
            sum.1 += offs[cur].1;
            cur = parent[cur];
        }
        sum
    }

    proptest! {
        #[test]
        fn tree_propagation_matches_path_sums(
            raw in proptest::collection::vec((any::<prop::sample::Index>(), -4000i64..4000, -4000i64..4000, any::<bool>()), 1..12),
            rx in -3000i64..3000, ry in -3000i64..3000,
        ) {
            // node i+1 hangs off an earlier node; offsets are node - parent
            let n = raw.len() + 1;
            let mut parent = vec![0usize; n];
            let mut offs = vec![(0i64, 0i64); n];
            let mut deltas = Vec::new();
            for (i, (idx, dx, dy, flip)) in raw.iter().enumerate() {
                let node = i + 1;
                let p = idx.index(node);
                parent[node] = p;
                offs[node] = (*dx, *dy);
                if *flip {
                    deltas.push(delta(&format!("n{p}"), &format!("n{node}"), -dx, -dy));
                } else {
                    deltas.push(delta(&format!("n{node}"), &format!("n{p}"), *dx, *dy));
                }
            }
            let prop = propagate_coordinates(&[("n0".into(), Coordinate::new(rx, ry))], &deltas);
            prop_assert!(prop.discrepancies.is_empty());
            for t in 0..n {
                let (sx, sy) = path_sum(0, t, &parent, &offs);
                prop_assert_eq!(prop.coord(&format!("n{t}")), Some(Coordinate::new(rx + sx, ry + sy)));
            }
        }
    }
}
