//! Layout facts pulled out of a description: absolute positions, pairwise
//! relations, and relations rewritten as coordinate differences.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::StageError;
use crate::scene::{Coordinate, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Coordinate(Coordinate),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Angle(Direction),
    Text(String),
}

/// Where an object (or a reference point) is, as stated by the description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub name: String,
    pub location: Option<Location>,
    pub direction: Option<Orientation>,
}

impl PositionRecord {
    pub fn coordinate(&self) -> Option<Coordinate> {
        match &self.location {
            Some(Location::Coordinate(c)) => Some(*c),
            _ => None,
        }
    }

    pub fn angle(&self) -> Option<Direction> {
        match &self.direction {
            Some(Orientation::Angle(d)) => Some(*d),
            _ => None,
        }
    }
}

/// `subject` relative to `object`, in free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub subject: String,
    pub object: String,
    pub relation_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    /// Both components come straight from the description.
    Stated,
    /// At least one component was chosen by the solver.
    Chosen,
}

/// `subject = object + (dx, dy)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub subject: String,
    pub object: String,
    pub dx: i64,
    pub dy: i64,
    pub source: DeltaSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAnchor {
    pub name: String,
    pub coord: Option<Coordinate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutInfo {
    pub positions: Vec<PositionRecord>,
    pub relations: Vec<RelationRecord>,
    pub anchors: Vec<NamedAnchor>,
}

impl LayoutInfo {
    /// Adds a relation unless it is reflexive or its unordered pair is
    /// already present. Returns whether it was added.
    pub fn push_relation(&mut self, r: RelationRecord) -> bool {
        if r.subject == r.object {
            return false;
        }
        let dup = self.relations.iter().any(|e| {
            (e.subject == r.subject && e.object == r.object)
                || (e.subject == r.object && e.object == r.subject)
        });
        if dup {
            return false;
        }
        self.relations.push(r);
        true
    }

    /// Adds a position record. A later record for the same name fills in
    /// whichever of location/direction the earlier one lacked.
    pub fn push_position(&mut self, p: PositionRecord) {
        if p.location.is_none() && p.direction.is_none() {
            return;
        }
        if let Some(existing) = self.positions.iter_mut().find(|e| e.name == p.name) {
            if existing.location.is_none() {
                existing.location = p.location;
            } else if let (Some(Location::Coordinate(_)), Some(Location::Coordinate(_))) =
                (&existing.location, &p.location)
            {
                // two literal coordinates for one object: keep both so the
                // conflict stays visible to verification
                self.positions.push(p);
                return;
            }
            if existing.direction.is_none() {
                existing.direction = p.direction;
            }
            return;
        }
        self.positions.push(p);
    }

    /// Literal coordinates per name, first statement wins.
    pub fn pinned_coords(&self) -> BTreeMap<String, Coordinate> {
        let mut out = BTreeMap::new();
        for p in &self.positions {
            if let Some(c) = p.coordinate() {
                out.entry(p.name.clone()).or_insert(c);
            }
        }
        for a in &self.anchors {
            if let Some(c) = a.coord {
                out.entry(a.name.clone()).or_insert(c);
            }
        }
        out
    }

    /// Object names (not anchors) that the description pins to a coordinate.
    pub fn pinned_objects(&self) -> BTreeSet<String> {
        let anchors: BTreeSet<&str> = self.anchors.iter().map(|a| a.name.as_str()).collect();
        self.positions
            .iter()
            .filter(|p| p.coordinate().is_some() && !anchors.contains(p.name.as_str()))
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn is_anchor(&self, name: &str) -> bool {
        self.anchors.iter().any(|a| a.name == name)
    }

    /// Every referenced name must be one of `objects` or an anchor.
    pub fn check_references<'a>(
        &self,
        objects: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), StageError> {
        let mut known: BTreeSet<&str> = objects.into_iter().collect();
        let mut anchor_names = BTreeSet::new();
        for a in &self.anchors {
            if !anchor_names.insert(a.name.as_str()) {
                return Err(StageError::Invalid(format!("duplicate anchor {:?}", a.name)));
            }
            known.insert(a.name.as_str());
        }
        let names = self
            .positions
            .iter()
            .map(|p| p.name.as_str())
            .chain(self.relations.iter().flat_map(|r| [r.subject.as_str(), r.object.as_str()]));
        for n in names {
            if !known.contains(n) {
                return Err(StageError::UnresolvedName(n.to_string()));
            }
        }
        Ok(())
    }

    /// Rename references, leaving unknown names untouched.
    pub fn renamed(&self, map: &BTreeMap<String, String>) -> LayoutInfo {
        let r = |n: &String| map.get(n).cloned().unwrap_or_else(|| n.clone());
        LayoutInfo {
            positions: self
                .positions
                .iter()
                .map(|p| PositionRecord {
                    name: r(&p.name),
                    ..p.clone()
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|x| RelationRecord {
                    subject: r(&x.subject),
                    object: r(&x.object),
                    relation_text: crate::dsl::rename_in_relation(&x.relation_text, map),
                })
                .collect(),
            anchors: self.anchors.clone(),
        }
    }
}
