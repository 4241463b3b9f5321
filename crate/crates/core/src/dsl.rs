//! Relation phrases: a small grammar over the wording used for relative
//! placement ("2 meters to the left", "in front of", "facing", "between A and
//! B"), plus the inverse renderer used when generating descriptions.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::facts::{DeltaRecord, DeltaSource};
use crate::scene::Direction;

/// Magnitudes the solver may pick when a phrase leaves distance open.
pub const FREE_DISTANCES_MM: [i64; 9] = [1000, 1500, 2000, 2500, 3000, 3500, 4000, 4500, 5000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSpec {
    /// Signed offset in mm.
    Exact(i64),
    Positive,
    Negative,
    /// Not constrained.
    Free,
}

impl AxisSpec {
    fn is_free(self) -> bool {
        self == AxisSpec::Free
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offset {
    pub x: AxisSpec,
    pub y: AxisSpec,
}

impl Offset {
    pub fn exact(&self) -> Option<(i64, i64)> {
        match (self.x, self.y) {
            (AxisSpec::Exact(x), AxisSpec::Exact(y)) => Some((x, y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RelationAst {
    Offset(Offset),
    Facing,
    DistanceOnly { mm: i64 },
    Adjacency,
    Parallel,
    Between { first: String, second: String },
    Compound { parts: Vec<RelationAst> },
    Unrecognized,
}

impl RelationAst {
    /// Flattened view of the constraint parts.
    pub fn parts(&self) -> Vec<&RelationAst> {
        match self {
            RelationAst::Compound { parts } => parts.iter().collect(),
            other => vec![other],
        }
    }

    pub fn has_facing(&self) -> bool {
        self.parts().iter().any(|p| matches!(p, RelationAst::Facing))
    }

    pub fn is_recognized(&self) -> bool {
        !matches!(self, RelationAst::Unrecognized)
    }
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static R: OnceLock<Regex> = OnceLock::new();
            R.get_or_init(|| Regex::new($pat).unwrap())
        }
    };
}

const NUMBER: &str = r"(\d+(?:\.\d+)?|one|two|three|four|five|six|seven|eight|nine|ten|half a|a half)";
const UNIT: &str = r"(millimeters?|millimetres?|mm|centimeters?|centimetres?|cm|meters?|metres?|m)";

re!(between_re, r"(?i)^(?:(?:is|are|positioned|placed|located|situated|sits|set)\s+)*(?:right\s+|exactly\s+)?(?:in\s+the\s+middle\s+)?between\s+(?:the\s+)?(.+?)\s+and\s+(?:the\s+)?(.+?)\s*[.,;]?$");
re!(clause_split_re, r"\s*(?:,|;|\band\b|\bwhile\b|\bwith\b)\s*");
re!(lead_filler_re, r"^(?:(?:is|are|be|being|it is|which is|that is|positioned|placed|located|situated|set|put|sits|stands|standing|also|exactly|directly|just|about|approximately|around|roughly|some|precisely|should be|must be)\s+)+");
re!(trail_filler_re, r"(?:\s+(?:of|from|to|the|it|them|away|apart|each other|one another|object|relative))+$");
re!(qty_re, &format!(r"^{NUMBER}\s*-?\s*{UNIT}$"));
re!(qty_dir_re, &format!(r"^(?:(?:at\s+)?(?:a\s+)?distance\s+of\s+)?{NUMBER}\s*-?\s*{UNIT}\s+(.+)$"));
re!(dir_by_qty_re, &format!(r"^(.+?)\s+by\s+{NUMBER}\s*-?\s*{UNIT}$"));
re!(distance_re, &format!(r"^(?:(?:at|with)\s+)?(?:a\s+)?distance\s+of\s+{NUMBER}\s*-?\s*{UNIT}$"));
re!(facing_re, r"^(?:facing|faces|face|oriented|orientated|pointing|pointed|turned|looking|directed|rotated)(?:\s+(?:at|towards?|to|toward))?$");
re!(parallel_re, r"^(?:(?:arranged|aligned|running|runs|run|placed|lying)\s+)?(?:in\s+)?parallel(?:\s+(?:with|to))?$");
re!(adjacent_re, r"^(?:next|near|nearby|beside|besides|adjacent|alongside|close|closely|by|by the side|at the side|accompanied by|neighbou?ring|neighbou?rs?)(?:\s+(?:to|by|with))?$");
re!(orientation_deg_re, r"(?i)^(?:rotated\s+|rotate\s+|rotating\s+|turned\s+)?(?:for\s+|by\s+)?(-?\d+(?:\.\d+)?)\s*(?:°|deg|degrees?)?$");

fn number_value(word: &str) -> Option<f64> {
    let v = match word {
        "one" => 1.0,
        "two" => 2.0,
        "three" => 3.0,
        "four" => 4.0,
        "five" => 5.0,
        "six" => 6.0,
        "seven" => 7.0,
        "eight" => 8.0,
        "nine" => 9.0,
        "ten" => 10.0,
        "half a" | "a half" => 0.5,
        w => return w.parse().ok(),
    };
    Some(v)
}

fn unit_factor(unit: &str) -> f64 {
    match unit {
        u if u.starts_with("mm") || u.starts_with("milli") => 1.0,
        u if u.starts_with("cm") || u.starts_with("centi") => 10.0,
        _ => 1000.0,
    }
}

fn quantity_mm(num: &str, unit: &str) -> Option<i64> {
    let v = number_value(num)? * unit_factor(unit);
    v.is_finite().then(|| v.round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dir {
    Left,
    Right,
    Front,
    Back,
}

fn direction_word(s: &str) -> Option<Dir> {
    let s = s.trim();
    let d = match s {
        "to the left" | "on the left" | "to the left side" | "on the left side" | "left"
        | "leftward" | "leftwards" | "left side" | "at the left" => Dir::Left,
        "to the right" | "on the right" | "to the right side" | "on the right side" | "right"
        | "rightward" | "rightwards" | "right side" | "at the right" => Dir::Right,
        "in front" | "to the front" | "at the front" | "front" | "forward" | "forwards"
        | "ahead" | "in the front" | "on the front side" | "on the front" => Dir::Front,
        "behind" | "back" | "backward" | "backwards" | "to the back" | "at the back"
        | "to the rear" | "at the rear" | "rear" | "in the back" | "in back" => Dir::Back,
        _ => return None,
    };
    Some(d)
}

#[derive(Debug, Clone, PartialEq)]
enum Clause {
    Axis(Dir, Option<i64>),
    Distance(i64),
    Facing,
    Parallel,
    Adjacent,
    Empty,
    Unknown,
}

fn parse_clause(raw: &str) -> Clause {
    let mut c = raw.trim().trim_end_matches(['.', ',', ';']).to_string();
    c = lead_filler_re().replace(&c, "").to_string();
    c = trail_filler_re().replace(&c, "").to_string();
    let c = c.trim();
    if c.is_empty() {
        return Clause::Empty;
    }
    if facing_re().is_match(c) {
        return Clause::Facing;
    }
    if parallel_re().is_match(c) {
        return Clause::Parallel;
    }
    if adjacent_re().is_match(c) {
        return Clause::Adjacent;
    }
    if let Some(d) = direction_word(c) {
        return Clause::Axis(d, None);
    }
    if let Some(m) = qty_re().captures(c).or_else(|| distance_re().captures(c)) {
        return match quantity_mm(&m[1], &m[2]) {
            Some(mm) => Clause::Distance(mm),
            None => Clause::Unknown,
        };
    }
    if let Some(m) = qty_dir_re().captures(c) {
        let rest = trail_filler_re().replace(&m[3], "").to_string();
        return match (quantity_mm(&m[1], &m[2]), direction_word(&rest)) {
            (Some(mm), Some(d)) => Clause::Axis(d, Some(mm)),
            (Some(mm), None) if adjacent_re().is_match(rest.trim()) => Clause::Distance(mm),
            _ => Clause::Unknown,
        };
    }
    if let Some(m) = dir_by_qty_re().captures(c) {
        return match (direction_word(&m[1]), quantity_mm(&m[2], &m[3])) {
            (Some(d), Some(mm)) => Clause::Axis(d, Some(mm)),
            _ => Clause::Unknown,
        };
    }
    Clause::Unknown
}

fn set_axis(slot: &mut AxisSpec, spec: AxisSpec) -> bool {
    if !slot.is_free() {
        return false;
    }
    *slot = spec;
    true
}

/// Parse a relation phrase. Anything outside the grammar comes back as
/// [`RelationAst::Unrecognized`]; this never fails.
pub fn parse_relation(text: &str) -> RelationAst {
    let trimmed = text.trim();
    if let Some(m) = between_re().captures(trimmed) {
        return RelationAst::Between {
            first: m[1].trim().to_string(),
            second: m[2].trim().to_string(),
        };
    }
    let lower = trimmed.to_lowercase();
    let lower = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut x = AxisSpec::Free;
    let mut y = AxisSpec::Free;
    let mut distance = None;
    let (mut facing, mut parallel, mut adjacent) = (false, false, false);
    for raw in clause_split_re().split(&lower) {
        match parse_clause(raw) {
            Clause::Empty => {}
            Clause::Unknown => return RelationAst::Unrecognized,
            Clause::Facing => facing = true,
            Clause::Parallel => parallel = true,
            Clause::Adjacent => adjacent = true,
            Clause::Distance(mm) => {
                if distance.replace(mm).is_some() {
                    return RelationAst::Unrecognized;
                }
            }
            Clause::Axis(d, mag) => {
                if mag == Some(0) {
                    return RelationAst::Unrecognized;
                }
                let (slot, positive) = match d {
                    Dir::Front => (&mut x, true),
                    Dir::Back => (&mut x, false),
                    Dir::Left => (&mut y, true),
                    Dir::Right => (&mut y, false),
                };
                let spec = match (mag, positive) {
                    (Some(m), true) => AxisSpec::Exact(m),
                    (Some(m), false) => AxisSpec::Exact(-m),
                    (None, true) => AxisSpec::Positive,
                    (None, false) => AxisSpec::Negative,
                };
                if !set_axis(slot, spec) {
                    return RelationAst::Unrecognized;
                }
            }
        }
    }

    // "2 meters away, to the left": the distance belongs to the single open axis
    if let Some(mm) = distance {
        let open = |a: AxisSpec| matches!(a, AxisSpec::Positive | AxisSpec::Negative);
        let signed = |a: AxisSpec| if a == AxisSpec::Positive { mm } else { -mm };
        if open(x) && y.is_free() {
            x = AxisSpec::Exact(signed(x));
            distance = None;
        } else if open(y) && x.is_free() {
            y = AxisSpec::Exact(signed(y));
            distance = None;
        }
    }

    let mut parts = Vec::new();
    if !x.is_free() || !y.is_free() {
        let any_exact = matches!(x, AxisSpec::Exact(_)) || matches!(y, AxisSpec::Exact(_));
        if any_exact {
            if x.is_free() {
                x = AxisSpec::Exact(0);
            }
            if y.is_free() {
                y = AxisSpec::Exact(0);
            }
        }
        parts.push(RelationAst::Offset(Offset { x, y }));
        if distance.is_some() {
            return RelationAst::Unrecognized;
        }
    } else if let Some(mm) = distance {
        parts.push(RelationAst::DistanceOnly { mm });
    } else if adjacent {
        parts.push(RelationAst::Adjacency);
    }
    if facing {
        parts.push(RelationAst::Facing);
    }
    if parallel {
        parts.push(RelationAst::Parallel);
    }
    match parts.len() {
        0 => RelationAst::Unrecognized,
        1 => parts.pop().unwrap(),
        _ => RelationAst::Compound { parts },
    }
}

fn pick_free<R: Rng + ?Sized>(rng: &mut R) -> i64 {
    FREE_DISTANCES_MM[rng.gen_range(0..FREE_DISTANCES_MM.len())]
}

fn axis_aligned<R: Rng + ?Sized>(mm: i64, rng: &mut R) -> (i64, i64) {
    match rng.gen_range(0..4) {
        0 => (mm, 0),
        1 => (0, mm),
        2 => (-mm, 0),
        _ => (0, -mm),
    }
}

/// Turn a parsed relation into `subject = object + delta`. Direction-only
/// relations and unrecognized ones give `None`.
pub fn relation_to_delta<R: Rng + ?Sized>(
    subject: &str,
    object: &str,
    ast: &RelationAst,
    rng: &mut R,
) -> Option<DeltaRecord> {
    let (dx, dy, source) = match ast {
        RelationAst::Offset(o) => {
            let mut chosen = false;
            let mut axis = |a: AxisSpec, rng: &mut R| match a {
                AxisSpec::Exact(v) => v,
                AxisSpec::Positive => {
                    chosen = true;
                    pick_free(rng)
                }
                AxisSpec::Negative => {
                    chosen = true;
                    -pick_free(rng)
                }
                AxisSpec::Free => 0,
            };
            let dx = axis(o.x, &mut *rng);
            let dy = axis(o.y, &mut *rng);
            let src = if chosen { DeltaSource::Chosen } else { DeltaSource::Stated };
            (dx, dy, src)
        }
        RelationAst::DistanceOnly { mm } => {
            let (dx, dy) = axis_aligned(*mm, rng);
            (dx, dy, DeltaSource::Chosen)
        }
        RelationAst::Adjacency => {
            let mm = pick_free(rng);
            let (dx, dy) = axis_aligned(mm, rng);
            (dx, dy, DeltaSource::Chosen)
        }
        RelationAst::Compound { parts } => {
            return parts
                .iter()
                .find_map(|p| relation_to_delta(subject, object, p, rng));
        }
        RelationAst::Facing
        | RelationAst::Parallel
        | RelationAst::Between { .. }
        | RelationAst::Unrecognized => return None,
    };
    Some(DeltaRecord {
        subject: subject.to_string(),
        object: object.to_string(),
        dx,
        dy,
        source,
    })
}

/// Parse an orientation field such as `"0"`, `"90 degrees"` or
/// `"facing the left"`. `None` for anything else, including "towards X".
pub fn parse_orientation(text: &str) -> Option<Direction> {
    let t = text.trim().trim_matches('"').trim();
    if let Some(m) = orientation_deg_re().captures(t) {
        let v: f64 = m[1].parse().ok()?;
        return Direction::new(v).ok();
    }
    let lower = t.to_lowercase();
    let rest = lower
        .trim_start_matches("facing")
        .trim_start_matches("faces")
        .trim_start_matches("face")
        .trim_start_matches("oriented")
        .trim()
        .trim_start_matches("towards")
        .trim_start_matches("toward")
        .trim_start_matches("to")
        .trim()
        .trim_start_matches("the ")
        .trim()
        .trim_start_matches("positive ")
        .trim_start_matches("negative ");
    let deg = match rest {
        "front" | "forward" | "+x" | "x-axis" => 0.0,
        "left" | "+y" => 90.0,
        "back" | "rear" | "backward" | "-x" => 180.0,
        "right" | "-y" => 270.0,
        _ => return None,
    };
    if lower.contains("negative") {
        return Direction::new(deg + 180.0).ok();
    }
    Direction::new(deg).ok()
}

fn meters(mm: i64) -> String {
    let m = mm as f64 / 1000.0;
    let s = crate::scene::format_degrees(m);
    if s == "1" {
        "1 meter".to_string()
    } else {
        format!("{s} meters")
    }
}

fn length_phrase(mm: i64) -> String {
    if mm % 100 == 0 {
        meters(mm)
    } else {
        format!("{mm} mm")
    }
}

/// Render an exact offset as a phrase the parser reads back to the same
/// offset, including the trailing preposition: `(-2500, -2600)` gives
/// `"2.6 meters to the right and 2.5 meters back from"`.
pub fn render_offset(dx: i64, dy: i64) -> String {
    let mut parts: Vec<(String, &str)> = Vec::new();
    if dy > 0 {
        parts.push((format!("{} to the left", length_phrase(dy)), "of"));
    } else if dy < 0 {
        parts.push((format!("{} to the right", length_phrase(-dy)), "of"));
    }
    if dx > 0 {
        parts.push((format!("{} in front", length_phrase(dx)), "of"));
    } else if dx < 0 {
        parts.push((format!("{} back", length_phrase(-dx)), "from"));
    }
    if parts.is_empty() {
        return "at the same position as".to_string();
    }
    let prep = parts.last().unwrap().1;
    let body: Vec<String> = parts.into_iter().map(|(p, _)| p).collect();
    format!("{} {prep}", body.join(" and "))
}

/// Apply a name mapping to the operands of a `between` phrase; other
/// phrases carry no names and are returned unchanged.
pub fn rename_in_relation(text: &str, map: &BTreeMap<String, String>) -> String {
    match parse_relation(text) {
        RelationAst::Between { first, second } => {
            let r = |n: String| map.get(&n).cloned().unwrap_or(n);
            format!("between {} and {}", r(first), r(second))
        }
        _ => text.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn off(x: AxisSpec, y: AxisSpec) -> RelationAst {
        RelationAst::Offset(Offset { x, y })
    }

    #[test]
    fn worked_example_phrase() {
        assert_eq!(
            parse_relation("2.6 meters to the right and 2.5 meters back"),
            off(AxisSpec::Exact(-2500), AxisSpec::Exact(-2600))
        );
    }

    #[test]
    fn single_axis_pins_the_other_to_zero() {
        assert_eq!(
            parse_relation("3 meters in front"),
            off(AxisSpec::Exact(3000), AxisSpec::Exact(0))
        );
        assert_eq!(
            parse_relation("1500mm to the left of"),
            off(AxisSpec::Exact(0), AxisSpec::Exact(1500))
        );
        assert_eq!(
            parse_relation("2m behind"),
            off(AxisSpec::Exact(-2000), AxisSpec::Exact(0))
        );
    }

    #[test]
    fn open_directions() {
        assert_eq!(parse_relation("in front of"), off(AxisSpec::Positive, AxisSpec::Free));
        assert_eq!(parse_relation("behind"), off(AxisSpec::Negative, AxisSpec::Free));
        assert_eq!(
            parse_relation("to the left and in front of"),
            off(AxisSpec::Positive, AxisSpec::Positive)
        );
        assert_eq!(
            parse_relation("2 meters away, to the right of"),
            off(AxisSpec::Exact(0), AxisSpec::Exact(-2000))
        );
    }

    #[test]
    fn other_kinds() {
        assert_eq!(parse_relation("facing"), RelationAst::Facing);
        assert_eq!(parse_relation("oriented towards"), RelationAst::Facing);
        assert_eq!(parse_relation("next to"), RelationAst::Adjacency);
        assert_eq!(parse_relation("near"), RelationAst::Adjacency);
        assert_eq!(parse_relation("parallel to"), RelationAst::Parallel);
        assert_eq!(parse_relation("1500mm from"), RelationAst::DistanceOnly { mm: 1500 });
        assert_eq!(
            parse_relation("at a distance of 4 meters from"),
            RelationAst::DistanceOnly { mm: 4000 }
        );
        assert_eq!(
            parse_relation("between Welding Table 1 and the Conveyor"),
            RelationAst::Between {
                first: "Welding Table 1".into(),
                second: "Conveyor".into()
            }
        );
        assert_eq!(
            parse_relation("2 meters in front of and facing"),
            RelationAst::Compound {
                parts: vec![off(AxisSpec::Exact(2000), AxisSpec::Exact(0)), RelationAst::Facing]
            }
        );
    }

    #[test]
    fn unrecognized_is_a_value_not_an_error() {
        assert_eq!(parse_relation("somewhere nice"), RelationAst::Unrecognized);
        assert_eq!(parse_relation(""), RelationAst::Unrecognized);
        assert_eq!(parse_relation("0 meters to the left"), RelationAst::Unrecognized);
        assert_eq!(parse_relation("to the left and to the right"), RelationAst::Unrecognized);
    }

    #[test]
    fn deltas() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ast = parse_relation("2.6 meters to the right and 2.5 meters back");
        let d = relation_to_delta("ABB Robot IRB6600", "Turntable", &ast, &mut rng).unwrap();
        assert_eq!((d.dx, d.dy, d.source), (-2500, -2600, DeltaSource::Stated));
        assert!(relation_to_delta("a", "b", &RelationAst::Facing, &mut rng).is_none());
        assert!(relation_to_delta("a", "b", &RelationAst::Parallel, &mut rng).is_none());
    }

    #[test]
    fn distance_only_is_axis_aligned_and_seeded() {
        let ast = RelationAst::DistanceOnly { mm: 2000 };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = relation_to_delta("a", "b", &ast, &mut rng).unwrap();
            assert!(d.dx == 0 || d.dy == 0);
            assert_eq!(d.dx.abs() + d.dy.abs(), 2000);
            let mut again = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(relation_to_delta("a", "b", &ast, &mut again).unwrap(), d);
        }
        let first_front = (0..50u64)
            .find(|&s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let d = relation_to_delta("a", "b", &ast, &mut rng).unwrap();
                (d.dx, d.dy) == (2000, 0)
            })
            .expect("some seed picks +x");
        let mut rng = ChaCha8Rng::seed_from_u64(first_front);
        let d = relation_to_delta("a", "b", &ast, &mut rng).unwrap();
        assert_eq!((d.dx, d.dy), (2000, 0));
    }

    #[test]
    fn adjacency_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = relation_to_delta("a", "b", &RelationAst::Adjacency, &mut rng).unwrap();
            let m = d.dx.abs() + d.dy.abs();
            assert!((1000..=5000).contains(&m));
        }
    }

    #[test]
    fn orientation_fields() {
        assert_eq!(parse_orientation("0").unwrap().degrees(), 0.0);
        assert_eq!(parse_orientation("90 degrees").unwrap().degrees(), 90.0);
        assert_eq!(parse_orientation("-90").unwrap().degrees(), 270.0);
        assert_eq!(parse_orientation("facing the left").unwrap().degrees(), 90.0);
        assert_eq!(parse_orientation("facing back").unwrap().degrees(), 180.0);
        assert!(parse_orientation("towards the Turntable").is_none());
    }

    #[test]
    fn rendered_offsets() {
        assert_eq!(
            render_offset(-2500, -2600),
            "2.6 meters to the right and 2.5 meters back from"
        );
        assert_eq!(render_offset(1000, 0), "1 meter in front of");
        assert_eq!(render_offset(0, 1250), "1250 mm to the left of");
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(dx in -5000i64..5000, dy in -5000i64..5000) {
            prop_assume!(dx != 0 || dy != 0);
            let ast = parse_relation(&render_offset(dx, dy));
            prop_assert_eq!(ast, off(AxisSpec::Exact(dx), AxisSpec::Exact(dy)));
        }

        #[test]
        fn never_panics(s in "\\PC{0,60}") {
            let _ = parse_relation(&s);
            let _ = parse_orientation(&s);
        }
    }
}
