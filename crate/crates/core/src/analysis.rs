//! Rule-based reading of scene descriptions: which objects are mentioned,
//! how many of each, literal coordinates and orientations, and relation
//! phrases between consecutive mentions.
//!
//! A description is `complete` when every word outside the recognized
//! mentions, coordinates and relation phrases is filler. Incomplete
//! descriptions still produce a best-effort reading.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::{parse_orientation, parse_relation, RelationAst};
use crate::facts::{LayoutInfo, Location, Orientation, PositionRecord, RelationRecord};
use crate::scene::{number_instances, Category, Coordinate, Direction, ObjectInstance, ObjectLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Name(&'static str),
    AnyRobot,
}

const LEXICON: &[(&str, Target)] = &[
    (r"kuka\s+robot\s+kr\s*125s?|kuka\s+kr\s*125s?|kr\s*125s?", Target::Name("Kuka Robot KR125")),
    (r"kuka\s+robot\s+kr\s*350s?|kuka\s+kr\s*350s?|kr\s*350s?", Target::Name("Kuka Robot KR350")),
    (r"abb\s+robot\s+irb\s*6600s?|abb\s+irb\s*6600s?|irb\s*6600s?", Target::Name("ABB Robot IRB6600")),
    (r"yaskawa\s+robot\s+ma\s*0?1800s?|yaskawa\s+ma\s*0?1800s?", Target::Name("YASKAWA Robot ma01800")),
    (r"kuka\s+robot(?:ic)?\s+arms?|kuka\s+robots?|kuka", Target::Name("Kuka Robot KR125")),
    (r"abb\s+robot(?:ic)?\s+arms?|abb\s+robots?|abb", Target::Name("ABB Robot IRB6600")),
    (r"yaskawa\s+robot(?:ic)?\s+arms?|yaskawa\s+robots?|yaskawa", Target::Name("YASKAWA Robot ma01800")),
    (r"robotic\s+arms?|robot\s+arms?|robots?", Target::AnyRobot),
    (r"turntables?", Target::Name("Turntable")),
    (r"welding\s+tables?|work\s*tables?|tables?", Target::Name("Welding Table")),
    (r"cabinets?", Target::Name("Cabinet")),
    (r"valve\s*stands?", Target::Name("ValveStand")),
    (r"conveyor\s+belts?|conveyors?", Target::Name("Conveyor")),
    (r"protective\s+guardings?|safety\s+guardings?|guardings?|safety\s+fenc(?:es|e|ing)|fenc(?:es|e|ing)", Target::Name("Guarding")),
];

fn lexicon() -> &'static [(Regex, Target)] {
    static L: OnceLock<Vec<(Regex, Target)>> = OnceLock::new();
    L.get_or_init(|| {
        LEXICON
            .iter()
            .map(|(p, t)| (Regex::new(&format!(r"(?i)\b(?:{p})\b")).expect("lexicon regex"), *t))
            .collect()
    })
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static R: OnceLock<Regex> = OnceLock::new();
            R.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

const NUM: &str = r"-?\d+(?:\.\d+)?";
re!(coord_re, &format!(
    r"\[\s*({NUM})\s*(?:mm)?\s*,\s*({NUM})\s*(?:mm)?\s*(?:,\s*{NUM}\s*(?:mm)?\s*)?\]"
));
re!(attach_re, &format!(
    r"(?i)^[\s,]*(?:(?:is|are|was|be|being|positioned|placed|located|situated|sits|stands|set|put|installed|centrally|currently)\s+)*(?:at|on)\s+(?:the\s+)?(?:(?:coordinates?|position|location|point)\s+)?(\[\s*{NUM}\s*(?:mm)?\s*,\s*{NUM}\s*(?:mm)?\s*(?:,\s*{NUM}\s*(?:mm)?\s*)?\])"
));
re!(sentence_re, r"[.!?;:\n](?:\s+|$)");
re!(word_re, r"[A-Za-z]+(?:'[a-z]+)?|\d+(?:\.\d+)?|[^\sA-Za-z\d]");
re!(suffix_re, r"^\s+(\d+)\b");
re!(unit_after_re, r"(?i)^\s*(?:mm|m|cm|meters?|metres?|millimeters?|millimetres?|,\s*-?\d)");
re!(clause_re, r"\s*(?:,|\band\b)\s*");

const FILLER: &[&str] = &[
    "a", "an", "the", "one", "is", "are", "be", "with", "and", "for", "spot", "welding", "equipped",
    "positioned", "placed", "located", "situated", "position", "place", "put", "give", "me", "create",
    "set", "up", "add", "there", "in", "at", "of", "scene", "station", "workstation", "cell", "please",
    "i", "need", "want", "we", "you", "can", "could", "also", "it", "has", "have", "include",
    "includes", "including", "containing", "contains", "consisting", "consists", "new", "simple",
    "basic", "layout", "simulation", "to", "on", "as", "plus", "which", "that", "this", "here",
    "make", "build", "design", "setup", "industrial", "area", "installed", "install", "will", "should",
    "be", "let's", "let", "us", "like", "would", "d", "ll",
];

const NUMBER_WORDS: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

fn filler(word: &str) -> bool {
    let w = word.to_ascii_lowercase();
    FILLER.contains(&w.as_str()) || w.chars().all(|c| !c.is_alphanumeric())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Quantity {
    Count(usize),
    Definite,
    Bare,
    Vague,
}

#[derive(Debug, Clone)]
struct Mention {
    /// Start of the determiner or quantity word, if any.
    lead_start: usize,
    start: usize,
    end: usize,
    /// End including a numbered suffix (`Conveyor 2`).
    full_end: usize,
    library_name: String,
    plural: bool,
    instances: Vec<usize>,
}

/// Where an object phrase sits in the text and which instances it names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionSpan {
    /// Start of the determiner or quantity word (equals `start` without one).
    pub lead_start: usize,
    pub start: usize,
    pub end: usize,
    pub library_name: String,
    pub plural: bool,
    /// Indices into `objects`.
    pub instances: Vec<usize>,
}

/// The scripted reading of one description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    /// Object phrases as written, one per instance.
    pub raw_names: Vec<String>,
    /// Library name per instance, in order of appearance.
    pub library_names: Vec<String>,
    pub objects: Vec<ObjectInstance>,
    /// The description with every object phrase replaced by its library name.
    pub rewritten: String,
    pub layout: LayoutInfo,
    pub mentions: Vec<MentionSpan>,
    pub complete: bool,
    pub notes: Vec<String>,
}

impl Analysis {
    pub fn display_names(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.display_name.clone()).collect()
    }

    /// The layout over `given`'s names, pairing instances of the same kind
    /// in order. Facts about unmatched instances are dropped.
    pub fn layout_for(&self, given: &[ObjectInstance]) -> LayoutInfo {
        let mut used = vec![false; given.len()];
        let mut map = BTreeMap::new();
        for a in &self.objects {
            let hit = given
                .iter()
                .enumerate()
                .find(|(i, g)| !used[*i] && g.display_name == a.display_name)
                .or_else(|| {
                    given
                        .iter()
                        .enumerate()
                        .find(|(i, g)| !used[*i] && g.library_name == a.library_name)
                });
            if let Some((i, g)) = hit {
                used[i] = true;
                map.insert(a.display_name.clone(), g.display_name.clone());
            }
        }
        let known = |n: &str| map.contains_key(n) || self.layout.is_anchor(n);
        let mut layout = self.layout.clone();
        layout.positions.retain(|p| known(&p.name));
        layout.relations.retain(|r| known(&r.subject) && known(&r.object));
        layout.renamed(&map)
    }
}

fn resolve(target: Target, library: &ObjectLibrary) -> Option<String> {
    match target {
        Target::Name(n) => library.contains(n).then(|| n.to_string()),
        Target::AnyRobot => library.of_category(Category::Robot).next().map(|e| e.name.clone()),
    }
}

/// Library name for a free-form object name (`"table"`, `"Kuka robot"`),
/// using the same lexicon as [`analyze`].
pub fn lookup_object(name: &str, library: &ObjectLibrary) -> Option<String> {
    if let Some(e) = library.entries().iter().find(|e| e.name.eq_ignore_ascii_case(name.trim())) {
        return Some(e.name.clone());
    }
    let (_, t) = find_mentions_raw(name).into_iter().next()?;
    resolve(t, library)
}

type Span = (usize, usize);

fn find_mentions_raw(text: &str) -> Vec<(Span, Target)> {
    let mut all: Vec<(Span, Target, usize)> = Vec::new();
    for (rank, (re, t)) in lexicon().iter().enumerate() {
        for m in re.find_iter(text) {
            all.push(((m.start(), m.end()), *t, rank));
        }
    }
    all.sort_by_key(|((s, e), _, rank)| (*s, std::cmp::Reverse(*e), *rank));
    let mut out: Vec<(Span, Target)> = Vec::new();
    for (span, t, _) in all {
        if out.last().is_some_and(|(prev, _)| span.0 < prev.1) {
            continue;
        }
        out.push((span, t));
    }
    out
}

fn quantity_before(text: &str, start: usize) -> (Quantity, usize) {
    let prefix = &text[..start];
    let trimmed = prefix.trim_end();
    if trimmed.len() == prefix.len() && !prefix.is_empty() {
        return (Quantity::Bare, start);
    }
    let lower = trimmed.to_ascii_lowercase();
    for (phrase, q) in [("a pair of", Quantity::Count(2)), ("pair of", Quantity::Count(2))] {
        if lower.ends_with(phrase) && lower[..lower.len() - phrase.len()].chars().last().is_none_or(|c| !c.is_alphanumeric()) {
            return (q, trimmed.len() - phrase.len());
        }
    }
    let word_start = lower
        .rfind(|c: char| !(c.is_ascii_alphanumeric()))
        .map_or(0, |i| i + 1);
    let word = &lower[word_start..];
    let q = match word {
        "a" | "an" | "one" | "another" => Quantity::Count(1),
        "the" => Quantity::Definite,
        "several" | "multiple" | "some" | "many" | "few" | "various" | "more" => Quantity::Vague,
        w if NUMBER_WORDS.contains(&w) => Quantity::Count(NUMBER_WORDS.iter().position(|n| *n == w).unwrap() + 1),
        w if !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit()) => {
            // a digit that ends a coordinate is not a quantity
            let before = lower[..word_start].trim_end();
            if before.ends_with(',') || before.ends_with('[') {
                return (Quantity::Bare, start);
            }
            match w.parse::<usize>() {
                Ok(n) if n >= 1 => Quantity::Count(n),
                _ => Quantity::Vague,
            }
        }
        _ => return (Quantity::Bare, start),
    };
    (q, word_start)
}

fn sentence_breaks(text: &str) -> Vec<usize> {
    sentence_re()
        .find_iter(text)
        .filter(|m| {
            // "2.6": a period between digits is not a sentence end
            let b = text.as_bytes();
            !(m.as_str().starts_with('.')
                && m.start() > 0
                && b[m.start() - 1].is_ascii_digit()
                && b.get(m.start() + 1).is_some_and(|c| c.is_ascii_digit()))
        })
        .map(|m| m.start())
        .collect()
}

fn strip_relation_text(s: &str) -> String {
    static LEAD: OnceLock<Regex> = OnceLock::new();
    static TRAIL: OnceLock<Regex> = OnceLock::new();
    let lead = LEAD.get_or_init(|| {
        Regex::new(r"(?i)^(?:[\s,]|\b(?:is|are|be|being|positioned|placed|located|situated|set|put|sits|stands|standing|which|that|it)\b)+")
            .expect("valid regex")
    });
    let trail = TRAIL.get_or_init(|| {
        Regex::new(r"(?i)(?:[\s,.;]|\b(?:of|from|to|the|a|an|than|with)\b)+$").expect("valid regex")
    });
    let s = lead.replace(s, "");
    let s = trail.replace(&s, "");
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Reader {
    library_names: Vec<String>,
    raw_names: Vec<String>,
    layout: LayoutInfo,
    complete: bool,
    notes: Vec<String>,
    coords: Vec<(usize, Coordinate)>,
    dirs: Vec<(usize, Direction)>,
    pending_relations: Vec<(usize, String, usize)>,
}

impl Reader {
    fn incomplete(&mut self, note: String) {
        self.complete = false;
        self.notes.push(note);
    }

    fn check_filler(&mut self, piece: &str) {
        let words: Vec<&str> = word_re().find_iter(piece).map(|m| m.as_str()).collect();
        let bad: Vec<&str> = words.iter().copied().filter(|w| !filler(w)).collect();
        if !bad.is_empty() {
            let note = format!("not understood: {:?}", piece.trim());
            self.incomplete(note);
        }
    }

    /// Text after a mention that belongs to the same sentence but does not
    /// lead to another mention: orientation clauses or filler.
    fn tail(&mut self, m: &Mention, piece: &str) {
        let cleaned = strip_relation_text(piece);
        if cleaned.is_empty() {
            return;
        }
        if m.instances.len() > 1 {
            let ast = parse_relation(&cleaned);
            if ast.is_recognized() && !matches!(ast, RelationAst::Offset(_) | RelationAst::Between { .. }) {
                for w in m.instances.windows(2) {
                    self.pending_relations.push((w[0], cleaned.clone(), w[1]));
                }
                return;
            }
        }
        for clause in clause_re().split(&cleaned) {
            let c = strip_relation_text(clause);
            if c.is_empty() {
                continue;
            }
            match parse_orientation(&c) {
                Some(d) if m.instances.len() == 1 => self.dirs.push((m.instances[0], d)),
                _ => self.check_filler(&c),
            }
        }
    }
}

/// Read a description with the built-in grammar.
pub fn analyze(description: &str, library: &ObjectLibrary) -> Analysis {
    let text = description;
    let mut r = Reader {
        library_names: Vec::new(),
        raw_names: Vec::new(),
        layout: LayoutInfo::default(),
        complete: true,
        notes: Vec::new(),
        coords: Vec::new(),
        dirs: Vec::new(),
        pending_relations: Vec::new(),
    };

    // mentions and their instances
    let mut mentions: Vec<Mention> = Vec::new();
    let mut by_kind: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for ((start, end), target) in find_mentions_raw(text) {
        let Some(lib) = resolve(target, library) else {
            r.incomplete(format!("{:?} is not in the library", &text[start..end]));
            continue;
        };
        let phrase = &text[start..end];
        let plural = phrase.to_ascii_lowercase().ends_with('s');
        let (q, lead_start) = quantity_before(text, start);
        let mut full_end = end;
        let mut numbered = None;
        if let Some(c) = suffix_re().captures(&text[end..]) {
            let after = &text[end + c.get(0).unwrap().end()..];
            if !unit_after_re().is_match(after) {
                numbered = c[1].parse::<usize>().ok().filter(|k| *k >= 1);
                if numbered.is_some() {
                    full_end = end + c.get(0).unwrap().end();
                }
            }
        }
        let existing = by_kind.entry(lib.clone()).or_default();
        let new_instances = |n: usize, r: &mut Reader, existing: &mut Vec<usize>| -> Vec<usize> {
            (0..n)
                .map(|_| {
                    let idx = r.library_names.len();
                    r.library_names.push(lib.clone());
                    let raw = if plural { phrase.trim_end_matches('s') } else { phrase };
                    r.raw_names.push(raw.to_string());
                    existing.push(idx);
                    idx
                })
                .collect()
        };
        let instances = match (numbered, q) {
            (Some(k), _) => {
                if existing.len() < k {
                    let need = k - existing.len();
                    new_instances(need, &mut r, existing);
                }
                vec![existing[k - 1]]
            }
            (None, Quantity::Count(n)) => new_instances(n, &mut r, existing),
            (None, Quantity::Definite | Quantity::Bare) => {
                if existing.is_empty() {
                    if plural {
                        r.incomplete(format!("unknown number of {phrase:?}"));
                        new_instances(2, &mut r, existing)
                    } else {
                        new_instances(1, &mut r, existing)
                    }
                } else if plural {
                    existing.clone()
                } else {
                    if existing.len() > 1 {
                        r.incomplete(format!("{phrase:?} could be any of {} objects", existing.len()));
                    }
                    vec![existing[0]]
                }
            }
            (None, Quantity::Vague) => {
                r.incomplete(format!("unknown number of {phrase:?}"));
                new_instances(2, &mut r, existing)
            }
        };
        mentions.push(Mention {
            lead_start,
            start,
            end,
            full_end,
            library_name: lib,
            plural,
            instances,
        });
    }
    if mentions.is_empty() {
        r.incomplete("no objects mentioned".into());
    }

    // text around and between mentions
    let breaks = sentence_breaks(text);
    let lead_end = mentions.first().map_or(text.len(), |m| m.lead_start);
    r.check_filler(&text[..lead_end]);
    for i in 0..mentions.len() {
        let m = mentions[i].clone();
        let gap_end = mentions.get(i + 1).map_or(text.len(), |n| n.lead_start);
        let mut gap_start = m.full_end;
        if gap_end < gap_start {
            continue;
        }
        if let Some(c) = attach_re().captures(&text[gap_start..gap_end]) {
            let cm = coord_re().captures(&c[1]).expect("attach implies coordinate");
            let x: f64 = cm[1].parse().unwrap_or(f64::NAN);
            let y: f64 = cm[2].parse().unwrap_or(f64::NAN);
            match (Coordinate::from_mm(x, y), m.instances.as_slice()) {
                (Ok(c), [one]) => r.coords.push((*one, c)),
                _ => r.incomplete(format!("coordinate for {:?} is ambiguous", &text[m.start..m.end])),
            }
            gap_start += c.get(0).unwrap().end();
        }
        let gap = &text[gap_start..gap_end];
        let inner: Vec<usize> = breaks
            .iter()
            .copied()
            .filter(|b| *b >= gap_start && *b < gap_end)
            .collect();
        match (inner.first(), inner.last()) {
            (None, _) if i + 1 < mentions.len() => {
                let n = mentions[i + 1].clone();
                let rel = strip_relation_text(gap);
                let ast = parse_relation(&rel);
                if !rel.is_empty() && ast.is_recognized() {
                    match (m.instances.as_slice(), n.instances.as_slice()) {
                        ([s], [o]) if s != o => r.pending_relations.push((*s, rel, *o)),
                        _ => r.incomplete(format!("relation {rel:?} between groups")),
                    }
                } else {
                    r.tail(&m, gap);
                }
            }
            (None, _) => r.tail(&m, gap),
            (Some(&first), Some(&last)) => {
                r.tail(&m, &text[gap_start..first]);
                let mid = &text[first..last];
                r.check_filler(mid);
                let head_start = last + 1;
                if head_start < gap_end {
                    r.check_filler(&text[head_start..gap_end]);
                }
            }
            (Some(_), None) => unreachable!("first implies last"),
        }
    }

    let library_names = r.library_names.clone();
    let objects = number_instances(&library_names);
    let name = |i: usize| objects[i].display_name.clone();

    // positions: a stated coordinate without an orientation faces the front
    let mut per_object: BTreeMap<usize, (Vec<Coordinate>, Option<Direction>)> = BTreeMap::new();
    for (i, c) in &r.coords {
        per_object.entry(*i).or_default().0.push(*c);
    }
    for (i, d) in &r.dirs {
        per_object.entry(*i).or_default().1.get_or_insert(*d);
    }
    let mut order: Vec<usize> = r.coords.iter().map(|(i, _)| *i).chain(r.dirs.iter().map(|(i, _)| *i)).collect();
    let mut seen = std::collections::BTreeSet::new();
    order.retain(|i| seen.insert(*i));
    for i in order {
        let (cs, d) = &per_object[&i];
        let direction = match (d, cs.is_empty()) {
            (Some(d), _) => Some(Orientation::Angle(*d)),
            (None, false) => Some(Orientation::Angle(Direction::FRONT)),
            (None, true) => None,
        };
        if cs.is_empty() {
            r.layout.push_position(PositionRecord {
                name: name(i),
                location: None,
                direction: direction.clone(),
            });
        }
        for (k, c) in cs.iter().enumerate() {
            r.layout.push_position(PositionRecord {
                name: name(i),
                location: Some(Location::Coordinate(*c)),
                direction: if k == 0 { direction.clone() } else { None },
            });
        }
    }
    for (s, text, o) in std::mem::take(&mut r.pending_relations) {
        if !r.layout.push_relation(RelationRecord {
            subject: name(s),
            object: name(o),
            relation_text: text.clone(),
        }) {
            r.incomplete(format!("second relation between {} and {}: {text:?}", name(s), name(o)));
        }
    }

    // rewritten description: library names in place of object phrases
    let mut rewritten = String::with_capacity(text.len());
    let mut last = 0;
    for m in &mentions {
        rewritten.push_str(&text[last..m.start]);
        rewritten.push_str(&m.library_name);
        if m.plural && !m.library_name.ends_with('s') {
            rewritten.push('s');
        }
        last = m.end;
    }
    rewritten.push_str(&text[last..]);
    let rewritten = rewritten.split_whitespace().collect::<Vec<_>>().join(" ");

    Analysis {
        raw_names: r.raw_names,
        library_names,
        objects,
        rewritten,
        layout: r.layout,
        mentions: mentions
            .iter()
            .map(|m| MentionSpan {
                lead_start: m.lead_start,
                start: m.start,
                end: m.end,
                library_name: m.library_name.clone(),
                plural: m.plural,
                instances: m.instances.clone(),
            })
            .collect(),
        complete: r.complete,
        notes: r.notes,
    }
}
