use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

use super::RewriteMethod;
use crate::analysis::{analyze, Analysis};
use crate::scene::ObjectLibrary;

const DIRECTIONS: [&str; 4] = ["in front of", "behind", "to the left of", "to the right of"];

/// Distances strictly inside (1 m, 5 m), as written in descriptions.
fn distance<R: Rng + ?Sized>(rng: &mut R) -> String {
    let half_meters = rng.gen_range(3..=9);
    if half_meters % 2 == 0 {
        format!("{}", half_meters / 2)
    } else {
        format!("{}.5", half_meters / 2)
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "An",
        _ => "A",
    }
}

fn with_sentence(text: &str, sentence: &str) -> String {
    let t = text.trim_end();
    if t.ends_with(['.', '!', '?']) {
        format!("{t} {sentence}")
    } else {
        format!("{t}. {sentence}")
    }
}

fn related(a: &Analysis, x: &str, y: &str) -> bool {
    a.layout
        .relations
        .iter()
        .any(|r| (r.subject == x && r.object == y) || (r.subject == y && r.object == x))
}

fn in_layout(a: &Analysis, name: &str) -> bool {
    a.layout.positions.iter().any(|p| p.name == name)
        || a.layout.relations.iter().any(|r| r.subject == name || r.object == name)
}

fn add_object<R: Rng + ?Sized>(text: &str, a: &Analysis, library: &ObjectLibrary, rng: &mut R) -> Option<String> {
    let names: Vec<&str> = library.names().collect();
    let kind = *names.choose(rng)?;
    if a.objects.is_empty() {
        return Some(with_sentence(text, &format!("Add {} {kind}.", article(kind).to_lowercase())));
    }
    let anchor = &a.objects[rng.gen_range(0..a.objects.len())].display_name;
    Some(with_sentence(
        text,
        &format!(
            "{} {kind} is {} meters {} the {anchor}.",
            article(kind),
            distance(rng),
            DIRECTIONS.choose(rng)?
        ),
    ))
}

fn replace_object<R: Rng + ?Sized>(text: &str, a: &Analysis, library: &ObjectLibrary, rng: &mut R) -> Option<String> {
    let present: Vec<&str> = a.mentions.iter().map(|m| m.library_name.as_str()).collect();
    let old = *present.choose(rng)?;
    let fresh: Vec<&str> = library.names().filter(|n| !present.contains(n)).collect();
    let new = *fresh.choose(rng)?;
    let mut out = text.to_string();
    for m in a.mentions.iter().rev().filter(|m| m.library_name == old) {
        let word = if m.plural { format!("{new}s") } else { new.to_string() };
        out.replace_range(m.start..m.end, &word);
    }
    Some(out)
}

fn specify_location<R: Rng + ?Sized>(text: &str, a: &Analysis, rng: &mut R) -> Option<String> {
    let pins = a.layout.pinned_coords();
    let unpinned: Vec<&str> = a
        .objects
        .iter()
        .map(|o| o.display_name.as_str())
        .filter(|n| !pins.contains_key(*n))
        .collect();
    let loose: Vec<&str> = unpinned.iter().copied().filter(|n| !in_layout(a, n)).collect();
    let name = *if loose.is_empty() { &unpinned } else { &loose }.choose(rng)?;
    let x = rng.gen_range(-49..=49) * 100;
    let y = rng.gen_range(-49..=49) * 100;
    Some(with_sentence(text, &format!("The {name} is at [{x}, {y}, 0].")))
}

fn specify_relation<R: Rng + ?Sized>(text: &str, a: &Analysis, rng: &mut R) -> Option<String> {
    let pins = a.layout.pinned_coords();
    let names: Vec<&str> = a.objects.iter().map(|o| o.display_name.as_str()).collect();
    let mut pairs = Vec::new();
    for (i, x) in names.iter().enumerate() {
        for y in &names[i + 1..] {
            if !related(a, x, y) && !(pins.contains_key(*x) && pins.contains_key(*y)) {
                pairs.push((*x, *y));
            }
        }
    }
    let &(x, y) = pairs.choose(rng)?;
    let (s, o) = if rng.gen_bool(0.5) { (x, y) } else { (y, x) };
    Some(with_sentence(
        text,
        &format!("The {s} is {} meters {} the {o}.", distance(rng), DIRECTIONS.choose(rng)?),
    ))
}

const NUMBER_WORDS: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

fn modify_quantity<R: Rng + ?Sized>(text: &str, a: &Analysis, rng: &mut R) -> Option<String> {
    let counted: Vec<_> = a
        .mentions
        .iter()
        .filter(|m| {
            let lead = text[m.lead_start..m.start].trim().to_ascii_lowercase();
            matches!(lead.as_str(), "a" | "an" | "another")
                || NUMBER_WORDS.contains(&lead.as_str())
                || (!lead.is_empty() && lead.bytes().all(|b| b.is_ascii_digit()))
        })
        .collect();
    let loose: Vec<_> = counted
        .iter()
        .copied()
        .filter(|m| m.instances.iter().all(|i| !in_layout(a, &a.objects[*i].display_name)))
        .collect();
    let m = *if loose.is_empty() { &counted } else { &loose }.choose(rng)?;
    let current = m.instances.len();
    let choices: Vec<usize> = (3..=10).filter(|n| *n != current).collect();
    let n = *choices.choose(rng)?;
    let phrase = &text[m.start..m.end];
    let plural = if m.plural { phrase.to_string() } else { format!("{phrase}s") };
    let mut out = text.to_string();
    out.replace_range(m.lead_start..m.end, &format!("{n} {plural}"));
    Some(out)
}

fn coord_phrase_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r"(?i)\s*,?\s*(?:(?:is|are|positioned|placed|located|situated)\s+)?(?:at|on)\s+(?:the\s+)?(?:(?:coordinates?|position|location|point)\s+)?\[[^\]]*\]")
            .expect("valid regex")
    })
}

fn distance_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r"(?i)\b\d+(?:\.\d+)?\s*(?:meters?|metres?|millimeters?|millimetres?|mm|m)\s+(to the|in front|behind|back|forward|left|right|away)")
            .expect("valid regex")
    })
}

fn make_fuzzy<R: Rng + ?Sized>(text: &str, rng: &mut R) -> Option<String> {
    let mut edits: Vec<(usize, usize, String)> = coord_phrase_re()
        .find_iter(text)
        .map(|m| (m.start(), m.end(), String::new()))
        .collect();
    edits.extend(
        distance_re()
            .captures_iter(text)
            .map(|c| {
                let m = c.get(0).expect("match");
                (m.start(), m.end(), c[1].to_string())
            }),
    );
    let (s, e, with) = edits.choose(rng)?.clone();
    let mut out = text.to_string();
    out.replace_range(s..e, &with);
    Some(out.split_whitespace().collect::<Vec<_>>().join(" ").replace(" ,", ",").replace(" .", "."))
}

/// Filler swaps that leave the grammar's reading unchanged.
const SWAPS: [(&str, &str); 12] = [
    ("Position", "Place"),
    ("Place", "Put"),
    ("Put", "Position"),
    ("Give me", "Create"),
    ("Create", "Give me"),
    ("positioned", "placed"),
    ("placed", "located"),
    ("located", "positioned"),
    ("Set up", "Create"),
    ("There is", "Add"),
    ("with", "plus"),
    ("One", "A"),
];

const LOWERCASE_STARTS: [&str; 12] = [
    "A", "An", "The", "Two", "Three", "Place", "Put", "Position", "Give", "Create", "Set", "Add",
];

fn rephrase<R: Rng + ?Sized>(text: &str, a: &Analysis, library: &ObjectLibrary, rng: &mut R) -> Option<String> {
    let mut candidates: Vec<String> = Vec::new();
    for (from, to) in SWAPS {
        let re = Regex::new(&format!(r"\b{}\b", regex::escape(from))).expect("swap regex");
        if let Some(m) = re.find(text) {
            let mut out = text.to_string();
            out.replace_range(m.start()..m.end(), to);
            candidates.push(out);
        }
    }
    let first = text.split_whitespace().next().unwrap_or("");
    let body = if LOWERCASE_STARTS.contains(&first) {
        let mut c = text.chars();
        let head = c.next().map(|h| h.to_ascii_lowercase()).into_iter().collect::<String>();
        head + c.as_str()
    } else {
        text.to_string()
    };
    candidates.push(format!("In this workstation, {body}"));
    candidates.shuffle(rng);
    candidates.into_iter().find(|c| {
        let b = analyze(c, library);
        b.layout == a.layout && b.library_names == a.library_names && b.complete == a.complete
    })
}

/// Deterministic stand-in for a model rewrite. `None` when the method has
/// nothing to work on in this description.
pub fn rule_rewrite<R: Rng + ?Sized>(
    text: &str,
    method: RewriteMethod,
    library: &ObjectLibrary,
    rng: &mut R,
) -> Option<String> {
    let a = analyze(text, library);
    let out = match method {
        RewriteMethod::ObjectAddition => {
            if rng.gen_bool(0.5) {
                replace_object(text, &a, library, rng).or_else(|| add_object(text, &a, library, rng))
            } else {
                add_object(text, &a, library, rng)
            }
        }
        RewriteMethod::LocationSpecification => specify_location(text, &a, rng),
        RewriteMethod::RelationSpecification => specify_relation(text, &a, rng),
        RewriteMethod::QuantityModification => modify_quantity(text, &a, rng),
        RewriteMethod::FuzzyExpression => make_fuzzy(text, rng),
        RewriteMethod::Rephrasing => rephrase(text, &a, library, rng),
    }?;
    (out.trim() != text.trim()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_relation, RelationAst};
    use crate::examples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lib() -> ObjectLibrary {
        ObjectLibrary::default()
    }

    #[test]
    fn quantity_on_a_table() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = rule_rewrite("Place a table.", RewriteMethod::QuantityModification, &lib(), &mut rng).unwrap();
            let n: usize = out
                .trim_start_matches("Place ")
                .split(' ')
                .next()
                .unwrap()
                .parse()
                .unwrap();
            assert!((3..=10).contains(&n), "{out}");
            assert!(out.ends_with(&format!("{n} tables.")), "{out}");
            assert_eq!(analyze(&out, &lib()).library_names.len(), n);
        }
    }

    #[test]
    fn rephrasing_keeps_the_layout() {
        for (seed, text) in [examples::WORKED_DESCRIPTION, "Position a Kuka robot in front of a table."]
            .iter()
            .enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let out = rule_rewrite(text, RewriteMethod::Rephrasing, &lib(), &mut rng).unwrap();
            assert_ne!(&out, text);
            assert_eq!(analyze(&out, &lib()).layout, analyze(text, &lib()).layout);
        }
    }

    #[test]
    fn relation_distance_in_open_range() {
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let text = "Give me two conveyors and a cabinet.";
            let out = rule_rewrite(text, RewriteMethod::RelationSpecification, &lib(), &mut rng).unwrap();
            let a = analyze(&out, &lib());
            assert_eq!(a.layout.relations.len(), 1, "{out}");
            let ast = parse_relation(&a.layout.relations[0].relation_text);
            let RelationAst::Offset(o) = ast else { panic!("{out}") };
            let (dx, dy) = o.exact().unwrap();
            let d = dx.abs().max(dy.abs());
            assert!(d > 1000 && d < 5000, "{out}");
        }
    }

    #[test]
    fn other_methods() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = rule_rewrite(examples::WORKED_DESCRIPTION, RewriteMethod::FuzzyExpression, &lib(), &mut rng).unwrap();
        assert_ne!(out, examples::WORKED_DESCRIPTION);
        let out = rule_rewrite("Put a cabinet.", RewriteMethod::LocationSpecification, &lib(), &mut rng).unwrap();
        let pins = analyze(&out, &lib()).layout.pinned_coords();
        let c = pins["Cabinet"];
        assert!(c.x > -5000 && c.x < 5000 && c.y > -5000 && c.y < 5000);
        let out = rule_rewrite("Put a cabinet.", RewriteMethod::ObjectAddition, &lib(), &mut rng).unwrap();
        assert_eq!(analyze(&out, &lib()).library_names.len(), if out.contains("cabinet") { 2 } else { 1 }, "{out}");
        assert!(rule_rewrite("Put a cabinet.", RewriteMethod::FuzzyExpression, &lib(), &mut rng).is_none());
    }
}
