//! Parsers for the staged answer formats.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::template::TemplateId;
use crate::dsl::parse_orientation;
use crate::error::ParseError;
use crate::facts::{Location, Orientation, PositionRecord, RelationRecord};
use crate::scene::Coordinate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    /// `"Step 2: Calculate Coordinates"`, or `"Error"` etc. for flat answers.
    pub header: String,
    pub analysis: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuredOutput {
    pub sections: Vec<Section>,
}

impl StructuredOutput {
    /// Section whose header starts with `prefix` (e.g. `"Step 2"`).
    pub fn section(&self, prefix: &str) -> Option<&Section> {
        self.sections.iter().find(|s| {
            s.header == prefix || s.header.starts_with(&format!("{prefix}:"))
        })
    }

    pub fn payload(&self, prefix: &str) -> Option<&Value> {
        self.section(prefix).map(|s| &s.payload)
    }
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(step_re, r"(?m)^[ \t>*]*#+\s*Step\s*(\d+)\s*:\s*([^#\n]*?)\s*#*[ \t*]*$");
re!(fence_re, r"(?m)^[ \t]*```[A-Za-z]*[ \t]*$\n?");
re!(flat_re, r"(?m)^[ \t*]*(Relations|Analysis|Error)\s*\**\s*:");
re!(code_block_re, r"(?s)```[A-Za-z#]*[ \t]*\n(.*?)```");
re!(coord_re, r"\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*(?:,\s*(-?\d+(?:\.\d+)?)\s*)?\]");

/// First JSON value in `text` that starts at a `[` or `{`.
fn first_json(text: &str) -> Result<Value, String> {
    let mut last_err = "no JSON value".to_string();
    for (i, ch) in text.char_indices() {
        if ch != '[' && ch != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(v)) => return Ok(v),
            Some(Err(e)) => {
                last_err = e.to_string();
                // only the first opening bracket is the payload
                return Err(last_err);
            }
            None => {}
        }
    }
    Err(last_err)
}

fn label_re(label: &str) -> Regex {
    Regex::new(&format!(r"(?m)^[ \t*]*{}\s*\**\s*:", regex::escape(label))).expect("valid label regex")
}

fn parse_steps(text: &str, template: TemplateId) -> Result<StructuredOutput, ParseError> {
    let clean = fence_re().replace_all(text, "");
    let heads: Vec<_> = step_re().captures_iter(&clean).collect();
    let mut sections = Vec::new();
    for (step, label) in template.skeleton() {
        let n = step.trim_start_matches("Step ");
        let Some(pos) = heads.iter().position(|c| &c[1] == n) else {
            return Err(ParseError::new(*step, "missing section"));
        };
        let c = &heads[pos];
        let whole = c.get(0).expect("match");
        let end = heads.get(pos + 1).map_or(clean.len(), |h| h.get(0).expect("match").start());
        let body = &clean[whole.end()..end];
        let Some(lm) = label_re(label).find(body) else {
            return Err(ParseError::new(*step, format!("missing {label:?}")));
        };
        let analysis = match body.find("Analysis:") {
            Some(a) if a < lm.start() => body[a + "Analysis:".len()..lm.start()].trim().to_string(),
            _ => String::new(),
        };
        let rest = &body[lm.end()..];
        let payload = if *label == "New Description" {
            let line = rest.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
            if line.is_empty() {
                return Err(ParseError::new(*step, "empty description"));
            }
            Value::String(line.to_string())
        } else {
            first_json(rest).map_err(|e| ParseError::new(*step, format!("{label}: {e}")))?
        };
        sections.push(Section {
            header: format!("{step}: {}", c[2].trim()),
            analysis,
            payload,
        });
    }
    Ok(StructuredOutput { sections })
}

fn yes_no(v: &str) -> Option<bool> {
    let w = v.trim().trim_matches(|c: char| c == '"' || c == '*' || c == '<' || c == '>' || c.is_whitespace());
    let word: String = w.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match word.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

fn parse_flat(text: &str) -> Result<StructuredOutput, ParseError> {
    let clean = fence_re().replace_all(text, "");
    let marks: Vec<_> = flat_re().captures_iter(&clean).collect();
    let mut sections = Vec::new();
    for (i, c) in marks.iter().enumerate() {
        let m = c.get(0).expect("match");
        let end = marks.get(i + 1).map_or(clean.len(), |n| n.get(0).expect("match").start());
        let body = clean[m.end()..end].trim().to_string();
        let header = c[1].to_string();
        if sections.iter().any(|s: &Section| s.header == header) {
            continue;
        }
        let payload = if header == "Error" {
            match yes_no(&body) {
                Some(b) => Value::Bool(b),
                None => return Err(ParseError::new("Error", format!("expected Yes or No, got {body:?}"))),
            }
        } else {
            Value::String(body.clone())
        };
        sections.push(Section {
            header,
            analysis: if c[1].eq_ignore_ascii_case("Analysis") { body } else { String::new() },
            payload,
        });
    }
    if !sections.iter().any(|s| s.header == "Error") {
        return Err(ParseError::new("Error", "missing section"));
    }
    Ok(StructuredOutput { sections })
}

fn parse_code(text: &str) -> Result<StructuredOutput, ParseError> {
    let code = match code_block_re().captures(text) {
        Some(c) => c[1].to_string(),
        None => text.trim().to_string(),
    };
    if code.trim().is_empty() {
        return Err(ParseError::new("Code", "empty answer"));
    }
    Ok(StructuredOutput {
        sections: vec![Section {
            header: "Code".into(),
            analysis: String::new(),
            payload: Value::String(code),
        }],
    })
}

/// Split a model answer into the sections its template declares. Code
/// fences and prose around the answer are ignored.
pub fn parse_structured(text: &str, template: TemplateId) -> Result<StructuredOutput, ParseError> {
    match template {
        TemplateId::PlacementVerification | TemplateId::DescriptionValidation => parse_flat(text),
        TemplateId::CodeGeneration => parse_code(text),
        _ => parse_steps(text, template),
    }
}

/// `"[1500, 2500, 0]"`, `"at [1500, 2500, 0]"` or a native array.
pub fn coordinate_from_value(v: &Value) -> Option<Coordinate> {
    match v {
        Value::String(s) => coordinate_in_text(s),
        Value::Array(a) if a.len() == 2 || a.len() == 3 => {
            let x = a[0].as_f64()?;
            let y = a[1].as_f64()?;
            Coordinate::from_mm(x, y).ok()
        }
        _ => None,
    }
}

pub fn coordinate_in_text(s: &str) -> Option<Coordinate> {
    let c = coord_re().captures(s)?;
    let x: f64 = c[1].parse().ok()?;
    let y: f64 = c[2].parse().ok()?;
    Coordinate::from_mm(x, y).ok()
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Objects list payload: `["ObjA", "ObjB 1"]`.
pub fn names_from_json(v: &Value, section: &str) -> Result<Vec<String>, ParseError> {
    let arr = v.as_array().ok_or_else(|| ParseError::new(section, "expected a list of names"))?;
    arr.iter()
        .map(|e| {
            e.as_str()
                .map(|s| s.trim().to_string())
                .ok_or_else(|| ParseError::new(section, format!("expected a name, got {e}")))
        })
        .collect()
}

/// Positions payload: objects with `name`, `position`, `orientation`.
pub fn positions_from_json(v: &Value, section: &str) -> Result<Vec<PositionRecord>, ParseError> {
    let arr = v.as_array().ok_or_else(|| ParseError::new(section, "expected a list of positions"))?;
    let mut out = Vec::new();
    for e in arr {
        let name = e
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| ParseError::new(section, format!("position without a name: {e}")))?
            .trim()
            .to_string();
        let location = match e.get("position") {
            None | Some(Value::Null) => None,
            Some(p) => match coordinate_from_value(p) {
                Some(c) => Some(Location::Coordinate(c)),
                None => text_of(p).filter(|t| !t.is_empty()).map(Location::Text),
            },
        };
        let direction = match e.get("orientation") {
            None | Some(Value::Null) => None,
            Some(o) => {
                let t = text_of(o).unwrap_or_default();
                if t.is_empty() {
                    None
                } else {
                    Some(match parse_orientation(&t) {
                        Some(d) => Orientation::Angle(d),
                        None => Orientation::Text(t),
                    })
                }
            }
        };
        out.push(PositionRecord {
            name,
            location,
            direction,
        });
    }
    Ok(out)
}

/// Relations payload: objects with `object 1`, `relation`, `object 2`.
pub fn relations_from_json(v: &Value, section: &str) -> Result<Vec<RelationRecord>, ParseError> {
    let arr = v.as_array().ok_or_else(|| ParseError::new(section, "expected a list of relations"))?;
    arr.iter()
        .map(|e| {
            let field = |k: &str| {
                e.get(k)
                    .and_then(Value::as_str)
                    .map(|s| s.trim().to_string())
                    .ok_or_else(|| ParseError::new(section, format!("relation without {k:?}: {e}")))
            };
            Ok(RelationRecord {
                subject: field("object 1")?,
                relation_text: field("relation")?,
                object: field("object 2")?,
            })
        })
        .collect()
}
