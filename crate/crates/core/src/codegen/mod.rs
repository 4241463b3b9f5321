//! Scene-construction code: deterministic C# emission, keyword validation,
//! model-driven generation with feedback, and SVG previews.

mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::CodegenError;
use crate::llm::format::{objects_json, placements_json};
use crate::llm::{Gateway, Message, PromptRequest, TemplateId};
use crate::scene::{LibraryEntry, ObjectLibrary, Scene};

pub use svg::{emit_svg, DEFAULT_SCALE};

/// Keywords every generated program must use.
pub const DEFAULT_KEYWORDS: [&str; 6] = [
    "TxApplication.SystemRootDirectory",
    "TxInsertComponentCreationData",
    "InsertComponent",
    "TxTransformation",
    "AbsoluteLocation",
    "RefreshDisplay",
];

/// Keywords of the fixed skeleton; the rest only appear with insertions.
const SKELETON_KEYWORDS: [&str; 2] = ["TxApplication.SystemRootDirectory", "RefreshDisplay"];

/// Feedback rounds after the first model-written program.
pub const CODE_FEEDBACK_ROUNDS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodegenMode {
    Deterministic,
    Llm,
}

impl std::str::FromStr for CodegenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(CodegenMode::Deterministic),
            "llm" => Ok(CodegenMode::Llm),
            _ => Err(format!("unknown codegen mode {s:?} (deterministic or llm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeReport {
    pub ok: bool,
    pub missing_keywords: Vec<String>,
    pub forbidden_constructs: Vec<String>,
    pub per_object_coverage: BTreeMap<String, bool>,
}

impl CodeReport {
    /// Problems as feedback lines for the model.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for k in &self.missing_keywords {
            out.push(format!("The code does not use `{k}`."));
        }
        for c in &self.forbidden_constructs {
            out.push(format!("The code defines `{c}`; write the function body directly without custom classes or functions."));
        }
        for (name, covered) in &self.per_object_coverage {
            if !covered {
                out.push(format!("The code does not place {name} at its given position."));
            }
        }
        out
    }
}

impl fmt::Display for CodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        f.write_str(&self.problems().join(" "))
    }
}

/// `"Kuka Robot KR125"` -> `"kuka_robot_kr125"`.
pub fn snake_case(name: &str) -> String {
    let mut out = String::new();
    let mut prev = ' ';
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            if c.is_ascii_uppercase() && prev.is_ascii_lowercase() {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
        prev = c;
    }
    out.trim_end_matches('_').to_string()
}

fn list_name(entry: &LibraryEntry) -> String {
    format!("{}Models", snake_case(&entry.name))
}

fn model_file(entry: &LibraryEntry) -> &str {
    entry.model_path.rsplit('/').next().unwrap_or(&entry.model_path)
}

fn used_entries<'a>(scene: &Scene, library: &'a ObjectLibrary) -> Vec<&'a LibraryEntry> {
    library
        .entries()
        .iter()
        .filter(|e| scene.objects.iter().any(|o| o.library_name == e.name))
        .collect()
}

/// How to load each model kind the scene needs; bound into the code prompt.
pub fn loading_guidance(scene: &Scene, library: &ObjectLibrary) -> String {
    let mut lines = Vec::new();
    for e in used_entries(scene, library) {
        lines.push(format!(
            "- {}: the model directory is named \"{}\". Add it with `if (directoryInfo.Name == \"{}\") {{ {}.Add(directoryInfo); }}`.",
            e.name,
            model_file(e),
            model_file(e),
            list_name(e)
        ));
    }
    if lines.is_empty() {
        lines.push("- No models are needed.".into());
    }
    lines.join("\n")
}

/// Fill the code skeleton mechanically, one insertion block per object.
pub fn emit_csharp(scene: &Scene, library: &ObjectLibrary) -> String {
    let entries = used_entries(scene, library);
    let mut lists = String::new();
    let mut loads = String::new();
    for e in &entries {
        lists.push_str(&format!("List<DirectoryInfo> {} = new List<DirectoryInfo>();\n", list_name(e)));
        loads.push_str(&format!(
            "    if (directoryInfo.Name == \"{}\")\n    {{\n        {}.Add(directoryInfo);\n    }}\n",
            model_file(e),
            list_name(e)
        ));
    }
    let mut adds = String::new();
    for (k, (o, p)) in scene.placed().enumerate() {
        let i = k + 1;
        let list = library
            .get(&o.library_name)
            .map(list_name)
            .unwrap_or_else(|| format!("{}Models", snake_case(&o.library_name)));
        let rad = p.dir.degrees().to_radians();
        adds.push_str(&format!(
            "// {name}\n\
             DirectoryInfo objModel{i} = {list}[rand.Next(0, {list}.Count)];\n\
             string obj{i}Name = Path.GetFileNameWithoutExtension(objModel{i}.Name) + \"_\" + DateTime.Now.ToString(\"yyyy-MM-dd-HH-mm-ss\");\n\
             TxInsertComponentCreationData txInsertDataObj{i} = new TxInsertComponentCreationData(obj{i}Name, objModel{i}.FullName);\n\
             ITxComponent txComponentObject{i} = txPhysicalRoot.InsertComponent(txInsertDataObj{i});\n\
             \n\
             double transXValue{i} = {x};\n\
             double transYValue{i} = {y};\n\
             double rotValue{i} = {rad};\n\
             TxTransformation txTransTransXYRotZ{i} = new TxTransformation(new TxVector(transXValue{i}, transYValue{i}, 0.0), new TxVector(0.0, 0.0, rotValue{i}), TxTransformation.TxRotationType.RPY_ZYX);\n\
             ITxLocatableObject obj{i} = (ITxLocatableObject)txComponentObject{i};\n\
             obj{i}.AbsoluteLocation *= txTransTransXYRotZ{i};\n\n",
            name = o.display_name,
            x = p.coord.x,
            y = p.coord.y,
        ));
    }
    format!(
        "string rootDir = TxApplication.SystemRootDirectory;\n\
         string weldingLibPath = Path.Combine(rootDir, \"Welding\");\n\
         string[] weldingModels = Directory.GetDirectories(weldingLibPath, \"*.cojt\", SearchOption.TopDirectoryOnly);\n\
         \n\
         {lists}\n\
         foreach (string model in weldingModels)\n\
         {{\n\
         \x20   DirectoryInfo directoryInfo = new DirectoryInfo(model);\n\
         \n\
         {loads}}}\n\
         \n\
         Random rand = new Random();\n\
         TxPhysicalRoot txPhysicalRoot = TxApplication.ActiveDocument.PhysicalRoot;\n\
         \n\
         {adds}TxApplication.RefreshDisplay();\n"
    )
}

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static R: OnceLock<Regex> = OnceLock::new();
            R.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(comment_re, r"(?s)//[^\n]*|/\*.*?\*/");
re!(type_def_re, r"\b(?:class|struct|interface|enum|record)\s+([A-Za-z_]\w*)");
re!(
    method_def_re,
    r"(?m)^[ \t]*(?:(?:public|private|protected|internal|static|async|override|virtual|unsafe|extern)\s+)*([A-Za-z_][\w<>\[\],.]*)\s+([A-Za-z_]\w*)\s*\([^;{}()]*\)\s*\{"
);
re!(assign_re, r"\b(?:double|float|var|int|decimal)\s+([A-Za-z_]\w*)\s*=\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*[dfmDFM]?\s*;");
re!(
    transform_re,
    r"new\s+TxTransformation\s*\(\s*new\s+TxVector\s*\(\s*([^,()]+?)\s*,\s*([^,()]+?)\s*,"
);

const CONTROL_WORDS: [&str; 10] = ["if", "for", "foreach", "while", "switch", "catch", "using", "lock", "fixed", "return"];

fn value_of(arg: &str, vars: &BTreeMap<String, f64>) -> Option<f64> {
    let a = arg.trim().trim_end_matches(['d', 'D', 'f', 'F']);
    a.parse::<f64>().ok().or_else(|| vars.get(arg.trim()).copied())
}

/// Scan generated code for the required API keywords, custom type or
/// function definitions, and one placement per object.
pub fn validate_code_with(code: &str, scene: &Scene, keywords: &[&str]) -> CodeReport {
    let body = comment_re().replace_all(code, "");
    let missing_keywords: Vec<String> = keywords
        .iter()
        .filter(|k| !scene.objects.is_empty() || SKELETON_KEYWORDS.contains(k))
        .filter(|k| {
            let re = Regex::new(&format!(r"\b{}\b", regex::escape(k))).expect("keyword regex");
            !re.is_match(&body)
        })
        .map(|k| k.to_string())
        .collect();
    let mut forbidden_constructs: Vec<String> =
        type_def_re().captures_iter(&body).map(|c| c[0].to_string()).collect();
    for c in method_def_re().captures_iter(&body) {
        let (ty, name) = (&c[1], &c[2]);
        if CONTROL_WORDS.contains(&name) || ["else", "new", "return"].contains(&ty) {
            continue;
        }
        forbidden_constructs.push(format!("{ty} {name}(...)"));
    }

    let vars: BTreeMap<String, f64> = assign_re()
        .captures_iter(&body)
        .filter_map(|c| Some((c[1].to_string(), c[2].parse::<f64>().ok()?)))
        .collect();
    let mut translations: Vec<(f64, f64)> = transform_re()
        .captures_iter(&body)
        .filter_map(|c| Some((value_of(&c[1], &vars)?, value_of(&c[2], &vars)?)))
        .collect();
    let mut per_object_coverage = BTreeMap::new();
    for (o, p) in scene.placed() {
        let hit = translations
            .iter()
            .position(|(x, y)| (x - p.coord.x as f64).abs() < 0.5 && (y - p.coord.y as f64).abs() < 0.5);
        if let Some(i) = hit {
            translations.swap_remove(i);
        }
        per_object_coverage.insert(o.display_name.clone(), hit.is_some());
    }
    let ok = missing_keywords.is_empty()
        && forbidden_constructs.is_empty()
        && per_object_coverage.values().all(|v| *v);
    CodeReport {
        ok,
        missing_keywords,
        forbidden_constructs,
        per_object_coverage,
    }
}

pub fn validate_code(code: &str, scene: &Scene) -> CodeReport {
    validate_code_with(code, scene, &DEFAULT_KEYWORDS)
}

/// Code for `scene`, either filled in mechanically or written by the model
/// and validated, with up to [`CODE_FEEDBACK_ROUNDS`] corrections.
pub fn generate_code(
    scene: &Scene,
    library: &ObjectLibrary,
    mode: CodegenMode,
    gateway: Option<&Gateway>,
    temperature: f64,
) -> Result<(String, CodeReport), CodegenError> {
    let gateway = match (mode, gateway) {
        (CodegenMode::Deterministic, _) | (CodegenMode::Llm, None) => {
            let code = emit_csharp(scene, library);
            let report = validate_code(&code, scene);
            return Ok((code, report));
        }
        (CodegenMode::Llm, Some(g)) => g,
    };
    let names: Vec<&str> = scene.objects.iter().map(|o| o.display_name.as_str()).collect();
    let req = PromptRequest::new(TemplateId::CodeGeneration)
        .bind("prompt", scene.source_description.clone())
        .bind("objects", objects_json(&names))
        .bind("placements", placements_json(scene))
        .bind("guidance for loading object models", loading_guidance(scene, library));
    let req = PromptRequest { temperature, ..req };
    let (mut messages, mut out) = gateway.ask(&req)?;
    let mut rounds = 0;
    loop {
        let code = out.payload("Code").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        let report = validate_code(&code, scene);
        if report.ok {
            return Ok((code, report));
        }
        if rounds == CODE_FEEDBACK_ROUNDS {
            return Err(CodegenError::Invalid {
                rounds,
                report: Box::new(report),
            });
        }
        rounds += 1;
        messages.push(Message::user(format!(
            "The code has the following problems:\n{}\nPlease write the complete code again, fixing the problems. Only generate the code.",
            report.problems().join("\n")
        )));
        out = gateway.converse(TemplateId::CodeGeneration, &mut messages, temperature, req.max_retries)?;
    }
}
