//! pass@k over description suites, judged by the deterministic grammar.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::analysis::analyze;
use crate::engine::verify;
use crate::error::BenchError;
use crate::llm::Gateway;
use crate::pipeline::{generate, GenerateOptions};
use crate::scene::{ObjectLibrary, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchCategory {
    GeometricArrangement,
    PositionalDetails,
    ObjectQuantity,
    CompositeDescription,
    FuzzyDescription,
}

impl BenchCategory {
    pub const ALL: [BenchCategory; 5] = [
        BenchCategory::GeometricArrangement,
        BenchCategory::PositionalDetails,
        BenchCategory::ObjectQuantity,
        BenchCategory::CompositeDescription,
        BenchCategory::FuzzyDescription,
    ];

    pub fn short(self) -> &'static str {
        match self {
            BenchCategory::GeometricArrangement => "Geo.",
            BenchCategory::PositionalDetails => "Pos.",
            BenchCategory::ObjectQuantity => "Quant.",
            BenchCategory::CompositeDescription => "Comp.",
            BenchCategory::FuzzyDescription => "Fuzz.",
        }
    }
}

fn id_text<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s,
        v => v.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    #[serde(deserialize_with = "id_text")]
    pub id: String,
    pub description: String,
    pub category: BenchCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub verdict: Verdict,
    pub reason: String,
}

impl Judgment {
    fn new(verdict: Verdict, reason: impl Into<String>) -> Self {
        Self {
            verdict,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub case_id: String,
    pub category: BenchCategory,
    pub n: u64,
    pub c: u64,
    pub unknown: u64,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    pub judgments: Vec<Judgment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub cases: usize,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    /// Share of samples judged unknown.
    pub unknown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub backend: String,
    pub seed: u64,
    pub samples: u64,
    pub k: u64,
    pub cases: Vec<BenchResult>,
    pub categories: BTreeMap<BenchCategory, CategoryScore>,
    pub overall: CategoryScore,
    pub note: String,
}

const NOTE: &str = "Automatic judge: a sample passes when the deterministic grammar reads the \
description completely, the scene has the described objects and verification finds no violation. \
Samples outside the grammar are unknown and never count as passes. Scores are not comparable to \
human-judged results.";

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, BenchError> {
    if c > n || k == 0 || k > n {
        return Err(BenchError::Bounds { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k/i)
    let ratio: f64 = (n - c + 1..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - ratio)
}

/// Judge a scene against the case description.
pub fn auto_judge(scene: &Scene, case: &BenchCase, library: &ObjectLibrary) -> Judgment {
    let a = analyze(&case.description, library);
    if !a.complete || a.objects.is_empty() {
        let why = if a.notes.is_empty() { "no objects named".to_string() } else { a.notes.join("; ") };
        return Judgment::new(Verdict::Unknown, format!("outside the grammar: {why}"));
    }
    let mut want: Vec<&str> = a.library_names.iter().map(String::as_str).collect();
    let mut got: Vec<&str> = scene.objects.iter().map(|o| o.library_name.as_str()).collect();
    want.sort_unstable();
    got.sort_unstable();
    if want != got {
        return Judgment::new(Verdict::Fail, format!("objects {got:?}, expected {want:?}"));
    }
    let report = verify(scene, &a.layout_for(&scene.objects));
    if report.ok {
        Judgment::new(Verdict::Pass, "verified")
    } else {
        let details: Vec<&str> = report.violations.iter().map(|v| v.detail.as_str()).collect();
        Judgment::new(Verdict::Fail, details.join("; "))
    }
}

/// [`auto_judge`] on scene JSON; malformed input fails.
pub fn auto_judge_json(scene_json: &str, case: &BenchCase, library: &ObjectLibrary) -> Judgment {
    match crate::scene_json::parse(scene_json) {
        Ok(scene) => auto_judge(&scene, case, library),
        Err(e) => Judgment::new(Verdict::Fail, format!("malformed scene: {e}")),
    }
}

/// One case per JSONL line; blank lines are skipped.
pub fn read_suite(reader: impl BufRead) -> Result<Vec<BenchCase>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BenchError::SuiteFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::SuiteFormat {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub samples: u64,
    pub k: u64,
    pub seed: u64,
    pub generate: GenerateOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            samples: 5,
            k: 1,
            seed: 0,
            generate: GenerateOptions::default(),
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, sum) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n, if n == 0 { 0.0 } else { sum / n as f64 })
}

fn score<'a>(results: impl Iterator<Item = &'a BenchResult> + Clone) -> CategoryScore {
    let (cases, p1) = mean(results.clone().map(|r| r.pass_at_1));
    let (_, pk) = mean(results.clone().map(|r| r.pass_at_k));
    let (_, unk) = mean(results.map(|r| r.unknown as f64 / r.n.max(1) as f64));
    CategoryScore {
        cases,
        pass_at_1: p1,
        pass_at_k: pk,
        unknown: unk,
    }
}

/// Aggregate per-case results into category and overall scores.
pub fn aggregate(backend: &str, opts: &BenchOptions, cases: Vec<BenchResult>) -> SuiteReport {
    let categories = BenchCategory::ALL
        .into_iter()
        .filter(|c| cases.iter().any(|r| r.category == *c))
        .map(|c| (c, score(cases.iter().filter(move |r| r.category == c))))
        .collect();
    SuiteReport {
        backend: backend.to_string(),
        seed: opts.seed,
        samples: opts.samples,
        k: opts.k,
        overall: score(cases.iter()),
        categories,
        cases,
        note: NOTE.to_string(),
    }
}

/// Run every case `samples` times through the pipeline and judge each
/// sample. Pipeline failures are failed samples.
pub fn run_suite(
    suite: &[BenchCase],
    library: &ObjectLibrary,
    gateway: &Gateway,
    opts: &BenchOptions,
) -> Result<SuiteReport, BenchError> {
    if suite.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let n = opts.samples.max(1);
    pass_at_k(n, 0, opts.k)?;
    let jobs: Vec<(usize, u64)> = (0..suite.len()).flat_map(|i| (0..n).map(move |s| (i, s))).collect();
    let judged: Vec<(usize, Judgment)> = jobs
        .par_iter()
        .map(|&(i, _)| {
            let case = &suite[i];
            let j = match generate(&case.description, library, gateway, &opts.generate) {
                Ok(out) => auto_judge(&out.scene, case, library),
                Err(e) => Judgment::new(Verdict::Fail, format!("pipeline error: {e}")),
            };
            (i, j)
        })
        .collect();
    let mut results = Vec::with_capacity(suite.len());
    for (i, case) in suite.iter().enumerate() {
        let judgments: Vec<Judgment> = judged.iter().filter(|(j, _)| *j == i).map(|(_, j)| j.clone()).collect();
        let c = judgments.iter().filter(|j| j.verdict == Verdict::Pass).count() as u64;
        let unknown = judgments.iter().filter(|j| j.verdict == Verdict::Unknown).count() as u64;
        results.push(BenchResult {
            case_id: case.id.clone(),
            category: case.category,
            n,
            c,
            unknown,
            pass_at_1: pass_at_k(n, c, 1)?,
            pass_at_k: pass_at_k(n, c, opts.k)?,
            judgments,
        });
    }
    Ok(aggregate(&gateway.backend_id(), opts, results))
}

impl SuiteReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row in the shape of the usual results table: per-category
    /// pass@1 in percent, overall, and the unknown share.
    pub fn to_table(&self) -> String {
        let mut head = vec!["Backend".to_string()];
        let mut row = vec![self.backend.clone()];
        for c in BenchCategory::ALL {
            head.push(c.short().to_string());
            row.push(match self.categories.get(&c) {
                Some(s) => format!("{:.1}", s.pass_at_1 * 100.0),
                None => "-".to_string(),
            });
        }
        head.push("Overall".into());
        row.push(format!("{:.1}", self.overall.pass_at_1 * 100.0));
        head.push("Unknown".into());
        row.push(format!("{:.1}", self.overall.unknown * 100.0));
        let widths: Vec<usize> = head.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let mut s = String::new();
        let _ = writeln!(s, "{}", line(&head));
        let _ = writeln!(s, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
        let _ = writeln!(s, "{}", line(&row));
        let _ = writeln!(
            s,
            "pass@1 in percent, n={} samples per case, {} cases; unknown = samples outside the grammar.",
            self.samples,
            self.cases.len()
        );
        s
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}
