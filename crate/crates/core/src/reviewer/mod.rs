//! Rule engine checking a notebook against a quality catalog and scoring it
//! per stakeholder persona.

pub mod catalog;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use catalog::{parse_weight, Catalog, Check, InvalidCatalog, Persona, Rule, Severity, Weight};

use crate::dataflow::lexer::{tokenize, TokenKind};
use crate::dataflow::{analyze_cell, classify_activity, ActivityCategory, CellAnalysis, DependencyGraph, PatternTable};
use crate::hash::ContentHash;
use crate::notebook::{canonical_hash, CellKind, Notebook};
use crate::text::split_identifier;

pub const REPORT_SCHEMA: &str = "review-report/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub title: String,
    pub severity: Severity,
    pub passed: bool,
    /// Offending cells; empty when passed or when the rule is notebook-wide.
    pub locations: Vec<String>,
    pub message: String,
}

/// Score in tenths of a point, 0..=1000.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u32);

impl Score {
    pub const FULL: Score = Score(1000);

    pub fn from_tenths(tenths: u32) -> Score {
        Score(tenths.min(1000))
    }

    pub fn tenths(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !(0.0..=100.0).contains(&v) {
            return Err(serde::de::Error::custom(format!("score {v} out of range")));
        }
        Ok(Score((v * 10.0).round() as u32))
    }
}

/// `100 × passed weight / total weight`, rounded half-up to one decimal.
pub fn persona_score(persona: &Persona, passed: impl Fn(&str) -> bool) -> Score {
    let total = persona.total_weight();
    let zero = Ratio::from_integer(0);
    if total == zero {
        return Score::FULL;
    }
    let got: Weight = persona.weights.iter().filter(|(id, _)| passed(id)).map(|(_, w)| *w).sum();
    let tenths = (got * 1000 / total + Ratio::new(1, 2)).floor().to_integer();
    Score::from_tenths(tenths.clamp(0, 1000) as u32)
}

pub fn persona_scores(personas: &[Persona], findings: &[Finding]) -> BTreeMap<String, Score> {
    let passed: BTreeSet<&str> = findings.iter().filter(|f| f.passed).map(|f| f.rule_id.as_str()).collect();
    personas
        .iter()
        .map(|p| (p.persona_id.clone(), persona_score(p, |id| passed.contains(id))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub notebook_hash: ContentHash,
    pub findings: Vec<Finding>,
    pub persona_scores: BTreeMap<String, Score>,
}

impl ReviewReport {
    /// Whether an error-severity rule failed.
    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| !f.passed && f.severity == Severity::Error)
    }

    pub fn passed_count(&self) -> usize {
        self.findings.iter().filter(|f| f.passed).count()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["schema"] = REPORT_SCHEMA.into();
        v
    }

    /// Keeps only the named persona's score.
    pub fn retain_persona(&mut self, persona_id: &str) {
        self.persona_scores.retain(|k, _| k == persona_id);
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let width = self.findings.iter().map(|f| f.rule_id.len()).max().unwrap_or(0);
        for f in &self.findings {
            let status = if f.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status}  {:<width$}  {:<7}  {}", f.rule_id, f.severity.as_str(), f.title);
            if !f.passed {
                let _ = writeln!(out, "      {}", f.message);
            }
        }
        let _ = writeln!(out, "\n{} of {} rules passed", self.passed_count(), self.findings.len());
        if !self.persona_scores.is_empty() {
            out.push_str("\npersona scores\n");
            let width = self.persona_scores.keys().map(String::len).max().unwrap_or(0);
            for (id, score) in &self.persona_scores {
                let _ = writeln!(out, "  {id:<width$}  {score:>5}");
            }
        }
        out
    }
}

struct CodeCell<'a> {
    index: usize,
    cell_id: &'a str,
    source: &'a str,
    analysis: CellAnalysis,
    category: ActivityCategory,
}

pub fn run_review(nb: &Notebook, catalog: &Catalog, graph: &DependencyGraph) -> ReviewReport {
    run_review_with(nb, catalog, graph, PatternTable::shipped())
}

pub fn run_review_with(nb: &Notebook, catalog: &Catalog, graph: &DependencyGraph, table: &PatternTable) -> ReviewReport {
    let code: Vec<CodeCell> = nb
        .code_cells()
        .map(|(index, cell)| {
            let analysis = analyze_cell(&cell.source);
            let (category, _) = classify_activity(&analysis, table);
            CodeCell { index, cell_id: &cell.cell_id, source: &cell.source, analysis, category }
        })
        .collect();
    let findings: Vec<Finding> = catalog
        .rules
        .iter()
        .map(|rule| {
            let outcome = evaluate(&rule.check, nb, &code, graph);
            let passed = outcome.is_ok();
            let (locations, message) = outcome.err().unwrap_or_else(|| (Vec::new(), "ok".to_string()));
            Finding {
                rule_id: rule.rule_id.clone(),
                title: rule.title.clone(),
                severity: rule.severity,
                passed,
                locations,
                message,
            }
        })
        .collect();
    ReviewReport {
        notebook_hash: canonical_hash(nb),
        persona_scores: persona_scores(&catalog.personas, &findings),
        findings,
    }
}

type Outcome = Result<(), (Vec<String>, String)>;

fn fail_at(cells: Vec<String>, message: String) -> Outcome {
    Err((cells, message))
}

fn fail_cells(cells: Vec<String>, what: &str) -> Outcome {
    if cells.is_empty() {
        return Ok(());
    }
    let message = format!("{what}: {}", cells.join(", "));
    Err((cells, message))
}

/// Whitespace-separated tokens containing at least one letter or digit.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().filter(|w| w.chars().any(char::is_alphanumeric)).count()
}

fn evaluate(check: &Check, nb: &Notebook, code: &[CodeCell], graph: &DependencyGraph) -> Outcome {
    match check {
        Check::Description { min_words } => match nb.cells.first() {
            None => fail_at(Vec::new(), "notebook is empty".into()),
            Some(first) if first.kind != CellKind::Markdown => {
                fail_at(vec![first.cell_id.clone()], "first cell is not a markdown description".into())
            }
            Some(first) => {
                let words = word_count(&first.source);
                if words >= *min_words {
                    Ok(())
                } else {
                    fail_at(
                        vec![first.cell_id.clone()],
                        format!("description has {words} words, at least {min_words} expected"),
                    )
                }
            }
        },
        Check::ExecutionOrder => {
            let mut last: Option<u64> = None;
            let mut bad = Vec::new();
            for c in code {
                let Some(count) = nb.cells[c.index].execution_count else { continue };
                if last.is_some_and(|prev| count <= prev) {
                    bad.push(c.cell_id.to_string());
                }
                last = Some(last.map_or(count, |p| p.max(count)));
            }
            fail_cells(bad, "executed out of order")
        }
        Check::EmptyCells => {
            let bad = code.iter().filter(|c| c.source.trim().is_empty()).map(|c| c.cell_id.to_string()).collect();
            fail_cells(bad, "empty code cells")
        }
        Check::ImportsFirst => {
            let Some(first_model) = code.iter().find(|c| c.category == ActivityCategory::Modeling).map(|c| c.index)
            else {
                return Ok(());
            };
            let bad = code
                .iter()
                .filter(|c| c.index >= first_model && c.analysis.import_statements > 0)
                .map(|c| c.cell_id.to_string())
                .collect();
            fail_cells(bad, "imports at or after the first modeling cell")
        }
        Check::CellLength { max_lines } => {
            let bad = code
                .iter()
                .filter(|c| c.source.split('\n').count() > *max_lines)
                .map(|c| c.cell_id.to_string())
                .collect();
            fail_cells(bad, &format!("cells longer than {max_lines} lines"))
        }
        Check::Seeded { randomness, seed_patterns } => {
            let random: BTreeSet<&str> = randomness.iter().map(String::as_str).collect();
            let mut users = Vec::new();
            let mut seeded = false;
            for c in code {
                let (uses_random, sets_seed) = scan_randomness(c.source, &random, seed_patterns);
                if uses_random {
                    users.push(c.cell_id.to_string());
                }
                seeded |= sets_seed;
            }
            if users.is_empty() || seeded {
                Ok(())
            } else {
                let message = format!("randomness without a seed in: {}", users.join(", "));
                fail_at(users, message)
            }
        }
        Check::DeadVariables => {
            let mut bad = Vec::new();
            let mut names = Vec::new();
            for c in code {
                let dead: Vec<&str> = c
                    .analysis
                    .symbols
                    .defs
                    .iter()
                    .filter(|d| d.as_str() != "_")
                    .filter(|d| !c.analysis.reads_after_def.contains(*d) && !graph.is_consumed(c.index, d))
                    .map(String::as_str)
                    .collect();
                if !dead.is_empty() {
                    bad.push(c.cell_id.to_string());
                    names.push(format!("{} ({})", c.cell_id, dead.join(", ")));
                }
            }
            if bad.is_empty() {
                Ok(())
            } else {
                fail_at(bad, format!("defined but never used: {}", names.join("; ")))
            }
        }
        Check::Headings { cells_per_heading } => {
            let markdown = nb.cells.iter().filter(|c| c.kind == CellKind::Markdown).count();
            let needed = code.len().div_ceil(*cells_per_heading);
            if markdown >= needed {
                Ok(())
            } else {
                fail_at(
                    Vec::new(),
                    format!("{markdown} markdown cells for {} code cells, at least {needed} expected", code.len()),
                )
            }
        }
    }
}

/// Whether a cell mentions randomness and whether it sets a seed. A seed
/// pattern ending in `(` matches a call whose name ends with the stem; other
/// patterns match identifiers containing them.
fn scan_randomness(source: &str, randomness: &BTreeSet<&str>, seed_patterns: &[String]) -> (bool, bool) {
    let mut uses_random = false;
    let mut sets_seed = false;
    for line in tokenize(source) {
        let toks = &line.tokens;
        for (i, tok) in toks.iter().enumerate() {
            if tok.kind != TokenKind::Name {
                continue;
            }
            if split_identifier(tok.text).iter().any(|part| randomness.contains(part.as_str())) {
                uses_random = true;
            }
            let is_call = toks.get(i + 1).is_some_and(|t| t.is_op("("));
            sets_seed |= seed_patterns.iter().any(|p| match p.strip_suffix('(') {
                Some(stem) => is_call && tok.text.ends_with(stem),
                None => tok.text.contains(p.as_str()),
            });
        }
    }
    (uses_random, sets_seed)
}
