//! Prototype cards: a stakeholder-facing summary assembled from the activity
//! flow, the review report, trace links and manually supplied fields.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::dataflow::{analyze_cell, ActivityCategory, ActivityFlow};
use crate::hash::ContentHash;
use crate::knowledge::TraceLink;
use crate::notebook::{canonical_hash, CellKind, Notebook};
use crate::reviewer::{ReviewReport, Score};

pub const CARD_SCHEMA: &str = "card/1";
pub const PLACEHOLDER: &str = "«not provided»";
pub const UNTITLED: &str = "Untitled prototype";

const DATA_EXTENSIONS: [&str; 22] = [
    ".csv", ".tsv", ".json", ".jsonl", ".parquet", ".xlsx", ".xls", ".feather", ".pkl", ".pickle", ".h5", ".hdf5",
    ".npy", ".npz", ".txt", ".zip", ".gz", ".arrow", ".sqlite", ".db", ".avro", ".orc",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CardError {
    #[error("{what} was computed for notebook {found}, expected {expected}")]
    HashMismatch { what: &'static str, expected: ContentHash, found: ContentHash },
    #[error("unknown format {0:?}")]
    UnknownFormat(String),
    #[error("invalid card: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityCount {
    pub category: ActivityCategory,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrototypeCard {
    pub title: String,
    pub problem_description: String,
    pub data_sources: Vec<String>,
    /// Categories with at least one cell, in category order.
    pub activity_summary: Vec<ActivityCount>,
    pub review_score_by_persona: BTreeMap<String, Score>,
    pub knowledge_sources: Vec<String>,
    pub generated_at: String,
    pub notebook_hash: ContentHash,
    pub manual_fields: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CardFormat {
    Markdown,
    Json,
}

impl FromStr for CardFormat {
    type Err = CardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(CardFormat::Markdown),
            "json" => Ok(CardFormat::Json),
            other => Err(CardError::UnknownFormat(other.to_string())),
        }
    }
}

/// A quoted literal that looks like a file path or URL of a dataset.
pub fn is_data_source_literal(s: &str) -> bool {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return false;
    }
    let lower = s.to_ascii_lowercase();
    s.contains('/') || DATA_EXTENSIONS.iter().any(|ext| lower.ends_with(ext))
}

fn first_heading(nb: &Notebook) -> Option<String> {
    nb.cells.iter().filter(|c| c.kind == CellKind::Markdown).flat_map(|c| c.source.lines()).find_map(|line| {
        let t = line.trim_start();
        let level = t.chars().take_while(|&c| c == '#').count();
        (level > 0 && t[level..].starts_with(' ')).then(|| t[level..].trim().to_string()).filter(|s| !s.is_empty())
    })
}

pub fn generate_card(
    nb: &Notebook,
    flow: &ActivityFlow,
    report: &ReviewReport,
    links: &[TraceLink],
    manual: &BTreeMap<String, String>,
    generated_at: &str,
) -> Result<PrototypeCard, CardError> {
    let hash = canonical_hash(nb);
    if flow.notebook_hash != hash {
        return Err(CardError::HashMismatch { what: "activity flow", expected: hash, found: flow.notebook_hash.clone() });
    }
    if report.notebook_hash != hash {
        return Err(CardError::HashMismatch { what: "review report", expected: hash, found: report.notebook_hash.clone() });
    }

    let manual_value = |key: &str| manual.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::to_string);
    let title = manual_value("title").or_else(|| first_heading(nb)).unwrap_or_else(|| UNTITLED.to_string());

    let desc_passed = report.findings.iter().any(|f| f.rule_id == "R-DESC" && f.passed);
    let first_markdown = nb.cells.iter().find(|c| c.kind == CellKind::Markdown).map(|c| c.source.trim().to_string());
    let problem_description = desc_passed
        .then_some(first_markdown)
        .flatten()
        .or_else(|| manual_value("problem"))
        .unwrap_or_else(|| PLACEHOLDER.to_string());

    let mut data_sources: Vec<String> = Vec::new();
    for activity in flow.activities.iter().filter(|a| a.category == ActivityCategory::DataLoading) {
        let Some(cell) = nb.cell(&activity.cell_id) else { continue };
        for lit in analyze_cell(&cell.source).string_literals {
            if is_data_source_literal(&lit) && !data_sources.contains(&lit) {
                data_sources.push(lit);
            }
        }
    }

    let mut counts: BTreeMap<ActivityCategory, usize> = BTreeMap::new();
    for a in &flow.activities {
        *counts.entry(a.category).or_insert(0) += 1;
    }
    let activity_summary = ActivityCategory::ALL
        .into_iter()
        .filter_map(|c| counts.get(&c).map(|&count| ActivityCount { category: c, count }))
        .collect();

    let knowledge_sources: BTreeSet<String> = links.iter().map(|l| l.source_id.clone()).collect();

    Ok(PrototypeCard {
        title,
        problem_description,
        data_sources,
        activity_summary,
        review_score_by_persona: report.persona_scores.clone(),
        knowledge_sources: knowledge_sources.into_iter().collect(),
        generated_at: generated_at.to_string(),
        notebook_hash: hash,
        manual_fields: manual.clone(),
    })
}

/// Manual fields from a sidecar: a flat JSON object of strings.
pub fn parse_manual_fields(text: &str) -> Result<BTreeMap<String, String>, CardError> {
    let v: Value = serde_json::from_str(text).map_err(|e| CardError::Invalid(format!("manual fields: {e}")))?;
    let obj = v.as_object().ok_or_else(|| CardError::Invalid("manual fields must be a JSON object".into()))?;
    obj.iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k.clone(), s.clone())),
            _ => Err(CardError::Invalid(format!("manual field {k:?} must be a string"))),
        })
        .collect()
}

impl PrototypeCard {
    pub fn to_json_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("card serializes");
        v["schema"] = CARD_SCHEMA.into();
        v
    }

    pub fn from_json_str(text: &str) -> Result<PrototypeCard, CardError> {
        let mut v: Value = serde_json::from_str(text).map_err(|e| CardError::Invalid(e.to_string()))?;
        let obj = v.as_object_mut().ok_or_else(|| CardError::Invalid("expected an object".into()))?;
        match obj.remove("schema") {
            Some(Value::String(s)) if s == CARD_SCHEMA => {}
            _ => return Err(CardError::Invalid(format!("expected schema {CARD_SCHEMA:?}"))),
        }
        serde_json::from_value(v).map_err(|e| CardError::Invalid(e.to_string()))
    }

    pub fn render(&self, format: CardFormat) -> String {
        match format {
            CardFormat::Json => canonical::value_to_string(&self.to_json_value()),
            CardFormat::Markdown => self.to_markdown(),
        }
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        let code_cells: usize = self.activity_summary.iter().map(|a| a.count).sum();
        let _ = writeln!(out, "# {}\n", self.title);

        out.push_str("## Overview\n\n");
        let _ = writeln!(out, "- Notebook: `{}`", self.notebook_hash);
        let _ = writeln!(out, "- Code cells: {code_cells}");
        let _ = writeln!(out, "- Generated: {}\n", self.generated_at);

        let _ = writeln!(out, "## Problem\n\n{}\n", self.problem_description);

        out.push_str("## Data\n\n");
        if self.data_sources.is_empty() {
            out.push_str("none detected\n\n");
        } else {
            for d in &self.data_sources {
                let _ = writeln!(out, "- `{d}`");
            }
            out.push('\n');
        }

        out.push_str("## Activities\n\n");
        if self.activity_summary.is_empty() {
            out.push_str("no code cells\n\n");
        } else {
            out.push_str("| Activity | Cells |\n|---|---|\n");
            for a in &self.activity_summary {
                let _ = writeln!(out, "| {} | {} |", a.category, a.count);
            }
            out.push('\n');
        }

        out.push_str("## Quality by Persona\n\n");
        if self.review_score_by_persona.is_empty() {
            out.push_str("no review scores\n\n");
        } else {
            out.push_str("| Persona | Score |\n|---|---|\n");
            for (p, s) in &self.review_score_by_persona {
                let _ = writeln!(out, "| {p} | {s} |");
            }
            out.push('\n');
        }

        out.push_str("## Knowledge Sources\n\n");
        if self.knowledge_sources.is_empty() {
            out.push_str("none linked\n\n");
        } else {
            for s in &self.knowledge_sources {
                let _ = writeln!(out, "- {s}");
            }
            out.push('\n');
        }

        out.push_str("## Manual Notes\n\n");
        if self.manual_fields.is_empty() {
            out.push_str("none\n");
        } else {
            for (k, v) in &self.manual_fields {
                let _ = writeln!(out, "- **{k}**: {}", v.replace('\n', " "));
            }
        }
        out
    }
}

pub fn render_card(card: &PrototypeCard, format: &str) -> Result<String, CardError> {
    Ok(card.render(format.parse()?))
}
