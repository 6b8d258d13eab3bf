use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::symbols::{CellAnalysis, SymbolSet};
use crate::text::split_identifier;

const SHIPPED_PATTERNS: &str = include_str!("../../data/activity-patterns.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActivityCategory {
    Setup,
    DataLoading,
    Preprocessing,
    Exploration,
    Modeling,
    Evaluation,
    Visualization,
    Other,
}

impl ActivityCategory {
    pub const ALL: [ActivityCategory; 8] = [
        ActivityCategory::Setup,
        ActivityCategory::DataLoading,
        ActivityCategory::Preprocessing,
        ActivityCategory::Exploration,
        ActivityCategory::Modeling,
        ActivityCategory::Evaluation,
        ActivityCategory::Visualization,
        ActivityCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityCategory::Setup => "Setup",
            ActivityCategory::DataLoading => "DataLoading",
            ActivityCategory::Preprocessing => "Preprocessing",
            ActivityCategory::Exploration => "Exploration",
            ActivityCategory::Modeling => "Modeling",
            ActivityCategory::Evaluation => "Evaluation",
            ActivityCategory::Visualization => "Visualization",
            ActivityCategory::Other => "Other",
        }
    }
}

impl fmt::Display for ActivityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivityCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown activity category {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Pattern {
    /// `name(`: a call of exactly this identifier.
    Call(String),
    /// Contiguous run of identifier parts.
    Parts(Vec<String>),
    ImportOnly,
}

impl Pattern {
    fn matches(&self, analysis: &CellAnalysis) -> bool {
        match self {
            Pattern::ImportOnly => analysis.is_import_only(),
            Pattern::Call(name) => analysis.identifiers.iter().any(|i| i.is_call && i.text == *name),
            Pattern::Parts(parts) => analysis.identifiers.iter().any(|i| {
                let token_parts = split_identifier(&i.text);
                token_parts.windows(parts.len()).any(|w| w == parts.as_slice())
            }),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("pattern table line {line}: {message}")]
pub struct PatternTableError {
    pub line: usize,
    pub message: String,
}

/// Priority-ordered category patterns, loaded from the line-oriented table format.
#[derive(Clone, Debug)]
pub struct PatternTable {
    priority: Vec<ActivityCategory>,
    patterns: BTreeMap<ActivityCategory, Vec<Pattern>>,
}

impl PatternTable {
    pub fn shipped() -> &'static PatternTable {
        static TABLE: OnceLock<PatternTable> = OnceLock::new();
        TABLE.get_or_init(|| PatternTable::parse(SHIPPED_PATTERNS).expect("shipped pattern table is valid"))
    }

    pub fn parse(text: &str) -> Result<Self, PatternTableError> {
        let mut priority = Vec::new();
        let mut patterns: BTreeMap<ActivityCategory, Vec<Pattern>> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| PatternTableError { line: n + 1, message };
            let mut fields = line.split_whitespace();
            let head = fields.next().expect("non-empty line");
            if head == "priority" {
                for name in fields {
                    let cat: ActivityCategory = name.parse().map_err(err)?;
                    if cat == ActivityCategory::Other || priority.contains(&cat) {
                        return Err(err(format!("category {name} cannot appear in priority here")));
                    }
                    priority.push(cat);
                }
                continue;
            }
            let cat: ActivityCategory = head.parse().map_err(err)?;
            let pat = match (fields.next(), fields.next()) {
                (Some(p), None) => p,
                _ => return Err(err("expected `<Category> <pattern>`".into())),
            };
            let pattern = if pat == "@import-only" {
                Pattern::ImportOnly
            } else if let Some(name) = pat.strip_suffix('(') {
                Pattern::Call(name.to_string())
            } else {
                let parts = split_identifier(pat);
                if parts.is_empty() {
                    return Err(err(format!("pattern {pat:?} has no identifier parts")));
                }
                Pattern::Parts(parts)
            };
            patterns.entry(cat).or_default().push(pattern);
        }
        if priority.is_empty() {
            return Err(PatternTableError { line: 0, message: "missing priority line".into() });
        }
        if let Some(cat) = patterns.keys().find(|c| !priority.contains(c)) {
            return Err(PatternTableError { line: 0, message: format!("{cat} has patterns but no priority") });
        }
        Ok(PatternTable { priority, patterns })
    }

    pub fn priority(&self) -> &[ActivityCategory] {
        &self.priority
    }

    pub fn category(&self, analysis: &CellAnalysis) -> ActivityCategory {
        self.priority
            .iter()
            .copied()
            .find(|cat| self.patterns.get(cat).is_some_and(|ps| ps.iter().any(|p| p.matches(analysis))))
            .unwrap_or(ActivityCategory::Other)
    }
}

/// Category plus a label naming up to three of the cell's most frequently
/// mentioned definitions.
pub fn classify_activity(analysis: &CellAnalysis, table: &PatternTable) -> (ActivityCategory, String) {
    let category = table.category(analysis);
    (category, label(category, analysis))
}

/// Convenience wrapper over raw source with the shipped table.
pub fn classify_source(source: &str) -> (ActivityCategory, String) {
    classify_activity(&super::symbols::analyze_cell(source), PatternTable::shipped())
}

fn label(category: ActivityCategory, analysis: &CellAnalysis) -> String {
    let salient = salient_defs(&analysis.symbols, analysis, 3);
    if salient.is_empty() {
        category.to_string()
    } else {
        format!("{category}: {}", salient.join(", "))
    }
}

fn salient_defs<'a>(symbols: &'a SymbolSet, analysis: &CellAnalysis, limit: usize) -> Vec<&'a str> {
    let counts = analysis.name_counts();
    let first_seen = |name: &str| analysis.identifiers.iter().position(|i| !i.is_attribute && i.text == name);
    let mut defs: Vec<&str> = symbols.defs.iter().map(String::as_str).collect();
    defs.sort_by(|a, b| {
        let ca = counts.get(a).copied().unwrap_or(0);
        let cb = counts.get(b).copied().unwrap_or(0);
        cb.cmp(&ca).then_with(|| first_seen(a).cmp(&first_seen(b))).then_with(|| a.cmp(b))
    });
    defs.truncate(limit);
    defs
}
