use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const CATALOG_SCHEMA: &str = "review/1";

const SHIPPED: &str = include_str!("../../data/review-catalog.json");

pub type Weight = Ratio<i128>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "info" => Ok(Severity::Info),
            "warning" => Ok(Severity::Warning),
            "error" => Ok(Severity::Error),
            other => Err(format!("unknown severity {other:?}")),
        }
    }
}

/// A built-in check with its parameters resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Check {
    Description { min_words: usize },
    ExecutionOrder,
    EmptyCells,
    ImportsFirst,
    CellLength { max_lines: usize },
    Seeded { randomness: Vec<String>, seed_patterns: Vec<String> },
    DeadVariables,
    Headings { cells_per_heading: usize },
}

impl Check {
    pub const BUILTIN: [&'static str; 8] =
        ["R-DESC", "R-ORDER", "R-EMPTY", "R-IMPORTS", "R-LENGTH", "R-SEED", "R-DEADVAR", "R-UNTITLED"];

    fn defaults(name: &str) -> Option<Map<String, Value>> {
        let v = match name {
            "R-DESC" => serde_json::json!({ "min_words": 10 }),
            "R-LENGTH" => serde_json::json!({ "max_lines": 50 }),
            "R-SEED" => serde_json::json!({
                "randomness": ["random", "seed", "shuffle", "sample"],
                "seed_patterns": ["seed(", "random_state"],
            }),
            "R-UNTITLED" => serde_json::json!({ "cells_per_heading": 10 }),
            "R-ORDER" | "R-EMPTY" | "R-IMPORTS" | "R-DEADVAR" => serde_json::json!({}),
            _ => return None,
        };
        match v {
            Value::Object(m) => Some(m),
            _ => unreachable!(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub rule_id: String,
    pub title: String,
    pub severity: Severity,
    /// Effective parameters, defaults filled in.
    pub parameters: BTreeMap<String, Value>,
    pub check: Check,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Persona {
    pub persona_id: String,
    pub display_name: String,
    /// Rules without an entry weigh zero.
    pub weights: BTreeMap<String, Weight>,
}

impl Persona {
    pub fn weight(&self, rule_id: &str) -> Weight {
        self.weights.get(rule_id).copied().unwrap_or_else(|| Ratio::from_integer(0))
    }

    pub fn total_weight(&self) -> Weight {
        self.weights.values().copied().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Catalog {
    pub rules: Vec<Rule>,
    pub personas: Vec<Persona>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid catalog at {location}: {message}")]
pub struct InvalidCatalog {
    /// Path into the document, e.g. `rules[2].severity`.
    pub location: String,
    pub message: String,
}

fn invalid(location: impl Into<String>, message: impl Into<String>) -> InvalidCatalog {
    InvalidCatalog { location: location.into(), message: message.into() }
}

/// Exact value of a decimal (`1`, `0.25`, `2.5e-1`) or fraction (`1/3`) literal.
pub fn parse_weight(text: &str) -> Option<Weight> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        return (d != 0).then(|| Ratio::new(n, d));
    }
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mut numer: i128 = digits.trim_start_matches('0').parse().unwrap_or(0);
    let scale = exp - frac_part.len() as i32;
    if !(-30..=30).contains(&scale) {
        return None;
    }
    let pow = 10i128.checked_pow(scale.unsigned_abs())?;
    if negative {
        numer = -numer;
    }
    Some(if scale >= 0 { Ratio::from_integer(numer.checked_mul(pow)?) } else { Ratio::new(numer, pow) })
}

fn weight_value(v: &Value) -> Option<Weight> {
    match v {
        Value::Number(n) => parse_weight(&n.to_string()),
        Value::String(s) => parse_weight(s),
        _ => None,
    }
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a str, InvalidCatalog> {
    match obj.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s),
        Some(_) => Err(invalid(format!("{at}.{key}"), "expected a non-empty string")),
        None => Err(invalid(at, format!("missing field {key:?}"))),
    }
}

fn usize_param(params: &BTreeMap<String, Value>, key: &str, at: &str) -> Result<usize, InvalidCatalog> {
    params
        .get(key)
        .and_then(Value::as_u64)
        .map(|n| n as usize)
        .ok_or_else(|| invalid(format!("{at}.parameters.{key}"), "expected a non-negative integer"))
}

fn list_param(params: &BTreeMap<String, Value>, key: &str, at: &str) -> Result<Vec<String>, InvalidCatalog> {
    let bad = || invalid(format!("{at}.parameters.{key}"), "expected a list of non-empty strings");
    let items = params.get(key).and_then(Value::as_array).ok_or_else(bad)?;
    items
        .iter()
        .map(|v| v.as_str().filter(|s| !s.is_empty()).map(str::to_string).ok_or_else(bad))
        .collect()
}

fn resolve_check(name: &str, params: &BTreeMap<String, Value>, at: &str) -> Result<Check, InvalidCatalog> {
    Ok(match name {
        "R-DESC" => Check::Description { min_words: usize_param(params, "min_words", at)? },
        "R-ORDER" => Check::ExecutionOrder,
        "R-EMPTY" => Check::EmptyCells,
        "R-IMPORTS" => Check::ImportsFirst,
        "R-LENGTH" => Check::CellLength { max_lines: usize_param(params, "max_lines", at)? },
        "R-SEED" => Check::Seeded {
            randomness: list_param(params, "randomness", at)?,
            seed_patterns: list_param(params, "seed_patterns", at)?,
        },
        "R-DEADVAR" => Check::DeadVariables,
        "R-UNTITLED" => {
            let n = usize_param(params, "cells_per_heading", at)?;
            if n == 0 {
                return Err(invalid(format!("{at}.parameters.cells_per_heading"), "must be positive"));
            }
            Check::Headings { cells_per_heading: n }
        }
        other => return Err(invalid(format!("{at}.check"), format!("unknown check {other:?}"))),
    })
}

fn parse_rule(v: &Value, at: &str) -> Result<Rule, InvalidCatalog> {
    let obj = v.as_object().ok_or_else(|| invalid(at, "expected an object"))?;
    let rule_id = str_field(obj, "rule_id", at)?.to_string();
    let title = str_field(obj, "title", at)?.to_string();
    let severity = str_field(obj, "severity", at)?
        .parse::<Severity>()
        .map_err(|m| invalid(format!("{at}.severity"), m))?;
    // Custom rules name the built-in check they reuse; built-in ids imply their own.
    let check_name = match obj.get("check") {
        None => rule_id.clone(),
        Some(_) => str_field(obj, "check", at)?.to_string(),
    };
    let mut params: BTreeMap<String, Value> = Check::defaults(&check_name)
        .ok_or_else(|| {
            let loc = if obj.contains_key("check") { format!("{at}.check") } else { format!("{at}.rule_id") };
            invalid(loc, format!("no built-in check named {check_name:?}"))
        })?
        .into_iter()
        .collect();
    match obj.get("parameters") {
        None => {}
        Some(Value::Object(given)) => {
            for (k, v) in given {
                if !params.contains_key(k) {
                    return Err(invalid(format!("{at}.parameters.{k}"), format!("unknown parameter for {check_name}")));
                }
                params.insert(k.clone(), v.clone());
            }
        }
        Some(_) => return Err(invalid(format!("{at}.parameters"), "expected an object")),
    }
    let check = resolve_check(&check_name, &params, at)?;
    Ok(Rule { rule_id, title, severity, parameters: params, check })
}

fn parse_persona(v: &Value, at: &str, rule_ids: &HashSet<&str>) -> Result<Persona, InvalidCatalog> {
    let obj = v.as_object().ok_or_else(|| invalid(at, "expected an object"))?;
    let persona_id = str_field(obj, "persona_id", at)?.to_string();
    let display_name = str_field(obj, "display_name", at)?.to_string();
    let raw = obj
        .get("weights")
        .and_then(Value::as_object)
        .ok_or_else(|| invalid(format!("{at}.weights"), "expected an object"))?;
    let mut weights = BTreeMap::new();
    for (rule, w) in raw {
        let loc = format!("{at}.weights.{rule}");
        if !rule_ids.contains(rule.as_str()) {
            return Err(invalid(loc, format!("unknown rule {rule:?}")));
        }
        let w = weight_value(w).ok_or_else(|| invalid(&loc, "expected a number or fraction"))?;
        if w < Ratio::from_integer(0) {
            return Err(invalid(loc, "weights must be non-negative"));
        }
        weights.insert(rule.clone(), w);
    }
    if weights.values().all(|w| *w == Ratio::from_integer(0)) {
        return Err(invalid(format!("{at}.weights"), "at least one weight must be positive"));
    }
    Ok(Persona { persona_id, display_name, weights })
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Catalog, InvalidCatalog> {
        let doc: Value = serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        let obj = doc.as_object().ok_or_else(|| invalid("$", "expected an object"))?;
        match obj.get("schema").and_then(Value::as_str) {
            Some(CATALOG_SCHEMA) => {}
            _ => return Err(invalid("schema", format!("expected {CATALOG_SCHEMA:?}"))),
        }
        let rules_v = obj.get("rules").and_then(Value::as_array).ok_or_else(|| invalid("rules", "expected a list"))?;
        if rules_v.is_empty() {
            return Err(invalid("rules", "catalog has no rules"));
        }
        let mut rules = Vec::new();
        let mut seen = HashSet::new();
        for (i, v) in rules_v.iter().enumerate() {
            let at = format!("rules[{i}]");
            let rule = parse_rule(v, &at)?;
            if !seen.insert(rule.rule_id.clone()) {
                return Err(invalid(format!("{at}.rule_id"), format!("duplicate rule id {:?}", rule.rule_id)));
            }
            rules.push(rule);
        }
        let ids: HashSet<&str> = rules.iter().map(|r| r.rule_id.as_str()).collect();
        let personas_v = match obj.get("personas") {
            None => &Vec::new(),
            Some(Value::Array(a)) => a,
            Some(_) => return Err(invalid("personas", "expected a list")),
        };
        let mut personas = Vec::new();
        let mut seen = HashSet::new();
        for (i, v) in personas_v.iter().enumerate() {
            let at = format!("personas[{i}]");
            let p = parse_persona(v, &at, &ids)?;
            if !seen.insert(p.persona_id.clone()) {
                return Err(invalid(format!("{at}.persona_id"), format!("duplicate persona id {:?}", p.persona_id)));
            }
            personas.push(p);
        }
        Ok(Catalog { rules, personas })
    }

    pub fn load(path: &Path) -> Result<Catalog, InvalidCatalog> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("$", format!("{}: {e}", path.display())))?;
        Catalog::parse(&text)
    }

    pub fn shipped() -> Catalog {
        Catalog::parse(SHIPPED).expect("shipped catalog is valid")
    }

    pub fn shipped_text() -> &'static str {
        SHIPPED
    }

    pub fn rule(&self, rule_id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }

    pub fn persona(&self, persona_id: &str) -> Option<&Persona> {
        self.personas.iter().find(|p| p.persona_id == persona_id)
    }
}
