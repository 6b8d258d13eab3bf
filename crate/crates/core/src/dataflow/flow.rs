use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::activity::{classify_activity, ActivityCategory, PatternTable};
use super::describe::{describe_activity, TextGenerator};
use super::graph::{graph_from_analyses, DependencyEdge, DependencyGraph};
use super::symbols::analyze_cell;
use crate::canonical;
use crate::hash::ContentHash;
use crate::notebook::{canonical_hash, Notebook};

pub const FLOW_SCHEMA: &str = "flow/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub cell_id: String,
    pub index: usize,
    pub category: ActivityCategory,
    pub label: String,
    pub description: String,
}

/// Activity-flow diagram: one activity per code cell plus the dependency edges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityFlow {
    pub notebook_hash: ContentHash,
    pub activities: Vec<Activity>,
    pub edges: Vec<DependencyEdge>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowFormat {
    Dot,
    Json,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown format {0:?}")]
pub struct UnknownFormat(pub String);

impl FromStr for FlowFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(FlowFormat::Dot),
            "json" => Ok(FlowFormat::Json),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

/// Runs the whole explainer pipeline over a notebook.
pub fn explain(
    nb: &Notebook,
    table: &PatternTable,
    generator: Option<&dyn TextGenerator>,
) -> (DependencyGraph, ActivityFlow) {
    let analyses: Vec<_> = nb.code_cells().map(|(i, c)| (i, analyze_cell(&c.source))).collect();
    let graph = graph_from_analyses(nb, &analyses);
    let activities = analyses
        .iter()
        .map(|(index, analysis)| {
            let cell = &nb.cells[*index];
            let (category, label) = classify_activity(analysis, table);
            Activity {
                cell_id: cell.cell_id.clone(),
                index: *index,
                category,
                label,
                description: describe_activity(&cell.source, category, &analysis.symbols, generator),
            }
        })
        .collect();
    let flow = ActivityFlow { notebook_hash: canonical_hash(nb), activities, edges: graph.edges.clone() };
    (graph, flow)
}

impl ActivityFlow {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": FLOW_SCHEMA,
            "notebook_hash": self.notebook_hash,
            "nodes": self.activities,
            "edges": self.edges,
        })
    }

    pub fn category_of(&self, cell_id: &str) -> Option<ActivityCategory> {
        self.activities.iter().find(|a| a.cell_id == cell_id).map(|a| a.category)
    }
}

/// Deterministic export: nodes in cell order, edges by (producer, consumer, symbol).
pub fn export_flow(flow: &ActivityFlow, format: FlowFormat) -> String {
    match format {
        FlowFormat::Json => canonical::value_to_string(&flow.to_json_value()),
        FlowFormat::Dot => to_dot(flow),
    }
}

pub fn export_flow_named(flow: &ActivityFlow, format: &str) -> Result<String, UnknownFormat> {
    Ok(export_flow(flow, format.parse()?))
}

fn to_dot(flow: &ActivityFlow) -> String {
    let mut activities: Vec<&Activity> = flow.activities.iter().collect();
    activities.sort_by_key(|a| a.index);
    let mut edges: Vec<&DependencyEdge> = flow.edges.iter().collect();
    edges.sort();

    let mut out = String::from("digraph flow {\n  rankdir=TB;\n  node [shape=box];\n");
    for a in activities {
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\", category=\"{}\"];",
            dot_escape(&a.cell_id),
            dot_escape(&a.label),
            a.category
        );
    }
    for e in edges {
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", dot_escape(&e.from), dot_escape(&e.to), e.symbol);
    }
    out.push_str("}\n");
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}
