//! Explainer core: per-cell def/use extraction, the inter-cell dependency
//! graph, activity classification and flow export.

pub mod activity;
pub mod describe;
pub mod flow;
pub mod graph;
pub mod lexer;
pub mod symbols;

pub use activity::{classify_activity, classify_source, ActivityCategory, PatternTable};
pub use describe::{describe_activity, CommandGenerator, GeneratorUnavailable, TextGenerator};
pub use flow::{explain, export_flow, Activity, ActivityFlow, FlowFormat, UnknownFormat, FLOW_SCHEMA};
pub use graph::{build_dependency_graph, DependencyEdge, DependencyGraph, GraphNode};
pub use symbols::{analyze_cell, extract_symbols, CellAnalysis, ExcludedNames, SymbolSet};
