mod common;

use std::collections::BTreeMap;

use protoml_core::cardgen::{generate_card, render_card, CardError, PrototypeCard, PLACEHOLDER};
use protoml_core::dataflow::{explain, ActivityCategory, ActivityFlow, PatternTable};
use protoml_core::reviewer::{run_review, Catalog, ReviewReport};
use protoml_core::{Cell, Notebook};

fn analyze(nb: &Notebook) -> (ActivityFlow, ReviewReport) {
    let (graph, flow) = explain(nb, PatternTable::shipped(), None);
    let report = run_review(nb, &Catalog::shipped(), &graph);
    (flow, report)
}

fn card(nb: &Notebook, manual: &BTreeMap<String, String>) -> PrototypeCard {
    let (flow, report) = analyze(nb);
    generate_card(nb, &flow, &report, &[], manual, "2024-01-01T00:00:00Z").unwrap()
}

/// Quoted literals found by a plain character scan.
fn quoted_literals(source: &str) -> Vec<String> {
    let mut out = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let q = chars[i];
        if q == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if q == '"' || q == '\'' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != q && chars[j] != '\n' {
                j += 1;
            }
            out.push(chars[start..j.min(chars.len())].iter().collect());
            i = j + 1;
            continue;
        }
        i += 1;
    }
    out
}

fn looks_like_data(s: &str) -> bool {
    let exts = [".csv", ".tsv", ".json", ".jsonl", ".parquet", ".xlsx", ".xls", ".txt"];
    !s.is_empty() && !s.contains(char::is_whitespace) && (s.contains('/') || exts.iter().any(|e| s.to_lowercase().ends_with(e)))
}

#[test]
fn data_sources_match_a_literal_scan_of_loading_cells() {
    for (name, nb) in common::all_fixtures() {
        let (flow, _) = analyze(&nb);
        let mut expected: Vec<String> = Vec::new();
        for a in flow.activities.iter().filter(|a| a.category == ActivityCategory::DataLoading) {
            for lit in quoted_literals(&nb.cell(&a.cell_id).unwrap().source) {
                if looks_like_data(&lit) && !expected.contains(&lit) {
                    expected.push(lit);
                }
            }
        }
        assert_eq!(card(&nb, &BTreeMap::new()).data_sources, expected, "{name}");
    }
    assert_eq!(card(&common::fixture("simple.ipynb"), &BTreeMap::new()).data_sources, ["data/train.csv"]);
}

#[test]
fn activity_counts_sum_to_code_cells() {
    for (name, nb) in common::all_fixtures() {
        let c = card(&nb, &BTreeMap::new());
        assert_eq!(c.activity_summary.iter().map(|a| a.count).sum::<usize>(), nb.code_cells().count(), "{name}");
    }
}

#[test]
fn problem_description_fallback_chain() {
    let nb = Notebook::new(vec![Cell::code("a", "x = 1")]);
    assert_eq!(card(&nb, &BTreeMap::new()).problem_description, PLACEHOLDER);
    let manual: BTreeMap<String, String> = [("problem".to_string(), "Predict churn".to_string())].into();
    assert_eq!(card(&nb, &manual).problem_description, "Predict churn");
    let simple = common::fixture("simple.ipynb");
    assert!(card(&simple, &manual).problem_description.starts_with("# Churn baseline"));
}

#[test]
fn rendering_is_deterministic_and_json_round_trips() {
    for (name, nb) in common::all_fixtures() {
        let c = card(&nb, &BTreeMap::new());
        assert_eq!(c, card(&nb, &BTreeMap::new()), "{name}");
        let md = render_card(&c, "markdown").unwrap();
        assert_eq!(md, render_card(&c, "markdown").unwrap());
        let sections = ["Overview", "Problem", "Data", "Activities", "Quality by Persona", "Knowledge Sources", "Manual Notes"];
        let positions: Vec<usize> = sections.iter().map(|s| md.find(&format!("## {s}\n")).unwrap_or_else(|| panic!("{name}: {s}"))).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{name}");
        let json = render_card(&c, "json").unwrap();
        assert_eq!(PrototypeCard::from_json_str(&json).unwrap(), c, "{name}");
        assert!(json.contains("\"schema\":\"card/1\""));
    }
    let empty = card(&common::fixture("markdown_only.ipynb"), &BTreeMap::new());
    assert!(render_card(&empty, "markdown").unwrap().contains("## Data\n\nnone detected"));
    assert!(matches!(render_card(&empty, "pdf"), Err(CardError::UnknownFormat(_))));
}

#[test]
fn analyses_of_another_notebook_are_rejected() {
    let a = common::fixture("simple.ipynb");
    let b = common::fixture("bad.ipynb");
    let (flow, report) = analyze(&a);
    let r = generate_card(&b, &flow, &report, &[], &BTreeMap::new(), "t");
    assert!(matches!(r, Err(CardError::HashMismatch { .. })));
}
