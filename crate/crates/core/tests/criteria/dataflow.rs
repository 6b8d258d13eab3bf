use std::collections::BTreeSet;

use protoml_core::dataflow::{build_dependency_graph, extract_symbols, SymbolSet};
use protoml_core::Notebook;

use super::{common, Outcome};

pub type Triple = (usize, usize, String);

/// Scans every (producer, consumer, symbol) triple independently of the graph builder.
pub fn brute_force_edges(nb: &Notebook) -> BTreeSet<Triple> {
    let sets: Vec<Option<SymbolSet>> =
        nb.cells.iter().map(|c| c.is_code().then(|| extract_symbols(&c.source))).collect();
    let mut edges = BTreeSet::new();
    for j in 0..sets.len() {
        let Some(consumer) = &sets[j] else { continue };
        for i in 0..j {
            let Some(producer) = &sets[i] else { continue };
            for symbol in &consumer.uses {
                if !producer.defs.contains(symbol) {
                    continue;
                }
                let shadowed = (i + 1..j).any(|k| sets[k].as_ref().is_some_and(|s| s.defs.contains(symbol)));
                if !shadowed {
                    edges.insert((i, j, symbol.clone()));
                }
            }
        }
    }
    edges
}

pub fn graph_edges(nb: &Notebook) -> BTreeSet<Triple> {
    build_dependency_graph(nb).edges.into_iter().map(|e| (e.from_index, e.to_index, e.symbol)).collect()
}

/// Edges of `simple.ipynb`, worked out by hand from its source.
pub fn simple_expected() -> BTreeSet<Triple> {
    [
        (1, 2, "pd"),
        (1, 3, "train_test_split"),
        (2, 3, "df"),
        (1, 4, "LogisticRegression"),
        (3, 4, "X_train"),
        (3, 4, "y_train"),
        (1, 5, "accuracy_score"),
        (3, 5, "X_test"),
        (3, 5, "y_test"),
        (4, 5, "model"),
    ]
    .into_iter()
    .map(|(i, j, s)| (i, j, s.to_string()))
    .collect()
}

/// Graph equals the brute-force edge set on every fixture (at least 20).
pub fn soundness() -> Outcome {
    let fixtures = common::all_fixtures();
    ensure!(fixtures.len() >= 20, "only {} fixtures", fixtures.len());
    let mut total = 0;
    for (name, nb) in &fixtures {
        let graph = build_dependency_graph(nb);
        for e in &graph.edges {
            ensure!(e.from_index < e.to_index, "{name}: backward edge {e:?}");
            ensure_eq!(nb.cells[e.from_index].cell_id, e.from, "{name}: producer id");
            ensure_eq!(nb.cells[e.to_index].cell_id, e.to, "{name}: consumer id");
        }
        ensure_eq!(graph_edges(nb), brute_force_edges(nb), "{name}");
        total += graph.edges.len();
    }
    ensure_eq!(graph_edges(&common::fixture("simple.ipynb")), simple_expected(), "simple.ipynb hand derivation");
    Ok(format!("{} fixtures, {total} edges", fixtures.len()))
}
