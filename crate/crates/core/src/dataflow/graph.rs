use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::symbols::{analyze_cell, CellAnalysis};
use crate::notebook::Notebook;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub cell_id: String,
    /// Position in the notebook, counting every cell kind.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from_index: usize,
    pub to_index: usize,
    pub symbol: String,
    pub from: String,
    pub to: String,
}

/// Inter-cell def/use edges over the code cells of one notebook.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<GraphNode>,
    /// Sorted by (producer index, consumer index, symbol).
    pub edges: Vec<DependencyEdge>,
}

impl DependencyGraph {
    /// Whether any later code cell consumes `symbol` from the cell at `index`.
    pub fn is_consumed(&self, index: usize, symbol: &str) -> bool {
        self.edges.iter().any(|e| e.from_index == index && e.symbol == symbol)
    }
}

pub fn build_dependency_graph(nb: &Notebook) -> DependencyGraph {
    let analyses: Vec<(usize, CellAnalysis)> = nb.code_cells().map(|(i, c)| (i, analyze_cell(&c.source))).collect();
    graph_from_analyses(nb, &analyses)
}

/// Links every use to the nearest preceding code cell that defines the symbol.
pub(crate) fn graph_from_analyses(nb: &Notebook, analyses: &[(usize, CellAnalysis)]) -> DependencyGraph {
    let mut last_definer: HashMap<&str, usize> = HashMap::new();
    let mut graph = DependencyGraph::default();
    for (index, analysis) in analyses {
        let cell_id = &nb.cells[*index].cell_id;
        graph.nodes.push(GraphNode { cell_id: cell_id.clone(), index: *index });
        for symbol in &analysis.symbols.uses {
            if let Some(&producer) = last_definer.get(symbol.as_str()) {
                graph.edges.push(DependencyEdge {
                    from_index: producer,
                    to_index: *index,
                    symbol: symbol.clone(),
                    from: nb.cells[producer].cell_id.clone(),
                    to: cell_id.clone(),
                });
            }
        }
        for symbol in &analysis.symbols.defs {
            last_definer.insert(symbol.as_str(), *index);
        }
    }
    graph.edges.sort();
    graph.edges.dedup();
    graph
}
