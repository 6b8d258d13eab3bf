use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, ChangeTag};

use crate::hash::ContentHash;
use crate::notebook::{Cell, CellKind, Notebook};

pub const DIFF_SCHEMA: &str = "diff/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Added,
    Removed,
    Modified,
    Moved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineOp {
    Equal,
    Delete,
    Insert,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineChange {
    pub op: LineOp,
    pub text: String,
}

/// Non-source fields of a cell after the change.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellState {
    pub kind: CellKind,
    pub execution_count: Option<u64>,
    pub outputs_digest: Option<ContentHash>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub change: ChangeKind,
    /// Id in the new notebook, or in the old one for removals.
    pub cell_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_cell_id: Option<String>,
    pub old_index: Option<usize>,
    pub new_index: Option<usize>,
    /// The inserted cell, for additions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<CellState>,
    /// Line diff of the source; absent when the source is unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lines: Option<Vec<LineChange>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookDiff {
    pub entries: Vec<DiffEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_version: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata_digest: Option<ContentHash>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DiffSummary {
    pub added: usize,
    pub removed: usize,
    pub modified: usize,
    pub moved: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("diff does not apply: {0}")]
pub struct ApplyError(String);

impl NotebookDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.format_version.is_none() && self.metadata_digest.is_none()
    }

    pub fn summary(&self) -> DiffSummary {
        let mut s = DiffSummary::default();
        for e in &self.entries {
            match e.change {
                ChangeKind::Added => s.added += 1,
                ChangeKind::Removed => s.removed += 1,
                ChangeKind::Modified => s.modified += 1,
                ChangeKind::Moved => s.moved += 1,
            }
        }
        s
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("diff serializes");
        v["schema"] = DIFF_SCHEMA.into();
        v
    }

    /// Rebuilds the new notebook from the old one.
    pub fn apply(&self, old: &Notebook) -> Result<Notebook, ApplyError> {
        let mut removed = vec![false; old.cells.len()];
        let mut placed: Vec<(usize, Cell)> = Vec::new();
        let mut edits: Vec<Option<&DiffEntry>> = vec![None; old.cells.len()];
        for e in &self.entries {
            match e.change {
                ChangeKind::Added => {
                    let cell = e.cell.clone().ok_or_else(|| ApplyError("added entry without cell".into()))?;
                    let at = e.new_index.ok_or_else(|| ApplyError("added entry without index".into()))?;
                    placed.push((at, cell));
                }
                ChangeKind::Removed | ChangeKind::Moved => {
                    let i = e.old_index.filter(|&i| i < old.cells.len()).ok_or_else(|| ApplyError("bad old index".into()))?;
                    if removed[i] {
                        return Err(ApplyError(format!("old cell {i} touched twice")));
                    }
                    removed[i] = true;
                    if e.change == ChangeKind::Moved {
                        let at = e.new_index.ok_or_else(|| ApplyError("moved entry without index".into()))?;
                        placed.push((at, transform(&old.cells[i], e)?));
                    }
                }
                ChangeKind::Modified => {
                    let i = e.old_index.filter(|&i| i < old.cells.len()).ok_or_else(|| ApplyError("bad old index".into()))?;
                    edits[i] = Some(e);
                }
            }
        }
        let mut stable = Vec::new();
        for (i, cell) in old.cells.iter().enumerate() {
            if removed[i] {
                continue;
            }
            stable.push(match edits[i] {
                Some(e) => transform(cell, e)?,
                None => cell.clone(),
            });
        }
        let total = stable.len() + placed.len();
        let mut slots: Vec<Option<Cell>> = vec![None; total];
        for (at, cell) in placed {
            let slot = slots.get_mut(at).ok_or_else(|| ApplyError(format!("index {at} out of range")))?;
            if slot.is_some() {
                return Err(ApplyError(format!("index {at} filled twice")));
            }
            *slot = Some(cell);
        }
        let mut rest = stable.into_iter();
        let cells = slots
            .into_iter()
            .map(|s| s.or_else(|| rest.next()))
            .collect::<Option<Vec<Cell>>>()
            .ok_or_else(|| ApplyError("not enough cells".into()))?;
        Ok(Notebook {
            cells,
            format_version: self.format_version.unwrap_or(old.format_version),
            metadata_digest: self.metadata_digest.clone().unwrap_or_else(|| old.metadata_digest.clone()),
        })
    }
}

fn transform(cell: &Cell, e: &DiffEntry) -> Result<Cell, ApplyError> {
    let mut out = cell.clone();
    out.cell_id = e.cell_id.clone();
    if let Some(after) = &e.after {
        out.kind = after.kind;
        out.execution_count = after.execution_count;
        out.outputs_digest = after.outputs_digest.clone();
    }
    if let Some(lines) = &e.lines {
        let before: Vec<&str> = lines.iter().filter(|l| l.op != LineOp::Insert).map(|l| l.text.as_str()).collect();
        if before.join("\n") != cell.source {
            return Err(ApplyError(format!("source of {} does not match", cell.cell_id)));
        }
        out.source = lines
            .iter()
            .filter(|l| l.op != LineOp::Delete)
            .map(|l| l.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
    }
    Ok(out)
}

pub fn line_diff(old: &str, new: &str) -> Vec<LineChange> {
    let a: Vec<&str> = old.split('\n').collect();
    let b: Vec<&str> = new.split('\n').collect();
    let mut out = Vec::new();
    for op in capture_diff_slices(Algorithm::Myers, &a, &b) {
        for change in op.iter_changes(&a, &b) {
            let op = match change.tag() {
                ChangeTag::Equal => LineOp::Equal,
                ChangeTag::Delete => LineOp::Delete,
                ChangeTag::Insert => LineOp::Insert,
            };
            out.push(LineChange { op, text: change.value().to_string() });
        }
    }
    out
}

/// Pairs of equal items forming a longest common subsequence.
fn lcs<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] { table[i + 1][j + 1] + 1 } else { table[i + 1][j].max(table[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < n && j < m {
        if a[i] == b[j] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    pairs
}

/// Positions (into `seq`) of a longest strictly increasing subsequence.
fn lis(seq: &[usize]) -> Vec<usize> {
    let mut tails: Vec<usize> = Vec::new();
    let mut prev: Vec<Option<usize>> = vec![None; seq.len()];
    for (i, &v) in seq.iter().enumerate() {
        let k = tails.partition_point(|&t| seq[t] < v);
        prev[i] = if k > 0 { Some(tails[k - 1]) } else { None };
        if k == tails.len() {
            tails.push(i);
        } else {
            tails[k] = i;
        }
    }
    let mut out = Vec::new();
    let mut cur = tails.last().copied();
    while let Some(i) = cur {
        out.push(i);
        cur = prev[i];
    }
    out.reverse();
    out
}

/// Aligns cells by id, then by content over the leftovers, and classifies
/// every difference.
pub fn diff_notebooks(old: &Notebook, new: &Notebook) -> NotebookDiff {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut old_used = vec![false; old.cells.len()];
    let mut new_used = vec![false; new.cells.len()];
    for (j, cell) in new.cells.iter().enumerate() {
        if let Some(i) = old.position(&cell.cell_id) {
            pairs.push((i, j));
            old_used[i] = true;
            new_used[j] = true;
        }
    }
    let old_rest: Vec<usize> = (0..old.cells.len()).filter(|&i| !old_used[i]).collect();
    let new_rest: Vec<usize> = (0..new.cells.len()).filter(|&j| !new_used[j]).collect();
    let old_hashes: Vec<ContentHash> = old_rest.iter().map(|&i| old.cells[i].content_hash()).collect();
    let new_hashes: Vec<ContentHash> = new_rest.iter().map(|&j| new.cells[j].content_hash()).collect();
    for (a, b) in lcs(&old_hashes, &new_hashes) {
        let (i, j) = (old_rest[a], new_rest[b]);
        pairs.push((i, j));
        old_used[i] = true;
        new_used[j] = true;
    }
    pairs.sort_unstable();
    let new_positions: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    let mut in_order = vec![false; pairs.len()];
    for k in lis(&new_positions) {
        in_order[k] = true;
    }

    let mut removals = Vec::new();
    let mut others = Vec::new();
    for (i, cell) in old.cells.iter().enumerate() {
        if !old_used[i] {
            removals.push(DiffEntry {
                change: ChangeKind::Removed,
                cell_id: cell.cell_id.clone(),
                previous_cell_id: None,
                old_index: Some(i),
                new_index: None,
                cell: None,
                after: None,
                lines: None,
            });
        }
    }
    for (j, cell) in new.cells.iter().enumerate() {
        if !new_used[j] {
            others.push(DiffEntry {
                change: ChangeKind::Added,
                cell_id: cell.cell_id.clone(),
                previous_cell_id: None,
                old_index: None,
                new_index: Some(j),
                cell: Some(cell.clone()),
                after: None,
                lines: None,
            });
        }
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (a, b) = (&old.cells[i], &new.cells[j]);
        let moved = !in_order[k];
        if !moved && a == b {
            continue;
        }
        let state_changed = a.kind != b.kind || a.execution_count != b.execution_count || a.outputs_digest != b.outputs_digest;
        others.push(DiffEntry {
            change: if moved { ChangeKind::Moved } else { ChangeKind::Modified },
            cell_id: b.cell_id.clone(),
            previous_cell_id: (a.cell_id != b.cell_id).then(|| a.cell_id.clone()),
            old_index: Some(i),
            new_index: Some(j),
            cell: None,
            after: state_changed.then(|| CellState {
                kind: b.kind,
                execution_count: b.execution_count,
                outputs_digest: b.outputs_digest.clone(),
            }),
            lines: (a.source != b.source).then(|| line_diff(&a.source, &b.source)),
        });
    }
    others.sort_by_key(|e| e.new_index);
    removals.extend(others);
    NotebookDiff {
        entries: removals,
        format_version: (old.format_version != new.format_version).then_some(new.format_version),
        metadata_digest: (old.metadata_digest != new.metadata_digest).then(|| new.metadata_digest.clone()),
    }
}
