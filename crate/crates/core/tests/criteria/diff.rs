use protoml_core::recorder::{diff_notebooks, ChangeKind};
use protoml_core::{Cell, CellKind, ContentHash, Notebook};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::Outcome;

pub const SOURCES: [&str; 5] = ["x = 1", "y = x + 1", "print(y)", "import os\nz = os.sep", "a = 1\nb = 2\nc = a + b"];

pub fn random_cell(rng: &mut StdRng, id: String) -> Cell {
    let source = SOURCES[rng.gen_range(0..SOURCES.len())].to_string();
    match rng.gen_range(0..4) {
        0 => Cell::markdown(id, source),
        1 => Cell { kind: CellKind::Raw, ..Cell::markdown(id, source) },
        _ => {
            let mut c = Cell::code(id, source);
            if rng.gen_bool(0.6) {
                c.execution_count = Some(rng.gen_range(1..5));
            }
            if rng.gen_bool(0.4) {
                c.outputs_digest = Some(ContentHash::of_bytes(&[rng.gen_range(0..3)]));
            }
            c
        }
    }
}

pub fn random_notebook(rng: &mut StdRng, next_id: &mut usize) -> Notebook {
    let n = rng.gen_range(0..6);
    let cells = (0..n)
        .map(|_| {
            *next_id += 1;
            random_cell(rng, format!("id{next_id}"))
        })
        .collect();
    Notebook::new(cells)
}

/// Derives a second notebook by a random mix of edits.
pub fn mutate(rng: &mut StdRng, a: &Notebook, next_id: &mut usize) -> Notebook {
    let mut b = a.clone();
    for _ in 0..rng.gen_range(0..5) {
        match rng.gen_range(0..8) {
            0 if !b.cells.is_empty() => {
                let i = rng.gen_range(0..b.cells.len());
                b.cells.remove(i);
            }
            1 => {
                *next_id += 1;
                let i = rng.gen_range(0..=b.cells.len());
                let c = random_cell(rng, format!("id{next_id}"));
                b.cells.insert(i, c);
            }
            2 if !b.cells.is_empty() => {
                let i = rng.gen_range(0..b.cells.len());
                b.cells[i].source = format!("{}\n# edit {}", b.cells[i].source, rng.gen_range(0..3));
            }
            3 if !b.cells.is_empty() => {
                let i = rng.gen_range(0..b.cells.len());
                if b.cells[i].is_code() {
                    b.cells[i].execution_count = Some(rng.gen_range(1..9));
                    b.cells[i].outputs_digest = Some(ContentHash::of_bytes(b"out"));
                }
            }
            4 => b.cells.shuffle(rng),
            5 if !b.cells.is_empty() => {
                // a tool regenerating ids
                *next_id += 1;
                let i = rng.gen_range(0..b.cells.len());
                b.cells[i].cell_id = format!("id{next_id}");
            }
            6 => b.metadata_digest = ContentHash::of_bytes(&[rng.gen()]),
            7 => b.format_version = (4, rng.gen_range(0..6)),
            _ => {}
        }
    }
    b
}

/// Size of the largest subsequence of `seq` that is increasing, by enumerating subsets.
pub fn brute_force_lis(seq: &[usize]) -> usize {
    (0u32..1 << seq.len())
        .filter(|mask| {
            let picked: Vec<usize> = (0..seq.len()).filter(|i| mask & (1 << i) != 0).map(|i| seq[i]).collect();
            picked.windows(2).all(|w| w[0] < w[1])
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

/// Longest order-preserving matching between equal items, by exhaustive recursion.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut best = brute_force_lcs(&a[1..], b);
    for j in 0..b.len() {
        if a[0] == b[j] {
            best = best.max(1 + brute_force_lcs(&a[1..], &b[j + 1..]));
        }
    }
    best
}

/// `apply(diff(a, b), a) == b` over random pairs, one in five unrelated.
pub fn apply_round_trip(pairs: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xd1ff);
    let mut next_id = 0;
    for case in 0..pairs {
        let a = random_notebook(&mut rng, &mut next_id);
        let b = if case % 5 == 0 { random_notebook(&mut rng, &mut next_id) } else { mutate(&mut rng, &a, &mut next_id) };
        let d = diff_notebooks(&a, &b);
        let applied = d.apply(&a).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(applied == b, "case {case}: {a:?} -> {b:?}");
        ensure_eq!(d.is_empty(), a == b, "case {case}: emptiness");
    }
    Ok(format!("{pairs} pairs"))
}

/// Pure reorders use exactly `n - LIS` moves.
pub fn minimal_moves(cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    for case in 0..cases {
        let n = rng.gen_range(0..=6);
        let a = Notebook::new((0..n).map(|i| Cell::code(format!("c{i}"), format!("v{i} = {i}"))).collect());
        let mut b = a.clone();
        b.cells.shuffle(&mut rng);
        let d = diff_notebooks(&a, &b);
        ensure!(d.entries.iter().all(|e| e.change == ChangeKind::Moved), "case {case}: non-move entry");
        let positions: Vec<usize> = a.cells.iter().map(|c| b.position(&c.cell_id).unwrap()).collect();
        ensure_eq!(d.entries.len(), n - brute_force_lis(&positions), "case {case}: moves for {positions:?}");
        ensure!(d.apply(&a).ok() == Some(b), "case {case}: apply");
    }
    Ok(format!("{cases} reorders"))
}

/// Without shared ids, matched cells form a longest common subsequence of sources.
pub fn content_alignment(cases: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    for case in 0..cases {
        // fresh ids on both sides force alignment by content alone
        let a = Notebook::new((0..rng.gen_range(0..=6)).map(|i| Cell::code(format!("a{i}"), SOURCES[rng.gen_range(0..3)])).collect());
        let b = Notebook::new((0..rng.gen_range(0..=6)).map(|i| Cell::code(format!("b{i}"), SOURCES[rng.gen_range(0..3)])).collect());
        let d = diff_notebooks(&a, &b);
        let s = d.summary();
        let matched = a.cells.len() - s.removed;
        ensure_eq!(matched, b.cells.len() - s.added, "case {case}: matched counts");
        let ha: Vec<&str> = a.cells.iter().map(|c| c.source.as_str()).collect();
        let hb: Vec<&str> = b.cells.iter().map(|c| c.source.as_str()).collect();
        ensure_eq!(matched, brute_force_lcs(&ha, &hb), "case {case}: alignment size");
        ensure_eq!(s.moved, 0, "case {case}: a common subsequence never needs moves");
        ensure!(d.apply(&a).ok() == Some(b), "case {case}: apply");
    }
    Ok(format!("{cases} alignments"))
}
