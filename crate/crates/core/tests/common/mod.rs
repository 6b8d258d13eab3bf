#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use protoml_core::{parse_notebook, Notebook};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> Notebook {
    let bytes = fs::read(fixtures_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    parse_notebook(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every fixture notebook, sorted by file name.
pub fn all_fixtures() -> Vec<(String, Notebook)> {
    let mut names: Vec<String> = fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".ipynb"))
        .collect();
    names.sort();
    names.into_iter().map(|n| {
        let nb = fixture(&n);
        (n, nb)
    }).collect()
}
