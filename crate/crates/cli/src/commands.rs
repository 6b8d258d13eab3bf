use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use protoml_core::canonical;
use protoml_core::cardgen::{generate_card, parse_manual_fields, CardFormat};
use protoml_core::dataflow::{explain, export_flow, CommandGenerator, FlowFormat, PatternTable, TextGenerator};
use protoml_core::knowledge::{
    score_source, Flag, KnowledgeCatalog, KnowledgeError, KnowledgeSource, KnowledgeStore, LinkTarget, SourceKind,
    SuitabilityWeights, TraceLink,
};
use protoml_core::recommender::{ingest_corpus, recommendations_json, CellRef, Recommendation, Target, VectorIndex};
use protoml_core::recorder::{execution_trigger, LineOp, Snapshot, Store, WatchEvent, Watcher};
use protoml_core::reviewer::{run_review, Catalog};
use protoml_core::service::{serve, Service};
use protoml_core::{canonical_hash, parse_notebook, ContentHash, Notebook};
use serde_json::{json, Value};

use crate::args::{Cli, Command, KnowledgeAction, OutputFormat, RecommendLevel, RecommendOpts};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

const INDEX_FILE: &str = "index.json";
const INGEST_SCHEMA: &str = "ingest/1";
const NODE_SCHEMA: &str = "node/1";
const SOURCES_SCHEMA: &str = "knowledge-sources/1";
const SCORE_SCHEMA: &str = "suitability/1";
const LINKS_SCHEMA: &str = "knowledge-links/1";

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn knowledge_err(e: KnowledgeError) -> CliError {
    match e {
        KnowledgeError::InvalidValue(msg) => CliError::Usage(msg),
        other => data(other),
    }
}

/// `PROTOML_NOW` pins the clock for reproducible output.
fn now() -> Result<DateTime<Utc>> {
    match std::env::var("PROTOML_NOW") {
        Ok(text) if !text.is_empty() => DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| usage(format!("PROTOML_NOW is not an RFC 3339 timestamp: {e}"))),
        _ => Ok(Utc::now()),
    }
}

fn timestamp() -> Result<String> {
    Ok(now()?.to_rfc3339_opts(SecondsFormat::Secs, true))
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(data)
}

fn emit_json(value: &Value) -> Result<()> {
    emit(&format!("{}\n", canonical::value_to_string(value)))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| data(format!("cannot write {}: {e}", p.display()))),
        None => emit(text),
    }
}

fn read_notebook(path: &Path) -> Result<Notebook> {
    let bytes = fs::read(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
    parse_notebook(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn open_store(repo: &Path) -> Result<Store> {
    let pinned = now()?;
    let store = Store::open(repo).map_err(data)?;
    if std::env::var_os("PROTOML_NOW").is_some_and(|v| !v.is_empty()) {
        Ok(store.with_clock(Arc::new(move || pinned)))
    } else {
        Ok(store)
    }
}

fn load_catalog(path: Option<&Path>) -> Result<Catalog> {
    match path {
        Some(p) => Catalog::load(p).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => Ok(Catalog::shipped()),
    }
}

fn node_json(snap: &Snapshot) -> Value {
    let mut v = serde_json::to_value(snap).expect("snapshot serializes");
    v["schema"] = NODE_SCHEMA.into();
    v
}

fn node_line(snap: &Snapshot) -> String {
    let mut line = format!("{}  #{}  {}", snap.node_id.short(), snap.seq, snap.created_at);
    if let Some(cell) = &snap.trigger_cell_id {
        let _ = write!(line, "  cell:{cell}");
    }
    if let Some(comment) = &snap.comment {
        let _ = write!(line, "  \"{}\"", comment.replace('\n', " "));
    }
    line
}

pub fn run(cli: Cli) -> Result<u8> {
    let json = cli.format == OutputFormat::Json;
    let repo = cli.repo;
    match cli.command {
        Command::Explain { notebook, dot, json: json_flag, describe_cmd } => {
            explain_cmd(&notebook, dot, json || json_flag, describe_cmd)
        }
        Command::Review { notebook, catalog, persona } => review_cmd(&notebook, catalog.as_deref(), persona, json),
        Command::Record { notebook, comment, trigger } => record_cmd(&repo, &notebook, comment, trigger, json),
        Command::Watch { notebook, interval_ms, max_polls } => watch_cmd(&repo, &notebook, interval_ms, max_polls, json),
        Command::Log { tree } => log_cmd(&repo, tree, json),
        Command::Checkout { node, output } => checkout_cmd(&repo, &node, output.as_deref()),
        Command::Diff { a, b } => diff_cmd(&repo, &a, &b, json),
        Command::Annotate { node, text } => annotate_cmd(&repo, &node, &text, json),
        Command::Index { corpus, output } => index_cmd(&repo, &corpus, output, json),
        Command::Recommend { level } => recommend_cmd(&repo, level, json),
        Command::Card { notebook, output, manual, catalog } => {
            card_cmd(&repo, &notebook, output.as_deref(), manual, catalog.as_deref(), json)
        }
        Command::Knowledge { action } => knowledge_cmd(&repo, action, json),
        Command::Serve { port, host, index } => serve_cmd(&repo, port, &host, index),
    }
}

fn explain_cmd(path: &Path, dot: bool, json: bool, describe_cmd: Option<String>) -> Result<u8> {
    let nb = read_notebook(path)?;
    let generator = describe_cmd.filter(|c| !c.trim().is_empty()).map(|command| CommandGenerator { command });
    let (_, flow) = explain(&nb, PatternTable::shipped(), generator.as_ref().map(|g| g as &dyn TextGenerator));
    if dot {
        return emit(&export_flow(&flow, FlowFormat::Dot)).map(|_| 0);
    }
    if json {
        return emit(&format!("{}\n", export_flow(&flow, FlowFormat::Json))).map(|_| 0);
    }
    let mut out = String::new();
    let id_width = flow.activities.iter().map(|a| a.cell_id.len()).max().unwrap_or(0);
    let cat_width = flow.activities.iter().map(|a| a.category.as_str().len()).max().unwrap_or(0);
    for a in &flow.activities {
        let _ = writeln!(out, "{:<id_width$}  {:<cat_width$}  {}", a.cell_id, a.category.as_str(), a.description);
    }
    if !flow.edges.is_empty() {
        out.push_str("\nedges\n");
        for e in &flow.edges {
            let _ = writeln!(out, "  {} -> {}  {}", e.from, e.to, e.symbol);
        }
    }
    emit(&out).map(|_| 0)
}

fn review_cmd(path: &Path, catalog: Option<&Path>, persona: Option<String>, json: bool) -> Result<u8> {
    let nb = read_notebook(path)?;
    let catalog = load_catalog(catalog)?;
    let (graph, _) = explain(&nb, PatternTable::shipped(), None);
    let mut report = run_review(&nb, &catalog, &graph);
    if let Some(p) = persona {
        if catalog.persona(&p).is_none() {
            let known: Vec<&str> = catalog.personas.iter().map(|p| p.persona_id.as_str()).collect();
            return Err(usage(format!("unknown persona {p:?}; known: {}", known.join(", "))));
        }
        report.retain_persona(&p);
    }
    if json {
        emit_json(&report.to_json_value())?;
    } else {
        emit(&report.render_text())?;
    }
    Ok(if report.has_errors() { 1 } else { 0 })
}

fn record_cmd(repo: &Path, path: &Path, comment: Option<String>, trigger: Option<String>, json: bool) -> Result<u8> {
    let nb = read_notebook(path)?;
    let mut store = open_store(repo)?;
    let head = store.head();
    let trigger = match trigger {
        Some(t) => Some(t),
        None => {
            let reference = match &head {
                Some(h) => store.notebook(&h.node_id).map_err(data)?,
                None => Notebook::new(Vec::new()),
            };
            execution_trigger(&reference, &nb)
        }
    };
    let snap = store.record(&nb, trigger.as_deref(), comment.as_deref()).map_err(data)?;
    let unchanged = head.as_ref().is_some_and(|h| h.node_id == snap.node_id);
    if json {
        emit_json(&node_json(&snap))?;
    } else if unchanged {
        emit(&format!("unchanged; head is {}\n", node_line(&snap)))?;
    } else {
        emit(&format!("recorded {}\n", node_line(&snap)))?;
    }
    Ok(0)
}

fn watch_cmd(repo: &Path, path: &Path, interval_ms: u64, max_polls: Option<u64>, json: bool) -> Result<u8> {
    if interval_ms == 0 {
        return Err(usage("--interval-ms must be positive"));
    }
    let mut watcher = Watcher::new(open_store(repo)?, path);
    let mut polls = 0u64;
    loop {
        if let Some(event) = watcher.poll_once() {
            let (value, line) = match &event {
                WatchEvent::Recorded(snap) => (json!({"event": "recorded", "node": snap}), format!("recorded {}", node_line(snap))),
                WatchEvent::FileVanished(p) => {
                    (json!({"event": "vanished", "path": p}), format!("{} disappeared; still watching", p.display()))
                }
                WatchEvent::Unreadable(msg) => (json!({"event": "unreadable", "message": msg}), format!("unreadable: {msg}")),
                WatchEvent::StoreFailed(e) => return Err(data(e)),
            };
            if json {
                emit_json(&value)?;
            } else {
                emit(&format!("{line}\n"))?;
            }
        }
        polls += 1;
        if max_polls.is_some_and(|m| polls >= m) {
            return Ok(0);
        }
        thread::sleep(Duration::from_millis(interval_ms));
    }
}

fn log_cmd(repo: &Path, tree: bool, json: bool) -> Result<u8> {
    let store = open_store(repo)?;
    let t = store.tree();
    if json {
        emit_json(&t.to_json_value())?;
    } else if tree {
        emit(&t.render())?;
    } else {
        let mut out = String::new();
        for snap in t.by_seq() {
            let head = if t.head_id.as_ref() == Some(&snap.node_id) { "  (HEAD)" } else { "" };
            let _ = writeln!(out, "{}{head}", node_line(snap));
        }
        emit(&out)?;
    }
    Ok(0)
}

fn checkout_cmd(repo: &Path, node: &str, output: Option<&Path>) -> Result<u8> {
    let mut store = open_store(repo)?;
    let id = store.resolve(node).map_err(data)?;
    let nb = store.checkout(&id).map_err(data)?;
    write_output(output, &nb.to_ipynb())?;
    Ok(0)
}

fn diff_cmd(repo: &Path, a: &str, b: &str, json: bool) -> Result<u8> {
    let store = open_store(repo)?;
    let a = store.resolve(a).map_err(data)?;
    let b = store.resolve(b).map_err(data)?;
    let diff = store.diff(&a, &b).map_err(data)?;
    if json {
        emit_json(&diff.to_json_value())?;
        return Ok(0);
    }
    let mut out = String::new();
    for e in &diff.entries {
        let (mark, kind) = match serde_json::to_value(e.change).ok().and_then(|v| v.as_str().map(str::to_string)) {
            Some(k) => (k.chars().next().unwrap_or('?').to_ascii_uppercase(), k),
            None => ('?', String::new()),
        };
        let pos = match (e.old_index, e.new_index) {
            (Some(o), Some(n)) if o != n => format!("  {o} -> {n}"),
            (Some(i), _) | (None, Some(i)) => format!("  @{i}"),
            (None, None) => String::new(),
        };
        let _ = writeln!(out, "{mark} {}  {kind}{pos}", e.cell_id);
        for l in e.lines.iter().flatten() {
            let sign = match l.op {
                LineOp::Equal => continue,
                LineOp::Delete => '-',
                LineOp::Insert => '+',
            };
            let _ = writeln!(out, "    {sign}{}", l.text);
        }
    }
    let s = diff.summary();
    let _ = writeln!(out, "{} added, {} removed, {} modified, {} moved", s.added, s.removed, s.modified, s.moved);
    emit(&out)?;
    Ok(0)
}

fn annotate_cmd(repo: &Path, node: &str, text: &str, json: bool) -> Result<u8> {
    let mut store = open_store(repo)?;
    let id = store.resolve(node).map_err(data)?;
    let snap = store.annotate(&id, text).map_err(data)?;
    if json {
        emit_json(&node_json(&snap))?;
    } else {
        emit(&format!("annotated {}\n", node_line(&snap)))?;
    }
    Ok(0)
}

fn index_cmd(repo: &Path, corpus: &Path, output: Option<PathBuf>, json: bool) -> Result<u8> {
    let path = output.unwrap_or_else(|| repo.join(INDEX_FILE));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data(format!("cannot create {}: {e}", parent.display())))?;
    }
    let ingested = ingest_corpus(corpus, Some(&path), &timestamp()?).map_err(data)?;
    let idx = &ingested.index;
    if json {
        emit_json(&json!({
            "schema": INGEST_SCHEMA,
            "index": path,
            "notebooks": idx.notebooks.len(),
            "cells": idx.n_docs,
            "vocabulary": idx.vocabulary.len(),
            "skipped": ingested.skipped,
        }))?;
    } else {
        let mut out = format!(
            "indexed {} notebooks, {} cells, {} tokens into {}\n",
            idx.notebooks.len(),
            idx.n_docs,
            idx.vocabulary.len(),
            path.display()
        );
        for s in &ingested.skipped {
            let _ = writeln!(out, "skipped {}", s.display());
        }
        emit(&out)?;
    }
    Ok(0)
}

fn components(path: &Path) -> Vec<String> {
    path.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect()
}

/// Whether `key` (slash separated) names `path` by trailing components.
fn path_suffix_matches(key: &str, path: &[String]) -> bool {
    let key: Vec<&str> = key.split('/').filter(|s| !s.is_empty() && *s != ".").collect();
    !key.is_empty() && key.len() <= path.len() && path[path.len() - key.len()..].iter().zip(&key).all(|(a, b)| a == b)
}

fn absolute(path: &Path) -> Vec<String> {
    components(&fs::canonicalize(path).unwrap_or_else(|_| std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())))
}

/// The longest index key naming the query notebook file.
fn self_key(index: &VectorIndex, path: &Path) -> Option<String> {
    let full = absolute(path);
    index.notebooks.iter().filter(|k| path_suffix_matches(k, &full)).max_by_key(|k| k.split('/').count()).cloned()
}

fn load_index(repo: &Path, opts: &RecommendOpts) -> Result<VectorIndex> {
    if let Some(corpus) = &opts.corpus {
        return ingest_corpus(corpus, None, &timestamp()?).map(|i| i.index).map_err(data);
    }
    let path = opts.index.clone().unwrap_or_else(|| repo.join(INDEX_FILE));
    if !path.exists() {
        return Err(data(format!("no index at {}; run `protoml index <corpus>` first", path.display())));
    }
    VectorIndex::load(&path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn recommend_cmd(repo: &Path, level: RecommendLevel, json: bool) -> Result<u8> {
    let (kind, recs) = match level {
        RecommendLevel::Cell { notebook, cell_id, opts } => {
            if opts.k == 0 {
                return Err(usage("--k must be positive"));
            }
            let nb = read_notebook(&notebook)?;
            let cell = nb.cell(&cell_id).ok_or_else(|| data(format!("{} has no cell {cell_id:?}", notebook.display())))?;
            let index = load_index(repo, &opts)?;
            let exclude = opts
                .exclude_self
                .then(|| self_key(&index, &notebook))
                .flatten()
                .map(|key| CellRef { notebook: key, cell_id: cell_id.clone() });
            ("cell", index.recommend_cells(&cell.source, opts.k, exclude.as_ref()))
        }
        RecommendLevel::Notebook { notebook, opts } => {
            if opts.k == 0 {
                return Err(usage("--k must be positive"));
            }
            let nb = read_notebook(&notebook)?;
            let index = load_index(repo, &opts)?;
            let exclude = opts.exclude_self.then(|| self_key(&index, &notebook)).flatten();
            ("notebook", index.recommend_notebooks(&nb, opts.k, exclude.as_deref()))
        }
    };
    if json {
        emit_json(&recommendations_json(kind, &recs))?;
    } else {
        emit(&render_recommendations(&recs))?;
    }
    Ok(0)
}

fn render_recommendations(recs: &[Recommendation]) -> String {
    if recs.is_empty() {
        return "no similar entries\n".into();
    }
    let mut out = String::new();
    for r in recs {
        let target = match &r.target {
            Target::Cell(c) => format!("{}#{}", c.notebook, c.cell_id),
            Target::Notebook { notebook } => notebook.clone(),
        };
        let _ = writeln!(out, "{:>2}. {:.4}  {target}", r.rank, r.score);
    }
    out
}

/// Links attached to the notebook's cells by path, or to any snapshot of the same content.
fn card_links(repo: &Path, path: &Path, nb: &Notebook) -> Result<Vec<TraceLink>> {
    let knowledge = KnowledgeStore::new(repo);
    if !knowledge.path().exists() {
        return Ok(Vec::new());
    }
    let catalog = knowledge.load().map_err(data)?;
    let full = absolute(path);
    let hash = canonical_hash(nb);
    let snapshots: Vec<ContentHash> = if repo.join("objects").is_dir() {
        let store = Store::open(repo).map_err(data)?;
        store.tree().nodes.values().filter(|s| s.content_hash == hash).map(|s| s.node_id.clone()).collect()
    } else {
        Vec::new()
    };
    Ok(catalog
        .links
        .iter()
        .filter(|l| match &l.target {
            LinkTarget::Cell { notebook_path, .. } => path_suffix_matches(notebook_path, &full),
            LinkTarget::Snapshot { node_id } => snapshots.contains(node_id),
        })
        .cloned()
        .collect())
}

fn card_cmd(
    repo: &Path,
    path: &Path,
    output: Option<&Path>,
    manual: Option<PathBuf>,
    catalog: Option<&Path>,
    json: bool,
) -> Result<u8> {
    let nb = read_notebook(path)?;
    let catalog = load_catalog(catalog)?;
    let (graph, flow) = explain(&nb, PatternTable::shipped(), None);
    let report = run_review(&nb, &catalog, &graph);
    let sidecar = {
        let mut s = path.as_os_str().to_owned();
        s.push(".card.json");
        PathBuf::from(s)
    };
    let manual_path = match manual {
        Some(p) => Some(p),
        None => sidecar.exists().then_some(sidecar),
    };
    let manual = match manual_path {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| data(format!("cannot read {}: {e}", p.display())))?;
            parse_manual_fields(&text).map_err(|e| data(format!("{}: {e}", p.display())))?
        }
        None => BTreeMap::new(),
    };
    let links = card_links(repo, path, &nb)?;
    let card = generate_card(&nb, &flow, &report, &links, &manual, &timestamp()?).map_err(data)?;
    let text = if json {
        format!("{}\n", card.render(CardFormat::Json))
    } else {
        card.render(CardFormat::Markdown)
    };
    write_output(output, &text)?;
    Ok(0)
}

/// Accepts `snapshot:<prefix>` by resolving the prefix against the store.
fn parse_target(repo: &Path, text: &str) -> Result<LinkTarget> {
    if let Some(prefix) = text.strip_prefix("snapshot:") {
        if ContentHash::parse(prefix).is_err() {
            let store = open_store(repo)?;
            let node_id = store.resolve(prefix).map_err(data)?;
            return Ok(LinkTarget::Snapshot { node_id });
        }
    }
    text.parse().map_err(knowledge_err)
}

fn load_weights(path: Option<&Path>) -> Result<SuitabilityWeights> {
    match path {
        Some(p) => SuitabilityWeights::load(p).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => Ok(SuitabilityWeights::shipped()),
    }
}

fn source_line(s: &KnowledgeSource) -> String {
    let flags: Vec<&str> = Flag::ALL.into_iter().filter(|f| s.flag(*f)).map(Flag::as_str).collect();
    let mut line = format!("{}  {}  {}", s.source_id, s.kind.as_str(), s.title);
    if !flags.is_empty() {
        let _ = write!(line, "  [{}]", flags.join(", "));
    }
    line
}

fn knowledge_cmd(repo: &Path, action: KnowledgeAction, json: bool) -> Result<u8> {
    let store = KnowledgeStore::new(repo);
    let ensure_repo = || fs::create_dir_all(repo).map_err(|e| data(format!("cannot create {}: {e}", repo.display())));
    match action {
        KnowledgeAction::Add { source_id, kind, title, url, author, flags, notes } => {
            let kind: SourceKind = kind.parse().map_err(knowledge_err)?;
            let mut src = KnowledgeSource::new(source_id, kind, title);
            for f in &flags {
                src.flags.insert(f.parse().map_err(knowledge_err)?, true);
            }
            src.url = url;
            src.author = author;
            src.notes = notes;
            src.added_at = timestamp()?;
            ensure_repo()?;
            store.update(|c| c.add_source(src.clone())).map_err(knowledge_err)?;
            if json {
                emit_json(&serde_json::to_value(&src).expect("source serializes"))?;
            } else {
                emit(&format!("added {}\n", source_line(&src)))?;
            }
        }
        KnowledgeAction::Remove { source_id } => {
            ensure_repo()?;
            let removed = store.update(|c| c.remove_source(&source_id)).map_err(knowledge_err)?;
            if json {
                emit_json(&serde_json::to_value(&removed).expect("source serializes"))?;
            } else {
                emit(&format!("removed {}\n", removed.source_id))?;
            }
        }
        KnowledgeAction::List { kind, flag } => {
            let kind: Option<SourceKind> = kind.map(|k| k.parse()).transpose().map_err(knowledge_err)?;
            let flag: Option<Flag> = flag.map(|f| f.parse()).transpose().map_err(knowledge_err)?;
            let catalog: KnowledgeCatalog = store.load().map_err(data)?;
            let sources = catalog.list_sources(kind, flag);
            if json {
                emit_json(&json!({ "schema": SOURCES_SCHEMA, "sources": sources }))?;
            } else {
                let mut out = String::new();
                for s in sources {
                    let _ = writeln!(out, "{}", source_line(s));
                }
                emit(&out)?;
            }
        }
        KnowledgeAction::Link { source_id, target, rationale } => {
            let target = parse_target(repo, &target)?;
            let link = TraceLink { source_id, target, rationale };
            ensure_repo()?;
            store.update(|c| c.link(link.clone())).map_err(knowledge_err)?;
            if json {
                emit_json(&serde_json::to_value(&link).expect("link serializes"))?;
            } else {
                emit(&format!("linked {} -> {}\n", link.source_id, link.target))?;
            }
        }
        KnowledgeAction::Unlink { source_id, target } => {
            let target = parse_target(repo, &target)?;
            ensure_repo()?;
            let link = store.update(|c| c.unlink(&source_id, &target)).map_err(knowledge_err)?;
            if json {
                emit_json(&serde_json::to_value(&link).expect("link serializes"))?;
            } else {
                emit(&format!("unlinked {} -> {}\n", link.source_id, link.target))?;
            }
        }
        KnowledgeAction::Score { source_id, weights } => {
            let weights = load_weights(weights.as_deref())?;
            let catalog = store.load().map_err(data)?;
            let src = catalog.source(&source_id).ok_or_else(|| data(format!("unknown source {source_id:?}")))?;
            let score = score_source(src, &weights);
            if json {
                emit_json(&json!({ "schema": SCORE_SCHEMA, "source_id": source_id, "score": score }))?;
            } else {
                let mut out = format!("{source_id}  {:.3}\n", score.value);
                for (flag, w) in &score.breakdown {
                    let _ = writeln!(out, "  {:<18}  {w:.3}", flag.as_str());
                }
                emit(&out)?;
            }
        }
        KnowledgeAction::For { target } => {
            let target = parse_target(repo, &target)?;
            let catalog = store.load().map_err(data)?;
            let weights = SuitabilityWeights::shipped();
            let pairs = catalog.sources_for(&target);
            if json {
                let items: Vec<Value> = pairs
                    .iter()
                    .map(|(src, link)| json!({ "source": src, "link": link, "suitability": score_source(src, &weights) }))
                    .collect();
                emit_json(&json!({ "schema": LINKS_SCHEMA, "target": target, "items": items }))?;
            } else {
                let mut out = String::new();
                for (src, link) in pairs {
                    let _ = writeln!(out, "{:.3}  {}", score_source(src, &weights).value, source_line(src));
                    if !link.rationale.is_empty() {
                        let _ = writeln!(out, "       {}", link.rationale);
                    }
                }
                emit(&out)?;
            }
        }
    }
    Ok(0)
}

fn serve_cmd(repo: &Path, port: u16, host: &str, index: Option<PathBuf>) -> Result<u8> {
    let mut service = Service::new(repo);
    let index_path = match index {
        Some(p) if !p.exists() => return Err(data(format!("no index at {}", p.display()))),
        Some(p) => Some(p),
        None => Some(repo.join(INDEX_FILE)).filter(|p| p.exists()),
    };
    if let Some(p) = index_path {
        service = service.with_index(VectorIndex::load(&p).map_err(|e| data(format!("{}: {e}", p.display())))?);
    }
    let loopback = host == "localhost" || host.parse::<std::net::IpAddr>().is_ok_and(|ip| ip.is_loopback());
    if !loopback {
        eprintln!("warning: serving on {host} exposes the repository to the network without authentication");
    }
    let addr = if host.contains(':') && !host.starts_with('[') { format!("[{host}]:{port}") } else { format!("{host}:{port}") };
    let handle = serve(service, &addr).map_err(data)?;
    emit(&format!("listening on http://{}\n", handle.addr()))?;
    handle.join();
    Ok(0)
}
