//! Heuristic def/use extraction for a single code cell.
//!
//! Statement-level rules over the token stream: assignment targets (plain,
//! tuple, annotated, chained), augmented assignment, `for` and `with ... as`
//! targets, `except ... as`, imports, `def`/`class`, walrus. Names bound inside
//! function and class bodies are local to that body. Known approximations:
//! `global`/`nonlocal` are ignored, star-imports bind nothing, and attribute or
//! subscript assignment (`df["c"] = ...`) counts as a read plus a rebind of the
//! base name.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::lexer::{tokenize, Token, TokenKind};

const EXCLUDED_NAMES: &str = include_str!("../../data/excluded-names.txt");

/// Keywords and builtins that never enter a def/use set.
#[derive(Debug, Clone)]
pub struct ExcludedNames {
    keywords: HashSet<String>,
    builtins: HashSet<String>,
}

impl ExcludedNames {
    pub fn parse(text: &str) -> Self {
        let mut keywords = HashSet::new();
        let mut builtins = HashSet::new();
        let mut section = "";
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = if name == "keywords" { "keywords" } else { "builtins" };
                continue;
            }
            if section == "keywords" {
                keywords.insert(line.to_string());
            } else {
                builtins.insert(line.to_string());
            }
        }
        ExcludedNames { keywords, builtins }
    }

    /// The shipped list.
    pub fn shipped() -> &'static ExcludedNames {
        static NAMES: OnceLock<ExcludedNames> = OnceLock::new();
        NAMES.get_or_init(|| ExcludedNames::parse(EXCLUDED_NAMES))
    }

    pub fn is_keyword(&self, name: &str) -> bool {
        self.keywords.contains(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.keywords.contains(name) || self.builtins.contains(name)
    }

    pub fn len(&self) -> usize {
        self.keywords.len() + self.builtins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSet {
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
}

/// An identifier occurring outside import statements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Identifier {
    pub text: String,
    /// Directly followed by `(`.
    pub is_call: bool,
    /// Preceded by `.`.
    pub is_attribute: bool,
}

/// Everything the downstream analyses need from one code cell.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CellAnalysis {
    pub symbols: SymbolSet,
    /// Cell-level names read after the cell itself bound them.
    pub reads_after_def: BTreeSet<String>,
    pub import_statements: usize,
    pub other_statements: usize,
    pub identifiers: Vec<Identifier>,
    /// Bodies of string literals, in source order.
    pub string_literals: Vec<String>,
}

impl CellAnalysis {
    pub fn is_import_only(&self) -> bool {
        self.import_statements > 0 && self.other_statements == 0
    }

    /// Occurrences of each non-attribute identifier.
    pub fn name_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for ident in self.identifiers.iter().filter(|i| !i.is_attribute) {
            *counts.entry(ident.text.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

pub fn extract_symbols(source: &str) -> SymbolSet {
    analyze_cell(source).symbols
}

pub fn analyze_cell(source: &str) -> CellAnalysis {
    let mut analyzer = Analyzer {
        names: ExcludedNames::shipped(),
        scopes: Vec::new(),
        bound: HashSet::new(),
        out: CellAnalysis::default(),
    };
    for line in tokenize(source) {
        while analyzer.scopes.last().is_some_and(|s| line.indent <= s.indent) {
            analyzer.scopes.pop();
        }
        for stmt in split_top_level(&line.tokens, ";") {
            analyzer.statement(stmt, line.indent, true);
        }
    }
    analyzer.out
}

struct Scope {
    indent: usize,
    locals: HashSet<String>,
}

struct Analyzer<'n> {
    names: &'n ExcludedNames,
    scopes: Vec<Scope>,
    bound: HashSet<String>,
    out: CellAnalysis,
}

const AUGMENTED: &[&str] = &["+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@="];

impl<'n> Analyzer<'n> {
    fn statement(&mut self, toks: &[Token<'_>], indent: usize, count: bool) {
        let Some(first) = toks.first() else { return };
        let is_import = first.is_name("import") || (first.is_name("from") && toks.iter().any(|t| t.is_name("import")));
        if count {
            if is_import {
                self.out.import_statements += 1;
            } else {
                self.out.other_statements += 1;
            }
        }
        if !is_import {
            self.record_surface(toks);
        }

        if first.kind == TokenKind::Op && first.text == "@" {
            self.reads(&toks[1..]);
            return;
        }
        if first.kind != TokenKind::Name {
            self.simple(toks);
            return;
        }
        match first.text {
            "import" => self.import(&toks[1..]),
            "from" if is_import => self.from_import(toks),
            "async" => self.statement(&toks[1..], indent, false),
            "def" => self.function(toks, indent),
            "class" => self.class(toks, indent),
            "for" => {
                let (header, rest) = split_header(&toks[1..]);
                match find_top_level(header, |t| t.is_name("in")) {
                    Some(pos) => {
                        self.reads(&header[pos + 1..]);
                        self.targets(&header[..pos]);
                    }
                    None => self.reads(header),
                }
                self.statement(rest, indent, false);
            }
            "if" | "elif" | "while" => {
                let (header, rest) = split_header(&toks[1..]);
                self.reads(header);
                self.statement(rest, indent, false);
            }
            "else" | "try" | "finally" => {
                let (_, rest) = split_header(&toks[1..]);
                self.statement(rest, indent, false);
            }
            "except" => {
                let (header, rest) = split_header(&toks[1..]);
                match find_top_level(header, |t| t.is_name("as")) {
                    Some(pos) => {
                        self.reads(&header[..pos]);
                        self.targets(&header[pos + 1..]);
                    }
                    None => self.reads(header),
                }
                self.statement(rest, indent, false);
            }
            "with" => {
                let (mut header, rest) = split_header(&toks[1..]);
                if header.first().is_some_and(|t| t.is_op("("))
                    && matching_close(header, 0) == Some(header.len() - 1)
                {
                    header = &header[1..header.len() - 1];
                }
                for item in split_top_level(header, ",") {
                    match find_top_level(item, |t| t.is_name("as")) {
                        Some(pos) => {
                            self.reads(&item[..pos]);
                            self.targets(&item[pos + 1..]);
                        }
                        None => self.reads(item),
                    }
                }
                self.statement(rest, indent, false);
            }
            "global" | "nonlocal" | "pass" | "break" | "continue" => {}
            "match" if toks.len() > 1 && toks.last().is_some_and(|t| t.is_op(":")) && toks[1].kind != TokenKind::Op => {
                self.reads(&toks[1..toks.len() - 1]);
            }
            "case" if toks.len() > 1 && toks[1].kind != TokenKind::Op => {
                let (_, rest) = split_header(&toks[1..]);
                self.statement(rest, indent, false);
            }
            _ => self.simple(toks),
        }
    }

    fn record_surface(&mut self, toks: &[Token<'_>]) {
        for (i, tok) in toks.iter().enumerate() {
            match tok.kind {
                TokenKind::Name if !self.names.is_keyword(tok.text) => {
                    self.out.identifiers.push(Identifier {
                        text: tok.text.to_string(),
                        is_call: toks.get(i + 1).is_some_and(|n| n.is_op("(")),
                        is_attribute: i > 0 && toks[i - 1].is_op("."),
                    });
                }
                TokenKind::Str => {
                    if let Some(body) = tok.string_body() {
                        self.out.string_literals.push(body.to_string());
                    }
                }
                _ => {}
            }
        }
    }

    fn simple(&mut self, toks: &[Token<'_>]) {
        if let Some(pos) = find_top_level(toks, |t| t.kind == TokenKind::Op && AUGMENTED.contains(&t.text)) {
            self.reads(&toks[pos + 1..]);
            self.targets_mutating(&toks[..pos]);
            return;
        }
        let segments = split_top_level(toks, "=");
        if segments.len() >= 2 {
            let (value, targets) = segments.split_last().expect("at least two segments");
            self.reads(value);
            for target in targets {
                match find_top_level(target, |t| t.is_op(":")) {
                    Some(colon) => {
                        self.reads(&target[colon + 1..]);
                        self.targets(&target[..colon]);
                    }
                    None => self.targets(target),
                }
            }
            return;
        }
        // Bare annotation `x: int` declares without binding.
        if toks.len() >= 2 && toks[0].kind == TokenKind::Name && toks[1].is_op(":") {
            self.reads(&toks[2..]);
            return;
        }
        self.reads(toks);
    }

    fn import(&mut self, toks: &[Token<'_>]) {
        for item in split_top_level(toks, ",") {
            match find_top_level(item, |t| t.is_name("as")) {
                Some(pos) => {
                    if let Some(alias) = item.get(pos + 1).filter(|t| t.kind == TokenKind::Name) {
                        self.bind(alias.text);
                    }
                }
                None => {
                    if let Some(head) = item.first().filter(|t| t.kind == TokenKind::Name) {
                        self.bind(head.text);
                    }
                }
            }
        }
    }

    fn from_import(&mut self, toks: &[Token<'_>]) {
        let Some(pos) = toks.iter().position(|t| t.is_name("import")) else { return };
        let names: Vec<Token<'_>> = toks[pos + 1..].iter().filter(|t| !t.is_open() && !t.is_close()).cloned().collect();
        for item in split_top_level(&names, ",") {
            let bound = match find_top_level(item, |t| t.is_name("as")) {
                Some(p) => item.get(p + 1),
                None => item.first(),
            };
            if let Some(tok) = bound.filter(|t| t.kind == TokenKind::Name) {
                self.bind(tok.text);
            }
        }
    }

    fn function(&mut self, toks: &[Token<'_>], indent: usize) {
        let Some(name) = toks.get(1).filter(|t| t.kind == TokenKind::Name) else {
            return;
        };
        let mut params = HashSet::new();
        let mut after_params = 2;
        if toks.get(2).is_some_and(|t| t.is_op("(")) {
            let close = matching_close(toks, 2).unwrap_or(toks.len());
            for param in split_top_level(&toks[3..close.min(toks.len())], ",") {
                let param: &[Token<'_>] = {
                    let skip = param.iter().take_while(|t| t.kind == TokenKind::Op).count();
                    &param[skip..]
                };
                if let Some(p) = param.first().filter(|t| t.kind == TokenKind::Name) {
                    params.insert(p.text.to_string());
                }
                if let Some(eq) = find_top_level(param, |t| t.is_op("=")) {
                    if let Some(colon) = find_top_level(&param[..eq], |t| t.is_op(":")) {
                        self.reads(&param[colon + 1..eq]);
                    }
                    self.reads(&param[eq + 1..]);
                } else if let Some(colon) = find_top_level(param, |t| t.is_op(":")) {
                    self.reads(&param[colon + 1..]);
                }
            }
            after_params = close + 1;
        }
        let (header, rest) = split_header(toks.get(after_params..).unwrap_or(&[]));
        if header.first().is_some_and(|t| t.is_op("->")) {
            self.reads(&header[1..]);
        }
        self.bind(name.text);
        self.scopes.push(Scope { indent, locals: params });
        self.statement(rest, indent, false);
    }

    fn class(&mut self, toks: &[Token<'_>], indent: usize) {
        let Some(name) = toks.get(1).filter(|t| t.kind == TokenKind::Name) else {
            return;
        };
        let (header, rest) = split_header(&toks[2..]);
        self.reads(header);
        self.bind(name.text);
        self.scopes.push(Scope { indent, locals: HashSet::new() });
        self.statement(rest, indent, false);
    }

    /// Reads every free name of an expression.
    fn reads(&mut self, toks: &[Token<'_>]) {
        let locals = expression_locals(toks);
        let mut walrus = Vec::new();
        let mut brackets: Vec<&str> = Vec::new();
        for (i, tok) in toks.iter().enumerate() {
            if tok.is_open() {
                brackets.push(tok.text);
                continue;
            }
            if tok.is_close() {
                brackets.pop();
                continue;
            }
            if tok.kind == TokenKind::Str {
                self.format_string_reads(tok);
                continue;
            }
            if tok.kind != TokenKind::Name || self.names.contains(tok.text) || locals.contains(tok.text) {
                continue;
            }
            if i > 0 && toks[i - 1].is_op(".") {
                continue;
            }
            let next = toks.get(i + 1);
            if next.is_some_and(|n| n.is_op("=")) && brackets.last() == Some(&"(") {
                continue; // keyword argument
            }
            if next.is_some_and(|n| n.is_op(":=")) {
                walrus.push(tok.text);
                continue;
            }
            self.read(tok.text);
        }
        for name in walrus {
            self.bind(name);
        }
    }

    fn format_string_reads(&mut self, tok: &Token<'_>) {
        let prefix_end = tok.text.find(['\'', '"']).unwrap_or(0);
        if !tok.text[..prefix_end].contains(['f', 'F']) {
            return;
        }
        let Some(body) = tok.string_body() else { return };
        for expr in format_expressions(body) {
            for line in tokenize(expr) {
                self.reads(&line.tokens);
            }
        }
    }

    /// Binds assignment targets; names used as a subscript or attribute base are
    /// read and rebound, names inside subscripts or calls are read.
    fn targets(&mut self, toks: &[Token<'_>]) {
        self.targets_with(toks, false);
    }

    fn targets_mutating(&mut self, toks: &[Token<'_>]) {
        self.targets_with(toks, true);
    }

    fn targets_with(&mut self, toks: &[Token<'_>], augmented: bool) {
        let mut stack: Vec<bool> = Vec::new();
        for (i, tok) in toks.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| &toks[j]);
            if tok.is_open() {
                let postfix = prev.is_some_and(|p| {
                    (p.kind == TokenKind::Name && !self.names.is_keyword(p.text)) || p.is_close() || p.kind == TokenKind::Str
                });
                stack.push(postfix || tok.text == "{");
                continue;
            }
            if tok.is_close() {
                stack.pop();
                continue;
            }
            if tok.kind != TokenKind::Name || self.names.contains(tok.text) {
                continue;
            }
            if prev.is_some_and(|p| p.is_op(".")) {
                continue;
            }
            if stack.iter().any(|&index| index) {
                self.read(tok.text);
                continue;
            }
            match toks.get(i + 1) {
                Some(n) if n.is_op(".") || n.is_op("[") => self.mutate(tok.text),
                Some(n) if n.is_op("(") => self.read(tok.text),
                _ if augmented => self.mutate(tok.text),
                _ => self.bind(tok.text),
            }
        }
    }

    fn read(&mut self, name: &str) {
        if self.names.contains(name) || self.scopes.iter().any(|s| s.locals.contains(name)) {
            return;
        }
        if self.bound.contains(name) {
            self.out.reads_after_def.insert(name.to_string());
        } else {
            self.out.symbols.uses.insert(name.to_string());
        }
    }

    fn bind(&mut self, name: &str) {
        if self.names.contains(name) {
            return;
        }
        if let Some(scope) = self.scopes.last_mut() {
            scope.locals.insert(name.to_string());
        } else {
            self.bound.insert(name.to_string());
            self.out.symbols.defs.insert(name.to_string());
        }
    }

    fn mutate(&mut self, name: &str) {
        self.read(name);
        self.bind(name);
    }
}

/// Comprehension variables and lambda parameters of an expression.
fn expression_locals<'a>(toks: &[Token<'a>]) -> HashSet<&'a str> {
    let mut locals = HashSet::new();
    let mut i = 0;
    while i < toks.len() {
        let tok = &toks[i];
        let terminator: Option<fn(&Token<'_>) -> bool> = if tok.is_name("for") {
            Some(|t| t.is_name("in"))
        } else if tok.is_name("lambda") {
            Some(|t| t.is_op(":"))
        } else {
            None
        };
        if let Some(stop) = terminator {
            let mut depth = 0usize;
            let mut j = i + 1;
            while j < toks.len() {
                let t = &toks[j];
                if depth == 0 && stop(t) {
                    break;
                }
                if t.is_open() {
                    depth += 1;
                } else if t.is_close() {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                } else if t.kind == TokenKind::Name {
                    locals.insert(t.text);
                }
                j += 1;
            }
            i = j;
        }
        i += 1;
    }
    locals
}

/// Replacement-field expressions of an f-string body.
fn format_expressions(body: &str) -> Vec<&str> {
    let bytes = body.as_bytes();
    let mut exprs = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => i += 2,
            b'{' => {
                let start = i + 1;
                let mut depth = 0usize;
                let mut end = None;
                let mut j = start;
                while j < bytes.len() {
                    match bytes[j] {
                        b'(' | b'[' | b'{' => depth += 1,
                        b')' | b']' => depth = depth.saturating_sub(1),
                        b'}' if depth == 0 => {
                            end.get_or_insert(j);
                            break;
                        }
                        b'}' => depth -= 1,
                        b'!' if depth == 0 && bytes.get(j + 1) != Some(&b'=') => {
                            end.get_or_insert(j);
                        }
                        b':' if depth == 0 => {
                            end.get_or_insert(j);
                        }
                        _ => {}
                    }
                    j += 1;
                }
                let stop = end.unwrap_or(j).min(bytes.len());
                if let Some(expr) = body.get(start..stop) {
                    exprs.push(expr);
                }
                i = j + 1;
            }
            _ => i += 1,
        }
    }
    exprs
}

fn split_header<'t, 'a>(toks: &'t [Token<'a>]) -> (&'t [Token<'a>], &'t [Token<'a>]) {
    match find_top_level(toks, |t| t.is_op(":")) {
        Some(pos) => (&toks[..pos], &toks[pos + 1..]),
        None => (toks, &[]),
    }
}

fn find_top_level(toks: &[Token<'_>], pred: impl Fn(&Token<'_>) -> bool) -> Option<usize> {
    let mut depth = 0usize;
    for (i, tok) in toks.iter().enumerate() {
        if tok.is_open() {
            depth += 1;
        } else if tok.is_close() {
            depth = depth.saturating_sub(1);
        } else if depth == 0 && pred(tok) {
            return Some(i);
        }
    }
    None
}

fn split_top_level<'t, 'a>(toks: &'t [Token<'a>], sep: &str) -> Vec<&'t [Token<'a>]> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, tok) in toks.iter().enumerate() {
        if tok.is_open() {
            depth += 1;
        } else if tok.is_close() {
            depth = depth.saturating_sub(1);
        } else if depth == 0 && tok.is_op(sep) {
            parts.push(&toks[start..i]);
            start = i + 1;
        }
    }
    parts.push(&toks[start..]);
    parts.retain(|p| !p.is_empty());
    parts
}

fn matching_close(toks: &[Token<'_>], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, tok) in toks.iter().enumerate().skip(open) {
        if tok.is_open() {
            depth += 1;
        } else if tok.is_close() {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        }
    }
    None
}
