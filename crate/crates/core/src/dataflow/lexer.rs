//! A small tokenizer for notebook code cells (Python surface syntax).
//!
//! It produces logical lines: physical lines joined across open brackets and
//! backslash continuations, with comments dropped. IPython magics (`%`, `!`,
//! `?` lines) are skipped. Anything the lexer does not recognize becomes an
//! [`TokenKind::Other`] token and is ignored by the analyses.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    /// ASCII identifier or keyword.
    Name,
    Number,
    /// String literal, including prefix and quotes.
    Str,
    Op,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
}

impl<'a> Token<'a> {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_name(&self, name: &str) -> bool {
        self.kind == TokenKind::Name && self.text == name
    }

    pub fn is_open(&self) -> bool {
        self.kind == TokenKind::Op && matches!(self.text, "(" | "[" | "{")
    }

    pub fn is_close(&self) -> bool {
        self.kind == TokenKind::Op && matches!(self.text, ")" | "]" | "}")
    }

    /// Body of a string literal without prefix and quotes. Escapes are kept verbatim.
    pub fn string_body(&self) -> Option<&'a str> {
        if self.kind != TokenKind::Str {
            return None;
        }
        let text = self.text;
        let start = text.find(['\'', '"'])?;
        let quoted = &text[start..];
        for q in ["\"\"\"", "'''", "\"", "'"] {
            if quoted.len() >= 2 * q.len() && quoted.starts_with(q) && quoted.ends_with(q) {
                return Some(&quoted[q.len()..quoted.len() - q.len()]);
            }
        }
        // Unterminated literal at end of input.
        Some(quoted.trim_start_matches(['\'', '"']))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicalLine<'a> {
    /// Indentation column of the first physical line (tabs advance to multiples of 8).
    pub indent: usize,
    pub tokens: Vec<Token<'a>>,
}

const THREE_CHAR_OPS: &[&str] = &["**=", "//=", ">>=", "<<=", "..."];
const TWO_CHAR_OPS: &[&str] = &[
    "->", ":=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "**",
    "//", "<<", ">>",
];

/// Cell magics whose body is still Python.
const PYTHON_CELL_MAGICS: &[&str] = &["%%time", "%%timeit", "%%capture", "%%prun", "%%debug"];

pub fn tokenize(source: &str) -> Vec<LogicalLine<'_>> {
    let source = strip_cell_magic(source);
    Lexer { src: source, pos: 0 }.run()
}

fn strip_cell_magic(source: &str) -> &str {
    let trimmed = source.trim_start();
    if !trimmed.starts_with("%%") {
        return source;
    }
    let first_line_end = trimmed.find('\n').unwrap_or(trimmed.len());
    let magic = trimmed[..first_line_end].split_whitespace().next().unwrap_or("");
    if PYTHON_CELL_MAGICS.contains(&magic) {
        &trimmed[first_line_end..]
    } else {
        ""
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(offset)
    }

    fn run(mut self) -> Vec<LogicalLine<'a>> {
        let mut lines = Vec::new();
        let mut tokens: Vec<Token<'a>> = Vec::new();
        let mut depth: usize = 0;
        let mut at_line_start = true;
        let mut indent = 0;

        while self.pos < self.src.len() {
            if at_line_start && depth == 0 {
                indent = self.consume_indent();
                at_line_start = false;
                if tokens.is_empty() {
                    match self.peek() {
                        Some('%') | Some('!') | Some('?') => {
                            self.skip_to_eol();
                            continue;
                        }
                        _ => {}
                    }
                }
            }
            let Some(c) = self.peek() else { break };
            match c {
                '\n' => {
                    self.pos += 1;
                    if depth == 0 {
                        if !tokens.is_empty() {
                            lines.push(LogicalLine { indent, tokens: std::mem::take(&mut tokens) });
                        }
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' | '\x0c' => self.pos += 1,
                '#' => self.skip_to_eol(),
                '\\' if matches!(self.peek_at(1), Some('\n')) => self.pos += 2,
                '\\' if self.peek_at(1) == Some('\r') && self.peek_at(2) == Some('\n') => self.pos += 3,
                c if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) => {
                    tokens.push(self.number());
                }
                c if c == '\'' || c == '"' => tokens.push(self.string(self.pos)),
                c if c == '_' || c.is_alphanumeric() => {
                    let start = self.pos;
                    self.consume_while(|ch| ch == '_' || ch.is_alphanumeric());
                    let word = &self.src[start..self.pos];
                    if is_string_prefix(word) && matches!(self.peek(), Some('\'') | Some('"')) {
                        tokens.push(self.string(start));
                    } else {
                        let kind = if is_ascii_identifier(word) { TokenKind::Name } else { TokenKind::Other };
                        tokens.push(Token { kind, text: word });
                    }
                }
                _ => {
                    let tok = self.operator();
                    if tok.is_open() {
                        depth += 1;
                    } else if tok.is_close() {
                        depth = depth.saturating_sub(1);
                    }
                    tokens.push(tok);
                }
            }
        }
        if !tokens.is_empty() {
            lines.push(LogicalLine { indent, tokens });
        }
        lines
    }

    fn consume_indent(&mut self) -> usize {
        let mut col = 0;
        while let Some(c) = self.peek() {
            match c {
                ' ' => col += 1,
                '\t' => col = (col / 8 + 1) * 8,
                '\x0c' => col = 0,
                _ => break,
            }
            self.pos += 1;
        }
        col
    }

    fn consume_while(&mut self, pred: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn skip_to_eol(&mut self) {
        self.consume_while(|c| c != '\n');
    }

    fn number(&mut self) -> Token<'a> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                self.pos += 1;
                if (c == 'e' || c == 'E') && matches!(self.peek(), Some('+') | Some('-')) {
                    let prefix = &self.src[start..self.pos];
                    if !prefix.starts_with("0x") && !prefix.starts_with("0X") {
                        self.pos += 1;
                    }
                }
            } else {
                break;
            }
        }
        Token { kind: TokenKind::Number, text: &self.src[start..self.pos] }
    }

    fn string(&mut self, start: usize) -> Token<'a> {
        let quote = self.peek().expect("string starts with a quote");
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let raw = self.src[start..self.pos].chars().any(|c| c == 'r' || c == 'R');
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek() else { break };
            if c == '\\' && !raw {
                self.pos += 1;
                if let Some(n) = self.peek() {
                    self.pos += n.len_utf8();
                }
                continue;
            }
            if c == '\\' && raw {
                // Raw strings still cannot end on an escaped quote.
                self.pos += 1;
                if self.peek() == Some(quote) {
                    self.pos += 1;
                }
                continue;
            }
            if c == '\n' && !triple {
                break;
            }
            if c == quote {
                if triple {
                    if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                } else {
                    self.pos += 1;
                    break;
                }
            }
            self.pos += c.len_utf8();
        }
        Token { kind: TokenKind::Str, text: &self.src[start..self.pos] }
    }

    fn operator(&mut self) -> Token<'a> {
        let rest = &self.src[self.pos..];
        for op in THREE_CHAR_OPS.iter().chain(TWO_CHAR_OPS) {
            if rest.starts_with(op) {
                self.pos += op.len();
                return Token { kind: TokenKind::Op, text: &self.src[self.pos - op.len()..self.pos] };
            }
        }
        let c = rest.chars().next().expect("operator char");
        let start = self.pos;
        self.pos += c.len_utf8();
        let kind = if c.is_ascii_punctuation() { TokenKind::Op } else { TokenKind::Other };
        Token { kind, text: &self.src[start..self.pos] }
    }
}

fn is_string_prefix(word: &str) -> bool {
    word.len() <= 2 && word.chars().all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
}

pub fn is_ascii_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    matches!(chars.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && chars.all(|c| c == '_' || c.is_ascii_alphanumeric())
}
