//! Short textual descriptions of activities: an optional external generator
//! with a deterministic template fallback.

use std::io::Write;
use std::process::{Command, Stdio};

use super::activity::ActivityCategory;
use super::symbols::SymbolSet;

#[derive(Debug, thiserror::Error)]
#[error("text generator unavailable: {0}")]
pub struct GeneratorUnavailable(pub String);

/// Anything that turns a prompt into text, e.g. a language model behind a CLI.
pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorUnavailable>;
}

/// Runs a shell command with the prompt on stdin and reads the reply from stdout.
#[derive(Debug, Clone)]
pub struct CommandGenerator {
    pub command: String,
}

impl TextGenerator for CommandGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GeneratorUnavailable> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| GeneratorUnavailable(e.to_string()))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin.write_all(prompt.as_bytes()).map_err(|e| GeneratorUnavailable(e.to_string()))?;
        }
        let output = child.wait_with_output().map_err(|e| GeneratorUnavailable(e.to_string()))?;
        if !output.status.success() {
            return Err(GeneratorUnavailable(format!("generator exited with {}", output.status)));
        }
        String::from_utf8(output.stdout).map_err(|e| GeneratorUnavailable(e.to_string()))
    }
}

pub fn prompt(source: &str, category: ActivityCategory) -> String {
    format!(
        "Describe in one sentence what this notebook cell does. Its activity category is {category}.\n\n{source}\n"
    )
}

/// `"<category> step defining <defs> using <uses>"`, sets rendered sorted;
/// empty parts are omitted.
pub fn template_description(category: ActivityCategory, symbols: &SymbolSet) -> String {
    let mut text = format!("{category} step");
    if !symbols.defs.is_empty() {
        text.push_str(" defining ");
        text.push_str(&symbols.defs.iter().cloned().collect::<Vec<_>>().join(", "));
    }
    if !symbols.uses.is_empty() {
        text.push_str(" using ");
        text.push_str(&symbols.uses.iter().cloned().collect::<Vec<_>>().join(", "));
    }
    text
}

pub fn describe_activity(
    source: &str,
    category: ActivityCategory,
    symbols: &SymbolSet,
    generator: Option<&dyn TextGenerator>,
) -> String {
    generator
        .and_then(|g| g.generate(&prompt(source, category)).ok())
        .and_then(|reply| first_sentence(&reply))
        .unwrap_or_else(|| template_description(category, symbols))
}

/// First sentence of the first non-blank line.
pub fn first_sentence(text: &str) -> Option<String> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    let mut end = line.len();
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
            end = i + c.len_utf8();
            break;
        }
    }
    Some(line[..end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::symbols::extract_symbols;

    struct Fixed(&'static str);
    impl TextGenerator for Fixed {
        fn generate(&self, _: &str) -> Result<String, GeneratorUnavailable> {
            Ok(self.0.to_string())
        }
    }

    struct Down;
    impl TextGenerator for Down {
        fn generate(&self, _: &str) -> Result<String, GeneratorUnavailable> {
            Err(GeneratorUnavailable("connection refused".into()))
        }
    }

    #[test]
    fn template_without_generator() {
        let symbols = extract_symbols("a = f(b)");
        assert_eq!(
            describe_activity("a = f(b)", ActivityCategory::Other, &symbols, None),
            "Other step defining a using b, f"
        );
    }

    #[test]
    fn unreachable_generator_falls_back() {
        let symbols = extract_symbols("a = f(b)");
        assert_eq!(
            describe_activity("a = f(b)", ActivityCategory::Other, &symbols, Some(&Down)),
            "Other step defining a using b, f"
        );
    }

    #[test]
    fn multi_line_reply_is_truncated() {
        let symbols = extract_symbols("x = 1");
        let reply = Fixed("\nLoads the data. Then it cleans it.\nSecond line.");
        assert_eq!(describe_activity("x = 1", ActivityCategory::Other, &symbols, Some(&reply)), "Loads the data.");
    }

    #[test]
    fn blank_reply_falls_back() {
        let symbols = extract_symbols("x = 1");
        assert_eq!(
            describe_activity("x = 1", ActivityCategory::Setup, &symbols, Some(&Fixed("  \n"))),
            "Setup step defining x"
        );
    }

    #[test]
    fn decimals_do_not_end_sentences() {
        assert_eq!(first_sentence("Scores 0.93 on test. Done").as_deref(), Some("Scores 0.93 on test."));
    }

    #[test]
    fn command_generator() {
        let g = CommandGenerator { command: "echo 'Trains a model. extra'".into() };
        let symbols = extract_symbols("m.fit(X)");
        assert_eq!(describe_activity("m.fit(X)", ActivityCategory::Modeling, &symbols, Some(&g)), "Trains a model.");
        let broken = CommandGenerator { command: "exit 3".into() };
        assert_eq!(
            describe_activity("m.fit(X)", ActivityCategory::Modeling, &symbols, Some(&broken)),
            "Modeling step using X, m"
        );
    }
}
