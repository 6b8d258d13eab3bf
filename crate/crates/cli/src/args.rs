use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "protoml", version, about = "Notebook explainer, experiment recorder and reviewer for ML prototypes")]
pub struct Cli {
    /// Repository directory holding snapshots, the index and the knowledge catalog.
    #[arg(long, global = true, default_value = ".protoml")]
    pub repo: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dependency graph and activity flow of a notebook.
    Explain {
        notebook: PathBuf,
        /// Graphviz DOT output.
        #[arg(long, conflicts_with = "json")]
        dot: bool,
        /// flow/1 JSON output.
        #[arg(long)]
        json: bool,
        /// Shell command that turns a prompt on stdin into a description.
        #[arg(long, env = "PROTOML_DESCRIBE_CMD")]
        describe_cmd: Option<String>,
    },
    /// Checks a notebook against the rule catalog; exits 1 when an error-severity rule fails.
    Review {
        notebook: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Only report this persona's score.
        #[arg(long)]
        persona: Option<String>,
    },
    /// Records the notebook as a snapshot under the current head.
    Record {
        notebook: PathBuf,
        #[arg(long)]
        comment: Option<String>,
        /// Cell that triggered the snapshot; inferred from execution counts by default.
        #[arg(long)]
        trigger: Option<String>,
    },
    /// Polls a notebook file and records a snapshot on every cell execution.
    Watch {
        notebook: PathBuf,
        #[arg(long, default_value_t = 500)]
        interval_ms: u64,
        /// Stop after this many polls; runs until interrupted otherwise.
        #[arg(long)]
        max_polls: Option<u64>,
    },
    /// Lists snapshots.
    Log {
        #[arg(long)]
        tree: bool,
    },
    /// Moves head to a snapshot and writes its notebook.
    Checkout {
        node: String,
        /// Destination file; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cell-level differences between two snapshots.
    Diff { a: String, b: String },
    /// Attaches a comment to a snapshot, replacing any previous one.
    Annotate { node: String, text: String },
    /// Builds the recommendation index from a directory of notebooks.
    Index {
        corpus: PathBuf,
        /// Index file; defaults to `index.json` inside the repository.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Similar cells or notebooks from the index.
    Recommend {
        #[command(subcommand)]
        level: RecommendLevel,
    },
    /// Prototype card for a notebook.
    Card {
        notebook: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Manual fields as a JSON object of strings; defaults to `<notebook>.card.json` when present.
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Knowledge sources and trace links.
    Knowledge {
        #[command(subcommand)]
        action: KnowledgeAction,
    },
    /// Serves the JSON API.
    Serve {
        #[arg(long, default_value_t = 7333)]
        port: u16,
        /// Bind address. Anything but loopback exposes the repository without authentication.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct RecommendOpts {
    #[arg(short = 'k', long = "k", default_value_t = 5)]
    pub k: usize,
    /// Index file; defaults to `index.json` inside the repository.
    #[arg(long, conflicts_with = "corpus")]
    pub index: Option<PathBuf>,
    /// Build a throwaway index from this directory instead of loading one.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Leave the query notebook itself out of the results.
    #[arg(long)]
    pub exclude_self: bool,
}

#[derive(Subcommand, Debug)]
pub enum RecommendLevel {
    Cell {
        notebook: PathBuf,
        cell_id: String,
        #[command(flatten)]
        opts: RecommendOpts,
    },
    Notebook {
        notebook: PathBuf,
        #[command(flatten)]
        opts: RecommendOpts,
    },
}

#[derive(Subcommand, Debug)]
pub enum KnowledgeAction {
    Add {
        source_id: String,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        title: String,
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        author: Option<String>,
        /// Flag to set; repeatable.
        #[arg(long = "flag")]
        flags: Vec<String>,
        #[arg(long, default_value = "")]
        notes: String,
    },
    Remove {
        source_id: String,
    },
    List {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        flag: Option<String>,
    },
    /// Links a source to `notebook.ipynb#cell_id` or `snapshot:<node>`.
    Link {
        source_id: String,
        target: String,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    Unlink {
        source_id: String,
        target: String,
    },
    Score {
        source_id: String,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Sources traced to a cell or snapshot.
    For {
        target: String,
    },
}
