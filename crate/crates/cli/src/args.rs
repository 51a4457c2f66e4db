use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "codial", version, about = "Compile dialogue-flow graphs into guardrail programs and run them")]
pub struct Cli {
    /// TOML or JSON settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a flow document and print its diagnostics.
    Validate { flow: PathBuf },
    /// Lower a flow into a guardrail program.
    Compile {
        flow: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the Colang rendering of a program or flow.
    EmitColang {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the RI1/RI2 consistency checks of a program against its flow.
    Lint {
        ir: PathBuf,
        #[arg(long)]
        flow: PathBuf,
        /// Also run the advisory RI3 checks.
        #[arg(long)]
        ri3: bool,
        /// Write a repaired program here.
        #[arg(long)]
        repair: Option<PathBuf>,
    },
    /// Generate Colang code with a language model.
    GenCode(GenCodeArgs),
    /// Talk to a program on the terminal.
    Chat(ChatArgs),
    /// Host conversations over HTTP.
    Serve(ServeArgs),
    /// Score a program against recorded conversations.
    Eval(EvalArgs),
    /// Rewrite slot extraction instructions against labelled turns.
    OptimizeDst(OptimizeArgs),
    /// Replace the extraction instruction of one slot in a program.
    SetInstruction {
        ir: PathBuf,
        #[arg(long)]
        slot: String,
        /// Instruction text; `@path` reads it from a file.
        #[arg(long)]
        text: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Args, Default)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Mock script: a JSON array of scripted replies.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCodeArgs {
    pub flow: PathBuf,
    #[arg(long, default_value = "structured")]
    pub paradigm: String,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Generation attempts before giving up.
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Refinement rounds to run after generation, e.g. `ri1,ri2`.
    #[arg(long, value_delimiter = ',')]
    pub refine: Vec<String>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Print the assembled prompt and stop.
    #[arg(long)]
    pub prompt_only: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub show_state: bool,
    #[arg(long)]
    pub show_trace: bool,
    /// Context placed before every model prompt.
    #[arg(long)]
    pub preamble: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Allowed browser origins, comma-separated; `*` allows any.
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[arg(long)]
    pub transcript_dir: Option<PathBuf>,
    /// Restore sessions from the transcript directory on startup.
    #[arg(long)]
    pub replay: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub input: PathBuf,
    /// Recorded conversations, one JSON object per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Flow document, needed when the input is a compiled program.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub oracle_state: bool,
    /// BLEU smoothing: `none` or `exp`.
    #[arg(long, alias = "bleu-smooth", default_value = "none")]
    pub smoothing: String,
    /// Dialogues evaluated at once; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Full per-turn report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Per-turn records as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Slots to optimize; all slots by default.
    #[arg(long = "slot")]
    pub slots: Vec<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Mock script for the rewriting model; defaults to the agent backend.
    #[arg(long)]
    pub optimizer_script: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub train: usize,
    #[arg(long, default_value_t = 50)]
    pub validation: usize,
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    /// Program with the best instructions applied.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Run histories as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
