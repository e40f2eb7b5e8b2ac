mod bench;
mod error;
mod eval;
mod output;
mod preprocess;
mod retrieve;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use error::{code_of, fail, Outcome};

#[derive(Parser, Debug)]
#[command(
    name = "fgtr",
    version,
    about = "Fine-grained sub-table retrieval over multi-table databases"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Anything given here overrides the
/// environment and the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = "FGTR_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scripted chat responses: JSON map from prompt SHA-256 to reply.
    #[arg(long, global = true, value_name = "SCRIPT")]
    pub mock_llm: Option<PathBuf>,
    /// Use the deterministic hashing embedder instead of an HTTP endpoint.
    #[arg(long, global = true)]
    pub mock_embed: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Database file or CSV directory.
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    /// `sqlite` or `csv_dir`; guessed from the path when omitted.
    #[arg(long, global = true)]
    pub db_format: Option<String>,
    /// Artifact directory written by `preprocess`.
    #[arg(long, global = true)]
    pub artifacts: Option<PathBuf>,
    /// Directory of prompt template overrides.
    #[arg(long, global = true)]
    pub prompts: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k_iterations: Option<u32>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub merge_mode: Option<String>,
    #[arg(long, global = true)]
    pub row_cap: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Profile, describe and index a database.
    Preprocess,
    /// Retrieve the sub-tables relevant to one or more questions.
    Retrieve(retrieve::RetrieveArgs),
    /// Score retrieval output against gold standards.
    Eval(eval::EvalArgs),
    /// Build a benchmark from a Text-to-SQL dataset.
    BenchBuild(bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();

    let result = settings::load(&cli.global).and_then(|config| match &cli.command {
        Command::Preprocess => preprocess::run(&cli.global, &config),
        Command::Retrieve(args) => retrieve::run(&cli.global, &config, args),
        Command::Eval(args) => eval::run(&cli.global, args),
        Command::BenchBuild(args) => bench::run(&cli.global, &config, args),
    });
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            error::report(&e);
            ExitCode::from(2)
        }
    }
}
