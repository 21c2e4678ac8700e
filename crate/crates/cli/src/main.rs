use std::path::PathBuf;
use std::process::ExitCode;

use aefs_core::prompt::PromptVariant;
use clap::{Args, Parser, Subcommand};

mod config;
mod error;
mod io;
mod stages;

use config::{BackendKind, Overrides, RunConfig};
use error::CliError;
use stages::Ctx;

/// Explanation-generation pipeline for linear-equation solution steps.
#[derive(Parser)]
#[command(name = "aefs", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Prompt variant(s): traditional, assertion, extra, embedded.
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Vec<PromptVariant>,
    /// Completion backend.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<PromptVariant, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Read the tutoring log and report malformed rows.
    Ingest,
    /// Drop duplicate triples.
    Dedup,
    /// Draw the seeded sample of test inputs.
    Sample,
    /// Mark inputs seen/unseen against the demonstrations.
    Tag,
    /// Judge every input with the step oracle.
    Judge {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Prompt files for each configured variant.
    Prompt {
        #[command(subcommand)]
        command: PromptCommand,
    },
    /// Generate explanations for the tagged sample.
    Generate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Teacher Likert ratings.
    Ratings {
        #[command(subcommand)]
        command: RatingsCommand,
    },
    /// Turn aggregated ratings into per-stimulus scores.
    Score,
    /// One-way and two-way ANOVA over the scores.
    Stats {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// JSON and markdown report.
    Report {
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// All four prompt variants side by side.
    Ablate {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Restrict to these input ids.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// The whole pipeline, ingest through report.
    Run,
}

#[derive(Subcommand)]
enum PromptCommand {
    /// Write prompt text files.
    Build {
        /// An input id from the tagged sample, or a file of inputs.
        #[arg(long)]
        input: Option<String>,
    },
}

#[derive(Subcommand)]
enum RatingsCommand {
    /// Validate and aggregate a ratings CSV.
    Import {
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let overrides = Overrides { seed: g.seed, variants: g.variant, backend: g.backend, out: g.out };
    let ctx = Ctx::new(RunConfig::load(g.config.as_deref(), &overrides)?);
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Dedup => stages::dedup(&ctx),
        Command::Sample => stages::sample(&ctx),
        Command::Tag => stages::tag(&ctx),
        Command::Judge { input } => stages::judge(&ctx, input.as_deref()),
        Command::Prompt { command: PromptCommand::Build { input } } => stages::prompt_build(&ctx, input.as_deref()),
        Command::Generate { input } => stages::generate(&ctx, input.as_deref()),
        Command::Ratings { command: RatingsCommand::Import { file } } => stages::ratings_import(&ctx, file.as_deref()),
        Command::Score => stages::score(&ctx),
        Command::Stats { scores } => stages::stats(&ctx, scores.as_deref()),
        Command::Report { scores } => stages::report(&ctx, scores.as_deref()),
        Command::Ablate { input, ids } => stages::ablate(&ctx, input.as_deref(), &ids),
        Command::Run => stages::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
