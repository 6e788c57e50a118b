use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skillbank::config::RunConfig;
use skillbank::eval::GraderKind;
use skillbank::pipeline::{self, PipelineError};

#[derive(Parser)]
#[command(name = "skillbank", version, about = "Accumulate and apply agent skills and experiences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Phase I over the train split and write a knowledge base.
    Accumulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        grader: Option<GraderKind>,
    },
    /// Run the agent over the test split, with or without knowledge.
    Infer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        no_knowledge: bool,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        grader: Option<GraderKind>,
    },
    /// Compute metrics for an infer run directory.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        /// Regrade stored answers instead of using stored grades.
        #[arg(long)]
        grader: Option<GraderKind>,
    },
    /// Knowledge base utilities.
    Kb {
        #[command(subcommand)]
        action: KbAction,
    },
}

#[derive(Subcommand)]
enum KbAction {
    /// Print a summary of a knowledge base directory.
    Inspect {
        kb_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check store invariants; exits nonzero on any violation.
    Validate {
        kb_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, rollouts: Option<usize>, grader: Option<GraderKind>) -> Result<RunConfig, PipelineError> {
    let mut config = RunConfig::load(path)?;
    if let Some(n) = rollouts {
        config.rollouts = n.max(1);
    }
    if let Some(g) = grader {
        config.grader = g;
    }
    Ok(config)
}

fn optional_config(path: &Option<PathBuf>) -> Result<RunConfig, PipelineError> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    match cli.command {
        Command::Accumulate { config, run_dir, rollouts, grader } => {
            let config = load(&config, rollouts, grader)?;
            print_json(&pipeline::cmd_accumulate(&config, run_dir.as_deref())?);
        }
        Command::Infer { config, run_dir, no_knowledge, rollouts, grader } => {
            let config = load(&config, rollouts, grader)?;
            print_json(&pipeline::cmd_infer(&config, run_dir.as_deref(), no_knowledge)?);
        }
        Command::Eval { run_dir, grader } => {
            print!("{}", pipeline::cmd_eval(&run_dir, grader)?.table());
        }
        Command::Kb { action: KbAction::Inspect { kb_dir, config } } => {
            let config = optional_config(&config)?;
            print_json(&pipeline::cmd_kb_inspect(&kb_dir, &config.namespace)?);
        }
        Command::Kb { action: KbAction::Validate { kb_dir, config } } => {
            let config = optional_config(&config)?;
            let violations = pipeline::cmd_kb_validate(&kb_dir, &config.namespace, config.max_experiences);
            if !violations.is_empty() {
                eprintln!("{}", serde_json::json!({"error": "invariant_violation", "violations": violations}));
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
