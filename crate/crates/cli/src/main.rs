use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use climarisk_cli::{RunConfig, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "climarisk", about = "Climate-risk insurance, development and preservation pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Underwriting model: SMOTE, SVM, elasticities and the weather sweep.
    Insure {
        #[command(subcommand)]
        action: Action,
    },
    /// City clustering into build / no-build groups.
    Develop {
        #[command(subcommand)]
        action: Action,
    },
    /// Landmark scoring with TOPSIS-ORM and AHP weights.
    Preserve {
        #[command(subcommand)]
        action: Action,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the tool version.
    Version,
}

#[derive(Subcommand)]
enum Action {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Continue past an AHP matrix with CR > 0.1.
    #[arg(long)]
    allow_inconsistent: bool,
}

fn run(pipeline: &'static str, args: RunArgs) -> Result<(), RunError> {
    let config = RunConfig::load(&args.config)?;
    config.expect(pipeline)?;
    let opts = RunOptions {
        seed: args.seed,
        out: args.out,
        threads: args.threads,
        allow_inconsistent: args.allow_inconsistent,
    };
    climarisk_cli::run(config, &opts)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLIMARISK_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Insure {
            action: Action::Run(a),
        } => run("insure", a),
        Command::Develop {
            action: Action::Run(a),
        } => run("develop", a),
        Command::Preserve {
            action: Action::Run(a),
        } => run("preserve", a),
        Command::Validate { config } => RunConfig::load(&config)
            .and_then(|c| c.validate().map(|()| c))
            .map(|c| println!("{} config is valid", c.pipeline.name()))
            .map_err(RunError::from),
        Command::Version => {
            println!("climarisk {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
