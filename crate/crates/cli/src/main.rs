use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlre_cli::config::parse_value;
use nlre_cli::error::CliError;
use nlre_cli::output::output_root;

#[derive(Parser)]
#[command(name = "nlre", version, about = "Run nonlinear reservoir engineering scenarios from config files")]
struct Cli {
    /// Output root; defaults to NLRE_OUT_DIR, then ./nlre-out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config (or the sweep stored in it).
    Run { config: PathBuf },
    /// Re-run a config over values of one config path, e.g. `scheme.h_star`.
    Sweep {
        config: PathBuf,
        /// Dotted config path; join several with `+` to set them together.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values, each read as a TOML literal.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let root = output_root(cli.out);
    let result = match cli.command {
        Command::Run { config } => nlre_cli::run_command(&config, &root, cli.jobs),
        Command::Sweep { config, axis, values } => {
            let values =
                values.map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse_value).collect());
            nlre_cli::sweep_command(&config, axis, values, cli.jobs, &root)
        }
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("nlre: {e}");
    ExitCode::from(e.exit_code() as u8)
}
