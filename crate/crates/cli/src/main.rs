use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varembed_cli::{
    run, sweep, CliError, CliResult, PartialConfig, RunConfig, SweepParam, RESULT_SCHEMA,
};

#[derive(Parser)]
#[command(
    name = "varembed",
    version,
    about = "Lower bounds on lattice ground-state energies from the two-marginal SDP relaxation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one relaxation.
    Run {
        /// TOML file with any of the flag values (flags take precedence).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: PartialConfig,
    },
    /// Solve a grid of parameter values and cluster shapes.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parameter to vary.
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        /// Comma-separated cluster shapes (default: --cluster).
        #[arg(long, value_delimiter = ',')]
        clusters: Vec<String>,
        #[command(flatten)]
        flags: PartialConfig,
    },
    /// Print the JSON schema of result.json.
    Schema,
}

fn resolve(config: Option<PathBuf>, flags: PartialConfig) -> CliResult<RunConfig> {
    let file = match config {
        Some(p) => PartialConfig::from_toml_file(&p)?,
        None => PartialConfig::default(),
    };
    RunConfig::resolve(flags.over(file))
}

fn main_inner(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, flags } => {
            let cfg = resolve(config, flags)?;
            let rec = run(&cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&rec).map_err(|e| CliError::Config(e.to_string()))?
            );
        }
        Command::Sweep {
            config,
            param,
            values,
            clusters,
            flags,
        } => {
            let cfg = resolve(config, flags)?;
            let rows = sweep(&cfg, param, &values, &clusters)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} points, {failed} failed; table in {}",
                rows.len(),
                cfg.output_dir
                    .join(varembed_cli::sweep::SWEEP_FILE)
                    .display()
            );
        }
        Command::Schema => print!("{RESULT_SCHEMA}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
