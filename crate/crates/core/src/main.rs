use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use actinf::config::{self, AgentMode, Overrides};
use actinf::runner::{compare_modes, run_experiment};
use actinf::Error;

#[derive(Parser)]
#[command(
    name = "actinf",
    version,
    about = "Discrete active inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run several agent modes from the same seed and tabulate them.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Modes to run (default: all three).
        #[arg(long, value_delimiter = ',')]
        modes: Vec<AgentMode>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<AgentMode>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compute exact posteriors each step and write geometry.csv.
    #[arg(long, value_name = "BOOL")]
    enable_exact_oracle: Option<bool>,
    /// Largest free-assignment space that may be enumerated.
    #[arg(long, value_name = "N")]
    enum_cap: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            steps: self.steps,
            mode: self.mode,
            gamma: self.gamma,
            out: self.out.clone(),
            exact_oracle: self.enable_exact_oracle,
            enum_cap: self.enum_cap,
        }
    }
}

fn report(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let mut source = std::error::Error::source(e);
    while let Some(inner) = source {
        eprintln!("  caused by: {inner}");
        source = inner.source();
    }
    match e {
        Error::Config(_) | Error::Invalid { .. } | Error::Io { .. } => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => config::load(&common.config, &common.overrides()).and_then(|exp| {
            let out = run_experiment(&exp)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            Ok(())
        }),
        Command::Compare { common, modes } => config::load(&common.config, &common.overrides())
            .and_then(|exp| {
                let modes = if modes.is_empty() {
                    AgentMode::ALL.to_vec()
                } else {
                    modes.clone()
                };
                let runs = compare_modes(&exp.config, &modes)?;
                for (mode, run) in &runs {
                    let actions: Vec<String> =
                        run.steps.iter().map(|s| s.action.to_string()).collect();
                    println!("{:<20} actions {}", mode.name(), actions.join(" "));
                }
                println!(
                    "{}",
                    exp.config
                        .output
                        .dir
                        .join(actinf::runner::COMPARISON_FILE)
                        .display()
                );
                Ok(())
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
