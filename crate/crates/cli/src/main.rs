use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use kettlewatch_cli::run::{dispatch, RunManifest};
use kettlewatch_cli::{CliError, EXIT_VALIDATION};
use kettlewatch_core::experiments::Scenario;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    Zeno,
    AntiZeno,
    Converge,
    Residual,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Zeno => Scenario::Zeno,
            ScenarioArg::AntiZeno => Scenario::AntiZeno,
            ScenarioArg::Converge => Scenario::Converge,
            ScenarioArg::Residual => Scenario::Residual,
        }
    }
}

/// Simulate continuously watched quantum systems and write JSON/CSV reports.
#[derive(Debug, Parser)]
#[command(name = "kettlewatch", version)]
struct Args {
    scenario: ScenarioArg,
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and series.csv
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a config field, e.g. --set ode.step=1e-4 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KETTLEWATCH_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let manifest = RunManifest {
        config: args.config,
        out: args.out,
        scenario: args.scenario.into(),
        overrides: args.overrides,
        seed: args.seed,
    };
    match dispatch(&manifest) {
        Ok(_) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("ERROR: {}", message.replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
