use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hrm_core::baseline::Architecture;
use hrm_core::harness::{
    compare, execute, read_structured, run_experiment, write_comparison, write_csv, write_structured, write_trace,
    Config, HarnessError, ScenarioScript,
};
use hrm_core::rm::Accounting;

#[derive(Parser)]
#[command(
    name = "hrm",
    version,
    about = "Hierarchical resilience management experiments on a simulated sorting line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Hierarchical,
    Centralized,
    Decentralized,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccountingArg {
    ScenarioOrigin,
    Physical,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Structured,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script and write a report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Script file, or `canonical`.
        #[arg(long, default_value = "canonical")]
        scenario: String,
        #[arg(long, value_enum, default_value = "hierarchical")]
        arch: ArchArg,
        #[arg(long, value_enum, default_value = "scenario-origin")]
        accounting: AccountingArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "structured")]
        format: FormatArg,
    },
    /// Check the contract hierarchy and the plant configuration.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare structured reports produced from the same config and script.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the plant event log and the manager message and decision logs.
    Trace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "canonical")]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, HarnessError> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            scenario,
            arch,
            accounting,
            out,
            format,
        } => {
            let config = load_config(config.as_deref())?;
            let script = ScenarioScript::resolve(&scenario)?;
            let arch = match arch {
                ArchArg::Hierarchical => Architecture::Hierarchical,
                ArchArg::Centralized => Architecture::Centralized,
                ArchArg::Decentralized => Architecture::Decentralized,
            };
            let accounting = match accounting {
                AccountingArg::ScenarioOrigin => Accounting::ScenarioOrigin,
                AccountingArg::Physical => Accounting::Physical,
            };
            let report = run_experiment(&config, &script, arch, accounting)?;
            let text = match format {
                FormatArg::Structured => write_structured(&report),
                FormatArg::Csv => write_csv(&report)?,
            };
            emit(out.as_deref(), &text)
        }
        Command::Validate { config } => {
            let config = load_config(config.as_deref())?;
            let report = config.validate();
            for line in &report.lines {
                println!("{line}");
            }
            if report.passed {
                println!("validate: PASS");
                Ok(())
            } else {
                println!("validate: FAIL");
                Err(HarnessError::Validation("configuration failed validation".into()))
            }
        }
        Command::Compare { reports, out } => {
            let mut parsed = Vec::new();
            for p in &reports {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
                parsed.push(read_structured(&text)?);
            }
            let savings = compare(&parsed)?;
            emit(out.as_deref(), &write_comparison(&savings))
        }
        Command::Trace { config, scenario, out } => {
            let config = load_config(config.as_deref())?;
            let script = ScenarioScript::resolve(&scenario)?;
            let exec = execute(&config, &script)?;
            emit(out.as_deref(), &write_trace(&exec))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hrm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
