//! Command-line front end: runs named scenarios against a JSON config and
//! writes CSV/JSON reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 i/o
//! error.

use clap::Parser;
use entmux::scenario::{emit_report, load_config, run_scenario, ReportFormat};
use entmux::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "entmux",
    about = "Simulator for a wavelength-multiplexed, actively switched entanglement-distribution network",
    after_help = "Scenarios: table1, table2, cwdm, brightness, capacity, route, phase-lock.\n\
                  Reports are byte-identical across reruns with the same config and seeds."
)]
struct Cli {
    /// Scenario to run.
    #[arg(long, required_unless_present = "print_config")]
    scenario: Option<String>,

    /// JSON config file; missing fields fall back to the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Replace the config's seed list (repeatable).
    #[arg(long)]
    seed: Vec<u64>,

    /// Output directory for report files; stdout only when absent. Passing
    /// the flag without a value uses the config's output_dir.
    #[arg(long, num_args = 0..=1, default_missing_value = "@config")]
    out: Option<PathBuf>,

    /// Output formats, comma separated (csv, json).
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("csv"), String::from("json")])]
    format: Vec<String>,

    /// Config override as a dotted path assignment, e.g.
    /// tomography.background_cps=20 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the effective config as JSON and exit without running.
    #[arg(long)]
    print_config: bool,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::UnknownScenario(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidFabric(_) => 2,
        Error::Io { .. } => 4,
        _ => 3,
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| {
                    Error::Config(format!("override {item:?} is not of the form KEY=VALUE"))
                })
        })
        .collect()
}

fn run(cli: &Cli) -> Result<(), Error> {
    let overrides = parse_overrides(&cli.overrides)?;
    let mut config = load_config(cli.config.as_deref(), &overrides)?;
    if !cli.seed.is_empty() {
        config.seeds = cli.seed.clone();
    }
    if cli.print_config {
        let text =
            serde_json::to_string_pretty(&config).map_err(|e| Error::Config(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    let formats = cli
        .format
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| f.parse::<ReportFormat>())
        .collect::<Result<Vec<_>, _>>()?;

    let scenario = cli
        .scenario
        .as_deref()
        .ok_or_else(|| Error::Config("--scenario is required".into()))?;
    let report = run_scenario(scenario, &config)?;

    // Plain-text summary on stdout.
    println!(
        "scenario: {} (config {})",
        report.scenario, report.config_hash
    );
    println!("{}", report.columns.join("  "));
    for row in &report.rows {
        println!("{}", row.join("  "));
    }
    for note in &report.notes {
        println!("note: {note}");
    }

    if let Some(out) = &cli.out {
        let out = if out.as_os_str() == "@config" {
            config.output_dir.clone()
        } else {
            out.clone()
        };
        if formats.is_empty() {
            eprintln!("warning: empty format list, no files written");
        } else {
            let written = emit_report(&report, &formats, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
