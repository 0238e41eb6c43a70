use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use regionpager_core::claims::summary_table;
use regionpager_core::{
    check_expectations, parse_scenario, reproduce_all, run_scenario_with, OverheadReport,
    ReportFormat, ReproduceOptions, RunOptions, Scheme,
};

/// Replays page-fault scenarios under different fault-handling schemes.
#[derive(Debug, Parser)]
#[command(name = "regionpager", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Scheme to run, or all schemes the scenario supports.
    #[arg(long, value_enum, default_value_t = SchemeArg::All)]
    scheme: SchemeArg,

    /// Scenario file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Write the event trace here.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = ReportArg::Table)]
    report: ReportArg,

    /// Shuffle consecutive accesses with a seeded round-robin.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Verify the scenario's expect lines; exit 1 on any mismatch.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every acceptance claim against the shipped fixtures.
    Reproduce {
        #[arg(long, value_name = "DIR", default_value = "fixtures")]
        fixtures: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Monolithic,
    #[value(name = "l4-single")]
    L4Single,
    L4re,
    Proposed,
    All,
}

impl SchemeArg {
    fn scheme(self) -> Option<Scheme> {
        match self {
            SchemeArg::Monolithic => Some(Scheme::Monolithic),
            SchemeArg::L4Single => Some(Scheme::L4SinglePager),
            SchemeArg::L4re => Some(Scheme::L4PlusL4Re),
            SchemeArg::Proposed => Some(Scheme::ProposedRegionDispatch),
            SchemeArg::All => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportArg {
    Table,
    Kv,
}

enum Outcome {
    Ok,
    Mismatch,
}

fn simulate(cli: &Cli) -> Result<Outcome> {
    let Some(path) = &cli.scenario else {
        bail!("--scenario is required");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = parse_scenario(&text).with_context(|| path.display().to_string())?;
    let schemes = match cli.scheme.scheme() {
        Some(s) => vec![s],
        None => scenario.supported_schemes(),
    };
    let opts = RunOptions {
        seed: cli.seed,
        ..RunOptions::default()
    };
    let runs = schemes
        .iter()
        .map(|&s| run_scenario_with(s, &scenario, &opts))
        .collect::<Result<Vec<_>, _>>()?;

    if let Some(out) = &cli.trace {
        let text = if runs.len() == 1 {
            runs[0].trace.to_text()
        } else {
            runs.iter()
                .map(|r| format!("# scheme={}\n{}", r.scheme, r.trace.to_text()))
                .collect()
        };
        fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }

    for r in &runs {
        for w in &r.warnings {
            eprintln!("warning [{}]: {w}", r.scheme);
        }
    }
    let format = match cli.report {
        ReportArg::Table => ReportFormat::Table,
        ReportArg::Kv => ReportFormat::KeyValue,
    };
    print!("{}", OverheadReport::from_runs(&runs).render(format));

    if cli.check {
        let failures: Vec<_> = runs
            .iter()
            .flat_map(|r| check_expectations(&scenario, r))
            .collect();
        for f in &failures {
            eprintln!("expectation failed: {f}");
        }
        let total = scenario.expectations().count();
        if !failures.is_empty() {
            return Ok(Outcome::Mismatch);
        }
        eprintln!(
            "{total} expectation(s) checked under {} scheme(s)",
            runs.len()
        );
    }
    Ok(Outcome::Ok)
}

fn reproduce(fixtures: &Path) -> Result<Outcome> {
    let outcomes = reproduce_all(fixtures, &ReproduceOptions::default())?;
    print!("{}", summary_table(&outcomes));
    Ok(if outcomes.iter().all(|o| o.passed) {
        Outcome::Ok
    } else {
        Outcome::Mismatch
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Some(Command::Reproduce { fixtures }) => reproduce(fixtures),
        None => simulate(&cli),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
