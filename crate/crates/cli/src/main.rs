//! Command-line front door: scenario validation, single simulation
//! runs, and seed sweeps with mode comparison.
//!
//! Exit codes are a stable contract: 0 success, 1 validation failure
//! (including unparseable scenarios and bad arguments), 2 runtime
//! invariant abort, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use packetgrid_core::engine::{run, RunOptions, RunResult};
use packetgrid_core::report::{self, write_report_bundle};
use packetgrid_core::scenario::{
    load_scenario_file, resolve_scenario, validate_scenario, Mode, Scenario, ScenarioError,
};

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 1;
const EXIT_INVARIANT: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "packetgrid",
    version,
    about = "Deterministic simulator of packetized energy management and \
             peer-to-peer sharing between microgrids"
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check a scenario file; report every violation with its JSON pointer
    Validate(ValidateArgs),
    /// Run one scenario and write a report bundle
    Simulate(SimulateArgs),
    /// Run a seed range, optionally in both modes, and aggregate results
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario JSON file
    scenario: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file
    scenario: PathBuf,
    /// Override the scenario's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's mode (commons|uncoordinated)
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for the report bundle
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario JSON file
    scenario: PathBuf,
    /// Half-open seed range `a..b` (e.g. `0..100` runs 100 seeds)
    #[arg(long)]
    seeds: String,
    /// Which modes to run: commons, uncoordinated, or both
    #[arg(long, default_value = "both")]
    modes: String,
    /// Output directory for sweep.csv
    #[arg(long)]
    out: PathBuf,
    /// Maximum concurrent runs
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PACKETGRID_LOG")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Commands::Validate(args) => cmd_validate(&args),
        Commands::Simulate(args) => cmd_simulate(&args),
        Commands::Sweep(args) => cmd_sweep(&args),
    };
    ExitCode::from(code)
}

fn scenario_base_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads, validates, and resolves a scenario, mapping failures onto the
/// exit-code contract.
fn load_checked(path: &Path) -> Result<Scenario, u8> {
    let file = match load_scenario_file(path) {
        Ok(file) => file,
        Err(ScenarioError::Io { path, source }) => {
            eprintln!("error: cannot read `{}`: {source}", path.display());
            return Err(EXIT_IO);
        }
        Err(err) => {
            eprintln!("error: {err}");
            return Err(EXIT_VALIDATION);
        }
    };
    let base = scenario_base_dir(path);
    let diagnostics = validate_scenario(&file, &base);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("invalid: {d}");
        }
        eprintln!("{} violation(s) found", diagnostics.len());
        return Err(EXIT_VALIDATION);
    }
    match resolve_scenario(&file, &base) {
        Ok(scenario) => Ok(scenario),
        Err(err) => {
            eprintln!("error: {err}");
            Err(EXIT_VALIDATION)
        }
    }
}

fn cmd_validate(args: &ValidateArgs) -> u8 {
    match load_checked(&args.scenario) {
        Ok(scenario) => {
            println!(
                "ok: {} microgrid(s), {} household(s), {} link(s), horizon {} slot(s)",
                scenario.microgrids.len(),
                scenario
                    .microgrids
                    .iter()
                    .map(|m| m.households.len())
                    .sum::<usize>(),
                scenario.links.len(),
                scenario.horizon_slots
            );
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn parse_mode(text: &str) -> Result<Mode, u8> {
    Mode::from_str(text).map_err(|err| {
        eprintln!("error: {err}");
        EXIT_VALIDATION
    })
}

fn cmd_simulate(args: &SimulateArgs) -> u8 {
    let scenario = match load_checked(&args.scenario) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mode_override = match args.mode.as_deref().map(parse_mode).transpose() {
        Ok(mode) => mode,
        Err(code) => return code,
    };
    let options = RunOptions {
        seed_override: args.seed,
        mode_override,
        audit: false,
    };
    let result = match run(&scenario, &options) {
        Ok(result) => result,
        Err(err) => {
            eprintln!("aborted: {err}");
            return EXIT_INVARIANT;
        }
    };
    match write_report_bundle(&result, &args.out) {
        Ok(_) => {
            println!("{}", report::one_line_summary(&result));
            println!("report written to {}", args.out.display());
            EXIT_OK
        }
        Err(err) => {
            eprintln!("error: cannot write report into `{}`: {err}", args.out.display());
            remove_partial_bundle(&args.out);
            EXIT_IO
        }
    }
}

fn remove_partial_bundle(out: &Path) {
    for name in [
        report::RUN_JSON,
        report::METRICS_CSV,
        report::LEDGER_CSV,
        report::TRANSFERS_CSV,
        report::SUMMARY_TXT,
    ] {
        let _ = std::fs::remove_file(out.join(name));
    }
}

/// Half-open seed range `a..b`.
fn parse_seed_range(text: &str) -> anyhow::Result<std::ops::Range<u64>> {
    let (start, end) = text
        .split_once("..")
        .context("seed range must look like `a..b`")?;
    let start: u64 = start.trim().parse().context("bad range start")?;
    let end: u64 = end.trim().parse().context("bad range end")?;
    anyhow::ensure!(start < end, "empty seed range `{text}`");
    Ok(start..end)
}

fn parse_modes(text: &str) -> anyhow::Result<Vec<Mode>> {
    match text {
        "both" => Ok(vec![Mode::Commons, Mode::Uncoordinated]),
        other => Mode::from_str(other)
            .map(|mode| vec![mode])
            .map_err(|e| anyhow::anyhow!(e)),
    }
}

struct SweepRow {
    seed: u64,
    mode: Mode,
    outcome: Result<RunResult, String>,
}

fn cmd_sweep(args: &SweepArgs) -> u8 {
    let scenario = match load_checked(&args.scenario) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let seeds = match parse_seed_range(&args.seeds) {
        Ok(range) => range,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_VALIDATION;
        }
    };
    let modes = match parse_modes(&args.modes) {
        Ok(modes) => modes,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_VALIDATION;
        }
    };
    if args.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return EXIT_VALIDATION;
    }

    let tasks: Vec<(u64, Mode)> = seeds
        .flat_map(|seed| modes.iter().map(move |mode| (seed, *mode)))
        .collect();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build() {
        Ok(pool) => pool,
        Err(err) => {
            eprintln!("error: cannot build worker pool: {err}");
            return EXIT_INVARIANT;
        }
    };
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|&(seed, mode)| {
                let options = RunOptions {
                    seed_override: Some(seed),
                    mode_override: Some(mode),
                    audit: false,
                };
                SweepRow {
                    seed,
                    mode,
                    outcome: run(&scenario, &options).map_err(|e| e.to_string()),
                }
            })
            .collect()
    });

    for row in rows.iter().filter(|r| r.outcome.is_err()) {
        eprintln!(
            "failed: seed {} mode {}: {}",
            row.seed,
            row.mode,
            row.outcome.as_ref().unwrap_err()
        );
    }

    let csv = render_sweep_csv(&rows);
    if let Err(err) = std::fs::create_dir_all(&args.out)
        .and_then(|_| std::fs::write(args.out.join("sweep.csv"), &csv))
    {
        eprintln!("error: cannot write sweep.csv into `{}`: {err}", args.out.display());
        return EXIT_IO;
    }
    print_sweep_summary(&rows);
    println!("sweep written to {}", args.out.join("sweep.csv").display());
    EXIT_OK
}

fn render_sweep_csv(rows: &[SweepRow]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str(
        "seed,mode,status,mean_microgrid_self_sufficiency,unserved_energy_wh,\
         packet_blocking_rate,fairness_jain,transfer_volume_wh,network_cost_proxy,\
         unserved_diff_commons_minus_uncoordinated\n",
    );
    for row in rows {
        let diff = paired_unserved_diff(rows, row.seed)
            .map(|d| d.to_string())
            .unwrap_or_default();
        match &row.outcome {
            Ok(result) => {
                let c = &result.community;
                writeln!(
                    out,
                    "{},{},ok,{},{},{},{},{},{},{}",
                    row.seed,
                    row.mode,
                    c.mean_microgrid_self_sufficiency,
                    c.unserved_energy_wh,
                    c.packet_blocking_rate,
                    c.fairness_jain,
                    c.transfer_volume_wh,
                    c.network_cost_proxy,
                    diff
                )
                .unwrap();
            }
            Err(_) => {
                writeln!(out, "{},{},failed,,,,,,,", row.seed, row.mode).unwrap();
            }
        }
    }
    out
}

fn paired_unserved_diff(rows: &[SweepRow], seed: u64) -> Option<i64> {
    let unserved = |mode: Mode| {
        rows.iter()
            .find(|r| r.seed == seed && r.mode == mode)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|result| result.community.unserved_energy_wh as i64)
    };
    Some(unserved(Mode::Commons)? - unserved(Mode::Uncoordinated)?)
}

fn print_sweep_summary(rows: &[SweepRow]) {
    let ok = |mode: Mode| {
        rows.iter()
            .filter(move |r| r.mode == mode)
            .filter_map(|r| r.outcome.as_ref().ok())
    };
    for mode in [Mode::Commons, Mode::Uncoordinated] {
        let unserved: Vec<u64> = ok(mode).map(|r| r.community.unserved_energy_wh).collect();
        if unserved.is_empty() {
            continue;
        }
        let mean = unserved.iter().sum::<u64>() as f64 / unserved.len() as f64;
        println!(
            "{mode}: {} run(s), mean unserved {:.1} Wh",
            unserved.len(),
            mean
        );
    }
    let diffs: Vec<i64> = rows
        .iter()
        .filter(|r| r.mode == Mode::Commons)
        .filter_map(|r| paired_unserved_diff(rows, r.seed))
        .collect();
    if !diffs.is_empty() {
        let improved = diffs.iter().filter(|&&d| d <= 0).count();
        let mean = diffs.iter().sum::<i64>() as f64 / diffs.len() as f64;
        println!(
            "paired seeds: {}; commons <= uncoordinated in {}; mean unserved difference {:.1} Wh",
            diffs.len(),
            improved,
            mean
        );
    }
}
