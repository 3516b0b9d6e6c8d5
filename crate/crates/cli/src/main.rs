//! `flowlab`: runs scenario files and replays expansiveness witnesses.
//!
//! Exit status: 0 when every check passed, 1 when a check failed (a
//! finding), 2 on errors.

mod commands;
mod error;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use flowlab::expansiveness::{replay_witness, Witness};
use flowlab::FieldKind;
use serde_json::json;

use crate::commands::Outcome;
use crate::error::{CliError, Result};
use crate::scenario::Scenario;

const FINDINGS: u8 = 1;
const ERRORS: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "flowlab", version, about = "Scenario runner for flowlab experiments")]
struct Cli {
    /// Output directory; overrides the scenario's [output] dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integration tolerance; overrides the scenario's tol.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads for the parallel parts of the library.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Action,
}

#[derive(Debug, Subcommand)]
enum Action {
    /// Run a scenario file and write report.json, series-*.csv and witness-*.json.
    Run { scenario: PathBuf },
    /// Re-check witness files written by an expansive scenario.
    Replay {
        #[arg(required = true)]
        witnesses: Vec<PathBuf>,
    },
    /// List the builtin field presets and kinds.
    ListFields,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(ERRORS);
        }
    }
    let status = match &cli.command {
        Action::Run { scenario } => run(&cli, scenario),
        Action::Replay { witnesses } => replay(witnesses),
        Action::ListFields => {
            list_fields();
            Ok(0)
        }
    };
    match status {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ERRORS)
        }
    }
}

fn list_fields() {
    println!("presets (field = \"<name>\"):");
    for (name, about, _) in scenario::presets() {
        println!("  {name:<18} {about}");
    }
    println!("kinds ([field] kind = \"<kind>\"):");
    for (kind, about) in FieldKind::registry() {
        println!("  {kind:<18} {about}");
    }
}

fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

fn run(cli: &Cli, path: &Path) -> Result<u8> {
    let started = unix_millis();
    let clock = Instant::now();
    let mut scenario = Scenario::load(path)?;
    if cli.seed.is_some() {
        scenario.seed = cli.seed;
    }
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(CliError::Invalid("--tol must be positive".into()));
        }
        scenario.tol = tol;
    }
    if scenario.seed.is_none() && scenario.needs_seed() {
        return Err(CliError::Invalid(format!(
            "{}: this scenario draws random samples; set `seed = N` or pass --seed",
            path.display()
        )));
    }
    let out = match (&cli.out, &scenario.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) if dir.is_relative() => path.parent().unwrap_or(Path::new(".")).join(dir),
        (None, Some(dir)) => dir.clone(),
        (None, None) => PathBuf::from("flowlab-out").join(&scenario.name),
    };

    let outcome = commands::run(&scenario)?;
    for c in &outcome.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if outcome.checks.is_empty() {
        println!("no checks: {} only reports values", scenario.command.name());
    }
    let written = write_artifacts(&out, &scenario, &outcome)?;
    let meta = json!({
        "scenario_path": path.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "started_unix_ms": started,
        "finished_unix_ms": unix_millis(),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
    });
    write_json(&out.join("meta.json"), &meta)?;
    println!("wrote {} files to {}", written + 1, out.display());
    let failed = outcome.checks.iter().filter(|c| !c.passed).count();
    Ok(if failed > 0 { FINDINGS } else { 0 })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Writes everything except meta.json and returns the file count. Series and
/// witness files left by an earlier run in the same directory are removed.
fn write_artifacts(out: &Path, scenario: &Scenario, outcome: &Outcome) -> Result<usize> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for entry in std::fs::read_dir(out).map_err(|e| CliError::io(out, e))? {
        let entry = entry.map_err(|e| CliError::io(out, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let stale = (name.starts_with("series-") && name.ends_with(".csv"))
            || (name.starts_with("witness-") && name.ends_with(".json"));
        if stale {
            std::fs::remove_file(entry.path()).map_err(|e| CliError::io(&entry.path(), e))?;
        }
    }
    let mut series_files = Vec::new();
    for s in &outcome.series {
        let name = format!("series-{}.csv", s.name);
        let path = out.join(&name);
        std::fs::write(&path, &s.bytes).map_err(|e| CliError::io(&path, e))?;
        series_files.push(name);
    }
    let mut witness_files = Vec::new();
    for (k, w) in outcome.witnesses.iter().enumerate() {
        let name = format!("witness-{}-{k:03}.json", w.mode.name());
        write_json(&out.join(&name), w)?;
        witness_files.push(name);
    }
    let findings = outcome.checks.iter().filter(|c| !c.passed).count();
    let report = json!({
        "scenario": scenario.name,
        "command": scenario.command,
        "field": scenario.field,
        "seed": scenario.seed,
        "tol": scenario.tol,
        "lipschitz": outcome.lipschitz,
        "checks": outcome.checks,
        "findings": findings,
        "series": series_files,
        "witnesses": witness_files,
        "result": outcome.result,
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(1 + series_files.len() + witness_files.len())
}

/// A reproduced witness is a confirmed finding; one that does not reproduce
/// is an error.
fn replay(paths: &[PathBuf]) -> Result<u8> {
    let mut all = true;
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let witness: Witness = serde_json::from_str(&text).map_err(|e| CliError::Json {
            path: path.clone(),
            source: e,
        })?;
        let rep = replay_witness(&witness)?;
        let f = &witness.failure;
        println!(
            "{}: {} ({} mode, eps = {}, delta = {:.4}): shadow sup {:.4e} {} delta, conclusion fails at t = {:.4} \
             (normal {:.3e}, time offset {:.3e})",
            path.display(),
            if rep.reproduced { "reproduced" } else { "NOT reproduced" },
            witness.mode.name(),
            witness.epsilon,
            witness.delta,
            rep.shadow_sup,
            if rep.shadow_ok { "<=" } else { ">" },
            f.t,
            f.normal,
            f.time_offset
        );
        all &= rep.reproduced;
    }
    Ok(if all { FINDINGS } else { ERRORS })
}
