//! Command-line driver.
//!
//! Exit codes: 0 success, 1 a property or consistency check failed,
//! 2 invalid input, 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ConfigFile, Mode};
use crate::error::Error;
use crate::harness::experiment::{run_experiment_with, write_csv, ExperimentReport, RunOptions};
use crate::harness::verify::{verify_properties_with, PropertyReport, VerifyOptions};
use crate::mechanism::run_mechanism;
use crate::prophet::Mutation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "polyprophet", version, about = "Online selection over polymatroids: experiments, property checks, posted pricing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment (or the config's mode) and write a report.
    Run(Common),
    /// Check every structural property on fuzzed and configured instances.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Fuzzed instances; defaults to the config's `verify.budget`.
        #[arg(long)]
        budget: Option<u64>,
        /// Test hook: run a deliberately broken algorithm.
        #[arg(long, value_enum, hide = true)]
        mutant: Option<Mutant>,
    },
    /// Run every cell of the config's sweep grid.
    Sweep(Common),
    /// Run welfare and revenue posted pricing.
    Mechanism(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving report.json and report.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutant {
    HalveThresholds,
}

enum Failure {
    Input(Error),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Input(e)
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(c) => load(c).and_then(|cfg| match cfg.mode {
            Mode::Experiment => cmd_run(&cfg, c, stdout, stderr),
            Mode::Verify => cmd_verify(&cfg, c, None, None, stdout, stderr),
            Mode::Mechanism => cmd_mechanism(&cfg, c, stdout, stderr),
        }),
        Command::Verify {
            common,
            budget,
            mutant,
        } => load(common).and_then(|cfg| {
            let mutation = mutant.map(|Mutant::HalveThresholds| Mutation::HalveThresholds);
            cmd_verify(&cfg, common, *budget, mutation, stdout, stderr)
        }),
        Command::Sweep(c) => load(c).and_then(|cfg| cmd_sweep(&cfg, c, stdout, stderr)),
        Command::Mechanism(c) => load(c).and_then(|cfg| cmd_mechanism(&cfg, c, stdout, stderr)),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(Failure::Input(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INVALID
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn load(c: &Common) -> std::result::Result<ConfigFile, Failure> {
    let mut cfg = ConfigFile::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = c.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        jobs: c.jobs,
        mutation: None,
    }
}

fn write_outputs<T: Serialize + ?Sized>(
    out: &Option<PathBuf>,
    json: &T,
    reports: &[ExperimentReport],
    stdout: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Runtime(format!("{}: {e}", p.display()));
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            let text = serde_json::to_string_pretty(json).expect("report serializes") + "\n";
            let json_path = dir.join("report.json");
            std::fs::write(&json_path, text).map_err(|e| io(&json_path, e))?;
            if !reports.is_empty() {
                let csv_path = dir.join("report.csv");
                let file = std::fs::File::create(&csv_path).map_err(|e| io(&csv_path, e))?;
                write_csv(std::io::BufWriter::new(file), reports).map_err(|e| io(&csv_path, e))?;
            }
        }
        None if !reports.is_empty() => {
            write_csv(&mut *stdout, reports).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        None => {
            let text = serde_json::to_string_pretty(json).expect("report serializes");
            writeln!(stdout, "{text}").map_err(|e| Failure::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn summarize(report: &ExperimentReport, stderr: &mut dyn Write) -> bool {
    let _ = writeln!(
        stderr,
        "trials {} seed {}: E[ALG] {:.6} E[OPT] {:.6} ratio {:.6} (95% CI {:.6}..{:.6})",
        report.trials, report.seed, report.mean_alg, report.mean_opt, report.ratio, report.ci_lo, report.ci_hi
    );
    for c in &report.checks {
        if let Some(f) = &c.first_failure {
            let _ = writeln!(
                stderr,
                "FAIL {}: {} of {} trials; first at seed {} trial {}: {}",
                c.name, c.failures, c.checked, f.seed, f.trial, f.detail
            );
        }
    }
    report.checks_passed()
}

fn cmd_run(cfg: &ConfigFile, c: &Common, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let report = run_experiment_with(&cfg.experiment(), options(c))?;
    let ok = summarize(&report, stderr);
    write_outputs(&c.out, &report, std::slice::from_ref(&report), stdout)?;
    Ok(ok)
}

fn cmd_mechanism(cfg: &ConfigFile, c: &Common, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let report = run_mechanism(&cfg.experiment(), options(c))?;
    let ok = summarize(&report, stderr);
    if let Some(m) = &report.mechanism {
        let _ = writeln!(
            stderr,
            "welfare {:.6} vs OPT {:.6}; revenue {:.6} vs virtual-surplus benchmark {:.6}",
            m.welfare, m.opt_welfare, m.revenue, m.benchmark
        );
    }
    write_outputs(&c.out, &report, std::slice::from_ref(&report), stdout)?;
    Ok(ok)
}

fn cmd_verify(
    cfg: &ConfigFile,
    c: &Common,
    budget: Option<u64>,
    mutation: Option<Mutation>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let opts = VerifyOptions {
        budget: budget.unwrap_or_else(|| cfg.budget()),
        mutation,
        jobs: c.jobs,
        ..VerifyOptions::default()
    };
    let report: PropertyReport = verify_properties_with(&cfg.experiment(), opts)?;
    for w in &report.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let _ = writeln!(
        stderr,
        "{} instances checked, {} configured draws, seed {}",
        report.instances_checked, report.config_draws_checked, report.seed
    );
    for o in &report.properties {
        match &o.counterexample {
            None => {
                let _ = writeln!(stderr, "PASS {} ({} checks)", o.property.name(), o.checked);
            }
            Some(cx) => {
                let origin = serde_json::to_string(&cx.origin).expect("serializes");
                let _ = writeln!(
                    stderr,
                    "FAIL {} ({} of {} checks): {}; replay {origin}",
                    o.property.name(),
                    o.failures,
                    o.checked,
                    cx.detail
                );
            }
        }
    }
    write_outputs(&c.out, &report, &[], stdout)?;
    Ok(report.passed())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    assignment: Vec<(String, String)>,
    report: &'a ExperimentReport,
}

fn cmd_sweep(cfg: &ConfigFile, c: &Common, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let cells = cfg.expand_sweep()?;
    let mut reports = Vec::with_capacity(cells.len());
    let mut ok = true;
    for cell in &cells {
        let report = match cell.config.mode {
            Mode::Experiment => run_experiment_with(&cell.config.experiment(), options(c))?,
            Mode::Mechanism => run_mechanism(&cell.config.experiment(), options(c))?,
            Mode::Verify => {
                return Err(Failure::Input(Error::validation("mode", "sweeps run experiments or mechanisms")))
            }
        };
        let label: Vec<String> = cell.assignment.iter().map(|(p, v)| format!("{p}={v}")).collect();
        let _ = write!(stderr, "[{}] ", label.join(", "));
        ok &= summarize(&report, stderr);
        reports.push(report);
    }
    let rows: Vec<SweepRow> = cells
        .iter()
        .zip(&reports)
        .map(|(cell, report)| SweepRow {
            assignment: cell.assignment.iter().map(|(p, v)| (p.clone(), v.to_string())).collect(),
            report,
        })
        .collect();
    write_outputs(&c.out, &rows, &reports, stdout)?;
    Ok(ok)
}
