//! Command-line front end: single runs, sweeps, parameter checks and
//! re-analysis of existing outputs.
//!
//! Exit codes: 0 success, 1 audit failure or simulation error, 2
//! infeasible parameters, 3 configuration error.

pub mod output;
pub mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::Strategy;
use crate::metrics::{convergence_fit, FitReport};
use crate::params::{derive_parameters, ParamsReport};
use crate::world::simulate;
use output::{read_run, read_summary, write_run, write_summary, Summary};
use scenario::{Scenario, ScenarioError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_AUDIT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ftgcs", version, about = "Fault-tolerant gradient clock synchronization simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides shared by `run` and `sweep`.
#[derive(Debug, Clone, clap::Args)]
pub struct RunFlags {
    /// Base seed; replaces the scenario's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "FTGCS_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Run length in rounds of nominal length `T`.
    #[arg(long)]
    pub until_rounds: Option<f64>,
    /// Sample spacing in seconds.
    #[arg(long)]
    pub cadence: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "D")]
    Diameter,
    Rho,
    #[value(name = "U")]
    U,
    F,
    Strategy,
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Diameter => "D",
            Axis::Rho => "rho",
            Axis::U => "U",
            Axis::F => "f",
            Axis::Strategy => "strategy",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write traces plus a summary.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Print the derived protocol constants as JSON.
    CheckParams { scenario: PathBuf },
    /// Recompute `summary.json` from the CSV traces in a run directory.
    Report { dir: PathBuf },
}

/// Outcome of a single run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub exit: u8,
    pub passed: bool,
    pub max_global_skew: Option<f64>,
    pub max_cluster_edge_skew: Option<f64>,
    pub diameter: Option<usize>,
    pub error: Option<String>,
}

impl RunOutcome {
    fn failed(exit: u8, error: String) -> Self {
        Self { exit, passed: false, max_global_skew: None, max_cluster_edge_skew: None, diameter: None, error: Some(error) }
    }
}

fn classify(e: &ScenarioError) -> u8 {
    match e {
        ScenarioError::Config(_) => EXIT_CONFIG,
        ScenarioError::Infeasible(_) => EXIT_INFEASIBLE,
    }
}

fn apply_flags(s: &mut Scenario, flags: &RunFlags) {
    if let Some(seed) = flags.seed {
        s.seed = seed;
    }
    if let Some(r) = flags.until_rounds {
        s.run.rounds = r;
        s.run.seconds = None;
    }
    if let Some(c) = flags.cadence {
        s.run.cadence = Some(c);
    }
}

fn output_dir(s: &Scenario, flags: &RunFlags) -> PathBuf {
    flags.out.clone().or_else(|| s.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs a prepared scenario and writes its outputs into `dir`.
pub fn execute(s: &Scenario, dir: &Path) -> RunOutcome {
    let prepared = match s.prepare() {
        Ok(p) => p,
        Err(e) => return RunOutcome::failed(classify(&e), e.to_string()),
    };
    let run = match simulate(prepared.world) {
        Ok(r) => r,
        Err(e) => return RunOutcome::failed(EXIT_AUDIT, format!("simulation error: {e}")),
    };
    let summary = Summary::new(&s.name, &run, &prepared.context);
    if let Err(e) = write_run(dir, &run, &summary) {
        return RunOutcome::failed(EXIT_CONFIG, e.to_string());
    }
    let obs = &summary.analysis.observations;
    RunOutcome {
        exit: if summary.passed { EXIT_OK } else { EXIT_AUDIT },
        passed: summary.passed,
        max_global_skew: Some(obs.max_global_skew),
        max_cluster_edge_skew: Some(obs.max_cluster_edge_skew),
        diameter: Some(prepared.context.diameter),
        error: None,
    }
}

fn report_outcome(what: &str, o: &RunOutcome) {
    match &o.error {
        Some(e) => eprintln!("{what}: {e}"),
        None if o.passed => println!("{what}: all audits passed"),
        None => println!("{what}: audit failure (see summary.json)"),
    }
}

fn cmd_run(path: &Path, flags: &RunFlags) -> u8 {
    let mut s = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return classify(&e);
        }
    };
    apply_flags(&mut s, flags);
    let dir = output_dir(&s, flags);
    let o = execute(&s, &dir);
    report_outcome(&dir.display().to_string(), &o);
    o.exit
}

/// Returns a copy of `base` with the sweep axis set to `value`.
pub fn sweep_point(base: &Scenario, axis: Axis, value: &str) -> Result<Scenario, ScenarioError> {
    let mut s = base.clone();
    let num = |v: &str| -> Result<f64, ScenarioError> {
        v.trim().parse().map_err(|_| ScenarioError::Config(format!("sweep value {v:?} is not a number")))
    };
    match axis {
        Axis::Diameter => {
            let d: usize = value
                .trim()
                .parse()
                .map_err(|_| ScenarioError::Config(format!("diameter {value:?} is not an integer")))?;
            s.topology = format!("path:{}", d + 1);
        }
        Axis::Rho => s.params.rho = num(value)?,
        Axis::U => s.params.u = num(value)?,
        Axis::F => {
            let f: usize =
                value.trim().parse().map_err(|_| ScenarioError::Config(format!("f {value:?} is not an integer")))?;
            s.params.f = f;
            s.params.k = s.params.k.max(3 * f + 1);
        }
        Axis::Strategy => {
            s.faults.strategy = Strategy::from_name(value).map_err(|e| ScenarioError::Config(e.to_string()))?;
        }
    }
    s.name = format!("{} {}={}", base.name, axis.label(), value.trim()).trim().to_string();
    Ok(s)
}

#[derive(Debug, Serialize)]
pub struct SweepEntry {
    pub value: String,
    pub dir: String,
    #[serde(flatten)]
    pub outcome: RunOutcome,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub entries: Vec<SweepEntry>,
    pub fit: Option<FitReport>,
}

fn cmd_sweep(path: &Path, axis: Axis, values: &[String], flags: &RunFlags) -> u8 {
    let values: Vec<&String> = values.iter().filter(|v| !v.trim().is_empty()).collect();
    if values.is_empty() {
        eprintln!("config error: empty sweep value list");
        return EXIT_CONFIG;
    }
    let mut base = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return classify(&e);
        }
    };
    apply_flags(&mut base, flags);
    let root = output_dir(&base, flags);
    let entries: Vec<SweepEntry> = values
        .par_iter()
        .map(|v| {
            let sub = format!("{}={}", axis.label(), v.trim());
            let dir = root.join(&sub);
            let outcome = match sweep_point(&base, axis, v) {
                Ok(s) => execute(&s, &dir),
                Err(e) => RunOutcome::failed(classify(&e), e.to_string()),
            };
            report_outcome(&sub, &outcome);
            SweepEntry { value: v.trim().to_string(), dir: sub, outcome }
        })
        .collect();
    let fit = (axis == Axis::Diameter).then(|| {
        let pts: Vec<(usize, f64)> = entries
            .iter()
            .filter_map(|e| Some((e.outcome.diameter?, e.outcome.max_cluster_edge_skew?)))
            .collect();
        convergence_fit(&pts)
    });
    let report = SweepReport { axis: axis.label().to_string(), entries, fit };
    let path = root.join("sweep_report.json");
    let written = std::fs::create_dir_all(&root)
        .and_then(|_| std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap_or_default() + "\n"));
    if let Err(e) = written {
        eprintln!("{}: {e}", path.display());
        return EXIT_CONFIG;
    }
    sweep_exit(report.entries.iter().map(|e| e.outcome.exit))
}

/// Combined exit status: configuration errors dominate infeasibility,
/// which dominates audit failures.
pub fn sweep_exit(codes: impl Iterator<Item = u8>) -> u8 {
    let codes: Vec<u8> = codes.collect();
    [EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_AUDIT].into_iter().find(|c| codes.contains(c)).unwrap_or(EXIT_OK)
}

fn cmd_check_params(path: &Path) -> u8 {
    let s = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return classify(&e);
        }
    };
    match derive_parameters(&s.params) {
        Ok(dp) => {
            println!("{}", serde_json::to_string_pretty(&ParamsReport::from(&dp)).unwrap_or_default());
            EXIT_OK
        }
        Err(e) => {
            let e = ScenarioError::from(e);
            eprintln!("{e}");
            classify(&e)
        }
    }
}

fn cmd_report(dir: &Path) -> u8 {
    let inputs = match read_summary(dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let run = match read_run(dir, &inputs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let summary = Summary::new(&inputs.name, &run, &inputs.context);
    if let Err(e) = write_summary(dir, &summary) {
        eprintln!("{e}");
        return EXIT_CONFIG;
    }
    for a in &summary.analysis.audits {
        println!(
            "{:<22} {} observed={} bound={} checked={} violations={}",
            a.name,
            if a.passed { "ok  " } else { "FAIL" },
            a.observed,
            a.bound,
            a.checked,
            a.violations
        );
    }
    if summary.passed {
        EXIT_OK
    } else {
        EXIT_AUDIT
    }
}

pub fn dispatch(cli: Cli) -> u8 {
    match cli.command {
        Command::Run { scenario, flags } => cmd_run(&scenario, &flags),
        Command::Sweep { scenario, axis, values, flags } => cmd_sweep(&scenario, axis, &values, &flags),
        Command::CheckParams { scenario } => cmd_check_params(&scenario),
        Command::Report { dir } => cmd_report(&dir),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(dispatch(cli))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ProtocolParams;

    #[test]
    fn sweep_points() {
        let base = Scenario::new("single", ProtocolParams::default());
        assert_eq!(sweep_point(&base, Axis::Diameter, "8").unwrap().topology, "path:9");
        assert_eq!(sweep_point(&base, Axis::Rho, "2e-4").unwrap().params.rho, 2e-4);
        let f2 = sweep_point(&base, Axis::F, "2").unwrap();
        assert_eq!((f2.params.f, f2.params.k), (2, 7));
        assert_eq!(sweep_point(&base, Axis::Strategy, "divergent").unwrap().faults.strategy.name(), "divergent");
        assert!(sweep_point(&base, Axis::Strategy, "nonsense").is_err());
        assert!(sweep_point(&base, Axis::U, "x").is_err());
    }

    #[test]
    fn sweep_exit_priority() {
        assert_eq!(sweep_exit([0, 0].into_iter()), 0);
        assert_eq!(sweep_exit([0, 1].into_iter()), 1);
        assert_eq!(sweep_exit([1, 2].into_iter()), 2);
        assert_eq!(sweep_exit([2, 3, 1].into_iter()), 3);
    }
}
