//! `rnode`: run, generate, evaluate, benchmark and commission.
//!
//! Exit status: 0 success, 1 input error, 2 internal error.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use rnode_core::pipeline::{self, ExecMode, PipelineConfig, PipelineError, RunOptions, SALT_ENV};
use rnode_core::roi::ZoneSet;
use rnode_core::trace::{generate_scenario, read_trace, write_trace, GroundTruth, ScenarioSpec};
use rnode_core::violations::{evaluate, EvalConfig, SpeedMeasurement, ViolationEvent};

#[derive(Parser)]
#[command(name = "rnode", version, about = "Roadside violation detection and safety-event node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a trace and write event, message and report files.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pinned zone set; skips calibration.
        #[arg(long)]
        zones: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Transport simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Sleep to the trace's frame cadence.
        #[arg(long)]
        realtime: bool,
        /// Run stages on separate threads.
        #[arg(long)]
        pipelined: bool,
    },
    /// Synthesize a trace (plus ground-truth sidecars) from a scenario spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an event log against ground truth.
    Eval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Speed traversal log for the speed error.
        #[arg(long)]
        speeds: Option<PathBuf>,
        #[arg(long, default_value_t = 15)]
        slack: u64,
        #[arg(long, default_value_t = 60.0)]
        speed_limit: f64,
        /// Count zebra breaches as signal jumps.
        #[arg(long)]
        merge_signal_zebra: bool,
    },
    /// Repeat a run and report throughput and per-stage cost.
    Bench {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        zones: Option<PathBuf>,
    },
    /// Derive the zone set from a trace's calibration window.
    Zones {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

fn input<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_zones(path: Option<&Path>) -> Result<Option<ZoneSet>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).map_err(input(p))?;
    ZoneSet::from_json(&text).map(Some).map_err(input(p))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(input(path))?;
    serde_json::from_str(&text).map_err(input(path))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let file = fs::File::open(path).map_err(input(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(input(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Failure::Input(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { trace, config, zones, out, seed, realtime, pipelined } => {
            let config = load_config(config.as_deref())?;
            let opts = RunOptions {
                mode: if pipelined { ExecMode::Pipelined } else { ExecMode::SingleThreaded },
                realtime,
                pinned_zones: load_zones(zones.as_deref())?,
                seed,
            };
            let result = pipeline::run(&trace, &config, &opts, &out)?;
            print_json(&result.report);
        }
        Command::Gen { spec, seed, out } => {
            let spec: ScenarioSpec = read_json(&spec)?;
            let scenario = generate_scenario(&spec, seed).map_err(|e| Failure::Input(e.to_string()))?;
            write_trace(&scenario, &out).map_err(|e| Failure::Internal(e.to_string()))?;
            eprintln!("wrote {} frames, {} ground-truth violations", scenario.frames.len(), scenario.ground_truth.len());
        }
        Command::Eval { events, gt, speeds, slack, speed_limit, merge_signal_zebra } => {
            let events: Vec<ViolationEvent> = read_jsonl(&events)?;
            let truth: Vec<GroundTruth> = read_json(&gt)?;
            let speeds: Vec<SpeedMeasurement> = match speeds {
                Some(p) => read_jsonl(&p)?,
                None => Vec::new(),
            };
            let cfg = EvalConfig { slack_frames: slack, merge_signal_zebra, speed_limit_kmh: speed_limit };
            print_json(&evaluate(&events, &speeds, &truth, &cfg));
        }
        Command::Bench { trace, reps, config, zones } => {
            let config = load_config(config.as_deref())?;
            let scenario = read_trace(&trace).map_err(|e| Failure::Input(e.to_string()))?;
            let salt = config.resolve_salt(std::env::var(SALT_ENV).ok());
            let opts = RunOptions { pinned_zones: load_zones(zones.as_deref())?, ..RunOptions::default() };
            print_json(&pipeline::bench(&scenario, &config, &salt, &opts, reps)?);
        }
        Command::Zones { trace, out, config } => {
            let config = load_config(config.as_deref())?;
            let scenario = read_trace(&trace).map_err(|e| Failure::Input(e.to_string()))?;
            let zones = pipeline::commission(&scenario, &config)?;
            let json = zones.to_json().map_err(|e| Failure::Internal(e.to_string()))?;
            fs::write(&out, json + "\n").map_err(|e| Failure::Internal(format!("{}: {e}", out.display())))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("rnode: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("rnode: internal error: {m}");
            ExitCode::from(2)
        }
    }
}
