//! End-to-end orchestration: trace → tracker → zones → violations → plate
//! vote → dissemination, with the run report and the benchmark harness.
//!
//! The first `roi.calibration_frames` frames are tracked but raise no
//! events; zones are derived from them unless a pinned zone set is given.
//! Offline runs stamp everything on the trace clock.

mod bench;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plate::{PlateConfig, PlateError, MIN_SALT_LEN};
use crate::roi::{RoiConfig, RoiError, ZoneSet};
use crate::trace::{read_trace, DetectionFrame, Scenario, TraceError};
use crate::tracker::{Tracker, TrackerConfig, TrackerError};
use crate::v2x::mqtt::{MqttClient, MqttConfig};
use crate::v2x::{latency_report, CameraConfig, GateConfig, LatencyReport, SimConfig, Transport, V2xError};
use crate::violations::{evaluate, EvalConfig, EvalReport, ViolationClass, ViolationConfig, ViolationEngine, ViolationError};

pub use bench::{bench, BenchReport, StageTiming};
pub use stages::{Logs, ZonesSource, STAGE_NAMES};
use stages::{IngestStage, Perceived, PlateStage, TrackStage, V2xStage, ViolationStage};

pub const SALT_ENV: &str = "RNODE_SALT";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("tracker stage: {0}")]
    Tracker(#[from] TrackerError),
    #[error("roi stage: {0}")]
    Roi(#[from] RoiError),
    #[error("violation stage: {0}")]
    Violations(#[from] ViolationError),
    #[error("plate stage: {0}")]
    Plate(#[from] PlateError),
    #[error("v2x stage: {0}")]
    V2x(#[from] V2xError),
    #[error("writing {0}: {1}")]
    Output(PathBuf, #[source] std::io::Error),
    #[error("stage thread failed: {0}")]
    Worker(String),
}

impl PipelineError {
    /// True when the failure traces back to user-supplied input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Trace(_)
                | PipelineError::Roi(_)
                | PipelineError::Plate(PlateError::WeakSalt(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub roi: RoiConfig,
    pub violations: ViolationConfig,
    /// Overrides `violations.speed_limit_kmh` and `eval.speed_limit_kmh`.
    pub speed_limit_kmh: f64,
    pub gate: GateConfig,
    pub plate: PlateConfig,
    pub camera: CameraConfig,
    /// Plate-hash salt; the `RNODE_SALT` environment variable wins.
    pub salt: String,
    pub transport: SimConfig,
    /// External broker; the simulated broker is used when absent.
    pub mqtt: Option<MqttConfig>,
    pub eval: EvalConfig,
    pub v2x_enabled: bool,
    /// Bound of each inter-stage queue in pipelined mode.
    pub queue_depth: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::default(),
            roi: RoiConfig::default(),
            violations: ViolationConfig::default(),
            speed_limit_kmh: 60.0,
            gate: GateConfig::default(),
            plate: PlateConfig::default(),
            camera: CameraConfig::default(),
            salt: String::new(),
            transport: SimConfig::default(),
            mqtt: None,
            eval: EvalConfig::default(),
            v2x_enabled: true,
            queue_depth: 64,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn effective_violations(&self) -> ViolationConfig {
        ViolationConfig { speed_limit_kmh: self.speed_limit_kmh, ..self.violations.clone() }
    }

    fn effective_eval(&self) -> EvalConfig {
        EvalConfig { speed_limit_kmh: self.speed_limit_kmh, ..self.eval.clone() }
    }

    /// Salt from `env` if set, else from the config.
    pub fn resolve_salt(&self, env: Option<String>) -> Vec<u8> {
        env.unwrap_or_else(|| self.salt.clone()).into_bytes()
    }

    pub fn validate(&self, salt: &[u8]) -> Result<(), PipelineError> {
        self.tracker.validate()?;
        self.roi.validate()?;
        self.effective_violations().validate()?;
        if !(self.camera.px_per_m > 0.0) {
            return Err(PipelineError::Config("camera.px_per_m must be positive".into()));
        }
        if self.queue_depth == 0 {
            return Err(PipelineError::Config("queue_depth must be positive".into()));
        }
        if self.plate.t_vote == 0 {
            return Err(PipelineError::Config("plate.t_vote must be positive".into()));
        }
        if self.v2x_enabled {
            self.gate.validate()?;
            self.transport.validate()?;
            self.camera.validate()?;
            if salt.len() < MIN_SALT_LEN {
                return Err(PlateError::WeakSalt(salt.len()).into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    #[default]
    SingleThreaded,
    /// One thread per stage group joined by bounded queues.
    Pipelined,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: ExecMode,
    /// Sleep to the trace's frame cadence.
    pub realtime: bool,
    pub pinned_zones: Option<ZoneSet>,
    /// Overrides `transport.seed`.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub forwarded: usize,
    pub drop_dup: usize,
    pub drop_rate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub calibration_frames: usize,
    pub zones_source: ZonesSource,
    pub events: usize,
    pub events_per_class: BTreeMap<ViolationClass, usize>,
    pub speed_measurements: usize,
    /// Present when the trace carries ground truth.
    pub eval: Option<EvalReport>,
    /// Share of plated events whose voted plate is one of the scripted plates.
    pub plate_accuracy: Option<f64>,
    pub wall_s: f64,
    pub throughput_fps: f64,
    pub latency: Option<LatencyReport>,
    pub gate: GateCounts,
    pub delivered: usize,
    pub dead_letters: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub logs: Logs,
    pub zones: Option<ZoneSet>,
    /// Per-stage busy time; only measured in single-threaded mode.
    pub stage_time: [Duration; 5],
}

impl RunOutput {
    /// JSON Lines event log.
    pub fn event_log(&self) -> String {
        jsonl(&self.logs.events)
    }

    pub fn message_log(&self) -> String {
        self.logs.messages.iter().map(|m| format!("{m}\n")).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let out = |name: &str| dir.join(name);
        fs::create_dir_all(dir).map_err(|e| PipelineError::Output(dir.to_path_buf(), e))?;
        write_file(&out("events.jsonl"), &self.event_log())?;
        write_file(&out("messages.jsonl"), &self.message_log())?;
        write_file(&out("speeds.jsonl"), &jsonl(&self.logs.speeds))?;
        write_file(&out("deadletter.jsonl"), &jsonl(&self.logs.dead_letters))?;
        write_file(&out("latency.jsonl"), &jsonl(&self.logs.latency))?;
        let report = serde_json::to_string_pretty(&self.report).expect("report serializes");
        write_file(&out("report.json"), &(report + "\n"))?;
        if let Some(z) = &self.zones {
            write_file(&out("zones.json"), &(z.to_json()? + "\n"))?;
        }
        Ok(())
    }
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("record serializes") + "\n").collect()
}

fn write_file(path: &Path, body: &str) -> Result<(), PipelineError> {
    let io = |e| PipelineError::Output(path.to_path_buf(), e);
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    w.write_all(body.as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

struct Stages {
    ingest: IngestStage,
    track: TrackStage,
    violations: ViolationStage,
    plate: PlateStage,
    v2x: V2xStage,
}

fn build_stages(scenario: &Scenario, config: &PipelineConfig, salt: &[u8], opts: &RunOptions) -> Result<Stages, PipelineError> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.transport.seed = seed;
    }
    config.validate(salt)?;
    let camera = CameraConfig { frame_dims: scenario.frame_dims, ..config.camera.clone() };
    let transport: Option<Box<dyn Transport>> = match (&config.mqtt, config.v2x_enabled) {
        (Some(m), true) => Some(Box::new(MqttClient::connect(m)?)),
        _ => None,
    };
    let engine = ViolationEngine::new(config.effective_violations(), scenario.frame_rate)?;
    Ok(Stages {
        ingest: IngestStage::new(scenario.frame_dims, opts.realtime),
        track: TrackStage::new(Tracker::new(config.tracker)?),
        violations: ViolationStage::new(
            engine,
            config.roi.clone(),
            scenario.frame_dims,
            config.camera.px_per_m,
            scenario.frame_rate,
            opts.pinned_zones.clone(),
        ),
        plate: PlateStage::new(config.plate.clone()),
        v2x: V2xStage::new(&config, salt, camera, transport)?,
    })
}

fn run_inline(frames: &[DetectionFrame], st: &mut Stages) -> Result<[Duration; 5], PipelineError> {
    let mut busy = [Duration::ZERO; 5];
    let mut lap = |i: usize, t: &mut Instant| {
        let now = Instant::now();
        busy[i] += now - *t;
        *t = now;
    };
    for frame in frames {
        let mut t = Instant::now();
        let frame = st.ingest.process(frame.clone())?;
        lap(0, &mut t);
        let tracked = st.track.process(&frame)?;
        lap(1, &mut t);
        let perceived = st.violations.process(&frame, st.track.tracks(), tracked)?;
        lap(2, &mut t);
        let annotated = st.plate.process(perceived);
        lap(3, &mut t);
        st.v2x.process(annotated)?;
        lap(4, &mut t);
    }
    Ok(busy)
}

type Msg<T> = Result<T, PipelineError>;

/// Forwards `rx` through `f` until the input closes or an error passes.
fn relay<A, B>(rx: Receiver<Msg<A>>, tx: SyncSender<Msg<B>>, mut f: impl FnMut(A) -> Msg<B>) {
    for item in rx {
        let out = item.and_then(&mut f);
        let failed = out.is_err();
        if tx.send(out).is_err() || failed {
            return;
        }
    }
}

fn run_pipelined(frames: &[DetectionFrame], st: Stages, depth: usize) -> Result<(ViolationStage, V2xStage), PipelineError> {
    let Stages { mut ingest, mut track, mut violations, mut plate, mut v2x } = st;
    let (tx_in, rx_in) = sync_channel::<Msg<DetectionFrame>>(depth);
    let (tx_tr, rx_tr) = sync_channel::<Msg<Perceived>>(depth);
    let (tx_pl, rx_pl) = sync_channel::<Msg<Perceived>>(depth);
    std::thread::scope(|s| {
        s.spawn(move || {
            for f in frames {
                let out = ingest.process(f.clone());
                let failed = out.is_err();
                if tx_in.send(out).is_err() || failed {
                    return;
                }
            }
        });
        let perception = s.spawn(move || {
            relay(rx_in, tx_tr, |frame| {
                let tracked = track.process(&frame)?;
                violations.process(&frame, track.tracks(), tracked)
            });
            violations
        });
        s.spawn(move || relay(rx_tr, tx_pl, |p| Ok(plate.process(p))));
        let mut first_err = None;
        for item in rx_pl {
            match item.and_then(|p| v2x.process(p)) {
                Ok(()) => {}
                Err(e) => {
                    first_err = Some(e);
                    break;
                }
            }
        }
        let violations = perception.join().map_err(|_| PipelineError::Worker("perception".into()))?;
        match first_err {
            Some(e) => Err(e),
            None => Ok((violations, v2x)),
        }
    })
}

/// Runs the whole pipeline over an in-memory scenario.
pub fn run_scenario(scenario: &Scenario, config: &PipelineConfig, salt: &[u8], opts: &RunOptions) -> Result<RunOutput, PipelineError> {
    let mut stages = build_stages(scenario, config, salt, opts)?;
    let started = Instant::now();
    let (violations, v2x, stage_time) = match opts.mode {
        ExecMode::SingleThreaded => {
            let busy = run_inline(&scenario.frames, &mut stages)?;
            (stages.violations, stages.v2x, busy)
        }
        ExecMode::Pipelined => {
            let (v, x) = run_pipelined(&scenario.frames, stages, config.queue_depth.max(1))?;
            (v, x, [Duration::ZERO; 5])
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let logs = v2x.logs;
    let report = build_report(scenario, config, &logs, &violations, wall);
    Ok(RunOutput { report, zones: violations.zones().cloned(), logs, stage_time })
}

fn build_report(scenario: &Scenario, config: &PipelineConfig, logs: &Logs, violations: &ViolationStage, wall_s: f64) -> RunReport {
    let mut per_class = BTreeMap::new();
    for e in &logs.events {
        *per_class.entry(e.class).or_insert(0) += 1;
    }
    let eval = (!scenario.ground_truth.is_empty())
        .then(|| evaluate(&logs.events, &logs.speeds, &scenario.ground_truth, &config.effective_eval()));
    let truths: BTreeSet<&str> = scenario.plates.values().map(String::as_str).collect();
    let plated: Vec<&str> = logs.events.iter().filter_map(|e| e.plate.as_deref()).collect();
    let plate_accuracy = (!truths.is_empty() && !plated.is_empty())
        .then(|| plated.iter().filter(|p| truths.contains(*p)).count() as f64 / plated.len() as f64);
    let frames = scenario.frames.len();
    RunReport {
        frames,
        calibration_frames: violations.calibration_frames_used(),
        zones_source: violations.source(),
        events: logs.events.len(),
        events_per_class: per_class,
        speed_measurements: logs.speeds.len(),
        eval,
        plate_accuracy,
        wall_s,
        throughput_fps: if frames == 0 { 0.0 } else { frames as f64 / wall_s.max(1e-9) },
        latency: latency_report(&logs.latency).ok(),
        gate: logs.gate,
        delivered: logs.delivered,
        dead_letters: logs.dead_letters.len(),
    }
}

/// Reads `trace`, runs the pipeline and writes every log under `out_dir`.
pub fn run(trace: &Path, config: &PipelineConfig, opts: &RunOptions, out_dir: &Path) -> Result<RunOutput, PipelineError> {
    let scenario = read_trace(trace)?;
    let salt = config.resolve_salt(std::env::var(SALT_ENV).ok());
    let out = run_scenario(&scenario, config, &salt, opts)?;
    out.write(out_dir)?;
    Ok(out)
}

/// Derives the zone set from the calibration window of `scenario` alone.
pub fn commission(scenario: &Scenario, config: &PipelineConfig) -> Result<ZoneSet, PipelineError> {
    let n = config.roi.calibration_frames;
    if scenario.frames.len() < n {
        return Err(PipelineError::Config(format!(
            "trace has {} frames, calibration needs {n}",
            scenario.frames.len()
        )));
    }
    let engine = ViolationEngine::new(config.effective_violations(), scenario.frame_rate)?;
    let mut track = TrackStage::new(Tracker::new(config.tracker)?);
    let mut stage = ViolationStage::new(
        engine,
        config.roi.clone(),
        scenario.frame_dims,
        config.camera.px_per_m,
        scenario.frame_rate,
        None,
    );
    for frame in &scenario.frames[..n] {
        let tracked = track.process(frame)?;
        stage.process(frame, track.tracks(), tracked)?;
    }
    stage.zones().cloned().ok_or_else(|| PipelineError::Config("calibration window is empty".into()))
}
