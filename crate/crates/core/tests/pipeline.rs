use rnode_core::pipeline::{commission, run, run_scenario, ExecMode, PipelineConfig, PipelineError, RunOptions, ZonesSource};
use rnode_core::plate::{hash_plate, PlateError};
use rnode_core::trace::suite::{mixed_suite, SuiteVariant, SUITE_SEED};
use rnode_core::trace::{generate_scenario, write_trace, Scenario};
use rnode_core::v2x::{latency_report, DelayModel, HopConfig, SafetyMessage};
use rnode_core::violations::ViolationClass;

const SALT: &[u8] = b"pipeline-test-salt-0001";

/// First 50 s of the noiseless suite: two signal cycles.
fn short_scenario() -> Scenario {
    let mut spec = mixed_suite(SuiteVariant::Noiseless);
    spec.duration_s = 50.0;
    spec.vehicles.retain(|v| v.depart_s < 30.0);
    generate_scenario(&spec, SUITE_SEED).unwrap()
}

fn lossy_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.transport.log_delay = DelayModel::LogNormal { median_ms: 35.0, p95_ms: 48.0 };
    cfg.transport.uplink = HopConfig { delay: DelayModel::LogNormal { median_ms: 12.0, p95_ms: 22.0 }, drop_p: 0.3, ack_loss_p: 0.1 };
    cfg.transport.downlink = HopConfig { delay: DelayModel::Uniform { lo_ms: 4.0, hi_ms: 15.0 }, drop_p: 0.2, ack_loss_p: 0.0 };
    cfg.transport.broker_offset_ms = 4.0;
    cfg.transport.endpoint_offset_ms = 9.0;
    cfg
}

#[test]
fn empty_trace_yields_empty_logs() {
    let s = Scenario::new(30.0, (640, 1200));
    let out = run_scenario(&s, &PipelineConfig::default(), SALT, &RunOptions::default()).unwrap();
    assert!(out.logs.events.is_empty() && out.logs.messages.is_empty());
    assert_eq!(out.report.frames, 0);
    assert_eq!(out.report.events, 0);
    assert_eq!(out.report.zones_source, ZonesSource::Unavailable);
    assert!(out.report.eval.is_none() && out.report.latency.is_none());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let s = short_scenario();
    let cfg = lossy_config();
    let a = run_scenario(&s, &cfg, SALT, &RunOptions::default()).unwrap();
    let b = run_scenario(&s, &cfg, SALT, &RunOptions::default()).unwrap();
    assert!(!a.logs.events.is_empty());
    assert_eq!(a.event_log(), b.event_log());
    assert_eq!(a.message_log(), b.message_log());
    assert_eq!(a.logs.latency, b.logs.latency);
    assert_eq!(a.logs.dead_letters, b.logs.dead_letters);
}

#[test]
fn seed_changes_only_transport_outcomes() {
    let s = short_scenario();
    let cfg = lossy_config();
    let a = run_scenario(&s, &cfg, SALT, &RunOptions { seed: Some(1), ..RunOptions::default() }).unwrap();
    let b = run_scenario(&s, &cfg, SALT, &RunOptions { seed: Some(2), ..RunOptions::default() }).unwrap();
    assert_eq!(a.event_log(), b.event_log());
    assert_ne!(a.logs.latency, b.logs.latency);
}

#[test]
fn pipelined_mode_matches_single_threaded() {
    let s = short_scenario();
    let mut cfg = lossy_config();
    cfg.queue_depth = 1;
    let single = run_scenario(&s, &cfg, SALT, &RunOptions::default()).unwrap();
    let piped = run_scenario(&s, &cfg, SALT, &RunOptions { mode: ExecMode::Pipelined, ..RunOptions::default() }).unwrap();
    assert_eq!(single.event_log(), piped.event_log());
    assert_eq!(single.message_log(), piped.message_log());
    assert_eq!(single.logs.speeds, piped.logs.speeds);
    assert_eq!(single.report.gate, piped.report.gate);
    // bounded queues delay frames but never drop them
    assert_eq!(piped.report.frames, s.frames.len());
}

#[test]
fn disabling_v2x_leaves_event_log_unchanged() {
    let s = short_scenario();
    let on = run_scenario(&s, &lossy_config(), SALT, &RunOptions::default()).unwrap();
    let off_cfg = PipelineConfig { v2x_enabled: false, ..lossy_config() };
    // no salt needed without dissemination
    let off = run_scenario(&s, &off_cfg, b"", &RunOptions::default()).unwrap();
    assert_eq!(on.event_log(), off.event_log());
    assert!(off.logs.messages.is_empty());
}

#[test]
fn weak_salt_is_an_input_error() {
    let s = short_scenario();
    let err = run_scenario(&s, &PipelineConfig::default(), b"short", &RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Plate(PlateError::WeakSalt(5))));
    assert!(err.is_input_error());
}

#[test]
fn environment_salt_takes_precedence() {
    let cfg = PipelineConfig { salt: "from-config-0123456".into(), ..PipelineConfig::default() };
    assert_eq!(cfg.resolve_salt(Some("from-env-0123456789".into())), b"from-env-0123456789");
    assert_eq!(cfg.resolve_salt(None), b"from-config-0123456");
}

#[test]
fn pinned_zones_skip_calibration() {
    let s = short_scenario();
    let cfg = PipelineConfig::default();
    let zones = commission(&s, &cfg).unwrap();
    let derived = run_scenario(&s, &cfg, SALT, &RunOptions::default()).unwrap();
    assert_eq!(derived.zones.as_ref(), Some(&zones));
    let pinned = run_scenario(&s, &cfg, SALT, &RunOptions { pinned_zones: Some(zones), ..RunOptions::default() }).unwrap();
    assert_eq!(pinned.report.zones_source, ZonesSource::Pinned);
    assert_eq!(pinned.report.calibration_frames, 0);
    let after: Vec<_> = pinned.logs.events.iter().filter(|e| e.frame_index >= 300).map(|e| (e.class, e.frame_index)).collect();
    let reference: Vec<_> = derived.logs.events.iter().map(|e| (e.class, e.frame_index)).collect();
    assert_eq!(after, reference);
}

#[test]
fn messages_carry_hashes_of_voted_plates() {
    let s = short_scenario();
    let out = run_scenario(&s, &PipelineConfig::default(), SALT, &RunOptions::default()).unwrap();
    assert_eq!(out.logs.messages.len(), out.logs.events.len());
    for (line, event) in out.logs.messages.iter().zip(&out.logs.events) {
        let msg: SafetyMessage = serde_json::from_str(line).unwrap();
        let plate = event.plate.as_deref().expect("voted plate");
        assert!(!line.contains(plate));
        assert_eq!(msg.plate_hash.as_deref(), Some(hash_plate(plate, SALT).unwrap().as_str()));
        assert_eq!(msg.track_id, event.track_id);
    }
}

#[test]
fn latency_stamps_are_ordered_under_loss_and_offsets() {
    let s = short_scenario();
    let out = run_scenario(&s, &lossy_config(), SALT, &RunOptions::default()).unwrap();
    assert!(!out.logs.latency.is_empty());
    assert!(out.logs.latency.iter().all(|l| l.is_ordered()));
    let r = latency_report(&out.logs.latency).unwrap();
    for hop in [r.frame_to_log, r.node_to_broker, r.broker_to_endpoint, r.end_to_end] {
        assert!(hop.p95_ms >= hop.median_ms);
    }
    let g = out.report.gate;
    assert_eq!(g.forwarded, out.report.delivered + out.report.dead_letters);
}

#[test]
fn report_rates_are_fractions() {
    let s = short_scenario();
    let out = run_scenario(&s, &PipelineConfig::default(), SALT, &RunOptions::default()).unwrap();
    let eval = out.report.eval.as_ref().unwrap();
    for m in eval.per_class.values().chain([&eval.overall]) {
        for r in [m.precision, m.recall, m.fp_rate] {
            assert!((0.0..=1.0).contains(&r));
        }
    }
    assert!(out.report.throughput_fps > 0.0);
    assert!(out.report.events_per_class.contains_key(&ViolationClass::SignalJump));
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("short.jsonl");
    write_trace(&short_scenario(), &trace).unwrap();
    let cfg = PipelineConfig { salt: "config-salt-0123456789".into(), ..PipelineConfig::default() };
    let out_dir = dir.path().join("out");
    let out = run(&trace, &cfg, &RunOptions::default(), &out_dir).unwrap();
    for f in ["events.jsonl", "messages.jsonl", "speeds.jsonl", "deadletter.jsonl", "latency.jsonl", "report.json", "zones.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let events = std::fs::read_to_string(out_dir.join("events.jsonl")).unwrap();
    assert_eq!(events, out.event_log());
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["frames"], 1500);
}

#[test]
fn partial_config_fills_defaults() {
    let cfg = PipelineConfig::from_json(r#"{"speed_limit_kmh": 50, "gate": {"max_rate_hz": 5}}"#).unwrap();
    assert_eq!(cfg.speed_limit_kmh, 50.0);
    assert_eq!(cfg.gate.max_rate_hz, 5.0);
    assert_eq!(cfg.gate.dedup_window_s, 4.0);
    assert_eq!(cfg.tracker.max_age, 30);
    assert!(PipelineConfig::from_json(r#"{"speed_limit_kmh": "fast"}"#).is_err());
}
