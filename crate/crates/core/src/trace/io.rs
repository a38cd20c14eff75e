//! JSON Lines trace format.
//!
//! Line 1 is a header object, every following line is one frame. Ground truth
//! lives in a `<trace>.gt.json` sidecar and plate truth, when present, in a
//! `<trace>.plates.json` sidecar.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{
    Detection, DetectionFrame, ObjectClass, PlateReading, Scenario, SignalPhase,
};
use super::TraceError;
use crate::geom::BBox;

pub const TRACE_FORMAT: &str = "rnode-trace/1";

const EMBEDDING_NORM_TOL: f64 = 1e-6;
const BOUNDS_TOL: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    format: String,
    frame_rate: f64,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    i: u64,
    tc: i64,
    tm: i64,
    phase: SignalPhase,
    det: Vec<DetectionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    c: ObjectClass,
    b: [f64; 4],
    s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<PlateRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlateRecord {
    txt: String,
    s: f64,
}

pub fn gt_sidecar_path(trace: &Path) -> PathBuf {
    sidecar(trace, "gt.json")
}

pub fn plates_sidecar_path(trace: &Path) -> PathBuf {
    sidecar(trace, "plates.json")
}

fn sidecar(trace: &Path, suffix: &str) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Reads a trace and its sidecars, validating every frame invariant.
pub fn read_trace(path: &Path) -> Result<Scenario, TraceError> {
    let file = File::open(path).map_err(|e| TraceError::Io(path.to_path_buf(), e))?;
    let reader = BufReader::new(file);
    let mut scenario = Scenario::default();
    let mut have_header = false;
    let mut prev: Option<(u64, i64, i64)> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| TraceError::Io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !have_header {
            let header: HeaderRecord = serde_json::from_str(&line)
                .map_err(|e| TraceError::MalformedRecord(line_no, e.to_string()))?;
            if header.format != TRACE_FORMAT {
                return Err(TraceError::MalformedRecord(
                    line_no,
                    format!("unsupported format {:?}", header.format),
                ));
            }
            if !(header.frame_rate > 0.0 && header.frame_rate.is_finite()) {
                return Err(TraceError::MalformedRecord(
                    line_no,
                    "frame_rate must be positive".into(),
                ));
            }
            scenario.frame_rate = header.frame_rate;
            scenario.frame_dims = (header.width, header.height);
            have_header = true;
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| TraceError::MalformedRecord(line_no, e.to_string()))?;
        if let Some((pi, ptc, ptm)) = prev {
            if rec.i <= pi || rec.tm <= ptm || rec.tc < ptc {
                return Err(TraceError::NonMonotonicTime(rec.i));
            }
        }
        prev = Some((rec.i, rec.tc, rec.tm));
        let frame = frame_from_record(rec, line_no)?;
        validate_frame(&frame, scenario.frame_dims)?;
        scenario.frames.push(frame);
    }

    let gt_path = gt_sidecar_path(path);
    if gt_path.exists() {
        let text = fs::read_to_string(&gt_path).map_err(|e| TraceError::Io(gt_path.clone(), e))?;
        scenario.ground_truth = serde_json::from_str(&text)
            .map_err(|e| TraceError::MalformedRecord(0, format!("ground truth: {e}")))?;
        check_ground_truth(&scenario)?;
    }
    let plates_path = plates_sidecar_path(path);
    if plates_path.exists() {
        let text =
            fs::read_to_string(&plates_path).map_err(|e| TraceError::Io(plates_path.clone(), e))?;
        scenario.plates = serde_json::from_str::<BTreeMap<String, String>>(&text)
            .map_err(|e| TraceError::MalformedRecord(0, format!("plates: {e}")))?;
    }
    Ok(scenario)
}

/// Writes the trace, a ground-truth sidecar and (if any) a plate sidecar.
pub fn write_trace(scenario: &Scenario, path: &Path) -> Result<(), TraceError> {
    let io = |e| TraceError::Io(path.to_path_buf(), e);
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    let header = HeaderRecord {
        format: TRACE_FORMAT.to_string(),
        frame_rate: scenario.frame_rate,
        width: scenario.frame_dims.0,
        height: scenario.frame_dims.1,
    };
    write_json_line(&mut out, &header).map_err(io)?;
    for frame in &scenario.frames {
        write_json_line(&mut out, &frame_to_record(frame)).map_err(io)?;
    }
    out.flush().map_err(io)?;

    let gt_path = gt_sidecar_path(path);
    let gt = serde_json::to_string(&scenario.ground_truth).expect("ground truth serializes");
    fs::write(&gt_path, gt).map_err(|e| TraceError::Io(gt_path.clone(), e))?;
    let plates_path = plates_sidecar_path(path);
    if !scenario.plates.is_empty() {
        let plates = serde_json::to_string(&scenario.plates).expect("plates serialize");
        fs::write(&plates_path, plates).map_err(|e| TraceError::Io(plates_path.clone(), e))?;
    } else if plates_path.exists() {
        fs::remove_file(&plates_path).map_err(|e| TraceError::Io(plates_path.clone(), e))?;
    }
    Ok(())
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn frame_to_record(frame: &DetectionFrame) -> FrameRecord {
    FrameRecord {
        i: frame.frame_index,
        tc: frame.t_capture_us,
        tm: frame.t_mono_us,
        phase: frame.signal_phase,
        det: frame
            .detections
            .iter()
            .map(|d| DetectionRecord {
                c: d.class,
                b: d.bbox.into(),
                s: d.confidence,
                e: d.embedding.clone(),
                p: d.plate_reading.as_ref().map(|p| PlateRecord {
                    txt: p.text.clone(),
                    s: p.confidence,
                }),
            })
            .collect(),
    }
}

fn frame_from_record(rec: FrameRecord, line_no: usize) -> Result<DetectionFrame, TraceError> {
    let detections = rec
        .det
        .into_iter()
        .map(|d| Detection {
            class: d.c,
            bbox: BBox::from(d.b),
            confidence: d.s,
            embedding: d.e,
            plate_reading: d.p.map(|p| PlateReading::new(p.txt, p.s)),
        })
        .collect::<Vec<_>>();
    for d in &detections {
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(TraceError::MalformedRecord(
                line_no,
                format!("confidence {} outside [0, 1]", d.confidence),
            ));
        }
    }
    Ok(DetectionFrame {
        frame_index: rec.i,
        t_capture_us: rec.tc,
        t_mono_us: rec.tm,
        signal_phase: rec.phase,
        detections,
    })
}

/// Checks the per-detection invariants of one frame.
pub fn validate_frame(frame: &DetectionFrame, dims: (u32, u32)) -> Result<(), TraceError> {
    let (w, h) = (dims.0 as f64, dims.1 as f64);
    for d in &frame.detections {
        let b = d.bbox;
        let inside = b.w > 0.0
            && b.h > 0.0
            && b.x >= -BOUNDS_TOL
            && b.y >= -BOUNDS_TOL
            && b.x + b.w <= w + BOUNDS_TOL
            && b.y + b.h <= h + BOUNDS_TOL;
        if !inside {
            return Err(TraceError::BBoxOutOfBounds(frame.frame_index));
        }
        if let Some(e) = &d.embedding {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if e.is_empty() || (norm - 1.0).abs() > EMBEDDING_NORM_TOL {
                return Err(TraceError::InvalidDetection {
                    frame_index: frame.frame_index,
                    reason: format!("embedding norm {norm}"),
                });
            }
        }
        if let Some(p) = &d.plate_reading {
            if d.class != ObjectClass::LicensePlate {
                return Err(TraceError::InvalidDetection {
                    frame_index: frame.frame_index,
                    reason: format!("plate reading on {:?} detection", d.class),
                });
            }
            if !p.is_well_formed() {
                return Err(TraceError::InvalidDetection {
                    frame_index: frame.frame_index,
                    reason: format!("plate text {:?}", p.text),
                });
            }
        }
    }
    Ok(())
}

fn check_ground_truth(scenario: &Scenario) -> Result<(), TraceError> {
    let (first, last) = match (scenario.frames.first(), scenario.frames.last()) {
        (Some(f), Some(l)) => (f.frame_index, l.frame_index),
        _ if scenario.ground_truth.is_empty() => return Ok(()),
        _ => (u64::MAX, 0),
    };
    for gt in &scenario.ground_truth {
        if gt.span[0] > gt.span[1] || gt.span[0] < first || gt.span[1] > last {
            return Err(TraceError::SpanOutsideTrace(gt.label.clone()));
        }
    }
    Ok(())
}
