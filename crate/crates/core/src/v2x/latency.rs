use serde::{Deserialize, Serialize};

use super::V2xError;

/// Stamps of one event along the dissemination path, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySample {
    pub event_id: u64,
    pub t_frame: i64,
    pub t_log: i64,
    pub t_publish: i64,
    pub t_broker: i64,
    pub t_endpoint: i64,
}

impl LatencySample {
    pub fn is_ordered(&self) -> bool {
        self.t_frame <= self.t_log
            && self.t_log <= self.t_publish
            && self.t_publish <= self.t_broker
            && self.t_broker <= self.t_endpoint
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub samples: usize,
    pub frame_to_log: HopStats,
    pub node_to_broker: HopStats,
    pub broker_to_endpoint: HopStats,
    pub end_to_end: HopStats,
}

/// Index of the lower median in a sorted slice of length `n`.
pub fn median_index(n: usize) -> usize {
    (n - 1) / 2
}

/// Index of the 95th percentile, `ceil(0.95 n) - 1`.
pub fn p95_index(n: usize) -> usize {
    (95 * n).div_ceil(100) - 1
}

/// Median and p95 of microsecond deltas, reported in milliseconds.
pub fn hop_stats(deltas_us: &[i64]) -> Option<HopStats> {
    if deltas_us.is_empty() {
        return None;
    }
    let mut v = deltas_us.to_vec();
    v.sort_unstable();
    let n = v.len();
    Some(HopStats { median_ms: v[median_index(n)] as f64 / 1000.0, p95_ms: v[p95_index(n)] as f64 / 1000.0 })
}

pub fn latency_report(samples: &[LatencySample]) -> Result<LatencyReport, V2xError> {
    let hop = |f: fn(&LatencySample) -> i64| -> Result<HopStats, V2xError> {
        let d: Vec<i64> = samples.iter().map(f).collect();
        hop_stats(&d).ok_or(V2xError::EmptySamples)
    };
    Ok(LatencyReport {
        samples: samples.len(),
        frame_to_log: hop(|s| s.t_log - s.t_frame)?,
        node_to_broker: hop(|s| s.t_broker - s.t_publish)?,
        broker_to_endpoint: hop(|s| s.t_endpoint - s.t_broker)?,
        end_to_end: hop(|s| s.t_endpoint - s.t_frame)?,
    })
}
