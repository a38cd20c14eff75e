//! Cooperative safety output: payload mapping, dedup and rate gate,
//! transports and per-hop latency accounting.

mod gate;
mod latency;
mod message;
pub mod mqtt;
mod transport;

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::plate::PlateError;

pub use gate::{DedupKeyKind, Gate, GateConfig, GateDecision};
pub use latency::{hop_stats, latency_report, median_index, p95_index, HopStats, LatencyReport, LatencySample};
pub use message::{to_safety_message, CameraConfig, MotionHint, MsgType, SafetyMessage, Severity};
pub use transport::{
    gateway_pdu, publish, DeadLetter, DelayModel, DelaySampler, Delivery, Endpoint, EndpointReceipt, HopConfig,
    PublishOutcome, Receipt, Received, RetryPolicy, SimBroker, SimConfig, Transport,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum V2xError {
    #[error("camera geo configuration missing or invalid")]
    MissingGeoConfig,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Plate(#[from] PlateError),
    #[error("transport down: {0}")]
    TransportDown(String),
    #[error("latency report needs at least one sample")]
    EmptySamples,
    #[error("i/o: {0}")]
    Io(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Shares one broker between several camera pipelines. The lock serializes
/// publishes, so per-topic delivery order is the lock acquisition order.
impl<T: Transport> Transport for Arc<Mutex<T>> {
    fn publish(&mut self, topic: &str, event_id: u64, payload: &[u8], t_send_us: i64) -> Result<Delivery, V2xError> {
        let mut inner = self.lock().map_err(|_| V2xError::TransportDown("broker lock poisoned".into()))?;
        inner.publish(topic, event_id, payload, t_send_us)
    }
}
