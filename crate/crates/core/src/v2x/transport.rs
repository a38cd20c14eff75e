use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::message::SafetyMessage;
use super::V2xError;

/// z-score of the 95th percentile of the standard normal.
const Z95: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Fixed { ms: f64 },
    Uniform { lo_ms: f64, hi_ms: f64 },
    /// Log-normal fitted to a median and a 95th percentile.
    LogNormal { median_ms: f64, p95_ms: f64 },
    /// Replays recorded delays in order, cycling.
    Replay { samples_ms: Vec<f64> },
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel::Fixed { ms: 0.0 }
    }
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), V2xError> {
        let bad = |m: &str| Err(V2xError::InvalidConfig(m.to_string()));
        match self {
            DelayModel::Fixed { ms } if !(*ms >= 0.0) => bad("fixed delay must be non-negative"),
            DelayModel::Uniform { lo_ms, hi_ms } if !(*lo_ms >= 0.0 && lo_ms <= hi_ms) => {
                bad("uniform delay needs 0 <= lo <= hi")
            }
            DelayModel::LogNormal { median_ms, p95_ms } if !(*median_ms > 0.0 && p95_ms >= median_ms) => {
                bad("log-normal delay needs 0 < median <= p95")
            }
            DelayModel::Replay { samples_ms } if samples_ms.is_empty() || samples_ms.iter().any(|s| !(*s >= 0.0)) => {
                bad("replay needs non-negative samples")
            }
            _ => Ok(()),
        }
    }
}

/// Stateful draw from a [`DelayModel`].
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    cursor: usize,
}

impl DelaySampler {
    pub fn new(model: DelayModel) -> Result<Self, V2xError> {
        model.validate()?;
        Ok(Self { model, cursor: 0 })
    }

    /// Next delay in whole microseconds.
    pub fn sample_us(&mut self, rng: &mut impl Rng) -> i64 {
        let ms = match &self.model {
            DelayModel::Fixed { ms } => *ms,
            DelayModel::Uniform { lo_ms, hi_ms } => {
                if hi_ms > lo_ms { rng.random_range(*lo_ms..=*hi_ms) } else { *lo_ms }
            }
            DelayModel::LogNormal { median_ms, p95_ms } => {
                let sigma = (p95_ms / median_ms).ln() / Z95;
                if sigma > 0.0 {
                    LogNormal::new(median_ms.ln(), sigma).expect("valid parameters").sample(rng)
                } else {
                    *median_ms
                }
            }
            DelayModel::Replay { samples_ms } => {
                let v = samples_ms[self.cursor % samples_ms.len()];
                self.cursor += 1;
                v
            }
        };
        (ms * 1000.0).round() as i64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopConfig {
    pub delay: DelayModel,
    /// Probability an attempt is lost.
    pub drop_p: f64,
    /// Probability an attempt arrives but its acknowledgement is lost, so
    /// the sender retries and the receiver sees a duplicate.
    pub ack_loss_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff_ms: 100.0 }
    }
}

impl RetryPolicy {
    /// Offset of attempt `k` (0-based) from the first attempt.
    pub fn attempt_offset_us(&self, k: u32) -> i64 {
        let ms: f64 = (0..k).map(|j| self.base_backoff_ms * 2f64.powi(j as i32)).sum();
        (ms * 1000.0).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Frame capture to on-device event record.
    pub log_delay: DelayModel,
    /// Node to broker.
    pub uplink: HopConfig,
    /// Broker to each endpoint.
    pub downlink: HopConfig,
    pub endpoints: Vec<String>,
    /// Broker clock offset from the node clock, ms in [0, 10].
    pub broker_offset_ms: f64,
    /// Endpoint clock offset from the node clock, ms in [0, 10].
    pub endpoint_offset_ms: f64,
    pub retry: RetryPolicy,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            log_delay: DelayModel::default(),
            uplink: HopConfig::default(),
            downlink: HopConfig::default(),
            endpoints: vec!["rsu-1".into(), "obu-1".into()],
            broker_offset_ms: 0.0,
            endpoint_offset_ms: 0.0,
            retry: RetryPolicy::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), V2xError> {
        for d in [&self.log_delay, &self.uplink.delay, &self.downlink.delay] {
            d.validate()?;
        }
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if ![self.uplink.drop_p, self.uplink.ack_loss_p, self.downlink.drop_p, self.downlink.ack_loss_p]
            .into_iter()
            .all(p_ok)
        {
            return Err(V2xError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if ![self.broker_offset_ms, self.endpoint_offset_ms].iter().all(|o| (0.0..=10.0).contains(o)) {
            return Err(V2xError::InvalidConfig("clock offsets must lie in [0, 10] ms".into()));
        }
        if self.retry.max_attempts == 0 || !(self.retry.base_backoff_ms >= 0.0) {
            return Err(V2xError::InvalidConfig("retry policy needs at least one attempt".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReceipt {
    pub endpoint: String,
    pub t_us: i64,
}

/// Outcome of one successful transport attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub t_broker_us: i64,
    pub endpoints: Vec<EndpointReceipt>,
}

/// A publish/subscribe link from this node to a broker.
pub trait Transport: Send {
    /// One attempt. `event_id` travels out of band so endpoints can drop
    /// redeliveries.
    fn publish(&mut self, topic: &str, event_id: u64, payload: &[u8], t_send_us: i64) -> Result<Delivery, V2xError>;
}

/// Message as received by an endpoint, re-wrapped by the gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub event_id: u64,
    pub topic: String,
    pub t_us: i64,
    /// `{"pdu": <payload>}`
    pub pdu: String,
}

#[derive(Debug, Clone, Default)]
pub struct Endpoint {
    pub name: String,
    pub inbox: Vec<Received>,
    pub duplicates: usize,
    seen: BTreeSet<u64>,
}

impl Endpoint {
    fn accept(&mut self, r: Received) {
        if self.seen.insert(r.event_id) {
            self.inbox.push(r);
        } else {
            self.duplicates += 1;
        }
    }
}

/// In-process broker with seeded per-hop delays and losses.
#[derive(Debug, Clone)]
pub struct SimBroker {
    config: SimConfig,
    rng: ChaCha8Rng,
    uplink: DelaySampler,
    downlink: DelaySampler,
    endpoints: Vec<Endpoint>,
}

pub fn gateway_pdu(payload: &[u8]) -> String {
    let body = String::from_utf8_lossy(payload);
    format!("{{\"pdu\":{body}}}")
}

impl SimBroker {
    pub fn new(config: SimConfig) -> Result<Self, V2xError> {
        config.validate()?;
        let endpoints = config.endpoints.iter().map(|n| Endpoint { name: n.clone(), ..Endpoint::default() }).collect();
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            uplink: DelaySampler::new(config.uplink.delay.clone())?,
            downlink: DelaySampler::new(config.downlink.delay.clone())?,
            endpoints,
            config,
        })
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    fn offset_us(ms: f64) -> i64 {
        (ms * 1000.0).round() as i64
    }
}

impl Transport for SimBroker {
    fn publish(&mut self, topic: &str, event_id: u64, payload: &[u8], t_send_us: i64) -> Result<Delivery, V2xError> {
        let up = self.config.uplink.clone();
        if self.rng.random::<f64>() < up.drop_p {
            return Err(V2xError::TransportDown("uplink attempt lost".into()));
        }
        let ack_lost = self.rng.random::<f64>() < up.ack_loss_p;
        let t_broker = (t_send_us + self.uplink.sample_us(&mut self.rng) + Self::offset_us(self.config.broker_offset_ms))
            .max(t_send_us);

        let down = self.config.downlink.clone();
        let retry = self.config.retry.clone();
        let delay = self.downlink.sample_us(&mut self.rng);
        let ep_offset = Self::offset_us(self.config.endpoint_offset_ms);
        let pdu = gateway_pdu(payload);
        let mut receipts = Vec::new();
        for i in 0..self.endpoints.len() {
            let mut delivered_at = None;
            for k in 0..retry.max_attempts {
                if self.rng.random::<f64>() < down.drop_p {
                    continue;
                }
                let t = (t_broker + retry.attempt_offset_us(k) + delay + ep_offset).max(t_broker);
                self.endpoints[i].accept(Received { event_id, topic: topic.to_string(), t_us: t, pdu: pdu.clone() });
                delivered_at.get_or_insert(t);
                if self.rng.random::<f64>() >= down.ack_loss_p {
                    break;
                }
            }
            if let Some(t) = delivered_at {
                receipts.push(EndpointReceipt { endpoint: self.endpoints[i].name.clone(), t_us: t });
            }
        }
        if ack_lost {
            return Err(V2xError::TransportDown("broker acknowledgement lost".into()));
        }
        Ok(Delivery { t_broker_us: t_broker, endpoints: receipts })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub event_id: u64,
    pub attempts: u32,
    pub t_publish_us: i64,
    pub t_broker_us: i64,
    pub endpoints: Vec<EndpointReceipt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadLetter {
    pub event_id: u64,
    pub topic: String,
    pub reason: String,
    pub attempts: u32,
    pub t_last_attempt_us: i64,
    pub payload: SafetyMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PublishOutcome {
    Delivered(Receipt),
    DeadLetter(DeadLetter),
}

/// Publishes with exponential backoff; exhausting the policy dead-letters.
pub fn publish(
    transport: &mut dyn Transport,
    msg: &SafetyMessage,
    event_id: u64,
    t_ready_us: i64,
    retry: &RetryPolicy,
) -> PublishOutcome {
    let topic = msg.topic();
    let payload = msg.to_json();
    let mut reason = String::new();
    let mut t_last = t_ready_us;
    for k in 0..retry.max_attempts.max(1) {
        t_last = t_ready_us + retry.attempt_offset_us(k);
        match transport.publish(&topic, event_id, payload.as_bytes(), t_last) {
            Ok(d) => {
                return PublishOutcome::Delivered(Receipt {
                    event_id,
                    attempts: k + 1,
                    t_publish_us: t_ready_us,
                    t_broker_us: d.t_broker_us,
                    endpoints: d.endpoints,
                })
            }
            Err(e) => reason = e.to_string(),
        }
    }
    PublishOutcome::DeadLetter(DeadLetter {
        event_id,
        topic,
        reason,
        attempts: retry.max_attempts.max(1),
        t_last_attempt_us: t_last,
        payload: msg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::v2x::message::{MsgType, Severity};

    fn msg() -> SafetyMessage {
        SafetyMessage {
            msg_type: MsgType::WrongWay,
            severity: Severity::Critical,
            confidence: 1.0,
            t_utc: 0,
            lat: 0.0,
            lon: 0.0,
            heading: 0.0,
            speed: 0.0,
            track_id: 1,
            plate_hash: None,
            cam_id: "c".into(),
            roi_id: "r".into(),
            evidence_uri: None,
        }
    }

    #[test]
    fn zero_delay_stamps_coincide() {
        let mut b = SimBroker::new(SimConfig::default()).unwrap();
        let PublishOutcome::Delivered(r) = publish(&mut b, &msg(), 1, 500, &RetryPolicy::default()) else {
            panic!("not delivered")
        };
        assert_eq!(r.t_publish_us, 500);
        assert_eq!(r.t_broker_us, 500);
        assert!(r.endpoints.iter().all(|e| e.t_us == 500));
        assert_eq!(r.endpoints.len(), 2);
    }

    #[test]
    fn fixed_delays_add_up() {
        let cfg = SimConfig {
            uplink: HopConfig { delay: DelayModel::Fixed { ms: 12.0 }, ..HopConfig::default() },
            downlink: HopConfig { delay: DelayModel::Fixed { ms: 8.0 }, ..HopConfig::default() },
            ..SimConfig::default()
        };
        let mut b = SimBroker::new(cfg).unwrap();
        let PublishOutcome::Delivered(r) = publish(&mut b, &msg(), 1, 0, &RetryPolicy::default()) else {
            panic!("not delivered")
        };
        assert_eq!(r.t_broker_us, 12_000);
        assert_eq!(r.endpoints[0].t_us, 20_000);
    }

    #[test]
    fn certain_loss_dead_letters_after_three_attempts() {
        let cfg = SimConfig { uplink: HopConfig { drop_p: 1.0, ..HopConfig::default() }, ..SimConfig::default() };
        let mut b = SimBroker::new(cfg).unwrap();
        let PublishOutcome::DeadLetter(d) = publish(&mut b, &msg(), 9, 0, &RetryPolicy::default()) else {
            panic!("delivered")
        };
        assert_eq!(d.attempts, 3);
        assert_eq!(d.t_last_attempt_us, 300_000);
        assert!(b.endpoints().iter().all(|e| e.inbox.is_empty()));
    }

    #[test]
    fn lost_acks_produce_suppressed_duplicates() {
        let cfg = SimConfig { uplink: HopConfig { ack_loss_p: 1.0, ..HopConfig::default() }, ..SimConfig::default() };
        let mut b = SimBroker::new(cfg).unwrap();
        assert!(matches!(publish(&mut b, &msg(), 4, 0, &RetryPolicy::default()), PublishOutcome::DeadLetter(_)));
        for e in b.endpoints() {
            assert_eq!(e.inbox.len(), 1);
            assert_eq!(e.duplicates, 2);
            assert!(e.inbox[0].pdu.starts_with("{\"pdu\":{"));
        }
    }

    #[test]
    fn lognormal_fit_hits_median() {
        let mut s = DelaySampler::new(DelayModel::LogNormal { median_ms: 12.0, p95_ms: 22.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v: Vec<i64> = (0..20_001).map(|_| s.sample_us(&mut rng)).collect();
        v.sort_unstable();
        assert!((v[10_000] as f64 / 1000.0 - 12.0).abs() < 0.3);
        assert!((v[19_000] as f64 / 1000.0 - 22.0).abs() < 0.8);
    }
}
