//! Minimal MQTT 3.1.1 publisher: CONNECT, QoS 1 PUBLISH, DISCONNECT.
//!
//! Plain TCP only. `tls` and `mtls` are accepted as configuration but a
//! connection with either set is refused with [`V2xError::Unsupported`].

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::transport::{Delivery, Transport};
use super::V2xError;

const CONNECT: u8 = 0x10;
const CONNACK: u8 = 0x20;
const PUBLISH_QOS1: u8 = 0x32;
const PUBACK: u8 = 0x40;
const DISCONNECT: u8 = 0xE0;
/// Largest value the four-byte remaining-length varint can carry.
pub const MAX_REMAINING: usize = 268_435_455;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MqttConfig {
    pub host: String,
    pub port: u16,
    pub client_id: String,
    pub keep_alive_s: u16,
    pub timeout_ms: u64,
    pub tls: bool,
    pub mtls: bool,
    pub key_rotation_days: Option<u32>,
}

impl Default for MqttConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 1883,
            client_id: "rnode".into(),
            keep_alive_s: 30,
            timeout_ms: 2000,
            tls: false,
            mtls: false,
            key_rotation_days: None,
        }
    }
}

impl From<std::io::Error> for V2xError {
    fn from(e: std::io::Error) -> Self {
        V2xError::Io(e.to_string())
    }
}

pub fn encode_remaining(mut n: usize, out: &mut Vec<u8>) -> Result<(), V2xError> {
    if n > MAX_REMAINING {
        return Err(V2xError::Protocol(format!("remaining length {n} too large")));
    }
    loop {
        let mut b = (n % 128) as u8;
        n /= 128;
        if n > 0 {
            b |= 0x80;
        }
        out.push(b);
        if n == 0 {
            return Ok(());
        }
    }
}

/// Decodes a remaining-length varint, returning (value, bytes consumed).
pub fn decode_remaining(bytes: &[u8]) -> Result<(usize, usize), V2xError> {
    let mut value = 0usize;
    for (i, b) in bytes.iter().take(4).enumerate() {
        value += usize::from(b & 0x7F) << (7 * i);
        if b & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(V2xError::Protocol("malformed remaining length".into()))
}

fn put_str(s: &str, out: &mut Vec<u8>) -> Result<(), V2xError> {
    let len = u16::try_from(s.len()).map_err(|_| V2xError::Protocol("string exceeds 65535 bytes".into()))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn packet(header: u8, body: &[u8]) -> Result<Vec<u8>, V2xError> {
    let mut out = vec![header];
    encode_remaining(body.len(), &mut out)?;
    out.extend_from_slice(body);
    Ok(out)
}

pub fn connect_packet(client_id: &str, keep_alive_s: u16) -> Result<Vec<u8>, V2xError> {
    let mut body = Vec::new();
    put_str("MQTT", &mut body)?;
    body.push(4); // protocol level 3.1.1
    body.push(0x02); // clean session
    body.extend_from_slice(&keep_alive_s.to_be_bytes());
    put_str(client_id, &mut body)?;
    packet(CONNECT, &body)
}

pub fn publish_packet(topic: &str, packet_id: u16, payload: &[u8]) -> Result<Vec<u8>, V2xError> {
    let mut body = Vec::new();
    put_str(topic, &mut body)?;
    body.extend_from_slice(&packet_id.to_be_bytes());
    body.extend_from_slice(payload);
    packet(PUBLISH_QOS1, &body)
}

/// Reads one control packet: (first byte, body).
pub fn read_packet(r: &mut impl Read) -> Result<(u8, Vec<u8>), V2xError> {
    let mut first = [0u8; 1];
    r.read_exact(&mut first)?;
    let mut len_bytes = Vec::with_capacity(4);
    loop {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        len_bytes.push(b[0]);
        if b[0] & 0x80 == 0 || len_bytes.len() == 4 {
            break;
        }
    }
    let (len, _) = decode_remaining(&len_bytes)?;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok((first[0], body))
}

pub struct MqttClient {
    stream: TcpStream,
    next_packet_id: u16,
    started: Instant,
}

impl MqttClient {
    pub fn connect(cfg: &MqttConfig) -> Result<Self, V2xError> {
        if cfg.tls || cfg.mtls {
            return Err(V2xError::Unsupported("TLS transport is not built in; terminate TLS in a local proxy".into()));
        }
        let timeout = Duration::from_millis(cfg.timeout_ms.max(1));
        let mut stream = TcpStream::connect((cfg.host.as_str(), cfg.port))?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.write_all(&connect_packet(&cfg.client_id, cfg.keep_alive_s)?)?;
        let (h, body) = read_packet(&mut stream)?;
        if h != CONNACK || body.len() != 2 {
            return Err(V2xError::Protocol(format!("expected CONNACK, got 0x{h:02x}")));
        }
        if body[1] != 0 {
            return Err(V2xError::TransportDown(format!("connection refused, code {}", body[1])));
        }
        Ok(Self { stream, next_packet_id: 1, started: Instant::now() })
    }

    pub fn disconnect(mut self) -> Result<(), V2xError> {
        self.stream.write_all(&[DISCONNECT, 0])?;
        Ok(())
    }

    fn packet_id(&mut self) -> u16 {
        let id = self.next_packet_id;
        // packet id 0 is reserved
        self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
        id
    }
}

impl Transport for MqttClient {
    /// `event_id` is not carried on the wire; brokers dedupe downstream.
    fn publish(&mut self, topic: &str, _event_id: u64, payload: &[u8], t_send_us: i64) -> Result<Delivery, V2xError> {
        let id = self.packet_id();
        let sent = self.started.elapsed();
        let io = |e: V2xError| V2xError::TransportDown(e.to_string());
        self.stream.write_all(&publish_packet(topic, id, payload)?).map_err(|e| io(e.into()))?;
        let (h, body) = read_packet(&mut self.stream).map_err(io)?;
        if h != PUBACK || body != id.to_be_bytes() {
            return Err(V2xError::Protocol(format!("expected PUBACK {id}, got 0x{h:02x}")));
        }
        let rtt = self.started.elapsed() - sent;
        Ok(Delivery { t_broker_us: t_send_us + (rtt.as_micros() / 2) as i64, endpoints: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn varint_boundaries() {
        for (n, enc) in [
            (0usize, vec![0x00]),
            (127, vec![0x7F]),
            (128, vec![0x80, 0x01]),
            (16_383, vec![0xFF, 0x7F]),
            (16_384, vec![0x80, 0x80, 0x01]),
            (MAX_REMAINING, vec![0xFF, 0xFF, 0xFF, 0x7F]),
        ] {
            let mut out = Vec::new();
            encode_remaining(n, &mut out).unwrap();
            assert_eq!(out, enc);
            assert_eq!(decode_remaining(&enc).unwrap(), (n, enc.len()));
        }
        assert!(encode_remaining(MAX_REMAINING + 1, &mut Vec::new()).is_err());
    }

    #[test]
    fn tls_refused() {
        let cfg = MqttConfig { tls: true, ..MqttConfig::default() };
        assert!(matches!(MqttClient::connect(&cfg), Err(V2xError::Unsupported(_))));
    }

    #[test]
    fn publishes_against_local_broker() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let broker = thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let (h, body) = read_packet(&mut s).unwrap();
            assert_eq!(h, CONNECT);
            assert_eq!(&body[..6], b"\x00\x04MQTT");
            s.write_all(&[CONNACK, 2, 0, 0]).unwrap();
            let (h, body) = read_packet(&mut s).unwrap();
            assert_eq!(h, PUBLISH_QOS1);
            let tlen = usize::from(u16::from_be_bytes([body[0], body[1]]));
            let topic = String::from_utf8(body[2..2 + tlen].to_vec()).unwrap();
            let id = [body[2 + tlen], body[3 + tlen]];
            let payload = body[4 + tlen..].to_vec();
            s.write_all(&[PUBACK, 2, id[0], id[1]]).unwrap();
            let (h, _) = read_packet(&mut s).unwrap();
            assert_eq!(h, DISCONNECT);
            (topic, payload)
        });
        let cfg = MqttConfig { port, ..MqttConfig::default() };
        let mut c = MqttClient::connect(&cfg).unwrap();
        let d = c.publish("its/violations/cam-01/VIOL_WW", 1, b"{\"x\":1}", 1000).unwrap();
        assert!(d.t_broker_us >= 1000);
        c.disconnect().unwrap();
        let (topic, payload) = broker.join().unwrap();
        assert_eq!(topic, "its/violations/cam-01/VIOL_WW");
        assert_eq!(payload, b"{\"x\":1}");
    }
}
