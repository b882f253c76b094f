//! Alert events, their fixed binary layout, and the line-based ingest format.
//!
//! The binary layout defined by [`Alert::serialize`] is the uncompressed
//! baseline every compression figure is measured against, so it is frozen:
//! little-endian, fixed field order, 32 bytes plus the payload.

use std::io::{self, BufRead};
use std::net::Ipv4Addr;

use serde_json::Value;
use thiserror::Error;

/// Serialized size of an alert with an empty payload.
pub const ALERT_FIXED_LEN: usize = 32;

/// One normalized IDS alert event.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alert {
    /// Event time in milliseconds since the epoch. Replays are driven by this,
    /// never by the wall clock.
    pub timestamp_ms: u64,
    /// Attack-type/class identifier.
    pub generator_id: u32,
    /// Rule identifier.
    pub signature_id: u32,
    /// IPv4 source address (big-endian integer, as in `Ipv4Addr::from`).
    pub src_addr: u32,
    /// IPv4 destination address.
    pub dst_addr: u32,
    pub src_port: u16,
    pub dst_port: u16,
    /// IP protocol number.
    pub protocol: u8,
    /// IP type-of-service.
    pub tos: u8,
    /// Raw payload bytes; length must fit in 16 bits.
    pub payload: Vec<u8>,
}

impl Alert {
    /// Exact length of [`Alert::serialize`] output: 32 + payload length.
    pub fn serialized_len(&self) -> u64 {
        ALERT_FIXED_LEN as u64 + self.payload.len() as u64
    }

    /// Fixed little-endian layout:
    /// `timestamp_ms(8) generator_id(4) signature_id(4) src_addr(4)
    /// dst_addr(4) src_port(2) dst_port(2) protocol(1) tos(1)
    /// payload_len(2) payload(payload_len)`.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len() as usize);
        self.serialize_into(&mut out);
        out
    }

    pub fn serialize_into(&self, out: &mut Vec<u8>) {
        assert!(
            self.payload.len() <= u16::MAX as usize,
            "alert payload length {} exceeds 16-bit limit",
            self.payload.len()
        );
        out.extend_from_slice(&self.timestamp_ms.to_le_bytes());
        out.extend_from_slice(&self.generator_id.to_le_bytes());
        out.extend_from_slice(&self.signature_id.to_le_bytes());
        out.extend_from_slice(&self.src_addr.to_le_bytes());
        out.extend_from_slice(&self.dst_addr.to_le_bytes());
        out.extend_from_slice(&self.src_port.to_le_bytes());
        out.extend_from_slice(&self.dst_port.to_le_bytes());
        out.push(self.protocol);
        out.push(self.tos);
        out.extend_from_slice(&(self.payload.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.payload);
    }

    /// Decodes one serialized alert from the front of `buf`, returning the
    /// alert and the number of bytes consumed. `None` if `buf` is too short.
    pub fn deserialize(buf: &[u8]) -> Option<(Alert, usize)> {
        if buf.len() < ALERT_FIXED_LEN {
            return None;
        }
        let u64le = |r: &[u8]| u64::from_le_bytes(r.try_into().unwrap());
        let u32le = |r: &[u8]| u32::from_le_bytes(r.try_into().unwrap());
        let u16le = |r: &[u8]| u16::from_le_bytes(r.try_into().unwrap());
        let payload_len = u16le(&buf[30..32]) as usize;
        if buf.len() < ALERT_FIXED_LEN + payload_len {
            return None;
        }
        let alert = Alert {
            timestamp_ms: u64le(&buf[0..8]),
            generator_id: u32le(&buf[8..12]),
            signature_id: u32le(&buf[12..16]),
            src_addr: u32le(&buf[16..20]),
            dst_addr: u32le(&buf[20..24]),
            src_port: u16le(&buf[24..26]),
            dst_port: u16le(&buf[26..28]),
            protocol: buf[28],
            tos: buf[29],
            payload: buf[32..32 + payload_len].to_vec(),
        };
        Some((alert, ALERT_FIXED_LEN + payload_len))
    }
}

/// The alert fields a delta entry may change. Codes are an on-disk contract:
/// stable, never reused or renumbered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum FieldId {
    SrcAddr = 1,
    DstAddr = 2,
    SrcPort = 3,
    DstPort = 4,
    Protocol = 5,
    Tos = 6,
    Payload = 7,
}

impl FieldId {
    /// All field ids in code order.
    pub const ALL: [FieldId; 7] = [
        FieldId::SrcAddr,
        FieldId::DstAddr,
        FieldId::SrcPort,
        FieldId::DstPort,
        FieldId::Protocol,
        FieldId::Tos,
        FieldId::Payload,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<FieldId> {
        FieldId::ALL.get(code.wrapping_sub(1) as usize).copied()
    }

    /// Short name as used by the ingest format and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            FieldId::SrcAddr => "src",
            FieldId::DstAddr => "dst",
            FieldId::SrcPort => "sport",
            FieldId::DstPort => "dport",
            FieldId::Protocol => "proto",
            FieldId::Tos => "tos",
            FieldId::Payload => "payload",
        }
    }

    pub fn from_name(name: &str) -> Option<FieldId> {
        FieldId::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Failure to parse one ingest line.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("not an ingest record: {0}")]
    Json(String),
    #[error("missing key \"{0}\"")]
    MissingKey(&'static str),
    #[error("unknown key \"{0}\"")]
    UnknownKey(String),
    #[error("key \"{key}\": {reason}")]
    BadValue { key: &'static str, reason: String },
}

fn bad(key: &'static str, reason: impl Into<String>) -> ParseError {
    ParseError::BadValue {
        key,
        reason: reason.into(),
    }
}

fn take_int(
    map: &mut serde_json::Map<String, Value>,
    key: &'static str,
    max: u64,
) -> Result<u64, ParseError> {
    let value = map.remove(key).ok_or(ParseError::MissingKey(key))?;
    let n = value
        .as_u64()
        .ok_or_else(|| bad(key, format!("expected a non-negative integer, got {value}")))?;
    if n > max {
        return Err(bad(key, format!("value {n} out of range (max {max})")));
    }
    Ok(n)
}

fn take_addr(
    map: &mut serde_json::Map<String, Value>,
    key: &'static str,
) -> Result<u32, ParseError> {
    let value = map.remove(key).ok_or(ParseError::MissingKey(key))?;
    let s = value
        .as_str()
        .ok_or_else(|| bad(key, format!("expected a dotted-quad string, got {value}")))?;
    let addr: Ipv4Addr = s
        .parse()
        .map_err(|_| bad(key, format!("\"{s}\" is not a dotted-quad IPv4 address")))?;
    Ok(u32::from(addr))
}

fn take_payload(map: &mut serde_json::Map<String, Value>) -> Result<Vec<u8>, ParseError> {
    let key = "payload";
    let value = map.remove(key).ok_or(ParseError::MissingKey(key))?;
    let s = value
        .as_str()
        .ok_or_else(|| bad(key, format!("expected a lowercase hex string, got {value}")))?;
    if s.len() % 2 != 0 {
        return Err(bad(key, "hex string has odd length"));
    }
    if s.len() / 2 > u16::MAX as usize {
        return Err(bad(
            key,
            format!("payload of {} bytes exceeds 16-bit length", s.len() / 2),
        ));
    }
    let nibble = |c: u8| -> Result<u8, ParseError> {
        match c {
            b'0'..=b'9' => Ok(c - b'0'),
            b'a'..=b'f' => Ok(c - b'a' + 10),
            _ => Err(bad(
                key,
                format!(
                    "invalid hex character {:?} (lowercase hex required)",
                    c as char
                ),
            )),
        }
    };
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(s.len() / 2);
    for pair in bytes.chunks_exact(2) {
        out.push(nibble(pair[0])? << 4 | nibble(pair[1])?);
    }
    Ok(out)
}

/// Parses one ingest-format line into an [`Alert`].
///
/// Keys: `ts`, `gen`, `sig`, `src`, `dst`, `sport`, `dport`, `proto`, `tos`,
/// `payload`. Unknown keys are an error.
pub fn parse_alert(line: &str) -> Result<Alert, ParseError> {
    let value: Value = serde_json::from_str(line).map_err(|e| ParseError::Json(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ParseError::Json("expected an object".into()));
    };
    let alert = Alert {
        timestamp_ms: take_int(&mut map, "ts", u64::MAX)?,
        generator_id: take_int(&mut map, "gen", u32::MAX as u64)? as u32,
        signature_id: take_int(&mut map, "sig", u32::MAX as u64)? as u32,
        src_addr: take_addr(&mut map, "src")?,
        dst_addr: take_addr(&mut map, "dst")?,
        src_port: take_int(&mut map, "sport", u16::MAX as u64)? as u16,
        dst_port: take_int(&mut map, "dport", u16::MAX as u64)? as u16,
        protocol: take_int(&mut map, "proto", u8::MAX as u64)? as u8,
        tos: take_int(&mut map, "tos", u8::MAX as u64)? as u8,
        payload: take_payload(&mut map)?,
    };
    if let Some(key) = map.keys().next() {
        return Err(ParseError::UnknownKey(key.clone()));
    }
    Ok(alert)
}

pub fn hex_lower(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(char::from_digit((b >> 4) as u32, 16).unwrap());
        s.push(char::from_digit((b & 0xf) as u32, 16).unwrap());
    }
    s
}

/// Renders an alert as one canonical ingest line (no trailing newline).
///
/// `parse_alert(&render_alert(a)) == a` for every valid alert, and rendering
/// is byte-deterministic, so round trips through text are exact.
pub fn render_alert(a: &Alert) -> String {
    format!(
        "{{\"ts\":{},\"gen\":{},\"sig\":{},\"src\":\"{}\",\"dst\":\"{}\",\"sport\":{},\"dport\":{},\"proto\":{},\"tos\":{},\"payload\":\"{}\"}}",
        a.timestamp_ms,
        a.generator_id,
        a.signature_id,
        Ipv4Addr::from(a.src_addr),
        Ipv4Addr::from(a.dst_addr),
        a.src_port,
        a.dst_port,
        a.protocol,
        a.tos,
        hex_lower(&a.payload),
    )
}

/// Failure while streaming an ingest file.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {source}")]
    Parse {
        line: u64,
        #[source]
        source: ParseError,
    },
    #[error("read failed at line {line}: {source}")]
    Io {
        line: u64,
        #[source]
        source: io::Error,
    },
}

/// Streams alerts out of newline-delimited ingest text, attaching 1-based
/// line numbers to errors.
pub struct IngestReader<R> {
    lines: io::Lines<R>,
    line_no: u64,
}

impl<R: BufRead> IngestReader<R> {
    pub fn new(reader: R) -> Self {
        IngestReader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for IngestReader<R> {
    type Item = Result<Alert, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = self.lines.next()?;
        self.line_no += 1;
        Some(match line {
            Ok(text) => parse_alert(&text).map_err(|source| IngestError::Parse {
                line: self.line_no,
                source,
            }),
            Err(source) => Err(IngestError::Io {
                line: self.line_no,
                source,
            }),
        })
    }
}
